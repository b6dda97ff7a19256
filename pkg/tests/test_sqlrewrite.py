from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casq.errors import AccessDenied, EmptyQuery, MalformedPseudoName, NoSuchTable, QueryRejected
from casq.sqlrewrite import (
    QueryAnalyzer,
    Scope,
    TableRef,
    physical_mydb_name,
    strip_into_clause,
)

PAPER_QUERY = "select top 10 * into MyDB.rgal from galaxy where r < 22 and r >21"

CATALOG = {"galaxy": ["objid", "r", "ra", "dec"], "stars": ["objid"]}


@pytest.fixture
def analyzer() -> QueryAnalyzer:
    return QueryAnalyzer(CATALOG)


class FakeResolver:
    """Name resolution against an in-memory publication map."""

    def __init__(self, tables: dict[tuple[str, str], bool] | None = None, grants: set[tuple[str, str, str]] | None = None):
        self.tables = tables or {}
        self.grants = grants or set()

    def resolve_mydb(self, user_id, table, *, creating):
        if not creating and (user_id, table) not in self.tables:
            raise NoSuchTable(f"{table} not in {user_id}'s MyDB")
        return f"{physical_mydb_name(user_id)}.{table}"

    def resolve_group(self, requester, owner, table):
        if (requester, owner, table) not in self.grants:
            raise AccessDenied(f"{requester} may not read {owner}'s {table}")
        if (owner, table) not in self.tables:
            raise NoSuchTable(f"{table} not in {owner}'s MyDB")
        return f"{physical_mydb_name(owner)}.{table}"


class TestClassify:
    def test_paper_select_into(self, analyzer):
        qc = analyzer.classify(PAPER_QUERY)
        assert qc.into_target == "rgal"
        assert TableRef(Scope.MYDB, "rgal") in qc.referenced_refs
        assert TableRef(Scope.PUBLIC, "galaxy") in qc.referenced_refs
        assert qc.full_scan_candidate is False  # r is indexed

    def test_group_pseudo_reference(self, analyzer):
        qc = analyzer.classify("select * from GROUP.cosmology.rgal")
        assert qc.referenced_refs == {TableRef(Scope.GROUP, "rgal", owner="cosmology")}
        assert qc.into_target is None

    def test_count_star_is_full_scan(self, analyzer):
        qc = analyzer.classify("select count(*) from galaxy")
        assert qc.full_scan_candidate is True

    def test_empty_query(self, analyzer):
        with pytest.raises(EmptyQuery):
            analyzer.classify("   ")

    def test_malformed_group_ref(self, analyzer):
        with pytest.raises(MalformedPseudoName):
            analyzer.classify("select * from GROUP.x")

    def test_group_by_is_not_a_ref(self, analyzer):
        qc = analyzer.classify("select r, count(*) from galaxy group by r")
        assert qc.referenced_refs == {TableRef(Scope.PUBLIC, "galaxy")}

    def test_quoted_identifier_rejected(self, analyzer):
        with pytest.raises(QueryRejected):
            analyzer.classify('select * from "galaxy"')
        with pytest.raises(QueryRejected):
            analyzer.classify("select * from [galaxy]")

    def test_full_scan_oracle_brute_force(self, analyzer):
        """Compare the classifier against a direct reading of the rule."""
        queries = [
            "select * from galaxy",
            "select * from galaxy where r < 22",
            "select * from galaxy where colour > 1",  # colour not indexed
            "select * from stars where objid = 5",
            "select * from stars, galaxy where flux > 3",
            "select * from MyDB.mine where r < 1",  # no public table
            "select count(*) from galaxy where upper(name) = 'X'",  # name unindexed
            "select * from unknown_table where anything = 1",
            "select * from galaxy g join stars s on g.objid = s.objid where g.flux > 2",
        ]
        for q in queries:
            qc = analyzer.classify(q)
            public = {r.table.lower() for r in qc.referenced_refs if r.scope is Scope.PUBLIC}
            where = q.lower().split("where", 1)
            if not public:
                expected = False
            elif len(where) == 1:
                expected = True
            else:
                indexed = set()
                for t in public:
                    indexed |= {c.lower() for c in CATALOG.get(t, [])}
                touched = {
                    w.strip("().=<>'0123456789,")
                    for w in where[1].replace(".", " ").split()
                }
                expected = not (touched & indexed)
            assert qc.full_scan_candidate == expected, q

    def test_join_and_comma_tables(self, analyzer):
        qc = analyzer.classify("select * from galaxy g, stars where g.objid = stars.objid")
        assert {r.table for r in qc.referenced_refs if r.scope is Scope.PUBLIC} == {"galaxy", "stars"}

    def test_pseudo_ref_with_alias(self, analyzer):
        qc = analyzer.classify("select * from MyDB.rgal r where r.x = 1")
        assert qc.referenced_refs == {TableRef(Scope.MYDB, "rgal")}


class TestRewrite:
    def test_mydb_ref_for_alice(self, analyzer):
        out = analyzer.rewrite(PAPER_QUERY, "alice", FakeResolver())
        assert "into mydb_alice.rgal" in out
        assert out == "select top 10 * into mydb_alice.rgal from galaxy where r < 22 and r >21"

    def test_group_ref_for_accepted_member(self, analyzer):
        resolver = FakeResolver(
            tables={("cosmology", "rgal"): True},
            grants={("bob", "cosmology", "rgal")},
        )
        out = analyzer.rewrite("select * from GROUP.cosmology.rgal", "bob", resolver)
        assert out == "select * from mydb_cosmology.rgal"

    def test_group_ref_denied_for_non_member(self, analyzer):
        with pytest.raises(AccessDenied):
            analyzer.rewrite("select * from GROUP.cosmology.rgal", "eve", FakeResolver())

    def test_missing_mydb_table(self, analyzer):
        with pytest.raises(NoSuchTable):
            analyzer.rewrite("select * from MyDB.absent", "alice", FakeResolver())

    def test_malformed_propagates_as_rejected(self, analyzer):
        with pytest.raises(QueryRejected):
            analyzer.rewrite("select * from GROUP.x", "alice", FakeResolver())

    def test_round_trip_without_pseudo_names(self, analyzer):
        q = "select a, b from galaxy where x = 'MyDB.not_a_ref' -- comment\norder by a"
        assert analyzer.rewrite(q, "alice", FakeResolver()) == q

    def test_literals_never_rewritten(self, analyzer):
        q = "select * from MyDB.t where tag = 'GROUP.cosmology.rgal and MyDB.x'"
        out = analyzer.rewrite(q, "alice", FakeResolver(tables={("alice", "t"): True}))
        assert "'GROUP.cosmology.rgal and MyDB.x'" in out
        assert out.startswith("select * from mydb_alice.t")

    @settings(max_examples=60)
    @given(
        literal=st.text(
            alphabet=st.characters(blacklist_characters="'", blacklist_categories=("Cs",)),
            max_size=30,
        )
    )
    def test_literal_content_round_trips(self, literal):
        analyzer = QueryAnalyzer(CATALOG)
        q = f"select * from MyDB.t where v = '{literal}' and w = 'MyDB.fake'"
        out = analyzer.rewrite(q, "u", FakeResolver(tables={("u", "t"): True}))
        assert f"'{literal}'" in out
        assert "'MyDB.fake'" in out

    def test_rewrite_fixpoint_has_no_pseudo_refs(self, analyzer):
        resolver = FakeResolver(
            tables={("alice", "t"): True, ("cosmology", "rgal"): True},
            grants={("alice", "cosmology", "rgal")},
        )
        q = "select * from MyDB.t join GROUP.cosmology.rgal on t.a = rgal.a"
        out = analyzer.rewrite(q, "alice", resolver)
        qc = analyzer.classify(out)
        assert all(r.scope is Scope.PUBLIC for r in qc.referenced_refs)
        assert analyzer.rewrite(out, "alice", resolver) == out


class TestFingerprint:
    def test_literal_and_case_insensitive(self, analyzer):
        a = analyzer.fingerprint("select * from g where r<22")
        b = analyzer.fingerprint("SELECT * FROM g WHERE r < 21")
        assert a == b

    def test_different_tables_differ(self, analyzer):
        assert analyzer.fingerprint("select * from g") != analyzer.fingerprint("select * from h")

    def test_ten_thousand_literal_perturbations_collapse(self, analyzer):
        rng = random.Random(42)
        prints = set()
        for _ in range(10_000):
            r1 = rng.randint(0, 10**6)
            r2 = rng.uniform(0, 100)
            s = "".join(rng.choice("abcdef") for _ in range(rng.randint(0, 8)))
            q = f"select top {r1} * from galaxy where r < {r2:.4f} and name = '{s}'"
            prints.add(analyzer.fingerprint(q))
        assert len(prints) == 1

    def test_string_literals_collapse(self, analyzer):
        assert analyzer.fingerprint("select 'a'") == analyzer.fingerprint("select 'zz'")


class TestStripInto:
    def test_removes_pseudo_chain(self):
        assert (
            strip_into_clause("select top 10 * into MyDB.rgal from galaxy")
            == "select top 10 * from galaxy"
        )

    def test_removes_physical_chain(self):
        assert (
            strip_into_clause("select * into mydb_alice.rgal from galaxy where r < 1")
            == "select * from galaxy where r < 1"
        )

    def test_no_into_is_identity(self):
        q = "select * from galaxy"
        assert strip_into_clause(q) == q
