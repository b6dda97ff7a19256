from __future__ import annotations

import itertools
import random

import pytest

from casq.errors import (
    AlreadyMember,
    DuplicateGroup,
    NoSuchTable,
    NotInvited,
    NotMember,
    NotOwner,
    QuotaExceeded,
    TableExists,
    UnknownUser,
)
from casq.mydb import GroupRegistry, MemberStatus, MyDbManager
from casq.sqlrewrite import QueryAnalyzer
from casq.tables import Column, ColumnType, Schema, row_bytes

RGAL_SCHEMA = Schema([Column("objid", ColumnType.INTEGER), Column("r", ColumnType.FLOAT)])


@pytest.fixture
def mgr(tmp_path, store):
    groups = GroupRegistry(tmp_path / "community.db", store)
    m = MyDbManager(tmp_path / "mydbs", store, groups)
    yield m
    m.close()
    groups.close()


def rgal_rows(n=10):
    return [(i, 21.0 + i / 100.0) for i in range(n)]


class TestEnsureMydb:
    def test_first_call_creates_with_default_quota(self, mgr):
        info = mgr.ensure_mydb("alice")
        assert info.quota_bytes == 104_857_600  # 100MB default
        assert info.used_bytes == 0
        assert info.tables == {}
        assert info.physical_name == "mydb_alice"

    def test_idempotent(self, mgr):
        first = mgr.ensure_mydb("alice")
        second = mgr.ensure_mydb("alice")
        assert first.physical_name == second.physical_name
        assert second.tables == {}

    def test_unknown_user(self, mgr):
        with pytest.raises(UnknownUser):
            mgr.ensure_mydb("mallory")


class TestSelectInto:
    def test_ten_row_result(self, mgr):
        info = mgr.select_into("alice", "rgal", RGAL_SCHEMA, rgal_rows(10))
        assert info.row_count == 10
        assert info.byte_size == sum(row_bytes(r, RGAL_SCHEMA) for r in rgal_rows(10))

    def test_quota_breach_rolls_back(self, mgr, store):
        store.set_quota("alice", 1000)
        # generate rows until the accounting rule crosses quota
        per_row = row_bytes((1, 1.0), RGAL_SCHEMA)
        needed = 1000 // per_row + 2
        with pytest.raises(QuotaExceeded):
            mgr.select_into("alice", "big", RGAL_SCHEMA, rgal_rows(needed))
        info = mgr.info("alice")
        assert "big" not in info.tables
        assert info.used_bytes == 0

    def test_duplicate_name(self, mgr):
        mgr.select_into("alice", "rgal", RGAL_SCHEMA, rgal_rows(2))
        with pytest.raises(TableExists):
            mgr.select_into("alice", "rgal", RGAL_SCHEMA, rgal_rows(2))

    def test_stream_failure_leaves_no_partial_table(self, mgr):
        def exploding():
            yield (1, 1.0)
            raise RuntimeError("backend died")

        with pytest.raises(RuntimeError):
            mgr.select_into("alice", "broken", RGAL_SCHEMA, exploding())
        assert not mgr.has_table("alice", "broken")
        assert mgr.info("alice").used_bytes == 0


class TestDropTable:
    def test_freed_bytes_conserve(self, mgr):
        before = mgr.ensure_mydb("alice").used_bytes
        info = mgr.select_into("alice", "rgal", RGAL_SCHEMA, rgal_rows(5))
        freed = mgr.drop_table("alice", "rgal")
        assert freed == info.byte_size
        assert mgr.info("alice").used_bytes == before

    def test_double_drop(self, mgr):
        mgr.select_into("alice", "rgal", RGAL_SCHEMA, rgal_rows(1))
        mgr.drop_table("alice", "rgal")
        with pytest.raises(NoSuchTable):
            mgr.drop_table("alice", "rgal")

    def test_drop_published_table_revokes_resolution(self, mgr):
        """End-to-end through sqlrewrite: a dropped table stops resolving."""
        store = mgr._accounts
        store.create_user("cosmology", password="pw")
        mgr.select_into("cosmology", "rgal", RGAL_SCHEMA, rgal_rows(3))
        g = mgr.groups.create_group("cosmology", "cosmology")
        mgr.groups.invite(g.group_id, "cosmology", "bob")
        mgr.groups.accept(g.group_id, "bob")
        mgr.publish("cosmology", "rgal", g.group_id)

        analyzer = QueryAnalyzer()
        q = "select * from GROUP.cosmology.rgal"
        assert analyzer.rewrite(q, "bob", mgr) == "select * from mydb_cosmology.rgal"

        mgr.drop_table("cosmology", "rgal")
        from casq.errors import AccessDenied

        with pytest.raises(AccessDenied):
            analyzer.rewrite(q, "bob", mgr)


class TestGroups:
    def test_create_group_owner_accepted(self, mgr, store):
        store.create_user("cosmology", password="pw")
        g = mgr.groups.create_group("cosmology", "cosmology")
        assert g.members == {"cosmology": MemberStatus.ACCEPTED}

    def test_duplicate_name(self, mgr):
        mgr.groups.create_group("alice", "g")
        with pytest.raises(DuplicateGroup):
            mgr.groups.create_group("bob", "g")

    def test_invite_accept_flow(self, mgr):
        g = mgr.groups.create_group("alice", "g")
        g = mgr.groups.invite(g.group_id, "alice", "bob")
        assert g.members["bob"] is MemberStatus.INVITED
        g = mgr.groups.accept(g.group_id, "bob")
        assert g.members["bob"] is MemberStatus.ACCEPTED

    def test_invite_by_non_owner(self, mgr):
        g = mgr.groups.create_group("alice", "g")
        with pytest.raises(NotOwner):
            mgr.groups.invite(g.group_id, "bob", "bob")

    def test_reinvite_rejected(self, mgr):
        g = mgr.groups.create_group("alice", "g")
        mgr.groups.invite(g.group_id, "alice", "bob")
        with pytest.raises(AlreadyMember):
            mgr.groups.invite(g.group_id, "alice", "bob")

    def test_invite_unknown_user(self, mgr):
        g = mgr.groups.create_group("alice", "g")
        with pytest.raises(UnknownUser):
            mgr.groups.invite(g.group_id, "alice", "mallory")

    def test_accept_without_invite(self, mgr):
        g = mgr.groups.create_group("alice", "g")
        with pytest.raises(NotInvited):
            mgr.groups.accept(g.group_id, "bob")

    def test_double_accept(self, mgr):
        g = mgr.groups.create_group("alice", "g")
        mgr.groups.invite(g.group_id, "alice", "bob")
        mgr.groups.accept(g.group_id, "bob")
        with pytest.raises(NotInvited):
            mgr.groups.accept(g.group_id, "bob")


class TestPublish:
    def test_publish_to_own_group(self, mgr):
        g = mgr.groups.create_group("alice", "g")
        mgr.select_into("alice", "rgal", RGAL_SCHEMA, rgal_rows(1))
        info = mgr.publish("alice", "rgal", g.group_id)
        assert g.group_id in info.published_to

    def test_invited_member_cannot_publish(self, mgr):
        g = mgr.groups.create_group("alice", "g")
        mgr.groups.invite(g.group_id, "alice", "bob")
        mgr.select_into("bob", "t", RGAL_SCHEMA, rgal_rows(1))
        with pytest.raises(NotMember):
            mgr.publish("bob", "t", g.group_id)

    def test_publish_missing_table(self, mgr):
        g = mgr.groups.create_group("alice", "g")
        with pytest.raises(NoSuchTable):
            mgr.publish("alice", "ghost", g.group_id)


class TestCheckAccess:
    def test_accepted_co_member_granted(self, mgr):
        g = mgr.groups.create_group("alice", "g")
        mgr.groups.invite(g.group_id, "alice", "bob")
        mgr.groups.accept(g.group_id, "bob")
        mgr.select_into("alice", "rgal", RGAL_SCHEMA, rgal_rows(1))
        mgr.publish("alice", "rgal", g.group_id)
        assert mgr.check_access("bob", "alice", "rgal") is True

    def test_invited_only_denied(self, mgr):
        g = mgr.groups.create_group("alice", "g")
        mgr.groups.invite(g.group_id, "alice", "bob")
        mgr.select_into("alice", "rgal", RGAL_SCHEMA, rgal_rows(1))
        mgr.publish("alice", "rgal", g.group_id)
        assert mgr.check_access("bob", "alice", "rgal") is False

    def test_owner_always_granted(self, mgr):
        mgr.select_into("alice", "private", RGAL_SCHEMA, rgal_rows(1))
        assert mgr.check_access("alice", "alice", "private") is True

    def test_access_lattice_brute_force(self, tmp_path, store):
        """All 3-user x 2-group membership lattices against the direct rule."""
        users = ["u0", "u1", "u2"]
        for u in users:
            if not store.user_exists(u):
                store.create_user(u, password="pw")
        statuses = [None, MemberStatus.INVITED, MemberStatus.ACCEPTED]
        case = 0
        # u0 owns table t and both groups; vary memberships of u1, u2 and
        # the publication set
        for m1a, m1b, m2a, m2b in itertools.product(statuses, repeat=4):
            for pub_a, pub_b in itertools.product([False, True], repeat=2):
                case += 1
                groups = GroupRegistry(tmp_path / f"c{case}.db", store)
                mgr = MyDbManager(tmp_path / f"m{case}", store, groups)
                ga = groups.create_group("u0", "ga")
                gb = groups.create_group("u0", "gb")
                for user, status, gid in [
                    ("u1", m1a, ga.group_id),
                    ("u1", m1b, gb.group_id),
                    ("u2", m2a, ga.group_id),
                    ("u2", m2b, gb.group_id),
                ]:
                    if status is not None:
                        groups.invite(gid, "u0", user) if user not in groups.get(gid).members else None
                        if status is MemberStatus.ACCEPTED:
                            groups.accept(gid, user)
                mgr.select_into("u0", "t", RGAL_SCHEMA, [(1, 1.0)])
                published = set()
                if pub_a:
                    mgr.publish("u0", "t", ga.group_id)
                    published.add(ga.group_id)
                if pub_b:
                    mgr.publish("u0", "t", gb.group_id)
                    published.add(gb.group_id)
                for requester in users:
                    expected = requester == "u0" or any(
                        groups.member_status(g, requester) is MemberStatus.ACCEPTED
                        for g in published
                    )
                    assert mgr.check_access(requester, "u0", "t") == expected
                mgr.close()
                groups.close()


class TestQuotaConservation:
    def test_random_op_sequences(self, mgr, store):
        """used_bytes always equals the recomputed sum of live table sizes."""
        store.set_quota("alice", 64 * 1024)
        rng = random.Random(11)
        live: dict[str, int] = {}
        for step in range(120):
            name = f"t{rng.randint(0, 14)}"
            if rng.random() < 0.6:
                n = rng.randint(0, 220)
                try:
                    info = mgr.select_into("alice", name, RGAL_SCHEMA, rgal_rows(n))
                    live[name] = info.byte_size
                except TableExists:
                    pass
                except QuotaExceeded:
                    pass
            else:
                try:
                    mgr.drop_table("alice", name)
                    live.pop(name, None)
                except NoSuchTable:
                    pass
            info = mgr.info("alice")
            assert info.used_bytes == sum(live.values())
            assert info.used_bytes <= 64 * 1024
            assert set(info.tables) == set(live)
