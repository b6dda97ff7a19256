"""Token-level query analysis and pseudo-database name resolution.

Queries are scanned with a small SQL tokenizer (identifiers, numbers,
single-quoted strings with '' escapes, line and block comments, operator
punctuation). On top of that sit three operations:

* ``classify`` finds the ``INTO MyDB.<t>`` target, every ``MyDB.<t>`` /
  ``GROUP.<user>.<t>`` pseudo reference, the plain table names referenced
  from FROM/JOIN clauses, and whether the query looks like a full table
  scan against the node's indexed-column catalog.
* ``rewrite`` splices pseudo names into physical ``mydb_<user>.<table>``
  names, leaving everything else (string literals included) byte-identical.
* ``fingerprint`` hashes the token stream with literals blanked, so that
  queries differing only in literal values, case, or whitespace collide.

This is intentionally not a SQL grammar. Identifier quoting (``"t"`` or
``[t]``) is rejected as unsupported; full validation is the execution
backend's job. Which queries count as full-table scans is a heuristic:
a query is a candidate when it touches a public table and its WHERE
clause (if any) names no column from the configured indexed-column
catalog.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

from .errors import AccessDenied, EmptyQuery, MalformedPseudoName, NoSuchTable, QueryRejected


class Scope(str, Enum):
    MYDB = "MYDB"
    GROUP = "GROUP"
    PUBLIC = "PUBLIC"


@dataclass(frozen=True)
class TableRef:
    scope: Scope
    table: str
    owner: str | None = None

    def __post_init__(self):
        if self.scope is Scope.GROUP and not self.owner:
            raise MalformedPseudoName("GROUP reference requires a publisher id")


@dataclass
class QueryClass:
    into_target: str | None
    referenced_refs: set[TableRef]
    full_scan_candidate: bool
    fingerprint: str


class TokenKind(Enum):
    IDENT = "ident"
    NUMBER = "number"
    STRING = "string"
    PUNCT = "punct"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    start: int
    end: int

    @property
    def lower(self) -> str:
        return self.text.lower()


def tokenize(query: str) -> list[Token]:
    """Lex a query into semantic tokens; whitespace and comments drop out.

    Raises QueryRejected on quoted/bracketed identifiers (documented
    limitation) and on unterminated strings or block comments.
    """
    tokens: list[Token] = []
    i, n = 0, len(query)
    while i < n:
        ch = query[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "-" and query.startswith("--", i):
            j = query.find("\n", i)
            i = n if j < 0 else j + 1
            continue
        if ch == "/" and query.startswith("/*", i):
            j = query.find("*/", i + 2)
            if j < 0:
                raise QueryRejected("unterminated block comment")
            i = j + 2
            continue
        if ch == "'":
            j = i + 1
            while j < n:
                if query[j] == "'":
                    if j + 1 < n and query[j + 1] == "'":
                        j += 2
                        continue
                    break
                j += 1
            if j >= n:
                raise QueryRejected("unterminated string literal")
            tokens.append(Token(TokenKind.STRING, query[i : j + 1], i, j + 1))
            i = j + 1
            continue
        if ch == '"' or ch == "[":
            raise QueryRejected("quoted and bracketed identifiers are not supported")
        if ch.isdigit() or (ch == "." and i + 1 < n and query[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (query[j].isdigit() or (query[j] == "." and not seen_dot)):
                if query[j] == ".":
                    seen_dot = True
                j += 1
            if j < n and query[j] in "eE":
                k = j + 1
                if k < n and query[k] in "+-":
                    k += 1
                if k < n and query[k].isdigit():
                    j = k
                    while j < n and query[j].isdigit():
                        j += 1
            tokens.append(Token(TokenKind.NUMBER, query[i:j], i, j))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (query[j].isalnum() or query[j] == "_"):
                j += 1
            tokens.append(Token(TokenKind.IDENT, query[i:j], i, j))
            i = j
            continue
        tokens.append(Token(TokenKind.PUNCT, ch, i, i + 1))
        i += 1
    return tokens


# Identifiers that can appear inside WHERE without naming a column.
_WHERE_NOISE = {
    "and", "or", "not", "in", "like", "between", "is", "null", "exists",
    "case", "when", "then", "else", "end", "cast", "as", "true", "false",
    "any", "all", "some", "escape",
}
_WHERE_TERMINATORS = {"group", "order", "having", "union", "intersect", "except", "limit", "offset"}
_FROM_STOP = {
    "where", "group", "order", "having", "union", "intersect", "except",
    "limit", "offset", "on", "inner", "left", "right", "full", "outer",
    "cross", "join", "as",
}


@dataclass(frozen=True)
class _PseudoRef:
    ref: TableRef
    start: int  # char offset of the chain's first token
    end: int    # char offset past the chain's last consumed token
    is_into: bool


def _scan(tokens: list[Token]) -> tuple[list[_PseudoRef], str | None, set[TableRef], bool]:
    """One linear pass: pseudo refs, INTO target, public refs, WHERE columns.

    Returns (pseudo_refs, into_target, public_refs, where_columns_present)
    via a slightly wider tuple; see classify for assembly.
    """
    pseudo: list[_PseudoRef] = []
    into_target: str | None = None
    public_refs: set[TableRef] = set()
    consumed: set[int] = set()  # token indices belonging to pseudo chains

    def ident_at(idx: int) -> Token | None:
        if 0 <= idx < len(tokens) and tokens[idx].kind is TokenKind.IDENT:
            return tokens[idx]
        return None

    def dot_at(idx: int) -> bool:
        return 0 <= idx < len(tokens) and tokens[idx].kind is TokenKind.PUNCT and tokens[idx].text == "."

    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.kind is TokenKind.IDENT and tok.lower == "mydb" and dot_at(i + 1):
            table = ident_at(i + 2)
            if table is None:
                raise MalformedPseudoName("MyDB. must be followed by a table name")
            prev = tokens[i - 1] if i > 0 else None
            is_into = prev is not None and prev.kind is TokenKind.IDENT and prev.lower == "into"
            pseudo.append(
                _PseudoRef(TableRef(Scope.MYDB, table.text), tok.start, table.end, is_into)
            )
            if is_into:
                into_target = table.text
            consumed.update({i, i + 1, i + 2})
            i += 3
            continue
        if tok.kind is TokenKind.IDENT and tok.lower == "group" and dot_at(i + 1):
            owner = ident_at(i + 2)
            if owner is None or not dot_at(i + 3):
                raise MalformedPseudoName(
                    "GROUP references take the form GROUP.<user>.<table>"
                )
            table = ident_at(i + 4)
            if table is None:
                raise MalformedPseudoName(
                    "GROUP references take the form GROUP.<user>.<table>"
                )
            pseudo.append(
                _PseudoRef(TableRef(Scope.GROUP, table.text, owner=owner.text), tok.start, table.end, False)
            )
            consumed.update({i, i + 1, i + 2, i + 3, i + 4})
            i += 5
            continue
        i += 1

    # plain table names referenced from FROM / JOIN clauses
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.kind is TokenKind.IDENT and tok.lower in ("from", "join") and i not in consumed:
            j = i + 1
            while j < len(tokens):
                if j in consumed:
                    # pseudo chain in table position
                    while j < len(tokens) and j in consumed:
                        j += 1
                elif tokens[j].kind is TokenKind.IDENT and tokens[j].lower not in _FROM_STOP:
                    parts = [tokens[j].text]
                    k = j + 1
                    while dot_at(k) and ident_at(k + 1) is not None and (k + 1) not in consumed:
                        parts.append(tokens[k + 1].text)
                        k += 2
                    public_refs.add(TableRef(Scope.PUBLIC, ".".join(parts)))
                    j = k
                else:
                    break
                # optional alias after the table item
                if ident_at(j) is not None and tokens[j].lower not in _FROM_STOP and j not in consumed:
                    j += 1
                # a comma continues the FROM list
                if j < len(tokens) and tokens[j].kind is TokenKind.PUNCT and tokens[j].text == ",":
                    j += 1
                    continue
                break
            i = j
            continue
        i += 1

    return pseudo, into_target, public_refs, _where_columns(tokens, consumed)


def _where_columns(tokens: list[Token], consumed: set[int]) -> set[str]:
    """Column-like identifiers inside WHERE clauses (lowercased)."""
    columns: set[str] = set()
    in_where = False
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.kind is TokenKind.IDENT:
            low = tok.lower
            if low == "where":
                in_where = True
                i += 1
                continue
            if in_where and low in _WHERE_TERMINATORS and i not in consumed:
                in_where = False
                i += 1
                continue
            if in_where and i not in consumed and low not in _WHERE_NOISE:
                nxt = tokens[i + 1] if i + 1 < len(tokens) else None
                if nxt is not None and nxt.kind is TokenKind.PUNCT and nxt.text == "(":
                    i += 1  # function call
                    continue
                if nxt is not None and nxt.kind is TokenKind.PUNCT and nxt.text == ".":
                    # qualified column: take the last identifier of the chain
                    j = i
                    while (
                        j + 2 < len(tokens)
                        and tokens[j + 1].kind is TokenKind.PUNCT
                        and tokens[j + 1].text == "."
                        and tokens[j + 2].kind is TokenKind.IDENT
                    ):
                        j += 2
                    columns.add(tokens[j].lower)
                    i = j + 1
                    continue
                columns.add(low)
        i += 1
    return columns


class NameResolver(Protocol):
    """Resolves pseudo references to physical names, enforcing access."""

    def resolve_mydb(self, user_id: str, table: str, *, creating: bool) -> str: ...

    def resolve_group(self, requester: str, owner: str, table: str) -> str: ...


def physical_mydb_name(user_id: str) -> str:
    return f"mydb_{user_id}"


class QueryAnalyzer:
    """Classify, rewrite, and fingerprint queries against one node's catalog.

    ``indexed_columns`` maps public table name to its indexed columns; it
    drives the full-scan heuristic only.
    """

    def __init__(self, indexed_columns: dict[str, list[str]] | None = None):
        self.indexed_columns = {
            t.lower(): {c.lower() for c in cols} for t, cols in (indexed_columns or {}).items()
        }

    def classify(self, query: str) -> QueryClass:
        if not query or not query.strip():
            raise EmptyQuery("query is empty")
        tokens = tokenize(query)
        pseudo, into_target, public_refs, where_cols = _scan(tokens)
        refs: set[TableRef] = {p.ref for p in pseudo} | public_refs
        full_scan = self._is_full_scan(public_refs, where_cols)
        return QueryClass(
            into_target=into_target,
            referenced_refs=refs,
            full_scan_candidate=full_scan,
            fingerprint=self.fingerprint(query),
        )

    def _is_full_scan(self, public_refs: set[TableRef], where_cols: set[str]) -> bool:
        if not public_refs:
            return False
        if not where_cols:
            return True
        indexed: set[str] = set()
        for ref in public_refs:
            indexed |= self.indexed_columns.get(ref.table.lower(), set())
        return not (where_cols & indexed)

    def rewrite(self, query: str, requester: str, resolver: NameResolver) -> str:
        """Replace pseudo names with physical ones; everything else is kept
        byte-identical, so a query without pseudo names round-trips exactly.
        """
        if not query or not query.strip():
            raise EmptyQuery("query is empty")
        try:
            tokens = tokenize(query)
            pseudo, _, _, _ = _scan(tokens)
        except MalformedPseudoName as exc:
            raise QueryRejected(str(exc)) from exc
        out = query
        for p in sorted(pseudo, key=lambda p: p.start, reverse=True):
            if p.ref.scope is Scope.MYDB:
                replacement = resolver.resolve_mydb(requester, p.ref.table, creating=p.is_into)
            else:
                replacement = resolver.resolve_group(requester, p.ref.owner, p.ref.table)
            out = out[: p.start] + replacement + out[p.end :]
        return out

    def fingerprint(self, query: str) -> str:
        """Stable hash, insensitive to literal values, case, and spacing."""
        parts: list[str] = []
        for tok in tokenize(query):
            if tok.kind in (TokenKind.NUMBER, TokenKind.STRING):
                parts.append("?")
            else:
                parts.append(tok.lower)
        return hashlib.sha256(" ".join(parts).encode("utf-8")).hexdigest()


def strip_into_clause(query: str) -> str:
    """Remove an ``INTO <name-chain>`` clause so a plain SELECT remains.

    Used when the target routing already captures where rows go.
    """
    tokens = tokenize(query)
    i = 0
    while i < len(tokens):
        if tokens[i].kind is TokenKind.IDENT and tokens[i].lower == "into":
            j = i + 1
            end = tokens[i].end
            while j < len(tokens) and tokens[j].kind is TokenKind.IDENT:
                end = tokens[j].end
                if (
                    j + 1 < len(tokens)
                    and tokens[j + 1].kind is TokenKind.PUNCT
                    and tokens[j + 1].text == "."
                ):
                    j += 2
                else:
                    break
            return (query[: tokens[i].start].rstrip() + " " + query[end:].lstrip()).strip()
        i += 1
    return query
