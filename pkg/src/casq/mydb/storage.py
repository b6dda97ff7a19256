"""Per-user personal databases: lazy creation, quotas, select-into, sharing.

Each user's MyDB is one SQLite file ``mydb_<user>.db`` under the storage
root, with a ``_casq_tables`` catalog recording schema, row count, and the
byte size charged under the accounting rule. Table writes run inside a
single transaction via :class:`TableWriter`, so quota breaches and stream
failures roll back without leaving partial tables; the quota is checked
per written batch, never post-hoc.

Per-user operations serialize on a per-user lock; cross-user access checks
are read-only snapshots of the group registry.
"""

from __future__ import annotations

import json
import re
import sqlite3
import threading
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Iterable, Iterator, Protocol, Sequence

from ..errors import (
    AccessDenied,
    NoSuchTable,
    QuotaExceeded,
    StorageFailure,
    TableExists,
    UnknownUser,
)
from ..sqlrewrite import physical_mydb_name
from ..tables import Column, ColumnType, Schema, content_hash, convert_row, row_bytes
from .groups import GroupRegistry

_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

_SQLITE_TYPES = {
    ColumnType.INTEGER: "INTEGER",
    ColumnType.FLOAT: "REAL",
    ColumnType.STRING: "TEXT",
    ColumnType.DATE: "TEXT",
}

WRITE_BATCH_ROWS = 512


def _safe_ident(name: str) -> str:
    if not _IDENT_RE.match(name):
        raise StorageFailure(f"unsafe identifier: {name!r}")
    return name


@dataclass
class TableInfo:
    name: str
    schema: Schema
    row_count: int
    byte_size: int
    published_to: set[int] = field(default_factory=set)


@dataclass
class MyDbInfo:
    user_id: str
    physical_name: str
    used_bytes: int
    quota_bytes: int
    tables: dict[str, TableInfo]


class AccountDirectory(Protocol):
    def user_exists(self, user_id: str) -> bool: ...

    def get_user(self, user_id: str): ...

    def set_mydb_created(self, user_id: str) -> None: ...


def _store_cell(value: Any, ctype: ColumnType) -> Any:
    if ctype is ColumnType.DATE and isinstance(value, date):
        return value.isoformat()
    return value


def _load_cell(value: Any, ctype: ColumnType) -> Any:
    if ctype is ColumnType.DATE and isinstance(value, str):
        return date.fromisoformat(value)
    return value


class TableWriter:
    """Streamed, quota-accounted insertion into a new or existing table.

    The whole write is one transaction: ``commit`` makes the rows (and the
    catalog entry) visible, anything else rolls back to the pre-write
    state. The per-user lock is held from construction until commit/abort.
    """

    def __init__(self, manager: "MyDbManager", user_id: str, table: str, schema: Schema, append: bool):
        self._mgr = manager
        self.user_id = user_id
        self.table = table
        self.schema = schema
        self._append = append
        self.rows_written = 0
        self.bytes_written = 0
        self._done = False
        self._lock = manager._user_lock(user_id)
        self._lock.acquire()
        try:
            self._conn = manager._connect(user_id)
            self._quota = manager._accounts.get_user(user_id).quota_bytes
            self._used_before = manager._used_bytes(self._conn)
            self._conn.execute("BEGIN")
            if append:
                if manager._catalog_entry(self._conn, table) is None:
                    raise NoSuchTable(f"no table {table} in {user_id}'s MyDB")
            else:
                if manager._catalog_entry(self._conn, table) is not None:
                    raise TableExists(f"table {table} already exists in {user_id}'s MyDB")
                cols = ", ".join(
                    f"{_safe_ident(c.name)} {_SQLITE_TYPES[c.type]}" for c in schema.columns
                )
                self._conn.execute(f"CREATE TABLE {_safe_ident(table)} ({cols})")
        except BaseException:
            self._rollback_and_release()
            raise

    def write_rows(self, rows: Iterable[Sequence[Any]]) -> None:
        if self._done:
            raise StorageFailure("writer already finished")
        placeholders = ", ".join("?" * len(self.schema))
        sql = f"INSERT INTO {_safe_ident(self.table)} VALUES ({placeholders})"
        try:
            batch = []
            batch_bytes = 0
            for raw in rows:
                row = convert_row(raw, self.schema)
                batch.append(tuple(_store_cell(v, c.type) for v, c in zip(row, self.schema.columns)))
                batch_bytes += row_bytes(row, self.schema)
            if self._used_before + self.bytes_written + batch_bytes > self._quota:
                raise QuotaExceeded(
                    f"writing {batch_bytes} bytes would exceed {self.user_id}'s quota"
                )
            self._conn.executemany(sql, batch)
            self.rows_written += len(batch)
            self.bytes_written += batch_bytes
        except BaseException:
            self._rollback_and_release()
            raise

    def commit(self) -> TableInfo:
        if self._done:
            raise StorageFailure("writer already finished")
        try:
            if self._append:
                self._conn.execute(
                    "UPDATE _casq_tables SET row_count = row_count + ?, byte_size = byte_size + ?"
                    " WHERE name = ?",
                    (self.rows_written, self.bytes_written, self.table),
                )
            else:
                self._conn.execute(
                    "INSERT INTO _casq_tables(name, schema_json, row_count, byte_size)"
                    " VALUES (?, ?, ?, ?)",
                    (
                        self.table,
                        json.dumps(self.schema.to_pairs()),
                        self.rows_written,
                        self.bytes_written,
                    ),
                )
            self._conn.execute("COMMIT")
        except BaseException:
            self._rollback_and_release()
            raise
        self._done = True
        self._lock.release()
        return self._mgr.table_info(self.user_id, self.table)

    def abort(self) -> None:
        if not self._done:
            self._rollback_and_release()

    def _rollback_and_release(self) -> None:
        self._done = True
        try:
            conn = getattr(self, "_conn", None)
            if conn is not None:
                conn.execute("ROLLBACK")
        except sqlite3.OperationalError:
            pass
        finally:
            self._lock.release()


class MyDbManager:
    """Creates, accounts, and shares per-user personal databases."""

    def __init__(self, storage_root: str | Path, accounts: AccountDirectory, groups: GroupRegistry):
        self.root = Path(storage_root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._accounts = accounts
        self.groups = groups
        self._conns: dict[str, sqlite3.Connection] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._meta_lock = threading.Lock()

    def close(self) -> None:
        with self._meta_lock:
            for conn in self._conns.values():
                conn.close()
            self._conns.clear()

    def _user_lock(self, user_id: str) -> threading.RLock:
        with self._meta_lock:
            if user_id not in self._locks:
                self._locks[user_id] = threading.RLock()
            return self._locks[user_id]

    def db_path(self, user_id: str) -> Path:
        return self.root / f"{physical_mydb_name(user_id)}.db"

    def _connect(self, user_id: str) -> sqlite3.Connection:
        with self._meta_lock:
            conn = self._conns.get(user_id)
            if conn is None:
                # autocommit mode; writers manage BEGIN/COMMIT explicitly
                conn = sqlite3.connect(
                    self.db_path(user_id), check_same_thread=False, isolation_level=None
                )
                conn.row_factory = sqlite3.Row
                conn.execute(
                    "CREATE TABLE IF NOT EXISTS _casq_tables ("
                    " name TEXT PRIMARY KEY, schema_json TEXT NOT NULL,"
                    " row_count INTEGER NOT NULL, byte_size INTEGER NOT NULL)"
                )
                self._conns[user_id] = conn
            return conn

    @staticmethod
    def _catalog_entry(conn: sqlite3.Connection, table: str) -> sqlite3.Row | None:
        return conn.execute("SELECT * FROM _casq_tables WHERE name = ?", (table,)).fetchone()

    @staticmethod
    def _used_bytes(conn: sqlite3.Connection) -> int:
        row = conn.execute("SELECT COALESCE(SUM(byte_size), 0) AS used FROM _casq_tables").fetchone()
        return row["used"]

    # -- operations -----------------------------------------------------

    def ensure_mydb(self, user_id: str) -> MyDbInfo:
        """Create the personal database on first use; idempotent after."""
        if not self._accounts.user_exists(user_id):
            raise UnknownUser(f"no such user: {user_id}")
        with self._user_lock(user_id):
            fresh = not self.db_path(user_id).exists()
            self._connect(user_id)
            if fresh:
                self._accounts.set_mydb_created(user_id)
        return self.info(user_id)

    def info(self, user_id: str) -> MyDbInfo:
        account = self._accounts.get_user(user_id)
        with self._user_lock(user_id):
            conn = self._connect(user_id)
            tables = {}
            for row in conn.execute("SELECT * FROM _casq_tables ORDER BY name"):
                tables[row["name"]] = TableInfo(
                    name=row["name"],
                    schema=Schema.from_pairs(json.loads(row["schema_json"])),
                    row_count=row["row_count"],
                    byte_size=row["byte_size"],
                    published_to=self.groups.publications_for(user_id, row["name"]),
                )
            used = self._used_bytes(conn)
        assert used <= account.quota_bytes, f"{user_id}: used_bytes above quota after commit"
        assert used == sum(t.byte_size for t in tables.values())
        return MyDbInfo(user_id, physical_mydb_name(user_id), used, account.quota_bytes, tables)

    def table_info(self, user_id: str, table: str) -> TableInfo:
        with self._user_lock(user_id):
            conn = self._connect(user_id)
            row = self._catalog_entry(conn, table)
        if row is None:
            raise NoSuchTable(f"no table {table} in {user_id}'s MyDB")
        return TableInfo(
            name=row["name"],
            schema=Schema.from_pairs(json.loads(row["schema_json"])),
            row_count=row["row_count"],
            byte_size=row["byte_size"],
            published_to=self.groups.publications_for(user_id, table),
        )

    def has_table(self, user_id: str, table: str) -> bool:
        with self._user_lock(user_id):
            conn = self._connect(user_id)
            return self._catalog_entry(conn, table) is not None

    def create_writer(self, user_id: str, table: str, schema: Schema) -> TableWriter:
        self.ensure_mydb(user_id)
        return TableWriter(self, user_id, table, schema, append=False)

    def append_writer(self, user_id: str, table: str) -> TableWriter:
        self.ensure_mydb(user_id)
        schema = self.table_info(user_id, table).schema
        return TableWriter(self, user_id, table, schema, append=True)

    def select_into(self, user_id: str, table: str, schema: Schema, rows: Iterable[Sequence[Any]]) -> TableInfo:
        """Materialize a row stream as a new table, atomically.

        On quota breach or a stream failure the partial table is dropped
        and the accounting is unchanged.
        """
        writer = self.create_writer(user_id, table, schema)
        try:
            batch: list[Sequence[Any]] = []
            for row in rows:
                batch.append(row)
                if len(batch) >= WRITE_BATCH_ROWS:
                    writer.write_rows(batch)
                    batch = []
            if batch:
                writer.write_rows(batch)
            return writer.commit()
        except BaseException:
            writer.abort()
            raise

    def drop_table(self, user_id: str, table: str) -> int:
        """Remove a table, revoke its publications, return freed bytes."""
        with self._user_lock(user_id):
            conn = self._connect(user_id)
            row = self._catalog_entry(conn, table)
            if row is None:
                raise NoSuchTable(f"no table {table} in {user_id}'s MyDB")
            freed = row["byte_size"]
            conn.execute("BEGIN")
            try:
                conn.execute(f"DROP TABLE {_safe_ident(table)}")
                conn.execute("DELETE FROM _casq_tables WHERE name = ?", (table,))
                conn.execute("COMMIT")
            except BaseException:
                conn.execute("ROLLBACK")
                raise
        self.groups.revoke_table(user_id, table)
        return freed

    def read_table(self, user_id: str, table: str) -> tuple[Schema, Iterator[tuple]]:
        info = self.table_info(user_id, table)
        schema = info.schema

        def rows() -> Iterator[tuple]:
            with self._user_lock(user_id):
                conn = self._connect(user_id)
                cursor = conn.execute(f"SELECT * FROM {_safe_ident(table)}")
                fetched = cursor.fetchall()
            for raw in fetched:
                yield tuple(_load_cell(v, c.type) for v, c in zip(tuple(raw), schema.columns))

        return schema, rows()

    def table_hash(self, user_id: str, table: str) -> str:
        schema, rows = self.read_table(user_id, table)
        return content_hash(schema, rows)

    # -- sharing ----------------------------------------------------------

    def publish(self, user_id: str, table: str, group_id: int) -> TableInfo:
        """Publish one of the user's tables to a group they belong to."""
        self.groups.require_accepted(group_id, user_id)
        if not self.has_table(user_id, table):
            raise NoSuchTable(f"no table {table} in {user_id}'s MyDB")
        self.groups.record_publication(user_id, table, group_id)
        return self.table_info(user_id, table)

    def check_access(self, requester: str, owner: str, table: str) -> bool:
        return self.groups.check_access(requester, owner, table)

    # -- name resolution (sqlrewrite.NameResolver) ------------------------

    def resolve_mydb(self, user_id: str, table: str, *, creating: bool) -> str:
        if not creating and not self.has_table(user_id, table):
            raise NoSuchTable(f"no table {table} in {user_id}'s MyDB")
        return f"{physical_mydb_name(user_id)}.{table}"

    def resolve_group(self, requester: str, owner: str, table: str) -> str:
        if not self.check_access(requester, owner, table):
            raise AccessDenied(f"{requester} may not read GROUP.{owner}.{table}")
        if not self.has_table(owner, table):
            raise NoSuchTable(f"no table {table} published by {owner}")
        return f"{physical_mydb_name(owner)}.{table}"
