"""SQLite-backed store for users and job records.

The store is the single source of truth and survives restart. All writes
go through one connection guarded by a re-entrant lock, with check-and-set
semantics on job state so concurrent workers can never commit an illegal
edge. Timestamps are milliseconds UTC.
"""

from __future__ import annotations

import hashlib
import os
import secrets
import sqlite3
import threading
import time
from pathlib import Path
from typing import Callable, Iterable

from ..errors import (
    AuthFailed,
    IllegalTransition,
    NotTerminal,
    TargetRequired,
    UnknownJob,
    UnknownQueue,
    UnknownUser,
)
from .model import (
    JobRecord,
    JobState,
    JobTarget,
    QueueRegistry,
    TargetKind,
    TERMINAL_STATES,
    UserAccount,
    check_edge,
)

_SCHEMA = """
CREATE TABLE IF NOT EXISTS users (
    user_id TEXT PRIMARY KEY,
    quota_bytes INTEGER NOT NULL,
    mydb_created INTEGER NOT NULL DEFAULT 0,
    password_salt TEXT NOT NULL,
    password_hash TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS jobs (
    job_id INTEGER PRIMARY KEY AUTOINCREMENT,
    user_id TEXT NOT NULL,
    queue TEXT NOT NULL,
    query_text TEXT NOT NULL,
    state TEXT NOT NULL,
    target_kind TEXT NOT NULL,
    target_table TEXT,
    target_format TEXT,
    submitted_at INTEGER NOT NULL,
    started_at INTEGER,
    finished_at INTEGER,
    rows_produced INTEGER NOT NULL DEFAULT 0,
    output_url TEXT,
    error TEXT,
    parent_job INTEGER,
    promotion_count INTEGER NOT NULL DEFAULT 0,
    autocomplete INTEGER NOT NULL DEFAULT 0,
    fingerprint TEXT
);
CREATE INDEX IF NOT EXISTS idx_jobs_user ON jobs(user_id, job_id DESC);
CREATE INDEX IF NOT EXISTS idx_jobs_queue_state ON jobs(queue, state);
CREATE INDEX IF NOT EXISTS idx_jobs_fingerprint ON jobs(fingerprint);
"""


def now_ms() -> int:
    return int(time.time() * 1000)


def _hash_password(password: str, salt: str) -> str:
    return hashlib.sha256((salt + password).encode("utf-8")).hexdigest()


def _row_to_record(row: sqlite3.Row) -> JobRecord:
    return JobRecord(
        job_id=row["job_id"],
        user_id=row["user_id"],
        queue=row["queue"],
        query_text=row["query_text"],
        state=JobState(row["state"]),
        target=JobTarget(
            TargetKind(row["target_kind"]),
            table=row["target_table"],
            format=row["target_format"],
        ),
        submitted_at=row["submitted_at"],
        started_at=row["started_at"],
        finished_at=row["finished_at"],
        rows_produced=row["rows_produced"],
        output_url=row["output_url"],
        error=row["error"],
        parent_job=row["parent_job"],
        promotion_count=row["promotion_count"],
        autocomplete=bool(row["autocomplete"]),
        fingerprint=row["fingerprint"],
    )


def _check_timestamps(row: sqlite3.Row) -> None:
    submitted, started, finished = row["submitted_at"], row["started_at"], row["finished_at"]
    if started is not None:
        assert submitted <= started, f"job {row['job_id']}: submitted_at > started_at"
    if finished is not None:
        lower = started if started is not None else submitted
        assert lower <= finished, f"job {row['job_id']}: finished_at precedes earlier timestamp"


class JobStore:
    """Persistent users + jobs with linearizable state transitions."""

    def __init__(self, path: str | os.PathLike, queues: QueueRegistry, clock: Callable[[], int] = now_ms):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.queues = queues
        self._clock = clock
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.executescript(_SCHEMA)
        self._conn.commit()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -- users ----------------------------------------------------------

    def create_user(self, user_id: str, password: str = "", quota_bytes: int | None = None) -> UserAccount:
        from ..config import DEFAULT_QUOTA_BYTES

        quota = quota_bytes if quota_bytes is not None else DEFAULT_QUOTA_BYTES
        salt = secrets.token_hex(8)
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO users(user_id, quota_bytes, mydb_created, password_salt, password_hash)"
                " VALUES (?, ?, COALESCE((SELECT mydb_created FROM users WHERE user_id = ?), 0), ?, ?)",
                (user_id, quota, user_id, salt, _hash_password(password, salt)),
            )
            self._conn.commit()
        return UserAccount(user_id, quota, False)

    def get_user(self, user_id: str) -> UserAccount:
        with self._lock:
            row = self._conn.execute("SELECT * FROM users WHERE user_id = ?", (user_id,)).fetchone()
        if row is None:
            raise UnknownUser(f"no such user: {user_id}")
        return UserAccount(row["user_id"], row["quota_bytes"], bool(row["mydb_created"]))

    def user_exists(self, user_id: str) -> bool:
        with self._lock:
            row = self._conn.execute("SELECT 1 FROM users WHERE user_id = ?", (user_id,)).fetchone()
        return row is not None

    def authenticate(self, user_id: str, password: str) -> UserAccount:
        with self._lock:
            row = self._conn.execute("SELECT * FROM users WHERE user_id = ?", (user_id,)).fetchone()
        if row is None or _hash_password(password, row["password_salt"]) != row["password_hash"]:
            raise AuthFailed("bad user or password")
        return UserAccount(row["user_id"], row["quota_bytes"], bool(row["mydb_created"]))

    def set_mydb_created(self, user_id: str) -> None:
        with self._lock:
            self._conn.execute("UPDATE users SET mydb_created = 1 WHERE user_id = ?", (user_id,))
            self._conn.commit()

    def set_quota(self, user_id: str, quota_bytes: int) -> None:
        if quota_bytes <= 0:
            raise ValueError("quota_bytes must be positive")
        with self._lock:
            self._conn.execute("UPDATE users SET quota_bytes = ? WHERE user_id = ?", (quota_bytes, user_id))
            self._conn.commit()

    # -- jobs -------------------------------------------------------------

    def create_job(
        self,
        user_id: str,
        query_text: str,
        queue: str,
        target: JobTarget,
        *,
        autocomplete: bool = False,
        fingerprint: str | None = None,
        parent_job: int | None = None,
        promotion_count: int = 0,
    ) -> JobRecord:
        if not self.user_exists(user_id):
            raise UnknownUser(f"no such user: {user_id}")
        spec = self.queues.get(queue)
        if spec is None:
            raise UnknownQueue(f"no such queue: {queue}")
        if spec.requires_mydb_target and target.kind is not TargetKind.INTO_MYDB:
            raise TargetRequired(
                f"queue {queue} requires results to be written into MyDB (select ... into MyDB.<table>)"
            )
        submitted = self._clock()
        with self._lock:
            cur = self._conn.execute(
                "INSERT INTO jobs(user_id, queue, query_text, state, target_kind, target_table,"
                " target_format, submitted_at, rows_produced, parent_job, promotion_count,"
                " autocomplete, fingerprint)"
                " VALUES (?, ?, ?, ?, ?, ?, ?, ?, 0, ?, ?, ?, ?)",
                (
                    user_id,
                    queue,
                    query_text,
                    JobState.SUBMITTED.value,
                    target.kind.value,
                    target.table,
                    target.format,
                    submitted,
                    parent_job,
                    promotion_count,
                    int(autocomplete),
                    fingerprint,
                ),
            )
            self._conn.commit()
            job_id = cur.lastrowid
        return self.get_job(job_id)

    def get_job(self, job_id: int) -> JobRecord:
        with self._lock:
            row = self._conn.execute("SELECT * FROM jobs WHERE job_id = ?", (job_id,)).fetchone()
        if row is None:
            raise UnknownJob(f"no such job: {job_id}")
        _check_timestamps(row)
        return _row_to_record(row)

    def transition(
        self,
        job_id: int,
        to: JobState,
        *,
        rows_produced: int | None = None,
        output_url: str | None = None,
        error: str | None = None,
    ) -> JobRecord:
        """Apply one state-machine edge with check-and-set semantics.

        Entering STARTED stamps started_at; entering any terminal state
        stamps finished_at. Raises IllegalTransition when the edge is not
        in the machine, UnknownJob when the id is unknown.
        """
        with self._lock:
            row = self._conn.execute("SELECT * FROM jobs WHERE job_id = ?", (job_id,)).fetchone()
            if row is None:
                raise UnknownJob(f"no such job: {job_id}")
            current = JobState(row["state"])
            check_edge(current, to)
            now = self._clock()
            sets = ["state = ?"]
            params: list = [to.value]
            if to is JobState.STARTED:
                sets.append("started_at = ?")
                params.append(max(now, row["submitted_at"]))
            if to in TERMINAL_STATES:
                sets.append("finished_at = ?")
                floor = row["started_at"] if row["started_at"] is not None else row["submitted_at"]
                params.append(max(now, floor))
            if rows_produced is not None:
                sets.append("rows_produced = ?")
                params.append(rows_produced)
            if output_url is not None:
                sets.append("output_url = ?")
                params.append(output_url)
            if error is not None:
                sets.append("error = ?")
                params.append(error)
            params.extend([job_id, current.value])
            cur = self._conn.execute(
                f"UPDATE jobs SET {', '.join(sets)} WHERE job_id = ? AND state = ?", params
            )
            if cur.rowcount != 1:
                self._conn.rollback()
                raise IllegalTransition(f"job {job_id} state changed concurrently")
            self._conn.commit()
        record = self.get_job(job_id)
        if record.output_url is not None:
            assert record.state is JobState.SUCCEEDED and record.target.kind in (
                TargetKind.EXTRACT_FILE,
                TargetKind.RETURN_ROWS,
            ), f"job {job_id}: output_url set outside SUCCEEDED extract/return job"
        return record

    def list_jobs(
        self,
        user_id: str,
        *,
        state: JobState | None = None,
        queue: str | None = None,
        submitted_after: int | None = None,
        submitted_before: int | None = None,
    ) -> list[JobRecord]:
        """The user's jobs, newest first; filters narrow conjunctively."""
        if not self.user_exists(user_id):
            raise UnknownUser(f"no such user: {user_id}")
        clauses = ["user_id = ?"]
        params: list = [user_id]
        if state is not None:
            clauses.append("state = ?")
            params.append(state.value)
        if queue is not None:
            clauses.append("queue = ?")
            params.append(queue)
        if submitted_after is not None:
            clauses.append("submitted_at >= ?")
            params.append(submitted_after)
        if submitted_before is not None:
            clauses.append("submitted_at <= ?")
            params.append(submitted_before)
        with self._lock:
            rows = self._conn.execute(
                f"SELECT * FROM jobs WHERE {' AND '.join(clauses)} ORDER BY job_id DESC", params
            ).fetchall()
        for row in rows:
            _check_timestamps(row)
        return [_row_to_record(r) for r in rows]

    def resubmit(self, job_id: int) -> JobRecord:
        """Clone a terminal job into a fresh SUBMITTED record."""
        original = self.get_job(job_id)
        if not original.is_terminal():
            raise NotTerminal(f"job {job_id} is {original.state.value}, not terminal")
        return self.create_job(
            original.user_id,
            original.query_text,
            original.queue,
            original.target,
            autocomplete=original.autocomplete,
            fingerprint=original.fingerprint,
            parent_job=original.job_id,
        )

    def queue_position(self, job: JobRecord) -> int:
        """Earlier (smaller job_id) non-terminal jobs in the same queue."""
        terminal = tuple(s.value for s in TERMINAL_STATES)
        with self._lock:
            row = self._conn.execute(
                f"SELECT COUNT(*) AS n FROM jobs WHERE queue = ? AND job_id < ?"
                f" AND state NOT IN ({','.join('?' * len(terminal))})",
                (job.queue, job.job_id, *terminal),
            ).fetchone()
        return row["n"]

    def durations_for_fingerprint(self, fingerprint: str) -> list[float]:
        """Wall-clock seconds of SUCCEEDED jobs sharing the fingerprint."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT started_at, finished_at FROM jobs WHERE fingerprint = ? AND state = ?"
                " AND started_at IS NOT NULL AND finished_at IS NOT NULL",
                (fingerprint, JobState.SUCCEEDED.value),
            ).fetchall()
        return [(r["finished_at"] - r["started_at"]) / 1000.0 for r in rows]

    def nonterminal_jobs(self, states: Iterable[JobState] = (JobState.SUBMITTED, JobState.STARTED)) -> list[JobRecord]:
        values = tuple(s.value for s in states)
        with self._lock:
            rows = self._conn.execute(
                f"SELECT * FROM jobs WHERE state IN ({','.join('?' * len(values))}) ORDER BY job_id",
                values,
            ).fetchall()
        return [_row_to_record(r) for r in rows]

    def recover_orphans(self) -> list[JobRecord]:
        """Fail jobs left STARTED by a previous process (crash recovery)."""
        recovered = []
        for job in self.nonterminal_jobs(states=(JobState.STARTED,)):
            recovered.append(
                self.transition(job.job_id, JobState.FAILED, error="orphaned by restart")
            )
        return recovered
