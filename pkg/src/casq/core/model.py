"""Job records, the job state machine, queue specs, and user accounts."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from ..config import DEFAULT_QUOTA_BYTES, QueueConfig
from ..errors import IllegalTransition


class JobState(str, Enum):
    SUBMITTED = "SUBMITTED"
    STARTED = "STARTED"
    SUCCEEDED = "SUCCEEDED"
    FAILED = "FAILED"
    KILLED = "KILLED"
    CANCELLED = "CANCELLED"
    PROMOTED = "PROMOTED"


TERMINAL_STATES = frozenset(
    {JobState.SUCCEEDED, JobState.FAILED, JobState.KILLED, JobState.CANCELLED, JobState.PROMOTED}
)

# SUBMITTED -> CANCELLED covers user cancellation of a job that never ran;
# every other terminal is only reachable from STARTED.
LEGAL_TRANSITIONS: dict[JobState, frozenset[JobState]] = {
    JobState.SUBMITTED: frozenset({JobState.STARTED, JobState.CANCELLED}),
    JobState.STARTED: frozenset(
        {JobState.SUCCEEDED, JobState.FAILED, JobState.KILLED, JobState.CANCELLED, JobState.PROMOTED}
    ),
    JobState.SUCCEEDED: frozenset(),
    JobState.FAILED: frozenset(),
    JobState.KILLED: frozenset(),
    JobState.CANCELLED: frozenset(),
    JobState.PROMOTED: frozenset(),
}


def check_edge(current: JobState, to: JobState) -> None:
    if to not in LEGAL_TRANSITIONS[current]:
        raise IllegalTransition(f"no edge {current.value} -> {to.value}")


class TargetKind(str, Enum):
    RETURN_ROWS = "RETURN_ROWS"
    INTO_MYDB = "INTO_MYDB"
    EXTRACT_FILE = "EXTRACT_FILE"


@dataclass(frozen=True)
class JobTarget:
    """Where a job's result goes: back to the caller, into MyDB, or a file."""

    kind: TargetKind
    table: str | None = None
    format: str | None = None

    @classmethod
    def return_rows(cls) -> "JobTarget":
        return cls(TargetKind.RETURN_ROWS)

    @classmethod
    def into_mydb(cls, table: str) -> "JobTarget":
        return cls(TargetKind.INTO_MYDB, table=table)

    @classmethod
    def extract_file(cls, table: str, format: str) -> "JobTarget":
        return cls(TargetKind.EXTRACT_FILE, table=table, format=format)


@dataclass
class JobRecord:
    """One row of the administrative jobs table."""

    job_id: int
    user_id: str
    queue: str
    query_text: str
    state: JobState
    target: JobTarget
    submitted_at: int
    started_at: int | None = None
    finished_at: int | None = None
    rows_produced: int = 0
    output_url: str | None = None
    error: str | None = None
    parent_job: int | None = None
    promotion_count: int = 0
    autocomplete: bool = False
    fingerprint: str | None = None

    def is_terminal(self) -> bool:
        return self.state in TERMINAL_STATES

    def clone_for_resubmit(self) -> "JobRecord":
        return replace(
            self,
            job_id=0,
            state=JobState.SUBMITTED,
            started_at=None,
            finished_at=None,
            rows_produced=0,
            output_url=None,
            error=None,
            parent_job=self.job_id,
            promotion_count=0,
        )


@dataclass(frozen=True)
class QueueSpec:
    """A named queue with a hard time limit and a bounded worker pool."""

    name: str
    time_limit: float
    max_concurrency: int
    next_queue: str | None = None
    requires_mydb_target: bool = False

    @classmethod
    def from_config(cls, q: QueueConfig) -> "QueueSpec":
        return cls(q.name, q.time_limit, q.max_concurrency, q.next_queue, q.requires_mydb_target)


class QueueRegistry:
    """Validated set of query queues, ordered by increasing time limit.

    The promotion chain invariants hold for the query queues; special
    queues (the extraction queue) sit outside the chain and never promote.
    """

    def __init__(self, queues: list[QueueSpec], special: list[QueueSpec] | None = None):
        if not queues:
            raise ValueError("at least one query queue is required")
        ordered = sorted(queues, key=lambda q: q.time_limit)
        limits = [q.time_limit for q in ordered]
        if len(set(limits)) != len(limits):
            raise ValueError("queue time limits must be strictly increasing")
        by_name = {q.name: q for q in ordered}
        if len(by_name) != len(ordered):
            raise ValueError("queue names must be unique")
        for q in ordered:
            if q.next_queue is not None:
                succ = by_name.get(q.next_queue)
                if succ is None:
                    raise ValueError(f"queue {q.name} promotes to unknown queue {q.next_queue}")
                if succ.time_limit <= q.time_limit:
                    raise ValueError(f"queue {q.name} must promote to a larger time limit")
        for q in ordered[1:]:
            if not q.requires_mydb_target:
                raise ValueError(f"queue {q.name} must require a MyDB target (only the shortest may not)")
        self.query_queues = ordered
        self.special = {q.name: q for q in (special or [])}
        self._by_name = dict(by_name)
        self._by_name.update(self.special)

    def get(self, name: str) -> QueueSpec | None:
        return self._by_name.get(name)

    @property
    def shortest(self) -> QueueSpec:
        return self.query_queues[0]

    @property
    def longest(self) -> QueueSpec:
        return self.query_queues[-1]

    def chain_length(self) -> int:
        return len(self.query_queues)

    def __iter__(self):
        return iter(self.query_queues)


@dataclass
class UserAccount:
    user_id: str
    quota_bytes: int = DEFAULT_QUOTA_BYTES
    mydb_created: bool = False

    def __post_init__(self):
        if self.quota_bytes <= 0:
            raise ValueError("quota_bytes must be positive")
