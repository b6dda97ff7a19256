from .model import (
    JobRecord,
    JobState,
    JobTarget,
    LEGAL_TRANSITIONS,
    QueueRegistry,
    QueueSpec,
    TERMINAL_STATES,
    TargetKind,
    UserAccount,
    check_edge,
)
from .store import JobStore, now_ms

__all__ = [
    "JobRecord",
    "JobState",
    "JobTarget",
    "JobStore",
    "LEGAL_TRANSITIONS",
    "QueueRegistry",
    "QueueSpec",
    "TERMINAL_STATES",
    "TargetKind",
    "UserAccount",
    "check_edge",
    "now_ms",
]
