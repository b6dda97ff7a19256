from __future__ import annotations

import pytest

from casq.core import JobStore, QueueRegistry, QueueSpec


def make_registry(short_limit: float = 60.0, long_limit: float = 28800.0) -> QueueRegistry:
    return QueueRegistry(
        [
            QueueSpec("short", short_limit, 8, next_queue="long", requires_mydb_target=False),
            QueueSpec("long", long_limit, 2, next_queue=None, requires_mydb_target=True),
        ],
        special=[QueueSpec("extract", 600.0, 2)],
    )


@pytest.fixture
def registry() -> QueueRegistry:
    return make_registry()


@pytest.fixture
def store(tmp_path, registry) -> JobStore:
    s = JobStore(tmp_path / "store.db", registry)
    s.create_user("alice", password="pw")
    s.create_user("bob", password="pw")
    yield s
    s.close()
