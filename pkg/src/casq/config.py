"""Node configuration: store path, queues, quotas, wheel, trust, files.

Loaded from a JSON file whose top-level sections mirror the dotted keys
(``store.path`` lives at ``{"store": {"path": ...}}``). Every section has
a working default so a node can boot from an empty directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

DEFAULT_QUOTA_BYTES = 100 * 2**20
DEFAULT_GRACE_FACTOR = 1.05
DEFAULT_SUGGEST_FACTOR = 2.0
DEFAULT_BLOCK_ROWS = 4096
DEFAULT_FILE_TTL_DAYS = 7
DEFAULT_LOADER_PARALLELISM = 2
DEFAULT_FEDERATION_TIMEOUT_S = 5.0
EXTRACT_QUEUE_NAME = "extract"


@dataclass
class QueueConfig:
    name: str
    time_limit: float
    max_concurrency: int
    next_queue: str | None = None
    requires_mydb_target: bool = False


@dataclass
class TrustEntry:
    node_id: str
    verify_key_hex: str
    endpoint: str | None = None


@dataclass
class UserSeed:
    user_id: str
    password: str
    quota_bytes: int | None = None


def default_queues() -> list[QueueConfig]:
    return [
        QueueConfig("short", 60.0, 8, next_queue="long", requires_mydb_target=False),
        QueueConfig("long", 28800.0, 2, next_queue=None, requires_mydb_target=True),
    ]


@dataclass
class Config:
    store_path: str = "casq-data/store.db"
    storage_root: str = "casq-data"
    queues: list[QueueConfig] = field(default_factory=default_queues)
    extract_time_limit: float = 600.0
    extract_concurrency: int = 2
    quota_default_bytes: int = DEFAULT_QUOTA_BYTES
    grace_factor: float = DEFAULT_GRACE_FACTOR
    suggest_factor: float = DEFAULT_SUGGEST_FACTOR
    wheel_block_rows: int = DEFAULT_BLOCK_ROWS
    wheel_entry_points: int | None = None
    indexed_columns: dict[str, list[str]] = field(default_factory=dict)
    files_dir: str = "casq-data/files"
    files_ttl_days: int = DEFAULT_FILE_TTL_DAYS
    node_id: str = "local"
    signing_key_hex: str | None = None
    trust: list[TrustEntry] = field(default_factory=list)
    users: list[UserSeed] = field(default_factory=list)
    loader_parallelism: int = DEFAULT_LOADER_PARALLELISM
    federation_timeout_s: float = DEFAULT_FEDERATION_TIMEOUT_S

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Config":
        cfg = cls()
        store = data.get("store", {})
        cfg.store_path = store.get("path", cfg.store_path)
        cfg.storage_root = store.get("root", str(Path(cfg.store_path).parent))
        if "queues" in data:
            cfg.queues = [
                QueueConfig(
                    name=q["name"],
                    time_limit=float(q["time_limit"]),
                    max_concurrency=int(q.get("max_concurrency", 1)),
                    next_queue=q.get("next_queue"),
                    requires_mydb_target=bool(q.get("requires_mydb_target", False)),
                )
                for q in data["queues"]
            ]
        extract = data.get("extract", {})
        cfg.extract_time_limit = float(extract.get("time_limit", cfg.extract_time_limit))
        cfg.extract_concurrency = int(extract.get("max_concurrency", cfg.extract_concurrency))
        quota = data.get("quota", {})
        cfg.quota_default_bytes = int(quota.get("default_bytes", cfg.quota_default_bytes))
        sched = data.get("scheduler", {})
        cfg.grace_factor = float(sched.get("grace_factor", cfg.grace_factor))
        cfg.suggest_factor = float(sched.get("suggest_factor", cfg.suggest_factor))
        wheel = data.get("wheel", {})
        cfg.wheel_block_rows = int(wheel.get("block_rows", cfg.wheel_block_rows))
        if "entry_points" in wheel:
            cfg.wheel_entry_points = int(wheel["entry_points"])
        cfg.indexed_columns = {
            t: list(cols) for t, cols in data.get("indexed_columns", {}).items()
        }
        files = data.get("files", {})
        cfg.files_dir = files.get("dir", cfg.files_dir)
        cfg.files_ttl_days = int(files.get("ttl_days", cfg.files_ttl_days))
        node = data.get("node", {})
        cfg.node_id = node.get("id", cfg.node_id)
        cfg.signing_key_hex = node.get("signing_key_hex")
        cfg.trust = [
            TrustEntry(
                node_id=t["node_id"],
                verify_key_hex=t["verify_key_hex"],
                endpoint=t.get("endpoint"),
            )
            for t in data.get("trust", [])
        ]
        cfg.users = [
            UserSeed(
                user_id=u["user_id"],
                password=u.get("password", ""),
                quota_bytes=u.get("quota_bytes"),
            )
            for u in data.get("users", [])
        ]
        loader = data.get("loader", {})
        cfg.loader_parallelism = int(loader.get("parallelism", cfg.loader_parallelism))
        federation = data.get("federation", {})
        cfg.federation_timeout_s = float(federation.get("timeout_s", cfg.federation_timeout_s))
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "Config":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
