"""Groups, invitations, and table publications for selective sharing."""

from __future__ import annotations

import sqlite3
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol

from ..errors import (
    AlreadyMember,
    DuplicateGroup,
    NotFound,
    NotInvited,
    NotMember,
    NotOwner,
    UnknownUser,
)


class MemberStatus(str, Enum):
    INVITED = "INVITED"
    ACCEPTED = "ACCEPTED"


@dataclass
class Group:
    group_id: int
    name: str
    owner: str
    members: dict[str, MemberStatus]


class UserDirectory(Protocol):
    def user_exists(self, user_id: str) -> bool: ...


_SCHEMA = """
CREATE TABLE IF NOT EXISTS groups (
    group_id INTEGER PRIMARY KEY AUTOINCREMENT,
    name TEXT NOT NULL UNIQUE,
    owner TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS members (
    group_id INTEGER NOT NULL,
    user_id TEXT NOT NULL,
    status TEXT NOT NULL CHECK (status IN ('INVITED', 'ACCEPTED')),
    PRIMARY KEY (group_id, user_id)
);
CREATE TABLE IF NOT EXISTS publications (
    owner TEXT NOT NULL,
    table_name TEXT NOT NULL,
    group_id INTEGER NOT NULL,
    PRIMARY KEY (owner, table_name, group_id)
);
"""


class GroupRegistry:
    """Linearizable group membership and publication records."""

    def __init__(self, path: str | Path, users: UserDirectory):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._users = users
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._conn.executescript(_SCHEMA)
        self._conn.commit()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    def _load(self, group_id: int) -> Group:
        row = self._conn.execute("SELECT * FROM groups WHERE group_id = ?", (group_id,)).fetchone()
        if row is None:
            raise NotFound(f"no such group: {group_id}")
        members = {
            m["user_id"]: MemberStatus(m["status"])
            for m in self._conn.execute("SELECT * FROM members WHERE group_id = ?", (group_id,))
        }
        return Group(row["group_id"], row["name"], row["owner"], members)

    def get(self, group_id: int) -> Group:
        with self._lock:
            return self._load(group_id)

    def create_group(self, owner: str, name: str) -> Group:
        if not self._users.user_exists(owner):
            raise UnknownUser(f"no such user: {owner}")
        with self._lock:
            try:
                cur = self._conn.execute(
                    "INSERT INTO groups(name, owner) VALUES (?, ?)", (name, owner)
                )
            except sqlite3.IntegrityError as exc:
                raise DuplicateGroup(f"group name already taken: {name}") from exc
            group_id = cur.lastrowid
            self._conn.execute(
                "INSERT INTO members(group_id, user_id, status) VALUES (?, ?, ?)",
                (group_id, owner, MemberStatus.ACCEPTED.value),
            )
            self._conn.commit()
            return self._load(group_id)

    def invite(self, group_id: int, inviter: str, invitee: str) -> Group:
        with self._lock:
            group = self._load(group_id)
            if inviter != group.owner:
                raise NotOwner(f"only the owner of {group.name} may invite")
            if not self._users.user_exists(invitee):
                raise UnknownUser(f"no such user: {invitee}")
            if invitee in group.members:
                raise AlreadyMember(f"{invitee} is already {group.members[invitee].value}")
            self._conn.execute(
                "INSERT INTO members(group_id, user_id, status) VALUES (?, ?, ?)",
                (group_id, invitee, MemberStatus.INVITED.value),
            )
            self._conn.commit()
            return self._load(group_id)

    def accept(self, group_id: int, user_id: str) -> Group:
        with self._lock:
            group = self._load(group_id)
            if group.members.get(user_id) is not MemberStatus.INVITED:
                raise NotInvited(f"{user_id} has no pending invitation to {group.name}")
            self._conn.execute(
                "UPDATE members SET status = ? WHERE group_id = ? AND user_id = ?",
                (MemberStatus.ACCEPTED.value, group_id, user_id),
            )
            self._conn.commit()
            return self._load(group_id)

    def member_status(self, group_id: int, user_id: str) -> MemberStatus | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT status FROM members WHERE group_id = ? AND user_id = ?",
                (group_id, user_id),
            ).fetchone()
        return MemberStatus(row["status"]) if row else None

    def require_accepted(self, group_id: int, user_id: str) -> None:
        status = self.member_status(group_id, user_id)
        if status is not MemberStatus.ACCEPTED:
            raise NotMember(f"{user_id} is not an accepted member of group {group_id}")

    def record_publication(self, owner: str, table: str, group_id: int) -> None:
        with self._lock:
            self._load(group_id)
            self._conn.execute(
                "INSERT OR IGNORE INTO publications(owner, table_name, group_id) VALUES (?, ?, ?)",
                (owner, table, group_id),
            )
            self._conn.commit()

    def publications_for(self, owner: str, table: str) -> set[int]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT group_id FROM publications WHERE owner = ? AND table_name = ?",
                (owner, table),
            ).fetchall()
        return {r["group_id"] for r in rows}

    def revoke_table(self, owner: str, table: str) -> None:
        """Drop every publication of a table (called when it is dropped)."""
        with self._lock:
            self._conn.execute(
                "DELETE FROM publications WHERE owner = ? AND table_name = ?", (owner, table)
            )
            self._conn.commit()

    def check_access(self, requester: str, owner: str, table: str) -> bool:
        """Grant iff requester owns the table or shares an ACCEPTED group
        to which the owner published it. Denial is a value, not an error.
        """
        if requester == owner:
            return True
        with self._lock:
            row = self._conn.execute(
                "SELECT 1 FROM publications p JOIN members m ON m.group_id = p.group_id"
                " WHERE p.owner = ? AND p.table_name = ? AND m.user_id = ? AND m.status = ?"
                " LIMIT 1",
                (owner, table, requester, MemberStatus.ACCEPTED.value),
            ).fetchone()
        return row is not None

    def groups_of(self, user_id: str) -> list[Group]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT group_id FROM members WHERE user_id = ?", (user_id,)
            ).fetchall()
            return [self._load(r["group_id"]) for r in rows]
