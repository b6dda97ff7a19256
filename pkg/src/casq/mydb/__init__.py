from .groups import Group, GroupRegistry, MemberStatus
from .storage import MyDbInfo, MyDbManager, TableInfo, TableWriter

__all__ = [
    "Group",
    "GroupRegistry",
    "MemberStatus",
    "MyDbInfo",
    "MyDbManager",
    "TableInfo",
    "TableWriter",
]
