"""
Database package for edit run records
"""

from .crud import RunCRUD
from .database import Base, Run, close_database, get_engine, get_session_factory, init_database

__all__ = [
    "Base",
    "Run",
    "RunCRUD",
    "close_database",
    "get_engine",
    "get_session_factory",
    "init_database",
]
