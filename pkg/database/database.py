"""
Database configuration and models for edit run records
"""

import os
from datetime import datetime
from typing import Dict, Optional

from sqlalchemy import JSON, Column, DateTime, Integer, String, Text, create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker

# Database configuration
DEFAULT_DATABASE_URL = os.getenv("DATABASE_URL", "sqlite:///./smartedit_runs.db")

Base = declarative_base()

_engines: Dict[str, Engine] = {}


class Run(Base):
    """One `edit` invocation and the state of its pipeline"""
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)

    # Request
    instruction = Column(Text, nullable=False)
    image_path = Column(String, nullable=False)
    category = Column(String, nullable=True)

    # pending, processing, completed, failed
    status = Column(String, default="pending")
    run_dir = Column(String, nullable=True)
    failed_stage = Column(String, nullable=True)
    stage_timings = Column(JSON, nullable=True)
    error_message = Column(Text, nullable=True)

    # Timestamps
    created_at = Column(DateTime, default=datetime.utcnow)
    started_at = Column(DateTime, nullable=True)
    completed_at = Column(DateTime, nullable=True)


def get_engine(database_url: Optional[str] = None) -> Engine:
    """Engine per URL; SQLite connections may be shared across threads"""
    url = database_url or DEFAULT_DATABASE_URL
    if url not in _engines:
        if url.startswith("sqlite"):
            _engines[url] = create_engine(url, connect_args={"check_same_thread": False})
        else:
            _engines[url] = create_engine(url)
    return _engines[url]


def get_session_factory(database_url: Optional[str] = None) -> sessionmaker:
    return sessionmaker(autocommit=False, autoflush=False, bind=get_engine(database_url))


def init_database(database_url: Optional[str] = None) -> sessionmaker:
    """Create tables if needed and return a session factory"""
    engine = get_engine(database_url)
    Base.metadata.create_all(bind=engine)
    return get_session_factory(database_url)


def close_database(database_url: Optional[str] = None) -> None:
    engine = _engines.pop(database_url or DEFAULT_DATABASE_URL, None)
    if engine is not None:
        engine.dispose()
