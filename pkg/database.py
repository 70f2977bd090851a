from __future__ import annotations

import os
from functools import lru_cache
from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker


def get_database_url(url: Optional[str] = None) -> str:
    """
    Run-ledger database URL.

    An explicit url wins, then BHD_RUNS_DATABASE_URL. Hosted Postgres URLs given
    as postgres:// or postgresql:// are rewritten to the psycopg (v3) driver.
    """
    url = url or os.getenv("BHD_RUNS_DATABASE_URL")

    if not url:
        # Local fallback
        return "sqlite:///./bhd_runs.db"

    if url.startswith("postgres://"):
        return url.replace("postgres://", "postgresql+psycopg://", 1)

    if url.startswith("postgresql://"):
        return url.replace("postgresql://", "postgresql+psycopg://", 1)

    return url


@lru_cache(maxsize=8)
def get_engine(url: str) -> Engine:
    # SQLite needs check_same_thread, Postgres does NOT
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    engine = create_engine(url, pool_pre_ping=True, connect_args=connect_args)
    Base.metadata.create_all(bind=engine)
    return engine


def session_factory(url: Optional[str] = None) -> sessionmaker:
    return sessionmaker(bind=get_engine(get_database_url(url)), autocommit=False, autoflush=False)


Base = declarative_base()
