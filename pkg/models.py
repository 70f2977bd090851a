from __future__ import annotations

from datetime import datetime

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import relationship

from database import Base


class Run(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)

    scenario = Column(String, nullable=False, index=True)
    # Stored as text: seeds span the full unsigned 64-bit range.
    seed = Column(String, nullable=False)
    status = Column(String, nullable=False)  # "complete" | "partial"
    exit_code = Column(Integer, nullable=False, default=0)
    output_dir = Column(String, nullable=False)
    manifest_sha256 = Column(String, nullable=True)

    n_samples = Column(Integer, nullable=False)
    excess_db = Column(Float, nullable=False)

    # Headline metrics (null when the stage did not run).
    sigma0_hat = Column(Float, nullable=True)
    overlap_c = Column(Float, nullable=True)
    overlap_d1 = Column(Float, nullable=True)
    overlap_d2 = Column(Float, nullable=True)

    error = Column(Text, nullable=True)

    started_at = Column(DateTime, default=datetime.utcnow, nullable=False)
    finished_at = Column(DateTime, nullable=True)

    artifacts = relationship("Artifact", back_populates="run", cascade="all, delete-orphan")


class Artifact(Base):
    __tablename__ = "artifacts"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False, index=True)

    path = Column(String, nullable=False)
    kind = Column(String, nullable=False)  # "records" | "density1d" | "density2d" | "correlation" | "json"
    sha256 = Column(String, nullable=False)

    run = relationship("Run", back_populates="artifacts")
