from __future__ import annotations

import logging
from datetime import datetime
from typing import Iterable, Optional

from sqlalchemy.exc import SQLAlchemyError

from database import session_factory
from models import Artifact, Run

logger = logging.getLogger(__name__)


def record_run(
    url: Optional[str],
    *,
    scenario: str,
    seed: int,
    status: str,
    exit_code: int,
    output_dir: str,
    n_samples: int,
    excess_db: float,
    metrics: dict,
    artifacts: Iterable[dict] = (),
    manifest_sha256: Optional[str] = None,
    error: Optional[str] = None,
    started_at: Optional[datetime] = None,
) -> Optional[int]:
    """
    Store one pipeline run and its artifact hashes. Best-effort: a ledger failure
    is logged and never changes the outcome of the run.
    """
    try:
        db = session_factory(url)()
    except SQLAlchemyError:
        logger.exception("Ledger: cannot open run database")
        return None
    try:
        run = Run(
            scenario=scenario,
            seed=str(seed),
            status=status,
            exit_code=exit_code,
            output_dir=output_dir,
            manifest_sha256=manifest_sha256,
            n_samples=n_samples,
            excess_db=excess_db,
            sigma0_hat=metrics.get("sigma0_hat"),
            overlap_c=metrics.get("C"),
            overlap_d1=metrics.get("D1"),
            overlap_d2=metrics.get("D2"),
            error=error,
            started_at=started_at or datetime.utcnow(),
            finished_at=datetime.utcnow(),
        )
        run.artifacts = [Artifact(path=a["path"], kind=a["kind"], sha256=a["sha256"]) for a in artifacts]
        db.add(run)
        db.commit()
        db.refresh(run)
        return int(run.id)
    except SQLAlchemyError:
        db.rollback()
        logger.exception("Ledger: failed to record run %s", scenario)
        return None
    finally:
        db.close()


def list_runs(url: Optional[str] = None, *, limit: int = 20, scenario: Optional[str] = None) -> list[dict]:
    db = session_factory(url)()
    try:
        q = db.query(Run)
        if scenario:
            q = q.filter(Run.scenario == scenario)
        rows = q.order_by(Run.id.desc()).limit(limit).all()
        return [
            {
                "id": r.id,
                "scenario": r.scenario,
                "seed": r.seed,
                "status": r.status,
                "exit_code": r.exit_code,
                "output_dir": r.output_dir,
                "C": r.overlap_c,
                "D1": r.overlap_d1,
                "D2": r.overlap_d2,
                "artifacts": len(r.artifacts),
                "finished_at": r.finished_at.isoformat() if r.finished_at else None,
            }
            for r in rows
        ]
    finally:
        db.close()
