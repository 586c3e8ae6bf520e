"""
CRUD operations for edit run records
"""

from datetime import datetime
from typing import Any, Dict, List, Optional

from sqlalchemy import desc
from sqlalchemy.orm import Session

from .database import Run


class RunCRUD:
    @staticmethod
    def create_run(db: Session, instruction: str, image_path: str, run_dir: str = None) -> Run:
        """Create a new pending run record"""
        run = Run(instruction=instruction, image_path=image_path, run_dir=run_dir, status="pending")
        db.add(run)
        db.commit()
        db.refresh(run)
        return run

    @staticmethod
    def get_run(db: Session, run_id: int) -> Optional[Run]:
        return db.query(Run).filter(Run.id == run_id).first()

    @staticmethod
    def get_recent_runs(db: Session, skip: int = 0, limit: int = 100) -> List[Run]:
        return db.query(Run).order_by(desc(Run.created_at), desc(Run.id)).offset(skip).limit(limit).all()

    @staticmethod
    def update_run_status(
        db: Session,
        run_id: int,
        status: str,
        category: str = None,
        stage_timings: Dict[str, Any] = None,
        failed_stage: str = None,
        error_message: str = None,
    ) -> Optional[Run]:
        """Move a run through pending -> processing -> completed/failed"""
        run = db.query(Run).filter(Run.id == run_id).first()
        if run:
            run.status = status

            if status == "processing":
                run.started_at = datetime.utcnow()
            elif status in ["completed", "failed"]:
                run.completed_at = datetime.utcnow()

            if category:
                run.category = category
            if stage_timings is not None:
                run.stage_timings = stage_timings
            if failed_stage:
                run.failed_stage = failed_stage
            if error_message:
                run.error_message = error_message

            db.commit()
            db.refresh(run)
        return run
