import logging
import math
from typing import Any, Dict, Iterable, Optional

import pandas as pd
from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import Session, sessionmaker

from config import DATABASE_ECHO, DATABASE_URL
from utils.errors import ConfigError
from .models import Base, ExperimentRun, ResultRow

logger = logging.getLogger(__name__)

RESULT_FIELDS = ("method", "N", "trial", "delta", "err1", "runtime_seconds", "sweeps",
                 "final_off", "dropped_points", "converged", "status", "message")


def get_engine(url: Optional[str] = None) -> Engine:
    url = url or DATABASE_URL
    if not url:
        raise ConfigError("no database URL configured (set CCA_DATABASE_URL or pass --db)")
    return create_engine(url, echo=DATABASE_ECHO)


def init_database(url: Optional[str] = None) -> sessionmaker:
    """Create the ledger tables and return a session factory"""
    engine = get_engine(url)
    Base.metadata.create_all(bind=engine)
    logger.info("results ledger ready at %s", engine.url)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


def get_db_session(url: Optional[str] = None) -> Session:
    return init_database(url)()


def _nullable(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def save_experiment(session: Session, config: Dict[str, Any], records: Iterable[Any]) -> ExperimentRun:
    """Store a run with all its records; returns the persisted run"""
    rows = [record if isinstance(record, dict) else record.to_dict() for record in records]
    run = ExperimentRun(
        model=config.get("model"),
        generator=config.get("generator", {}),
        config={key: value for key, value in config.items() if key != "generator"},
        seed=int(config.get("seed", 0)),
        num_records=len(rows),
        num_failures=sum(1 for row in rows if row.get("status") == "failed"),
    )
    run.results = [ResultRow(**{key: _nullable(row.get(key)) for key in RESULT_FIELDS}) for row in rows]
    try:
        session.add(run)
        session.commit()
    except SQLAlchemyError:
        session.rollback()
        logger.exception("could not store experiment run")
        raise
    logger.info("stored experiment run %d with %d records", run.id, len(rows))
    return run


def load_results(session: Session, run_id: int) -> pd.DataFrame:
    """Records of one run as a DataFrame, in insertion order"""
    run = session.get(ExperimentRun, run_id)
    if run is None:
        raise ConfigError(f"no experiment run with id {run_id}")
    return pd.DataFrame(
        [{key: getattr(row, key) for key in RESULT_FIELDS} for row in run.results],
        columns=list(RESULT_FIELDS),
    )
