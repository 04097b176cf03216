import logging
from pathlib import Path
from typing import Optional, Tuple

import pandas as pd

from components.reports import format_table, records_frame, summarize_results
from config import DATABASE_URL, STORAGE_CONFIG
from services.experiment import ExperimentConfig, ExperimentEngine

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.csv"
SUMMARY_FILE = "summary.csv"


def cmd_experiment(config: ExperimentConfig,
                   db_url: Optional[str] = None) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Run the sweep, write results.csv and summary.csv, optionally store the run"""
    out_dir = Path(config.out_dir or STORAGE_CONFIG["output_folder"])
    out_dir.mkdir(parents=True, exist_ok=True)

    records = ExperimentEngine(config).run()
    results = records_frame(records)
    summary = summarize_results(results)

    # single writer: all files are written after the workers finish
    results.to_csv(out_dir / RESULTS_FILE, index=False, float_format="%.17g")
    summary.to_csv(out_dir / SUMMARY_FILE, index=False, float_format="%.17g")
    failures = int((results["status"] == "failed").sum())
    logger.info("experiment wrote %d rows (%d failed) to %s", len(results), failures, out_dir)
    logger.info("median err1:\n%s", format_table(summary))

    db_url = db_url or DATABASE_URL
    if db_url:
        from database import get_db_session, save_experiment

        session = get_db_session(db_url)
        try:
            run = save_experiment(session, config.to_dict(), records)
            logger.info("experiment stored as run %d", run.id)
        finally:
            session.close()
    return results, summary
