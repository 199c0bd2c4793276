"""
Result persistence and reporting.

Every run writes results/<name>/ with config.json, summary.json and one CSV per table.
CSVs are written by pandas with a fixed column order and round-trip float formatting, so
reruns with the same seed are byte-identical. `build_report` loads every trials table into
DuckDB and aggregates success rates across experiments.
"""

import json
import logging
import os
from glob import glob
from typing import Any, Dict, List

import duckdb
import numpy as np
import pandas as pd

from .exceptions import ConfigError
from .harness import SCHEMA_VERSION, TRIAL_COLUMNS, ExperimentConfig, ExperimentResult

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
NULLABLE_FLAGS = ("full_spark", "oracle_recovered", "agree")
SUCCESS_LEVEL = 0.95


def _json_default(value: Any):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def write_json(path: str, data: Dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def write_table(path: str, df: pd.DataFrame) -> None:
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_result(out_root: str, cfg: ExperimentConfig, result: ExperimentResult) -> str:
    """
    Persist a result under out_root/<name>/.

    Returns:
        The experiment directory
    """
    out_dir = os.path.join(out_root, cfg.name)
    os.makedirs(out_dir, exist_ok=True)
    write_json(os.path.join(out_dir, "config.json"), {
        "schema_version": SCHEMA_VERSION,
        **cfg.to_dict(),
    })
    for stem, df in result.tables.items():
        write_table(os.path.join(out_dir, f"{stem}.csv"), df)
        logger.info(f"Wrote {len(df)} rows to {stem}.csv")
    write_json(os.path.join(out_dir, "summary.json"), result.summary)
    return out_dir


def read_summary(out_dir: str) -> Dict[str, Any]:
    with open(os.path.join(out_dir, "summary.json"), "r", encoding="utf-8") as f:
        return json.load(f)


# ===== DuckDB report =====

def insert_frame(conn, table_name: str, df: pd.DataFrame) -> None:
    """Insert a DataFrame into a DuckDB table, creating it if needed."""
    if df.empty:
        return
    tables = [t[0] for t in conn.execute("SHOW TABLES").fetchall()]
    if table_name not in tables:
        conn.execute(f"CREATE TABLE \"{table_name}\" AS SELECT * FROM df")
    else:
        conn.execute(f"INSERT INTO \"{table_name}\" SELECT * FROM df")


def load_results(conn, results_dir: str) -> Dict[str, int]:
    """
    Load every <experiment>/trials.csv and nsp_corpus.csv below results_dir.

    Returns:
        Dict of table_name -> rows loaded
    """
    if not os.path.isdir(results_dir):
        raise ConfigError(f"results directory not found: {results_dir}")
    counts = {"trials": 0, "nsp_corpus": 0}
    for stem in counts:
        for path in sorted(glob(os.path.join(results_dir, "*", f"{stem}.csv"))):
            df = pd.read_csv(path)
            if stem == "trials":
                df = df[TRIAL_COLUMNS]
            else:
                for col in NULLABLE_FLAGS:
                    df[col] = df[col].astype("boolean")
            df.insert(0, "experiment", os.path.basename(os.path.dirname(path)))
            insert_frame(conn, stem, df)
            counts[stem] += len(df)
    logger.info(f"Loaded {counts['trials']} trials and {counts['nsp_corpus']} corpus rows")
    return counts


def build_report(results_dir: str, conn=None) -> Dict[str, pd.DataFrame]:
    """
    Aggregate results across experiments.

    Returns:
        {"cells": per-cell success rates, "m95": smallest m reaching 95% success per
        (experiment, law, s, eps), "nsp": certificate/oracle agreement per experiment};
        tables without source rows are omitted
    """
    own = conn is None
    conn = conn or duckdb.connect(":memory:")
    try:
        counts = load_results(conn, results_dir)
        report = {}
        if counts["trials"]:
            report["cells"] = conn.execute("""
                SELECT experiment, law, m, s, eps, tail,
                       COUNT(*) AS trials,
                       AVG(CAST(success AS DOUBLE)) AS success_rate,
                       MEDIAN(err_x) AS median_err_x
                FROM trials
                GROUP BY experiment, law, m, s, eps, tail
                ORDER BY experiment, law, s, eps, tail, m
            """).df()
            report["m95"] = conn.execute(f"""
                SELECT experiment, law, s, eps, MIN(m) AS m95
                FROM (
                    SELECT experiment, law, m, s, eps,
                           AVG(CAST(success AS DOUBLE)) AS rate
                    FROM trials
                    WHERE tail = 0
                    GROUP BY experiment, law, m, s, eps
                )
                WHERE rate >= {SUCCESS_LEVEL}
                GROUP BY experiment, law, s, eps
                ORDER BY experiment, law, s, eps
            """).df()
        if counts["nsp_corpus"]:
            report["nsp"] = conn.execute("""
                SELECT experiment,
                       COUNT(*) AS pairs,
                       COUNT(agree) AS decided,
                       AVG(CAST(agree AS DOUBLE)) AS agreement,
                       SUM(CAST(boundary AS INTEGER)) AS boundary
                FROM nsp_corpus
                GROUP BY experiment
                ORDER BY experiment
            """).df()
        return report
    finally:
        if own:
            conn.close()


def format_report(report: Dict[str, pd.DataFrame]) -> str:
    if not report:
        return "no results found"
    parts: List[str] = []
    for name, df in report.items():
        parts.append(f"== {name} ==")
        parts.append(df.to_string(index=False))
    return "\n".join(parts)
