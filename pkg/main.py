#!/usr/bin/env python3
"""
l1-synthesis experiment runner for Keboola

Runs one or more l1synth experiments and loads their tables into Keboola Storage.

Configuration (parameters):
- experiments: List of ExperimentConfig objects (a single object under `experiment` also works)
- threads: Worker processes for trial grids (default 1)
- output_bucket: Destination bucket in Keboola Storage (default: out.c-l1synth)
- set_primary_keys: Whether to set primary keys in manifests (default: true)

Output tables are named <experiment>_<table>, e.g. phase_gaussian_trials or lemma51_lemma51.
Summaries go to out/files as <experiment>_summary.json.

State file tracks:
- last_run: Last successful run timestamp
- table_counts: Number of rows exported per table
- seeds: master_seed of every experiment that ran
"""

import logging
import os
import re
import time
from datetime import datetime

import duckdb

from l1synth import ExperimentConfig, L1SynthError, run_experiment
from l1synth.results import insert_frame, write_json


class RunProfiler:
    """Wall-clock time per experiment and per export step"""

    def __init__(self):
        self.start_time = time.time()
        self.experiments = {}  # {name: {"kind": str, "time": float, "rows": int}}
        self.processing = {
            "duckdb_inserts": 0.0,
            "csv_export": 0.0,
        }

    def format_duration(self, seconds):
        """Format seconds into human-readable string"""
        if seconds < 60:
            return f"{seconds:.1f}s"
        minutes = int(seconds // 60)
        secs = seconds % 60
        if minutes < 60:
            return f"{minutes}m {secs:.0f}s"
        hours = int(minutes // 60)
        mins = minutes % 60
        return f"{hours}h {mins}m {secs:.0f}s"

    def print_summary(self):
        """Render the time profile summary"""
        total_time = time.time() - self.start_time
        experiment_total = sum(v["time"] for v in self.experiments.values())
        processing_total = sum(self.processing.values())

        lines = [
            "",
            "=" * 50,
            "TIME PROFILE",
            "=" * 50,
            f"Total runtime: {self.format_duration(total_time)}",
            "",
            "Experiments:",
        ]
        for name, data in sorted(self.experiments.items(), key=lambda x: -x[1]["time"]):
            lines.append(
                f"  {name:30} {self.format_duration(data['time']):>8} "
                f"({data['kind']}, {data['rows']} rows)"
            )
        lines.extend([
            "",
            "Processing:",
            f"  {'DuckDB inserts':30} {self.format_duration(self.processing['duckdb_inserts']):>8}",
            f"  {'CSV export':30} {self.format_duration(self.processing['csv_export']):>8}",
            "",
            "Summary:",
        ])
        if total_time > 0:
            exp_pct = (experiment_total / total_time) * 100
            proc_pct = (processing_total / total_time) * 100
            lines.append(
                f"  Experiments total:     {self.format_duration(experiment_total):>8} "
                f"({exp_pct:.0f}%)"
            )
            lines.append(
                f"  Processing total:      {self.format_duration(processing_total):>8} "
                f"({proc_pct:.0f}%)"
            )
        lines.append("=" * 50)
        return "\n".join(lines)


# Global profiler instance
profiler = RunProfiler()

try:
    from keboola.component import CommonInterface
except ImportError:
    # For local testing
    pass

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


PRIMARY_KEYS = {
    "trials": ["cell", "trial"],
    "nsp_corpus": ["index"],
}


def table_name_for(experiment, stem):
    """Storage-safe table name <experiment>_<stem>."""
    return re.sub(r"[^A-Za-z0-9_]", "_", f"{experiment}_{stem}")


def parse_experiments(parameters):
    """
    Read experiment configs from component parameters.

    Raises:
        ConfigError: If an experiment is malformed
        ValueError: If no experiment is configured or names repeat
    """
    raw = parameters.get("experiments")
    if raw is None and "experiment" in parameters:
        raw = [parameters["experiment"]]
    if not raw:
        raise ValueError("Missing required parameter: experiments")
    configs = [ExperimentConfig.from_dict(item) for item in raw]
    names = [cfg.name for cfg in configs]
    if len(set(names)) != len(names):
        raise ValueError(f"Experiment names must be unique: {names}")
    return configs


def load_result_to_duckdb(conn, result):
    """
    Insert every table of an ExperimentResult.

    Returns:
        Dict of table_name -> primary key list (or None)
    """
    loaded = {}
    for stem, df in result.tables.items():
        name = table_name_for(result.name, stem)
        start = time.time()
        insert_frame(conn, name, df)
        profiler.processing["duckdb_inserts"] += time.time() - start
        loaded[name] = PRIMARY_KEYS.get(stem)
    return loaded


def export_duckdb_to_csv(conn, ci, output_bucket, primary_keys, set_primary_keys=True):
    """
    Export all tables from DuckDB to CSV files for Keboola.

    Args:
        conn: DuckDB connection
        ci: CommonInterface instance
        output_bucket: Destination bucket in Keboola Storage
        primary_keys: Dict of table_name -> primary key list (or None)
        set_primary_keys: Whether to set primary keys in manifests

    Returns:
        Dict of table_name -> record_count
    """
    table_names = [t[0] for t in conn.execute("SHOW TABLES").fetchall()]
    export_counts = {}

    for table_name in table_names:
        count = conn.execute(f"SELECT COUNT(*) FROM \"{table_name}\"").fetchone()[0]
        if count == 0:
            logger.info(f"Skipping empty table: {table_name}")
            export_counts[table_name] = 0
            continue

        primary_key = primary_keys.get(table_name) if set_primary_keys else None
        out_table = ci.create_out_table_definition(
            name=f"{table_name}.csv",
            destination=f"{output_bucket}.{table_name}",
            primary_key=primary_key,
            incremental=False,
            has_header=True,
        )

        csv_start = time.time()
        conn.execute(f"COPY \"{table_name}\" TO '{out_table.full_path}' (HEADER, DELIMITER ',')")
        profiler.processing["csv_export"] += time.time() - csv_start

        pk_info = f" [PK: {', '.join(primary_key)}]" if primary_key else ""
        logger.info(f"Exported {count} records from {table_name}{pk_info}")

        ci.write_manifest(out_table)
        export_counts[table_name] = count

    return export_counts


def update_state(ci, table_counts, configs):
    """Update state file for tracking"""
    state = {
        "last_run": datetime.now().isoformat(),
        "table_counts": table_counts,
        "seeds": {cfg.name: cfg.master_seed for cfg in configs},
    }
    ci.write_state_file(state)
    logger.info(f"State updated: {table_counts}")


def main():
    """Main entry point for Keboola component"""
    global profiler
    profiler = RunProfiler()  # Reset profiler for this run

    try:
        ci = CommonInterface()
        logger.info("Keboola CommonInterface initialized")

        parameters = ci.configuration.parameters
        configs = parse_experiments(parameters)
        threads = int(parameters.get("threads", 1))
        output_bucket = parameters.get("output_bucket", "out.c-l1synth")
        set_primary_keys = parameters.get("set_primary_keys", True)

        logger.info("Configuration loaded:")
        logger.info(f"  - Experiments: {[f'{c.name} ({c.kind})' for c in configs]}")
        logger.info(f"  - Threads: {threads}")
        logger.info(f"  - Output bucket: {output_bucket}")
        logger.info(f"  - Set primary keys: {set_primary_keys}")

        data_dir = ci.tables_out_path if hasattr(ci, 'tables_out_path') else '/tmp'
        duckdb_path = os.path.join(data_dir, 'l1synth_working.duckdb')
        conn = duckdb.connect(duckdb_path)
        logger.info(f"DuckDB initialized: {duckdb_path}")

        primary_keys = {}
        try:
            # Phase 1: Run experiments
            logger.info(f"\n{'='*50}")
            logger.info("PHASE 1: Running experiments")
            logger.info(f"{'='*50}")

            results = []
            for cfg in configs:
                logger.info(f"\n--- {cfg.name} ({cfg.kind}) ---")
                start = time.time()
                result = run_experiment(cfg, threads)
                profiler.experiments[cfg.name] = {
                    "kind": cfg.kind,
                    "time": time.time() - start,
                    "rows": sum(len(df) for df in result.tables.values()),
                }
                if hasattr(ci, 'files_out_path'):
                    write_json(
                        os.path.join(ci.files_out_path, f"{cfg.name}_summary.json"),
                        result.summary,
                    )
                results.append(result)

            # Phase 2: Load result tables into DuckDB
            logger.info(f"\n{'='*50}")
            logger.info("PHASE 2: Loading results into DuckDB")
            logger.info(f"{'='*50}")

            for result in results:
                primary_keys.update(load_result_to_duckdb(conn, result))

            # Phase 3: Export from DuckDB to CSV
            logger.info(f"\n{'='*50}")
            logger.info("PHASE 3: Exporting to CSV")
            logger.info(f"{'='*50}")

            export_counts = export_duckdb_to_csv(
                conn, ci, output_bucket, primary_keys, set_primary_keys
            )

        finally:
            conn.close()
            logger.info("Connection closed")

            if os.path.exists(duckdb_path):
                os.remove(duckdb_path)
                logger.info(f"Cleaned up {duckdb_path}")

        update_state(ci, export_counts, configs)

        logger.info(f"\n{'='*50}")
        logger.info("EXPORT SUMMARY")
        logger.info(f"{'='*50}")
        for table, count in export_counts.items():
            logger.info(f"  {table}: {count} rows")
        logger.info(f"  TOTAL: {sum(export_counts.values())} rows")

        logger.info(profiler.print_summary())
        logger.info("Component execution completed successfully")

        return 0

    except L1SynthError as e:
        logger.error(f"Experiment failed: {e}")
        exit(1)
    except Exception as e:
        logger.exception(f"Component execution failed: {e}")
        exit(1)


if __name__ == '__main__':
    main()
