#!/usr/bin/env python3
"""
Test the component's DuckDB load and CSV export path.

A stand-in for keboola.component's CommonInterface records table definitions, manifests
and the state file.
"""

import os
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import duckdb
import pandas as pd
import pytest

from l1synth import ConfigError, ExperimentResult
from main import (
    PRIMARY_KEYS,
    export_duckdb_to_csv,
    load_result_to_duckdb,
    parse_experiments,
    table_name_for,
    update_state,
)


class FakeTable:
    def __init__(self, full_path, name, destination, primary_key):
        self.full_path = full_path
        self.name = name
        self.destination = destination
        self.primary_key = primary_key


class FakeInterface:
    def __init__(self, out_dir):
        self.tables_out_path = str(out_dir)
        self.manifests = []
        self.state = None

    def create_out_table_definition(self, name, destination, primary_key, incremental,
                                    has_header):
        assert not incremental and has_header
        return FakeTable(os.path.join(self.tables_out_path, name), name, destination,
                         primary_key)

    def write_manifest(self, table):
        self.manifests.append(table)

    def write_state_file(self, state):
        self.state = state


def sample_result():
    trials = pd.DataFrame({"cell": [0, 0, 1], "trial": [0, 1, 0], "err_x": [0.0, 1e-9, 0.5]})
    width = pd.DataFrame({"m": [16], "value": [0.25]})
    return ExperimentResult("phase-1", "phase", {"trials": trials, "width": width}, {})


def test_table_name_for():
    assert table_name_for("phase-1", "trials") == "phase_1_trials"
    assert table_name_for("lemma51", "lemma51") == "lemma51_lemma51"


def test_parse_experiments():
    configs = parse_experiments({"experiments": [
        {"name": "a", "kind": "tau"}, {"name": "b", "kind": "width"},
    ]})
    assert [c.name for c in configs] == ["a", "b"]
    single = parse_experiments({"experiment": {"name": "solo", "kind": "phase"}})
    assert single[0].kind == "phase"


def test_parse_experiments_errors():
    with pytest.raises(ValueError):
        parse_experiments({})
    with pytest.raises(ValueError):
        parse_experiments({"experiments": [{"name": "a", "kind": "tau"}] * 2})
    with pytest.raises(ConfigError):
        parse_experiments({"experiments": [{"name": "a", "kind": "tau", "bogus": 1}]})


def test_load_and_export(tmp_path):
    conn = duckdb.connect(":memory:")
    keys = load_result_to_duckdb(conn, sample_result())
    assert keys == {"phase_1_trials": PRIMARY_KEYS["trials"], "phase_1_width": None}

    ci = FakeInterface(tmp_path)
    counts = export_duckdb_to_csv(conn, ci, "out.c-test", keys)
    conn.close()

    assert counts == {"phase_1_trials": 3, "phase_1_width": 1}
    by_name = {t.name: t for t in ci.manifests}
    trials = by_name["phase_1_trials.csv"]
    assert trials.destination == "out.c-test.phase_1_trials"
    assert trials.primary_key == ["cell", "trial"]
    exported = pd.read_csv(trials.full_path)
    assert exported.columns.tolist() == ["cell", "trial", "err_x"]
    assert len(exported) == 3


def test_export_without_primary_keys(tmp_path):
    conn = duckdb.connect(":memory:")
    keys = load_result_to_duckdb(conn, sample_result())
    conn.execute("CREATE TABLE empty_table (x INTEGER)")
    ci = FakeInterface(tmp_path)
    counts = export_duckdb_to_csv(conn, ci, "out.c-test", keys, set_primary_keys=False)
    conn.close()
    assert counts["empty_table"] == 0
    assert all(t.primary_key is None for t in ci.manifests)
    assert len(ci.manifests) == 2


def test_update_state():
    ci = FakeInterface("/tmp")
    configs = parse_experiments({"experiment": {"name": "s", "kind": "tau", "master_seed": 7}})
    update_state(ci, {"s_tau": 3}, configs)
    assert ci.state["seeds"] == {"s": 7}
    assert ci.state["table_counts"] == {"s_tau": 3}
    assert "last_run" in ci.state
