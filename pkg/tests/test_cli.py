#!/usr/bin/env python3
"""
Test the l1synth command line: subcommands, outputs and exit codes.
"""

import json
import os
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from l1synth import __version__
from l1synth.cli import EXIT_CONFIG, EXIT_IO, main
from l1synth.dictionary import load_dictionary
from l1synth.matcore import read_matrix, write_matrix


def write_config(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert __version__ in capsys.readouterr().out


def test_gen_matrix_is_seeded(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for out in (a, b):
        assert main(["gen-matrix", "--rows", "4", "--cols", "6", "--seed", "9",
                     "--out", str(out)]) == 0
    assert a.read_text() == b.read_text()
    assert read_matrix(a).shape == (4, 6)


def test_gen_matrix_dictionary_and_student_t(tmp_path):
    out = tmp_path / "D.txt"
    assert main(["gen-matrix", "--law", "student_t", "--dof", "5", "--rows", "3",
                 "--cols", "7", "--kind", "dictionary", "--out", str(out)]) == 0
    assert load_dictionary(out).mat.shape == (3, 7)
    assert os.path.exists(f"{out}.json")


def test_gen_matrix_bad_law_is_config_error(tmp_path):
    code = main(["gen-matrix", "--law", "uniform", "--rows", "2", "--cols", "2",
                 "--out", str(tmp_path / "x.txt")])
    assert code == EXIT_CONFIG


def test_solve_writes_report(tmp_path):
    write_matrix(tmp_path / "phi.txt", np.eye(3))
    write_matrix(tmp_path / "y.txt", [[1.0, 0.0, 0.0]])
    report = tmp_path / "report.json"
    assert main(["solve", "--matrix", str(tmp_path / "phi.txt"), "--y",
                 str(tmp_path / "y.txt"), "--report", str(report)]) == 0
    data = json.loads(report.read_text())
    assert data["converged"]
    assert np.allclose(data["x_hat"], [1.0, 0.0, 0.0], atol=1e-6)
    assert data["err_x"] is None


def test_missing_input_file_exits_with_io_code(tmp_path, caplog):
    write_matrix(tmp_path / "y.txt", [[1.0, 0.0, 0.0]])
    missing = str(tmp_path / "absent.txt")
    assert main(["solve", "--matrix", missing, "--y", str(tmp_path / "y.txt")]) == EXIT_IO
    assert "I/O error" in caplog.text
    assert main(["nsp-cert", "--matrix", missing, "--s", "1"]) == EXIT_IO


def test_nsp_cert_single_matrix(tmp_path, capsys):
    write_matrix(tmp_path / "a.txt", [[1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])
    assert main(["nsp-cert", "--matrix", str(tmp_path / "a.txt"), "--s", "1"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["status"] == "certified_holds"
    assert data["lp_count"] == 6


def test_nsp_cert_needs_inputs():
    assert main(["nsp-cert", "--s", "1"]) == EXIT_CONFIG


def test_bad_config_exits_with_config_code(tmp_path):
    path = write_config(tmp_path / "bad.json", {"name": "x", "kind": "phase", "oops": 1})
    assert main(["phase", "--config", path, "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["phase", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_kind_must_match_subcommand(tmp_path):
    path = write_config(tmp_path / "noise.json", {"name": "x", "kind": "noise"})
    assert main(["phase", "--config", path, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_phase_run_and_report(tmp_path, capsys):
    path = write_config(tmp_path / "phase.json", {
        "name": "cli_phase", "kind": "phase", "n": 16, "s": 1, "m_grid": [8],
        "trials_per_cell": 2, "solver": {"max_iters": 3000, "tol_change": 1e-7},
    })
    out = tmp_path / "results"
    assert main(["phase", "--config", path, "--seed", "5", "--out", str(out),
                 "--threads", "1"]) == 0
    with open(out / "cli_phase" / "config.json") as f:
        assert json.load(f)["master_seed"] == 5

    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == 0
    assert "cli_phase" in capsys.readouterr().out


def test_verify_runs_named_suite(tmp_path, monkeypatch):
    monkeypatch.setenv("L1SYNTH_RESULTS_DIR", str(tmp_path))
    path = write_config(tmp_path / "tau.json", {
        "name": "cli_tau", "kind": "tau", "n": 12, "s": 2, "m_grid": [8],
        "gamma_grid": [0.5], "n_cone_samples": 10, "refine_iters": 2,
    })
    assert main(["verify", "tau", "--config", path]) == 0
    assert (tmp_path / "cli_tau" / "tau.csv").exists()


def test_report_on_missing_directory(tmp_path):
    assert main(["report", "--out", str(tmp_path / "nothing")]) == EXIT_CONFIG
