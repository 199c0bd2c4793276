#!/usr/bin/env python3
"""
Tests for the quadratically constrained l1 solver and l1-synthesis.
"""

import os
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from l1synth.base import EnsembleSpec, EntryLaw, SolverConfig
from l1synth.dictionary import make_identity, make_random_dict
from l1synth.ensembles import make_rng, sample_matrix
from l1synth.exceptions import ConfigError, ValidationError
from l1synth.matcore import kernel_basis, op_norm
from l1synth.solver import (
    Problem,
    basis_pursuit_lp,
    best_s_term_error,
    make_problem,
    recovery_bound,
    soft_threshold,
    solve_qcbp,
    synthesize,
)


def sparse_signal(n, s, seed):
    rng = make_rng(seed)
    x = np.zeros(n)
    x[rng.permutation(n)[:s]] = rng.integers(0, 2, size=s) * 2.0 - 1.0
    return x


def gaussian_instance(m=40, n=80, s=5, seed=0):
    a = sample_matrix(EnsembleSpec.measurement(EntryLaw.gaussian(), m, n), seed)
    return a, sparse_signal(n, s, seed + 1000)


def test_soft_threshold():
    assert soft_threshold(np.array([3.0, -0.5, -2.0]), 1.0).tolist() == [2.0, 0.0, -1.0]


def test_identity_example():
    report = solve_qcbp(np.eye(3), np.array([1.0, 0.0, 0.0]), 0.0)
    assert report.converged
    assert np.allclose(report.x_hat, [1.0, 0.0, 0.0], atol=1e-6)


def test_observation_inside_noise_ball_gives_zero():
    report = solve_qcbp(np.eye(2), np.array([0.3, 0.4]), 0.6)
    assert report.converged
    assert report.iterations == 0
    assert np.all(report.x_hat == 0)


def test_zero_matrix_is_reported_not_raised():
    report = solve_qcbp(np.zeros((2, 3)), np.array([1.0, 0.0]), 0.1)
    assert not report.converged
    assert report.final_feasibility == pytest.approx(0.9)


def test_max_iters_reported():
    a, x0 = gaussian_instance()
    report = solve_qcbp(a, a @ x0, 0.0, SolverConfig(max_iters=5))
    assert not report.converged
    assert report.iterations == 5


def test_exact_recovery_agrees_with_lp():
    a, x0 = gaussian_instance()
    report = solve_qcbp(a, a @ x0, 0.0)
    assert report.converged
    assert np.linalg.norm(report.x_hat - x0) <= 1e-6 * np.linalg.norm(x0)
    assert np.allclose(basis_pursuit_lp(a, a @ x0), x0, atol=1e-6)


@pytest.mark.parametrize("c", [2.0, 10.0])
def test_scale_equivariance(c):
    a, x0 = gaussian_instance(seed=3)
    cfg = SolverConfig(max_iters=50_000, tol_change=1e-12)
    base = solve_qcbp(a, a @ x0, 0.0, cfg)
    scaled = solve_qcbp(a, c * (a @ x0), 0.0, cfg)
    assert base.converged and scaled.converged
    diff = np.linalg.norm(scaled.x_hat - c * base.x_hat)
    assert diff <= 1e-8 * c * np.linalg.norm(base.x_hat)


def test_noisy_scale_by_power_of_two_is_exact():
    a, x0 = gaussian_instance(seed=3)
    y = a @ x0 + 0.01 * make_rng(4).standard_normal(a.shape[0])
    base = solve_qcbp(a, y, 0.05, SolverConfig(max_iters=20_000))
    scaled = solve_qcbp(a, 4.0 * y, 4.0 * 0.05, SolverConfig(max_iters=20_000))
    assert np.allclose(scaled.x_hat, 4.0 * base.x_hat, rtol=1e-8, atol=1e-12)


def test_kernel_perturbations_do_not_improve_objective():
    rng = make_rng(6)
    for seed in range(1000):
        a, x0 = gaussian_instance(m=12, n=20, s=2, seed=seed)
        report = solve_qcbp(a, a @ x0, 0.0)
        b = kernel_basis(a)
        base = np.sum(np.abs(report.x_hat))
        for _ in range(5):
            h = b @ rng.standard_normal(b.shape[1])
            h *= 1e-3 / np.linalg.norm(h)
            assert np.sum(np.abs(report.x_hat + h)) >= base - 1e-6, seed


def test_noisy_recovery_error_scales_with_eps():
    a, x0 = gaussian_instance(seed=7)
    e = make_rng(8).standard_normal(a.shape[0])
    eps = 1e-2
    e *= eps / np.linalg.norm(e)
    report = solve_qcbp(a, a @ x0 + e, eps)
    assert report.final_feasibility <= 1e-6
    assert np.linalg.norm(report.x_hat - x0) <= 20 * eps


def test_synthesis_with_random_dictionary():
    phi = sample_matrix(EnsembleSpec.measurement(EntryLaw.gaussian(), 32, 24), seed=10)
    dictionary = make_random_dict(EnsembleSpec.dictionary(EntryLaw.rademacher(), 24, 64), 11)
    x0 = sparse_signal(64, 3, 12)
    report = synthesize(make_problem(phi, dictionary, x0))
    assert report.err_x <= 1e-4 * np.linalg.norm(x0)
    assert report.err_z <= op_norm(dictionary.mat) * report.err_x + 1e-12
    assert np.allclose(report.z_hat, dictionary.mat @ report.x_hat)


def test_identity_synthesis_is_plain_qcbp():
    a, x0 = gaussian_instance(seed=13)
    direct = solve_qcbp(a, a @ x0, 0.0)
    synth = synthesize(make_problem(a, make_identity(80), x0))
    assert np.allclose(direct.x_hat, synth.x_hat)
    assert synth.err_z == pytest.approx(synth.err_x)


def test_problem_validation():
    phi = np.eye(3)
    with pytest.raises(ValidationError):
        make_problem(phi, make_identity(4), np.zeros(4))
    with pytest.raises(ValidationError):
        make_problem(phi, make_identity(3), np.ones(3), e=np.ones(3), eps=0.1)
    with pytest.raises(ValidationError):
        Problem(phi=phi, dictionary=make_identity(3), y=np.zeros(2), eps=0.0)
    with pytest.raises(ValidationError):
        Problem(phi=phi, dictionary=make_identity(3), y=np.zeros(3), eps=-1.0)


def test_best_s_term_error():
    assert best_s_term_error([3.0, -1.0, 2.0, 0.5], 2) == pytest.approx(1.5)
    assert best_s_term_error([3.0, -1.0], 2) == 0.0
    with pytest.raises(ValidationError):
        best_s_term_error([1.0], 2)


def test_recovery_bound():
    x_bound, z_bound = recovery_bound(0.5, 2.0, 0.0, 4, 0.1, dict_norm=3.0)
    assert x_bound == pytest.approx(1.6)
    assert z_bound == pytest.approx(4.8)
    x_bound, z_bound = recovery_bound(0.5, 2.0, 1.0, 4, 0.0)
    assert x_bound == pytest.approx(4.5)
    assert z_bound is None
    with pytest.raises(ValidationError):
        recovery_bound(1.0, 2.0, 0.0, 4, 0.1)


def test_solver_config_parsing():
    cfg = SolverConfig.from_dict({"max_iters": 100, "tol_feas": 1e-6})
    assert cfg.feasibility_tol(5.0) == 1e-6
    assert SolverConfig().feasibility_tol(2.0) == pytest.approx(2e-9)
    with pytest.raises(ConfigError):
        SolverConfig.from_dict({"max_iter": 100})
    with pytest.raises(ConfigError):
        SolverConfig.from_dict({"step_ratio": 1.5})
