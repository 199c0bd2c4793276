#!/usr/bin/env python3
"""
Tests for NSP certification, robust-NSP estimation and the recovery oracle.
"""

import math
import os
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from l1synth.base import ConeSpec, EnsembleSpec, EntryLaw, NspStatus
from l1synth.dictionary import Dictionary
from l1synth.ensembles import make_rng, sample_matrix
from l1synth.exceptions import ValidationError
from l1synth.matcore import top_s_l2
from l1synth.nsp import (
    certify_nsp,
    certify_synthesis_nsp,
    check_cone_inclusion,
    cone_tightness,
    estimate_robust_tau,
    in_cone,
    k_support_norm,
    sample_cone,
    uniform_recovery_oracle,
)


def test_injective_matrix_holds_trivially():
    report = certify_nsp(np.eye(4), 2)
    assert report.status is NspStatus.CERTIFIED_HOLDS
    assert report.lp_count == 0


def test_balanced_kernel_holds():
    # ker = span (1, 1, 1): every coordinate is half of the rest
    a = np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])
    report = certify_nsp(a, 1)
    assert report.status is NspStatus.CERTIFIED_HOLDS
    assert report.max_ratio == pytest.approx(0.5)
    assert report.lp_count == 6


def test_dominant_coordinate_fails_with_witness():
    # ker = span (0, 2, 1)
    a = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, -2.0]])
    report = certify_nsp(a, 1)
    assert report.status is NspStatus.CERTIFIED_FAILS
    assert report.witness_support == [1]
    v = report.witness
    assert np.linalg.norm(a @ v) < 1e-9
    assert abs(v[1]) >= np.sum(np.abs(v)) - abs(v[1])


def test_boundary_witness_fails():
    # ker = span (1, 1): ||v_T||_1 == ||v_Tc||_1 exactly
    report = certify_nsp([[1.0, -1.0]], 1)
    assert report.status is NspStatus.CERTIFIED_FAILS
    assert np.allclose(np.abs(report.witness), [1 / np.sqrt(2), 1 / np.sqrt(2)])


def test_full_order_fails_when_kernel_is_nontrivial():
    report = certify_nsp([[1.0, 1.0, 1.0]], 3)
    assert report.status is NspStatus.CERTIFIED_FAILS
    assert math.isinf(report.max_ratio)


def test_guard_reports_infeasible_at_size():
    a = sample_matrix(EnsembleSpec.measurement(EntryLaw.gaussian(), 20, 40), seed=1)
    report = certify_nsp(a, 10)
    assert report.status is NspStatus.INFEASIBLE_AT_SIZE
    assert report.lp_count == 0


def test_rejects_bad_order():
    with pytest.raises(ValidationError):
        certify_nsp(np.eye(3), 0)


def test_certificate_agrees_with_exhaustive_oracle():
    for seed in range(4):
        a = sample_matrix(EnsembleSpec.measurement(EntryLaw.gaussian(), 8, 16), seed)
        report = certify_nsp(a, 2, tol=1e-6)
        if abs(report.max_ratio - 1.0) <= 1e-6 or report.status is NspStatus.ESTIMATE_ONLY:
            continue
        oracle = uniform_recovery_oracle(a, 2, 480, 1e-6, seed)
        assert oracle.exhaustive
        assert oracle.instances == 480
        assert (report.status is NspStatus.CERTIFIED_HOLDS) == oracle.recovered_all


def test_identity_phi_gives_same_certificate():
    d = sample_matrix(EnsembleSpec.measurement(EntryLaw.gaussian(), 6, 10), seed=3)
    direct = certify_nsp(d, 2)
    through_phi = certify_nsp(np.eye(6) @ d, 2)
    assert direct.status is through_phi.status
    assert direct.max_ratio == pytest.approx(through_phi.max_ratio)


def test_synthesis_certificate_reports_spark_separately():
    dictionary = Dictionary.from_matrix([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    report = certify_synthesis_nsp(np.eye(2), dictionary, 1)
    assert report.full_spark is False
    assert report.status is NspStatus.CERTIFIED_FAILS
    assert report.to_dict()["full_spark"] is False


@pytest.mark.parametrize("seed", range(5))
def test_certificate_is_invariant_under_row_scaling(seed):
    a = sample_matrix(EnsembleSpec.measurement(EntryLaw.gaussian(), 6, 10), seed=seed)
    for s in (1, 2):
        base = certify_nsp(a, s)
        scaled = certify_nsp(3.0 * a, s)
        assert scaled.status is base.status
        if base.status is NspStatus.CERTIFIED_HOLDS:
            assert scaled.max_ratio == pytest.approx(base.max_ratio, rel=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_certificate_failure_persists_at_larger_orders(seed):
    a = sample_matrix(EnsembleSpec.measurement(EntryLaw.gaussian(), 4, 8), seed=seed)
    statuses = [certify_nsp(a, s).status for s in range(1, 5)]
    # with n = 2s the top half of any kernel vector carries half its l1 mass
    assert statuses[-1] is NspStatus.CERTIFIED_FAILS
    first = statuses.index(NspStatus.CERTIFIED_FAILS)
    assert all(status is NspStatus.CERTIFIED_FAILS for status in statuses[first:])


def test_cone_samples_lie_in_cone():
    cone = ConeSpec(30, 3, 0.5)
    samples = sample_cone(cone, 200, seed=4)
    assert all(in_cone(v, cone) for v in samples)
    tight = [cone_tightness(v, 3, 0.5) for v in samples[1::2]]
    assert max(tight) <= 1.05 + 1e-9
    assert min(tight) > 1.0


def test_cone_samples_have_prefix_property():
    cone = ConeSpec(12, 2, 0.8)
    short = sample_cone(cone, 5, seed=9)
    long = sample_cone(cone, 20, seed=9)
    assert all(np.array_equal(a, b) for a, b in zip(short, long))


@pytest.mark.parametrize("cone", [ConeSpec(2, 1, 0.5), ConeSpec(3, 1, 0.5), ConeSpec(6, 2, 0.5)])
def test_cone_sample_tail_never_exceeds_head(cone):
    samples = sample_cone(cone, 60, seed=5)
    assert all(in_cone(v, cone) for v in samples)
    for v in samples[1::2]:
        mags = np.sort(np.abs(v))[::-1]
        tight = cone_tightness(v, cone.s, cone.gamma)
        assert tight > 1.0
        capped = np.allclose(mags[cone.s:], mags[cone.s - 1], rtol=1e-12)
        assert tight <= 1.05 + 1e-9 or capped


def test_cone_sample_tightness_is_exact_when_tail_fits():
    # s = 1, gamma = 1/2: the tail needs l1 mass 2|head| / rho < 2|head|, two entries suffice
    cone = ConeSpec(3, 1, 0.5)
    tight = [cone_tightness(v, 1, 0.5) for v in sample_cone(cone, 80, seed=6)[1::2]]
    assert min(tight) > 1.0
    assert max(tight) <= 1.05 + 1e-9


def test_in_cone_basics():
    cone = ConeSpec(5, 2, 0.5)
    assert in_cone(np.eye(5)[0], cone)
    assert not in_cone(np.ones(5), cone)
    assert not in_cone(2 * np.eye(5)[0], cone)
    assert math.isinf(cone_tightness(np.eye(5)[0], 2, 0.5))


def test_robust_tau_on_identity_is_one():
    cone = ConeSpec(16, 2, 0.5)
    report = estimate_robust_tau(np.eye(16), cone, 50, 10, seed=1)
    assert report.status is NspStatus.ESTIMATE_ONLY
    assert report.tau_hat == pytest.approx(1.0, abs=1e-9)


def test_robust_tau_estimate_is_consistent():
    a = sample_matrix(EnsembleSpec.measurement(EntryLaw.gaussian(), 24, 40), seed=2)
    cone = ConeSpec(40, 3, 0.5)
    report = estimate_robust_tau(a, cone, 100, 30, seed=3)
    assert report.status is NspStatus.ESTIMATE_ONLY
    assert in_cone(report.witness, cone)
    assert report.tau_hat == pytest.approx(1.0 / np.linalg.norm(a @ report.witness))
    assert report.tau_hat >= 1.0 / np.linalg.norm(a, 2) - 1e-12


def test_refinement_never_increases_minimum():
    a = sample_matrix(EnsembleSpec.measurement(EntryLaw.gaussian(), 24, 40), seed=2)
    cone = ConeSpec(40, 3, 0.5)
    raw = estimate_robust_tau(a, cone, 100, 0, seed=3)
    refined = estimate_robust_tau(a, cone, 100, 30, seed=3)
    assert refined.tau_hat >= raw.tau_hat


@pytest.mark.parametrize("refine_iters", [0, 10])
def test_robust_tau_nondecreasing_in_samples(refine_iters):
    a = sample_matrix(EnsembleSpec.measurement(EntryLaw.gaussian(), 24, 40), seed=2)
    cone = ConeSpec(40, 3, 0.5)
    taus = [estimate_robust_tau(a, cone, k, refine_iters, seed=8).tau_hat for k in (10, 50, 200)]
    for smaller, larger in zip(taus, taus[1:]):
        assert larger >= smaller * (1 - 1e-12)


def test_robust_tau_on_diagonal_matrix():
    # inf of ||diag(w) v|| over the cone is min(w), reached at a 1-sparse vector
    w = np.array([3.0, 2.0, 1.0, 2.5, 2.0, 3.0, 2.2, 2.8, 2.0, 2.4, 2.6, 3.0])
    exact = 1.0 / w.min()
    report = estimate_robust_tau(np.diag(w), ConeSpec(12, 2, 0.5), 50, 200, seed=3)
    assert report.tau_hat <= exact * (1 + 1e-12)
    assert report.tau_hat >= 0.99 * exact
    assert abs(report.witness[2]) > 0.99


def test_k_support_norm_extremes():
    v = make_rng(1).standard_normal(9)
    assert k_support_norm(v, 1) == pytest.approx(np.sum(np.abs(v)))
    assert k_support_norm(v, 9) == pytest.approx(np.linalg.norm(v))
    sparse = np.zeros(9)
    sparse[[1, 4, 7]] = [3.0, -1.0, 0.5]
    assert k_support_norm(sparse, 3) == pytest.approx(np.linalg.norm(sparse))


def test_k_support_norm_dominates_dual_pairings():
    rng = make_rng(2)
    for _ in range(100):
        v = rng.standard_normal(15)
        u = rng.standard_normal(15)
        assert v @ u <= k_support_norm(v, 4) * top_s_l2(u, 4) + 1e-12


@pytest.mark.parametrize("n,s,gamma", [(64, 4, 0.5), (128, 8, 0.8)])
def test_cone_inclusion(n, s, gamma):
    check = check_cone_inclusion(ConeSpec(n, s, gamma), 2000, 50, seed=5)
    assert check.passed
    assert check.max_gauge <= 2 + 1 / gamma + 1e-9


def test_oracle_on_identity():
    oracle = uniform_recovery_oracle(np.eye(4), 1, 100, 1e-6, seed=0)
    assert oracle.exhaustive
    assert oracle.instances == 8
    assert oracle.recovered_all


def test_oracle_samples_when_patterns_exceed_budget():
    a = sample_matrix(EnsembleSpec.measurement(EntryLaw.gaussian(), 20, 30), seed=6)
    oracle = uniform_recovery_oracle(a, 2, 25, 1e-6, seed=7)
    assert not oracle.exhaustive
    assert oracle.instances == 25
    assert oracle.recovered_all
