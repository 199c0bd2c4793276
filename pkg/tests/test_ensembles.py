#!/usr/bin/env python3
"""
Tests for random laws, seeded streams and moment diagnostics.
"""

import math
import os
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest
from scipy import stats

from l1synth.base import EnsembleSpec, EntryLaw
from l1synth.exceptions import ConfigError, ValidationError
from l1synth.ensembles import (
    cell_key,
    derive_seed,
    fourth_moment,
    make_rng,
    moment_profile,
    paley_zygmund_bound,
    profile_samples,
    sample_entries,
    sample_matrix,
    small_ball_estimate,
    trial_seed,
)


def test_streams_are_reproducible():
    assert np.array_equal(make_rng(5).standard_normal(8), make_rng(5).standard_normal(8))
    assert not np.array_equal(make_rng(5).standard_normal(8), make_rng(6).standard_normal(8))


def test_negative_seed_rejected():
    with pytest.raises(ValidationError):
        make_rng(-1)


def test_cell_key_ignores_key_order():
    assert cell_key({"m": 64, "law": "gaussian"}) == cell_key({"law": "gaussian", "m": 64})
    assert cell_key({"m": 64}) != cell_key({"m": 65})


def test_trial_seeds_are_distinct_and_stable():
    coords = {"kind": "phase", "law": "gaussian", "m": 32}
    seeds = [trial_seed(7, coords, t) for t in range(50)]
    assert len(set(seeds)) == 50
    assert seeds[3] == derive_seed(7, cell_key(coords), 3)


def test_sample_matrix_is_deterministic_and_scaled():
    spec = EnsembleSpec.measurement(EntryLaw.gaussian(), 200, 300)
    a = sample_matrix(spec, seed=11)
    assert np.array_equal(a, sample_matrix(spec, seed=11))
    assert np.var(a * math.sqrt(200)) == pytest.approx(1.0, abs=0.02)


def test_rademacher_dictionary_entries():
    spec = EnsembleSpec.dictionary(EntryLaw.rademacher(), 16, 40)
    d = sample_matrix(spec, seed=1)
    assert set(np.unique(np.abs(d))) == {0.25}


@pytest.mark.parametrize("law", [
    EntryLaw.gaussian(), EntryLaw.rademacher(), EntryLaw.laplace(), EntryLaw.student_t(5),
])
def test_standardized_laws_have_unit_variance(law):
    x = sample_entries(law, make_rng(3), 200_000)
    assert abs(float(np.mean(x))) < 0.02
    assert np.var(x) == pytest.approx(1.0, abs=0.05)


def test_student_t_matches_scipy_quantiles():
    x = sample_entries(EntryLaw.student_t(4), make_rng(4), 200_000)
    scale = math.sqrt(4 / 2)
    q = np.quantile(x * scale, [0.1, 0.5, 0.9])
    assert np.allclose(q, stats.t.ppf([0.1, 0.5, 0.9], df=4), atol=0.03)


def test_law_parsing():
    assert EntryLaw.from_dict({"kind": "student_t", "dof": 7}).tag == "student_t(7)"
    assert EntryLaw.from_dict("cauchy").standardized is False
    with pytest.raises(ConfigError):
        EntryLaw.from_dict({"kind": "uniform"})
    with pytest.raises(ConfigError):
        EntryLaw.from_dict({"kind": "gaussian", "dof": 3})
    with pytest.raises(ConfigError):
        EntryLaw.from_dict({"kind": "gaussian", "scale": 2})


def test_fourth_moments():
    assert fourth_moment(EntryLaw.gaussian()) == 3.0
    assert fourth_moment(EntryLaw.rademacher()) == 1.0
    assert fourth_moment(EntryLaw.student_t(6)) == pytest.approx(6.0)
    assert math.isinf(fourth_moment(EntryLaw.student_t(4)))
    assert math.isinf(fourth_moment(EntryLaw.cauchy()))


def test_paley_zygmund_bound():
    assert paley_zygmund_bound(EntryLaw.gaussian(), 0.5) == pytest.approx(0.1875)
    assert paley_zygmund_bound(EntryLaw.cauchy(), 0.5) == 0.0
    with pytest.raises(ValidationError):
        paley_zygmund_bound(EntryLaw.gaussian(), 1.0)


def test_small_ball_estimate_gaussian():
    # <phi, x> ~ N(0, 1) for every unit x
    q = small_ball_estimate(EntryLaw.gaussian(), None, 0.5, 20, 20_000, seed=8, dim=10)
    exact = 2.0 * stats.norm.sf(0.5)
    assert q == pytest.approx(exact, abs=0.03)
    assert q >= paley_zygmund_bound(EntryLaw.gaussian(), 0.5)


def test_small_ball_estimate_needs_dim_for_law():
    with pytest.raises(ValidationError):
        small_ball_estimate(EntryLaw.gaussian(), None, 0.5, 5, 100, seed=1)


def test_gaussian_moment_profile():
    prof = moment_profile(EntryLaw.gaussian(), 6, 100_000, seed=2)
    assert prof.p_values == [2.0, 3.0, 4.0, 5.0, 6.0]
    assert prof.estimate_at(2.0) == pytest.approx(1.0, abs=0.02)
    assert prof.estimate_at(4.0) == pytest.approx(3.0 ** 0.25, abs=0.03)
    assert prof.estimate_at(6.0) == pytest.approx(15.0 ** (1 / 6), abs=0.05)
    assert not any(prof.flagged)
    assert prof.monotonicity_slack == 0.0


def test_gaussian_growth_exponent_is_near_one_half():
    prof = moment_profile(EntryLaw.gaussian(), 12, 10**6, seed=2)
    assert prof.p_values == [float(p) for p in range(2, 13)]
    assert 0.4 <= prof.alpha_hat <= 0.6


def test_cauchy_high_moments_are_flagged():
    prof = moment_profile(EntryLaw.cauchy(), 6, 10_000, seed=3)
    assert prof.flagged[-1]


def test_student_t_moments_flagged_past_dof():
    # dof 12: E|xi|^p is finite only for p < 12
    prof = moment_profile(EntryLaw.student_t(12), 14, 100_000, seed=7)
    flags = dict(zip(prof.p_values, prof.flagged))
    assert flags[14.0]
    assert not flags[4.0]
    assert 4.0 in prof.stable_p()


def test_moment_profile_needs_enough_samples():
    with pytest.raises(ValidationError):
        moment_profile(EntryLaw.gaussian(), 4, 999, seed=1)


def test_profile_samples_p_limit():
    x = make_rng(1).standard_normal(50_000)
    prof = profile_samples(x, [2, 3, 4, 5], make_rng(2), p_limit=3.5)
    assert prof.flagged[2:] == [True, True]
    assert prof.stable_p() == [2.0, 3.0]
