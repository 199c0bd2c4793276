#!/usr/bin/env python3
"""
Tests for the dense Bland-rule simplex.
"""

import os
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest
from scipy.optimize import linprog

from l1synth.exceptions import LPError, ValidationError
from l1synth.simplex import simplex_max


def test_textbook_example():
    res = simplex_max([1, 1], [[1, 2], [3, 1]], [4, 6])
    assert res.status == "optimal"
    assert res.value == pytest.approx(2.8)
    assert np.allclose(res.z, [1.6, 1.2])


def test_unbounded_returns_ray():
    c = np.array([1.0, 0.0])
    g = np.array([[1.0, -1.0]])
    res = simplex_max(c, g, [1.0])
    assert res.unbounded
    assert np.all(res.ray >= 0)
    assert np.all(g @ res.ray <= 1e-12)
    assert c @ res.ray > 0


def test_degenerate_lp_terminates():
    g = np.array([[1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]])
    res = simplex_max([1.0, 1.0], g, [0.0, 0.0, 0.0])
    assert res.status == "optimal"
    assert res.value == pytest.approx(0.0)


def test_matches_highs_on_random_lps():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = rng.uniform(0.1, 1.0, size=(5, 4))
        h = rng.uniform(0.5, 2.0, size=5)
        c = rng.uniform(-0.5, 1.0, size=4)
        res = simplex_max(c, g, h)
        ref = linprog(-c, A_ub=g, b_ub=h, bounds=(0, None), method="highs")
        assert res.status == "optimal"
        assert res.value == pytest.approx(-ref.fun, abs=1e-9)
        assert np.all(g @ res.z <= h + 1e-9)


def test_rejects_negative_rhs():
    with pytest.raises(ValidationError):
        simplex_max([1.0], [[1.0]], [-1.0])


def test_rejects_shape_mismatch():
    with pytest.raises(ValidationError):
        simplex_max([1.0, 2.0], [[1.0]], [1.0])


def test_pivot_guard():
    with pytest.raises(LPError):
        simplex_max([1, 1], [[1, 2], [3, 1]], [4, 6], max_pivots=1)
