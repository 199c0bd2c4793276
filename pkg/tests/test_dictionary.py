#!/usr/bin/env python3
"""
Tests for synthesis dictionaries.
"""

import json
import os
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from l1synth.base import EnsembleSpec, EntryLaw
from l1synth.dictionary import (
    Dictionary,
    admissible_sparsity,
    coherence,
    full_spark,
    load_dictionary,
    make_identity,
    make_random_dict,
    save_dictionary,
)
from l1synth.exceptions import InfeasibleAtSizeError, ValidationError


def test_identity_dictionary():
    d = make_identity(5)
    assert d.rho == 1.0
    assert d.mu == 0.0
    assert full_spark(d) is True
    assert d.sidecar()["admissible_s"] == 5


def test_rademacher_dictionary_has_unit_columns():
    d = make_random_dict(EnsembleSpec.dictionary(EntryLaw.rademacher(), 16, 48), seed=3)
    assert (d.d, d.n) == (16, 48)
    assert d.rho == pytest.approx(1.0, abs=1e-12)
    assert 0.0 < d.mu <= 1.0


def test_random_dictionary_is_reproducible():
    spec = EnsembleSpec.dictionary(EntryLaw.gaussian(), 8, 20)
    assert np.array_equal(make_random_dict(spec, 4).mat, make_random_dict(spec, 4).mat)


def test_random_dictionary_must_be_wide():
    with pytest.raises(ValidationError):
        make_random_dict(EnsembleSpec.dictionary(EntryLaw.gaussian(), 10, 5), seed=1)
    with pytest.raises(ValidationError):
        Dictionary.from_matrix(np.ones((3, 2)))


def test_coherence_of_two_columns():
    d = Dictionary.from_matrix([[1.0, 1.0], [0.0, 1.0]])
    assert coherence(d) == pytest.approx(1 / np.sqrt(2))


def test_coherence_rejects_zero_column():
    d = Dictionary.from_matrix([[1.0, 0.0], [0.0, 0.0]])
    assert d.mu is None
    with pytest.raises(ValidationError):
        coherence(d)


def test_admissible_sparsity():
    assert admissible_sparsity(0.0, 40) == 40
    assert admissible_sparsity(1 / 32, 100) == 3
    assert admissible_sparsity(1.0, 100) == 1


def test_duplicated_column_breaks_full_spark():
    d = Dictionary.from_matrix([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    assert d.mu == pytest.approx(1.0)
    assert full_spark(d) is False
    assert d.full_spark_status == "false"


def test_gaussian_dictionary_has_full_spark():
    d = make_random_dict(EnsembleSpec.dictionary(EntryLaw.gaussian(), 4, 10), seed=9)
    assert full_spark(d) is True


def test_full_spark_guard():
    d = make_random_dict(EnsembleSpec.dictionary(EntryLaw.gaussian(), 20, 60), seed=1)
    with pytest.raises(InfeasibleAtSizeError) as exc:
        full_spark(d)
    assert exc.value.details["count"] > exc.value.details["guard"]


def test_save_and_load_keep_sidecar(tmp_path):
    d = make_random_dict(EnsembleSpec.dictionary(EntryLaw.gaussian(), 3, 6), seed=2)
    full_spark(d)
    path = str(tmp_path / "D.txt")
    save_dictionary(path, d)

    with open(f"{path}.json") as f:
        sidecar = json.load(f)
    assert set(sidecar) == {"rho", "mu", "admissible_s", "full_spark_status"}

    loaded = load_dictionary(path)
    assert np.array_equal(loaded.mat, d.mat)
    assert loaded.full_spark_status == "true"
    assert loaded.mu == pytest.approx(d.mu)
