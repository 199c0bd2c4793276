"""
Dictionaries D in R^{d x n} (d <= n) and their deterministic geometry.

A `Dictionary` stores the matrix together with rho = max column l2 norm and, once computed,
the coherence mu and the full-spark status. On disk a dictionary is a matcore matrix file
plus a JSON sidecar `<path>.json` holding {rho, mu, admissible_s, full_spark_status}.
"""

import itertools
import json
import logging
import math
import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .base import EnsembleSpec
from .ensembles import SeedLike, sample_matrix
from .exceptions import InfeasibleAtSizeError, ValidationError
from .matcore import as_mat, read_matrix, write_matrix

logger = logging.getLogger(__name__)

FULL_SPARK_GUARD = 10**6
DEFAULT_SPARK_TOL = 1e-10
_SPARK_BATCH = 4096


@dataclass
class Dictionary:
    """Synthesis dictionary; columns d_i synthesize z = D x"""
    mat: np.ndarray
    rho: float
    mu: Optional[float] = None
    full_spark_status: Optional[str] = None

    @property
    def d(self) -> int:
        return self.mat.shape[0]

    @property
    def n(self) -> int:
        return self.mat.shape[1]

    @classmethod
    def from_matrix(cls, mat, with_coherence: bool = True) -> "Dictionary":
        """
        Wrap a matrix, computing rho (and mu when no column vanishes).

        Raises:
            ValidationError: If d > n or the matrix has non-finite entries
        """
        mat = as_mat(mat, name="dictionary")
        d, n = mat.shape
        if d > n:
            raise ValidationError(
                f"dictionary must have d <= n (got {d}x{n})",
                details={"d": d, "n": n},
            )
        norms = np.linalg.norm(mat, axis=0)
        out = cls(mat=mat, rho=float(norms.max()))
        if with_coherence and np.all(norms > 0):
            out.mu = coherence(out)
        return out

    def sidecar(self) -> dict:
        return {
            "rho": self.rho,
            "mu": self.mu,
            "admissible_s": admissible_sparsity(self.mu, self.n) if self.mu is not None else None,
            "full_spark_status": self.full_spark_status,
        }


def make_identity(n: int) -> Dictionary:
    """Identity dictionary: rho = 1, mu = 0."""
    if n < 1:
        raise ValidationError("n must be >= 1", details={"n": n})
    return Dictionary(mat=np.eye(n), rho=1.0, mu=0.0)


def make_random_dict(spec: EnsembleSpec, seed: SeedLike) -> Dictionary:
    """
    Random dictionary D = d^{-1/2} [psi_1, ..., psi_d]^T sampled from `spec`.

    Args:
        spec: rows = d, cols = n (d <= n), row_normalization usually 1/sqrt(d)
        seed: Stream seed

    Example:
        >>> D = make_random_dict(EnsembleSpec.dictionary(EntryLaw.rademacher(), 64, 256), 3)
        >>> D.rho   # 1.0 exactly for Rademacher entries
    """
    if spec.rows > spec.cols:
        raise ValidationError(
            f"dictionary must have d <= n (got {spec.rows}x{spec.cols})",
            details={"d": spec.rows, "n": spec.cols},
        )
    return Dictionary.from_matrix(sample_matrix(spec, seed))


def coherence(dictionary: Dictionary) -> float:
    """
    mu(D) = max over i != j of |<d_i, d_j>| / (||d_i|| ||d_j||).

    Raises:
        ValidationError: If some column is zero
    """
    mat = dictionary.mat
    norms = np.linalg.norm(mat, axis=0)
    if np.any(norms == 0):
        raise ValidationError(
            "coherence is undefined for a zero column",
            details={"zero_columns": np.flatnonzero(norms == 0).tolist()},
        )
    if mat.shape[1] == 1:
        return 0.0
    unit = mat / norms
    gram = np.abs(unit.T @ unit)
    np.fill_diagonal(gram, 0.0)
    return float(min(gram.max(), 1.0))


def admissible_sparsity(mu: float, n: int) -> int:
    """Largest s <= n with mu <= 1 / (16 (s - 1))."""
    if mu <= 0:
        return n
    return int(min(n, math.floor(1.0 / (16.0 * mu)) + 1))


def full_spark(dictionary: Dictionary, tol: float = DEFAULT_SPARK_TOL) -> bool:
    """
    True iff every d-column submatrix has sigma_min > tol * sigma_max.

    Submatrices are checked in vectorized batches in lexicographic order of the column sets.

    Raises:
        InfeasibleAtSizeError: If C(n, d) exceeds the enumeration guard
    """
    d, n = dictionary.mat.shape
    count = math.comb(n, d)
    if count > FULL_SPARK_GUARD:
        raise InfeasibleAtSizeError(
            f"full spark check needs C({n},{d}) = {count} submatrices",
            details={"n": n, "d": d, "count": count, "guard": FULL_SPARK_GUARD},
        )
    mat = dictionary.mat
    combos = itertools.combinations(range(n), d)
    checked = 0
    while True:
        batch = list(itertools.islice(combos, _SPARK_BATCH))
        if not batch:
            break
        idx = np.array(batch)
        subs = np.transpose(mat[:, idx], (1, 0, 2))
        sv = np.linalg.svd(subs, compute_uv=False)
        bad = sv[:, -1] <= tol * sv[:, 0]
        if np.any(bad):
            first = batch[int(np.argmax(bad))]
            logger.debug(f"full spark fails on columns {first}")
            dictionary.full_spark_status = "false"
            return False
        checked += len(batch)
    logger.debug(f"full spark holds on all {checked} submatrices")
    dictionary.full_spark_status = "true"
    return True


def save_dictionary(path: Union[str, os.PathLike], dictionary: Dictionary) -> None:
    """Write the matrix file and its JSON sidecar."""
    write_matrix(path, dictionary.mat)
    with open(f"{path}.json", "w", encoding="utf-8") as f:
        json.dump(dictionary.sidecar(), f, indent=2, sort_keys=True)


def load_dictionary(path: Union[str, os.PathLike]) -> Dictionary:
    """Read a dictionary matrix file; the sidecar, if present, restores full_spark_status."""
    dictionary = Dictionary.from_matrix(read_matrix(path))
    sidecar = f"{path}.json"
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as f:
            meta = json.load(f)
        dictionary.full_spark_status = meta.get("full_spark_status")
    return dictionary
