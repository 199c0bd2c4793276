"""
Random measurement and dictionary laws.

Random streams
--------------
Every stream is a `numpy.random.Generator` over the counter-based Philox4x64 bit generator,
keyed by a `numpy.random.SeedSequence`. A stream is a pure function of its integer seed, on
every platform.

Stream-split rule: the seed of trial `t` in cell `c` of an experiment with master seed `M` is

    SeedSequence(entropy=M, spawn_key=(cell_key(c), t)).generate_state(1, uint64)[0]

where `cell_key` is the first 4 bytes (big-endian) of the SHA-256 of the cell's canonical JSON
(sorted keys, no whitespace). The derived seed is recorded with every trial so a single trial
can be replayed without the rest of the grid.
"""

import hashlib
import json
import logging
import math
from typing import Any, Callable, Dict, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .base import EnsembleSpec, EntryLaw, LawKind, MomentProfile
from .exceptions import ValidationError

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.Generator]
RowSampler = Callable[[np.random.Generator, int], np.ndarray]
DirectionSampler = Callable[[np.random.Generator, int], np.ndarray]

BOOTSTRAP_RESAMPLES = 20
INSTABILITY_THRESHOLD = 0.2


# ===== Streams =====

def make_rng(seed: SeedLike) -> np.random.Generator:
    """Philox-backed generator for `seed` (a Generator is passed through unchanged)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed < 0:
        raise ValidationError("seeds must be non-negative", details={"seed": seed})
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def cell_key(coords: Dict[str, Any]) -> int:
    """32-bit key of a grid cell from the SHA-256 of its canonical JSON."""
    canonical = json.dumps(coords, sort_keys=True, separators=(",", ":"), default=str)
    return int.from_bytes(hashlib.sha256(canonical.encode("utf-8")).digest()[:4], "big")


def derive_seed(master_seed: int, *keys: int) -> int:
    """Child seed of `master_seed` along the spawn path `keys`."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def trial_seed(master_seed: int, coords: Dict[str, Any], trial_index: int) -> int:
    return derive_seed(master_seed, cell_key(coords), trial_index)


# ===== Entry laws =====

def sample_entries(law: EntryLaw, rng: np.random.Generator, shape) -> np.ndarray:
    """
    i.i.d. draws from `law`, standardized to unit variance where the variance exists.

    StudentT(k) is drawn as g / sqrt(chi2_k / k) and divided by sqrt(k / (k - 2)) when k >= 3.
    """
    if law.kind is LawKind.GAUSSIAN:
        return rng.standard_normal(shape)
    if law.kind is LawKind.RADEMACHER:
        return rng.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0
    if law.kind is LawKind.LAPLACE:
        return rng.laplace(0.0, 1.0 / math.sqrt(2.0), size=shape)
    if law.kind is LawKind.STUDENT_T:
        g = rng.standard_normal(shape)
        chi2 = rng.chisquare(law.dof, size=shape)
        t = g / np.sqrt(chi2 / law.dof)
        if law.dof >= 3:
            t /= math.sqrt(law.dof / (law.dof - 2))
        return t
    if law.kind is LawKind.CAUCHY:
        return rng.standard_cauchy(shape)
    raise ValidationError(f"unsupported law: {law.kind}")


def sample_matrix(spec: EnsembleSpec, seed: SeedLike) -> np.ndarray:
    """
    Matrix with i.i.d. entries from spec.law scaled by spec.row_normalization.

    Identical (spec, seed) gives a bit-identical matrix.

    Example:
        >>> sample_matrix(EnsembleSpec.measurement(EntryLaw.gaussian(), 64, 256), seed=7)
    """
    rng = make_rng(seed)
    return sample_entries(spec.law, rng, (spec.rows, spec.cols)) * spec.row_normalization


def law_row_sampler(law: EntryLaw, dim: int) -> RowSampler:
    """Rows phi in R^dim with i.i.d. entries from `law` (no normalization)."""
    def sampler(rng: np.random.Generator, count: int) -> np.ndarray:
        return sample_entries(law, rng, (count, dim))
    return sampler


def ensemble_row_sampler(spec: EnsembleSpec) -> RowSampler:
    """Rows of the ensemble, normalization included."""
    def sampler(rng: np.random.Generator, count: int) -> np.ndarray:
        return sample_entries(spec.law, rng, (count, spec.cols)) * spec.row_normalization
    return sampler


def sphere_directions(dim: int) -> DirectionSampler:
    """Uniform directions on S^{dim-1}."""
    def sampler(rng: np.random.Generator, count: int) -> np.ndarray:
        g = rng.standard_normal((count, dim))
        return g / np.linalg.norm(g, axis=1, keepdims=True)
    return sampler


def fourth_moment(law: EntryLaw) -> float:
    """E xi^4 of the (standardized) law; inf when it does not exist."""
    if law.kind is LawKind.GAUSSIAN:
        return 3.0
    if law.kind is LawKind.RADEMACHER:
        return 1.0
    if law.kind is LawKind.LAPLACE:
        return 6.0
    if law.kind is LawKind.STUDENT_T and law.dof > 4:
        return 3.0 * (law.dof - 2) / (law.dof - 4)
    return math.inf


def paley_zygmund_bound(law: EntryLaw, A: float) -> float:
    """
    Lower bound on inf over unit a of P(|<phi, a>| >= A) for i.i.d. standardized entries.

    E<phi,a>^4 <= max(E xi^4, 3) for unit a, so Paley-Zygmund gives
    (1 - A^2)^2 / max(E xi^4, 3). Zero when the fourth moment is infinite.
    """
    if not 0 <= A < 1:
        raise ValidationError("Paley-Zygmund bound needs 0 <= A < 1", details={"A": A})
    if not law.standardized:
        return 0.0
    kappa = fourth_moment(law)
    if math.isinf(kappa):
        return 0.0
    return (1.0 - A * A) ** 2 / max(kappa, 3.0)


# ===== Moment diagnostics =====

def profile_samples(
    samples: np.ndarray,
    p_values: Sequence[float],
    rng: np.random.Generator,
    n_boot: int = BOOTSTRAP_RESAMPLES,
    threshold: float = INSTABILITY_THRESHOLD,
    p_limit: Optional[float] = None,
) -> MomentProfile:
    """
    Empirical L^p norms of the given scalar samples with bootstrap instability flags.

    Power means are computed in the log domain so heavy-tailed samples do not overflow.
    A p is flagged when the bootstrap relative standard error of the raw p-th moment
    exceeds `threshold`, or when p > `p_limit`. lambda_hat and alpha_hat come from a fit of
    log ||xi||_p = log lambda + alpha log p over the unflagged p (all p if fewer than two).
    """
    x = np.abs(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    with np.errstate(divide="ignore"):
        log_x = np.log(x)
    p_arr = np.asarray(list(p_values), dtype=np.float64)

    def log_moments(lx: np.ndarray) -> np.ndarray:
        return np.array([logsumexp(p * lx) - math.log(lx.size) for p in p_arr])

    log_m = log_moments(log_x)
    estimates = np.exp(log_m / p_arr)

    boot_log_m = np.empty((n_boot, p_arr.size))
    for b in range(n_boot):
        idx = rng.integers(0, n, size=n)
        boot_log_m[b] = log_moments(log_x[idx])
    boot_norms = np.exp(boot_log_m / p_arr)
    stderr = boot_norms.std(axis=0, ddof=1) if n_boot > 1 else np.zeros(p_arr.size)
    with np.errstate(over="ignore", invalid="ignore"):
        ratios = np.exp(boot_log_m - log_m)
        rel_stderr = ratios.std(axis=0, ddof=1) if n_boot > 1 else np.zeros(p_arr.size)
    rel_stderr = np.where(np.isfinite(rel_stderr), rel_stderr, np.inf)
    flagged = rel_stderr > threshold
    if p_limit is not None:
        flagged |= p_arr > p_limit

    fit_mask = ~flagged if np.sum(~flagged) >= 2 else np.ones(p_arr.size, dtype=bool)
    lambda_hat, alpha_hat = _fit_growth(p_arr[fit_mask], estimates[fit_mask])

    drops = np.maximum(estimates[:-1] - estimates[1:], 0.0)
    slack = float(drops.max() / estimates.max()) if drops.size and estimates.max() > 0 else 0.0

    return MomentProfile(
        p_values=[float(p) for p in p_arr],
        estimates=[float(e) for e in estimates],
        stderr=[float(s) for s in stderr],
        rel_stderr=[float(r) for r in rel_stderr],
        flagged=[bool(f) for f in flagged],
        lambda_hat=lambda_hat,
        alpha_hat=alpha_hat,
        n_samples=n,
        monotonicity_slack=slack,
        instability_threshold=threshold,
    )


def _fit_growth(p: np.ndarray, est: np.ndarray):
    ok = np.isfinite(est) & (est > 0)
    if np.sum(ok) < 2:
        return float("nan"), float("nan")
    design = np.column_stack([np.ones(np.sum(ok)), np.log(p[ok])])
    coef, *_ = np.linalg.lstsq(design, np.log(est[ok]), rcond=None)
    return float(np.exp(coef[0])), float(coef[1])


def moment_profile(
    law: EntryLaw, p_max: float, n_samples: int, seed: SeedLike
) -> MomentProfile:
    """
    ||xi||_{L^p} for p in {2, 3, ..., ceil(p_max)} with growth fit lambda * p^alpha.

    Args:
        law: Entry law
        p_max: Largest moment order, >= 2
        n_samples: Monte Carlo sample count, >= 10^4
        seed: Stream seed

    Example:
        >>> prof = moment_profile(EntryLaw.gaussian(), 6, 10**6, seed=1)
        >>> prof.estimate_at(4.0)   # ~ 3 ** 0.25
    """
    if p_max < 2:
        raise ValidationError("p_max must be >= 2", details={"p_max": p_max})
    if n_samples < 10_000:
        raise ValidationError("n_samples must be >= 10^4", details={"n_samples": n_samples})
    rng = make_rng(seed)
    samples = sample_entries(law, rng, n_samples)
    p_values = list(range(2, int(math.ceil(p_max)) + 1))
    profile = profile_samples(samples, p_values, rng)
    unstable = [p for p, f in zip(profile.p_values, profile.flagged) if f]
    if unstable:
        logger.warning(f"{law.tag}: unstable L^p estimates at p={unstable}")
    return profile


def small_ball_estimate(
    sampler: Union[EntryLaw, EnsembleSpec, RowSampler],
    directions: Union[DirectionSampler, np.ndarray, None],
    A: float,
    n_dirs: int,
    n_samples: int,
    seed: SeedLike,
    dim: Optional[int] = None,
) -> float:
    """
    Monte Carlo estimate of Q_A = inf over directions x of P(|<phi, x>| >= A).

    Returns the minimum over the sampled directions of the empirical frequency; an
    estimate over finitely many directions, not a certificate of the infimum.

    Args:
        sampler: EntryLaw (needs `dim`), EnsembleSpec (row law incl. normalization) or a
            callable (rng, count) -> (count, dim) array
        directions: Callable (rng, count) -> (count, dim), a fixed (k, dim) array, or None
            for uniform directions on the sphere
        A: Threshold, >= 0
        n_dirs: Number of directions drawn (ignored for a fixed array)
        n_samples: Draws of phi, shared by all directions
        seed: Stream seed
        dim: Dimension when `sampler` is an EntryLaw
    """
    if A < 0:
        raise ValidationError("A must be >= 0", details={"A": A})
    rng = make_rng(seed)
    if isinstance(sampler, EntryLaw):
        if dim is None:
            raise ValidationError("dim is required when sampling from an EntryLaw")
        row_sampler = law_row_sampler(sampler, dim)
    elif isinstance(sampler, EnsembleSpec):
        row_sampler = ensemble_row_sampler(sampler)
        dim = sampler.cols
    else:
        row_sampler = sampler

    phi = row_sampler(rng, n_samples)
    if directions is None:
        dirs = sphere_directions(phi.shape[1])(rng, n_dirs)
    elif callable(directions):
        dirs = directions(rng, n_dirs)
    else:
        dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))

    marginals = np.abs(phi @ dirs.T)
    freq = np.mean(marginals >= A, axis=0)
    return float(freq.min())
