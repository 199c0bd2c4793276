"""
Null space property machinery.

* The cone S_gamma = {v unit : ||v_T||_2 >= gamma / sqrt(s) ||v_Tc||_1 for some |T| = s}; the
  best T is always the index set of the s largest magnitudes.
* Exact NSP certification of small instances by one LP per (support, sign pattern), solved with
  the dense Bland-rule simplex in `simplex.py`.
* Robust NSP constant estimation by sampling S_gamma and refining with projected descent.
* The s-support norm (gauge of D_s = conv of unit s-sparse vectors) and the uniform-recovery
  oracle used to cross-check certificates.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .base import ConeSpec, NspReport, NspStatus
from .dictionary import Dictionary, full_spark
from .ensembles import SeedLike, make_rng
from .exceptions import InfeasibleAtSizeError, ValidationError
from .matcore import as_mat, as_vec, kernel_basis, op_norm, rearrange_desc
from .simplex import simplex_max
from .solver import basis_pursuit_lp

logger = logging.getLogger(__name__)

NSP_GUARD = 10**6
DEFAULT_NSP_TOL = 1e-7
UNIT_TOL = 1e-9
BOUNDARY_RHO_MAX = 1.05


# ===== Cone =====

def _check_dim(v: np.ndarray, cone: ConeSpec) -> None:
    if v.size != cone.n:
        raise ValidationError(
            f"vector has length {v.size}, cone lives in R^{cone.n}",
            details={"dim": v.size, "n": cone.n},
        )


def cone_tightness(v, s: int, gamma: float) -> float:
    """
    ||v_T||_2 / (gamma / sqrt(s) ||v_Tc||_1) for T = top-s support; inf when the tail is zero.

    v satisfies the cone inequality iff the ratio is >= 1.
    """
    mags = rearrange_desc(v)
    lhs = math.sqrt(float(np.sum(mags[:s] ** 2)))
    rhs = gamma / math.sqrt(s) * float(np.sum(mags[s:]))
    if rhs == 0.0:
        return math.inf
    return lhs / rhs


def in_cone(v, cone: ConeSpec) -> bool:
    """
    Exact membership in S_gamma.

    Example:
        >>> in_cone(np.eye(5)[0], ConeSpec(5, 2, 0.5))   # True
    """
    v = as_vec(v, name="v")
    _check_dim(v, cone)
    if abs(float(np.linalg.norm(v)) - 1.0) > UNIT_TOL:
        return False
    mags = rearrange_desc(v)
    lhs = math.sqrt(float(np.sum(mags[:cone.s] ** 2)))
    rhs = cone.gamma / math.sqrt(cone.s) * (float(np.sum(mags)) - float(np.sum(mags[:cone.s])))
    return lhs >= rhs


def sample_cone(cone: ConeSpec, n_samples: int, seed: SeedLike) -> List[np.ndarray]:
    """
    Unit vectors in S_gamma.

    Even-indexed samples are exactly s-sparse with random signs and magnitudes in [1, 2].
    Odd-indexed samples add a dense signed tail scaled so the cone inequality at the head
    support holds with tightness uniform in (1, 1.05]. Tail magnitudes never exceed the smallest
    head magnitude; when n - s entries at that cap cannot reach the drawn tightness, the tail
    sits at the cap and the tightness is larger. Samples are drawn one after the other
    from a single stream, so a smaller `n_samples` returns a prefix of a larger one.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1", details={"n_samples": n_samples})
    rng = make_rng(seed)
    n, s, gamma = cone.n, cone.s, cone.gamma
    out = []
    for k in range(n_samples):
        support = rng.permutation(n)[:s]
        signs = rng.integers(0, 2, size=s) * 2.0 - 1.0
        v = np.zeros(n)
        v[support] = signs * rng.uniform(1.0, 2.0, size=s)

        if k % 2 == 1 and s < n:
            rest = np.setdiff1d(np.arange(n), support)
            tail = rng.uniform(0.0, 1.0, size=n - s) * (rng.integers(0, 2, size=n - s) * 2.0 - 1.0)
            rho = 1.0 + 1e-6 + (BOUNDARY_RHO_MAX - 1.0 - 1e-6) * rng.random()
            if np.any(tail != 0):
                target = float(np.linalg.norm(v)) * math.sqrt(s) / (gamma * rho)
                cap = float(np.min(np.abs(v[support])))
                v[rest] = np.sign(tail) * _fill_to_cap(np.abs(tail), target, cap)

        out.append(v / np.linalg.norm(v))
    return out


def _fill_to_cap(mags: np.ndarray, target: float, cap: float) -> np.ndarray:
    """
    min(lam * mags, cap) with lam chosen so the sum is `target`; every entry is `cap` when
    even that falls short of `target`.

    Keeping the tail at or below the smallest head magnitude keeps the head the top-s set.
    """
    if cap * mags.size <= target:
        return np.full(mags.size, cap)
    desc = np.sort(mags)[::-1]
    rest = np.cumsum(desc[::-1])[::-1]
    for k in range(mags.size):
        if rest[k] <= 0:
            break
        lam = (target - k * cap) / rest[k]
        if lam * desc[k] <= cap:
            return np.minimum(lam * mags, cap)
    return np.where(mags > 0, cap, 0.0)


def _repair_rows(vs: np.ndarray, s: int, gamma: float) -> np.ndarray:
    """Shrink the tail of every row violating the cone inequality until it holds, renormalize."""
    order = np.argsort(-np.abs(vs), axis=1, kind="stable")
    head_mask = np.zeros(vs.shape, dtype=bool)
    np.put_along_axis(head_mask, order[:, :s], True, axis=1)
    mags = np.abs(vs)
    lhs = np.sqrt(np.sum(np.where(head_mask, mags * mags, 0.0), axis=1))
    tail_l1 = np.sum(np.where(head_mask, 0.0, mags), axis=1)
    need = gamma / math.sqrt(s) * tail_l1
    bad = lhs < need
    if np.any(bad):
        factor = np.ones(vs.shape[0])
        factor[bad] = lhs[bad] / need[bad] * (1.0 - 1e-12)
        vs = np.where(head_mask, vs, vs * factor[:, None])
    return vs / np.linalg.norm(vs, axis=1, keepdims=True)


# ===== Exact certification =====

def _nsp_lp(b: np.ndarray, support: tuple, complement: np.ndarray, sign: np.ndarray):
    """
    maximize sign^T (B w)_T  s.t.  ||(B w)_Tc||_1 <= 1, with w = w+ - w- free and
    |(B w)_Tc| <= t, sum t <= 1.
    """
    k = b.shape[1]
    b_t = b[list(support)]
    b_tc = b[complement]
    r = complement.size
    obj = sign @ b_t
    c = np.concatenate([obj, -obj, np.zeros(r)])
    eye = np.eye(r)
    g = np.block([
        [b_tc, -b_tc, -eye],
        [-b_tc, b_tc, -eye],
        [np.zeros((1, 2 * k)), np.ones((1, r))],
    ])
    h = np.zeros(2 * r + 1)
    h[-1] = 1.0
    return simplex_max(c, g, h)


def _violates(v: np.ndarray, support: tuple) -> bool:
    mask = np.zeros(v.size, dtype=bool)
    mask[list(support)] = True
    return float(np.sum(np.abs(v[mask]))) >= float(np.sum(np.abs(v[~mask])))


def certify_nsp(a, s: int, tol: float = DEFAULT_NSP_TOL) -> NspReport:
    """
    Decide the NSP of order s for `a` by one LP per (support T, sign pattern).

    NSP holds iff every LP optimum is < 1 - tol. An unbounded LP or an optimum >= 1 + tol
    fails with witness B w*. An optimum in [1 - tol, 1 + tol] is a boundary case: it fails
    only if its witness, recomputed, already satisfies ||v_T||_1 >= ||v_Tc||_1; otherwise the
    answer is estimate_only. Outcomes are reduced in lexicographic (T, sign) order and the
    first failure ends the scan.

    Args:
        a: m x n matrix
        s: Order, 1 <= s <= n
        tol: Strictness margin

    Returns:
        NspReport; status infeasible_at_size when C(n, s) 2^s exceeds the guard

    Example:
        >>> certify_nsp(np.eye(4), 2).status   # NspStatus.CERTIFIED_HOLDS
    """
    a = as_mat(a, name="a")
    n = a.shape[1]
    if not 1 <= s <= n:
        raise ValidationError(f"s must satisfy 1 <= s <= {n} (got {s})", details={"s": s})
    count = math.comb(n, s) * 2**s
    if count > NSP_GUARD:
        logger.warning(f"NSP certification needs {count} LPs (guard {NSP_GUARD})")
        return NspReport(order=s, status=NspStatus.INFEASIBLE_AT_SIZE, tol=tol)

    b = kernel_basis(a)
    if b.shape[1] == 0:
        return NspReport(order=s, status=NspStatus.CERTIFIED_HOLDS, tol=tol, max_ratio=0.0)

    lp_count = 0
    max_ratio = 0.0
    boundary = None
    all_idx = np.arange(n)
    for support in itertools.combinations(range(n), s):
        complement = np.setdiff1d(all_idx, support)
        if complement.size == 0:
            # every kernel vector vanishes off T
            witness = b[:, 0] / np.linalg.norm(b[:, 0])
            return _failure(s, tol, witness, support, lp_count, math.inf)

        for pattern in itertools.product((1.0, -1.0), repeat=s):
            sign = np.array(pattern)
            res = _nsp_lp(b, support, complement, sign)
            lp_count += 1
            k = b.shape[1]
            if res.unbounded:
                w = res.ray[:k] - res.ray[k:2 * k]
                v = b @ w
                return _failure(s, tol, v / np.linalg.norm(v), support, lp_count, math.inf)

            max_ratio = max(max_ratio, res.value)
            if res.value < 1.0 - tol:
                continue
            w = res.z[:k] - res.z[k:2 * k]
            v = b @ w
            v = v / np.linalg.norm(v)
            if res.value >= 1.0 + tol or _violates(v, support):
                return _failure(s, tol, v, support, lp_count, max_ratio)
            if boundary is None:
                boundary = (v, support)

    if boundary is not None:
        logger.info(f"NSP order {s}: boundary optimum within {tol:g} of 1")
        return NspReport(
            order=s, status=NspStatus.ESTIMATE_ONLY, witness=boundary[0],
            witness_support=list(boundary[1]), lp_count=lp_count, tol=tol, max_ratio=max_ratio,
        )
    return NspReport(
        order=s, status=NspStatus.CERTIFIED_HOLDS, lp_count=lp_count, tol=tol,
        max_ratio=max_ratio,
    )


def _failure(s, tol, witness, support, lp_count, max_ratio) -> NspReport:
    logger.debug(f"NSP order {s} fails on T={list(support)}")
    return NspReport(
        order=s, status=NspStatus.CERTIFIED_FAILS, witness=witness,
        witness_support=list(support), lp_count=lp_count, tol=tol, max_ratio=max_ratio,
    )


def certify_synthesis_nsp(phi, dictionary: Dictionary, s: int, tol: float = DEFAULT_NSP_TOL):
    """
    NSP of Phi D together with the full-spark flag of D.

    Phi satisfies the D-NSP iff D has full spark and Phi D has the NSP, so the pair is reported
    side by side. full_spark is None when its enumeration is too large.
    """
    report = certify_nsp(as_mat(phi, name="phi") @ dictionary.mat, s, tol)
    try:
        report.full_spark = full_spark(dictionary)
    except InfeasibleAtSizeError as e:
        logger.warning(f"full spark not checked: {e.message}")
        report.full_spark = None
    return report


# ===== Robust NSP estimation =====

def estimate_robust_tau(
    a, cone: ConeSpec, n_samples: int, refine_iters: int, seed: SeedLike
) -> NspReport:
    """
    tau_hat = 1 / min ||a v||_2 over sampled points of S_gamma, each refined by
    `refine_iters` steps of projected descent (gradient step on ||a v||^2, back to the
    sphere, repair into S_gamma).

    The status is always estimate_only; the minimizing v is returned as the witness.
    """
    a = as_mat(a, name="a")
    if a.shape[1] != cone.n:
        raise ValidationError(
            f"a has {a.shape[1]} columns, cone lives in R^{cone.n}",
            details={"cols": a.shape[1], "n": cone.n},
        )
    current = np.array(sample_cone(cone, n_samples, seed))
    best_vals = np.linalg.norm(current @ a.T, axis=1)
    best_vecs = current.copy()

    norm_sq = op_norm(a) ** 2
    if norm_sq > 0 and refine_iters > 0:
        step = 0.5 / norm_sq
        for _ in range(refine_iters):
            moved = current - step * ((current @ a.T) @ a)
            lengths = np.linalg.norm(moved, axis=1)
            moved = np.where(lengths[:, None] > 0, moved, current)
            moved = _repair_rows(moved / np.linalg.norm(moved, axis=1, keepdims=True), cone.s,
                                 cone.gamma)
            vals = np.linalg.norm(moved @ a.T, axis=1)
            better = vals < best_vals
            best_vals[better] = vals[better]
            best_vecs[better] = moved[better]
            current = moved

    i = int(np.argmin(best_vals))
    min_val = float(best_vals[i])
    tau_hat = 1.0 / min_val if min_val > 0 else math.inf
    logger.debug(f"{cone.describe()}: min ||Av|| = {min_val:.6g}, tau_hat = {tau_hat:.6g}")
    return NspReport(
        order=cone.s,
        status=NspStatus.ESTIMATE_ONLY,
        gamma=cone.gamma,
        tau_hat=tau_hat,
        witness=best_vecs[i].copy(),
        witness_support=sorted(int(j) for j in np.argsort(-np.abs(best_vecs[i]),
                                                          kind="stable")[:cone.s]),
    )


# ===== s-support norm =====

def k_support_norm(v, s: int) -> float:
    """
    Gauge of D_s = conv{unit s-sparse vectors}, by the sorted-threshold formula.

    With z the non-increasing rearrangement of |v| and r in {0, ..., s-1} the unique index with
    z_{s-r-1} > (1 / (r+1)) sum_{i >= s-r} z_i >= z_{s-r} (1-based, z_0 = inf):
        ||v||^2 = sum_{i < s-r} z_i^2 + (sum_{i >= s-r} z_i)^2 / (r + 1)
    Equals ||v||_1 for s = 1 and ||v||_2 for s = n.
    """
    z = rearrange_desc(v)
    n = z.size
    if not 1 <= s <= n:
        raise ValidationError(f"s must satisfy 1 <= s <= {n} (got {s})", details={"s": s})
    if s == n:
        return float(np.linalg.norm(z))
    tail = float(np.sum(z[s:]))
    r = 0
    for r in range(s):
        tail += z[s - r - 1]
        avg = tail / (r + 1)
        upper = z[s - r - 2] if s - r - 2 >= 0 else math.inf
        if upper > avg and z[s - r - 1] <= avg:
            break
    head = float(np.sum(z[:s - r - 1] ** 2))
    return math.sqrt(head + tail * tail / (r + 1))


@dataclass
class ConeInclusionCheck:
    """Gauge of sampled S_gamma vectors against the 2 + 1/gamma inclusion constant"""
    cone: str
    bound: float
    n_samples: int
    max_gauge: float
    max_probe_ratio: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_cone_inclusion(
    cone: ConeSpec, n_samples: int, n_probes: int, seed: SeedLike, slack: float = 1e-9
) -> ConeInclusionCheck:
    """
    Verify S_gamma is contained in (2 + 1/gamma) D_s on sampled cone points.

    Each sample is tested exactly through the s-support norm and, as a necessary condition,
    through the dual pairing <v, u> / top_s_l2(u) over random probes u.
    """
    bound = 2.0 + 1.0 / cone.gamma
    rng = make_rng(seed)
    samples = np.array(sample_cone(cone, n_samples, rng))
    gauges = np.array([k_support_norm(v, cone.s) for v in samples])

    probes = rng.standard_normal((n_probes, cone.n))
    sq = np.sort(probes * probes, axis=1)[:, ::-1]
    dual = np.sqrt(np.sum(sq[:, :cone.s], axis=1))
    ratios = (samples @ probes.T) / dual

    max_gauge = float(gauges.max())
    max_probe = float(ratios.max())
    passed = max_gauge <= bound + slack and max_probe <= bound + slack
    if not passed:
        logger.warning(f"{cone.describe()}: gauge {max_gauge:.6g} exceeds {bound:.6g}")
    return ConeInclusionCheck(
        cone=cone.describe(), bound=bound, n_samples=n_samples,
        max_gauge=max_gauge, max_probe_ratio=max_probe, passed=passed,
    )


# ===== Recovery oracle =====

@dataclass
class RecoveryOracleResult:
    """Exact-BP recovery over (support, sign) patterns"""
    s: int
    instances: int
    exhaustive: bool
    failures: int
    tol: float
    first_failure: Optional[List[int]] = None
    errors: List[float] = field(default_factory=list)

    @property
    def recovered_all(self) -> bool:
        return self.failures == 0


def uniform_recovery_oracle(
    a, s: int, instances: int, tol: float, seed: SeedLike
) -> RecoveryOracleResult:
    """
    Does basis pursuit recover every s-sparse vector?

    Recovery of x depends only on its support and sign pattern, so x is taken with +-1
    entries. When C(n, s) 2^s <= instances every pattern is tried, otherwise `instances`
    random patterns are. Success means ||x_hat - x||_2 <= tol max(1, ||x||_2).
    """
    a = as_mat(a, name="a")
    n = a.shape[1]
    if not 1 <= s <= n:
        raise ValidationError(f"s must satisfy 1 <= s <= {n} (got {s})", details={"s": s})
    total = math.comb(n, s) * 2**s
    exhaustive = total <= instances

    def patterns():
        if exhaustive:
            for support in itertools.combinations(range(n), s):
                for signs in itertools.product((1.0, -1.0), repeat=s):
                    yield list(support), np.array(signs)
        else:
            rng = make_rng(seed)
            for _ in range(instances):
                support = sorted(int(i) for i in rng.permutation(n)[:s])
                yield support, rng.integers(0, 2, size=s) * 2.0 - 1.0

    failures = 0
    first = None
    errors = []
    tried = 0
    for support, signs in patterns():
        x = np.zeros(n)
        x[support] = signs
        x_hat = basis_pursuit_lp(a, a @ x)
        err = float(np.linalg.norm(x_hat - x))
        errors.append(err)
        tried += 1
        if err > tol * max(1.0, float(np.linalg.norm(x))):
            failures += 1
            if first is None:
                first = support
    return RecoveryOracleResult(
        s=s, instances=tried, exhaustive=exhaustive, failures=failures, tol=tol,
        first_failure=first, errors=errors,
    )
