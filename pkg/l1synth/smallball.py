"""
Monte Carlo estimators for the probabilistic side of sparse recovery.

All expectations are plain Monte Carlo averages reported with standard errors. Logarithms are
natural. Measurement rows phi are drawn raw from their entry law; the 1/sqrt(m) scaling of
the measurement matrix enters through psi = D^T phi / sqrt(m).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .base import ConeSpec, EnsembleSpec, EntryLaw, MomentProfile
from .dictionary import Dictionary, make_random_dict
from .ensembles import (
    RowSampler,
    SeedLike,
    derive_seed,
    law_row_sampler,
    make_rng,
    profile_samples,
    sample_entries,
    small_ball_estimate,
)
from .exceptions import ValidationError
from .nsp import sample_cone

logger = logging.getLogger(__name__)

DEFAULT_BOUND_CONSTANT = 3.0
MARKOV_SLACK = 1.5
_CHUNK = 256

# (rng, n, s, count) -> (count, n) samples of z
MarginalSampler = Callable[[np.random.Generator, int, int, int], np.ndarray]


@dataclass
class WidthEstimate:
    """Mean empirical width of D_s (or of S_gamma through its dominating multiple)"""
    value: float
    stderr: float
    n_trials: int
    s: int
    m: int
    cone: Optional[str] = None

    def __post_init__(self):
        if self.value < 0 or self.stderr < 0:
            raise ValidationError(
                "width estimates are non-negative",
                details={"value": self.value, "stderr": self.stderr},
            )

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class LemmaCheck:
    """
    Ratios of the rearrangement quantity (E sum_{i<=s} (z_i*)^2)^{1/2} to sqrt(s log(n/s)).

    passed is True iff every ratio is <= bound_constant.
    """
    grid: List[Tuple[int, int]]
    estimates: List[float]
    stderr: List[float]
    ratios: List[float]
    bound_constant: float
    n_trials: int
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = all(r <= self.bound_constant for r in self.ratios)

    def rows(self) -> List[dict]:
        return [
            {"n": n, "s": s, "estimate": e, "stderr": se, "ratio": r,
             "passed": r <= self.bound_constant}
            for (n, s), e, se, r in zip(self.grid, self.estimates, self.stderr, self.ratios)
        ]


@dataclass
class LowerBoundCheck:
    """Empirical frequency of inf_{x in S} ||Psi x|| >= A sqrt(m) Q_2A - 2 sqrt(m) W - A t"""
    rhs: float
    q_hat: float
    width: float
    A: float
    t: float
    m: int
    infima: List[float]
    frequency: float
    claimed_probability: float

    @property
    def passed(self) -> bool:
        return self.frequency >= self.claimed_probability

    def rows(self) -> List[dict]:
        return [
            {"rep": i, "infimum": v, "rhs": self.rhs, "holds": v >= self.rhs}
            for i, v in enumerate(self.infima)
        ]


@dataclass
class MarkovTailCheck:
    """P(|X| >= k ||X||_p) <= k^-p on the stable p of a moment profile"""
    law: str
    results: List[dict]
    slack: float
    passed: bool

    def rows(self) -> List[dict]:
        return self.results


def adaptive_dof(n: int, s: int) -> int:
    """Student-t degrees of freedom ceil(2 log(n/s)), at least 3 so the law stays standardized."""
    return max(3, int(math.ceil(2.0 * math.log(n / s))))


def law_marginal(law: EntryLaw) -> MarginalSampler:
    """z with i.i.d. coordinates from `law`."""
    def sampler(rng: np.random.Generator, n: int, s: int, count: int) -> np.ndarray:
        return sample_entries(law, rng, (count, n))
    return sampler


def adaptive_student_t_marginal() -> MarginalSampler:
    """z with i.i.d. standardized StudentT(adaptive_dof(n, s)) coordinates."""
    def sampler(rng: np.random.Generator, n: int, s: int, count: int) -> np.ndarray:
        return sample_entries(EntryLaw.student_t(adaptive_dof(n, s)), rng, (count, n))
    return sampler


def _top_s_sq(z: np.ndarray, s: int) -> np.ndarray:
    """Row-wise sum of the s largest squares."""
    sq = z * z
    n = sq.shape[1]
    if s >= n:
        return sq.sum(axis=1)
    return np.partition(sq, n - s, axis=1)[:, n - s:].sum(axis=1)


def _resolve_rows(ensemble, m: Optional[int]) -> Tuple[RowSampler, int]:
    if isinstance(ensemble, EnsembleSpec):
        return law_row_sampler(ensemble.law, ensemble.cols), ensemble.rows
    if isinstance(ensemble, EntryLaw):
        raise ValidationError("an EntryLaw needs the ambient dimension; pass an EnsembleSpec")
    if m is None:
        raise ValidationError("m is required when the row sampler is a callable")
    return ensemble, m


def estimate_width(
    dictionary: Union[Dictionary, EnsembleSpec],
    ensemble: Union[EnsembleSpec, RowSampler],
    s: int,
    gamma: Optional[float],
    n_trials: int,
    seed: SeedLike,
    m: Optional[int] = None,
    dominating: bool = False,
) -> WidthEstimate:
    """
    Mean empirical width W_m(D_s, D^T phi / sqrt(m)) = m^-1 E top_s_l2(D^T V),
    V = m^-1/2 sum_i eps_i phi_i.

    Args:
        dictionary: Fixed Dictionary, or a dictionary EnsembleSpec redrawn every trial
        ensemble: EnsembleSpec with rows = m, cols = d (entries drawn raw from its law), or
            a callable (rng, count) -> (count, d) together with `m`
        s: Sparsity, 1 <= s <= n
        gamma: Cone parameter; required when `dominating`
        n_trials: Monte Carlo trials, >= 100
        seed: Master seed; trial t uses derive_seed(seed, t)
        m: Row count when `ensemble` is a callable
        dominating: Multiply by 2 + 1/gamma, the width bound for S_gamma

    Example:
        >>> spec = EnsembleSpec.measurement(EntryLaw.gaussian(), 128, 64)
        >>> D = make_random_dict(EnsembleSpec.dictionary(EntryLaw.rademacher(), 64, 256), 1)
        >>> estimate_width(D, spec, 8, None, 1000, seed=2).value
    """
    if n_trials < 100:
        raise ValidationError("n_trials must be >= 100", details={"n_trials": n_trials})
    if dominating and not (gamma is not None and 0 < gamma < 1):
        raise ValidationError(
            "the dominating width needs 0 < gamma < 1", details={"gamma": gamma}
        )
    rows, m = _resolve_rows(ensemble, m)
    n = dictionary.cols if isinstance(dictionary, EnsembleSpec) else dictionary.n
    if not 1 <= s <= n:
        raise ValidationError(f"s must satisfy 1 <= s <= {n} (got {s})", details={"s": s})

    values = np.empty(n_trials)
    for trial in range(n_trials):
        rng = make_rng(derive_seed(int(seed), trial))
        if isinstance(dictionary, EnsembleSpec):
            dmat = make_random_dict(dictionary, rng).mat
        else:
            dmat = dictionary.mat
        phi = rows(rng, m)
        signs = rng.integers(0, 2, size=m) * 2.0 - 1.0
        v = signs @ phi / math.sqrt(m)
        values[trial] = math.sqrt(float(_top_s_sq((dmat.T @ v)[None, :], s)[0])) / m

    factor = 2.0 + 1.0 / gamma if dominating else 1.0
    value = factor * float(values.mean())
    stderr = factor * float(values.std(ddof=1) / math.sqrt(n_trials))
    cone = ConeSpec(n, s, gamma).describe() if gamma is not None else None
    return WidthEstimate(value=value, stderr=stderr, n_trials=n_trials, s=s, m=m, cone=cone)


def check_rearrangement_lemma(
    sampler: Union[EntryLaw, MarginalSampler],
    grid: Sequence[Tuple[int, int]],
    n_trials: int,
    bound_constant: float = DEFAULT_BOUND_CONSTANT,
    seed: SeedLike = 0,
) -> LemmaCheck:
    """
    Estimate (E sum_{i<=s} (z_i*)^2)^{1/2} for each (n, s) and compare with sqrt(s log(n/s)).

    The standard error comes from the delta method on the mean of the top-s sum of squares.
    Grid points need 1 <= s <= n/2 so that log(n/s) >= log 2.
    """
    if isinstance(sampler, EntryLaw):
        sampler = law_marginal(sampler)
    if n_trials < 2:
        raise ValidationError("n_trials must be >= 2", details={"n_trials": n_trials})
    grid = [(int(n), int(s)) for n, s in grid]
    for n, s in grid:
        if not 1 <= s <= n / 2:
            raise ValidationError(
                f"grid point (n={n}, s={s}) needs 1 <= s <= n/2", details={"n": n, "s": s}
            )

    estimates, stderrs, ratios = [], [], []
    for n, s in grid:
        rng = make_rng(derive_seed(int(seed), n, s))
        sums = np.empty(n_trials)
        for start in range(0, n_trials, _CHUNK):
            count = min(_CHUNK, n_trials - start)
            sums[start:start + count] = _top_s_sq(sampler(rng, n, s, count), s)
        mean = float(sums.mean())
        estimate = math.sqrt(mean)
        se = float(sums.std(ddof=1) / math.sqrt(n_trials)) / (2.0 * estimate)
        ratio = estimate / math.sqrt(s * math.log(n / s))
        logger.info(f"(n={n}, s={s}): estimate {estimate:.4f} +- {se:.4f}, ratio {ratio:.3f}")
        estimates.append(estimate)
        stderrs.append(se)
        ratios.append(ratio)
    return LemmaCheck(
        grid=grid, estimates=estimates, stderr=stderrs, ratios=ratios,
        bound_constant=bound_constant, n_trials=n_trials,
    )


def check_khintchine(
    ensemble: EnsembleSpec,
    a,
    p_max: float,
    m: int,
    n_trials: int,
    seed: SeedLike,
) -> MomentProfile:
    """
    L^p norms of <a, V>, V = m^-1/2 sum_i eps_i phi_i, for p in {2, ..., ceil(p_max)}.

    p > log(n_trials) / 2 is flagged unreliable. sqrt_p_growth_ok compares every stable p
    against sqrt(p) growth with factor 2 slack: ||.||_p <= 2 ||.||_2 sqrt(p / 2).
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1 or abs(float(np.linalg.norm(a)) - 1.0) > 1e-9:
        raise ValidationError("direction a must be a unit vector")
    if p_max < 2:
        raise ValidationError("p_max must be >= 2", details={"p_max": p_max})
    rng = make_rng(seed)
    rows = law_row_sampler(ensemble.law, a.size)
    chunk = max(1, 2**20 // max(1, m * a.size))
    samples = np.empty(n_trials)
    for start in range(0, n_trials, chunk):
        count = min(chunk, n_trials - start)
        proj = (rows(rng, count * m) @ a).reshape(count, m)
        signs = rng.integers(0, 2, size=(count, m)) * 2.0 - 1.0
        samples[start:start + count] = np.sum(signs * proj, axis=1) / math.sqrt(m)

    p_values = list(range(2, int(math.ceil(p_max)) + 1))
    profile = profile_samples(samples, p_values, rng, p_limit=math.log(n_trials) / 2.0)
    l2 = profile.estimate_at(2.0)
    profile.sqrt_p_growth_ok = all(
        e <= 2.0 * l2 * math.sqrt(p / 2.0)
        for p, e, f in zip(profile.p_values, profile.estimates, profile.flagged)
        if not f
    )
    logger.info(
        f"khintchine {ensemble.law.tag}: alpha_hat={profile.alpha_hat:.3f}, "
        f"stable p={profile.stable_p()}"
    )
    return profile


def check_lower_bound(
    dictionary: Dictionary,
    ensemble: Union[EnsembleSpec, EntryLaw],
    cone: ConeSpec,
    m: int,
    A: float,
    t: float,
    n_reps: int,
    n_cone_samples: int,
    seed: SeedLike,
    n_width_trials: int = 200,
    n_small_ball_samples: int = 20_000,
) -> LowerBoundCheck:
    """
    Small-ball lower bound for Psi = Phi D with rows psi_i = D^T phi_i / sqrt(m):

        inf_{x in S_gamma} ||Psi x||_2 >= A sqrt(m) Q_2A - 2 sqrt(m) W - A t

    holds with probability >= 1 - exp(-t^2 / 2). Q_2A is estimated over the cone samples,
    W is the dominating width (2 + 1/gamma) W(D_s). Each repetition draws Phi and takes the
    minimum of ||Psi x|| over fresh cone samples.
    """
    if not (A > 0 and t > 0):
        raise ValidationError("A and t must be > 0", details={"A": A, "t": t})
    if cone.n != dictionary.n:
        raise ValidationError(
            "cone dimension must equal the dictionary column count",
            details={"cone": cone.n, "n": dictionary.n},
        )
    law = ensemble.law if isinstance(ensemble, EnsembleSpec) else ensemble
    spec = EnsembleSpec(law, m, dictionary.d)
    dmat = dictionary.mat
    raw_rows = law_row_sampler(law, dictionary.d)

    def psi_rows(rng: np.random.Generator, count: int) -> np.ndarray:
        return raw_rows(rng, count) @ dmat / math.sqrt(m)

    directions = np.array(sample_cone(cone, n_cone_samples, derive_seed(int(seed), 0)))
    q_hat = small_ball_estimate(
        psi_rows, directions, 2.0 * A, n_cone_samples, n_small_ball_samples,
        derive_seed(int(seed), 1),
    )
    width = estimate_width(
        dictionary, spec, cone.s, cone.gamma, n_width_trials, derive_seed(int(seed), 2),
        dominating=True,
    ).value
    rhs = A * math.sqrt(m) * q_hat - 2.0 * math.sqrt(m) * width - A * t

    infima = []
    for rep in range(n_reps):
        rng = make_rng(derive_seed(int(seed), 3, rep))
        psi = psi_rows(rng, m)
        xs = np.array(sample_cone(cone, n_cone_samples, rng))
        infima.append(float(np.linalg.norm(xs @ psi.T, axis=1).min()))
    frequency = float(np.mean(np.array(infima) >= rhs))
    claimed = 1.0 - math.exp(-t * t / 2.0)
    logger.info(
        f"lower bound: Q_2A={q_hat:.4f}, W={width:.4f}, rhs={rhs:.4f}, "
        f"holds {frequency:.2%} (claimed {claimed:.2%})"
    )
    return LowerBoundCheck(
        rhs=rhs, q_hat=q_hat, width=width, A=A, t=t, m=m, infima=infima,
        frequency=frequency, claimed_probability=claimed,
    )


def check_markov_tail(
    law: EntryLaw,
    p_values: Sequence[float],
    ks: Sequence[float],
    n_samples: int,
    seed: SeedLike,
    slack: float = MARKOV_SLACK,
) -> MarkovTailCheck:
    """
    Markov's inequality on the empirical law: P(|X| >= k ||X||_p) <= slack * k^-p for every
    stable p and every k.
    """
    rng = make_rng(seed)
    x = np.abs(sample_entries(law, rng, n_samples))
    profile = profile_samples(x, p_values, rng)
    rows = []
    for p, norm, flagged in zip(profile.p_values, profile.estimates, profile.flagged):
        if flagged:
            continue
        for k in ks:
            freq = float(np.mean(x >= k * norm))
            bound = float(k) ** (-p)
            rows.append({
                "law": law.tag, "p": p, "k": float(k), "frequency": freq, "bound": bound,
                "passed": freq <= slack * bound,
            })
    passed = all(r["passed"] for r in rows)
    if not passed:
        logger.warning(f"{law.tag}: Markov tail check failed")
    return MarkovTailCheck(law=law.tag, results=rows, slack=slack, passed=passed)
