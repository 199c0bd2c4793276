"""
Experiment orchestration.

An experiment is described by an `ExperimentConfig` (JSON, unknown keys rejected) and produces
an `ExperimentResult`: named pandas tables plus a summary dict, persisted by `results.py`.

Trials are pure functions of a `TrialJob`. The job carries the derived trial seed
(ensembles.trial_seed of the master seed, the cell coordinates and the trial index), so
outputs do not depend on how many worker processes ran them.
"""

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import isotonic_regression

from .base import ConeSpec, EnsembleSpec, EntryLaw, LawKind, NspStatus, SolverConfig
from .dictionary import (
    Dictionary,
    full_spark,
    load_dictionary,
    make_identity,
    make_random_dict,
)
from .ensembles import derive_seed, cell_key, make_rng, sample_matrix, trial_seed
from .exceptions import ConfigError, InfeasibleAtSizeError, NumericalAbortError
from .matcore import op_norm
from .nsp import certify_nsp, estimate_robust_tau, uniform_recovery_oracle
from .smallball import (
    adaptive_dof,
    adaptive_student_t_marginal,
    check_khintchine,
    check_lower_bound,
    check_rearrangement_lemma,
    estimate_width,
    law_marginal,
)
from .solver import best_s_term_error, make_problem, recovery_bound, synthesize

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KINDS = ("phase", "noise", "nsp_corpus", "lemma51", "khintchine", "width", "lowerbound", "tau")
SUITES = ("lemma51", "khintchine", "width", "lowerbound", "tau")
DICTIONARY_KINDS = ("identity", "random", "file")
TAIL_DECAY = 1.0

TRIAL_COLUMNS = [
    "cell", "trial", "seed", "law", "m", "s", "eps", "tail",
    "success", "err_x", "err_z", "sigma_s", "x0_norm", "signal_ratio",
    "iterations", "converged", "final_feasibility", "aborted",
]


# ===== Configuration =====

def _parse_law(entry: Any) -> Dict[str, Any]:
    """Normalize a law entry; student_t accepts dof "auto" = ceil(2 log(n/s))."""
    if isinstance(entry, dict) and entry.get("kind") == LawKind.STUDENT_T.value \
            and entry.get("dof") == "auto":
        unknown = set(entry) - {"kind", "dof"}
        if unknown:
            raise ConfigError(f"unknown law keys: {sorted(unknown)}")
        return {"kind": "student_t", "dof": "auto"}
    return EntryLaw.from_dict(entry).to_dict()


def resolve_law(entry: Dict[str, Any], n: int, s: int) -> EntryLaw:
    if entry.get("dof") == "auto":
        return EntryLaw.student_t(adaptive_dof(n, s))
    return EntryLaw.from_dict(entry)


def law_label(entry: Dict[str, Any]) -> str:
    if entry.get("dof") == "auto":
        return "student_t(auto)"
    return EntryLaw.from_dict(entry).tag


@dataclass
class DictionarySpec:
    """{"kind": "identity"} | {"kind": "random", "law": {...}} | {"kind": "file", "path": ...}"""
    kind: str = "identity"
    law: Optional[EntryLaw] = None
    path: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Any) -> "DictionarySpec":
        if isinstance(data, str):
            data = {"kind": data}
        if not isinstance(data, dict):
            raise ConfigError("dictionary must be an object", details={"got": data})
        unknown = set(data) - {"kind", "law", "path"}
        if unknown:
            raise ConfigError(f"unknown dictionary keys: {sorted(unknown)}")
        kind = data.get("kind", "identity")
        if kind not in DICTIONARY_KINDS:
            raise ConfigError(
                f"unknown dictionary kind: {kind}", details={"available": list(DICTIONARY_KINDS)}
            )
        if kind == "random":
            return cls(kind, law=EntryLaw.from_dict(data.get("law", "rademacher")))
        if kind == "file":
            if not data.get("path"):
                raise ConfigError("file dictionary needs a path")
            return cls(kind, path=str(data["path"]))
        return cls(kind)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind}
        if self.law is not None:
            out["law"] = self.law.to_dict()
        if self.path is not None:
            out["path"] = self.path
        return out


@dataclass
class ExperimentConfig:
    """
    One experiment. Grids expand into cells; every cell runs `trials_per_cell` trials.

    Suite parameters (n_grid, bound_constant, p_max, n_samples, direction, A, t,
    n_cone_samples, oracle_*, nsp_tol, gamma_grid, refine_iters) are ignored by kinds that do
    not use them.
    """
    name: str
    kind: str
    n: int = 256
    d: Optional[int] = None
    s: int = 8
    s_grid: Optional[List[int]] = None
    m: Optional[int] = None
    m_grid: List[int] = field(default_factory=lambda: [64])
    laws: List[Dict[str, Any]] = field(default_factory=lambda: [{"kind": "gaussian"}])
    dictionary: DictionarySpec = field(default_factory=DictionarySpec)
    gamma: float = 0.5
    eps_grid: List[float] = field(default_factory=lambda: [0.0])
    tail_grid: List[float] = field(default_factory=lambda: [0.0])
    trials_per_cell: int = 100
    master_seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    success_tol: float = 1e-4
    n_grid: List[int] = field(default_factory=lambda: [256, 1024, 4096])
    bound_constant: float = 3.0
    p_max: float = 6.0
    n_samples: int = 10_000
    direction: str = "e1"
    A: float = 0.05
    t: Optional[float] = None
    n_cone_samples: int = 200
    oracle_instances: int = 2000
    oracle_tol: float = 1e-6
    nsp_tol: float = 1e-7
    gamma_grid: List[float] = field(default_factory=lambda: [0.25, 0.5, 0.75])
    refine_iters: int = 50

    def __post_init__(self):
        self.validate()

    @property
    def dim_d(self) -> int:
        return self.d if self.d is not None else self.n

    @property
    def m_values(self) -> List[int]:
        return [self.m] if self.m is not None and self.kind == "noise" else list(self.m_grid)

    @property
    def s_values(self) -> List[int]:
        return list(self.s_grid) if self.s_grid else [self.s]

    def validate(self) -> None:
        def fail(message, **details):
            raise ConfigError(message, details=details)

        if self.kind not in KINDS:
            fail(f"unknown experiment kind: {self.kind}", available=list(KINDS))
        if not self.name:
            fail("name must be non-empty")
        if self.n < 1:
            fail("n must be >= 1", n=self.n)
        if self.dim_d < 1 or self.dim_d > self.n:
            fail("d must satisfy 1 <= d <= n", d=self.d, n=self.n)
        if self.dictionary.kind == "identity" and self.dim_d != self.n:
            fail("the identity dictionary needs d == n", d=self.d, n=self.n)
        for name in ("m_grid", "laws", "eps_grid", "tail_grid", "n_grid", "gamma_grid"):
            if not getattr(self, name):
                fail(f"{name} must be non-empty")
        if self.s_grid is not None and not self.s_grid:
            fail("s_grid must be non-empty")
        if any(s < 1 for s in self.s_values) or (
            self.kind not in ("lemma51",) and any(s > self.n for s in self.s_values)
        ):
            fail("sparsity out of range", s=self.s_values, n=self.n)
        if any(m < 1 for m in self.m_grid) or (self.m is not None and self.m < 1):
            fail("m must be >= 1", m_grid=self.m_grid, m=self.m)
        if self.trials_per_cell < 1:
            fail("trials_per_cell must be >= 1", trials_per_cell=self.trials_per_cell)
        if any(not (e >= 0 and math.isfinite(e)) for e in self.eps_grid):
            fail("eps values must be finite and >= 0", eps_grid=self.eps_grid)
        if any(t < 0 for t in self.tail_grid):
            fail("tail amplitudes must be >= 0", tail_grid=self.tail_grid)
        if not all(0 < g < 1 for g in [self.gamma, *self.gamma_grid]):
            fail("gamma values must lie in (0, 1)", gamma=self.gamma, gamma_grid=self.gamma_grid)
        if not self.success_tol > 0:
            fail("success_tol must be > 0", success_tol=self.success_tol)
        if self.master_seed < 0:
            fail("master_seed must be >= 0", master_seed=self.master_seed)
        if self.direction not in ("e1", "random"):
            fail("direction must be 'e1' or 'random'", direction=self.direction)
        if not self.A > 0 or (self.t is not None and not self.t > 0):
            fail("A and t must be > 0", A=self.A, t=self.t)
        if self.n_cone_samples < 1 or self.refine_iters < 0 or self.n_samples < 1:
            fail("sample counts must be positive")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """
        Parse a config document.

        Raises:
            ConfigError: On unknown keys, missing name/kind or invalid values
        """
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        allowed = {f.name for f in fields(cls)}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(
                f"unknown config keys: {sorted(unknown)}", details={"allowed": sorted(allowed)}
            )
        for key in ("name", "kind"):
            if key not in data:
                raise ConfigError(f"missing required key: {key}")
        values = dict(data)
        if "laws" in values:
            if not isinstance(values["laws"], list):
                raise ConfigError("laws must be a list")
            values["laws"] = [_parse_law(entry) for entry in values["laws"]]
        if "dictionary" in values:
            values["dictionary"] = DictionarySpec.from_dict(values["dictionary"])
        if "solver" in values:
            values["solver"] = SolverConfig.from_dict(values["solver"] or {})
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(f"invalid config: {e}")

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}", details={"path": path})
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}", details={"path": path})
        return cls.from_dict(data)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self) -> Dict[str, Any]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (DictionarySpec, SolverConfig)):
                value = value.to_dict()
            out[f.name] = value
        return out


# ===== Trials =====

@dataclass
class TrialJob:
    """Everything one recovery trial needs; picklable for the process pool"""
    cell: int
    trial: int
    seed: int
    law: Dict[str, Any]
    law_tag: str
    n: int
    d: int
    s: int
    m: int
    eps: float
    tail: float
    dict_kind: str
    dict_law: Optional[Dict[str, Any]]
    dict_mat: Optional[np.ndarray]
    solver: Dict[str, Any]
    success_tol: float


@dataclass
class TrialRecord:
    """One row of trials.csv"""
    cell: int
    trial: int
    seed: int
    law: str
    m: int
    s: int
    eps: float
    tail: float
    success: bool
    err_x: float
    err_z: float
    sigma_s: float
    x0_norm: float
    signal_ratio: float
    iterations: int
    converged: bool
    final_feasibility: float
    aborted: bool = False


def draw_signal(rng: np.random.Generator, n: int, s: int, tail: float = 0.0) -> np.ndarray:
    """
    +-1 entries on a uniformly random support of size s; with tail > 0 the remaining
    coordinates get tail * j^-1 (j = 1, 2, ...) in random order with random signs.
    """
    x = np.zeros(n)
    perm = rng.permutation(n)
    support = perm[:s]
    x[support] = rng.integers(0, 2, size=s) * 2.0 - 1.0
    if tail > 0 and s < n:
        rest = perm[s:]
        mags = tail * np.arange(1, n - s + 1, dtype=np.float64) ** (-TAIL_DECAY)
        x[rest] = mags * (rng.integers(0, 2, size=n - s) * 2.0 - 1.0)
    return x


def draw_noise(rng: np.random.Generator, m: int, eps: float) -> np.ndarray:
    """Gaussian direction rescaled to ||e||_2 = eps."""
    if eps == 0:
        return np.zeros(m)
    g = rng.standard_normal(m)
    return eps * g / np.linalg.norm(g)


def build_instance(job: TrialJob):
    """(phi, dictionary, x0, e) of a trial, from its seed alone."""
    law = EntryLaw.from_dict(job.law)
    phi = sample_matrix(EnsembleSpec.measurement(law, job.m, job.d), derive_seed(job.seed, 0))
    if job.dict_kind == "identity":
        dictionary = make_identity(job.n)
    elif job.dict_kind == "random":
        spec = EnsembleSpec.dictionary(EntryLaw.from_dict(job.dict_law), job.d, job.n)
        dictionary = make_random_dict(spec, derive_seed(job.seed, 1))
    else:
        dictionary = Dictionary.from_matrix(job.dict_mat, with_coherence=False)
    rng = make_rng(derive_seed(job.seed, 2))
    x0 = draw_signal(rng, job.n, job.s, job.tail)
    e = draw_noise(rng, job.m, job.eps)
    return phi, dictionary, x0, e


def run_trial(job: TrialJob) -> TrialRecord:
    """Solve one instance; numerical aborts become failed records."""
    phi, dictionary, x0, e = build_instance(job)
    x0_norm = float(np.linalg.norm(x0))
    sigma_s = best_s_term_error(x0, job.s)
    common = dict(
        cell=job.cell, trial=job.trial, seed=job.seed, law=job.law_tag, m=job.m, s=job.s,
        eps=job.eps, tail=job.tail, sigma_s=sigma_s, x0_norm=x0_norm,
    )
    problem = make_problem(phi, dictionary, x0, e, eps=job.eps)
    try:
        report = synthesize(problem, SolverConfig.from_dict(job.solver))
    except NumericalAbortError as e:
        logger.error(f"cell {job.cell} trial {job.trial} aborted: {e.message}")
        return TrialRecord(
            **common, success=False, err_x=math.nan, err_z=math.nan, signal_ratio=math.nan,
            iterations=int(e.details.get("iteration", 0)), converged=False,
            final_feasibility=math.nan, aborted=True,
        )
    dict_norm = op_norm(dictionary.mat)
    ratio = report.err_z / (dict_norm * report.err_x) if report.err_x > 0 else 0.0
    return TrialRecord(
        **common,
        success=bool(report.err_x <= job.success_tol * max(1.0, x0_norm)),
        err_x=report.err_x,
        err_z=report.err_z,
        signal_ratio=float(ratio),
        iterations=report.iterations,
        converged=report.converged,
        final_feasibility=report.final_feasibility,
    )


def map_jobs(fn: Callable, jobs: Sequence, threads: int = 1) -> List:
    """Apply fn to every job, in a process pool when threads > 1; results keep job order."""
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    return [fn(job) for job in jobs]


def run_trials(jobs: Sequence[TrialJob], threads: int = 1) -> List[TrialRecord]:
    records = map_jobs(run_trial, jobs, threads)
    return sorted(records, key=lambda r: (r.cell, r.trial))


def trials_frame(records: Sequence[TrialRecord]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in records], columns=TRIAL_COLUMNS)


@dataclass
class ExperimentResult:
    """Tables to persist (file stem -> DataFrame) and the summary document"""
    name: str
    kind: str
    tables: Dict[str, pd.DataFrame]
    summary: Dict[str, Any]


# ===== Recovery experiments =====

def _load_dictionary_matrix(cfg: ExperimentConfig) -> Optional[np.ndarray]:
    if cfg.dictionary.kind != "file":
        return None
    dictionary = load_dictionary(cfg.dictionary.path)
    if dictionary.d != cfg.dim_d or dictionary.n != cfg.n:
        raise ConfigError(
            f"dictionary file is {dictionary.d}x{dictionary.n}, config says {cfg.dim_d}x{cfg.n}",
            details={"path": cfg.dictionary.path},
        )
    return dictionary.mat


def recovery_jobs(cfg: ExperimentConfig) -> List[TrialJob]:
    """Cells in (law, m, s, eps, tail) order, trials within each cell."""
    dict_mat = _load_dictionary_matrix(cfg)
    dict_law = cfg.dictionary.law.to_dict() if cfg.dictionary.law is not None else None
    jobs = []
    cell = 0
    for entry in cfg.laws:
        for m in cfg.m_values:
            for s in cfg.s_values:
                law = resolve_law(entry, cfg.n, s)
                for eps in cfg.eps_grid:
                    for tail in cfg.tail_grid:
                        coords = {
                            "kind": cfg.kind, "law": law.tag, "m": m, "s": s,
                            "eps": eps, "tail": tail,
                        }
                        for trial in range(cfg.trials_per_cell):
                            jobs.append(TrialJob(
                                cell=cell, trial=trial,
                                seed=trial_seed(cfg.master_seed, coords, trial),
                                law=law.to_dict(), law_tag=law.tag, n=cfg.n, d=cfg.dim_d,
                                s=s, m=m, eps=float(eps), tail=float(tail),
                                dict_kind=cfg.dictionary.kind, dict_law=dict_law,
                                dict_mat=dict_mat, solver=cfg.solver.to_dict(),
                                success_tol=cfg.success_tol,
                            ))
                        cell += 1
    return jobs


def cell_summary(trials: pd.DataFrame) -> pd.DataFrame:
    """Per-cell success rate, convergence rate and median errors."""
    grouped = trials.groupby(["cell", "law", "m", "s", "eps", "tail"], sort=True)
    out = grouped.agg(
        trials=("trial", "count"),
        success_rate=("success", "mean"),
        converged_rate=("converged", "mean"),
        median_err_x=("err_x", "median"),
        median_sigma_s=("sigma_s", "median"),
    ).reset_index()
    return out


def success_threshold_m(ms: Sequence[int], rates: Sequence[float], level: float = 0.95):
    """
    Smallest m whose isotonically smoothed success rate reaches `level` (None if none does).

    Returns (m or None, smoothed rates).
    """
    order = np.argsort(ms)
    ms_sorted = np.asarray(ms)[order]
    smoothed = isotonic_regression(np.asarray(rates, dtype=np.float64)[order]).x
    hits = np.flatnonzero(smoothed >= level)
    m_hit = int(ms_sorted[hits[0]]) if hits.size else None
    return m_hit, smoothed


def run_phase(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """
    Success rate over the (law, m) grid.

    Every trial samples Phi and D, draws a +-1 signal on a random support and (for eps > 0)
    noise with ||e|| = eps, solves the synthesis program and records the outcome. The summary
    reports per-cell rates and the empirical 95%-success m of every law.
    """
    if cfg.kind != "phase":
        raise ConfigError(f"run_phase needs kind 'phase' (got {cfg.kind})")
    jobs = recovery_jobs(cfg)
    logger.info(f"phase '{cfg.name}': {len(jobs)} trials on {threads} worker(s)")
    trials = trials_frame(run_trials(jobs, threads))
    cells = cell_summary(trials)
    for row in cells.itertuples():
        logger.info(
            f"cell m={row.m} law={row.law}: {row.success_rate:.2f} success ({row.trials} trials)"
        )

    curves = {}
    for (law, s, eps), group in cells.groupby(["law", "s", "eps"], sort=False):
        group = group.groupby("m", sort=True)["success_rate"].mean()
        m95, smoothed = success_threshold_m(group.index.tolist(), group.tolist())
        key = f"{law}|s={s}|eps={eps:g}"
        curves[key] = {
            "m": [int(m) for m in group.index],
            "success_rate": [float(r) for r in group],
            "isotonic": [float(r) for r in smoothed],
            "max_isotonic_gap": float(np.max(np.abs(smoothed - group.to_numpy()))),
            "m95": m95,
        }
    summary = {
        "schema_version": SCHEMA_VERSION,
        "success_tol": cfg.success_tol,
        "cells": cells.to_dict(orient="records"),
        "curves": curves,
    }
    return ExperimentResult(cfg.name, cfg.kind, {"trials": trials}, summary)


def _fit_noise(trials: pd.DataFrame) -> Dict[str, Any]:
    """Least squares err_x ~ c0 sigma_s / sqrt(s) + c1 eps, with R^2."""
    ok = trials[~trials["aborted"]]
    design = np.column_stack([ok["sigma_s"] / np.sqrt(ok["s"]), ok["eps"]])
    target = ok["err_x"].to_numpy()
    active = np.any(design != 0, axis=0)
    coef = np.zeros(2)
    if np.any(active):
        coef[active], *_ = np.linalg.lstsq(design[:, active], target, rcond=None)
    residual = target - design @ coef
    total = float(np.sum((target - target.mean()) ** 2))
    r2 = 1.0 - float(np.sum(residual ** 2)) / total if total > 0 else 1.0
    return {"c0": float(coef[0]), "c1": float(coef[1]), "r2": r2}


def _median_eps_fit(cells: pd.DataFrame) -> Dict[str, Any]:
    """median err_x = C eps through the origin, over eps > 0 cells with an exactly sparse x0."""
    rows = cells[(cells["eps"] > 0) & (cells["tail"] == 0)]
    if rows.empty:
        return {"C": None, "C_dominating": None, "r2": None}
    eps = rows["eps"].to_numpy()
    med = rows["median_err_x"].to_numpy()
    c = float(eps @ med / (eps @ eps))
    total = float(np.sum(med * med))
    r2 = 1.0 - float(np.sum((med - c * eps) ** 2)) / total if total > 0 else 1.0
    return {"C": c, "C_dominating": float(np.max(med / eps)), "r2": r2}


def run_noise(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """
    Robustness at fixed (m, s): sweeps eps_grid and tail_grid, fits the error model
    err_x ~ c0 sigma_s / sqrt(s) + c1 eps and compares measured errors with the robust-NSP
    recovery bound evaluated at an estimated tau.
    """
    if cfg.kind != "noise":
        raise ConfigError(f"run_noise needs kind 'noise' (got {cfg.kind})")
    jobs = recovery_jobs(cfg)
    logger.info(f"noise '{cfg.name}': {len(jobs)} trials on {threads} worker(s)")
    trials = trials_frame(run_trials(jobs, threads))
    cells = cell_summary(trials)
    for row in cells.itertuples():
        logger.info(
            f"cell eps={row.eps:g} tail={row.tail:g} law={row.law}: median err_x "
            f"{row.median_err_x:.3e}, {row.success_rate:.2f} success"
        )

    phi, dictionary, _, _ = build_instance(jobs[0])
    a = phi @ dictionary.mat
    cone = ConeSpec(cfg.n, jobs[0].s, cfg.gamma)
    tau_report = estimate_robust_tau(
        a, cone, cfg.n_cone_samples, cfg.refine_iters, derive_seed(cfg.master_seed, 1)
    )
    dict_norm = op_norm(dictionary.mat)
    bounds = [
        recovery_bound(cfg.gamma, tau_report.tau_hat, r.sigma_s, r.s, r.eps, dict_norm)[0]
        for r in trials.itertuples()
    ]
    trials = trials.assign(bound=bounds)
    within = trials.loc[~trials["aborted"], "err_x"] <= trials.loc[~trials["aborted"], "bound"]

    tails = cells.groupby("tail", sort=True).agg(
        median_err_x=("median_err_x", "median"), median_sigma_s=("median_sigma_s", "median")
    ).reset_index()
    summary = {
        "schema_version": SCHEMA_VERSION,
        "success_tol": cfg.success_tol,
        "cells": cells.to_dict(orient="records"),
        "fit": _fit_noise(trials),
        "median_fit": _median_eps_fit(cells),
        "tail_sweep": tails.to_dict(orient="records"),
        "recovery_bound": {
            "gamma": cfg.gamma,
            "tau_hat": tau_report.tau_hat,
            "dict_norm": dict_norm,
            "fraction_within": float(within.mean()) if len(within) else None,
        },
        "max_signal_ratio": float(trials["signal_ratio"].max(skipna=True)),
    }
    return ExperimentResult(cfg.name, cfg.kind, {"trials": trials}, summary)


# ===== NSP corpus =====

@dataclass
class CorpusJob:
    index: int
    seed: int
    law: Dict[str, Any]
    m: int
    n: int
    d: int
    s: int
    dict_kind: str
    dict_law: Optional[Dict[str, Any]]
    dict_mat: Optional[np.ndarray]
    nsp_tol: float
    oracle_instances: int
    oracle_tol: float


def run_corpus_item(job: CorpusJob) -> Dict[str, Any]:
    """Full spark of D, NSP certificate of Phi D and the BP recovery oracle for one pair."""
    law = EntryLaw.from_dict(job.law)
    phi = sample_matrix(EnsembleSpec.measurement(law, job.m, job.d), derive_seed(job.seed, 0))
    if job.dict_kind == "identity":
        dictionary = make_identity(job.n)
    elif job.dict_kind == "random":
        spec = EnsembleSpec.dictionary(EntryLaw.from_dict(job.dict_law), job.d, job.n)
        dictionary = make_random_dict(spec, derive_seed(job.seed, 1))
    else:
        dictionary = Dictionary.from_matrix(job.dict_mat, with_coherence=False)
    try:
        spark = full_spark(dictionary)
    except InfeasibleAtSizeError:
        spark = None

    a = phi @ dictionary.mat
    report = certify_nsp(a, job.s, job.nsp_tol)
    row = {
        "index": job.index, "seed": job.seed, "full_spark": spark, "status": report.status.value,
        "max_ratio": report.max_ratio, "lp_count": report.lp_count,
        "oracle_recovered": None, "oracle_failures": None, "boundary": False, "agree": None,
    }
    if report.status is NspStatus.INFEASIBLE_AT_SIZE:
        return row
    oracle = uniform_recovery_oracle(
        a, job.s, job.oracle_instances, job.oracle_tol, derive_seed(job.seed, 2)
    )
    ratio = report.max_ratio if report.max_ratio is not None else 0.0
    boundary = report.status is NspStatus.ESTIMATE_ONLY or (
        math.isfinite(ratio) and abs(ratio - 1.0) <= job.nsp_tol
    )
    row.update({
        "oracle_recovered": oracle.recovered_all,
        "oracle_failures": oracle.failures,
        "boundary": boundary,
        "agree": None if boundary else (
            (report.status is NspStatus.CERTIFIED_HOLDS) == oracle.recovered_all
        ),
    })
    return row


def run_nsp_corpus(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """
    Certificate vs recovery oracle on trials_per_cell random (Phi, D) pairs per law and m.

    infeasible_at_size and boundary rows are excluded from the agreement rate.
    """
    if cfg.kind != "nsp_corpus":
        raise ConfigError(f"run_nsp_corpus needs kind 'nsp_corpus' (got {cfg.kind})")
    dict_mat = _load_dictionary_matrix(cfg)
    dict_law = cfg.dictionary.law.to_dict() if cfg.dictionary.law is not None else None
    jobs = []
    for entry in cfg.laws:
        for m in cfg.m_grid:
            law = resolve_law(entry, cfg.n, cfg.s)
            coords = {"kind": cfg.kind, "law": law.tag, "m": m, "s": cfg.s}
            for i in range(cfg.trials_per_cell):
                jobs.append(CorpusJob(
                    index=len(jobs), seed=trial_seed(cfg.master_seed, coords, i),
                    law=law.to_dict(), m=m, n=cfg.n, d=cfg.dim_d, s=cfg.s,
                    dict_kind=cfg.dictionary.kind, dict_law=dict_law, dict_mat=dict_mat,
                    nsp_tol=cfg.nsp_tol, oracle_instances=cfg.oracle_instances,
                    oracle_tol=cfg.oracle_tol,
                ))
    logger.info(f"nsp corpus '{cfg.name}': {len(jobs)} pairs on {threads} worker(s)")
    rows = map_jobs(run_corpus_item, jobs, threads)
    for job, row in zip(jobs, rows):
        row["law"] = EntryLaw.from_dict(job.law).tag
        row["m"] = job.m
    table = pd.DataFrame(rows).sort_values("index", kind="stable").reset_index(drop=True)

    decided = table[table["agree"].notna()]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "pairs": int(len(table)),
        "decided": int(len(decided)),
        "boundary": int(table["boundary"].sum()),
        "infeasible_at_size": int((table["status"] == NspStatus.INFEASIBLE_AT_SIZE.value).sum()),
        "agreement": float(decided["agree"].astype(bool).mean()) if len(decided) else None,
        "status_counts": table["status"].value_counts().sort_index().to_dict(),
    }
    logger.info(
        f"nsp corpus: agreement {summary['agreement']} over {summary['decided']} decided pairs"
    )
    return ExperimentResult(cfg.name, cfg.kind, {"nsp_corpus": table}, summary)


# ===== Verification suites =====

def _suite_seed(cfg: ExperimentConfig, **coords) -> int:
    return derive_seed(cfg.master_seed, cell_key({"suite": cfg.kind, **coords}))


def _suite_dictionary(cfg: ExperimentConfig, seed: int) -> Dictionary:
    if cfg.dictionary.kind == "identity":
        return make_identity(cfg.n)
    if cfg.dictionary.kind == "random":
        return make_random_dict(EnsembleSpec.dictionary(cfg.dictionary.law, cfg.dim_d, cfg.n), seed)
    return load_dictionary(cfg.dictionary.path)


def _suite_lemma51(cfg: ExperimentConfig) -> ExperimentResult:
    rows, passed = [], {}
    grid = [(n, s) for n in cfg.n_grid for s in cfg.s_values if s <= n / 2]
    if not grid:
        raise ConfigError("lemma51 grid is empty after dropping s > n/2")
    for entry in cfg.laws:
        label = law_label(entry)
        sampler = (
            adaptive_student_t_marginal() if entry.get("dof") == "auto"
            else law_marginal(EntryLaw.from_dict(entry))
        )
        check = check_rearrangement_lemma(
            sampler, grid, cfg.trials_per_cell, cfg.bound_constant, _suite_seed(cfg, law=label)
        )
        rows += [{"law": label, **row} for row in check.rows()]
        passed[label] = check.passed
    summary = {"schema_version": SCHEMA_VERSION, "bound_constant": cfg.bound_constant,
               "passed": passed}
    return ExperimentResult(cfg.name, cfg.kind, {"lemma51": pd.DataFrame(rows)}, summary)


def _suite_khintchine(cfg: ExperimentConfig) -> ExperimentResult:
    rows, fits = [], {}
    dim = cfg.dim_d
    for entry in cfg.laws:
        for m in cfg.m_grid:
            law = resolve_law(entry, cfg.n, cfg.s)
            seed = _suite_seed(cfg, law=law.tag, m=m)
            if cfg.direction == "e1":
                a = np.zeros(dim)
                a[0] = 1.0
            else:
                g = make_rng(derive_seed(seed, 1)).standard_normal(dim)
                a = g / np.linalg.norm(g)
            profile = check_khintchine(
                EnsembleSpec(law, m, dim), a, cfg.p_max, m, cfg.n_samples, seed
            )
            rows += [{"law": law.tag, "m": m, **row} for row in profile.rows()]
            fits[f"{law.tag}|m={m}"] = {
                "alpha_hat": profile.alpha_hat,
                "lambda_hat": profile.lambda_hat,
                "stable_p": profile.stable_p(),
                "sqrt_p_growth_ok": profile.sqrt_p_growth_ok,
            }
    summary = {"schema_version": SCHEMA_VERSION, "fits": fits}
    return ExperimentResult(cfg.name, cfg.kind, {"khintchine": pd.DataFrame(rows)}, summary)


def _suite_width(cfg: ExperimentConfig) -> ExperimentResult:
    rows = []
    if cfg.dictionary.kind == "random":
        source = EnsembleSpec.dictionary(cfg.dictionary.law, cfg.dim_d, cfg.n)
    else:
        source = _suite_dictionary(cfg, 0)
    for entry in cfg.laws:
        for m in cfg.m_grid:
            law = resolve_law(entry, cfg.n, cfg.s)
            est = estimate_width(
                source, EnsembleSpec(law, m, cfg.dim_d), cfg.s, cfg.gamma,
                max(100, cfg.trials_per_cell), _suite_seed(cfg, law=law.tag, m=m),
            )
            scale = math.sqrt(cfg.s * math.log(cfg.n / cfg.s)) / m if cfg.s < cfg.n else None
            rows.append({
                "law": law.tag, "m": m, "s": cfg.s, "value": est.value, "stderr": est.stderr,
                "dominating": (2.0 + 1.0 / cfg.gamma) * est.value,
                "ratio": est.value / scale if scale else None,
            })
            logger.info(f"width law={law.tag} m={m}: {est.value:.4f} +- {est.stderr:.4f}")
    table = pd.DataFrame(rows)
    summary = {"schema_version": SCHEMA_VERSION,
               "max_ratio": float(table["ratio"].max()) if table["ratio"].notna().any() else None}
    return ExperimentResult(cfg.name, cfg.kind, {"width": table}, summary)


def _suite_lowerbound(cfg: ExperimentConfig) -> ExperimentResult:
    rows, checks = [], {}
    cone = ConeSpec(cfg.n, cfg.s, cfg.gamma)
    for entry in cfg.laws:
        for m in cfg.m_grid:
            law = resolve_law(entry, cfg.n, cfg.s)
            seed = _suite_seed(cfg, law=law.tag, m=m)
            t = cfg.t if cfg.t is not None else math.sqrt(m) / 4.0
            check = check_lower_bound(
                _suite_dictionary(cfg, derive_seed(seed, 0)), law, cone, m, cfg.A, t,
                cfg.trials_per_cell, cfg.n_cone_samples, seed,
            )
            rows += [{"law": law.tag, "m": m, **row} for row in check.rows()]
            checks[f"{law.tag}|m={m}"] = {
                "rhs": check.rhs, "q_hat": check.q_hat, "width": check.width,
                "frequency": check.frequency, "claimed_probability": check.claimed_probability,
                "passed": check.passed,
            }
    summary = {"schema_version": SCHEMA_VERSION, "checks": checks}
    return ExperimentResult(cfg.name, cfg.kind, {"lowerbound": pd.DataFrame(rows)}, summary)


def _suite_tau(cfg: ExperimentConfig) -> ExperimentResult:
    rows = []
    for entry in cfg.laws:
        for m in cfg.m_grid:
            law = resolve_law(entry, cfg.n, cfg.s)
            seed = _suite_seed(cfg, law=law.tag, m=m)
            phi = sample_matrix(EnsembleSpec.measurement(law, m, cfg.dim_d), derive_seed(seed, 0))
            a = phi @ _suite_dictionary(cfg, derive_seed(seed, 1)).mat
            for gamma in cfg.gamma_grid:
                report = estimate_robust_tau(
                    a, ConeSpec(cfg.n, cfg.s, gamma), cfg.n_cone_samples, cfg.refine_iters,
                    derive_seed(seed, 2),
                )
                rows.append({"law": law.tag, "m": m, "s": cfg.s, "gamma": gamma,
                             "tau_hat": report.tau_hat, "status": report.status.value})
                logger.info(f"tau law={law.tag} m={m} gamma={gamma:g}: {report.tau_hat:.4f}")
    summary = {"schema_version": SCHEMA_VERSION, "rows": len(rows)}
    return ExperimentResult(cfg.name, cfg.kind, {"tau": pd.DataFrame(rows)}, summary)


_SUITES = {
    "lemma51": _suite_lemma51,
    "khintchine": _suite_khintchine,
    "width": _suite_width,
    "lowerbound": _suite_lowerbound,
    "tau": _suite_tau,
}


def run_verification_suites(cfg: ExperimentConfig) -> ExperimentResult:
    """Dispatch a verification suite (kind in SUITES); one CSV table per suite."""
    if cfg.kind not in _SUITES:
        raise ConfigError(
            f"not a verification suite: {cfg.kind}", details={"available": list(SUITES)}
        )
    logger.info(f"verify {cfg.kind} '{cfg.name}'")
    return _SUITES[cfg.kind](cfg)


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    if cfg.kind == "phase":
        return run_phase(cfg, threads)
    if cfg.kind == "noise":
        return run_noise(cfg, threads)
    if cfg.kind == "nsp_corpus":
        return run_nsp_corpus(cfg, threads)
    return run_verification_suites(cfg)


def default_threads() -> int:
    """L1SYNTH_THREADS or 1."""
    value = os.environ.get("L1SYNTH_THREADS")
    if not value:
        return 1
    try:
        threads = int(value)
    except ValueError:
        raise ConfigError(f"L1SYNTH_THREADS must be an integer (got {value!r})")
    if threads < 1:
        raise ConfigError("L1SYNTH_THREADS must be >= 1")
    return threads
