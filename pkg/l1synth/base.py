"""
Shared records and enums.

Records that cross module boundaries (random laws, ensembles, solver settings and reports,
NSP reports) live here so that every module, the CLI and the component entry point agree on
one schema.
"""

import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

from .exceptions import ConfigError, ValidationError


class LawKind(Enum):
    """Entry distribution of a random matrix"""
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    LAPLACE = "laplace"
    STUDENT_T = "student_t"
    CAUCHY = "cauchy"


class NspStatus(Enum):
    """Outcome of a null space property check"""
    CERTIFIED_HOLDS = "certified_holds"
    CERTIFIED_FAILS = "certified_fails"
    ESTIMATE_ONLY = "estimate_only"
    INFEASIBLE_AT_SIZE = "infeasible_at_size"


@dataclass(frozen=True)
class EntryLaw:
    """
    Law of a single matrix entry.

    Gaussian, Rademacher, Laplace and StudentT(dof >= 3) are standardized to unit variance.
    Cauchy and StudentT(dof <= 2) have no variance and are used raw.
    """
    kind: LawKind
    dof: Optional[int] = None

    def __post_init__(self):
        if self.kind is LawKind.STUDENT_T:
            if self.dof is None or self.dof < 1:
                raise ValidationError(
                    "student_t law needs dof >= 1",
                    details={"dof": self.dof},
                )
        elif self.dof is not None:
            raise ValidationError(
                f"dof only applies to student_t (got kind={self.kind.value})",
                details={"kind": self.kind.value, "dof": self.dof},
            )

    @property
    def standardized(self) -> bool:
        if self.kind is LawKind.CAUCHY:
            return False
        if self.kind is LawKind.STUDENT_T:
            return self.dof >= 3
        return True

    @property
    def tag(self) -> str:
        if self.kind is LawKind.STUDENT_T:
            return f"student_t({self.dof})"
        return self.kind.value

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind.value}
        if self.dof is not None:
            out["dof"] = self.dof
        return out

    @classmethod
    def from_dict(cls, data: Any) -> "EntryLaw":
        """Parse {"kind": "student_t", "dof": 7} or a bare kind string."""
        if isinstance(data, str):
            data = {"kind": data}
        if not isinstance(data, dict):
            raise ConfigError("law must be an object or a string", details={"got": data})
        unknown = set(data) - {"kind", "dof"}
        if unknown:
            raise ConfigError(
                f"unknown law keys: {sorted(unknown)}",
                details={"allowed": ["kind", "dof"]},
            )
        try:
            kind = LawKind(data.get("kind"))
        except ValueError:
            raise ConfigError(
                f"unknown law kind: {data.get('kind')}",
                details={"available": [k.value for k in LawKind]},
            )
        try:
            return cls(kind=kind, dof=data.get("dof"))
        except ValidationError as e:
            raise ConfigError(e.message, details=e.details)

    @classmethod
    def gaussian(cls) -> "EntryLaw":
        return cls(LawKind.GAUSSIAN)

    @classmethod
    def rademacher(cls) -> "EntryLaw":
        return cls(LawKind.RADEMACHER)

    @classmethod
    def laplace(cls) -> "EntryLaw":
        return cls(LawKind.LAPLACE)

    @classmethod
    def student_t(cls, dof: int) -> "EntryLaw":
        return cls(LawKind.STUDENT_T, dof)

    @classmethod
    def cauchy(cls) -> "EntryLaw":
        return cls(LawKind.CAUCHY)


@dataclass(frozen=True)
class EnsembleSpec:
    """
    Declarative random matrix law: i.i.d. entries from `law`, every entry scaled by
    `row_normalization` (1/sqrt(m) for measurements, 1/sqrt(d) for dictionaries).
    """
    law: EntryLaw
    rows: int
    cols: int
    row_normalization: float = 1.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValidationError(
                "ensemble shape must be positive",
                details={"rows": self.rows, "cols": self.cols},
            )
        if not (self.row_normalization > 0 and math.isfinite(self.row_normalization)):
            raise ValidationError(
                "row_normalization must be a positive finite number",
                details={"row_normalization": self.row_normalization},
            )

    @classmethod
    def measurement(cls, law: EntryLaw, m: int, d: int) -> "EnsembleSpec":
        """Rows distributed as phi / sqrt(m)."""
        return cls(law, m, d, 1.0 / math.sqrt(m))

    @classmethod
    def dictionary(cls, law: EntryLaw, d: int, n: int) -> "EnsembleSpec":
        """D = d^{-1/2} [psi_1, ..., psi_d]^T."""
        return cls(law, d, n, 1.0 / math.sqrt(d))

    def with_rows(self, rows: int) -> "EnsembleSpec":
        return EnsembleSpec(self.law, rows, self.cols, self.row_normalization)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "law": self.law.to_dict(),
            "rows": self.rows,
            "cols": self.cols,
            "row_normalization": self.row_normalization,
        }


@dataclass
class MomentProfile:
    """
    Empirical L^p norms of a scalar random variable.

    `rel_stderr` is the bootstrap relative standard error of the raw p-th moment; a p is
    flagged when it exceeds `instability_threshold` (or a caller-specific reliability rule).
    """
    p_values: List[float]
    estimates: List[float]
    stderr: List[float]
    rel_stderr: List[float]
    flagged: List[bool]
    lambda_hat: float
    alpha_hat: float
    n_samples: int
    monotonicity_slack: float = 0.0
    instability_threshold: float = 0.2
    sqrt_p_growth_ok: Optional[bool] = None

    def stable_p(self) -> List[float]:
        return [p for p, f in zip(self.p_values, self.flagged) if not f]

    def estimate_at(self, p: float) -> float:
        return self.estimates[self.p_values.index(p)]

    def rows(self) -> List[Dict[str, Any]]:
        """CSV rows (p, estimate, stderr, flagged)."""
        return [
            {"p": p, "estimate": e, "stderr": se, "flagged": f}
            for p, e, se, f in zip(self.p_values, self.estimates, self.stderr, self.flagged)
        ]


@dataclass(frozen=True)
class ConeSpec:
    """S_gamma in R^n at order s"""
    n: int
    s: int
    gamma: float

    def __post_init__(self):
        if not 1 <= self.s <= self.n:
            raise ValidationError(
                f"cone order must satisfy 1 <= s <= n (got s={self.s}, n={self.n})",
                details={"n": self.n, "s": self.s},
            )
        if not 0 < self.gamma < 1:
            raise ValidationError(
                f"gamma must lie in (0, 1) (got {self.gamma})",
                details={"gamma": self.gamma},
            )

    def describe(self) -> str:
        return f"S_gamma(n={self.n}, s={self.s}, gamma={self.gamma:g})"


@dataclass
class NspReport:
    """
    Certification or estimation outcome for the NSP of order `order`.

    `max_ratio` is the largest ||v_T||_1 / ||v_Tc||_1 found by the certifier (inf when some
    kernel vector vanishes off T). `witness_support` is the T that the witness violates.
    """
    order: int
    status: NspStatus
    gamma: Optional[float] = None
    tau_hat: Optional[float] = None
    witness: Optional[np.ndarray] = None
    witness_support: Optional[List[int]] = None
    lp_count: int = 0
    tol: Optional[float] = None
    max_ratio: Optional[float] = None
    full_spark: Optional[bool] = None

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "order": self.order,
            "status": self.status.value,
            "gamma": self.gamma,
            "tau_hat": self.tau_hat,
            "lp_count": self.lp_count,
            "tol": self.tol,
        }
        if self.witness is not None:
            out["witness"] = [float(v) for v in self.witness]
            out["witness_support"] = self.witness_support
        if self.max_ratio is not None:
            out["max_ratio"] = self.max_ratio if math.isfinite(self.max_ratio) else "inf"
        if self.full_spark is not None:
            out["full_spark"] = self.full_spark
        return out


@dataclass
class SolverConfig:
    """
    Settings of the primal-dual QCBP solver.

    tol_feas=None means 1e-9 * ||y||_2, resolved per problem.
    """
    max_iters: int = 200_000
    tol_feas: Optional[float] = None
    tol_change: float = 1e-9
    step_ratio: float = 0.99
    norm_estimate_iters: int = 500

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1", details={"max_iters": self.max_iters})
        if self.tol_feas is not None and not self.tol_feas > 0:
            raise ValidationError("tol_feas must be > 0", details={"tol_feas": self.tol_feas})
        if not self.tol_change > 0:
            raise ValidationError(
                "tol_change must be > 0", details={"tol_change": self.tol_change}
            )
        if not 0 < self.step_ratio <= 1:
            raise ValidationError(
                "step_ratio must lie in (0, 1]", details={"step_ratio": self.step_ratio}
            )
        if self.norm_estimate_iters < 1:
            raise ValidationError(
                "norm_estimate_iters must be >= 1",
                details={"norm_estimate_iters": self.norm_estimate_iters},
            )

    def feasibility_tol(self, y_norm: float) -> float:
        return self.tol_feas if self.tol_feas is not None else 1e-9 * y_norm

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SolverConfig":
        allowed = {"max_iters", "tol_feas", "tol_change", "step_ratio", "norm_estimate_iters"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(
                f"unknown solver keys: {sorted(unknown)}", details={"allowed": sorted(allowed)}
            )
        try:
            return cls(**data)
        except (TypeError, ValidationError) as e:
            raise ConfigError(f"invalid solver config: {e}", details={"solver": data})


@dataclass
class SolveReport:
    """Output of the QCBP / synthesis solver"""
    x_hat: np.ndarray
    z_hat: np.ndarray
    iterations: int
    final_feasibility: float
    objective: float
    converged: bool
    err_x: Optional[float] = None
    err_z: Optional[float] = None
    history: List[Dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x_hat": [float(v) for v in self.x_hat],
            "z_hat": [float(v) for v in self.z_hat],
            "iterations": self.iterations,
            "final_feasibility": self.final_feasibility,
            "objective": self.objective,
            "converged": self.converged,
            "err_x": self.err_x,
            "err_z": self.err_z,
        }
