"""
Quadratically constrained l1-minimization.

    min ||x||_1  subject to  ||A x - y||_2 <= eps

solved by a primal-dual proximal splitting (Chambolle-Pock) iteration that needs only
products with A and A^T. The l1-synthesis method runs the same solver on A = Phi D and maps
the coefficients back, z_hat = D x_hat.

The iteration runs on the unit-norm observation y / ||y||_2 (and eps / ||y||_2) and rescales
the result, so the solver is exactly equivariant under (y, eps) -> (c y, c eps).
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from .base import SolveReport, SolverConfig
from .dictionary import Dictionary
from .exceptions import LPError, NumericalAbortError, ValidationError
from .matcore import as_mat, as_vec, op_norm, rearrange_desc

logger = logging.getLogger(__name__)

HISTORY_EVERY = 1000
DEFAULT_SUCCESS_TOL = 1e-4


@dataclass
class Problem:
    """
    One recovery instance y = Phi z0 + e with z0 = D x0 and ||e||_2 <= eps.

    x0 / z0 are None when no ground truth is known.
    """
    phi: np.ndarray
    dictionary: Dictionary
    y: np.ndarray
    eps: float
    e: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None
    z0: Optional[np.ndarray] = None

    def __post_init__(self):
        self.phi = as_mat(self.phi, name="phi")
        self.y = as_vec(self.y, name="y")
        m, d = self.phi.shape
        if self.dictionary.d != d:
            raise ValidationError(
                f"phi has {d} columns but the dictionary has {self.dictionary.d} rows",
                details={"phi": self.phi.shape, "dictionary": self.dictionary.mat.shape},
            )
        if self.y.size != m:
            raise ValidationError(
                f"y has length {self.y.size}, expected {m}",
                details={"y": self.y.size, "m": m},
            )
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise ValidationError("eps must be finite and >= 0", details={"eps": self.eps})
        if self.e is not None:
            self.e = as_vec(self.e, name="e")
            if np.linalg.norm(self.e) > self.eps * (1 + 1e-12):
                raise ValidationError(
                    "noise exceeds eps",
                    details={"noise_norm": float(np.linalg.norm(self.e)), "eps": self.eps},
                )
        if self.x0 is not None:
            self.x0 = as_vec(self.x0, name="x0")
            if self.z0 is None:
                self.z0 = self.dictionary.mat @ self.x0
            e = self.e if self.e is not None else np.zeros(m)
            mismatch = np.linalg.norm(self.y - self.phi @ self.z0 - e)
            if mismatch > 1e-10 * max(np.linalg.norm(self.y), 1.0):
                raise ValidationError(
                    "y is inconsistent with phi, D, x0 and e",
                    details={"mismatch": float(mismatch)},
                )


def make_problem(
    phi: np.ndarray,
    dictionary: Dictionary,
    x0: np.ndarray,
    e: Optional[np.ndarray] = None,
    eps: Optional[float] = None,
) -> Problem:
    """Build a Problem from ground truth; eps defaults to ||e||_2."""
    phi = as_mat(phi, name="phi")
    x0 = as_vec(x0, name="x0")
    if phi.shape[1] != dictionary.d or x0.size != dictionary.n:
        raise ValidationError(
            "phi, dictionary and x0 shapes do not chain",
            details={"phi": phi.shape, "dictionary": dictionary.mat.shape, "x0": x0.size},
        )
    z0 = dictionary.mat @ x0
    if e is None:
        e = np.zeros(phi.shape[0])
    e = as_vec(e, name="e")
    if eps is None:
        eps = float(np.linalg.norm(e))
    return Problem(phi=phi, dictionary=dictionary, y=phi @ z0 + e, eps=eps, e=e, x0=x0, z0=z0)


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    """Proximal map of t ||.||_1."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def solve_qcbp(a, y, eps: float, cfg: Optional[SolverConfig] = None) -> SolveReport:
    """
    Primal-dual solver for min ||x||_1 s.t. ||a x - y||_2 <= eps.

    Per iteration, with sigma = tau = step_ratio / ||a||:
        w  <- w + sigma (a x_bar - y);  w <- max(0, 1 - sigma eps / ||w||) w
        x+ <- shrink(x - tau a^T w, tau)
        x_bar <- 2 x+ - x
    Stops once the feasibility gap max(0, ||a x - y|| - eps) <= tol_feas and the relative
    iterate change <= tol_change; at max_iters it returns with converged = False.

    Raises:
        ValidationError: On shape mismatch, eps < 0 or non-finite input
        NumericalAbortError: If an iterate becomes non-finite

    Example:
        >>> solve_qcbp(np.eye(3), np.array([1.0, 0, 0]), 0.0).x_hat   # (1, 0, 0)
    """
    cfg = cfg or SolverConfig()
    a = as_mat(a, name="a")
    y = as_vec(y, name="y")
    m, n = a.shape
    if m < 1:
        raise ValidationError("a needs at least one row")
    if y.size != m:
        raise ValidationError(
            f"y has length {y.size}, expected {m}", details={"y": y.size, "m": m}
        )
    if not (eps >= 0 and math.isfinite(eps)):
        raise ValidationError("eps must be finite and >= 0", details={"eps": eps})

    y_norm = float(np.linalg.norm(y))
    tol_feas = cfg.feasibility_tol(y_norm)
    if y_norm <= eps:
        # x = 0 is feasible and has objective 0
        x = np.zeros(n)
        return SolveReport(
            x_hat=x, z_hat=x.copy(), iterations=0, final_feasibility=0.0,
            objective=0.0, converged=True,
        )

    a_norm = op_norm(a, iters=cfg.norm_estimate_iters)
    if a_norm == 0.0:
        logger.warning("a is the zero matrix but ||y|| > eps: problem infeasible")
        x = np.zeros(n)
        return SolveReport(
            x_hat=x, z_hat=x.copy(), iterations=0, final_feasibility=y_norm - eps,
            objective=0.0, converged=False,
        )

    scale = y_norm
    yn = y / scale
    epsn = eps / scale
    tol_feas_n = tol_feas / scale
    sigma = tau = cfg.step_ratio / a_norm

    x = np.zeros(n)
    ax = np.zeros(m)
    w = np.zeros(m)
    x_bar = x
    ax_bar = ax
    converged = False
    history = []
    gap = change = math.inf
    iteration = 0

    for iteration in range(1, cfg.max_iters + 1):
        w = w + sigma * (ax_bar - yn)
        w_norm = np.linalg.norm(w)
        if w_norm > 0:
            w = max(0.0, 1.0 - sigma * epsn / w_norm) * w

        x_new = soft_threshold(x - tau * (a.T @ w), tau)
        ax_new = a @ x_new
        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(w))):
            raise NumericalAbortError(
                f"non-finite iterate at iteration {iteration}",
                details={"iteration": iteration, "last_gap": gap, "last_change": change},
            )

        gap = max(0.0, float(np.linalg.norm(ax_new - yn)) - epsn)
        x_new_norm = np.linalg.norm(x_new)
        dx_norm = np.linalg.norm(x_new - x)
        change = float(dx_norm / x_new_norm) if dx_norm > 0 else 0.0

        x_bar = 2.0 * x_new - x
        ax_bar = 2.0 * ax_new - ax
        x, ax = x_new, ax_new

        if iteration % HISTORY_EVERY == 0:
            history.append({"iteration": iteration, "gap": gap, "change": change})
            logger.debug(f"[{iteration}] gap={gap:.3e} change={change:.3e}")

        if gap <= tol_feas_n and change <= cfg.tol_change:
            converged = True
            break

    x_hat = x * scale
    final_feasibility = max(0.0, float(np.linalg.norm(a @ x_hat - y)) - eps)
    if not converged:
        logger.warning(
            f"solver stopped at max_iters={cfg.max_iters} (gap={gap * scale:.3e}, "
            f"change={change:.3e})"
        )
    return SolveReport(
        x_hat=x_hat,
        z_hat=x_hat.copy(),
        iterations=iteration,
        final_feasibility=final_feasibility,
        objective=float(np.sum(np.abs(x_hat))),
        converged=converged,
        history=history,
    )


def synthesize(problem: Problem, cfg: Optional[SolverConfig] = None) -> SolveReport:
    """
    l1-synthesis: solve QCBP on A = Phi D, then z_hat = D x_hat.

    Fills err_x / err_z when the problem carries ground truth.
    """
    dmat = problem.dictionary.mat
    a = problem.phi @ dmat
    report = solve_qcbp(a, problem.y, problem.eps, cfg)
    report.z_hat = dmat @ report.x_hat
    if problem.x0 is not None:
        report.err_x = float(np.linalg.norm(report.x_hat - problem.x0))
        report.err_z = float(np.linalg.norm(report.z_hat - problem.z0))
    return report


def best_s_term_error(x, s: int) -> float:
    """sigma_s(x)_1: l1 norm of all but the s largest magnitudes."""
    x = as_vec(x, name="x")
    if not 1 <= s <= x.size:
        raise ValidationError(
            f"s must satisfy 1 <= s <= {x.size} (got {s})", details={"s": s, "dim": x.size}
        )
    return float(np.sum(rearrange_desc(x)[s:]))


def recovery_bound(
    gamma: float,
    tau: float,
    sigma_s: float,
    s: int,
    eps: float,
    dict_norm: Optional[float] = None,
) -> Tuple[float, Optional[float]]:
    """
    Robust-NSP error bounds for l1-synthesis.

    Returns:
        (bound on ||x_hat - x0||_2, bound on ||z_hat - z0||_2 or None), where the first is
        2 (1 + gamma)^2 / (1 - gamma) * sigma_s / sqrt(s) + 4 tau / (1 - gamma) * eps and the
        second multiplies it by ||D|| when `dict_norm` is given.
    """
    if not 0 < gamma < 1:
        raise ValidationError("gamma must lie in (0, 1)", details={"gamma": gamma})
    x_bound = (
        2.0 * (1.0 + gamma) ** 2 / (1.0 - gamma) * sigma_s / math.sqrt(s)
        + 4.0 * tau / (1.0 - gamma) * eps
    )
    z_bound = dict_norm * x_bound if dict_norm is not None else None
    return x_bound, z_bound


def basis_pursuit_lp(a, y) -> np.ndarray:
    """
    Exact basis pursuit min ||x||_1 s.t. a x = y as a linear program (HiGHS).

    Used as an independent recovery oracle.

    Raises:
        LPError: If the LP solver reports anything but an optimum
    """
    a = as_mat(a, name="a")
    y = as_vec(y, name="y")
    n = a.shape[1]
    res = linprog(
        c=np.ones(2 * n),
        A_eq=np.hstack([a, -a]),
        b_eq=y,
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        raise LPError(
            f"basis pursuit LP failed: {res.message}",
            details={"status": int(res.status)},
        )
    return res.x[:n] - res.x[n:]
