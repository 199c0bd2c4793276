"""
Dense tableau simplex with Bland's rule.

Solves
    maximize c^T z  subject to  G z <= h,  z >= 0
for h >= 0, so the slack basis is feasible and no phase one is needed. This is the shape of
every NSP certification LP. Bland's smallest-index rule (for the entering column and for ties
in the ratio test) rules out cycling on the degenerate vertices those LPs have.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import LPError, ValidationError

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-12
MAX_PIVOTS = 50_000


@dataclass
class SimplexResult:
    """
    status is "optimal" or "unbounded". For an unbounded LP `ray` is a direction d >= 0 with
    G d <= 0 and c^T d > 0.
    """
    status: str
    value: float
    z: np.ndarray
    pivots: int
    ray: Optional[np.ndarray] = None

    @property
    def unbounded(self) -> bool:
        return self.status == "unbounded"


def simplex_max(c, g, h, tol: float = PIVOT_TOL, max_pivots: int = MAX_PIVOTS) -> SimplexResult:
    """
    Maximize c^T z over {z >= 0 : G z <= h} with h >= 0.

    Args:
        c: Objective, length k
        g: Constraint matrix, r x k
        h: Right-hand side, length r, non-negative
        tol: Pivot / reduced-cost tolerance
        max_pivots: Breakdown guard

    Returns:
        SimplexResult

    Raises:
        ValidationError: On shape mismatch or a negative right-hand side
        LPError: If the pivot guard is exhausted

    Example:
        >>> simplex_max([1, 1], [[1, 2], [3, 1]], [4, 6]).value   # 2.8 at z = (1.6, 1.2)
    """
    c = np.asarray(c, dtype=np.float64)
    g = np.atleast_2d(np.asarray(g, dtype=np.float64))
    h = np.asarray(h, dtype=np.float64)
    r, k = g.shape
    if c.size != k or h.size != r:
        raise ValidationError(
            "simplex shapes do not match",
            details={"c": c.shape, "g": g.shape, "h": h.shape},
        )
    if np.any(h < 0):
        raise ValidationError("simplex needs h >= 0 for the slack start")

    # [ G | I | h ] over the objective row [ -c | 0 | 0 ]
    tab = np.zeros((r + 1, k + r + 1))
    tab[:r, :k] = g
    tab[:r, k:k + r] = np.eye(r)
    tab[:r, -1] = h
    tab[r, :k] = -c
    basis = list(range(k, k + r))

    for pivots in range(max_pivots):
        reduced = tab[r, :-1]
        candidates = np.flatnonzero(reduced < -tol)
        if candidates.size == 0:
            z = np.zeros(k + r)
            z[basis] = tab[:r, -1]
            return SimplexResult("optimal", float(tab[r, -1]), z[:k], pivots)

        col = int(candidates[0])
        column = tab[:r, col]
        rows = np.flatnonzero(column > tol)
        if rows.size == 0:
            ray = np.zeros(k + r)
            ray[col] = 1.0
            ray[basis] = -column
            z = np.zeros(k + r)
            z[basis] = tab[:r, -1]
            logger.debug(f"unbounded after {pivots} pivots (entering column {col})")
            return SimplexResult("unbounded", float("inf"), z[:k], pivots, ray=ray[:k])

        ratios = tab[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + tol * max(1.0, abs(best))]
        row = int(min(tied, key=lambda i: basis[i]))

        tab[row] /= tab[row, col]
        others = np.arange(r + 1) != row
        tab[others] -= np.outer(tab[others, col], tab[row])
        basis[row] = col

    raise LPError(
        f"simplex did not terminate within {max_pivots} pivots",
        details={"rows": r, "cols": k},
    )
