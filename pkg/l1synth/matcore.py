"""
Dense linear-algebra substrate.

Matrices and vectors are plain float64 numpy arrays, validated at the boundary: `as_mat` and
`as_vec` reject NaN/Inf so every downstream routine may assume finite input. Nothing in this
module draws random numbers.

Matrix file format (text):
    rows cols
    a_11 a_12 ... a_1n
    ...
with every entry written to 17 significant digits.
"""

import logging
import os
from typing import Union

import numpy as np

from .exceptions import ValidationError

logger = logging.getLogger(__name__)

DEFAULT_KERNEL_TOL = 1e-10

ArrayLike = Union[np.ndarray, list, tuple]


def as_mat(a: ArrayLike, name: str = "matrix") -> np.ndarray:
    """
    Convert to a 2-D float64 array and check every entry is finite.

    Raises:
        ValidationError: If `a` is not 2-D or holds NaN/Inf
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(
            f"{name} must be 2-dimensional (got shape {arr.shape})",
            details={"shape": arr.shape},
        )
    if not np.all(np.isfinite(arr)):
        raise ValidationError(
            f"{name} contains non-finite entries",
            details={"shape": arr.shape, "non_finite": int(np.sum(~np.isfinite(arr)))},
        )
    return arr


def as_vec(v: ArrayLike, name: str = "vector") -> np.ndarray:
    """Convert to a 1-D float64 array and check every entry is finite."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(
            f"{name} must be 1-dimensional (got shape {arr.shape})",
            details={"shape": arr.shape},
        )
    if not np.all(np.isfinite(arr)):
        raise ValidationError(
            f"{name} contains non-finite entries",
            details={"length": arr.size},
        )
    return arr


def kernel_basis(a: ArrayLike, tol: float = DEFAULT_KERNEL_TOL) -> np.ndarray:
    """
    Orthonormal basis of ker(a) from a full singular value decomposition.

    Right singular directions whose singular value is <= tol * sigma_max (and all directions
    beyond the row count) are assigned to the kernel.

    Args:
        a: m x n matrix
        tol: Relative singular value cutoff, > 0

    Returns:
        n x k matrix B with orthonormal columns, k = dim ker(a) (k may be 0)

    Example:
        >>> kernel_basis([[1.0, 1.0]])   # spans (1, -1) / sqrt(2)
    """
    if not tol > 0:
        raise ValidationError("kernel tolerance must be > 0", details={"tol": tol})
    a = as_mat(a)
    n = a.shape[1]
    if a.shape[0] == 0:
        return np.eye(n)
    _, sv, vt = np.linalg.svd(a, full_matrices=True)
    sigma_max = sv[0] if sv.size else 0.0
    if sigma_max == 0.0:
        return np.eye(n)
    rank = int(np.sum(sv > tol * sigma_max))
    return vt[rank:].T.copy()


def op_norm(a: ArrayLike, iters: int = 1000, tol: float = 1e-12) -> float:
    """
    Largest singular value by power iteration on a^T a.

    Starts from the normalized all-ones vector. If that start lies in ker(a) the iteration
    restarts from the coordinate vector of the largest column. Stops when the relative change
    of the estimate is below `tol` or after `iters` iterations.

    Returns:
        Estimate of sigma_max(a); 0.0 for the zero matrix
    """
    a = as_mat(a)
    n = a.shape[1]
    if n == 0 or not np.any(a):
        return 0.0

    u = np.full(n, 1.0 / np.sqrt(n))
    au = a @ u
    if np.linalg.norm(au) <= 1e-14 * np.linalg.norm(a):
        u = np.zeros(n)
        u[int(np.argmax(np.sum(a * a, axis=0)))] = 1.0
        au = a @ u

    estimate = float(np.linalg.norm(au))
    for i in range(iters):
        w = a.T @ au
        w_norm = np.linalg.norm(w)
        if w_norm == 0.0:
            break
        u = w / w_norm
        au = a @ u
        new_estimate = float(np.linalg.norm(au))
        if abs(new_estimate - estimate) <= tol * new_estimate:
            estimate = new_estimate
            logger.debug(f"op_norm converged after {i + 1} iterations: {estimate:.12g}")
            break
        estimate = new_estimate
    return estimate


def rearrange_desc(v: ArrayLike) -> np.ndarray:
    """
    Non-increasing rearrangement (|v|_1*, ..., |v|_n*).

    Ties keep the original index order.
    """
    v = as_vec(v)
    mags = np.abs(v)
    order = np.argsort(-mags, kind="stable")
    return mags[order]


def top_s_indices(v: np.ndarray, s: int) -> np.ndarray:
    """Indices of the s largest magnitudes, ties broken by index."""
    return np.argsort(-np.abs(v), kind="stable")[:s]


def top_s_l2(v: ArrayLike, s: int) -> float:
    """
    (sum of the s largest squared magnitudes)^(1/2) = sup over unit s-sparse x of <x, v>.

    Raises:
        ValidationError: If s is outside [1, dim v]
    """
    v = as_vec(v)
    if not 1 <= s <= v.size:
        raise ValidationError(
            f"s must satisfy 1 <= s <= {v.size} (got {s})",
            details={"s": s, "dim": v.size},
        )
    return float(np.sqrt(np.sum(rearrange_desc(v)[:s] ** 2)))


def write_matrix(path: Union[str, os.PathLike], a: ArrayLike) -> None:
    """Write `a` in the text matrix format (17 significant digits)."""
    a = as_mat(a)
    rows, cols = a.shape
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{rows} {cols}\n")
        for row in a:
            f.write(" ".join(f"{x:.17g}" for x in row))
            f.write("\n")
    logger.debug(f"Wrote {rows}x{cols} matrix to {path}")


def read_matrix(path: Union[str, os.PathLike]) -> np.ndarray:
    """
    Read a matrix written by `write_matrix`.

    Raises:
        ValidationError: On malformed header, wrong row/column counts or non-finite entries
    """
    with open(path, "r", encoding="utf-8") as f:
        lines = [line for line in f.read().splitlines() if line.strip()]
    if not lines:
        raise ValidationError(f"empty matrix file: {path}", details={"path": str(path)})
    header = lines[0].split()
    try:
        rows, cols = int(header[0]), int(header[1])
    except (IndexError, ValueError):
        raise ValidationError(
            f"matrix file header must be 'rows cols': {lines[0]!r}",
            details={"path": str(path)},
        )
    body = lines[1:]
    if len(body) != rows:
        raise ValidationError(
            f"expected {rows} rows, found {len(body)}",
            details={"path": str(path), "rows": rows, "found": len(body)},
        )
    data = []
    for i, line in enumerate(body):
        values = [float(x) for x in line.split()]
        if len(values) != cols:
            raise ValidationError(
                f"row {i} has {len(values)} entries, expected {cols}",
                details={"path": str(path), "row": i},
            )
        data.append(values)
    return as_mat(np.array(data, dtype=np.float64).reshape(rows, cols), name=str(path))
