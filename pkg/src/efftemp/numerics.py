"""Dense/sparse linear algebra and statistics kernels.

Thin, validated wrappers around LAPACK-backed numpy/scipy routines plus an
ordinary-least-squares line fit.  Everything is float64; inputs are checked
for finiteness so NaN/Inf can never propagate silently into the analytics
built on top.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "NumericsError",
    "LineFit",
    "sym_matrix",
    "sparse_matrix",
    "sym_eig",
    "spmv",
    "singular_values",
    "ols_line",
]

# y-variance below this is treated as exactly flat (see ols_line).
FLAT_Y_VARIANCE = 1e-300


class NumericsError(ValueError):
    """Invalid input or failed numerical kernel."""


def _require_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise NumericsError(f"{what} contains non-finite entries")


def sym_matrix(a) -> np.ndarray:
    """Return a float64 symmetric copy of ``a`` (symmetrized as (A+A^T)/2)."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise NumericsError("expected a square matrix")
    _require_finite(a, "matrix")
    return 0.5 * (a + a.T)


def sparse_matrix(n: int, rows, cols, values) -> sp.csr_matrix:
    """Build an n x n CSR matrix from COO triplets, summing duplicates.

    The result has sorted, duplicate-free column indices within each row.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    _require_finite(values, "matrix values")
    m = sp.coo_matrix((values, (rows, cols)), shape=(n, n)).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return m


def sym_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a real symmetric matrix.

    Returns (eigenvalues ascending, eigenvectors as orthonormal columns).
    Residuals satisfy ||A v_k - w_k v_k|| <= 1e-10 * ||A||_F.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NumericsError("sym_eig expects a square matrix")
    _require_finite(a, "sym_eig input")
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericsError(f"symmetric eigensolver did not converge: {exc}") from exc
    return w, v


def spmv(s: sp.spmatrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix times (complex) vector."""
    x = np.asarray(x)
    if s.shape[1] != x.shape[0]:
        raise NumericsError(
            f"dimension mismatch: matrix is {s.shape}, vector has length {x.shape[0]}"
        )
    y = s @ x
    _require_finite(np.ascontiguousarray(y).view(np.float64) if np.iscomplexobj(y) else y,
                    "spmv output")
    return y


def singular_values(m: np.ndarray) -> np.ndarray:
    """Singular values of a (complex) matrix, descending."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise NumericsError("singular_values expects a 2d matrix")
    flat = m.ravel()
    if not np.all(np.isfinite(flat.real)) or (
        np.iscomplexobj(flat) and not np.all(np.isfinite(flat.imag))
    ):
        raise NumericsError("singular_values input contains non-finite entries")
    return np.linalg.svd(m, compute_uv=False)


@dataclass(frozen=True)
class LineFit:
    """Ordinary least squares y = intercept + slope * x."""

    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float


def ols_line(x, y) -> LineFit:
    """OLS line fit with slope standard error and squared Pearson r.

    Flat data (y variance below 1e-300) is a meaningful regime here and is
    given the convention slope = 0, r^2 = 0, stderr = 0 rather than 0/0.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise NumericsError("ols_line expects equal-length 1d sequences")
    n = x.size
    if n < 3:
        raise NumericsError("ols_line needs at least 3 points")
    _require_finite(x, "x")
    _require_finite(y, "y")

    xm = x - x.mean()
    ym = y - y.mean()
    sxx = float(xm @ xm)
    if sxx == 0.0:
        raise NumericsError("ols_line is degenerate: all x values are equal")
    syy = float(ym @ ym)
    if syy / n < FLAT_Y_VARIANCE:
        return LineFit(slope=0.0, intercept=float(y.mean()), slope_stderr=0.0, r_squared=0.0)

    sxy = float(xm @ ym)
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss_res = float(resid @ resid)
    # r^2 as the squared Pearson correlation of (x, y)
    r2 = sxy * sxy / (sxx * syy)
    r2 = min(max(r2, 0.0), 1.0)
    stderr = np.sqrt(max(ss_res, 0.0) / (n - 2) / sxx) if n > 2 else 0.0
    return LineFit(slope=float(slope), intercept=intercept,
                   slope_stderr=float(stderr), r_squared=float(r2))
