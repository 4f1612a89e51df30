"""
First canonical correlation

What this module does:
- Measures how much of one feature set is linearly recoverable from another,
  as the Pearson correlation of their first canonical projections. Applied
  to (F_SLS-1, F_SLS-2) it shows how strongly the repression layer changes
  the similarity stream.

Procedure:
1. Covariances S_xx, S_yy (ridge * I added to both) and S_xy.
2. With Cholesky factors S_xx = Lx Lx^T and S_yy = Ly Ly^T, the dominant
   eigenvector c of the symmetric K K^T, K = Lx^-1 S_xy Ly^-T; a = Lx^-T c.
   Its eigenvalues equal those of S_xx^-1 S_xy S_yy^-1 S_yx.
3. Partner direction b = S_yy^-1 S_yx a (the mirror operator's eigenvector
   paired with a, also when canonical correlations are repeated).
4. r = pearson(Xc a, Yc b); two-sided p-value from t = r sqrt((n-2)/(1-r^2)).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, stats

from ..domain.errors import InsufficientSamplesError, NumericalError, ShapeError
from ..numerics.linalg import DEFAULT_MAX_ITER, DEFAULT_TOL, as_matrix, cross_covariance, pearson, top_eigenpair

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CcaReport:
    correlation: float
    p_value: Optional[float]
    n: int
    ridge: float
    eigenvalue: float
    mirror_eigenvalue: float

    def as_dict(self) -> dict:
        return {
            "correlation": self.correlation,
            "p_value": self.p_value,
            "n": self.n,
            "ridge": self.ridge,
            "eigenvalue": self.eigenvalue,
            "mirror_eigenvalue": self.mirror_eigenvalue,
        }


def pearson_p_value(r: float, n: int) -> Optional[float]:
    """Two-sided p-value of a Pearson r under the t-test; None when n < 3."""
    if n < 3:
        return None
    if abs(r) >= 1.0:
        return 0.0
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * stats.t.sf(abs(t), n - 2))


def cca_first_correlation(
    x,
    y,
    ridge: float = 1e-6,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> CcaReport:
    """
    First canonical correlation between sample matrices ``x`` (n, dx) and ``y`` (n, dy).

    Raises
    ------
    ShapeError
        Row counts differ.
    InsufficientSamplesError
        n <= max(dx, dy).
    NumericalError
        A covariance is singular even after the ridge.
    DegenerateInputError
        A canonical projection has zero variance.
    """
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"CCA inputs differ in sample count: {x.shape[0]} vs {y.shape[0]}")
    n = x.shape[0]
    if n <= max(x.shape[1], y.shape[1]):
        raise InsufficientSamplesError(
            f"CCA needs more samples than dimensions: n={n}, dims=({x.shape[1]}, {y.shape[1]})"
        )

    s_xx = cross_covariance(x, x) + ridge * np.eye(x.shape[1])
    s_yy = cross_covariance(y, y) + ridge * np.eye(y.shape[1])
    s_xy = cross_covariance(x, y)
    try:
        l_x = linalg.cholesky(s_xx, lower=True)
        l_y = linalg.cholesky(s_yy, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"covariance singular after ridge {ridge}: {exc}") from None

    # K = Lx^-1 S_xy Ly^-T; K K^T and K^T K are symmetric and share their nonzero spectrum
    k = linalg.solve_triangular(l_y, linalg.solve_triangular(l_x, s_xy, lower=True).T, lower=True).T
    operator = k @ k.T
    mirror = k.T @ k
    operator = 0.5 * (operator + operator.T)
    mirror = 0.5 * (mirror + mirror.T)
    eigenvalue, c = top_eigenpair(operator, max_iter=max_iter, tol=tol)
    mirror_eigenvalue, d = top_eigenpair(mirror, max_iter=max_iter, tol=tol)

    a = linalg.solve_triangular(l_x.T, c, lower=False)
    b = linalg.cho_solve((l_y, True), s_xy.T @ a)
    if not np.any(b):
        b = linalg.solve_triangular(l_y.T, d, lower=False)

    u = (x - x.mean(axis=0)) @ a
    v = (y - y.mean(axis=0)) @ b
    r = pearson(u, v)
    report = CcaReport(
        correlation=r,
        p_value=pearson_p_value(r, n),
        n=n,
        ridge=float(ridge),
        eigenvalue=eigenvalue,
        mirror_eigenvalue=mirror_eigenvalue,
    )
    logger.info("[cca] r=%.6f over n=%d (eig %.6g / %.6g)", r, n, eigenvalue, mirror_eigenvalue)
    return report


__all__ = ["CcaReport", "pearson_p_value", "cca_first_correlation"]
