"""
Dense linear algebra kernels

What this module does:
- Validates the numeric carriers (f64 matrices/vectors, finite entries).
- Matrix product with shape checking, mean-centred cross-covariance,
  Pearson correlation, and a dominant-eigenpair solver by power iteration.

Design:
- All arithmetic in float64; inputs of other dtypes are converted.
- Functions are pure: inputs are never modified, results are fresh arrays.
- ``top_eigenpair`` stops when the residual ``||Mv - lv||`` drops below
  ``residual_tol * ||M||_F`` and treats successive eigenvalue estimates that agree to
  ``tol`` (relative). A stagnated estimate, or one whose residual has not
  halved over a window of iterations (clustered top eigenvalues), is refined
  with a few shifted inverse iterations.
"""

from __future__ import annotations

import logging
from typing import Tuple

import numpy as np

from ..domain.errors import (
    ConvergenceError,
    DegenerateInputError,
    InsufficientSamplesError,
    NumericalError,
    ShapeError,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 10_000
DEFAULT_TOL = 1e-12
DEFAULT_RESIDUAL_TOL = 1e-8
_POLISH_STEPS = 8
_STALL_WINDOW = 100
_STALL_RESIDUAL = 1e-6


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array with positive dims."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains NaN or Inf")
    return arr


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Return ``v`` as a finite 1-D float64 array with positive dim."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 1:
        raise ShapeError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains NaN or Inf")
    return arr


def matmul(a, b) -> np.ndarray:
    """
    Matrix product ``a @ b``.

    Raises
    ------
    ShapeError
        If ``a.cols != b.rows``; the message names both shapes.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def cross_covariance(x, y) -> np.ndarray:
    """
    Sample cross-covariance ``Xc^T Yc / (n - 1)`` of two sample matrices.

    Parameters
    ----------
    x : array (n, dx)
    y : array (n, dy)

    Returns
    -------
    np.ndarray
        (dx, dy) matrix.

    Raises
    ------
    ShapeError
        Row counts differ.
    InsufficientSamplesError
        n < 2.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise ShapeError(f"sample matrices must be 2-D, got {x.shape} and {y.shape}")
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"sample counts differ: {x.shape[0]} vs {y.shape[0]}")
    n = x.shape[0]
    if n < 2:
        raise InsufficientSamplesError(f"cross-covariance needs n >= 2 samples, got {n}")
    as_matrix(x, "x")
    as_matrix(y, "y")
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    # constant columns centre to exact zeros
    xc[:, np.ptp(x, axis=0) == 0.0] = 0.0
    yc[:, np.ptp(y, axis=0) == 0.0] = 0.0
    return (xc.T @ yc) / (n - 1)


def top_eigenpair(
    m,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    residual_tol: float = DEFAULT_RESIDUAL_TOL,
    seed: int = 0,
) -> Tuple[float, np.ndarray]:
    """
    Dominant eigenpair of a square matrix by power iteration.

    Regularisation is the caller's business: ``analysis.cca`` adds
    ``ridge * I`` to both covariances before it builds the operator passed
    here, so this solver takes no ridge of its own.

    Parameters
    ----------
    m : array (d, d)
        Square matrix with a real dominant eigenvalue. Symmetric input (as
        built by ``analysis.cca``) also gets the Rayleigh-quotient guard that
        keeps the refinement on the top eigenvalue.
    max_iter : int
        Iteration cap for the power phase.
    tol : float
        Relative change of successive eigenvalue estimates treated as a stall.
    residual_tol : float
        Converged once ``||Mv - lv|| <= residual_tol * ||M||_F``.
    seed : int
        Seed of the random start vector.

    Returns
    -------
    (float, np.ndarray)
        Eigenvalue and unit eigenvector whose first non-negligible entry is positive.

    Raises
    ------
    ShapeError
        ``m`` is not square.
    ConvergenceError
        No pair meets the residual bound after the power phase and refinement.

    Examples
    --------
    >>> lam, vec = top_eigenpair([[2.0, 1.0], [1.0, 2.0]])
    >>> round(lam, 9), vec.round(9).tolist()
    (3.0, [0.707106781, 0.707106781])
    """
    m = as_matrix(m, "m")
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"eigenproblem needs a square matrix, got {m.shape[0]}x{m.shape[1]}")
    d = m.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.normal(size=d)
    v /= np.linalg.norm(v)

    scale = float(np.linalg.norm(m))
    if scale == 0.0:
        return 0.0, _canonical_sign(v)
    target = residual_tol * scale
    symmetric = bool(np.allclose(m, m.T, rtol=0.0, atol=1e-12 * scale))

    y = m @ v
    lam = float(v @ y)
    residual = float(np.linalg.norm(y - lam * v))
    window_residual = residual
    for it in range(max_iter):
        if residual <= target:
            logger.debug("[eig] residual converged after %d iterations", it)
            return lam, _canonical_sign(v)
        norm_y = float(np.linalg.norm(y))
        if norm_y == 0.0:
            # v fell into the null space; restart from a fresh direction
            v = rng.normal(size=d)
            v /= np.linalg.norm(v)
        else:
            v = y / norm_y
        y = m @ v
        lam_new = float(v @ y)
        residual = float(np.linalg.norm(y - lam_new * v))
        stalled = abs(lam_new - lam) <= tol * max(abs(lam_new), np.finfo(float).tiny)
        lam = lam_new

        slow = False
        if (it + 1) % _STALL_WINDOW == 0:
            slow = residual > 0.5 * window_residual
            window_residual = residual
        if residual <= target or not (stalled or slow):
            continue

        p_lam, p_v, p_res = _refine(m, lam, v, residual, target, symmetric)
        logger.debug("[eig] refining at iteration %d: residual %.3e -> %.3e", it, residual, p_res)
        if p_lam >= lam - target and p_res <= target:
            return p_lam, _canonical_sign(p_v)
        if stalled:
            if p_res <= max(target, _STALL_RESIDUAL * scale) and p_lam >= lam - target:
                return p_lam, _canonical_sign(p_v)
            raise ConvergenceError(
                f"power iteration stalled at iteration {it} without a real dominant eigenpair",
                residual=min(residual, p_res),
            )
        # slow window: keep iterating towards the top of the cluster

    if residual <= target:
        return lam, _canonical_sign(v)
    p_lam, p_v, p_res = _refine(m, lam, v, residual, target, symmetric)
    if p_res <= target:
        return p_lam, _canonical_sign(p_v)
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations", residual=min(residual, p_res)
    )


def _refine(m: np.ndarray, lam: float, v: np.ndarray, residual: float, target: float, symmetric: bool):
    """
    Polish (lam, v). On symmetric input a converged pair below ``lam`` is a
    lower eigenvector: it is projected out of ``v`` and polishing restarts.
    """
    for _ in range(min(m.shape[0], _POLISH_STEPS)):
        p_lam, p_v, p_res = _polish(m, lam, v, residual, target)
        if not symmetric or p_res > target or p_lam >= lam - target:
            break
        v = v - (v @ p_v) * p_v
        norm_v = float(np.linalg.norm(v))
        if norm_v == 0.0:
            break
        v = v / norm_v
        y = m @ v
        lam = float(v @ y)
        residual = float(np.linalg.norm(y - lam * v))
        if residual <= target:
            return lam, v, residual
    return p_lam, p_v, p_res


def _polish(m: np.ndarray, lam: float, v: np.ndarray, residual: float, target: float):
    """
    Shifted inverse iteration from (lam, v); returns the lowest-residual pair seen.

    The shift sits ``residual`` above the current estimate, at or above the
    top eigenvalue of a symmetric matrix once power iteration has favoured it.
    """
    best = (lam, v, residual)
    eye = np.eye(m.shape[0])
    for _ in range(_POLISH_STEPS):
        try:
            w = np.linalg.solve(m - (lam + residual) * eye, v)
        except np.linalg.LinAlgError:
            break
        norm_w = float(np.linalg.norm(w))
        if not np.isfinite(norm_w) or norm_w == 0.0:
            break
        v = w / norm_w
        y = m @ v
        lam = float(v @ y)
        residual = float(np.linalg.norm(y - lam * v))
        if residual < best[2]:
            best = (lam, v, residual)
        if residual <= target:
            break
    return best


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip ``v`` so its first entry above 1e-12 * max|v| is positive."""
    mags = np.abs(v)
    peak = float(mags.max())
    if peak == 0.0:
        return v
    first = int(np.argmax(mags > 1e-12 * peak))
    return -v if v[first] < 0 else v


def pearson(u, v) -> float:
    """
    Sample Pearson correlation coefficient, clipped to [-1, 1].

    Raises
    ------
    ShapeError
        Lengths differ or are below 2.
    DegenerateInputError
        Either input is constant.
    """
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    if u.shape != v.shape:
        raise ShapeError(f"pearson inputs differ in length: {u.shape[0]} vs {v.shape[0]}")
    if u.shape[0] < 2:
        raise ShapeError("pearson needs at least 2 observations")
    if np.ptp(u) == 0.0 or np.ptp(v) == 0.0:
        raise DegenerateInputError("pearson input has zero variance")
    uc = u - u.mean()
    vc = v - v.mean()
    r = float(uc @ vc) / (float(np.linalg.norm(uc)) * float(np.linalg.norm(vc)))
    return float(np.clip(r, -1.0, 1.0))


__all__ = [
    "as_matrix",
    "as_vector",
    "matmul",
    "cross_covariance",
    "top_eigenpair",
    "pearson",
]
