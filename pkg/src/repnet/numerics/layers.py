"""
Differentiable layers with hand-written backward passes

What this module does:
- Fully-connected layer, ReLU, softmax cross-entropy and the triplet hinge
  loss, each as a forward function plus its analytic gradient.
- The repression layer joining the two streams, in four variants
  (``RepressionKind``): product, subtraction, concatenation and the
  no-repression baseline.

Conventions:
- Weights are stored input-major: ``W`` has shape (d_in, d_out) and the FC
  output is ``x @ W + b`` (the same as ``W^T x`` for a single vector).
- Every function accepts a single vector (d,) or a batch (B, d). For a batch,
  weight and bias gradients are summed over rows; callers scale for means.
- Layers are stateless; callers keep whatever they need for backward.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from ..domain.errors import LabelRangeError, ParamValidationError, ShapeError
from ..domain.models import RepressionKind

Loss = Union[float, np.ndarray]


@dataclass(frozen=True)
class LayerGrads:
    """Gradients of one layer: one entry per forward input, plus parameters."""

    d_inputs: Tuple[np.ndarray, ...]
    d_weights: Optional[np.ndarray] = None
    d_bias: Optional[np.ndarray] = None

    @property
    def d_input(self) -> np.ndarray:
        return self.d_inputs[0]


def _last_dim(x: np.ndarray, name: str) -> int:
    if x.ndim not in (1, 2):
        raise ShapeError(f"{name} must be a vector or a batch of row vectors, got shape {x.shape}")
    return x.shape[-1]


def _outer_sum(x: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """sum_b x[b]^T delta[b]; plain outer product for single vectors."""
    if x.ndim == 1:
        return np.outer(x, delta)
    return x.T @ delta


def _check_delta(out_shape: Tuple[int, ...], delta: np.ndarray, name: str) -> None:
    if delta.shape != out_shape:
        raise ShapeError(f"{name}: upstream gradient shape {delta.shape} != output shape {out_shape}")


# -----------------------------------------------------------------------------
# Fully-connected
# -----------------------------------------------------------------------------

def fc_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Affine map ``x @ W + b``.

    Raises
    ------
    ShapeError
        ``x`` width differs from ``W`` rows, or ``b`` does not match ``W`` columns.
    """
    d_in = _last_dim(x, "fc input")
    if w.ndim != 2 or w.shape[0] != d_in:
        raise ShapeError(f"fc weight shape {w.shape} does not accept input width {d_in}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"fc bias shape {b.shape} does not match weight columns {w.shape[1]}")
    return x @ w + b


def fc_backward(x: np.ndarray, w: np.ndarray, delta: np.ndarray) -> LayerGrads:
    """d_input = delta W^T, d_W[i, j] = x[i] delta[j], d_bias = delta."""
    out_shape = x.shape[:-1] + (w.shape[1],)
    _check_delta(out_shape, delta, "fc")
    d_bias = delta if delta.ndim == 1 else delta.sum(axis=0)
    return LayerGrads(d_inputs=(delta @ w.T,), d_weights=_outer_sum(x, delta), d_bias=d_bias)


# -----------------------------------------------------------------------------
# ReLU
# -----------------------------------------------------------------------------

def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Pass ``delta`` where the forward input was positive, zero elsewhere."""
    _check_delta(x.shape, delta, "relu")
    return np.where(x > 0.0, delta, 0.0)


# -----------------------------------------------------------------------------
# Softmax cross-entropy
# -----------------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels) -> Tuple[Loss, np.ndarray]:
    """
    ``-log softmax(logits)[label]`` and its gradient ``softmax - onehot``.

    Parameters
    ----------
    logits : array (C,) or (B, C)
    labels : int or int array (B,)

    Returns
    -------
    (loss, d_logits)
        Scalar loss for a single vector, per-row losses (B,) for a batch.

    Raises
    ------
    LabelRangeError
        Any label outside [0, C).
    """
    n_classes = _last_dim(logits, "logits")
    single = logits.ndim == 1
    z2 = logits[None, :] if single else logits
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if lab.shape != (z2.shape[0],):
        raise ShapeError(f"{lab.shape[0]} labels for {z2.shape[0]} logit rows")
    bad = (lab < 0) | (lab >= n_classes)
    if np.any(bad):
        raise LabelRangeError(f"label {int(lab[bad][0])} outside [0, {n_classes})")

    shifted = z2 - z2.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z2.shape[0])
    losses = log_norm - shifted[rows, lab]
    grad = softmax(z2)
    grad[rows, lab] -= 1.0
    if single:
        return float(losses[0]), grad[0]
    return losses, grad


# -----------------------------------------------------------------------------
# Triplet hinge
# -----------------------------------------------------------------------------

def triplet_loss(
    fa: np.ndarray, fp: np.ndarray, fn: np.ndarray, margin: float
) -> Tuple[Loss, Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """
    ``max(0, ||fa - fp||^2 - ||fa - fn||^2 + margin)`` with gradients.

    Squared Euclidean distances, no square root. A triplet exactly on the
    hinge counts as inactive (zero loss, zero gradient).

    Returns
    -------
    (loss, (d_fa, d_fp, d_fn))
        Scalar for single vectors, per-row (B,) for batches.

    Raises
    ------
    ParamValidationError
        ``margin <= 0``.
    ShapeError
        The three inputs differ in shape.
    """
    if not margin > 0.0:
        raise ParamValidationError(f"triplet margin must be > 0, got {margin}")
    if not (fa.shape == fp.shape == fn.shape):
        raise ShapeError(f"triplet inputs differ in shape: {fa.shape}, {fp.shape}, {fn.shape}")
    _last_dim(fa, "triplet input")

    diff_ap = fa - fp
    diff_an = fa - fn
    d_ap = np.sum(diff_ap * diff_ap, axis=-1)
    d_an = np.sum(diff_an * diff_an, axis=-1)
    raw = d_ap - d_an + margin
    active = raw > 0.0
    loss = np.where(active, raw, 0.0)

    gate = active.astype(np.float64)
    if fa.ndim == 2:
        gate = gate[:, None]
    d_fa = gate * 2.0 * (diff_ap - diff_an)
    d_fp = gate * -2.0 * diff_ap
    d_fn = gate * 2.0 * diff_an
    if fa.ndim == 1:
        return float(loss), (d_fa, d_fp, d_fn)
    return loss, (d_fa, d_fp, d_fn)


# -----------------------------------------------------------------------------
# Repression layer
# -----------------------------------------------------------------------------

def rep_weight_shape(kind: RepressionKind, d_input: int, d_output: int) -> Tuple[int, int]:
    """Weight shape of the repression layer; CRL stacks both inputs."""
    rows = 2 * d_input if RepressionKind(kind) is RepressionKind.CRL else d_input
    return rows, d_output


def _rep_check(kind: RepressionKind, f_sls1: np.ndarray, f_acs: np.ndarray, w: np.ndarray) -> int:
    if f_sls1.shape != f_acs.shape:
        raise ShapeError(f"repression inputs differ in shape: F_SLS-1 {f_sls1.shape} vs F_ACS {f_acs.shape}")
    d_input = _last_dim(f_sls1, "repression input")
    expected_rows = rep_weight_shape(kind, d_input, 1)[0]
    if w.ndim != 2 or w.shape[0] != expected_rows:
        raise ShapeError(
            f"{RepressionKind(kind).value} weight shape {w.shape} needs {expected_rows} rows for D_input={d_input}"
        )
    return d_input


def _rep_input(kind: RepressionKind, f_sls1: np.ndarray, f_acs: np.ndarray) -> np.ndarray:
    kind = RepressionKind(kind)
    if kind is RepressionKind.PRL:
        return f_sls1 * f_acs
    if kind is RepressionKind.SRL:
        return f_sls1 - f_acs
    if kind is RepressionKind.CRL:
        return np.concatenate([f_sls1, f_acs], axis=-1)
    return f_sls1


def rep_forward(kind: RepressionKind, f_sls1: np.ndarray, f_acs: np.ndarray, w: np.ndarray) -> np.ndarray:
    """
    Repression layer output F_SLS-2 (bias-free).

    - PRL: ``(F_SLS-1 * F_ACS) @ W``
    - SRL: ``(F_SLS-1 - F_ACS) @ W``
    - CRL: ``[F_SLS-1, F_ACS] @ W``
    - NOREP: ``F_SLS-1 @ W``; F_ACS is ignored.

    Examples
    --------
    >>> rep_forward(RepressionKind.PRL, np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.eye(2))
    array([3., 8.])
    """
    _rep_check(kind, f_sls1, f_acs, w)
    return _rep_input(kind, f_sls1, f_acs) @ w


def crl_split_forward(f_sls1: np.ndarray, f_acs: np.ndarray, w: np.ndarray) -> np.ndarray:
    """CRL written as ``F_SLS-1 @ W[:D] + F_ACS @ W[D:]``."""
    d_input = _rep_check(RepressionKind.CRL, f_sls1, f_acs, w)
    return f_sls1 @ w[:d_input] + f_acs @ w[d_input:]


def rep_backward(
    kind: RepressionKind,
    f_sls1: np.ndarray,
    f_acs: np.ndarray,
    w: np.ndarray,
    delta: np.ndarray,
) -> LayerGrads:
    """
    Gradients of the repression layer w.r.t. both inputs and its weight.

    ``d_inputs`` is ``(d_f_sls1, d_f_acs)``. With ``g = delta @ W^T``:

    - PRL: ``g * F_ACS``, ``g * F_SLS-1``, ``d_W[i, j] = F_SLS-1[i] F_ACS[i] delta[j]``
    - SRL: ``g``, ``-g``, ``d_W[i, j] = (F_SLS-1[i] - F_ACS[i]) delta[j]``.
      These are the derivatives of the forward subtraction. The often-quoted
      form with equal F_SLS-1 and F_ACS gradients and a weight gradient of
      ``(F_ACS[i] - F_SLS-1[i]) delta[j]`` has the opposite sign and is
      deliberately not used.
    - CRL: the two halves of ``g``, ``d_W = [F_SLS-1, F_ACS]^T delta``
    - NOREP: ``g``, zeros, ``d_W = F_SLS-1^T delta``
    """
    kind = RepressionKind(kind)
    d_input = _rep_check(kind, f_sls1, f_acs, w)
    _check_delta(f_sls1.shape[:-1] + (w.shape[1],), delta, f"{kind.value} repression")

    g = delta @ w.T
    d_weights = _outer_sum(_rep_input(kind, f_sls1, f_acs), delta)
    if kind is RepressionKind.PRL:
        d_sls1, d_acs = g * f_acs, g * f_sls1
    elif kind is RepressionKind.SRL:
        d_sls1, d_acs = g, -g
    elif kind is RepressionKind.CRL:
        d_sls1, d_acs = g[..., :d_input], g[..., d_input:]
    else:
        d_sls1, d_acs = g, np.zeros_like(f_acs)
    return LayerGrads(d_inputs=(d_sls1, d_acs), d_weights=d_weights)


__all__ = [
    "LayerGrads",
    "fc_forward",
    "fc_backward",
    "relu_forward",
    "relu_backward",
    "softmax",
    "softmax_cross_entropy",
    "triplet_loss",
    "rep_weight_shape",
    "rep_forward",
    "crl_split_forward",
    "rep_backward",
]
