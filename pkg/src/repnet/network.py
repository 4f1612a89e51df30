"""
Two-stream repression network

What this module does:
- Builds the parameter set for the network: a small MLP base extractor, the
  attribute stream (FC -> F_ACS -> color and model heads) and the similarity
  stream (FC -> F_SLS-1 -> repression -> F_SLS-2 -> FC -> F_SLS-3).
- Runs forward passes that keep every named feature, backpropagates all
  losses by hand, and applies SGD with momentum.
- Exposes ``embed`` for retrieval: the L2-normalised F_SLS-3, F_ACS and the
  softmax attribute probabilities.

Layer order (also the checkpoint table order):
    base_0 .. base_{n-1}, acs_fc, color_head, model_head, sls_fc1, rep, sls_fc2

Design:
- ReLU after every base layer, after acs_fc and after sls_fc1; no activation
  after the repression layer, the heads or sls_fc2.
- F_SLS-3 is L2-normalised; an all-zero row stays zero and is counted.
- The repression layer is bias-free (its bias table has length 0).
- Both repression inputs receive gradients, so the similarity loss also
  reaches the attribute stream through F_ACS.
- A training step stacks anchors, positives and negatives into one batch
  through a single parameter set; only anchor rows feed the attribute losses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Tuple

import numpy as np

from .config import RepNetConfig
from .domain.errors import ParamValidationError, ShapeError
from .domain.models import FEATURE_NAMES, TripletBatch
from .numerics.layers import (
    fc_backward,
    fc_forward,
    relu_backward,
    relu_forward,
    rep_backward,
    rep_forward,
    rep_weight_shape,
    softmax,
    softmax_cross_entropy,
    triplet_loss,
)

logger = logging.getLogger(__name__)

REP_LAYER = "rep"


def layer_shapes(config: RepNetConfig) -> Dict[str, Tuple[Tuple[int, int], int]]:
    """Expected ``(weight_shape, bias_length)`` per layer, in table order."""
    shapes: Dict[str, Tuple[Tuple[int, int], int]] = {}
    prev = config.input_dim
    for i, width in enumerate(config.base_dims):
        shapes[f"base_{i}"] = ((prev, width), width)
        prev = width
    shapes["acs_fc"] = ((prev, config.d_acs), config.d_acs)
    shapes["color_head"] = ((config.d_acs, config.n_colors), config.n_colors)
    shapes["model_head"] = ((config.d_acs, config.n_models), config.n_models)
    shapes["sls_fc1"] = ((prev, config.d_sls1), config.d_sls1)
    shapes[REP_LAYER] = (rep_weight_shape(config.rep_kind, config.d_sls1, config.d_sls2), 0)
    shapes["sls_fc2"] = ((config.d_sls2, config.d_sls3), config.d_sls3)
    return shapes


@dataclass
class RepNetParams:
    """Learnable weights and biases keyed by layer name, with momentum buffers."""

    weights: Dict[str, np.ndarray]
    biases: Dict[str, np.ndarray]
    weight_momentum: Dict[str, np.ndarray] = field(default_factory=dict)
    bias_momentum: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, w in self.weights.items():
            self.weight_momentum.setdefault(name, np.zeros_like(w))
        for name, b in self.biases.items():
            self.bias_momentum.setdefault(name, np.zeros_like(b))

    @property
    def layer_names(self) -> List[str]:
        return list(self.weights)

    def copy(self) -> "RepNetParams":
        return RepNetParams(
            weights={k: v.copy() for k, v in self.weights.items()},
            biases={k: v.copy() for k, v in self.biases.items()},
            weight_momentum={k: v.copy() for k, v in self.weight_momentum.items()},
            bias_momentum={k: v.copy() for k, v in self.bias_momentum.items()},
        )

    def validate(self, config: RepNetConfig) -> "RepNetParams":
        """Check that every layer exists exactly once with the configured shape."""
        expected = layer_shapes(config)
        missing = [n for n in expected if n not in self.weights]
        extra = [n for n in self.weights if n not in expected]
        if missing or extra:
            raise ShapeError(f"layer set mismatch: missing {missing}, unexpected {extra}")
        for name, (w_shape, b_len) in expected.items():
            tables = (
                ("weight", self.weights[name], w_shape),
                ("bias", self.biases.get(name), (b_len,)),
                ("weight momentum", self.weight_momentum.get(name), w_shape),
                ("bias momentum", self.bias_momentum.get(name), (b_len,)),
            )
            for what, arr, shape in tables:
                if arr is None or arr.shape != shape:
                    got = None if arr is None else arr.shape
                    raise ShapeError(f"layer {name}: {what} shape {got}, expected {shape}")
        return self


def init_params(config: RepNetConfig) -> RepNetParams:
    """Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases, seeded."""
    rng = np.random.default_rng([config.seed, 0])
    weights: Dict[str, np.ndarray] = {}
    biases: Dict[str, np.ndarray] = {}
    for name, ((fan_in, fan_out), b_len) in layer_shapes(config).items():
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights[name] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        biases[name] = np.zeros(b_len)
    return RepNetParams(weights=weights, biases=biases)


@dataclass(frozen=True)
class ForwardTrace:
    """Every named feature of one forward pass plus the pre-activations backward needs."""

    inputs: np.ndarray
    base_inputs: Tuple[np.ndarray, ...]
    base_pre: Tuple[np.ndarray, ...]
    f_base: np.ndarray
    acs_pre: np.ndarray
    f_acs: np.ndarray
    f_color: np.ndarray
    f_model: np.ndarray
    sls1_pre: np.ndarray
    f_sls1: np.ndarray
    f_sls2: np.ndarray
    sls3_raw: np.ndarray
    sls3_norm: np.ndarray
    f_sls3: np.ndarray
    zero_norm_count: int

    def feature(self, name: str) -> np.ndarray:
        """Look up a feature by its name (``F_base`` ... ``F_SLS-3``)."""
        table = {
            "F_base": self.f_base,
            "F_ACS": self.f_acs,
            "F_model": self.f_model,
            "F_color": self.f_color,
            "F_SLS-1": self.f_sls1,
            "F_SLS-2": self.f_sls2,
            "F_SLS-3": self.f_sls3,
        }
        if name not in table:
            raise ParamValidationError(f"unknown feature {name!r}; expected one of {FEATURE_NAMES}")
        return table[name]


def forward(params: RepNetParams, config: RepNetConfig, x: np.ndarray) -> ForwardTrace:
    """
    Deterministic forward pass over a vector (d,) or batch (B, d).

    Raises
    ------
    ShapeError
        Input width differs from ``config.input_dim``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != config.input_dim:
        raise ShapeError(f"input shape {x.shape} does not match input_dim {config.input_dim}")
    w, b = params.weights, params.biases

    h = x
    base_inputs: List[np.ndarray] = []
    base_pre: List[np.ndarray] = []
    for i in range(len(config.base_dims)):
        base_inputs.append(h)
        z = fc_forward(h, w[f"base_{i}"], b[f"base_{i}"])
        base_pre.append(z)
        h = relu_forward(z)
    f_base = h

    acs_pre = fc_forward(f_base, w["acs_fc"], b["acs_fc"])
    f_acs = relu_forward(acs_pre)
    f_color = fc_forward(f_acs, w["color_head"], b["color_head"])
    f_model = fc_forward(f_acs, w["model_head"], b["model_head"])

    sls1_pre = fc_forward(f_base, w["sls_fc1"], b["sls_fc1"])
    f_sls1 = relu_forward(sls1_pre)
    f_sls2 = rep_forward(config.rep_kind, f_sls1, f_acs, w[REP_LAYER])
    sls3_raw = fc_forward(f_sls2, w["sls_fc2"], b["sls_fc2"])
    f_sls3, norms, zero_count = _l2_normalize(sls3_raw)

    return ForwardTrace(
        inputs=x,
        base_inputs=tuple(base_inputs),
        base_pre=tuple(base_pre),
        f_base=f_base,
        acs_pre=acs_pre,
        f_acs=f_acs,
        f_color=f_color,
        f_model=f_model,
        sls1_pre=sls1_pre,
        f_sls1=f_sls1,
        f_sls2=f_sls2,
        sls3_raw=sls3_raw,
        sls3_norm=norms,
        f_sls3=f_sls3,
        zero_norm_count=zero_count,
    )


def _l2_normalize(raw: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
    norms = np.linalg.norm(raw, axis=-1, keepdims=True)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    return raw / safe, norms, int(np.count_nonzero(zero))


def _l2_normalize_backward(y: np.ndarray, norms: np.ndarray, d_y: np.ndarray) -> np.ndarray:
    """d raw for y = raw / ||raw||; zero rows pass no gradient."""
    proj = np.sum(y * d_y, axis=-1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return np.where(norms == 0.0, 0.0, (d_y - y * proj) / safe)


Grads = Dict[str, Tuple[np.ndarray, np.ndarray]]


def backward(
    params: RepNetParams,
    config: RepNetConfig,
    trace: ForwardTrace,
    d_sls3: np.ndarray,
    d_color: np.ndarray,
    d_model: np.ndarray,
) -> Grads:
    """
    Backpropagate upstream gradients on F_SLS-3 and both logit heads.

    Returns
    -------
    dict
        layer name -> (d_weights, d_bias), summed over batch rows.
    """
    w = params.weights
    grads: Grads = {}

    d_raw3 = _l2_normalize_backward(trace.f_sls3, trace.sls3_norm, d_sls3)
    g = fc_backward(trace.f_sls2, w["sls_fc2"], d_raw3)
    grads["sls_fc2"] = (g.d_weights, g.d_bias)

    g_rep = rep_backward(config.rep_kind, trace.f_sls1, trace.f_acs, w[REP_LAYER], g.d_input)
    d_sls1, d_acs_rep = g_rep.d_inputs
    grads[REP_LAYER] = (g_rep.d_weights, np.zeros(0))

    g = fc_backward(trace.f_base, w["sls_fc1"], relu_backward(trace.sls1_pre, d_sls1))
    grads["sls_fc1"] = (g.d_weights, g.d_bias)
    d_base = g.d_input

    g_color = fc_backward(trace.f_acs, w["color_head"], d_color)
    g_model = fc_backward(trace.f_acs, w["model_head"], d_model)
    grads["color_head"] = (g_color.d_weights, g_color.d_bias)
    grads["model_head"] = (g_model.d_weights, g_model.d_bias)
    d_acs = g_color.d_input + g_model.d_input + d_acs_rep

    g = fc_backward(trace.f_base, w["acs_fc"], relu_backward(trace.acs_pre, d_acs))
    grads["acs_fc"] = (g.d_weights, g.d_bias)
    d_base = d_base + g.d_input

    for i in reversed(range(len(config.base_dims))):
        name = f"base_{i}"
        g = fc_backward(trace.base_inputs[i], w[name], relu_backward(trace.base_pre[i], d_base))
        grads[name] = (g.d_weights, g.d_bias)
        d_base = g.d_input

    return {name: grads[name] for name in params.weights}


class LossReport(NamedTuple):
    triplet: float
    color: float
    model: float
    total: float


def loss_and_grads(
    params: RepNetParams,
    config: RepNetConfig,
    xa: np.ndarray,
    xp: np.ndarray,
    xn: np.ndarray,
    colors: np.ndarray,
    models: np.ndarray,
) -> Tuple[LossReport, Grads]:
    """
    Batch-mean losses and their parameter gradients for (B, d) triplet inputs.

    The three branches share one forward over the stacked (3B, d) batch; the
    color/model losses use anchor rows only.
    """
    n = xa.shape[0]
    if n == 0:
        raise ShapeError("empty triplet batch")
    trace = forward(params, config, np.concatenate([xa, xp, xn], axis=0))
    if trace.zero_norm_count:
        logger.warning("[train] %d zero-norm embeddings left unnormalised", trace.zero_norm_count)

    weights = config.loss_weights
    emb = trace.f_sls3
    t_loss, (d_fa, d_fp, d_fn) = triplet_loss(emb[:n], emb[n:2 * n], emb[2 * n:], config.margin)
    c_loss, d_c = softmax_cross_entropy(trace.f_color[:n], colors)
    m_loss, d_m = softmax_cross_entropy(trace.f_model[:n], models)

    report = LossReport(
        triplet=float(np.mean(t_loss)),
        color=float(np.mean(c_loss)),
        model=float(np.mean(m_loss)),
        total=0.0,
    )
    report = report._replace(
        total=weights.triplet * report.triplet + weights.color * report.color + weights.model * report.model
    )

    d_sls3 = np.concatenate([d_fa, d_fp, d_fn], axis=0) * (weights.triplet / n)
    d_color = np.zeros_like(trace.f_color)
    d_model = np.zeros_like(trace.f_model)
    d_color[:n] = d_c * (weights.color / n)
    d_model[:n] = d_m * (weights.model / n)
    return report, backward(params, config, trace, d_sls3, d_color, d_model)


def lr_at(iteration: int, config: RepNetConfig) -> float:
    """Step schedule: ``base_lr * decay_factor ** floor(iteration / decay_interval)``."""
    return config.base_lr * config.decay_factor ** (int(iteration) // config.decay_interval)


def apply_update(params: RepNetParams, config: RepNetConfig, grads: Grads, lr: float) -> None:
    """In-place momentum step: ``v = mu * v + lr * g``; ``w -= v``."""
    mu = config.momentum
    for name, (d_w, d_b) in grads.items():
        vw = params.weight_momentum[name]
        vw *= mu
        vw += lr * d_w
        params.weights[name] -= vw
        vb = params.bias_momentum[name]
        vb *= mu
        vb += lr * d_b
        params.biases[name] -= vb


def train_step(
    params: RepNetParams,
    config: RepNetConfig,
    batch: TripletBatch,
    iteration: int,
) -> LossReport:
    """
    One SGD-momentum update on a triplet batch; returns the pre-update losses.

    Raises
    ------
    RejectedBatchError
        A triplet breaks the sampling rule, or the batch is empty.
    """
    batch.validate()
    xa, xp, xn = batch.inputs()
    ds = batch.dataset
    report, grads = loss_and_grads(
        params, config, xa, xp, xn, ds.colors[batch.anchors], ds.models[batch.anchors]
    )
    apply_update(params, config, grads, lr_at(iteration, config))
    return report


class Embedding(NamedTuple):
    sls: np.ndarray
    acs: np.ndarray
    color_probs: np.ndarray
    model_probs: np.ndarray


def embed(params: RepNetParams, config: RepNetConfig, x: np.ndarray) -> Embedding:
    """Retrieval features: unit F_SLS-3, F_ACS and softmax attribute probabilities."""
    trace = forward(params, config, x)
    if trace.zero_norm_count:
        logger.warning("[embed] %d zero-norm embeddings left unnormalised", trace.zero_norm_count)
    return Embedding(
        sls=trace.f_sls3,
        acs=trace.f_acs,
        color_probs=softmax(trace.f_color),
        model_probs=softmax(trace.f_model),
    )


def predict_attributes(params: RepNetParams, config: RepNetConfig, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Arg-max color and model classes (lowest index on ties)."""
    trace = forward(params, config, x)
    return np.argmax(trace.f_color, axis=-1), np.argmax(trace.f_model, axis=-1)


def feature_extractor(params: RepNetParams, config: RepNetConfig, name: str):
    """Return ``x -> named feature`` over a frozen parameter set; 2-D grids are flattened row-major."""
    if name not in FEATURE_NAMES:
        raise ParamValidationError(f"unknown feature {name!r}; expected one of {FEATURE_NAMES}")

    def extract(x: np.ndarray) -> np.ndarray:
        flat = np.asarray(x, dtype=np.float64).reshape(-1)
        return forward(params, config, flat).feature(name)

    return extract


__all__ = [
    "REP_LAYER",
    "layer_shapes",
    "RepNetParams",
    "init_params",
    "ForwardTrace",
    "forward",
    "backward",
    "LossReport",
    "loss_and_grads",
    "lr_at",
    "apply_update",
    "train_step",
    "Embedding",
    "embed",
    "predict_attributes",
    "feature_extractor",
]
