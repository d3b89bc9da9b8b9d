"""Minimal feed-forward network shared by every model in the package.

A plain ReLU MLP with equal-width hidden layers, inverted dropout, Adam,
and finite-difference gradient checking.  Forward passes for prediction go
through the selected kernel backend; training losses are built on the
:mod:`ebsurv.tape` primitives.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import backend as K
from . import tape
from .errors import NonFiniteError, ShapeError


@dataclass(frozen=True)
class MlpConfig:
    """Architecture of a fully-connected ReLU network.

    All hidden layers share the same width.  ``dropout_rate`` is the
    probability of dropping a hidden unit during training.
    """

    input_dim: int
    output_dim: int
    nodes_per_layer: int
    hidden_layers: int = 2
    dropout_rate: float = 0.0
    activation: str = "relu"

    def __post_init__(self):
        if min(self.input_dim, self.output_dim, self.nodes_per_layer) < 1:
            raise ShapeError("all layer dimensions must be >= 1")
        if self.hidden_layers < 0:
            raise ShapeError("hidden_layers must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ShapeError("dropout_rate must lie in [0, 1)")
        if self.activation != "relu":
            raise ShapeError(f"unsupported activation: {self.activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim] + [self.nodes_per_layer] * self.hidden_layers
        dims.append(self.output_dim)
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class ParameterSet:
    """Per-layer weight matrices and bias vectors.

    Treated as an immutable value: optimizer steps return fresh instances.
    The same container doubles as gradient storage (shape-congruent by
    construction).
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def initialize(cls, cfg: MlpConfig, rng: np.random.Generator) -> "ParameterSet":
        # Uniform +/- sqrt(6 / (fan_in + fan_out)) keeps initial outputs O(1).
        ws, bs = [], []
        for fan_in, fan_out in cfg.layer_dims:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs)

    @classmethod
    def zeros(cls, cfg: MlpConfig) -> "ParameterSet":
        ws = [np.zeros((i, o)) for i, o in cfg.layer_dims]
        bs = [np.zeros(o) for i, o in cfg.layer_dims]
        return cls(ws, bs)

    def copy(self) -> "ParameterSet":
        return ParameterSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def check_against(self, cfg: MlpConfig) -> None:
        dims = cfg.layer_dims
        if len(self.weights) != len(dims) or len(self.biases) != len(dims):
            raise ShapeError("parameter set has the wrong number of layers")
        for (w, b), (fi, fo) in zip(zip(self.weights, self.biases), dims):
            if w.shape != (fi, fo) or b.shape != (fo,):
                raise ShapeError(f"layer shape mismatch: {w.shape}/{b.shape} vs ({fi},{fo})")

    def arrays(self) -> list[np.ndarray]:
        return list(self.weights) + list(self.biases)

    @property
    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays())

    def ravel(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_ravel(self, flat: np.ndarray) -> "ParameterSet":
        out = self.copy()
        offset = 0
        for a in out.arrays():
            a[...] = flat[offset : offset + a.size].reshape(a.shape)
            offset += a.size
        return out


# Gradients share the ParameterSet layout.
Gradients = ParameterSet


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m: ParameterSet
    v: ParameterSet
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ParameterSet, **kw) -> "AdamState":
        zeros = ParameterSet(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
        )
        return cls(m=zeros, v=zeros.copy(), **kw)


def _dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    # Inverted dropout: surviving units are scaled up at training time.
    return (rng.random(shape) >= rate) / (1.0 - rate)


def mlp_forward(
    params: ParameterSet,
    cfg: MlpConfig,
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Plain forward pass; deterministic unless ``training`` enables dropout.

    Accepts a single input vector or a stack of rows; the output matches
    the input's dimensionality.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = np.ascontiguousarray(np.atleast_2d(x))
    if h.shape[1] != cfg.input_dim:
        raise ShapeError(f"input has {h.shape[1]} features, expected {cfg.input_dim}")
    params.check_against(cfg)
    if training and cfg.dropout_rate > 0.0 and rng is None:
        raise ValueError("training-mode forward with dropout needs a mask source")
    n_layers = len(cfg.layer_dims)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = K.affine(h, w, b)
        if i < n_layers - 1:
            h = K.relu(h)
            if training and cfg.dropout_rate > 0.0:
                h = h * _dropout_mask(h.shape, cfg.dropout_rate, rng)
    if not np.all(np.isfinite(h)):
        raise NonFiniteError("mlp forward produced non-finite values")
    return h[0] if single else h


def params_to_vars(params: ParameterSet) -> list[tuple[tape.Var, tape.Var]]:
    return [(tape.param(w), tape.param(b)) for w, b in zip(params.weights, params.biases)]


def vars_to_grads(pvars: list[tuple[tape.Var, tape.Var]]) -> Gradients:
    ws, bs = [], []
    for wv, bv in pvars:
        ws.append(np.zeros_like(wv.value) if wv.grad is None else np.asarray(wv.grad))
        bs.append(np.zeros_like(bv.value) if bv.grad is None else np.asarray(bv.grad))
    return Gradients(ws, bs)


def mlp_tape_forward(
    pvars: list[tuple[tape.Var, tape.Var]],
    cfg: MlpConfig,
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tape.Var:
    """Recorded forward pass over a 2-D input, for use inside losses."""
    h = tape.const(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    if h.value.shape[1] != cfg.input_dim:
        raise ShapeError(f"input has {h.value.shape[1]} features, expected {cfg.input_dim}")
    n_layers = len(cfg.layer_dims)
    for i, (wv, bv) in enumerate(pvars):
        h = tape.linear(h, wv, bv)
        if i < n_layers - 1:
            h = tape.relu(h)
            if training and cfg.dropout_rate > 0.0:
                if rng is None:
                    raise ValueError("training-mode forward with dropout needs a mask source")
                h = tape.mul_const(h, _dropout_mask(h.value.shape, cfg.dropout_rate, rng))
    return h


def loss_gradients(params: ParameterSet, loss_fn) -> tuple[float, Gradients]:
    """Evaluate a recorded scalar loss and its reverse-mode gradients.

    ``loss_fn`` receives the parameters as tape leaves (one ``(W, b)`` pair
    per layer) and must return a scalar :class:`tape.Var` built from the
    supported primitives.
    """
    pvars = params_to_vars(params)
    loss = loss_fn(pvars)
    if not isinstance(loss, tape.Var) or loss.value.shape != ():
        raise ShapeError("loss_fn must return a scalar tape variable")
    tape.backward(loss)
    return float(loss.value), vars_to_grads(pvars)


def adam_update(
    params: ParameterSet,
    grads: Gradients,
    state: AdamState,
    lr: float,
) -> tuple[ParameterSet, AdamState]:
    """One bias-corrected Adam step; returns fresh parameters and state."""
    if lr <= 0.0:
        raise ValueError("learning rate must be positive")
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or any(
        p.shape != g.shape for p, g in zip(p_arrays, g_arrays)
    ):
        raise ShapeError("gradient shapes do not match the parameter set")
    if any(not np.all(np.isfinite(g)) for g in g_arrays):
        raise NonFiniteError("adam update rejected: non-finite gradient")

    t = state.step + 1
    new_p, new_m, new_v = params.copy(), state.m.copy(), state.v.copy()
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(new_p.arrays(), g_arrays, new_m.arrays(), new_v.arrays()):
        m[...] = state.beta1 * m + (1.0 - state.beta1) * g
        v[...] = state.beta2 * v + (1.0 - state.beta2) * g * g
        p[...] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return new_p, replace(state, m=new_m, v=new_v, step=t)


@dataclass(frozen=True)
class GradCheckReport:
    """Central-difference comparison across all parameters."""

    max_rel_error: float
    mean_rel_error: float
    n_parameters: int


def gradient_check(params: ParameterSet, loss_fn, h: float = 1e-5) -> GradCheckReport:
    """Compare reverse-mode gradients against central finite differences.

    The loss must be deterministic (dropout off, any sampling frozen).
    Report-only: nothing is raised on large errors.  The relative-error
    denominator is floored at 1e-4 because difference quotients of a loss
    of order one carry roundoff around 1e-10; gradients smaller than the
    floor are unmeasurable by this method and count as matching.
    """
    _, grads = loss_gradients(params, loss_fn)
    analytic = grads.ravel()
    flat = params.ravel()
    numeric = np.empty_like(flat)
    for i in range(flat.size):
        step = h * max(1.0, abs(flat[i]))
        bump = flat.copy()
        bump[i] = flat[i] + step
        up = _loss_value(params.with_ravel(bump), loss_fn)
        bump[i] = flat[i] - step
        down = _loss_value(params.with_ravel(bump), loss_fn)
        numeric[i] = (up - down) / (2.0 * step)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-4)
    rel = np.abs(analytic - numeric) / denom
    return GradCheckReport(float(rel.max()), float(rel.mean()), flat.size)


def _loss_value(params: ParameterSet, loss_fn) -> float:
    return float(loss_fn(params_to_vars(params)).value)
