"""Discrete-time survival baselines on an equidistant grid.

Two network heads over the same grid: one predicts a piecewise-constant
hazard per interval (softplus link), the other a probability mass per
interval plus one extra mass for failure beyond the grid (softmax link).
A covariate-blind marginal-hazard model with a closed-form fit serves as
a weak comparator.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tape
from .data import NormalizationStats, SurvivalData
from .errors import OutOfSupportError, ShapeError
from .nn import MlpConfig, ParameterSet, mlp_forward, mlp_tape_forward, params_to_vars
from .training import TrainConfig, TrainHistory, fit_loop


@dataclass(frozen=True)
class DiscreteGrid:
    """Equidistant cut points 0 = s_0 < s_1 < ... < s_G = t_max."""

    n_grid: int
    t_max: float

    def __post_init__(self):
        if self.n_grid < 1:
            raise ValueError("n_grid must be >= 1")
        if not (self.t_max > 0):
            raise ValueError("t_max must be positive")

    @property
    def cuts(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_grid + 1)

    @property
    def width(self) -> float:
        return self.t_max / self.n_grid


def _bin_index(grid: DiscreteGrid, tau: np.ndarray) -> np.ndarray:
    """Index of the interval (s_k, s_{k+1}] containing tau; 0 lands in bin 0."""
    k = np.searchsorted(grid.cuts, tau, side="left") - 1
    return np.clip(k, 0, grid.n_grid - 1)


def _exposure_weights(grid: DiscreteGrid, tau: np.ndarray) -> np.ndarray:
    """Per-interval time at risk before tau: full widths, then a partial bin."""
    k = _bin_index(grid, tau)
    cols = np.arange(grid.n_grid)
    w = np.where(cols[None, :] < k[:, None], grid.width, 0.0)
    w[np.arange(tau.size), k] = tau - grid.cuts[k]
    return w


def _check_support(tau, t_max) -> None:
    if np.any(np.asarray(tau) < 0):
        raise OutOfSupportError("times must be nonnegative")
    if np.any(np.asarray(tau) > t_max):
        raise OutOfSupportError(f"time beyond grid end t_max={t_max}")


@dataclass
class _GridModel:
    """Shared plumbing for the two network heads."""

    cfg: MlpConfig
    params: ParameterSet
    grid: DiscreteGrid
    norm: NormalizationStats | None = None

    def __post_init__(self):
        if self.cfg.output_dim != self._expected_outputs():
            raise ValueError("network output width does not match the grid")
        self.params.check_against(self.cfg)

    @property
    def covariate_dim(self) -> int:
        return self.cfg.input_dim

    @property
    def t_max(self) -> float:
        return self.grid.t_max

    def _prep_x(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.ndim != 2 or x.shape[1] != self.cfg.input_dim:
            raise ShapeError(
                f"expected covariates with {self.cfg.input_dim} columns, got {x.shape}"
            )
        if self.norm is not None:
            x = self.norm.apply(x)
        return x

    def raw_outputs(self, x) -> np.ndarray:
        return mlp_forward(self.params, self.cfg, self._prep_x(x))

    def survival(self, t: float, x) -> float:
        return float(self.survival_batch(t, np.atleast_2d(np.asarray(x)))[0])

    def survival_curve(self, ts, x, integration=None, rng=None) -> np.ndarray:
        """S(t | x) on a vector of times for one covariate row.

        The quadrature arguments are accepted for interface parity and
        ignored; discrete heads are closed form.
        """
        ts = np.asarray(ts, dtype=np.float64)
        _check_support(ts, self.t_max)
        s_cuts = self._survival_at_cuts(x)
        if s_cuts.shape[0] != 1:
            raise ShapeError("survival_curve expects a single covariate row")
        return np.interp(ts, self.grid.cuts, s_cuts[0])

    def survival_batch(self, t: float, x, integration=None, rng=None) -> np.ndarray:
        _check_support(t, self.t_max)
        s_cuts = self._survival_at_cuts(x)
        k = int(_bin_index(self.grid, np.asarray([t]))[0])
        f = (t - self.grid.cuts[k]) / self.grid.width
        return (1.0 - f) * s_cuts[:, k] + f * s_cuts[:, k + 1]


class PchModel(_GridModel):
    """Piecewise-constant hazards; survival interpolates the cumulative hazard."""

    def _expected_outputs(self) -> int:
        return self.grid.n_grid

    def hazards(self, x) -> np.ndarray:
        """Softplus of the raw outputs, one hazard per interval."""
        return np.logaddexp(self.raw_outputs(x), 0.0)

    def _survival_at_cuts(self, x) -> np.ndarray:
        lam = self.hazards(x)
        cum = np.concatenate(
            [np.zeros((lam.shape[0], 1)), np.cumsum(lam * self.grid.width, axis=1)],
            axis=1,
        )
        return np.exp(-cum)

    def survival_batch(self, t: float, x, integration=None, rng=None) -> np.ndarray:
        # exact: H is piecewise linear, so interpolate H rather than S
        _check_support(t, self.t_max)
        lam = self.hazards(x)
        w = _exposure_weights(self.grid, np.asarray([float(t)]))
        return np.exp(-(lam * w).sum(axis=1))

    def survival_curve(self, ts, x, integration=None, rng=None) -> np.ndarray:
        ts = np.asarray(ts, dtype=np.float64)
        _check_support(ts, self.t_max)
        lam = self.hazards(x)
        if lam.shape[0] != 1:
            raise ShapeError("survival_curve expects a single covariate row")
        cum = np.concatenate([[0.0], np.cumsum(lam[0] * self.grid.width)])
        return np.exp(-np.interp(ts, self.grid.cuts, cum))


class PmfModel(_GridModel):
    """Softmax masses per interval plus one mass beyond the grid."""

    def _expected_outputs(self) -> int:
        return self.grid.n_grid + 1

    def probabilities(self, x) -> np.ndarray:
        raw = self.raw_outputs(x)
        raw = raw - raw.max(axis=1, keepdims=True)
        p = np.exp(raw)
        return p / p.sum(axis=1, keepdims=True)

    def _survival_at_cuts(self, x) -> np.ndarray:
        p = self.probabilities(x)
        return np.cumsum(p[:, ::-1], axis=1)[:, ::-1]


def _softplus_var(raw: tape.Var) -> tape.Var:
    """Elementwise log(1 + exp(raw)) for a 2-D tape node."""
    n, m = raw.value.shape
    flat = tape.reshape(raw, (n * m, 1))
    pairs = tape.concat_cols([flat, tape.const(np.zeros((n * m, 1)))])
    return tape.reshape(tape.logsumexp(pairs), (n, m))


def pch_loss_var(
    pvars,
    model: PchModel,
    data: SurvivalData,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tape.Var:
    """Summed loss: exposure-weighted hazard minus log hazard at failures."""
    _check_support(data.tau, model.t_max)
    x = model.norm.apply(data.x) if model.norm is not None else data.x
    raw = mlp_tape_forward(pvars, model.cfg, x, training=training, rng=rng)
    lam = _softplus_var(raw)
    w = _exposure_weights(model.grid, data.tau)
    loss = tape.vsum(tape.mul_const(lam, w))
    fail = np.flatnonzero(data.delta == 1)
    if fail.size:
        k = _bin_index(model.grid, data.tau[fail])
        flat = tape.reshape(lam, (len(data) * model.grid.n_grid,))
        lam_f = tape.take(flat, fail * model.grid.n_grid + k)
        loss = loss - tape.vsum(tape.log(lam_f))
    return loss


def _pmf_interp_coeffs(grid: DiscreteGrid, data: SurvivalData) -> np.ndarray:
    """Mass coefficients c with S(tau) = sum_j c_j p_j per record.

    Censored rows interpolate the step survival linearly inside their
    bin; failure rows get all-ones (their S is never used but must stay
    away from log 0).
    """
    n = len(data)
    c = np.ones((n, grid.n_grid + 1))
    cens = np.flatnonzero(data.delta == 0)
    if cens.size:
        k = _bin_index(grid, data.tau[cens])
        frac = (data.tau[cens] - grid.cuts[k]) / grid.width
        cols = np.arange(grid.n_grid + 1)
        c[cens] = np.where(cols[None, :] > k[:, None], 1.0, 0.0)
        c[cens, k] = 1.0 - frac
    return c


def pmf_loss_var(
    pvars,
    model: PmfModel,
    data: SurvivalData,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tape.Var:
    """Summed loss: -log mass at failures, -log interpolated S at censorings."""
    _check_support(data.tau, model.t_max)
    x = model.norm.apply(data.x) if model.norm is not None else data.x
    raw = mlp_tape_forward(pvars, model.cfg, x, training=training, rng=rng)
    n, width = raw.value.shape
    lse = tape.logsumexp(raw)
    loss = None
    fail = np.flatnonzero(data.delta == 1)
    if fail.size:
        k = _bin_index(model.grid, data.tau[fail])
        flat = tape.reshape(raw, (n * width,))
        raw_f = tape.take(flat, fail * width + k)
        loss = tape.vsum(tape.take(lse, fail)) - tape.vsum(raw_f)
    cens = np.flatnonzero(data.delta == 0)
    if cens.size:
        p = tape.exp(tape.add(raw, tape.reshape(tape.neg(lse), (n, 1))))
        s_all = tape.vsum(tape.mul_const(p, _pmf_interp_coeffs(model.grid, data)), axis=1)
        term = tape.neg(tape.vsum(tape.log(tape.take(s_all, cens))))
        loss = term if loss is None else loss + term
    return loss


def pch_survival(model: PchModel, t: float, x) -> float:
    """Survival of a hazard head at one (time, covariate) pair."""
    return model.survival(t, x)


def pmf_survival(model: PmfModel, t: float, x) -> float:
    """Survival of a mass head at one (time, covariate) pair."""
    return model.survival(t, x)


def _loss_builder(model):
    if isinstance(model, PchModel):
        return pch_loss_var
    if isinstance(model, PmfModel):
        return pmf_loss_var
    raise TypeError(f"not a grid model: {type(model).__name__}")


def pch_nll(model: PchModel, data: SurvivalData) -> float:
    """Summed discrete-time loss of a hazard head on a dataset."""
    if len(data) == 0:
        raise ValueError("loss needs at least one record")
    return float(pch_loss_var(params_to_vars(model.params), model, data).value)


def pmf_nll(model: PmfModel, data: SurvivalData) -> float:
    """Summed discrete-time loss of a mass head on a dataset."""
    if len(data) == 0:
        raise ValueError("loss needs at least one record")
    return float(pmf_loss_var(params_to_vars(model.params), model, data).value)


def baseline_validation_nll(model, data: SurvivalData) -> float:
    """Mean loss per record, dropping records beyond the grid end."""
    keep = np.flatnonzero(data.tau <= model.t_max)
    if keep.size == 0:
        raise ValueError("no scoreable validation records")
    sub = data.subset(keep)
    builder = _loss_builder(model)
    total = float(builder(params_to_vars(model.params), model, sub).value)
    return total / keep.size


def initialize_baseline(
    kind: str,
    covariate_dim: int,
    t_max: float,
    n_grid: int,
    nodes_per_layer: int = 32,
    hidden_layers: int = 2,
    dropout_rate: float = 0.2,
    norm: NormalizationStats | None = None,
    seed: int = 0,
):
    """Build a grid model of the requested kind with fresh parameters."""
    if kind not in ("pch", "pmf"):
        raise ValueError(f"unknown baseline kind {kind!r}")
    grid = DiscreteGrid(n_grid=n_grid, t_max=t_max)
    out = grid.n_grid if kind == "pch" else grid.n_grid + 1
    cfg = MlpConfig(
        input_dim=covariate_dim,
        output_dim=out,
        nodes_per_layer=nodes_per_layer,
        hidden_layers=hidden_layers,
        dropout_rate=dropout_rate,
    )
    params = ParameterSet.initialize(cfg, np.random.default_rng(seed))
    cls = PchModel if kind == "pch" else PmfModel
    return cls(cfg, params, grid, norm=norm)


def train_baseline(
    model,
    train_set: SurvivalData,
    val_set: SurvivalData,
    cfg: TrainConfig,
) -> tuple[object, TrainHistory]:
    """Fit a grid model; returns the best-validation-epoch model."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation splits must be nonempty")
    if train_set.max_tau > model.t_max:
        raise OutOfSupportError("training record beyond grid end")
    builder = _loss_builder(model)

    def batch_loss(pvars, idx, rng):
        batch = train_set.subset(idx)
        total = builder(pvars, model, batch,
                        training=model.cfg.dropout_rate > 0, rng=rng)
        return tape.mul_const(total, 1.0 / len(batch))

    def val_loss(params):
        return baseline_validation_nll(replace(model, params=params), val_set)

    best, history = fit_loop(model.params, cfg, len(train_set), batch_loss, val_loss)
    return replace(model, params=best), history


@dataclass
class MarginalHazardModel:
    """Covariate-blind piecewise-constant hazard fit in closed form.

    The hazard in each interval is the failure count divided by the
    total time at risk there, the maximum-likelihood estimate for a
    piecewise-exponential law shared by all subjects.
    """

    grid: DiscreteGrid
    hazards: np.ndarray

    @classmethod
    def fit(cls, data: SurvivalData, n_grid: int = 20,
            t_max: float | None = None) -> "MarginalHazardModel":
        if len(data) == 0:
            raise ValueError("fit needs at least one record")
        if t_max is None:
            t_max = data.max_tau
        grid = DiscreteGrid(n_grid=n_grid, t_max=t_max)
        _check_support(data.tau, t_max)
        w = _exposure_weights(grid, data.tau)
        exposure = w.sum(axis=0)
        k = _bin_index(grid, data.tau)
        deaths = np.bincount(k[data.delta == 1], minlength=grid.n_grid).astype(float)
        with np.errstate(invalid="ignore"):
            lam = np.where(exposure > 0, deaths / np.maximum(exposure, 1e-300), 0.0)
        return cls(grid=grid, hazards=lam)

    @property
    def t_max(self) -> float:
        return self.grid.t_max

    def survival_curve(self, ts, x=None, integration=None, rng=None) -> np.ndarray:
        ts = np.asarray(ts, dtype=np.float64)
        _check_support(ts, self.t_max)
        cum = np.concatenate([[0.0], np.cumsum(self.hazards * self.grid.width)])
        return np.exp(-np.interp(ts, self.grid.cuts, cum))

    def survival(self, t: float, x=None) -> float:
        return float(self.survival_curve(np.asarray([float(t)]))[0])

    def survival_batch(self, t: float, x, integration=None, rng=None) -> np.ndarray:
        n = np.atleast_2d(np.asarray(x)).shape[0]
        return np.full(n, self.survival(t))
