"""Energy-based survival model.

A scalar network ``E(t, x)`` defines an unnormalized density
``exp(-E(t, x))`` over failure times.  The normalizer splits into a
numeric part on ``[0, t_max]`` and a closed-form lump for the tail
``(t_max, tail_factor * t_max]`` obtained by freezing the energy at the
midpoint-free endpoint ``tail_factor * t_max``:

    Z(x)      = Z0(0, x) + Zm(x)
    Z0(t, x)  = integral of exp(-E(u, x)) du over [t, t_max]
    Zm(x)     = (tail_factor - 1) * t_max * exp(-E(tail_factor * t_max, x))

Survival is ``S(t | x) = Z(t, x) / Z(x)`` on the observed window, decays
linearly to zero across the tail span, and is zero beyond it.  Training
minimizes a censoring-aware negative log likelihood whose integrals are
Monte Carlo estimates with the sample points held fixed under
differentiation; prediction uses deterministic trapezoid quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp as _sp_logsumexp

from . import tape
from .data import NormalizationStats, SurvivalData
from .errors import OutOfSupportError, ShapeError
from .nn import MlpConfig, ParameterSet, mlp_forward, mlp_tape_forward, params_to_vars
from .training import TrainConfig, TrainHistory, fit_loop


@dataclass(frozen=True)
class Integration:
    """Quadrature choice for prediction-time integrals.

    method "trapezoid" uses ``n_points`` equidistant nodes per integral;
    method "mc" draws ``n_points`` uniform points (requires an rng at the
    call site).
    """

    method: str = "trapezoid"
    n_points: int = 20

    def __post_init__(self):
        if self.method not in ("trapezoid", "mc"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if self.method == "trapezoid" and self.n_points < 2:
            raise ValueError("trapezoid integration needs >= 2 points")
        if self.method == "mc" and self.n_points < 1:
            raise ValueError("mc integration needs >= 1 point")


_DEFAULT_INTEGRATION = Integration("trapezoid", 20)


@dataclass
class EnergyModel:
    """Network parameters plus the quantities fixed at data-load time."""

    cfg: MlpConfig
    params: ParameterSet
    t_max: float
    tail_factor: float = 1.2
    time_scale: float | None = None
    norm: NormalizationStats | None = None

    def __post_init__(self):
        if self.cfg.output_dim != 1:
            raise ValueError("energy network must have a scalar output")
        if self.cfg.input_dim < 2:
            raise ValueError("energy network input must be time plus covariates")
        if not (self.t_max > 0):
            raise ValueError("t_max must be positive")
        if not (self.tail_factor > 1):
            raise ValueError("tail_factor must exceed 1")
        if self.time_scale is None:
            self.time_scale = self.t_max
        if not (self.time_scale > 0):
            raise ValueError("time_scale must be positive")
        self.params.check_against(self.cfg)

    @property
    def covariate_dim(self) -> int:
        return self.cfg.input_dim - 1

    @property
    def t_tail(self) -> float:
        """Right edge of the support, ``tail_factor * t_max``."""
        return self.tail_factor * self.t_max

    def _prep_x(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.ndim != 2 or x.shape[1] != self.covariate_dim:
            raise ShapeError(
                f"expected covariates with {self.covariate_dim} columns, got {x.shape}"
            )
        if self.norm is not None:
            x = self.norm.apply(x)
        return x

    def _energies(self, ts: np.ndarray, x_rows: np.ndarray) -> np.ndarray:
        """Energy at each (ts[i], x_rows[i]) pair; x_rows already prepped."""
        cols = np.empty((ts.size, self.cfg.input_dim), dtype=np.float64)
        cols[:, 0] = ts / self.time_scale
        cols[:, 1:] = x_rows
        return mlp_forward(self.params, self.cfg, cols)[:, 0]

    def energy(self, t: float, x: np.ndarray) -> float:
        """Raw network output at one (time, covariate) pair."""
        if t < 0:
            raise OutOfSupportError("time must be nonnegative")
        xp = self._prep_x(x)
        if xp.shape[0] != 1:
            raise ShapeError("energy expects a single covariate row")
        return float(self._energies(np.array([t]), xp)[0])

    # -- normalizer pieces ------------------------------------------------

    def _log_tail_mass(self, xp: np.ndarray) -> np.ndarray:
        """log Zm for each prepped covariate row."""
        ts = np.full(xp.shape[0], self.t_tail)
        e = self._energies(ts, xp)
        return np.log((self.tail_factor - 1.0) * self.t_max) - e

    def tail_mass(self, x: np.ndarray) -> float:
        """Closed-form probability mass assigned beyond ``t_max``."""
        return float(np.exp(self._log_tail_mass(self._prep_x(x))[0]))

    def _log_partial_trap(self, ts: np.ndarray, xp: np.ndarray, n_points: int) -> np.ndarray:
        """log Z0(ts[i], x) per row via trapezoid quadrature.

        ``ts`` pairs elementwise with the rows of ``xp``; entries with
        ts == t_max come back as -inf (empty interval).
        """
        base = np.linspace(0.0, 1.0, n_points)
        widths = self.t_max - ts
        grids = ts[:, None] + widths[:, None] * base[None, :]
        e = self._energies(grids.ravel(), np.repeat(xp, n_points, axis=0))
        e = e.reshape(ts.size, n_points)
        w = np.full(n_points, 1.0)
        w[0] = w[-1] = 0.5
        weights = widths[:, None] / (n_points - 1) * w[None, :]
        return _sp_logsumexp(-e, axis=1, b=weights)

    def _log_partial_mc(
        self, ts: np.ndarray, xp: np.ndarray, n_points: int, rng: np.random.Generator
    ) -> np.ndarray:
        """log Z0(ts[i], x) per row from fresh uniform draws on [ts, t_max]."""
        widths = self.t_max - ts
        u = rng.random((ts.size, n_points))
        grids = ts[:, None] + widths[:, None] * u
        e = self._energies(grids.ravel(), np.repeat(xp, n_points, axis=0))
        e = e.reshape(ts.size, n_points)
        with np.errstate(divide="ignore"):
            logw = np.log(widths) - np.log(n_points)
        return _sp_logsumexp(-e, axis=1) + logw

    def trapezoid_partial_mass(self, t: float, x: np.ndarray, n_points: int = 20) -> float:
        """Deterministic estimate of Z0(t, x)."""
        if t < 0 or t > self.t_max:
            raise OutOfSupportError(f"t={t} outside [0, t_max={self.t_max}]")
        xp = self._prep_x(x)
        if t == self.t_max:
            return 0.0
        return float(np.exp(self._log_partial_trap(np.array([t]), xp, n_points)[0]))

    def mc_partial_mass(
        self, t: float, x: np.ndarray, n_samples: int, rng: np.random.Generator
    ) -> float:
        """Monte Carlo estimate of Z0(t, x); unbiased in the mass domain."""
        if t < 0:
            raise OutOfSupportError("time must be nonnegative")
        xp = self._prep_x(x)
        if t >= self.t_max:
            return 0.0
        return float(np.exp(self._log_partial_mc(np.array([t]), xp, n_samples, rng)[0]))

    def _log_partial(
        self, ts, xp, integration: Integration, rng: np.random.Generator | None
    ) -> np.ndarray:
        if integration.method == "trapezoid":
            return self._log_partial_trap(ts, xp, integration.n_points)
        if rng is None:
            raise ValueError("mc integration requires an rng")
        return self._log_partial_mc(ts, xp, integration.n_points, rng)

    def log_normalizer(
        self,
        x: np.ndarray,
        integration: Integration | None = None,
        rng: np.random.Generator | None = None,
    ) -> float:
        """log Z(x) = log(Z0(0, x) + Zm(x))."""
        integration = integration or _DEFAULT_INTEGRATION
        xp = self._prep_x(x)
        if xp.shape[0] != 1:
            raise ShapeError("log_normalizer expects a single covariate row")
        lz0 = self._log_partial(np.zeros(1), xp, integration, rng)
        return float(np.logaddexp(lz0, self._log_tail_mass(xp))[0])

    # -- survival and density --------------------------------------------

    def survival_curve(
        self,
        ts: np.ndarray,
        x: np.ndarray,
        integration: Integration | None = None,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """S(t | x) for a vector of times and one covariate row.

        Exact 1.0 at t == 0, ratio of masses on (0, t_max], linear decay
        to zero across (t_max, t_tail], and 0 beyond.  All times share one
        denominator estimate, and a running minimum along sorted times
        removes quadrature jitter so the curve is always nonincreasing.
        """
        integration = integration or _DEFAULT_INTEGRATION
        ts = np.asarray(ts, dtype=np.float64)
        if ts.ndim != 1:
            raise ShapeError("ts must be a 1-D array of times")
        if np.any(ts < 0):
            raise OutOfSupportError("times must be nonnegative")
        xp = self._prep_x(x)
        if xp.shape[0] != 1:
            raise ShapeError("survival_curve expects a single covariate row")
        log_tail = self._log_tail_mass(xp)[0]
        log_z = np.logaddexp(
            self._log_partial(np.zeros(1), xp, integration, rng)[0], log_tail
        )
        out = np.zeros(ts.size)
        main = (ts > 0) & (ts <= self.t_max)
        if np.any(main):
            lz0 = self._log_partial(ts[main], np.repeat(xp, main.sum(), axis=0),
                                    integration, rng)
            log_s = np.minimum(np.logaddexp(lz0, log_tail) - log_z, 0.0)
            out[main] = np.exp(log_s)
        out[ts == 0] = 1.0
        between = (ts > self.t_max) & (ts < self.t_tail)
        if np.any(between):
            s_edge = np.exp(min(log_tail - log_z, 0.0))
            out[between] = s_edge * (self.t_tail - ts[between]) / (self.t_tail - self.t_max)
        order = np.argsort(ts, kind="stable")
        out[order] = np.minimum.accumulate(out[order])
        return out

    def survival(
        self,
        t: float,
        x: np.ndarray,
        integration: Integration | None = None,
        rng: np.random.Generator | None = None,
    ) -> float:
        """S(t | x) for a single time."""
        return float(self.survival_curve(np.array([float(t)]), x, integration, rng)[0])

    def survival_batch(
        self,
        t: float,
        x: np.ndarray,
        integration: Integration | None = None,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """S(t | x_i) for one time and a batch of covariate rows."""
        integration = integration or _DEFAULT_INTEGRATION
        t = float(t)
        if t < 0:
            raise OutOfSupportError("time must be nonnegative")
        xp = self._prep_x(x)
        n = xp.shape[0]
        if t == 0:
            return np.ones(n)
        log_tail = self._log_tail_mass(xp)
        log_z = np.logaddexp(self._log_partial(np.zeros(n), xp, integration, rng), log_tail)
        if t >= self.t_tail:
            return np.zeros(n)
        if t > self.t_max:
            s_edge = np.exp(np.minimum(log_tail - log_z, 0.0))
            return s_edge * (self.t_tail - t) / (self.t_tail - self.t_max)
        lz0 = self._log_partial(np.full(n, t), xp, integration, rng)
        return np.exp(np.minimum(np.logaddexp(lz0, log_tail) - log_z, 0.0))

    def density(
        self,
        t: float,
        x: np.ndarray,
        integration: Integration | None = None,
        rng: np.random.Generator | None = None,
    ) -> float:
        """Normalized density exp(-E(t, x)) / Z(x) on [0, t_max]."""
        if t < 0 or t > self.t_max:
            raise OutOfSupportError(f"t={t} outside [0, t_max={self.t_max}]")
        xp = self._prep_x(x)
        e = self._energies(np.array([t]), xp)[0]
        return float(np.exp(-e - self.log_normalizer(x, integration, rng)))


def initialize_energy_model(
    covariate_dim: int,
    t_max: float,
    nodes_per_layer: int = 64,
    hidden_layers: int = 2,
    dropout_rate: float = 0.0,
    tail_factor: float = 1.2,
    time_scale: float | None = None,
    norm: NormalizationStats | None = None,
    seed: int = 0,
) -> EnergyModel:
    """Build an energy model with freshly initialized parameters."""
    cfg = MlpConfig(
        input_dim=covariate_dim + 1,
        output_dim=1,
        nodes_per_layer=nodes_per_layer,
        hidden_layers=hidden_layers,
        dropout_rate=dropout_rate,
    )
    params = ParameterSet.initialize(cfg, np.random.default_rng(seed))
    return EnergyModel(cfg, params, t_max=t_max, tail_factor=tail_factor,
                       time_scale=time_scale, norm=norm)


# -- negative log likelihood ---------------------------------------------


@dataclass
class NllSamples:
    """Fixed Monte Carlo points for one evaluation of the training loss.

    ``u`` holds draws on [0, t_max] for every record's full normalizer;
    ``v`` holds draws on [tau_j, t_max] for censored records whose
    censoring time sits strictly inside the window (rows align with
    ``cens_inner``).  Censored records with tau == t_max appear in
    ``cens_edge`` and need only the tail term.
    """

    u: np.ndarray
    v: np.ndarray
    cens_inner: np.ndarray
    cens_edge: np.ndarray
    fail: np.ndarray


def draw_nll_samples(
    model: EnergyModel, data: SurvivalData, n_samples: int, rng: np.random.Generator
) -> NllSamples:
    """Draw fresh integration points for one loss evaluation."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n = len(data)
    fail = np.flatnonzero(data.delta == 1)
    cens = np.flatnonzero(data.delta == 0)
    inner = cens[data.tau[cens] < model.t_max]
    edge = cens[data.tau[cens] >= model.t_max]
    u = model.t_max * rng.random((n, n_samples))
    tau_c = data.tau[inner]
    v = tau_c[:, None] + (model.t_max - tau_c)[:, None] * rng.random((inner.size, n_samples))
    return NllSamples(u=u, v=v, cens_inner=inner, cens_edge=edge, fail=fail)


def nll_var(
    pvars,
    model: EnergyModel,
    data: SurvivalData,
    samples: NllSamples,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tape.Var:
    """Tape node for the summed loss over ``data`` at fixed sample points.

    Failures contribute E(tau, x) + log Z(x); censored records contribute
    log Z(x) - log Z(tau, x).  Every energy evaluation goes through one
    stacked forward pass so a single network call serves the whole batch.
    """
    n = len(data)
    if n == 0:
        raise ValueError("loss needs at least one record")
    if np.any(data.tau > model.t_max):
        raise OutOfSupportError("record with tau > t_max cannot be scored")
    x = data.x if model.norm is None else model.norm.apply(data.x)
    n_s = samples.u.shape[1]
    fail, inner, edge = samples.fail, samples.cens_inner, samples.cens_edge

    t_rows = [data.tau[fail], samples.u.ravel(), samples.v.ravel(),
              np.full(n, model.t_tail)]
    x_rows = [x[fail], np.repeat(x, n_s, axis=0), np.repeat(x[inner], n_s, axis=0), x]
    n_rows = fail.size + n * n_s + inner.size * n_s + n
    cols = np.empty((n_rows, model.cfg.input_dim))
    cols[:, 0] = np.concatenate(t_rows) / model.time_scale
    cols[:, 1:] = np.vstack(x_rows)

    out = mlp_tape_forward(pvars, model.cfg, cols, training=training, rng=rng)
    e_all = tape.reshape(out, (cols.shape[0],))
    ofs = 0
    e_fail = tape.segment(e_all, ofs, ofs + fail.size)
    ofs += fail.size
    e_u = tape.reshape(tape.segment(e_all, ofs, ofs + n * n_s), (n, n_s))
    ofs += n * n_s
    e_v = tape.reshape(tape.segment(e_all, ofs, ofs + inner.size * n_s), (inner.size, n_s))
    ofs += inner.size * n_s
    e_tail = tape.segment(e_all, ofs, ofs + n)

    log_lump = np.log((model.tail_factor - 1.0) * model.t_max)
    tail_col = tape.reshape(tape.add(tape.neg(e_tail), tape.const(log_lump)), (n, 1))
    log_w_u = np.log(model.t_max / n_s)
    full_terms = tape.concat_cols(
        [tape.add(tape.neg(e_u), tape.const(log_w_u)), tail_col]
    )
    log_z_full = tape.logsumexp(full_terms)

    loss = tape.vsum(e_fail) + tape.vsum(log_z_full)
    if inner.size:
        log_w_v = np.log((model.t_max - data.tau[inner])[:, None] / n_s)
        inner_terms = tape.concat_cols(
            [tape.add(tape.neg(e_v), tape.const(log_w_v)),
             tape.reshape(tape.take(tape.reshape(tail_col, (n,)), inner), (inner.size, 1))]
        )
        loss = loss - tape.vsum(tape.logsumexp(inner_terms))
    if edge.size:
        loss = loss - tape.vsum(
            tape.add(tape.neg(tape.take(e_tail, edge)), tape.const(log_lump))
        )
    return loss


def nll(
    model: EnergyModel,
    data: SurvivalData,
    n_samples: int,
    rng: np.random.Generator,
    samples: NllSamples | None = None,
) -> float:
    """Summed training loss at freshly drawn (or supplied) sample points."""
    if samples is None:
        samples = draw_nll_samples(model, data, n_samples, rng)
    pvars = params_to_vars(model.params)
    return float(nll_var(pvars, model, data, samples).value)


def validation_nll(model: EnergyModel, data: SurvivalData, n_points: int = 20) -> float:
    """Deterministic mean loss per record via trapezoid integration.

    Records the model cannot score (failures past t_max, anything past
    the tail edge) are dropped; censored records inside the tail span use
    the linear-decay mass.
    """
    keep = (data.tau <= model.t_max) | ((data.delta == 0) & (data.tau < model.t_tail))
    data = data.subset(np.flatnonzero(keep))
    n = len(data)
    if n == 0:
        raise ValueError("no scoreable validation records")
    x = data.x if model.norm is None else model.norm.apply(data.x)
    integ = Integration("trapezoid", n_points)
    log_tail = model._log_tail_mass(x)
    log_z = np.logaddexp(model._log_partial(np.zeros(n), x, integ, None), log_tail)
    total = 0.0
    fail = data.delta == 1
    if np.any(fail):
        e = model._energies(data.tau[fail], x[fail])
        total += float(np.sum(e + log_z[fail]))
    cens = ~fail
    if np.any(cens):
        idx = np.flatnonzero(cens)
        tau = data.tau[idx]
        log_ztau = np.empty(idx.size)
        main = tau < model.t_max
        if np.any(main):
            lz0 = model._log_partial(tau[main], x[idx[main]], integ, None)
            log_ztau[main] = np.logaddexp(lz0, log_tail[idx[main]])
        in_tail = ~main
        if np.any(in_tail):
            frac = (model.t_tail - tau[in_tail]) / (model.t_tail - model.t_max)
            log_ztau[in_tail] = log_tail[idx[in_tail]] + np.log(frac)
        total += float(np.sum(log_z[idx] - log_ztau))
    return total / n


def train(
    train_set: SurvivalData,
    val_set: SurvivalData,
    model: EnergyModel,
    cfg: TrainConfig,
) -> tuple[EnergyModel, TrainHistory]:
    """Fit the energy network; returns the best-validation-epoch model."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation splits must be nonempty")
    if abs(model.t_max - train_set.max_tau) > 1e-9 * max(1.0, model.t_max):
        raise ValueError("model t_max must equal the training split's largest tau")

    def batch_loss(pvars, idx, rng):
        batch = train_set.subset(idx)
        samples = draw_nll_samples(model, batch, cfg.n_samples, rng)
        total = nll_var(pvars, model, batch, samples,
                        training=model.cfg.dropout_rate > 0, rng=rng)
        return tape.mul_const(total, 1.0 / len(batch))

    def val_loss(params):
        return validation_nll(replace(model, params=params), val_set, cfg.val_points)

    best, history = fit_loop(model.params, cfg, len(train_set), batch_loss, val_loss)
    return replace(model, params=best), history
