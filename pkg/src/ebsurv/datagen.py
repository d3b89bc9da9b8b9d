"""Synthetic survival data with known ground truth.

Two generators: a two-covariate benchmark where each subject's Weibull
scale and shape are drawn uniformly and exposed as the covariates, and a
fleet-like set with many uniform covariates of which only a few drive
the latent Weibull parameters, censored at a controlled rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SurvivalData
from .errors import EbsurvError, OutOfSupportError


@dataclass(frozen=True)
class WeibullParams:
    """Scale ``lam`` and shape ``k`` of a Weibull failure-time law."""

    lam: float
    k: float

    def __post_init__(self):
        if not (self.lam > 0 and self.k > 0):
            raise ValueError("Weibull scale and shape must be positive")


def weibull_survival(t, params: WeibullParams):
    """S(t) = exp(-(t / lam)^k) for scalar or array t >= 0."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise OutOfSupportError("times must be nonnegative")
    out = np.exp(-((t / params.lam) ** params.k))
    return float(out) if out.ndim == 0 else out


def weibull_density(t, params: WeibullParams):
    """f(t) = (k / lam) (t / lam)^(k-1) exp(-(t / lam)^k).

    At t == 0 the density is 1 / lam for k == 1, zero for k > 1, and
    divergent for k < 1 (rejected).
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise OutOfSupportError("times must be nonnegative")
    if params.k < 1 and np.any(t == 0):
        raise OutOfSupportError("density diverges at 0 for shape < 1")
    scaled = t / params.lam
    with np.errstate(divide="ignore"):
        out = np.where(
            (scaled == 0) & (params.k > 1),
            0.0,
            (params.k / params.lam) * scaled ** (params.k - 1.0)
            * np.exp(-(scaled ** params.k)),
        )
    return float(out) if out.ndim == 0 else out


def _wb_sample(lam, k, rng: np.random.Generator, size: int) -> np.ndarray:
    # inverse CDF t = lam * (-log(1 - U))^(1/k); U in [0, 1) keeps t finite
    u = rng.random(size)
    return lam * (-np.log1p(-u)) ** (1.0 / np.asarray(k))


def sample_weibull(params: WeibullParams, rng: np.random.Generator, size=None):
    """Draw failure times by inverting the Weibull CDF."""
    out = _wb_sample(params.lam, params.k, rng, 1 if size is None else size)
    return float(out[0]) if size is None else out


@dataclass(frozen=True)
class SimConfig:
    """Benchmark generator: latent parameters are the covariates."""

    n_subjects: int
    lambda_range: tuple = (1.0, 3.0)
    k_range: tuple = (0.5, 5.0)
    censor_range: tuple = (0.0, 3.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")
        for lo, hi in (self.lambda_range, self.k_range, self.censor_range):
            if not (hi > lo):
                raise ValueError("ranges must satisfy high > low")
        if self.lambda_range[0] <= 0 or self.k_range[0] <= 0:
            raise ValueError("scale and shape ranges must be positive")


def gen_sim_dataset(cfg: SimConfig, return_latent: bool = False):
    """Per-subject Weibull draws with uniform censoring.

    Covariates are exactly [lam_i, k_i], so closed-form survival curves
    are available for every record.  With ``return_latent`` the raw
    event and censor times come back alongside the dataset.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_subjects
    lam = rng.uniform(*cfg.lambda_range, n)
    k = rng.uniform(*cfg.k_range, n)
    event = _wb_sample(lam, k, rng, n)
    censor = rng.uniform(*cfg.censor_range, n)
    tau = np.minimum(event, censor)
    delta = (event <= censor).astype(np.int8)
    data = SurvivalData(
        ids=np.arange(n, dtype=np.int64),
        x=np.column_stack([lam, k]),
        tau=tau,
        delta=delta,
    )
    if not return_latent:
        return data
    latent = {"lam": lam, "k": k, "event_time": event, "censor_time": censor}
    return data, latent


@dataclass(frozen=True)
class FleetConfig:
    """Many-covariate generator with a censoring-rate target."""

    n_subjects: int
    covariate_dim: int = 100
    censor_rate: float = 0.74
    rate_tolerance: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")
        if self.covariate_dim < 1:
            raise ValueError("covariate_dim must be >= 1")
        if not (0.0 < self.censor_rate < 1.0):
            raise ValueError("censor_rate must lie in (0, 1)")
        if self.rate_tolerance <= 0:
            raise ValueError("rate_tolerance must be positive")


# tapering weights for the hidden projections; renormalized when truncated
_FLEET_WEIGHTS = np.array([0.6, 0.25, 0.1, 0.03, 0.02])


def _fleet_params(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Latent (lam, k) from hidden projections of the leading covariates."""
    d = x.shape[1]
    n_active = min(10, d)
    n_a = (n_active + 1) // 2
    idx_a = np.arange(n_a)
    idx_b = np.arange(n_a, n_active) if n_active > n_a else idx_a
    w_a = _FLEET_WEIGHTS[: idx_a.size] / _FLEET_WEIGHTS[: idx_a.size].sum()
    w_b = _FLEET_WEIGHTS[: idx_b.size] / _FLEET_WEIGHTS[: idx_b.size].sum()
    lam = 1.0 + 2.0 * (x[:, idx_a] @ w_a)
    k = 0.6 + 1.4 * (x[:, idx_b] @ w_b)
    return lam, k


def _calibrate_censor_scale(
    event: np.ndarray, u_censor: np.ndarray, target: float, tol: float
) -> float:
    """Find s with |mean(s * u < event) - target| <= tol by bisection."""
    def rate(s):
        return float(np.mean(s * u_censor < event))

    lo, hi = 0.0, 1.0
    for _ in range(200):
        if rate(hi) <= target:
            break
        hi *= 2.0
    else:
        raise EbsurvError("censor-rate calibration failed to bracket the target")
    best_s, best_gap = hi, abs(rate(hi) - target)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = rate(mid)
        gap = abs(r - target)
        if gap < best_gap:
            best_s, best_gap = mid, gap
        if gap <= tol:
            return mid
        if r > target:
            lo = mid
        else:
            hi = mid
    if best_gap <= tol:
        return best_s
    raise EbsurvError(
        f"censor rate {target} +/- {tol} unreachable; closest gap {best_gap:.4f}"
    )


def gen_fleet_like(cfg: FleetConfig, return_latent: bool = False):
    """Uniform covariates, sparse latent structure, calibrated censoring.

    Only the leading covariates influence the latent Weibull parameters;
    the rest are noise.  The censoring scale is tuned on the realized
    draws so the censored fraction hits ``cfg.censor_rate`` within
    ``cfg.rate_tolerance`` (unreachable targets raise a diagnostic).
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_subjects
    x = rng.random((n, cfg.covariate_dim))
    lam, k = _fleet_params(x)
    event = _wb_sample(lam, k, rng, n)
    u_censor = rng.random(n)
    scale = _calibrate_censor_scale(event, u_censor, cfg.censor_rate, cfg.rate_tolerance)
    censor = scale * u_censor
    tau = np.minimum(event, censor)
    delta = (event <= censor).astype(np.int8)
    data = SurvivalData(
        ids=np.arange(n, dtype=np.int64), x=x, tau=tau, delta=delta
    )
    if not return_latent:
        return data
    latent = {"lam": lam, "k": k, "event_time": event, "censor_time": censor,
              "censor_scale": scale}
    return data, latent


def split_dataset(
    data: SurvivalData,
    fractions: tuple = (0.7, 0.1, 0.2),
    seed: int = 0,
) -> tuple[SurvivalData, SurvivalData, SurvivalData]:
    """Shuffle and cut into train/val/test.

    Validation and test sizes are floors of their fractions; the
    remainder goes to train, so small sets keep at least their nominal
    share of training records.
    """
    if len(fractions) != 3:
        raise ValueError("fractions must be (train, val, test)")
    if any(f < 0 for f in fractions):
        raise ValueError("fractions must be nonnegative")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    n = len(data)
    n_val = int(np.floor(fractions[1] * n))
    n_test = int(np.floor(fractions[2] * n))
    n_train = n - n_val - n_test
    perm = np.random.default_rng(seed).permutation(n)
    return (
        data.subset(perm[:n_train]),
        data.subset(perm[n_train : n_train + n_val]),
        data.subset(perm[n_train + n_val :]),
    )
