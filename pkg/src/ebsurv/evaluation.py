"""Model evaluation against known ground truth and decision quality.

Kolmogorov-Smirnov distances compare predicted survival curves with
closed-form Weibull truth over a grid of parameter cells; the ROC
utilities sweep the replace-below-threshold rule over all thresholds and
summarize with the area under the curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import SurvivalData
from .datagen import WeibullParams, weibull_survival
from .ebm import Integration
from .errors import DegenerateRocError


@dataclass(frozen=True)
class WeibullOracle:
    """Reference model that reads [lam, k] covariates and answers exactly."""

    t_max: float = np.inf

    def survival_curve(self, ts, x, integration=None, rng=None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return weibull_survival(np.asarray(ts, dtype=np.float64),
                                WeibullParams(float(x[0]), float(x[1])))

    def survival(self, t: float, x) -> float:
        return float(self.survival_curve(np.asarray([float(t)]), x)[0])

    def survival_batch(self, t: float, x, integration=None, rng=None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.exp(-((float(t) / x[:, 0]) ** x[:, 1]))


def ks_distance(predicted, reference, t_max: float, n_points: int = 100) -> float:
    """Largest absolute gap between two curves on an inclusive time grid.

    ``predicted`` and ``reference`` map a vector of times in [0, t_max]
    to survival values; the supremum is taken over ``n_points``
    equidistant times including both endpoints.
    """
    if not (t_max > 0) or n_points < 2:
        raise ValueError("need t_max > 0 and at least two grid points")
    ts = np.linspace(0.0, t_max, n_points)
    gap = np.abs(np.asarray(predicted(ts), dtype=np.float64)
                 - np.asarray(reference(ts), dtype=np.float64))
    if gap.shape != ts.shape:
        raise ValueError("curves must return one value per grid time")
    return float(np.max(gap))


@dataclass(frozen=True)
class KsCell:
    lam: float
    k: float
    ks: float


@dataclass
class KsReport:
    """KS distance per Weibull parameter cell, endpoints included."""

    t_max: float
    n_points: int
    grid_size: int = 20
    lambda_range: tuple = (1.0, 3.0)
    k_range: tuple = (0.5, 5.0)
    cells: list = field(default_factory=list)

    @property
    def mean(self) -> float:
        if not self.cells:
            raise ValueError("report has no cells")
        return float(np.mean([c.ks for c in self.cells]))

    @property
    def worst(self) -> KsCell:
        return max(self.cells, key=lambda c: c.ks)


def ks_report(
    model,
    t_max: float,
    lambda_range: tuple = (1.0, 3.0),
    k_range: tuple = (0.5, 5.0),
    grid_size: int = 20,
    n_points: int = 100,
    integration: Integration | None = None,
    rng: np.random.Generator | None = None,
) -> KsReport:
    """Sweep an inclusive (lam, k) grid and score each cell's curve.

    The model sees covariates [lam, k]; its curve on ``n_points``
    equidistant times over [0, t_max] is compared with the closed form.
    """
    if grid_size < 2 or n_points < 2:
        raise ValueError("grid_size and n_points must be >= 2")
    report = KsReport(t_max=t_max, n_points=n_points, grid_size=grid_size,
                      lambda_range=lambda_range, k_range=k_range)
    for lam in np.linspace(*lambda_range, grid_size):
        for k in np.linspace(*k_range, grid_size):
            x = np.array([lam, k])
            params = WeibullParams(float(lam), float(k))
            d = ks_distance(
                lambda ts: model.survival_curve(ts, x, integration, rng),
                lambda ts: weibull_survival(ts, params),
                t_max, n_points,
            )
            report.cells.append(KsCell(float(lam), float(k), d))
    return report


def mean_ks(
    model,
    t_max: float,
    integration: Integration | None = None,
    rng: np.random.Generator | None = None,
    **kw,
) -> float:
    """Mean KS distance over the standard (lam, k) evaluation grid."""
    return ks_report(model, t_max, integration=integration, rng=rng, **kw).mean


@dataclass(frozen=True)
class ConvergencePoint:
    method: str
    n_points: int
    rep: int
    mean_ks: float


def integration_convergence_report(
    model,
    t_max: float,
    trap_points: tuple = (10, 20, 200),
    mc_points: tuple = (1000,),
    n_reps: int = 20,
    seed: int = 0,
    lambda_range: tuple = (1.0, 3.0),
    k_range: tuple = (0.5, 5.0),
    grid_size: int = 20,
) -> list:
    """Mean KS under each quadrature setting.

    Deterministic trapezoid settings get one entry each; each Monte
    Carlo point count is repeated ``n_reps`` times with fresh draws so
    the spread of the estimate is visible.
    """
    out = []
    for n in trap_points:
        rep = ks_report(model, t_max, lambda_range, k_range, grid_size,
                        integration=Integration("trapezoid", n))
        out.append(ConvergencePoint("trapezoid", int(n), 0, rep.mean))
    root = np.random.default_rng(seed)
    for n in mc_points:
        for r in range(n_reps):
            rng = np.random.default_rng(root.integers(2**63))
            rep = ks_report(model, t_max, lambda_range, k_range, grid_size,
                            integration=Integration("mc", n), rng=rng)
            out.append(ConvergencePoint("mc", int(n), r, rep.mean))
    return out


# -- ROC over the replacement rule ---------------------------------------


@dataclass
class RocCurve:
    """Operating points of the replace-when-score-below-threshold rule."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    n_pos: int = 0
    n_neg: int = 0
    n_excluded: int = 0

    @property
    def auc(self) -> float:
        return float(np.trapezoid(self.tpr, self.fpr))


def roc_from_scores(scores: np.ndarray, labels: np.ndarray,
                    thresholds: np.ndarray | None = None,
                    n_excluded: int = 0) -> RocCurve:
    """ROC of the rule "replace iff score < threshold" (strict).

    By default thresholds sweep 0, every observed score, and 1, which
    yields the exact empirical curve; a closing point at (1, 1) is
    appended when scores of exactly 1 would otherwise leave the sweep
    short.  Labels mark records that truly failed.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be aligned 1-D arrays")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateRocError(
            f"need both outcomes to sweep a curve (failures={n_pos}, survivors={n_neg})"
        )
    if thresholds is None:
        thresholds = np.unique(np.concatenate([[0.0, 1.0], scores]))
    else:
        thresholds = np.sort(np.asarray(thresholds, dtype=np.float64))
    sp = np.sort(scores[labels])
    sn = np.sort(scores[~labels])
    tpr = np.searchsorted(sp, thresholds, side="left") / n_pos
    fpr = np.searchsorted(sn, thresholds, side="left") / n_neg
    if tpr[-1] != 1.0 or fpr[-1] != 1.0:
        thresholds = np.append(thresholds, np.inf)
        tpr = np.append(tpr, 1.0)
        fpr = np.append(fpr, 1.0)
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr,
                    n_pos=n_pos, n_neg=n_neg, n_excluded=n_excluded)


def roc_curve(
    model,
    data: SurvivalData,
    horizon: float,
    thresholds: np.ndarray | None = None,
    integration: Integration | None = None,
    rng: np.random.Generator | None = None,
) -> RocCurve:
    """Score a dataset at one horizon and sweep the decision rule.

    Failures at or before the horizon are positives; records observed
    past it (or censored exactly at it) are negatives; records censored
    strictly inside the horizon carry no outcome and are excluded.
    """
    if not (horizon > 0):
        raise ValueError("horizon must be positive")
    pos = (data.delta == 1) & (data.tau <= horizon)
    neg = (data.tau > horizon) | ((data.delta == 0) & (data.tau == horizon))
    keep = pos | neg
    n_excluded = int((~keep).sum())
    scores = model.survival_batch(horizon, data.x[keep], integration, rng)
    return roc_from_scores(scores, pos[keep], thresholds=thresholds,
                           n_excluded=n_excluded)


def auc(curve: RocCurve) -> float:
    """Area under the ROC curve by trapezoid rule over the sweep points."""
    return float(np.trapezoid(curve.tpr, curve.fpr))
