"""Replacement decisions from predicted survival.

A unit is replaced when its probability of surviving the planning
horizon falls strictly below the decision threshold.  Models trained on
remaining-life durations answer conditional questions directly: the
duration already measures time past the unit's current age, so the
current age is bookkeeping only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .ebm import Integration


@dataclass(frozen=True)
class DecisionConfig:
    """Planning horizon, decision threshold, and bookkeeping epoch."""

    horizon: float
    threshold: float
    t_now: float = 0.0

    def __post_init__(self):
        if not (self.horizon > 0):
            raise ValueError("horizon must be positive")
        if not (0.0 < self.threshold < 1.0):
            raise ValueError("threshold must lie strictly inside (0, 1)")
        if self.t_now < 0:
            raise ValueError("t_now must be nonnegative")


@dataclass(frozen=True)
class MaintenanceDecision:
    unit_id: int
    cond_survival: float
    replace: bool


def conditional_survival(
    model,
    duration: float,
    x,
    integration: Integration | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Probability of lasting ``duration`` more time units."""
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    return float(model.survival(duration, x, integration, rng))


def decide(
    model,
    x,
    cfg: DecisionConfig,
    unit_id: int = 0,
    integration: Integration | None = None,
    rng: np.random.Generator | None = None,
) -> MaintenanceDecision:
    """Strict below-threshold verdict for one unit; ties keep it running."""
    s = conditional_survival(model, cfg.horizon, x, integration, rng)
    return MaintenanceDecision(unit_id=unit_id, cond_survival=s,
                               replace=bool(s < cfg.threshold))


def decide_batch(
    model,
    data,
    cfg: DecisionConfig,
    integration: Integration | None = None,
    rng: np.random.Generator | None = None,
) -> list:
    """Decisions for every record, sorted by unit id."""
    scores = model.survival_batch(cfg.horizon, data.x, integration, rng)
    order = np.argsort(data.ids, kind="stable")
    return [
        MaintenanceDecision(
            unit_id=int(data.ids[i]),
            cond_survival=float(scores[i]),
            replace=bool(scores[i] < cfg.threshold),
        )
        for i in order
    ]


def write_decisions(path, decisions: list) -> None:
    """CSV with one row per unit: id, score, and a 0/1 replace flag."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "cond_survival", "replace"])
        for d in decisions:
            writer.writerow([d.unit_id, repr(d.cond_survival), int(d.replace)])
