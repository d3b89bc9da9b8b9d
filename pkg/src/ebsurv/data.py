"""Survival records and feature normalization statistics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import DataFormatError, ShapeError


@dataclass(frozen=True)
class SurvivalRecord:
    """One subject: covariates, recorded duration, and the event flag
    (1 = failure observed, 0 = right-censored)."""

    id: int
    x: np.ndarray
    tau: float
    delta: int


class SurvivalData:
    """Column-oriented collection of survival records."""

    def __init__(self, ids: np.ndarray, x: np.ndarray, tau: np.ndarray, delta: np.ndarray):
        ids = np.asarray(ids, dtype=np.int64)
        x = np.asarray(x, dtype=np.float64)
        tau = np.asarray(tau, dtype=np.float64)
        delta = np.asarray(delta)
        if x.ndim != 2:
            raise ShapeError("covariates must form a 2-D array")
        n = x.shape[0]
        if not (ids.shape == tau.shape == delta.shape == (n,)):
            raise ShapeError("ids, tau, and delta must all have one entry per row of x")
        if np.any(tau < 0):
            raise DataFormatError("recorded times must be non-negative")
        if not np.all(np.isin(delta, (0, 1))):
            raise DataFormatError("event flags must be 0 or 1")
        self.ids = ids
        self.x = x
        self.tau = tau
        self.delta = delta.astype(np.int8)

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i: int) -> SurvivalRecord:
        return SurvivalRecord(int(self.ids[i]), self.x[i], float(self.tau[i]), int(self.delta[i]))

    def records(self) -> Iterator[SurvivalRecord]:
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_records(cls, records) -> "SurvivalData":
        records = list(records)
        return cls(
            ids=np.array([r.id for r in records], dtype=np.int64),
            x=np.array([r.x for r in records], dtype=np.float64),
            tau=np.array([r.tau for r in records]),
            delta=np.array([r.delta for r in records]),
        )

    @property
    def covariate_dim(self) -> int:
        return self.x.shape[1]

    @property
    def max_tau(self) -> float:
        if len(self) == 0:
            raise DataFormatError("empty dataset has no maximum time")
        return float(self.tau.max())

    @property
    def censoring_rate(self) -> float:
        return float(np.mean(self.delta == 0))

    def subset(self, indices) -> "SurvivalData":
        idx = np.asarray(indices)
        return SurvivalData(self.ids[idx], self.x[idx], self.tau[idx], self.delta[idx])


@dataclass(frozen=True)
class NormalizationStats:
    """Per-feature min/max taken from a training split.

    Applying the stats maps training features into [0, 1]; other splits use
    the same affine map and may fall outside that range.  A constant
    feature maps to 0.
    """

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        if self.min.shape != self.max.shape or self.min.ndim != 1:
            raise ShapeError("normalization stats need matching 1-D min/max")
        if np.any(self.max < self.min):
            raise DataFormatError("normalization max must be >= min")

    @classmethod
    def fit(cls, x: np.ndarray) -> "NormalizationStats":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ShapeError("normalization stats need a nonempty 2-D feature array")
        return cls(min=x.min(axis=0), max=x.max(axis=0))

    @classmethod
    def identity(cls, dim: int) -> "NormalizationStats":
        return cls(min=np.zeros(dim), max=np.ones(dim))

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        span = self.max - self.min
        out = x - self.min
        nonconst = span > 0
        out[..., nonconst] = out[..., nonconst] / span[nonconst]
        out[..., ~nonconst] = 0.0
        return out
