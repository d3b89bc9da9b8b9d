"""Mini-batch Adam loop with early stopping on a validation loss.

All three model families (energy-based and the two discrete-time heads)
train through :func:`fit_loop`; they differ only in how the batch loss is
built and how the validation loss is evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, NonFiniteError
from .nn import AdamState, ParameterSet, adam_update, loss_gradients


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for the training loop.

    ``n_samples`` is the number of Monte Carlo points per integral in the
    energy-model loss (ignored by the discrete-time heads).
    ``val_points`` is the trapezoid point count used for the validation
    loss.
    """

    n_samples: int = 50
    learning_rate: float = 0.01
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    val_points: int = 20

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.val_points < 2:
            raise ValueError("val_points must be >= 2")


@dataclass
class TrainHistory:
    """Per-epoch mean losses and the index of the best validation epoch."""

    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1

    def __post_init__(self):
        if len(self.train_loss) != len(self.val_loss):
            raise ValueError("history columns must have equal length")

    @property
    def n_epochs(self) -> int:
        return len(self.train_loss)


def fit_loop(
    params: ParameterSet,
    cfg: TrainConfig,
    n_train: int,
    batch_loss,
    val_loss,
) -> tuple[ParameterSet, TrainHistory]:
    """Run the shared training loop.

    ``batch_loss(pvars, indices, rng)`` must build the scalar mean loss
    over the indexed records (drawing any Monte Carlo points and dropout
    masks from ``rng``); ``val_loss(params)`` must return a deterministic
    float.  Returns the parameters from the epoch with the best validation
    loss, stopping early after ``cfg.patience`` epochs without
    improvement.
    """
    if n_train < 1:
        raise DataFormatError("training split is empty")
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_params(params)
    history = TrainHistory()
    best_val = math.inf
    best_params = params.copy()
    stale = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n_train)
        epoch_losses = []
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            value, grads = loss_gradients(params, lambda pv: batch_loss(pv, idx, rng))
            params, state = adam_update(params, grads, state, cfg.learning_rate)
            epoch_losses.append(value)
        v = val_loss(params)
        if not math.isfinite(v):
            raise NonFiniteError(f"validation loss became non-finite at epoch {epoch}")
        history.train_loss.append(float(np.mean(epoch_losses)))
        history.val_loss.append(float(v))
        if v < best_val:
            best_val = v
            best_params = params.copy()
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best_params, history
