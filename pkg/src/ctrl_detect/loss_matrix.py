"""Per-sample training-loss trajectories and their preprocessing.

The pipeline order is clamp -> smooth -> (optional) subsample. Subsampling comes
last because the moving average needs contiguous epochs.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import io

SUBSAMPLE_KINDS = ("uniform", "middle", "variance")


@dataclass(frozen=True)
class LossMatrix:
    """``n_samples x n_epochs`` matrix of non-negative losses.

    ``epoch_indices`` records which original epochs the columns are; it is
    ``0..n_epochs-1`` until the matrix is subsampled.
    """

    values: np.ndarray
    epoch_indices: tuple = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise ValueError(f"loss matrix must be 2-D, got shape {values.shape}")
        n, e = values.shape
        if n < 1 or e < 1:
            raise ValueError(f"loss matrix needs at least one sample and one epoch, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("loss matrix contains non-finite entries")
        if np.any(values < 0):
            raise ValueError("loss matrix contains negative entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

        idx = tuple(range(e)) if self.epoch_indices is None else tuple(int(i) for i in self.epoch_indices)
        if len(idx) != e:
            raise ValueError(f"epoch_indices has length {len(idx)}, expected {e}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("epoch_indices must be strictly increasing")
        object.__setattr__(self, "epoch_indices", idx)

    @property
    def n_samples(self):
        return self.values.shape[0]

    @property
    def n_epochs(self):
        return self.values.shape[1]

    def _replace(self, values, epoch_indices=None):
        return LossMatrix(values, self.epoch_indices if epoch_indices is None else epoch_indices)

    @classmethod
    def from_csv(cls, path):
        return cls(io.read_matrix(path, finite=True, nonnegative=True))

    def to_csv(self, path, epochs_path=None):
        io.write_matrix(path, self.values)
        if epochs_path is not None:
            io.write_int_row(epochs_path, self.epoch_indices)


@dataclass(frozen=True)
class SubsampleStrategy:
    kind: str = "uniform"
    ratio: int = 1

    def __post_init__(self):
        if self.kind not in SUBSAMPLE_KINDS:
            raise ValueError(f"unknown subsample kind {self.kind!r}; expected one of {SUBSAMPLE_KINDS}")
        if int(self.ratio) != self.ratio or self.ratio < 1:
            raise ValueError(f"subsample ratio must be an integer >= 1, got {self.ratio}")

    @classmethod
    def parse(cls, text):
        """Parse ``"kind:ratio"`` (e.g. ``"uniform:4"``)."""
        kind, _, ratio = text.partition(":")
        return cls(kind, int(ratio or 1))


def clamp_losses(L, num_classes):
    """Cap every loss at ``2 * ln(num_classes)``."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    return L._replace(np.minimum(L.values, 2.0 * math.log(num_classes)))


def moving_average(L, a):
    """Trailing moving average of each row over ``[j - a + 1, j]``.

    The window is truncated at the left edge, so the last column is the mean of
    the last ``a`` raw epochs.
    """
    if int(a) != a or a < 1:
        raise ValueError(f"moving-average size must be an integer >= 1, got {a}")
    a = int(a)
    if a == 1:
        return L
    x = L.values
    e = x.shape[1]
    total = np.zeros_like(x)
    for lag in range(min(a, e)):
        total[:, lag:] += x[:, : e - lag]
    count = np.minimum(np.arange(1, e + 1), a)
    return L._replace(total / count)


def subsample(L, strategy):
    e = L.n_epochs
    ratio = int(strategy.ratio)
    if ratio > e:
        raise ValueError(f"subsample ratio {ratio} exceeds the number of epochs {e}")
    keep = -(-e // ratio)
    if strategy.kind == "uniform":
        cols = np.arange(0, e, ratio)
    elif strategy.kind == "middle":
        start = (e - keep) // 2
        cols = np.arange(start, start + keep)
    else:
        var = L.values.var(axis=0)
        cols = np.sort(np.argsort(-var, kind="stable")[:keep])
    return LossMatrix(L.values[:, cols], [L.epoch_indices[c] for c in cols])


def last_loss(L_smoothed):
    return np.array(L_smoothed.values[:, -1])


def preprocess(L, num_classes, a=5, strategy=None):
    """Clamp, smooth, then optionally subsample.

    Returns ``(processed, smoothed)``; the full-length smoothed matrix is what
    the last-loss term of the mask score reads from.
    """
    smoothed = moving_average(clamp_losses(L, num_classes), a)
    if strategy is None or (strategy.kind == "uniform" and strategy.ratio == 1):
        return smoothed, smoothed
    return subsample(smoothed, strategy), smoothed
