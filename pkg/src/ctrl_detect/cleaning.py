"""Turning a mask into a cleaned dataset, and the three retraining policies.

``prune`` drops mask-noisy samples. ``static_replace`` relabels them with the
first-round model's predictions. ``dynamic_replace`` keeps them out of training
except inside a fractional epoch window, where they carry the current model's
(hard) predictions, refreshed every epoch.
"""
import csv
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import EmptyDatasetError
from .theory import gradient_step, predict

POLICY_KINDS = ("prune", "static_replace", "dynamic_replace")


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    observed_labels: np.ndarray
    true_labels: np.ndarray = None
    clean_indicator: np.ndarray = None

    def __post_init__(self):
        n = len(self.observed_labels)
        if len(self.features) != n:
            raise ValueError(f"{len(self.features)} feature rows but {n} labels")
        for name in ("true_labels", "clean_indicator"):
            v = getattr(self, name)
            if v is not None and len(v) != n:
                raise ValueError(f"{name} has length {len(v)}, expected {n}")
        if n and np.min(self.observed_labels) < 0:
            raise ValueError("labels must be non-negative class ids")

    def __len__(self):
        return len(self.observed_labels)

    def take(self, idx):
        pick = lambda v: None if v is None else np.asarray(v)[idx]
        return LabeledDataset(
            np.asarray(self.features)[idx],
            np.asarray(self.observed_labels)[idx],
            pick(self.true_labels),
            pick(self.clean_indicator),
        )


@dataclass(frozen=True)
class RetrainPolicy:
    kind: str = "prune"
    window_start: float = 0.5
    window_end: float = 0.9

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.kind!r}; expected one of {POLICY_KINDS}")
        if not 0 <= self.window_start < self.window_end <= 1:
            raise ValueError("dynamic window needs 0 <= start < end <= 1")


def _check_mask(mask, n):
    mask = np.asarray(mask)
    if mask.shape != (n,):
        raise ValueError(f"mask has shape {mask.shape}, expected ({n},)")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask entries must be 0 or 1")
    return mask.astype(bool)


def prune(dataset, mask):
    keep = _check_mask(mask, len(dataset))
    if not keep.any():
        raise EmptyDatasetError("mask marks every sample noisy; nothing left after pruning")
    return dataset.take(np.flatnonzero(keep))


def static_replace(dataset, mask, first_round_predictions):
    keep = _check_mask(mask, len(dataset))
    preds = np.asarray(first_round_predictions)
    if preds.shape != (len(dataset),):
        raise ValueError(f"{preds.shape[0]} predictions for {len(dataset)} samples")
    labels = np.where(keep, np.asarray(dataset.observed_labels), preds)
    return replace(dataset, observed_labels=labels)


def dynamic_replace_schedule(mask, epoch, total_epochs, current_predictions, observed_labels=None,
                             policy=RetrainPolicy("dynamic_replace")):
    """Which samples train this epoch, and with which labels.

    Returns ``(included_indices, effective_labels)`` where the labels align with
    the included indices. Mask-noisy samples join only while
    ``epoch / total_epochs`` lies in the policy window (inclusive).
    """
    mask = np.asarray(mask).astype(bool)
    if total_epochs < 1 or not 0 <= epoch <= total_epochs:
        raise ValueError(f"invalid epoch {epoch} of {total_epochs}")
    preds = np.asarray(current_predictions)
    base = preds if observed_labels is None else np.asarray(observed_labels)
    frac = epoch / total_epochs
    if policy.window_start <= frac <= policy.window_end:
        included = np.arange(mask.shape[0])
        labels = np.where(mask, base, preds)
    else:
        included = np.flatnonzero(mask)
        labels = base[included]
    return included, labels


def provenance(mask, policy_kind):
    """Per-row provenance tag: ``kept``, ``replaced`` or ``excluded``."""
    mask = np.asarray(mask).astype(bool)
    noisy_tag = "replaced" if policy_kind == "static_replace" else "excluded"
    return np.where(mask, "kept", noisy_tag)


def write_cleaned_csv(path, labels, tags, features=None):
    """All rows in input order: feature columns (if any), label, provenance."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for i, (label, tag) in enumerate(zip(labels, tags)):
            row = [] if features is None else list(features[i])
            writer.writerow(row + [int(label), tag])


def _to_pm1(labels01):
    return 2 * np.asarray(labels01) - 1


def _to_01(pm1):
    return (np.asarray(pm1) + 1) // 2


def retrain_logistic(X, observed_labels, mask, config, policy=RetrainPolicy(), first_round_predictions=None):
    """Retrain the two-class logistic model under a cleaning policy.

    Labels are class ids in {0, 1}. Returns the final parameter vector.
    """
    X = np.asarray(X, dtype=float)
    y01 = np.asarray(observed_labels)
    keep = _check_mask(mask, len(y01))
    theta = np.zeros(X.shape[1])

    if policy.kind == "prune":
        if not keep.any():
            raise EmptyDatasetError("mask marks every sample noisy; nothing left to train on")
        Xt, yt = X[keep], _to_pm1(y01[keep])
        for _ in range(config.epochs):
            theta = gradient_step(theta, Xt, yt, config)
        return theta

    if policy.kind == "static_replace":
        if first_round_predictions is None:
            raise ValueError("static replacement needs first-round predictions")
        yt = _to_pm1(np.where(keep, y01, first_round_predictions))
        for _ in range(config.epochs):
            theta = gradient_step(theta, X, yt, config)
        return theta

    for epoch in range(config.epochs):
        current = _to_01(predict(theta, X))
        idx, labels = dynamic_replace_schedule(keep, epoch, config.epochs, current, y01, policy)
        if idx.size:
            theta = gradient_step(theta, X[idx], _to_pm1(labels), config)
    return theta
