"""Noise transition matrices and label flipping.

A transition matrix ``T`` is column-stochastic: ``T[i, j]`` is the probability
that a sample of true class ``j`` is observed with label ``i``.
"""
import math

import numpy as np

COLUMN_SUM_TOL = 1e-9


def validate_transition_matrix(T):
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] < 2:
        raise ValueError(f"transition matrix must be square with >= 2 classes, got shape {T.shape}")
    if np.any(T < 0) or np.any(T > 1):
        raise ValueError("transition matrix entries must lie in [0, 1]")
    if np.any(np.abs(T.sum(axis=0) - 1.0) > COLUMN_SUM_TOL):
        raise ValueError("transition matrix columns must sum to 1")
    if np.any(np.diag(T) <= 0):
        raise ValueError("transition matrix diagonal must be positive")
    return T


def _max_noise(num_classes):
    return (num_classes - 1) / num_classes


def gen_symmetric(num_classes, noise_level):
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if not 0 <= noise_level < _max_noise(num_classes):
        raise ValueError(
            f"symmetric noise level must be in [0, {_max_noise(num_classes):.4g}) "
            f"for {num_classes} classes, got {noise_level}"
        )
    T = np.full((num_classes, num_classes), noise_level / (num_classes - 1))
    np.fill_diagonal(T, 1.0 - noise_level)
    return T


def _waterfill(weights, total, cap):
    """Scale positive ``weights`` to sum to ``total`` with no entry above ``cap``."""
    out = np.zeros_like(weights)
    free = np.ones(weights.shape, dtype=bool)
    remaining = total
    while True:
        share = remaining * weights[free] / weights[free].sum()
        over = share > cap
        if not over.any():
            out[free] = share
            return out
        idx = np.flatnonzero(free)[over]
        out[idx] = cap
        free[idx] = False
        remaining = total - out[~free].sum()


def gen_asymmetric(num_classes, noise_level, sparsity, seed):
    """Random column-stochastic matrix at a target noise and sparsity level.

    Zero positions are drawn first, keeping at least one non-zero off-diagonal
    slot per column. Each column then gets off-diagonal mass around
    ``noise_level`` (jittered, capped below 1 so the diagonal stays positive)
    spread over its non-zero slots with Dirichlet(1) weights. Measured noise
    equals the target up to rounding; measured sparsity is the nearest
    achievable fraction of the ``C(C-1)`` off-diagonal slots.
    """
    C = int(num_classes)
    if C < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if not 0 <= sparsity < 1:
        raise ValueError(f"sparsity must be in [0, 1), got {sparsity}")
    if not 0 <= noise_level < _max_noise(C):
        raise ValueError(
            f"noise level must be in [0, {_max_noise(C):.4g}) for {C} classes, got {noise_level}"
        )
    if noise_level == 0:
        return np.eye(C)

    n_off = C * (C - 1)
    n_zero = int(math.floor(sparsity * n_off + 0.5))
    max_zero = C * (C - 2)
    if n_zero > max_zero:
        raise ValueError(
            f"infeasible: sparsity {sparsity} needs {n_zero} zero off-diagonal entries, but with "
            f"{C} classes at most {max_zero} can be zero while every column still carries noise"
        )

    rng = np.random.default_rng(seed)
    off_rows = np.array([[i for i in range(C) if i != j] for j in range(C)])  # (C, C-1)
    reserved = rng.integers(C - 1, size=C)
    candidates = [(j, r) for j in range(C) for r in range(C - 1) if r != reserved[j]]
    zero_pick = rng.choice(len(candidates), size=n_zero, replace=False) if n_zero else []
    nonzero = np.ones((C, C - 1), dtype=bool)
    for p in zero_pick:
        j, r = candidates[p]
        nonzero[j, r] = False

    cap = 1.0 - 1e-6
    col_mass = _waterfill(rng.uniform(0.5, 1.5, size=C), noise_level * C, cap)

    T = np.zeros((C, C))
    for j in range(C):
        w = rng.dirichlet(np.ones(int(nonzero[j].sum())))
        T[off_rows[j][nonzero[j]], j] = col_mass[j] * w
        T[j, j] = 1.0 - T[:, j].sum()
    return T


def measure_noise_level(T):
    T = np.asarray(T, dtype=float)
    C = T.shape[0]
    return math.fsum(T[~np.eye(C, dtype=bool)].tolist()) / C


def measure_sparsity(T):
    T = np.asarray(T, dtype=float)
    C = T.shape[0]
    off = ~np.eye(C, dtype=bool)
    return float(np.count_nonzero(T[off] == 0) / (C * (C - 1)))


def flip_labels(true_labels, T, seed):
    """Draw each observed label from column ``T[:, y_i]``.

    Returns ``(observed, clean_indicator)`` with ``clean_indicator[i] = 1`` iff
    the label survived.
    """
    T = np.asarray(T, dtype=float)
    y = np.asarray(true_labels)
    C = T.shape[0]
    if y.size and (y.min() < 0 or y.max() >= C or not np.all(y == np.round(y))):
        raise ValueError(f"labels must be integers in [0, {C})")
    y = y.astype(np.int64)
    rng = np.random.default_rng(seed)
    u = rng.random(y.shape[0])
    cdf = np.cumsum(T, axis=0)[:, y]  # (C, n)
    # u >= cdf[i] counts classes strictly below the drawn one; zero-mass rows never win
    observed = np.minimum((u[None, :] >= cdf).sum(axis=0), C - 1)
    # rounding in cdf[-1] < 1 could land on a zero-probability class; fall back to the last positive one
    bad = T[observed, y] == 0
    if bad.any():
        last_pos = C - 1 - np.argmax(T[::-1] > 0, axis=0)
        observed[bad] = last_pos[y[bad]]
    return observed.astype(np.int64), (observed == y).astype(np.int64)
