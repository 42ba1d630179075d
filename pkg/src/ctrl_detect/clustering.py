"""Two-way grouping of loss-curve rows.

All distance reductions go through numpy's own summation loops (no BLAS
matrix products), so results do not depend on the BLAS thread count.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .exceptions import UndefinedSilhouetteError

KMEANS_TOL = 1e-4
KMEANS_MAX_ITER = 300
KMEANS_N_INIT = 10
GMM_TOL = 1e-6
GMM_MAX_ITER = 100
VAR_FLOOR = 1e-6


@dataclass
class ClusterResult:
    assignments: np.ndarray
    centers: np.ndarray
    k: int
    inertia: float = float("nan")
    n_iter: int = 0
    inertia_history: tuple = ()


def _check_points(points, k):
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"points must be a 2-D array, got shape {X.shape}")
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if X.shape[0] < k:
        raise ValueError(f"need at least k={k} points, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("points contain non-finite values")
    return X


def _sq_dists(X, centers):
    out = np.empty((X.shape[0], centers.shape[0]))
    for c, center in enumerate(centers):
        out[:, c] = ((X - center) ** 2).sum(axis=1)
    return out


def _kmeans_pp(X, k, rng):
    m = X.shape[0]
    idx = [int(rng.integers(m))]
    closest = ((X - X[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            cand = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            cand = min(cand, m - 1)
        else:
            cand = int(rng.integers(m))
        idx.append(cand)
        closest = np.minimum(closest, ((X - X[cand]) ** 2).sum(axis=1))
    return X[idx].copy()


def _repair_empty(X, labels, d2, k):
    """Move the point farthest from its own center into each empty cluster."""
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        own = d2[np.arange(len(labels)), labels].copy()
        own[counts[labels] <= 1] = -1.0
        i = int(np.argmax(own))
        counts[labels[i]] -= 1
        labels[i] = c
        counts[c] = 1
        d2[i, :] = np.inf
        d2[i, c] = 0.0
    return labels


def _means(X, labels, k):
    return np.stack([X[labels == c].mean(axis=0) for c in range(k)])


def _wcss(X, labels, centers):
    return float(((X - centers[labels]) ** 2).sum())


def _lloyd(X, k, rng, tol, max_iter):
    centers = _kmeans_pp(X, k, rng)
    history = []
    labels = None
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = _sq_dists(X, centers)
        labels = _repair_empty(X, np.argmin(d2, axis=1), d2, k)
        history.append(_wcss(X, labels, centers))
        new_centers = _means(X, labels, k)
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift < tol:
            break
    inertia = _wcss(X, labels, centers)
    history.append(inertia)
    return ClusterResult(labels, centers, k, inertia, n_iter, tuple(history))


def kmeans(points, k, seed, *, tol=KMEANS_TOL, max_iter=KMEANS_MAX_ITER, n_init=KMEANS_N_INIT):
    """Lloyd's algorithm with seeded k-means++ initialization.

    Each of the ``n_init`` restarts stops when no center moves more than ``tol``
    or after ``max_iter`` iterations; the lowest-WCSS run is kept (earliest on
    ties). Ties in the assignment step go to the lower cluster id.
    """
    X = _check_points(points, k)
    if n_init < 1:
        raise ValueError(f"n_init must be >= 1, got {n_init}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        res = _lloyd(X, k, rng, tol, max_iter)
        if best is None or res.inertia < best.inertia:
            best = res
    return best


def _diag_log_prob(X, means, variances, log_weights):
    out = np.empty((X.shape[0], means.shape[0]))
    for c in range(means.shape[0]):
        var = variances[c]
        out[:, c] = -0.5 * (((X - means[c]) ** 2 / var).sum(axis=1) + np.log(2 * np.pi * var).sum())
    return out + log_weights


def _weighted_means(X, resp):
    nk = np.maximum(resp.sum(axis=0), 1e-300)
    return np.stack([(resp[:, c, None] * X).sum(axis=0) / nk[c] for c in range(resp.shape[1])]), nk


def gmm(points, k, seed, *, tol=GMM_TOL, max_iter=GMM_MAX_ITER, var_floor=VAR_FLOOR):
    """Diagonal-covariance Gaussian mixture fitted by EM, started from k-means.

    Assignments are the argmax responsibility, so a component can end up
    empty (e.g. all points identical). ``centers`` are the responsibility
    weighted means under the final parameters.
    """
    X = _check_points(points, k)
    init = kmeans(X, k, seed)
    means = init.centers.copy()
    variances = np.stack(
        [np.maximum(X[init.assignments == c].var(axis=0), var_floor) for c in range(k)]
    )
    weights = np.bincount(init.assignments, minlength=k) / X.shape[0]

    prev_ll = None
    n_iter = 0
    history = []
    for n_iter in range(1, max_iter + 1):
        logp = _diag_log_prob(X, means, variances, np.log(weights))
        norm = logsumexp(logp, axis=1)
        ll = float(norm.sum())
        history.append(ll)
        if prev_ll is not None and abs(ll - prev_ll) < tol * max(abs(prev_ll), 1e-300):
            break
        prev_ll = ll
        resp = np.exp(logp - norm[:, None])
        means, nk = _weighted_means(X, resp)
        variances = np.stack(
            [
                np.maximum((resp[:, c, None] * (X - means[c]) ** 2).sum(axis=0) / nk[c], var_floor)
                for c in range(k)
            ]
        )
        weights = np.maximum(nk / X.shape[0], 1e-300)

    logp = _diag_log_prob(X, means, variances, np.log(weights))
    resp = np.exp(logp - logsumexp(logp, axis=1)[:, None])
    labels = np.argmax(resp, axis=1)
    centers, _ = _weighted_means(X, resp)
    return ClusterResult(labels, centers, k, _wcss(X, labels, centers), n_iter, tuple(history))


def select_noisy_clusters(centers, s):
    """Ids of the ``s`` clusters whose center coordinates sum highest.

    Ties go to the lower cluster id.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    k = centers.shape[0]
    if s < 1 or s >= k:
        raise ValueError(f"need 1 <= s < k, got s={s}, k={k}")
    sums = centers.sum(axis=1)
    order = sorted(range(k), key=lambda c: (-sums[c], c))
    return set(order[:s])


def pairwise_distances(points):
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return cdist(X, X)


def silhouette(points, binary_assignment, *, distances=None, chunk=2048):
    """Mean silhouette coefficient of a two-group split, Euclidean distance.

    Members of a singleton group score 0, as does any point with a = b = 0.
    Pass ``distances`` to reuse a precomputed pairwise matrix.
    """
    groups = np.asarray(binary_assignment).astype(bool)
    m = groups.shape[0]
    n1 = int(groups.sum())
    n0 = m - n1
    if n0 == 0 or n1 == 0:
        raise UndefinedSilhouetteError("silhouette needs both groups non-empty")

    X = None
    if distances is None:
        X = np.asarray(points, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != m:
            raise ValueError("points and assignment lengths differ")

    sum_to_1 = np.empty(m)
    sum_to_0 = np.empty(m)
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        D = distances[start:stop] if distances is not None else cdist(X[start:stop], X)
        sum_to_1[start:stop] = D[:, groups].sum(axis=1)
        sum_to_0[start:stop] = D[:, ~groups].sum(axis=1)

    own_size = np.where(groups, n1, n0)
    own_sum = np.where(groups, sum_to_1, sum_to_0)
    other_sum = np.where(groups, sum_to_0, sum_to_1)
    other_size = m - own_size
    with np.errstate(invalid="ignore", divide="ignore"):
        a = own_sum / (own_size - 1)
        b = other_sum / other_size
        denom = np.maximum(a, b)
        coef = np.where(denom > 0, (b - a) / denom, 0.0)
    coef = np.where(own_size > 1, coef, 0.0)
    return float(coef.mean())
