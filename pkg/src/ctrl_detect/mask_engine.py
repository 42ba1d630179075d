"""Per-class, per-window clustering with clean-vote thresholding, and the
score used to pick one mask out of the (k, s, w, t) grid.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
import itertools
import math
import warnings

import numpy as np

from .clustering import gmm, kmeans, pairwise_distances, select_noisy_clusters, silhouette
from .exceptions import NoValidMaskError
from .loss_matrix import LossMatrix, last_loss

KS_GRID = ((2, 1), (3, 1), (3, 2))
WT_GRID = ((1, 1), (2, 1), (2, 2), (4, 1), (4, 2), (4, 3))
ALPHA_SWEEP = (0.0, 0.25, 0.5, 1.0)
LOSS_RATIO_FLOOR = 1e-12
REJECTED = -math.inf
# pairwise distances are cached for the grid search below this many samples
DISTANCE_CACHE_MAX = 4000

CLUSTERERS = {"kmeans": kmeans, "gmm": gmm}


class SmallClassWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DetectionParams:
    a: int = 5
    k: int = 2
    s: int = 1
    w: int = 1
    t: int = 1
    alpha: float = 0.0

    def __post_init__(self):
        if self.a < 1:
            raise ValueError(f"moving-average size must be >= 1, got {self.a}")
        if not 1 <= self.s < self.k:
            raise ValueError(f"need 1 <= s < k, got k={self.k}, s={self.s}")
        if not 1 <= self.t <= self.w:
            raise ValueError(f"need 1 <= t <= w, got w={self.w}, t={self.t}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    def grid_key(self):
        return (self.k, self.s, self.w, self.t)


STANDARD_GRID = tuple((k, s, w, t) for (k, s), (w, t) in itertools.product(KS_GRID, WT_GRID))


def window_intervals(n_epochs, w):
    """``w`` contiguous half-open column ranges; the last one takes the remainder."""
    if w < 1 or w > n_epochs:
        raise ValueError(f"need 1 <= w <= n_epochs, got w={w}, n_epochs={n_epochs}")
    size = n_epochs // w
    bounds = [i * size for i in range(w)] + [n_epochs]
    return list(zip(bounds[:-1], bounds[1:]))


def _values(L):
    return L.values if isinstance(L, LossMatrix) else np.asarray(L, dtype=float)


def _window_seed(seed, class_id, window_id):
    return np.random.SeedSequence([int(seed), int(class_id), int(window_id)])


def cluster_windows(L, noisy_labels, k, w, seed, clusterer="kmeans"):
    """Cluster every (window, class) block.

    Returns a list over windows of ``{class_id: (row_indices, ClusterResult)}``.
    Rows are put in lexicographic order before clustering so the result does
    not depend on sample order. Classes with fewer than ``k`` samples are left
    out with a warning.
    """
    values = _values(L)
    labels = np.asarray(noisy_labels)
    if labels.shape[0] != values.shape[0]:
        raise ValueError(f"{values.shape[0]} loss rows but {labels.shape[0]} labels")
    fit = CLUSTERERS[clusterer]
    out = []
    for wi, (start, end) in enumerate(window_intervals(values.shape[1], w)):
        block = values[:, start:end]
        per_class = {}
        for c in np.unique(labels):
            rows = np.flatnonzero(labels == c)
            if rows.size < k:
                warnings.warn(
                    f"class {c} has {rows.size} samples (< k={k}); its votes stay clean",
                    SmallClassWarning,
                    stacklevel=2,
                )
                continue
            p = block[rows]
            order = np.lexsort(p.T[::-1])
            per_class[int(c)] = (rows[order], fit(p[order], k, _window_seed(seed, c, wi)))
        out.append(per_class)
    return out


def votes_from_clusters(n_samples, windows, s):
    """Clean-vote table: 1 unless the sample fell in a selected noisy cluster."""
    votes = np.ones((n_samples, len(windows)), dtype=np.int64)
    for wi, per_class in enumerate(windows):
        for rows, res in per_class.values():
            noisy = select_noisy_clusters(res.centers, s)
            hit = np.isin(res.assignments, sorted(noisy))
            votes[rows[hit], wi] = 0
    return votes


def threshold_votes(votes, t):
    return (np.asarray(votes).sum(axis=1) >= t).astype(np.int64)


def compute_mask(L, noisy_labels, params, seed, clusterer="kmeans"):
    """Mask (1 = clean) for one (k, s, w, t) setting on a preprocessed matrix."""
    values = _values(L)
    windows = cluster_windows(values, noisy_labels, params.k, params.w, seed, clusterer)
    return threshold_votes(votes_from_clusters(values.shape[0], windows, params.s), params.t)


@dataclass
class CandidateScore:
    k: int
    s: int
    w: int
    t: int
    alpha: float
    score: float
    silhouette: float
    train_acc: float
    loss_ratio: float
    mask: np.ndarray = field(repr=False, default=None)

    def record(self):
        d = asdict(self)
        d.pop("mask")
        return d


def score_components(mask, L, final_predictions, noisy_labels, *, last_losses=None, distances=None):
    """``(silhouette, train_acc, loss_ratio)``; silhouette is None for a one-sided mask."""
    values = _values(L)
    mask = np.asarray(mask).astype(bool)
    if mask.all() or not mask.any():
        return None, math.nan, math.nan
    sil = silhouette(values, mask, distances=distances)
    if final_predictions is None:
        train_acc = math.nan
    else:
        agree = np.asarray(final_predictions)[mask] == np.asarray(noisy_labels)[mask]
        train_acc = float(agree.mean())
    tail = last_loss(L) if last_losses is None and isinstance(L, LossMatrix) else last_losses
    if tail is None:
        tail = values[:, -1]
    tail = np.asarray(tail, dtype=float)
    loss_ratio = float(tail[~mask].mean() / max(tail[mask].mean(), LOSS_RATIO_FLOOR))
    return sil, train_acc, loss_ratio


def _combine(sil, train_acc, loss_ratio, alpha):
    if sil is None:
        return REJECTED
    if alpha == 0:
        return sil
    if math.isnan(train_acc):
        raise ValueError("alpha > 0 needs first-round predictions for the training-accuracy term")
    return sil * (train_acc * loss_ratio) ** alpha


def mask_score(mask, L, final_predictions, noisy_labels, alpha, *, last_losses=None, distances=None):
    """``silhouette * (train_acc * loss_ratio) ** alpha``; ``-inf`` for a one-sided mask.

    ``train_acc`` is the agreement between first-round predictions and observed
    labels on mask-clean samples; ``loss_ratio`` is mean last smoothed loss of
    mask-noisy over mask-clean samples.
    """
    sil, acc, ratio = score_components(
        mask, L, final_predictions, noisy_labels, last_losses=last_losses, distances=distances
    )
    return _combine(sil, acc, ratio, alpha)


@dataclass
class BestMask:
    mask: np.ndarray
    params: DetectionParams
    score: float
    candidates: list

    def __iter__(self):
        return iter((self.mask, self.params, self.score))


def evaluate_grid(L, noisy_labels, final_predictions, alpha, seed, *, grid=STANDARD_GRID,
                  a=5, last_losses=None, clusterer="kmeans", workers=1):
    """Score every (k, s, w, t) candidate; returned in grid order.

    Candidates whose window count exceeds the number of epochs are rejected.
    """
    values = _values(L)
    n, e = values.shape
    if last_losses is None:
        last_losses = values[:, -1]

    jobs = sorted({(k, w) for k, _, w, _ in grid if w <= e})

    def run(job):
        k, w = job
        return cluster_windows(values, noisy_labels, k, w, seed, clusterer)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            clustered = dict(zip(jobs, pool.map(run, jobs)))
    else:
        clustered = {job: run(job) for job in jobs}

    distances = pairwise_distances(values) if n <= DISTANCE_CACHE_MAX else None
    cache = {}
    out = []
    for k, s, w, t in grid:
        if w > e:
            out.append(CandidateScore(k, s, w, t, alpha, REJECTED, math.nan, math.nan, math.nan))
            continue
        mask = threshold_votes(votes_from_clusters(n, clustered[(k, w)], s), t)
        key = mask.tobytes()
        if key not in cache:
            cache[key] = score_components(
                mask, values, final_predictions, noisy_labels,
                last_losses=last_losses, distances=distances,
            )
        sil, acc, ratio = cache[key]
        score = _combine(sil, acc, ratio, alpha)
        out.append(CandidateScore(
            k, s, w, t, alpha, score, math.nan if sil is None else sil, acc, ratio, mask
        ))
    return out


def select_best_mask(L, noisy_labels, final_predictions, alpha, seed, *, grid=STANDARD_GRID,
                     a=5, last_losses=None, clusterer="kmeans", workers=1):
    """Argmax-score mask over the grid.

    Ties go to the higher silhouette, then to the earlier grid entry.
    Raises :class:`NoValidMaskError` if every candidate was rejected.
    """
    candidates = evaluate_grid(
        L, noisy_labels, final_predictions, alpha, seed, grid=grid, a=a,
        last_losses=last_losses, clusterer=clusterer, workers=workers,
    )
    best = None
    for c in candidates:
        if c.score == REJECTED:
            continue
        if best is None or (c.score, c.silhouette) > (best.score, best.silhouette):
            best = c
    if best is None:
        raise NoValidMaskError("every candidate mask was one-sided or infeasible")
    params = DetectionParams(a=a, k=best.k, s=best.s, w=best.w, t=best.t, alpha=alpha)
    return BestMask(best.mask, params, best.score, candidates)
