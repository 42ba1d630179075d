import math
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctrl_detect.clustering import silhouette
from ctrl_detect.exceptions import NoValidMaskError
from ctrl_detect.loss_matrix import LossMatrix
from ctrl_detect.mask_engine import (
    REJECTED, STANDARD_GRID, DetectionParams, SmallClassWarning, _combine, cluster_windows,
    compute_mask, evaluate_grid, mask_score, select_best_mask, threshold_votes,
    votes_from_clusters, window_intervals,
)
from oracles import brute_force_kmeans2

FIXTURE = np.array([[0.10, 0.05], [0.12, 0.06], [2.0, 2.1], [0.11, 0.04]])


def two_group_losses(n_clean, n_noisy, e, seed, labels_classes=2):
    """Clean rows decay towards 0, noisy rows stay high; labels alternate over classes."""
    rng = np.random.default_rng(seed)
    decay = np.exp(-np.linspace(0, 3, e))
    clean = decay + rng.normal(0, 0.02, (n_clean, e))
    noisy = 2.0 + rng.normal(0, 0.02, (n_noisy, e))
    L = np.abs(np.vstack([clean, noisy]))
    truth = np.r_[np.ones(n_clean, int), np.zeros(n_noisy, int)]
    labels = np.arange(len(L)) % labels_classes
    return L, labels, truth


@pytest.mark.parametrize("e, w, expected", [
    (8, 4, [(0, 2), (2, 4), (4, 6), (6, 8)]),
    (7, 2, [(0, 3), (3, 7)]),
    (5, 1, [(0, 5)]),
])
def test_window_intervals(e, w, expected):
    assert window_intervals(e, w) == expected


def test_window_intervals_rejects_too_many_windows():
    with pytest.raises(ValueError):
        window_intervals(3, 4)


@given(st.integers(1, 60), st.integers(1, 60))
def test_window_intervals_cover(e, w):
    if w > e:
        return
    iv = window_intervals(e, w)
    assert len(iv) == w and iv[0][0] == 0 and iv[-1][1] == e
    assert all(a[1] == b[0] for a, b in zip(iv, iv[1:]))
    assert all(end - start == e // w for start, end in iv[:-1])


def test_fixture_mask():
    mask = compute_mask(LossMatrix(FIXTURE), np.zeros(4, int), DetectionParams(k=2, s=1, w=1, t=1), seed=0)
    np.testing.assert_array_equal(mask, [1, 1, 0, 1])
    # oracle: minimum-WCSS partition, higher-sum group noisy
    _, labels = brute_force_kmeans2(FIXTURE)
    sums = [FIXTURE[labels == g].mean(axis=0).sum() for g in (0, 1)]
    np.testing.assert_array_equal(mask, (labels != int(np.argmax(sums))).astype(int))


def test_vote_threshold_example():
    votes = np.array([[1, 1, 1, 1], [1, 1, 1, 0], [1, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 0]])
    np.testing.assert_array_equal(threshold_votes(votes, 3), [1, 1, 0, 0, 0])


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_threshold_monotone_in_t(seed, w):
    votes = np.random.default_rng(seed).integers(0, 2, (30, w))
    for t in range(1, w):
        assert np.all(threshold_votes(votes, t + 1) <= threshold_votes(votes, t))


def test_identical_rows_deterministic():
    L = np.ones((6, 4))
    labels = np.zeros(6, int)
    p = DetectionParams(k=2, s=1, w=1, t=1)
    m1 = compute_mask(L, labels, p, seed=3)
    m2 = compute_mask(L, labels, p, seed=3)
    np.testing.assert_array_equal(m1, m2)
    (rows, res), = cluster_windows(L, labels, 2, 1, 3)[0].values()
    noisy_rows = rows[res.assignments == 0]
    np.testing.assert_array_equal(np.flatnonzero(m1 == 0), np.sort(noisy_rows))


def test_votes_start_clean_and_only_drop():
    L, labels, _ = two_group_losses(20, 6, 8, 0)
    windows = cluster_windows(L, labels, 3, 4, seed=1)
    votes = votes_from_clusters(len(L), windows, 2)
    assert votes.shape == (len(L), 4)
    assert set(np.unique(votes)) <= {0, 1}


def test_w1_t1_is_single_pass_clustering():
    L, labels, _ = two_group_losses(30, 8, 6, 1)
    mask = compute_mask(L, labels, DetectionParams(k=2, s=1, w=1, t=1), seed=5)
    (per_class,) = cluster_windows(L, labels, 2, 1, 5)
    expected = np.ones(len(L), int)
    for rows, res in per_class.values():
        noisy = int(np.argmax(res.centers.sum(axis=1)))
        expected[rows[res.assignments == noisy]] = 0
    np.testing.assert_array_equal(mask, expected)


def test_small_class_is_skipped_with_warning():
    L, labels, _ = two_group_losses(10, 4, 4, 2)
    labels = labels.copy()
    labels[0] = 7  # singleton class
    with pytest.warns(SmallClassWarning):
        mask = compute_mask(L, labels, DetectionParams(k=2, s=1, w=1, t=1), seed=0)
    assert mask[0] == 1


def test_mask_rows_must_match_labels():
    with pytest.raises(ValueError):
        compute_mask(np.ones((4, 2)), np.zeros(3, int), DetectionParams(), seed=0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_equivariance(seed):
    L, labels, _ = two_group_losses(25, 7, 8, seed % 1000)
    p = DetectionParams(k=3, s=1, w=2, t=1)
    perm = np.random.default_rng(seed).permutation(len(L))
    base = compute_mask(L, labels, p, seed=4)
    np.testing.assert_array_equal(compute_mask(L[perm], labels[perm], p, seed=4), base[perm])


def test_class_locality():
    L, labels, _ = two_group_losses(30, 10, 8, 3)
    p = DetectionParams(k=2, s=1, w=2, t=1)
    base = compute_mask(L, labels, p, seed=9)
    extra = np.abs(np.random.default_rng(0).normal(1, 0.5, (12, 8)))
    L2 = np.vstack([L, extra])
    labels2 = np.r_[labels, np.ones(12, int)]
    grown = compute_mask(L2, labels2, p, seed=9)
    cls0 = np.flatnonzero(labels == 0)
    np.testing.assert_array_equal(grown[cls0], base[cls0])


def test_mask_score_alpha_zero_is_silhouette():
    L, labels, truth = two_group_losses(20, 5, 6, 4)
    assert mask_score(truth, L, labels, labels, 0.0) == silhouette(L, truth)


def test_mask_score_arithmetic():
    assert _combine(0.8, 0.9, 5.0, 1.0) == pytest.approx(3.6)


def test_mask_score_components():
    L = np.array([[0.1], [0.2], [2.0], [3.0]])
    mask = np.array([1, 1, 0, 0])
    preds = np.array([0, 1, 0, 0])
    labels = np.array([0, 0, 0, 0])
    # train_acc = 1/2, loss ratio = 2.5 / 0.15
    expected = silhouette(L, mask) * (0.5 * (2.5 / 0.15)) ** 0.5
    assert mask_score(mask, L, preds, labels, 0.5) == pytest.approx(expected, rel=1e-12)


def test_mask_score_floors_the_denominator():
    L = np.array([[0.0], [0.0], [1.0]])
    score = mask_score([1, 1, 0], L, [0, 0, 0], [0, 0, 0], 1.0)
    assert math.isfinite(score) and score > 1e10


@pytest.mark.parametrize("mask", [[1, 1, 1, 1], [0, 0, 0, 0]])
def test_one_sided_mask_rejected(mask):
    assert mask_score(mask, FIXTURE, None, np.zeros(4, int), 0.0) == REJECTED


def test_alpha_needs_predictions():
    with pytest.raises(ValueError):
        mask_score([1, 1, 0, 1], FIXTURE, None, np.zeros(4, int), 1.0)


def test_standard_grid_shape():
    assert len(STANDARD_GRID) == 18
    assert list(STANDARD_GRID) == sorted(STANDARD_GRID)


def test_separating_candidate_wins():
    L, labels, truth = two_group_losses(40, 12, 8, 6)
    best = select_best_mask(L, labels, labels, 0.0, seed=0)
    np.testing.assert_array_equal(best.mask, truth)
    assert best.score > 0.9
    mask, params, score = best
    assert params.grid_key() in STANDARD_GRID and score == best.score


def test_ties_go_to_first_grid_entry():
    L, labels, _ = two_group_losses(40, 12, 8, 6)
    candidates = evaluate_grid(L, labels, labels, 0.0, seed=0)
    winner = select_best_mask(L, labels, labels, 0.0, seed=0)
    top = max(c.score for c in candidates)
    tied = [c for c in candidates if c.score == top]
    assert winner.params.grid_key() == (tied[0].k, tied[0].s, tied[0].w, tied[0].t)


def test_no_valid_mask():
    with pytest.raises(NoValidMaskError), pytest.warns(SmallClassWarning):
        select_best_mask(np.ones((6, 1)) * np.arange(6)[:, None], np.arange(6), None, 0.0, seed=0)


def test_windows_beyond_epochs_are_rejected():
    L, labels, _ = two_group_losses(20, 6, 3, 0)
    cands = evaluate_grid(L, labels, labels, 0.0, seed=0)
    assert all(c.score == REJECTED for c in cands if c.w == 4)
    assert any(c.score != REJECTED for c in cands)


def test_zero_noise_runs_without_error():
    rng = np.random.default_rng(0)
    L = np.abs(np.exp(-np.linspace(0, 3, 8)) + rng.normal(0, 0.05, (60, 8)))
    best = select_best_mask(L, np.arange(60) % 3, None, 0.0, seed=1)
    assert best.mask.shape == (60,)


def test_thread_count_does_not_change_selection():
    L, labels, _ = two_group_losses(50, 15, 8, 7, labels_classes=3)
    preds = labels.copy()
    one = select_best_mask(L, labels, preds, 0.5, seed=2, workers=1)
    many = select_best_mask(L, labels, preds, 0.5, seed=2, workers=4)
    np.testing.assert_array_equal(one.mask, many.mask)
    assert one.params == many.params and one.score == many.score
    assert [repr(c.record()) for c in one.candidates] == [repr(c.record()) for c in many.candidates]


@pytest.mark.parametrize("kwargs", [dict(k=2, s=2), dict(w=2, t=3), dict(alpha=-1), dict(a=0)])
def test_detection_params_validation(kwargs):
    with pytest.raises(ValueError):
        DetectionParams(**kwargs)
