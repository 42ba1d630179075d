"""Acceptance criteria, one test each, run at their stated tolerances.

Each test reports a PASS/FAIL line through the ``criterion`` fixture; the
lines are repeated in the terminal summary.
"""
import itertools
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from ctrl_detect.clustering import kmeans
from ctrl_detect.evaluation import GridConfig, mask_accuracy, run_synthetic_cell
from ctrl_detect.noise_sim import (
    flip_labels, gen_asymmetric, gen_symmetric, measure_noise_level, measure_sparsity,
    validate_transition_matrix,
)
from ctrl_detect.theory import (
    GaussianTwoClassConfig, alignment, logistic_train, loss_gap_bound, loss_gradient, mean_loss,
    sample_gaussian_dataset,
)
from oracles import brute_force_kmeans2, central_difference, relative_error

pytestmark = pytest.mark.acceptance

THEORY = GaussianTwoClassConfig(dim=10, sigma=0.1, n=1000, delta=0.2, eta=1.0)


def test_no_clean_baseline_identity(criterion):
    t0 = time.perf_counter()
    n = 50_000
    _, clean = flip_labels(np.arange(n) % 10, gen_symmetric(10, 0.10), seed=2024)
    acc = mask_accuracy(np.ones(n, dtype=np.int64), clean)
    elapsed = time.perf_counter() - t0
    ok = acc == clean.mean() and 0.897 <= acc <= 0.903 and elapsed < 5
    criterion(1, "no-clean baseline identity", ok, f"accuracy {acc:.4f}, {elapsed:.2f}s")
    assert ok


def test_gradient_check(criterion):
    t0 = time.perf_counter()
    configs = [
        THEORY,
        GaussianTwoClassConfig(dim=3, sigma=0.5, n=200),
        GaussianTwoClassConfig(dim=20, sigma=0.3, n=500, delta=0.1),
        GaussianTwoClassConfig(dim=5, sigma=1.0, n=300, B=1.0),
        GaussianTwoClassConfig(dim=2, sigma=0.05, n=1000, delta=0.4, B=2.0),
    ]
    worst = 0.0
    for i, cfg in enumerate(configs):
        X, _, y_obs, _ = sample_gaussian_dataset(cfg, i)
        rng = np.random.default_rng(100 + i)
        for _ in range(10):
            theta = rng.normal(0, 1.0, cfg.dim)
            numeric = central_difference(lambda th: mean_loss(th, X, y_obs, cfg.B), theta, h=1e-5)
            worst = max(worst, relative_error(loss_gradient(theta, X, y_obs, cfg.B), numeric))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 10
    criterion(2, "gradient vs finite differences", ok, f"max relative error {worst:.2e}, {elapsed:.2f}s")
    assert ok


def _theory_runs(seeds):
    for seed in seeds:
        X, _, y_obs, clean = sample_gaussian_dataset(THEORY, seed)
        yield logistic_train(X, y_obs, THEORY, clean)


def test_alignment_after_one_epoch(criterion):
    t0 = time.perf_counter()
    values = [alignment(run.theta_trajectory[1], THEORY.v) for run in _theory_runs(range(20))]
    hits = sum(a >= 0.95 for a in values)
    elapsed = time.perf_counter() - t0
    ok = hits >= 19 and elapsed < 30
    criterion(3, "alignment after one epoch", ok, f"{hits}/20 seeds >= 0.95, min {min(values):.5f}, {elapsed:.2f}s")
    assert ok


def test_loss_gap_bound(criterion):
    t0 = time.perf_counter()
    good = 0
    worst = math.inf
    for run in _theory_runs(range(20)):
        gap = run.mean_noisy_loss - run.mean_clean_loss
        bound = np.array([loss_gap_bound(th, THEORY.v, THEORY.sigma) for th in run.theta_trajectory])
        positive = bound > 0
        margins = gap[positive] - (bound[positive] - 0.05)
        if margins.size:
            worst = min(worst, float(margins.min()))
        good += bool(np.all(margins >= 0))
    elapsed = time.perf_counter() - t0
    ok = good >= 19 and elapsed < 60
    criterion(4, "loss gap above bound - 0.05", ok, f"{good}/20 seeds, tightest margin {worst:.4f}, {elapsed:.2f}s")
    assert ok


def test_end_to_end_detection(criterion):
    t0 = time.perf_counter()
    grid = GridConfig(theory=THEORY)
    ctrl, baseline = [], []
    for seed in range(10):
        recs = {r["method"]: r for r in run_synthetic_cell(0.2, 0.0, seed, grid)}
        ctrl.append(recs["ctrl"]["mask_accuracy"])
        baseline.append(recs["no_clean"]["mask_accuracy"])
    elapsed = time.perf_counter() - t0
    mean = float(np.mean(ctrl))
    ok = mean >= 0.98 and all(c > 0.80 for c in ctrl) and all(c > b for c, b in zip(ctrl, baseline)) and elapsed < 300
    criterion(5, "end-to-end synthetic detection", ok,
              f"mean {mean:.4f}, min {min(ctrl):.4f}, baseline mean {np.mean(baseline):.4f}, {elapsed:.1f}s")
    assert ok


def test_kmeans_oracle_equivalence(criterion):
    t0 = time.perf_counter()
    hits, misses = 0, []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(3, 9))
        X = rng.random((m, 2))
        res = kmeans(X, 2, seed=seed)
        best, _ = brute_force_kmeans2(X)
        if abs(res.inertia - best) <= 1e-9 * max(best, 1e-12):
            hits += 1
        else:
            misses.append((seed, m, res.inertia, best))
    for seed, m, got, best in misses:
        print(f"  k-means miss: seed {seed}, m={m}, WCSS {got:.6g} vs optimum {best:.6g}")
    elapsed = time.perf_counter() - t0
    ok = hits >= 95 and elapsed < 10
    criterion(6, "k-means attains brute-force WCSS", ok, f"{hits}/100, {len(misses)} misses logged, {elapsed:.2f}s")
    assert ok


def test_noise_matrix_invariants(criterion):
    t0 = time.perf_counter()
    failures = []
    accepted = 0
    for C, noise, sparsity in itertools.product((4, 10, 26), (0.1, 0.2), (0.0, 0.3, 0.6)):
        if measure_noise_level(gen_symmetric(C, noise)) != noise:
            failures.append(("symmetric", C, noise))
        T = gen_asymmetric(C, noise, sparsity, seed=C * 100 + int(noise * 10) + int(sparsity * 10))
        validate_transition_matrix(T)
        accepted += 1
        if abs(measure_noise_level(T) - noise) > 0.005:
            failures.append(("noise", C, noise, sparsity))
        if abs(measure_sparsity(T) - sparsity) > 1 / (C * (C - 1)):
            failures.append(("sparsity", C, noise, sparsity))
    rejected = 0
    for C, noise, sparsity in ((2, 0.1, 0.3), (4, 0.8, 0.0), (4, 0.1, 0.8), (3, 0.2, 0.6)):
        with pytest.raises(ValueError):
            gen_asymmetric(C, noise, sparsity, seed=0)
        rejected += 1
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 5
    criterion(7, "noise-matrix invariants", ok,
              f"{accepted} sweep points within tolerance, {rejected} infeasible rejected, {elapsed:.2f}s")
    assert ok, failures


def test_cleaning_benefit(criterion):
    t0 = time.perf_counter()
    grid = GridConfig(theory=THEORY)
    wins = ties = 0
    for seed in range(10):
        recs = {r["method"]: r for r in run_synthetic_cell(0.2, 0.0, seed, grid)}
        c, b = recs["ctrl"]["test_accuracy"], recs["no_clean"]["test_accuracy"]
        wins += c >= b
        ties += c == b
    elapsed = time.perf_counter() - t0
    ok = wins >= 9 and elapsed < 120
    criterion(8, "pruned retraining >= no-clean retraining", ok,
              f"{wins}/10 seeds ({ties} ties), {elapsed:.1f}s")
    assert ok


def _cli(args, workdir, threads, workers):
    env = dict(os.environ, OMP_NUM_THREADS=str(threads), OPENBLAS_NUM_THREADS=str(threads),
               MKL_NUM_THREADS=str(threads))
    cmd = [sys.executable, "-m", "ctrl_detect", *args, "--workers", str(workers), "--seed", "11"]
    proc = subprocess.run(cmd, cwd=workdir, env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


def _pipeline(root, threads, workers):
    root.mkdir()
    theory = ["--n", "300", "--sigma", "0.5", "--epochs", "12"]
    steps = [
        ["simulate", "--classes", "5", "--noise", "0.2", "--sparsity", "0.3", "--n", "500", "--out-dir", "sim"],
        ["theory", *theory, "--out-dir", "runs/r0"],
        ["detect", "--losses", "runs/r0/losses.csv", "--labels", "runs/r0/labels.csv",
         "--predictions", "runs/r0/predictions.csv", "--alpha", "1", "--subsample", "uniform:2", "--out-dir", "runs/r0"],
        ["clean", "--labels", "runs/r0/labels.csv", "--mask", "runs/r0/mask.csv", "--features", "runs/r0/features.csv",
         "--predictions", "runs/r0/predictions.csv", "--policy", "static_replace", "--out-dir", "cleaned"],
        ["evaluate", "--in-dir", "runs", "--n-test", "500", "--out-dir", "eval"],
        ["evaluate", "--synthetic", "--noise-levels", "0.1", "0.2", "--seeds", "0", "1", *theory,
         "--n-test", "500", "--out-dir", "synth"],
        ["report", "--in-dir", ".", "--out-dir", "merged"],
    ]
    for step in steps:
        _cli(step, root, threads, workers)
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_cli_determinism(criterion, tmp_path):
    t0 = time.perf_counter()
    a = _pipeline(tmp_path / "serial", threads=1, workers=1)
    b = _pipeline(tmp_path / "parallel", threads=4, workers=4)
    c = _pipeline(tmp_path / "rerun", threads=1, workers=1)
    differing = sorted(str(k) for k in set(a) | set(b) | set(c) if not (a.get(k) == b.get(k) == c.get(k)))
    elapsed = time.perf_counter() - t0
    ok = not differing and len(a) >= 15
    criterion(9, "CLI byte-identical across reruns and parallelism", ok,
              f"{len(a)} files compared, {len(differing)} differ, {elapsed:.1f}s")
    assert ok, differing
