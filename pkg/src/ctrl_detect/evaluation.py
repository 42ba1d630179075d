"""Mask accuracy, balanced-class accuracy and multi-seed experiment reports."""
from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import asdict, dataclass, field, replace
import logging
import math
from pathlib import Path
import time
import warnings

import numpy as np

from . import io
from .cleaning import RetrainPolicy, retrain_logistic
from .exceptions import SchemaError
from .loss_matrix import SubsampleStrategy, last_loss, preprocess
from .mask_engine import select_best_mask
from .noise_sim import gen_asymmetric
from .theory import GaussianTwoClassConfig, logistic_train, predict, sample_gaussian_dataset

log = logging.getLogger(__name__)

METHODS = ("no_clean", "ctrl")
CSV_COLUMNS = (
    "noise_level", "sparsity", "method", "n_seeds",
    "mask_accuracy_mean", "mask_accuracy_std", "test_accuracy_mean", "test_accuracy_std",
)


def mask_accuracy(mask, clean_indicator):
    mask = np.asarray(mask)
    clean_indicator = np.asarray(clean_indicator)
    if mask.shape != clean_indicator.shape:
        raise ValueError(f"mask length {mask.shape} != indicator length {clean_indicator.shape}")
    return float(np.mean(mask == clean_indicator))


def balanced_accuracy(predictions, true_labels, classes=None):
    """Unweighted mean of per-class recall.

    Classes listed in ``classes`` but absent from ``true_labels`` are skipped
    with a warning.
    """
    predictions = np.asarray(predictions)
    true_labels = np.asarray(true_labels)
    if predictions.shape != true_labels.shape:
        raise ValueError("predictions and true labels differ in length")
    present = np.unique(true_labels)
    if classes is None:
        classes = present
    recalls = []
    for c in classes:
        sel = true_labels == c
        if not sel.any():
            warnings.warn(f"class {c} has no samples in true_labels; excluded", stacklevel=2)
            continue
        recalls.append(float(np.mean(predictions[sel] == c)))
    if not recalls:
        raise ValueError("no evaluation classes present")
    return float(np.mean(recalls))


def _mean_std(values):
    vals = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    if not vals:
        return math.nan, math.nan
    mean = float(np.mean(vals))
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else math.nan
    return mean, std


@dataclass
class ExperimentReport:
    records: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def aggregates(self):
        groups = {}
        for r in self.records:
            groups.setdefault((r["noise_level"], r["sparsity"], r["method"]), []).append(r)
        out = []
        for (noise, sparsity, method), rs in groups.items():
            ma_mean, ma_std = _mean_std([r["mask_accuracy"] for r in rs])
            ta_mean, ta_std = _mean_std([r.get("test_accuracy") for r in rs])
            out.append({
                "noise_level": noise, "sparsity": sparsity, "method": method, "n_seeds": len(rs),
                "mask_accuracy_mean": ma_mean, "mask_accuracy_std": ma_std,
                "test_accuracy_mean": ta_mean, "test_accuracy_std": ta_std,
            })
        return out

    def to_dict(self):
        return {"records": self.records, "aggregates": self.aggregates(), "failures": self.failures}

    def write(self, out_dir, stem="report"):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        io.write_json(out_dir / f"{stem}.json", self.to_dict())
        with open(out_dir / f"{stem}.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in self.aggregates():
                writer.writerow(["" if _isnan(row[c]) else _fmt(row[c]) for c in CSV_COLUMNS])

    @classmethod
    def from_json(cls, path):
        data = io.read_json(path)
        if not isinstance(data, dict) or "records" not in data:
            raise SchemaError(f"{path}: expected an object with a 'records' list")
        return cls(list(data["records"]), list(data.get("failures", [])))

    def extend(self, other):
        self.records.extend(other.records)
        self.failures.extend(other.failures)


def _isnan(v):
    return v is None or (isinstance(v, float) and math.isnan(v))


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


@dataclass(frozen=True)
class GridConfig:
    """Synthetic sweep: noise levels x sparsity levels x seeds on the theory model."""

    noise_levels: tuple = (0.1, 0.2)
    sparsity_levels: tuple = (0.0,)
    seeds: tuple = (0, 1, 2)
    theory: GaussianTwoClassConfig = field(default_factory=GaussianTwoClassConfig)
    alpha: float = 0.0
    a: int = 5
    subsample: SubsampleStrategy = None
    clusterer: str = "kmeans"
    policy: RetrainPolicy = field(default_factory=RetrainPolicy)
    n_test: int = 2000
    workers: int = 1
    record_runtime: bool = False


def seed_streams(seed, n):
    """``n`` independent 63-bit seeds derived from one user seed.

    Stream 0 drives data sampling, 1 the test set, 2 the detection clustering.
    """
    state = np.random.SeedSequence(int(seed)).generate_state(n, dtype=np.uint64)
    return [int(s >> np.uint64(1)) for s in state]


def run_synthetic_cell(noise_level, sparsity, seed, grid):
    """Simulate, train, detect, clean, retrain and evaluate one (noise, sparsity, seed) cell.

    Returns one record per method.
    """
    t0 = time.perf_counter()
    if sparsity != 0:
        # binary data only supports symmetric noise; this raises with the reason
        gen_asymmetric(2, noise_level, sparsity, seed)
    cfg = replace(grid.theory, delta=noise_level)
    data_seed, test_seed, detect_seed = seed_streams(seed, 3)

    X, _, y_obs, clean = sample_gaussian_dataset(cfg, data_seed)
    run = logistic_train(X, y_obs, cfg, clean)
    labels01 = (y_obs + 1) // 2
    first_round = (predict(run.theta_final, X) + 1) // 2
    processed, smoothed = preprocess(run.loss_matrix, 2, grid.a, grid.subsample)
    best = select_best_mask(
        processed, labels01, first_round, grid.alpha, detect_seed,
        a=grid.a, last_losses=last_loss(smoothed), clusterer=grid.clusterer, workers=grid.workers,
    )

    Xt, yt, _, _ = sample_gaussian_dataset(replace(cfg, n=grid.n_test), test_seed)
    yt01 = (yt + 1) // 2
    masks = {"no_clean": np.ones(cfg.n, dtype=np.int64), "ctrl": best.mask}
    records = []
    for method in METHODS:
        mask = masks[method]
        policy = RetrainPolicy("prune") if method == "no_clean" else grid.policy
        theta = retrain_logistic(X, labels01, mask, cfg, policy, first_round)
        rec = {
            "noise_level": noise_level,
            "sparsity": sparsity,
            "seed": int(seed),
            "method": method,
            "mask_accuracy": mask_accuracy(mask, clean),
            "test_accuracy": balanced_accuracy((predict(theta, Xt) + 1) // 2, yt01),
            "params": None if method == "no_clean" else asdict(best.params),
            "runtime": None,
        }
        records.append(rec)
    if grid.record_runtime:
        elapsed = time.perf_counter() - t0
        for rec in records:
            rec["runtime"] = elapsed
    return records


def run_experiment_grid(grid):
    """Run every cell; a failing cell is logged in ``failures`` and the sweep continues."""
    cells = [(nl, sp, sd) for nl in grid.noise_levels for sp in grid.sparsity_levels for sd in grid.seeds]

    if grid.workers > 1:
        inner = replace(grid, workers=1)
        with ThreadPoolExecutor(max_workers=grid.workers) as pool:
            results = list(pool.map(lambda c: _run_cell(inner, c), cells))
    else:
        results = [_run_cell(grid, c) for c in cells]

    report = ExperimentReport()
    for recs, failure in results:
        if failure is not None:
            report.failures.append(failure)
        else:
            report.records.extend(recs)
    return report


def _run_cell(grid, cell):
    try:
        return run_synthetic_cell(*cell, grid), None
    except Exception as exc:  # noqa: BLE001 - per-cell isolation
        log.warning("cell %s failed: %s", cell, exc)
        return None, {"noise_level": cell[0], "sparsity": cell[1], "seed": cell[2],
                      "error": f"{type(exc).__name__}: {exc}"}


def find_run_dirs(root):
    """``root`` itself if it holds a mask file, else its sorted subdirectories that do."""
    root = Path(root)
    if not root.is_dir():
        raise SchemaError(f"{root}: not a directory")
    if (root / "mask.csv").exists():
        return [root]
    runs = sorted(p for p in root.iterdir() if p.is_dir() and (p / "mask.csv").exists())
    if not runs:
        raise SchemaError(f"{root}: no run directories with a mask.csv")
    return runs


REQUIRED_ARTIFACTS = ("mask.csv", "clean.csv")


def evaluate_run_dir(run_dir, *, n_test=2000, seed=0):
    """Per-seed records from files written by the ``theory``/``simulate`` and ``detect`` stages.

    Test accuracy is filled in only when the run came from the theory stage
    (``summary.json``, ``features.csv`` and ``labels.csv`` present).
    """
    run_dir = Path(run_dir)
    missing = [name for name in REQUIRED_ARTIFACTS if not (run_dir / name).exists()]
    if missing:
        raise SchemaError(f"{run_dir}: missing artifacts: {', '.join(missing)}")
    mask = io.read_int_vector(run_dir / "mask.csv")
    clean = io.read_int_vector(run_dir / "clean.csv")
    if mask.shape != clean.shape:
        raise SchemaError(f"{run_dir}: mask has {mask.size} rows but clean.csv has {clean.size}")

    noise_level, sparsity, run_seed = math.nan, 0.0, None
    cfg = None
    if (run_dir / "summary.json").exists():
        summary = io.read_json(run_dir / "summary.json")
        cfg_dict = dict(summary["config"])
        cfg_dict["direction"] = tuple(cfg_dict["direction"])
        cfg = GaussianTwoClassConfig(**cfg_dict)
        noise_level, run_seed = cfg.delta, summary.get("seed")
    elif (run_dir / "noise_summary.json").exists():
        ns = io.read_json(run_dir / "noise_summary.json")
        noise_level, sparsity, run_seed = ns["noise_level"], ns["sparsity"], ns.get("seed")

    params = None
    if (run_dir / "candidates.json").exists():
        for c in io.read_json(run_dir / "candidates.json"):
            if c.get("selected"):
                params = {k: c[k] for k in ("k", "s", "w", "t", "alpha")}

    test_acc = {}
    if cfg is not None and (run_dir / "features.csv").exists() and (run_dir / "labels.csv").exists():
        X = io.read_matrix(run_dir / "features.csv")
        labels01 = io.read_int_vector(run_dir / "labels.csv")
        test_seed = seed_streams(seed if run_seed is None else run_seed, 2)[1]
        Xt, yt, _, _ = sample_gaussian_dataset(replace(cfg, n=n_test), test_seed)
        for method, m in (("no_clean", np.ones_like(mask)), ("ctrl", mask)):
            theta = retrain_logistic(X, labels01, m, cfg)
            test_acc[method] = balanced_accuracy((predict(theta, Xt) + 1) // 2, (yt + 1) // 2)

    records = []
    for method, m in (("no_clean", np.ones_like(mask)), ("ctrl", mask)):
        records.append({
            "noise_level": noise_level,
            "sparsity": sparsity,
            "seed": run_seed,
            "run": run_dir.name,
            "method": method,
            "mask_accuracy": mask_accuracy(m, clean),
            "test_accuracy": test_acc.get(method),
            "params": None if method == "no_clean" else params,
            "runtime": None,
        })
    return records
