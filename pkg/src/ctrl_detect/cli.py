"""ctrl-detect: stage-separated command line.

    simulate   transition matrix + noisy labels from true labels
    theory     two-class Gaussian run -> loss matrix and summary
    detect     loss matrix + labels -> mask and candidate scores
    clean      mask -> cleaned dataset CSV with provenance
    evaluate   per-seed artifacts (or a synthetic sweep) -> records
    report     merge records -> report.json / report.csv

Every command takes --seed, --out-dir and --config (a JSON object whose keys
are option names, e.g. {"noise": 0.2}); explicit flags win over the config.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .cleaning import POLICY_KINDS, LabeledDataset, RetrainPolicy, prune, provenance, static_replace, write_cleaned_csv
from .evaluation import ExperimentReport, GridConfig, evaluate_run_dir, find_run_dirs, run_experiment_grid, seed_streams
from .exceptions import SchemaError
from .loss_matrix import LossMatrix, SubsampleStrategy, last_loss, preprocess
from .mask_engine import STANDARD_GRID, select_best_mask
from .noise_sim import flip_labels, gen_asymmetric, gen_symmetric, measure_noise_level, measure_sparsity
from .theory import GaussianTwoClassConfig, logistic_train, predict, run_summary, sample_gaussian_dataset

log = logging.getLogger("ctrl_detect")

CLI_SUBSAMPLE_RATIOS = (1, 2, 4, 8, 16)


class CommandError(Exception):
    pass


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) in (None, "")]
    if missing:
        raise CommandError(f"missing required option(s): {', '.join(missing)}")


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _subsample_arg(text):
    try:
        strategy = SubsampleStrategy.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))
    if strategy.ratio not in CLI_SUBSAMPLE_RATIOS:
        raise argparse.ArgumentTypeError(f"ratio must be one of {CLI_SUBSAMPLE_RATIOS}")
    return strategy


def _params_arg(text):
    try:
        k, s, w, t = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected k,s,w,t (four integers)")
    return (k, s, w, t)


def _theory_config(args):
    return GaussianTwoClassConfig(
        dim=args.dim, sigma=args.sigma, n=args.n, delta=args.delta,
        B=args.B, eta=args.eta, epochs=args.epochs,
    )


# --- commands ---------------------------------------------------------------


def cmd_simulate(args):
    out = _out_dir(args)
    matrix_seed, flip_seed = seed_streams(args.seed, 2)
    if args.true_labels:
        y = io.read_int_vector(args.true_labels)
        C = args.classes if args.classes else int(y.max()) + 1
    else:
        if not args.classes:
            raise CommandError("--classes is required when --true-labels is not given")
        C = args.classes
        y = np.arange(args.n) % C
    if args.symmetric:
        if args.sparsity:
            raise CommandError("--symmetric noise has no zero off-diagonal entries; drop --sparsity")
        T = gen_symmetric(C, args.noise)
    else:
        T = gen_asymmetric(C, args.noise, args.sparsity, matrix_seed)
    observed, clean = flip_labels(y, T, flip_seed)

    io.write_matrix(out / "transition_matrix.csv", T)
    io.write_int_vector(out / "true_labels.csv", y)
    io.write_int_vector(out / "labels.csv", observed)
    io.write_int_vector(out / "clean.csv", clean)
    summary = {
        "classes": C, "noise_level": args.noise, "sparsity": args.sparsity, "symmetric": args.symmetric,
        "measured_noise": measure_noise_level(T), "measured_sparsity": measure_sparsity(T),
        "empirical_flip_fraction": float(1 - clean.mean()), "n": int(y.size), "seed": args.seed,
    }
    io.write_json(out / "noise_summary.json", summary)
    print(f"measured noise level {summary['measured_noise']:.6f}  sparsity {summary['measured_sparsity']:.6f}  "
          f"flipped {summary['empirical_flip_fraction']:.4f} of {y.size}")


def cmd_theory(args):
    out = _out_dir(args)
    cfg = _theory_config(args)
    data_seed = seed_streams(args.seed, 3)[0]
    X, y, y_obs, clean = sample_gaussian_dataset(cfg, data_seed)
    run = logistic_train(X, y_obs, cfg, clean)
    run.loss_matrix.to_csv(out / "losses.csv")
    io.write_matrix(out / "features.csv", X)
    io.write_int_vector(out / "labels.csv", (y_obs + 1) // 2)
    io.write_int_vector(out / "true_labels.csv", (y + 1) // 2)
    io.write_int_vector(out / "clean.csv", clean)
    io.write_int_vector(out / "predictions.csv", (predict(run.theta_final, X) + 1) // 2)
    summary = run_summary(run)
    summary["seed"] = args.seed
    io.write_json(out / "summary.json", summary)
    a1 = summary["alignment"][1] if len(summary["alignment"]) > 1 else None
    print(f"n={cfg.n} noisy={summary['n_noisy']} epochs={cfg.epochs} "
          f"alignment[1]={'n/a' if a1 is None else f'{a1:.6f}'}")


def cmd_detect(args):
    _require(args, "losses", "labels")
    out = _out_dir(args)
    L = LossMatrix.from_csv(args.losses)
    labels = io.read_int_vector(args.labels)
    if labels.size != L.n_samples:
        raise SchemaError(f"{args.labels}: {labels.size} labels but {L.n_samples} loss rows")
    preds = None
    if args.predictions:
        preds = io.read_int_vector(args.predictions)
        if preds.size != L.n_samples:
            raise SchemaError(f"{args.predictions}: {preds.size} predictions but {L.n_samples} loss rows")
    elif args.alpha > 0:
        raise CommandError("--alpha > 0 needs --predictions (first-round model predictions)")
    num_classes = args.num_classes or max(2, int(labels.max()) + 1)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise SchemaError(f"{args.labels}: labels must lie in [0, {num_classes})")

    processed, smoothed = preprocess(L, num_classes, args.moving_average, args.subsample)
    grid = (args.params,) if args.params else STANDARD_GRID
    best = select_best_mask(
        processed, labels, preds, args.alpha, args.seed, grid=grid, a=args.moving_average,
        last_losses=last_loss(smoothed), clusterer=args.clusterer, workers=args.workers,
    )
    io.write_int_vector(out / "mask.csv", best.mask)
    if processed is not smoothed:
        io.write_int_row(out / "epochs.csv", processed.epoch_indices)
    records = []
    for c in best.candidates:
        rec = c.record()
        rec["selected"] = (c.k, c.s, c.w, c.t) == best.params.grid_key()
        records.append(rec)
    io.write_json(out / "candidates.json", records)
    p = best.params
    print(f"selected k={p.k} s={p.s} w={p.w} t={p.t} score={best.score:.6f} "
          f"noisy={int((best.mask == 0).sum())}/{best.mask.size}")


def cmd_clean(args):
    _require(args, "labels", "mask")
    out = _out_dir(args)
    labels = io.read_int_vector(args.labels)
    mask = io.read_int_vector(args.mask)
    if mask.size != labels.size:
        raise SchemaError(f"{args.mask}: {mask.size} rows but {labels.size} labels")
    features = io.read_matrix(args.features) if args.features else None
    if features is not None and features.shape[0] != labels.size:
        raise SchemaError(f"{args.features}: {features.shape[0]} rows but {labels.size} labels")
    ds = LabeledDataset(np.zeros((labels.size, 0)) if features is None else features, labels)

    if args.policy == "prune":
        kept = prune(ds, mask)
        print(f"kept {len(kept)} of {len(ds)} samples")
        new_labels = labels
    elif args.policy == "static_replace":
        if not args.predictions:
            raise CommandError("--policy static_replace needs --predictions")
        preds = io.read_int_vector(args.predictions)
        new_labels = static_replace(ds, mask, preds).observed_labels
        print(f"replaced {int((mask == 0).sum())} of {len(ds)} labels")
    else:
        raise CommandError("dynamic_replace is a per-epoch training schedule, not a dataset file; "
                           "use ctrl_detect.cleaning.dynamic_replace_schedule")
    write_cleaned_csv(out / "cleaned.csv", new_labels, provenance(mask, args.policy), features)


def cmd_evaluate(args):
    out = _out_dir(args)
    if args.synthetic:
        grid = GridConfig(
            noise_levels=tuple(args.noise_levels), sparsity_levels=tuple(args.sparsity_levels),
            seeds=tuple(args.seeds) if args.seeds else (args.seed,), theory=_theory_config(args),
            alpha=args.alpha, a=args.moving_average, subsample=args.subsample,
            clusterer=args.clusterer, policy=RetrainPolicy(args.policy), n_test=args.n_test,
            workers=args.workers, record_runtime=args.timings,
        )
        report = run_experiment_grid(grid)
    else:
        if not args.in_dir:
            raise CommandError("give --in-dir with per-seed artifacts, or --synthetic")
        report = ExperimentReport()
        problems = []
        for run_dir in find_run_dirs(args.in_dir):
            try:
                report.records.extend(evaluate_run_dir(run_dir, n_test=args.n_test, seed=args.seed))
            except SchemaError as exc:
                problems.append(str(exc))
        if problems:
            raise SchemaError("; ".join(problems))
    report.write(out)
    for row in report.aggregates():
        print(f"noise={row['noise_level']} sparsity={row['sparsity']} {row['method']:>8}: "
              f"mask_acc={row['mask_accuracy_mean']:.4f} test_acc={row['test_accuracy_mean']:.4f} "
              f"(n={row['n_seeds']})")
    if report.failures:
        print(f"{len(report.failures)} cell(s) failed; see report.json", file=sys.stderr)


def cmd_report(args):
    _require(args, "in_dir")
    out = _out_dir(args)
    root = Path(args.in_dir)
    if not root.is_dir():
        raise SchemaError(f"{root}: not a directory")
    own = (out / "report.json").resolve()
    sources = sorted(p for p in root.rglob("report.json") if p.resolve() != own)
    if not sources:
        raise SchemaError(f"{root}: no report.json files found")
    merged = ExperimentReport()
    for path in sources:
        merged.extend(ExperimentReport.from_json(path))
    merged.write(out)
    print(f"merged {len(sources)} report(s), {len(merged.records)} record(s)")


# --- parser -----------------------------------------------------------------


def _add_theory_flags(p):
    d = GaussianTwoClassConfig()
    p.add_argument("--dim", type=int, default=d.dim)
    p.add_argument("--sigma", type=float, default=d.sigma)
    p.add_argument("--n", type=int, default=d.n)
    p.add_argument("--delta", type=float, default=d.delta)
    p.add_argument("--B", type=float, default=d.B, help="per-sample loss clamp")
    p.add_argument("--eta", type=float, default=d.eta)
    p.add_argument("--epochs", type=int, default=d.epochs)


def _add_detect_flags(p):
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--moving-average", type=int, default=5)
    p.add_argument("--subsample", type=_subsample_arg, default=None, metavar="KIND:RATIO")
    p.add_argument("--clusterer", choices=("kmeans", "gmm"), default="kmeans")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=".")
    common.add_argument("--config", default=None, help="JSON file of option defaults")
    common.add_argument("--workers", type=int, default=1, help="threads for independent jobs")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ctrl-detect", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="inject label noise")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--sparsity", type=float, default=0.0)
    p.add_argument("--symmetric", action="store_true")
    p.add_argument("--true-labels", default=None, help="CSV of true class ids")
    p.add_argument("--n", type=int, default=1000, help="samples when generating balanced labels")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("theory", parents=[common], help="two-class Gaussian training run")
    _add_theory_flags(p)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("detect", parents=[common], help="compute the mask")
    p.add_argument("--losses", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--predictions", default=None)
    p.add_argument("--num-classes", type=int, default=None)
    p.add_argument("--params", type=_params_arg, default=None, metavar="K,S,W,T",
                   help="evaluate one setting instead of the 18-candidate grid")
    _add_detect_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("clean", parents=[common], help="apply a mask")
    p.add_argument("--labels", default=None)
    p.add_argument("--mask", default=None)
    p.add_argument("--features", default=None)
    p.add_argument("--predictions", default=None)
    p.add_argument("--policy", choices=POLICY_KINDS, default="prune")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("evaluate", parents=[common], help="score per-seed runs or a synthetic sweep")
    p.add_argument("--in-dir", default=None)
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--noise-levels", type=float, nargs="+", default=[0.1, 0.2])
    p.add_argument("--sparsity-levels", type=float, nargs="+", default=[0.0])
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.add_argument("--policy", choices=POLICY_KINDS, default="prune")
    p.add_argument("--n-test", type=int, default=2000)
    p.add_argument("--timings", action="store_true", help="record wall-clock runtime (not reproducible)")
    _add_theory_flags(p)
    _add_detect_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", parents=[common], help="merge report.json files")
    p.add_argument("--in-dir", default=None)
    p.set_defaults(func=cmd_report)
    return parser, sub


def parse_args(argv=None):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"--config: {exc}")
        if not isinstance(cfg, dict):
            parser.error("--config must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        known = vars(args)
        unknown = sorted(set(cfg) - set(known))
        if unknown:
            parser.error(f"--config: unknown option(s) {', '.join(unknown)}")
        sub.choices[args.command].set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CommandError, ValueError, RuntimeError, OSError) as exc:
        print(f"ctrl-detect {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
