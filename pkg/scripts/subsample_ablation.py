"""Effect of epoch subsampling and the score exponent on mask accuracy.

For each (strategy, ratio) and alpha, runs detection on the same recorded loss
matrices and prints mean mask accuracy over seeds.
"""
import argparse
from dataclasses import replace

import numpy as np

from ctrl_detect.evaluation import mask_accuracy, seed_streams
from ctrl_detect.loss_matrix import SubsampleStrategy, last_loss, preprocess
from ctrl_detect.mask_engine import ALPHA_SWEEP, select_best_mask
from ctrl_detect.theory import GaussianTwoClassConfig, logistic_train, predict, sample_gaussian_dataset

STRATEGIES = [None] + [SubsampleStrategy(kind, r) for kind in ("uniform", "middle", "variance") for r in (2, 4, 8, 16)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--sigma", type=float, default=0.6)
    ap.add_argument("--delta", type=float, default=0.3)
    ap.add_argument("--epochs", type=int, default=64)
    ap.add_argument("--n", type=int, default=1000)
    args = ap.parse_args()

    cfg = replace(GaussianTwoClassConfig(), sigma=args.sigma, delta=args.delta, epochs=args.epochs, n=args.n)
    runs = []
    for seed in range(args.seeds):
        data_seed, _, detect_seed = seed_streams(seed, 3)
        X, _, y_obs, clean = sample_gaussian_dataset(cfg, data_seed)
        run = logistic_train(X, y_obs, cfg, clean)
        runs.append((run, (y_obs + 1) // 2, (predict(run.theta_final, X) + 1) // 2, clean, detect_seed))

    print(f"{'strategy':<14}" + "".join(f"{'a=' + str(a):>10}" for a in ALPHA_SWEEP))
    for strat in STRATEGIES:
        name = "full" if strat is None else f"{strat.kind} {strat.ratio}x"
        cells = []
        for alpha in ALPHA_SWEEP:
            accs = []
            for run, labels, preds, clean, detect_seed in runs:
                processed, smoothed = preprocess(run.loss_matrix, 2, 5, strat)
                best = select_best_mask(processed, labels, preds, alpha, detect_seed, last_losses=last_loss(smoothed))
                accs.append(mask_accuracy(best.mask, clean))
            cells.append(f"{100 * np.mean(accs):10.1f}")
        print(f"{name:<14}" + "".join(cells))


if __name__ == "__main__":
    main()
