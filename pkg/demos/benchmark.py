"""Run the bundled benchmark for a few seeds and print the model table.

Each seed simulates one year of clean digital-twin operation plus ~15.5
months of biased, noisy "real" operation with 20 injected fault events,
trains every detector on the twin windows (plus 10 labeled real anomalies
for the weakly-supervised ones), and evaluates on the held-out real test
split.

Run:  python3 demos/benchmark.py [--seeds 0,1,2] [--out-dir runs/bench]
Takes roughly half a minute per seed.
"""

import argparse
import time

from twinguard.harness import ExperimentConfig, aggregate_reports, run_experiment


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", default="0,1,2")
    parser.add_argument("--out-dir", default=None,
                        help="also write results.csv / timings.json there")
    args = parser.parse_args()
    seeds = tuple(int(s) for s in args.seeds.split(","))

    config = ExperimentConfig(seeds=seeds)
    t0 = time.time()
    reports, _ = run_experiment(config, out_dir=args.out_dir)
    print(f"{len(seeds)} seed(s) in {time.time() - t0:.0f} s\n")

    agg = aggregate_reports(reports)
    print(f"{'model':10s} {'AP':>14s} {'AUC-ROC':>14s} {'F2@25%':>14s}")
    for model in config.models:
        cells = [
            f"{agg[model][m]['mean']:.3f} ±{agg[model][m]['sd']:.3f}"
            for m in ("ap", "auc_roc", "f2")
        ]
        print(f"{model:10s} {cells[0]:>14s} {cells[1]:>14s} {cells[2]:>14s}")


if __name__ == "__main__":
    main()
