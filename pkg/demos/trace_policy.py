"""Train one network and write a frame-by-frame game trace of its greedy policy.

    python demos/trace_policy.py --seed 2 --column 5 --out trace.csv
"""
import argparse

import numpy as np

from pongsnn.config import ExperimentConfig, apply_overrides
from pongsnn.experiment import run_experiment
from pongsnn.pong import evaluate_catch_fraction, play, write_game_trace


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--column", type=int, default=5, help="launch column of the traced ball")
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--out", default="trace.csv")
    args = ap.parse_args()

    cfg = apply_overrides(ExperimentConfig(), {"seed": str(args.seed),
                                               "n_iterations": str(args.iterations)})
    result = run_experiment(cfg)
    policy = result.metrics.final_policy
    field = cfg.env.field()
    states = play(policy, args.column, field)
    write_game_trace(args.out, states)
    hits = np.array(policy) == np.arange(len(policy))
    print(f"policy: {policy}")
    print(f"exact on {hits.sum()}/{len(policy)} columns, "
          f"catch fraction {evaluate_catch_fraction(policy, field):.3f}")
    print(f"trace of column {args.column} written to {args.out}")


if __name__ == "__main__":
    main()
