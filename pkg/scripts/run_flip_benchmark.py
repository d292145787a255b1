"""Label-flip benchmark: cumulative mistakes of the three step-size rules.

Runs the base-2 logistic / clip-decoder learner for each flip count and
writes per-trial traces plus a summary table under ``--out``.

    python scripts/run_flip_benchmark.py --out runs/flip
"""

import argparse
import os
import time

from nsosp import harness

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=os.path.join(HERE, "configs", "flip_logistic.cfg"))
    parser.add_argument("--flips", default="1,10,100")
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--trials", type=int, default=None)
    args = parser.parse_args()

    overrides = {k: v for k, v in (("seed", args.seed), ("trials", args.trials)) if v is not None}
    start = time.perf_counter()
    for flips in (int(f) for f in args.flips.split(",")):
        out = os.path.join(args.out, f"flips{flips}") if args.out else None
        cfg = harness.load_config(args.config, flips=flips, out=out, **overrides)
        result = harness.run_experiment(cfg)
        print(f"flips = {flips}")
        print(result.format_summary())
        print()
    print(f"total time {time.perf_counter() - start:.1f} s")


if __name__ == "__main__":
    main()
