"""Run every adversary strategy against one application and report outcomes.

    python3 scripts/adversary_matrix.py matmul --m 32 --n 4 --beta 0.05
    python3 scripts/adversary_matrix.py mergesort --m 1024 --n 16 --beta 0.1 --trials 20

Each row is one strategy: how many runs terminated, whether every
terminated output matched the oracle, worst round count, and the mean
total work.  The point of the exercise is the `ok` column staying "yes"
no matter what the workers try.
"""

import argparse
import sys

from supsim.adversary import builtin_strategies
from supsim.harness import ExperimentConfig, run_experiment


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("app", choices=["path", "dag", "matmul", "mergesort"])
    ap.add_argument("--m", type=int, default=32)
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--tau", type=int, default=8)
    ap.add_argument("--beta", type=float, default=0.05)
    ap.add_argument("--trials", type=int, default=10)
    args = ap.parse_args()

    print(f"{args.app} m={args.m} n={args.n} beta={args.beta}, {args.trials} seeds")
    header = f"{'strategy':<16} {'done':>6} {'ok':>4} {'max rounds':>11} {'mean comp':>11} {'mean comm':>11}"
    print(header)
    print("-" * len(header))
    clean = True
    for strat in sorted(builtin_strategies()):
        cfg = ExperimentConfig(
            app=args.app, n=args.n, m=args.m, tau=args.tau, beta=args.beta,
            strategy=strat, seeds=tuple(range(args.trials)),
        )
        batch = run_experiment(cfg)
        s = batch.summary
        ok = s["all_outputs_correct"]
        clean = clean and ok and s["all_terminated"]
        print(
            f"{strat:<16} {sum(t['terminated'] for t in batch.trials):>6} "
            f"{'yes' if ok else 'NO':>4} {s['max_rounds']:>11} "
            f"{s['mean_comp_total']:>11.0f} {s['mean_comm_total']:>11.0f}"
        )
    return 0 if clean else 1


if __name__ == "__main__":
    sys.exit(main())
