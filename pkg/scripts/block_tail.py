"""Block tail probabilities of the LFSS sheet against the fitted bounds.

    python3 scripts/block_tail.py --blocks 1 2 3 4 5 6 --replicates 4000
"""

import argparse
import json

from sllnlab.harness import run_lfss_block_tail
from sllnlab.stable import LfssConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--hurst", type=float, nargs="*", default=[0.8])
    ap.add_argument("--alpha", type=float, default=1.5)
    ap.add_argument("--eta", type=float, default=1.0)
    ap.add_argument("--gamma", type=float, default=1.4)
    ap.add_argument("--eps", type=float, default=1.0)
    ap.add_argument("--blocks", type=int, nargs="*", default=[1, 2, 3, 4, 5, 6])
    ap.add_argument("--refinement", type=int, default=2)
    ap.add_argument("--replicates", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    cfg = LfssConfig(tuple(args.hurst), args.alpha, h=0.25, L=4.0)
    rep = run_lfss_block_tail(
        cfg, args.eta, args.gamma, args.eps, args.blocks, args.replicates, args.seed,
        refinement=args.refinement, threads=args.threads,
    )
    print(rep.to_csv(), end="")
    print(json.dumps(rep.summary(), indent=2))


if __name__ == "__main__":
    main()
