"""E|S(0; <2^n>)|^p for the LFSS increment field against C 2^(p n sum H).

    python3 scripts/moment_law.py --hurst 0.8 --alpha 1.5 --replicates 40000
"""

import argparse
import json
import warnings

from sllnlab.moments import HeavyTailWarning, lfss_moment_law
from sllnlab.stable import LfssConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--hurst", type=float, nargs="*", default=[0.8])
    ap.add_argument("--alpha", type=float, default=1.5)
    ap.add_argument("--p", type=float, default=1.0)
    ap.add_argument("--levels", type=int, nargs="*", default=[4, 5, 6, 7, 8, 9, 10])
    ap.add_argument("--shift", type=int, default=None)
    ap.add_argument("--replicates", type=int, default=40_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    cfg = LfssConfig(tuple(args.hurst), args.alpha)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HeavyTailWarning)
        rep = lfss_moment_law(cfg, 2, args.p, args.levels, args.replicates, args.seed, args.threads, shift=args.shift)
    print(rep.to_csv(), end="")
    print(json.dumps(rep.summary(), indent=2))


if __name__ == "__main__":
    main()
