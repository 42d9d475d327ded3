"""Tail-sup decay of |S(n)|/phi(n) for i.i.d. SaS fields, theorem normalizer vs
under-normalized control, across several alpha.

    python3 scripts/slln_decay.py --replicates 32 --n-max 1024
"""

import argparse

import numpy as np

from sllnlab.fields import FieldGenerator
from sllnlab.harness import SllnExperiment, run_slln
from sllnlab.scaling import power, power_log


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--alphas", type=float, nargs="*", default=[1.2, 1.5, 1.8])
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--eps", type=float, default=0.5)
    ap.add_argument("--n-max", type=int, default=1024)
    ap.add_argument("--replicates", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    cps = tuple(2**k for k in range(4, int(np.log2(args.n_max)) + 1))
    print("alpha,normalizer,checkpoint,median_T,p90_T")
    for alpha in args.alphas:
        gen = FieldGenerator("iid_sas", args.d, alpha=alpha)
        kw = dict(checkpoints=cps, replicates=args.replicates, seed=args.seed, theorem_mode=False, threads=args.threads)
        for label, phi, neg in (
            ("theorem", power_log(1 / alpha, 1 / alpha + args.eps), False),
            ("control", power(1 / (2 * alpha)), True),
        ):
            res = run_slln(SllnExperiment(gen, "rect", (phi,), negative_control=neg, **kw))
            for c, m, q in zip(res.checkpoints, res.median, res.p90):
                print(f"{alpha:g},{label},{c},{m:.6g},{q:.6g}")


if __name__ == "__main__":
    main()
