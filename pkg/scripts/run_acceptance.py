"""Run the acceptance criteria and write a CSV of verdicts.

    python3 scripts/run_acceptance.py --only 1 3 4 --out acceptance.csv
"""

import argparse
import sys

from sllnlab import acceptance


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--only", type=int, nargs="*", default=None)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    res = acceptance.run_suite(args.seed, args.threads, only=args.only, log=lambda s: print(s, flush=True))
    if args.out:
        with open(args.out, "w") as f:
            f.write(acceptance.results_csv(res))
    failed = [r.number for r in res if not r.passed]
    print(f"{len(res) - len(failed)}/{len(res)} passed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
