"""Print the tuner outputs over a small grid of (alpha, nu, delta, beta).

    python3 scripts/tuning_table.py
    python3 scripts/tuning_table.py --n 1000000 --eps 0.25
"""

import argparse
import itertools
import warnings

from tdoracle.query import stretch_constants
from tdoracle.tuning import TuningError, tune_flat, tune_traponly


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=10**6)
    ap.add_argument("--eps", type=float, default=0.5)
    ap.add_argument("--zeta", type=float, default=1.2)
    ap.add_argument("--lam-max", type=float, default=0.2)
    args = ap.parse_args()

    psi = stretch_constants(args.eps, args.zeta, args.lam_max, 0).psi
    print(f"psi = {psi:.4f}")
    print(f"{'mode':9} {'alpha':>5} {'nu':>5} {'delta':>5} {'beta':>6} {'r':>3} {'omega':>7} {'theta':>7} {'1+sigma':>8}")
    grid = itertools.product((0.3, 0.5, 0.7), (0.6, 1.0), (0.75, 0.9), (0.01, 0.05))
    for alpha, nu, delta, beta in grid:
        if delta <= alpha:
            continue
        for tune in (tune_flat, tune_traponly):
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    p = tune(args.n, alpha, nu, args.eps, psi, delta, beta)
            except TuningError as e:
                print(f"{tune.__name__[5:]:9} {alpha:5.2f} {nu:5.2f} {delta:5.2f} {beta:6.3f}  -- {e}")
                continue
            s = stretch_constants(args.eps, args.zeta, args.lam_max, p.r).sigma
            print(f"{p.mode:9} {alpha:5.2f} {nu:5.2f} {delta:5.2f} {beta:6.3f} {p.r:3d} {p.omega:7.4f} {p.theta:7.4f} {1 + s:8.4f}")


if __name__ == "__main__":
    main()
