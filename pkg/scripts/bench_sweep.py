"""Build TRAPONLY and FLAT stores on generated instances and benchmark them.

Prints one line per (n, mode): build time, landmarks, breakpoints, TDD
calls, worst and median stretch, and the fitted settled-count exponent.

    python3 scripts/bench_sweep.py --sizes 300 500 1000 --queries 100
"""

import argparse
import time
import warnings

import numpy as np

from tdoracle.cli import run_bench
from tdoracle.flat import preprocess_flat, preprocess_traponly
from tdoracle.instance import GeneratorConfig, generate
from tdoracle.query import stretch_constants
from tdoracle.tuning import estimate_profile, tune_flat, tune_traponly


def params_for(mode, inst, prof, eps, alpha, delta, beta):
    psi = stretch_constants(eps, prof.zeta, prof.lam_max, 0).psi
    if mode == "flat":
        beta = min(beta, alpha * (1 + alpha) / (2 / prof.nu + alpha))
        return tune_flat(inst.n, alpha, prof.nu, eps, psi, delta, beta, floor_r=True)
    beta = min(beta, alpha * alpha * prof.nu)
    return tune_traponly(inst.n, alpha, prof.nu, eps, psi, delta, beta, floor_r=True)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[300, 500])
    ap.add_argument("--modes", nargs="+", default=["traponly", "flat"])
    ap.add_argument("--queries", type=int, default=100)
    ap.add_argument("--eps", type=float, default=0.5)
    ap.add_argument("--delta", type=float, default=0.66)
    ap.add_argument("--beta", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    alpha = 0.5

    print(f"{'n':>6} {'mode':9} {'build_s':>8} {'L':>4} {'bkpts':>9} {'calls':>7} {'max_st':>7} {'med_st':>7} {'bound':>7} {'exp':>6}")
    for n in args.sizes:
        inst = generate(GeneratorConfig(n=n, seed=args.seed, alpha=alpha))
        prof = estimate_profile(inst, seed=args.seed)
        for mode in args.modes:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                p = params_for(mode, inst, prof, args.eps, alpha, args.delta, args.beta)
            build = preprocess_flat if mode == "flat" else preprocess_traponly
            t0 = time.perf_counter()
            store = build(inst, p, prof, seed=args.seed)
            secs = time.perf_counter() - t0
            rep = run_bench(store, args.queries, args.seed)
            st = np.array([r["stretch"] for r in rep.records])
            bound = 1 + stretch_constants(args.eps, prof.zeta, prof.lam_max, p.r).sigma
            exp = f"{rep.exponent:6.3f}" if rep.exponent is not None else "     -"
            print(f"{n:6d} {mode:9} {secs:8.2f} {len(store.landmarks):4d} {store.total_breakpoints:9d} "
                  f"{store.total_calls:7d} {st.max():7.4f} {np.median(st):7.4f} {bound:7.3f} {exp}")


if __name__ == "__main__":
    main()
