"""The HORN/HQA scenario of the acceptance suite, with a full report.

Generates an n-vertex instance, builds a k-level HORN store, runs a
rank-stratified benchmark and prints per-bucket medians and the stretch
summary.  Defaults reproduce the acceptance setting (n=2000, k=2, gamma=2).

    python3 scripts/horn_experiment.py --out /tmp/horn
"""

import argparse
import json
import time
import warnings
from collections import Counter
from pathlib import Path

from tdoracle.cli import run_bench
from tdoracle.flat import store_summary
from tdoracle.horn import preprocess_horn
from tdoracle.instance import GeneratorConfig, generate
from tdoracle.query import stretch_constants
from tdoracle.tuning import estimate_profile, tune_horn


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=2)
    ap.add_argument("--levels", type=int, default=2)
    ap.add_argument("--gamma", type=float, default=2.0)
    ap.add_argument("--delta", type=float, default=0.75)
    ap.add_argument("--beta", type=float, default=0.05)
    ap.add_argument("--xi", type=float, nargs="+", default=[0.15, 0.15])
    ap.add_argument("--eps", type=float, default=0.5)
    ap.add_argument("--queries", type=int, default=300)
    ap.add_argument("--out", help="directory for the report JSON")
    args = ap.parse_args()

    t0 = time.perf_counter()
    inst = generate(GeneratorConfig(n=args.n, seed=args.seed))
    prof = estimate_profile(inst, seed=0)
    print(f"instance n={inst.n} m={inst.m} T={inst.period:.3f} nu={prof.nu:.3f} "
          f"lam=[-{prof.lam_min:.3f},{prof.lam_max:.3f}] zeta={prof.zeta:.3f} ({time.perf_counter() - t0:.1f}s)")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        params = tune_horn(args.n, 0.5, prof.nu, args.gamma, args.levels, args.delta, args.beta, prof, args.eps,
                           xi=tuple(args.xi), floor_r=True)
    for w in caught:
        print(f"warning: {w.message}")
    t1 = time.perf_counter()
    store = preprocess_horn(inst, params, prof, seed=0)
    print(f"build {time.perf_counter() - t1:.1f}s  {store_summary(store)}")
    for rec in store.levels:
        print(f"  level {rec.level}: N={rec.N:.1f} rho={rec.rho:.4f} c={rec.c} F={rec.F} "
              f"landmarks={len(store.level_set(rec.level))}")

    rep = run_bench(store, args.queries, seed=9)
    sigma = stretch_constants(args.eps, prof.zeta, prof.lam_max, params.r).sigma
    st = [r["stretch"] for r in rep.records]
    ok = sum(s <= 1 + sigma for s in st)
    print(f"r={params.r} bound 1+sigma={1 + sigma:.4f}  within {ok}/{len(st)}  min {min(st):.4f}  max {max(st):.4f}")
    print(f"terminations {dict(Counter(r['termination'] for r in rep.records))}")
    for b in rep.buckets:
        print(f"  rank [{b['lo']:5d},{b['hi']:5d})  q={b['queries']:3d}  median settled {b['median_settled']:8.1f}"
              f"  max stretch {b['max_stretch']:.4f}")
    print(f"settled-count exponent {rep.exponent:.3f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "horn_bench.json").write_text(json.dumps(rep.to_dict(), indent=1))


if __name__ == "__main__":
    main()
