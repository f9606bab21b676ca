"""Command-line driver: generate, profile, preprocess, query, bench, verify.

Machine-readable output goes to stdout as JSON lines, human summaries to
stderr.  Exit codes: 0 ok, 1 usage, 2 invariant violation, 3 I/O.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import instance as tdi
from .flat import preprocess_flat, preprocess_traponly, store_summary
from .horn import preprocess_horn
from .instance import FifoViolation, GeneratorConfig, TdiParseError, TdInstance
from .query import NoPathError, QueryResult, fca, hqa, rqa, rqa_plus, stretch_constants
from .store import (
    CorruptSummary,
    OracleStore,
    StoreFormatError,
    SummaryViolation,
    check_coverage,
    dumps as store_dumps,
    load_store,
    verify_store,
)
from .tdd import grow
from .trap import CellCapError, SlopeBoundError
from .tuning import MetricProfile, TuningError, TuningParams, estimate_profile, tune_flat, tune_horn, tune_traponly

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, EXIT_IO = 0, 1, 2, 3
ALGOS = ("tdd", "fca", "rqa", "rqa+", "hqa")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2, which we reserve
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- generate / profile


def load_config(path: str | None, overrides: dict) -> GeneratorConfig:
    raw = {}
    if path:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise UsageError("config must be a JSON object")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(GeneratorConfig)}
    unknown = set(raw) - known
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "k_range" in raw:
        raw["k_range"] = tuple(raw["k_range"])
    try:
        cfg = GeneratorConfig(**raw)
        cfg.validate()
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad config: {e}") from None
    return cfg


def cmd_generate(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed, "n": args.n})
    t0 = time.perf_counter()
    inst = tdi.generate(cfg)
    tdi.save(inst, args.out)
    _emit({"command": "generate", "out": str(args.out), "n": inst.n, "m": inst.m, "period": inst.period,
           "breakpoints": inst.breakpoint_total, "K_star": inst.k_star})
    _say(f"generated n={inst.n} m={inst.m} T={inst.period:.4g} in {time.perf_counter() - t0:.2f}s -> {args.out}")
    return EXIT_OK


def _profile(inst: TdInstance, args) -> MetricProfile:
    if getattr(args, "profile", None):
        return MetricProfile.from_dict(json.loads(Path(args.profile).read_text(encoding="utf-8")))
    return estimate_profile(inst, pairs=args.pairs, times=args.times, seed=args.seed, slope_mode=args.slope_mode)


def cmd_profile(args) -> int:
    inst = tdi.load(args.instance)
    prof = estimate_profile(inst, pairs=args.pairs, times=args.times, seed=args.seed, slope_mode=args.slope_mode)
    if args.out:
        _write_json(args.out, prof.to_dict())
    _emit({"command": "profile", **prof.to_dict()})
    _say(f"lam_min={prof.lam_min:.4g} lam_max={prof.lam_max:.4g} zeta={prof.zeta:.4g} nu={prof.nu:.4g}")
    return EXIT_OK


# ---------------------------------------------------------------- preprocess


def auto_params(mode: str, inst: TdInstance, prof: MetricProfile, args) -> TuningParams:
    """Tuner defaults; a negative recursion budget is floored at 0 with a warning."""
    alpha = args.alpha
    if alpha is None:
        alpha = min(0.95, max(0.05, math.log(inst.period) / math.log(inst.n))) if inst.n > 1 else 0.5
    psi = stretch_constants(args.eps, prof.zeta, prof.lam_max, 0).psi
    beta = args.beta
    cap = beta_cap(mode, alpha, prof.nu)
    if beta > cap:
        warnings.warn(f"beta={beta} above its admissible maximum {cap:.4g}; using the maximum", stacklevel=2)
        beta = cap
    if mode == "flat":
        return tune_flat(inst.n, alpha, prof.nu, args.eps, psi, args.delta, beta, floor_r=True)
    if mode == "traponly":
        return tune_traponly(inst.n, alpha, prof.nu, args.eps, psi, args.delta, beta, floor_r=True)
    xi = tuple(args.xi) if args.xi else None
    return tune_horn(inst.n, alpha, prof.nu, args.gamma, args.levels, args.delta, beta, prof, args.eps,
                     xi=xi, floor_r=True)


def beta_cap(mode: str, alpha: float, nu: float) -> float:
    if mode == "flat":
        return alpha * (1 + alpha) / (2 / nu + alpha)
    if mode == "traponly":
        return alpha * alpha * nu
    return math.inf


def _load_params(path: str) -> TuningParams:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return TuningParams.from_dict(d)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad params file: {e}") from None


def cmd_preprocess(args) -> int:
    inst = tdi.load(args.instance)
    prof = _profile(inst, args)
    params = auto_params(args.mode, inst, prof, args) if args.params == "auto" else _load_params(args.params)
    if params.mode != args.mode:
        raise UsageError(f"params are for mode {params.mode}, not {args.mode}")
    if args.budget is not None:
        params.r = args.budget
    t0 = time.perf_counter()
    build = {"traponly": preprocess_traponly, "flat": preprocess_flat, "horn": preprocess_horn}[args.mode]
    store = build(inst, params, prof, seed=args.seed, workers=args.workers, verify=not args.no_verify)
    wall = time.perf_counter() - t0
    Path(args.out).write_text(store_dumps(store), encoding="utf-8")
    report = {
        "command": "preprocess",
        **store_summary(store),
        "calls_per_landmark": {
            str(v): {"trap": e.trap_calls, "trap_cells": e.trap_cells, "bis": e.bis_calls}
            for v, e in sorted(store.landmarks.items())
        },
        "params": params.to_dict(),
    }
    if args.report:
        _write_json(args.report, report)
    _emit({k: v for k, v in report.items() if k != "calls_per_landmark"})
    _say(
        f"{args.mode}: {report['landmarks']} landmarks, {report['breakpoints']} breakpoints, "
        f"{report['trap_calls'] + report['bis_calls']} TDD calls, {wall:.2f}s -> {args.out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------- query


def _open_store(args) -> OracleStore:
    inst = tdi.load(args.instance)
    return load_store(args.store, inst)


def run_query(store: OracleStore, algo: str, o: int, d: int, t: float, r: int | None) -> QueryResult:
    mode = store.mode
    inst = store.instance
    if algo == "tdd":
        for cnt, (v, lab, _) in enumerate(grow(inst, o, t), start=1):
            if v == d:
                return QueryResult(o, d, t, lab, True, "exact", cnt, [o])
        raise NoPathError(f"no path found from {o} to {d}")
    compatible = {"fca": ("flat", "traponly"), "rqa": ("flat", "traponly"), "rqa+": ("traponly",), "hqa": ("horn",)}
    if mode not in compatible[algo]:
        raise UsageError(f"algorithm {algo} cannot run on a {mode} store")
    budget = store.params.r if r is None else r
    if algo == "fca":
        return fca(store, o, d, t)
    if algo == "rqa":
        return rqa(store, o, d, t, budget)
    if algo == "rqa+":
        return rqa_plus(store, o, d, t, budget)
    return hqa(store, o, d, t, r=budget)


def default_algo(store: OracleStore) -> str:
    return {"flat": "rqa", "traponly": "rqa+", "horn": "hqa"}[store.mode]


def cmd_query(args) -> int:
    store = _open_store(args)
    n = store.n
    if not (0 <= args.origin < n and 0 <= args.destination < n) or args.t < 0:
        raise UsageError("origin/destination must be vertices and t >= 0")
    algo = args.algo or default_algo(store)
    res = run_query(store, algo, args.origin, args.destination, args.t, args.budget)
    _emit({"algo": algo, **res.to_dict()})
    return EXIT_OK


# ---------------------------------------------------------------- bench


@dataclass
class BenchReport:
    algo: str
    seed: int
    records: list[dict] = field(default_factory=list)
    buckets: list[dict] = field(default_factory=list)
    exponent: float | None = None
    store: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def sample_rank_stratified(
    inst: TdInstance, count: int, seed: int, max_origins: int | None = None
) -> list[tuple[int, int, float, float, int]]:
    """(o, d, t_o, exact, rank) tuples spread evenly over buckets [2^j, 2^(j+1))."""
    rng = np.random.default_rng(seed)
    n = inst.n
    top = max(1, int(math.floor(math.log2(max(n, 2)))))
    buckets = list(range(1, top + 1))  # rank 1 is the origin itself
    per = max(1, math.ceil(count / len(buckets)))
    pool: dict[int, list[tuple[int, int, float, float, int]]] = {j: [] for j in buckets}
    origins = max_origins or max(8, math.ceil(2 * count / max(1, n) * 4) + per)
    for _ in range(origins):
        o = int(rng.integers(n))
        t = float(rng.uniform(0, inst.period))
        settled = [(v, lab) for v, lab, _ in grow(inst, o, t)]
        for j in buckets:
            lo, hi = 2**j, min(2 ** (j + 1), len(settled) + 1)
            if lo > len(settled):
                continue
            for _k in range(2):
                rank = int(rng.integers(lo, hi))
                v, lab = settled[rank - 1]
                pool[j].append((o, v, t, lab, rank))
    out = []
    for j in buckets:
        cand = pool[j]
        if not cand:
            continue
        take = rng.permutation(len(cand))[:per]
        out.extend(cand[i] for i in sorted(take))
    if len(out) < min(count, 4):
        raise UsageError("too few reachable pairs to benchmark")
    return out[:count] if len(out) > count else out


def fit_exponent(mid: list[float], med: list[float]) -> float | None:
    pts = [(math.log(x), math.log(y)) for x, y in zip(mid, med) if x > 0 and y > 0]
    if len(pts) < 2:
        return None
    xs, ys = np.array(pts).T
    return float(np.polyfit(xs, ys, 1)[0])


def run_bench(store: OracleStore, count: int, seed: int, algo: str | None = None, r: int | None = None) -> BenchReport:
    algo = algo or default_algo(store)
    inst = store.instance
    rep = BenchReport(algo, seed, store={"mode": store.mode, "n": store.n, "eps": store.eps,
                                         "landmarks": len(store.landmarks), "breakpoints": store.total_breakpoints})
    for o, d, t, exact, rank in sample_rank_stratified(inst, count, seed):
        res = run_query(store, algo, o, d, t, r)
        rep.records.append({
            "o": o, "d": d, "t_o": t, "exact": exact, "reported": res.value,
            "stretch": res.value / exact if exact > 0 else 1.0,
            "settled": res.settled, "rank": rank, "termination": res.termination,
        })
    by: dict[int, list[dict]] = {}
    for rec in rep.records:
        by.setdefault(int(math.log2(rec["rank"])), []).append(rec)
    mids, meds = [], []
    for j in sorted(by):
        rs = by[j]
        mid = 1.5 * 2**j
        med = float(np.median([x["settled"] for x in rs]))
        rep.buckets.append({
            "bucket": j, "lo": 2**j, "hi": 2 ** (j + 1), "queries": len(rs), "median_settled": med,
            "max_stretch": max(x["stretch"] for x in rs), "median_stretch": float(np.median([x["stretch"] for x in rs])),
        })
        mids.append(mid)
        meds.append(med)
    rep.exponent = fit_exponent(mids, meds)
    return rep


def cmd_bench(args) -> int:
    store = _open_store(args)
    t0 = time.perf_counter()
    rep = run_bench(store, args.queries, args.seed, args.algo, args.budget)
    wall = time.perf_counter() - t0
    out = Path(args.out)
    _write_json(out.with_suffix(".json"), rep.to_dict())
    cols = ["o", "d", "t_o", "exact", "reported", "stretch", "settled", "rank", "termination"]
    with out.with_suffix(".csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for rec in rep.records:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in rec.items()})
    for b in rep.buckets:
        _emit({"bucket": b})
    _emit({"command": "bench", "algo": rep.algo, "queries": len(rep.records), "exponent": rep.exponent,
           "max_stretch": max(r["stretch"] for r in rep.records)})
    _say(f"bench {rep.algo}: {len(rep.records)} queries in {wall:.2f}s, exponent={rep.exponent}")
    bad = [r for r in rep.records if r["stretch"] < 1 - 1e-9]
    if bad:
        _say(f"violation: {len(bad)} under-approximations")
        return EXIT_VIOLATION
    return EXIT_OK


# ---------------------------------------------------------------- verify


def cmd_verify(args) -> int:
    inst = tdi.load(args.instance)  # FIFO and period checks run on load
    checks = {"instance": "ok", "strongly_connected": inst.is_strongly_connected()}
    if args.store:
        store = load_store(args.store, inst)
        checks["coverage_landmarks"] = check_coverage(store)
        checks["sandwich_values"] = verify_store(store, seed=args.seed, frac=args.frac)
        prof = estimate_profile(inst, pairs=args.pairs, times=args.times, seed=args.seed + 1,
                                slope_mode="sampled")
        drift = {
            "lam_max_sampled": prof.lam_max_sampled,
            "lam_max_store": store.profile.lam_max,
            "lam_min_sampled": prof.lam_min_sampled,
            "lam_min_store": store.profile.lam_min,
        }
        checks["profile_drift"] = drift
        if prof.lam_max_sampled > store.profile.lam_max * (1 + 1e-9) or (
            prof.lam_min_sampled > store.profile.lam_min * (1 + 1e-9) + 1e-12
        ):
            _emit({"command": "verify", **checks, "violation": "profile drift"})
            _say("violation: re-estimated slopes exceed the bounds the store was built with")
            return EXIT_VIOLATION
    _emit({"command": "verify", **checks})
    _say("verify: ok")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tdoracle", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=0):
        sp.add_argument("--seed", type=int, default=seed)

    def profile_opts(sp):
        sp.add_argument("--pairs", type=int, default=256)
        sp.add_argument("--times", type=int, default=64)
        sp.add_argument("--slope-mode", choices=("margin", "sampled", "certified"), default="margin")

    g = sub.add_parser("generate", help="write a synthetic instance")
    g.add_argument("config", nargs="?", help="JSON generator config")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    pr = sub.add_parser("profile", help="estimate the metric profile")
    pr.add_argument("instance")
    pr.add_argument("--out")
    common(pr)
    profile_opts(pr)
    pr.set_defaults(func=cmd_profile)

    pp = sub.add_parser("preprocess", help="build a landmark store")
    pp.add_argument("instance")
    pp.add_argument("--mode", choices=("traponly", "flat", "horn"), required=True)
    pp.add_argument("--params", default="auto", help="'auto' or a JSON params file")
    pp.add_argument("--profile", help="JSON profile file (estimated when absent)")
    pp.add_argument("--out", required=True)
    pp.add_argument("--report")
    pp.add_argument("--eps", type=float, default=0.5)
    pp.add_argument("--alpha", type=float)
    pp.add_argument("--delta", type=float, default=0.66)
    pp.add_argument("--beta", type=float, default=0.1)
    pp.add_argument("--gamma", type=float, default=2.0)
    pp.add_argument("--levels", type=int, default=2)
    pp.add_argument("--xi", type=float, nargs="+")
    pp.add_argument("--budget", type=int)
    pp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    pp.add_argument("--no-verify", action="store_true")
    common(pp)
    profile_opts(pp)
    pp.set_defaults(func=cmd_preprocess)

    q = sub.add_parser("query", help="answer one query")
    q.add_argument("store")
    q.add_argument("origin", type=int)
    q.add_argument("destination", type=int)
    q.add_argument("t", type=float)
    q.add_argument("--instance", required=True)
    q.add_argument("--algo", choices=ALGOS)
    q.add_argument("--budget", type=int)
    q.set_defaults(func=cmd_query)

    b = sub.add_parser("bench", help="rank-stratified benchmark against exact TDD")
    b.add_argument("store")
    b.add_argument("--instance", required=True)
    b.add_argument("--queries", type=int, default=200)
    b.add_argument("--algo", choices=ALGOS)
    b.add_argument("--budget", type=int)
    b.add_argument("--out", required=True, help="report path; .json and .csv are written")
    b.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common(b)
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="run the invariant checks")
    v.add_argument("instance")
    v.add_argument("--store")
    v.add_argument("--frac", type=float, default=0.01)
    common(v)
    profile_opts(v)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (UsageError, TuningError, NoPathError) as e:
        _say(f"error: {e}")
        return EXIT_USAGE
    except (CorruptSummary, SummaryViolation, FifoViolation, SlopeBoundError, CellCapError) as e:
        _say(f"violation: {type(e).__name__}: {e}")
        return EXIT_VIOLATION
    except (OSError, TdiParseError, StoreFormatError, json.JSONDecodeError) as e:
        _say(f"io error: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
