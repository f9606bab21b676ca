"""Landmark store shared by all oracles, with text serialization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .instance import TdInstance
from .pwl import PwlError, PwlFunction
from .tdd import static_ball, stop_when_all, tdsp_one_to_all
from .tuning import MetricProfile, TuningParams

MODES = ("traponly", "flat", "horn")
REL_TOL = 1e-9


class StoreFormatError(ValueError):
    pass


class CorruptSummary(StoreFormatError):
    """A stored summary that is not a valid periodic pwl function."""


class SummaryViolation(AssertionError):
    pass


@dataclass
class LandmarkEntry:
    vertex: int
    level: int  # highest level the vertex was sampled in; 0 for single-level stores
    levels: tuple[int, ...]
    coverage: str  # "all", "faraway" or "explicit"
    summaries: dict[int, PwlFunction]
    radius: float = 0.0  # free-flow radius of the nearby part
    nearby: int = 0  # number of nearby vertices, the landmark included
    ball_cap: int = 0  # size of the expanded free-flow ball around the nearby part
    tau_star: float = math.inf
    trap_cells: int = 0
    trap_calls: int = 0
    bis_calls: int = 0
    flagged: dict[int, float] = field(default_factory=dict)

    @property
    def breakpoints(self) -> int:
        return sum(f.k for f in self.summaries.values())


@dataclass
class LevelRecord:
    level: int
    N: float
    rho: float
    c: int
    F: int
    xi: float = 0.0


@dataclass
class OracleStore:
    mode: str
    n: int
    eps: float
    seed: int
    params: TuningParams
    profile: MetricProfile
    landmarks: dict[int, LandmarkEntry]
    levels: list[LevelRecord] = field(default_factory=list)
    instance: TdInstance | None = field(default=None, repr=False, compare=False)

    def is_landmark(self, v: int) -> bool:
        return v in self.landmarks

    def summary(self, ell: int, d: int) -> PwlFunction | None:
        return self.landmarks[ell].summaries.get(d)

    def informed(self, ell: int, d: int) -> bool:
        return d == ell or d in self.landmarks[ell].summaries

    def lookup(self, ell: int, d: int, t: float) -> float | None:
        if d == ell:
            return 0.0
        f = self.summary(ell, d)
        return None if f is None else f(t)

    def level_set(self, i: int) -> set[int]:
        return {v for v, e in self.landmarks.items() if i in e.levels}

    @cached_property
    def F(self) -> int:
        return max((e.nearby for e in self.landmarks.values()), default=0)

    @property
    def total_breakpoints(self) -> int:
        return sum(e.breakpoints for e in self.landmarks.values())

    @property
    def total_calls(self) -> int:
        return sum(e.trap_calls + e.bis_calls for e in self.landmarks.values())

    def attach(self, inst: TdInstance) -> "OracleStore":
        if inst.n != self.n:
            raise ValueError(f"store built for n={self.n}, instance has n={inst.n}")
        self.instance = inst
        return self


# ---------------------------------------------------------------- checks


def spot_check(
    inst: TdInstance,
    entry: LandmarkEntry,
    eps: float,
    rng: np.random.Generator,
    frac: float = 0.01,
    per_pair: int = 8,
) -> int:
    """Check D <= summary <= (1+eps) D at random times on a random share of the
    summaries of one landmark.  Returns the number of checked values."""
    dests = sorted(entry.summaries)
    if not dests:
        return 0
    k = max(1, math.ceil(frac * len(dests)))
    pick = sorted(int(x) for x in rng.choice(dests, size=k, replace=False))
    checked = 0
    for t in rng.uniform(0, inst.period, size=per_pair):
        ball = tdsp_one_to_all(inst, entry.vertex, float(t), stop=stop_when_all(pick))
        for v in pick:
            exact = ball.dist[v]
            got = entry.summaries[v](float(t))
            tol = REL_TOL * max(1.0, exact)
            if got < exact - tol:
                raise SummaryViolation(
                    f"summary ({entry.vertex},{v}) at t={t:.17g} is {got:.17g} below exact {exact:.17g}"
                )
            if v not in entry.flagged and got > (1 + eps) * exact + tol:
                raise SummaryViolation(
                    f"summary ({entry.vertex},{v}) at t={t:.17g} is {got:.17g} above (1+eps)*{exact:.17g}"
                )
            checked += 1
    return checked


def verify_store(store: OracleStore, seed: int = 0, frac: float = 0.01, per_pair: int = 8) -> int:
    if store.instance is None:
        raise ValueError("store has no instance attached")
    rng = np.random.default_rng([seed, 7])
    return sum(
        spot_check(store.instance, store.landmarks[v], store.eps, rng, frac, per_pair)
        for v in sorted(store.landmarks)
    )


def check_coverage(store: OracleStore) -> int:
    """Coverage descriptor of every landmark against the free-flow metric.

    all: every reachable destination; faraway: exactly the vertices beyond
    the landmark's radius; explicit: a subset of the free-flow ball holding
    the level's c vertices.  Returns the number of landmarks checked.
    """
    inst = store.instance
    if inst is None:
        raise ValueError("store has no instance attached")
    sizes = {rec.level: rec.c for rec in store.levels}
    for v in sorted(store.landmarks):
        e = store.landmarks[v]
        have = set(e.summaries)
        if e.coverage == "explicit":
            ball = static_ball(inst, v, "free", size=sizes[e.level]).order
            want = set(ball) - {v}
            extra = have - want
            if extra:
                raise SummaryViolation(f"landmark {v}: summaries outside its coverage ball, e.g. {min(extra)}")
            continue
        free = static_ball(inst, v, "free").dist
        if e.coverage == "all":
            want = set(free) - {v}
        elif e.coverage == "faraway":
            want = {u for u, d in free.items() if d > e.radius}
        else:
            raise SummaryViolation(f"landmark {v}: unknown coverage {e.coverage!r}")
        if have != want:
            diff = sorted(have ^ want)
            raise SummaryViolation(
                f"landmark {v}: coverage '{e.coverage}' mismatch on {len(diff)} destinations, e.g. {diff[0]}"
            )
    return len(store.landmarks)


# ---------------------------------------------------------------- text format


def _f(x: float) -> str:
    return format(float(x), ".17g")


def _kv(d: dict) -> str:
    out = []
    for k in sorted(d):
        v = d[k]
        if isinstance(v, (list, tuple)):
            v = ",".join(_f(x) for x in v) if v else "-"
        elif isinstance(v, float):
            v = _f(v)
        out.append(f"{k}={v}")
    return " ".join(out)


def _parse_kv(tokens: list[str], ln: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise StoreFormatError(f"line {ln}: expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def dumps(store: OracleStore) -> str:
    lines = [f"tdo {store.mode} {store.n} {_f(store.eps)} {store.seed} {_kv(store.params.to_dict())}"]
    lines.append(f"profile {_kv(store.profile.to_dict())}")
    for rec in store.levels:
        lines.append(f"level {rec.level} N={_f(rec.N)} rho={_f(rec.rho)} c={rec.c} F={rec.F} xi={_f(rec.xi)}")
    for v in sorted(store.landmarks):
        e = store.landmarks[v]
        meta = {
            "level": e.level,
            "levels": ",".join(str(i) for i in e.levels) or "-",
            "coverage": e.coverage,
            "radius": float(e.radius),
            "nearby": e.nearby,
            "ball_cap": e.ball_cap,
            "tau": float(e.tau_star),
            "cells": e.trap_cells,
            "trap_calls": e.trap_calls,
            "bis_calls": e.bis_calls,
        }
        lines.append(f"landmark {v} {_kv(meta)}")
        for u in sorted(e.flagged):
            lines.append(f"flag {u} {_f(e.flagged[u])}")
        lines.append(f"summary {v} {len(e.summaries)}")
        for u in sorted(e.summaries):
            f = e.summaries[u]
            lines.append(f"dest {u} {f.k}")
            lines.extend(f"{_f(t)} {_f(y)}" for t, y in zip(f.times, f.values))
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_store(store: OracleStore, path: str | Path) -> None:
    Path(path).write_text(dumps(store), encoding="utf-8")


def loads(text: str, inst: TdInstance | None = None) -> OracleStore:
    lines = text.splitlines()
    pos = 0

    def nxt() -> tuple[int, list[str]]:
        nonlocal pos
        if pos >= len(lines):
            raise StoreFormatError(f"line {pos + 1}: unexpected end of file")
        pos += 1
        return pos, lines[pos - 1].split()

    try:
        ln, tok = nxt()
        if len(tok) < 5 or tok[0] != "tdo" or tok[1] not in MODES:
            raise StoreFormatError(f"line {ln}: expected 'tdo <mode> <n> <eps> <seed> ...'")
        mode, n, eps, seed = tok[1], int(tok[2]), float(tok[3]), int(tok[4])
        raw = _parse_kv(tok[5:], ln)
        pd: dict = {}
        for k, v in raw.items():
            if k == "mode":
                pd[k] = v
            elif k == "xi":
                pd[k] = tuple(float(x) for x in v.split(",")) if v != "-" else ()
            elif k in ("r", "k"):
                pd[k] = int(v)
            else:
                pd[k] = float(v)
        params = TuningParams.from_dict(pd)
        ln, tok = nxt()
        if not tok or tok[0] != "profile":
            raise StoreFormatError(f"line {ln}: expected profile record")
        profile = MetricProfile.from_dict(_parse_kv(tok[1:], ln))
        levels: list[LevelRecord] = []
        landmarks: dict[int, LandmarkEntry] = {}
        while True:
            ln, tok = nxt()
            if not tok:
                continue
            head = tok[0]
            if head == "end":
                break
            if head == "level":
                kv = _parse_kv(tok[2:], ln)
                levels.append(
                    LevelRecord(int(tok[1]), float(kv["N"]), float(kv["rho"]), int(kv["c"]), int(kv["F"]),
                                float(kv["xi"]))
                )
            elif head == "landmark":
                v = int(tok[1])
                kv = _parse_kv(tok[2:], ln)
                lv = tuple(int(x) for x in kv["levels"].split(",")) if kv["levels"] != "-" else ()
                entry = LandmarkEntry(
                    v, int(kv["level"]), lv, kv["coverage"], {}, float(kv["radius"]), int(kv["nearby"]),
                    int(kv["ball_cap"]), float(kv["tau"]), int(kv["cells"]), int(kv["trap_calls"]),
                    int(kv["bis_calls"]),
                )
                while True:
                    ln, tok = nxt()
                    if tok[0] == "flag":
                        entry.flagged[int(tok[1])] = float(tok[2])
                        continue
                    if tok[0] != "summary" or int(tok[1]) != v:
                        raise StoreFormatError(f"line {ln}: expected 'summary {v} <count>'")
                    break
                T = inst.period if inst is not None else profile.period
                for _ in range(int(tok[2])):
                    ln, tok = nxt()
                    if tok[0] != "dest":
                        raise StoreFormatError(f"line {ln}: expected 'dest <v> <K>'")
                    u, k = int(tok[1]), int(tok[2])
                    ts, vs = [], []
                    for _ in range(k):
                        ln, tok = nxt()
                        ts.append(float(tok[0]))
                        vs.append(float(tok[1]))
                    try:
                        entry.summaries[u] = PwlFunction(tuple(ts), tuple(vs), T)
                    except PwlError as e:
                        raise CorruptSummary(f"line {ln}: summary ({v},{u}): {e}") from None
                landmarks[v] = entry
            else:
                raise StoreFormatError(f"line {ln}: unknown record {head!r}")
    except (IndexError, KeyError, ValueError) as e:
        if isinstance(e, StoreFormatError):
            raise
        raise StoreFormatError(f"line {pos}: {e}") from None
    store = OracleStore(mode, n, eps, seed, params, profile, landmarks, levels)
    if inst is not None:
        store.attach(inst)
    return store


def load_store(path: str | Path, inst: TdInstance | None = None) -> OracleStore:
    return loads(Path(path).read_text(encoding="utf-8"), inst)
