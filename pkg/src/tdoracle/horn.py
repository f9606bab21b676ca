"""HORN preprocessing: leveled landmark sets with graded coverage balls."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .bisect import DEFAULT_DEPTH_CAP
from .flat import _finalize, _with_period, run_landmarks, sample_landmarks
from .instance import TdInstance
from .store import LandmarkEntry, LevelRecord, OracleStore
from .tuning import MetricProfile, TuningError, TuningParams, xi_window


@dataclass(frozen=True)
class LevelTable:
    levels: tuple[LevelRecord, ...]
    chi: float
    collapsed: int = 0  # number of levels merged into the ultimate one

    @property
    def k(self) -> int:
        return len(self.levels) - 1


def derive_levels(
    n: int,
    gamma: float,
    k: int,
    delta: float,
    r: int,
    xi: tuple[float, ...],
    alpha: float,
    nu: float,
    window: tuple[float, float, float] | None = None,
) -> LevelTable:
    """Per-level N, rho, c and F; the last record is the ultimate level k+1.

    ``window`` = (lam, zeta, lam_min) turns an out-of-window xi into an error.
    """
    if gamma <= 1 or k < 0 or not (0 < delta < 1) or r < 0:
        raise TuningError("need gamma > 1, k >= 0, 0 < delta < 1, r >= 0")
    if len(xi) != k:
        raise TuningError(f"need {k} xi values, got {len(xi)}")
    if window is not None:
        for i, x in enumerate(xi, start=1):
            lo, hi = xi_window(n, gamma, i, *window)
            if not lo < x < hi:
                raise TuningError(f"xi_{i}={x:.4g} outside the admissible window ({lo:.4g}, {hi:.4g})")
    chi = (1 + alpha) / (2 + alpha * nu)
    w = delta / (r + 1)
    recs: list[LevelRecord] = []
    collapsed = 0
    for i in range(1, k + 1):
        N = n ** ((gamma**i - 1) / gamma**i)
        c = math.ceil(N * n ** xi[i - 1])
        if c >= n:
            collapsed = k - i + 1
            warnings.warn(f"levels {i}..{k} cover the whole graph and collapse into the ultimate level", stacklevel=2)
            break
        recs.append(LevelRecord(i, N, N ** (-w), c, max(1, math.ceil(c**chi)), float(xi[i - 1])))
    top = len(recs) + 1
    recs.append(LevelRecord(top, float(n), n ** (-w), n, max(1, math.ceil(n**chi)), 0.0))
    for a, b in zip(recs, recs[1:]):
        if not (a.N < b.N and a.rho > b.rho and a.c <= b.c):
            raise TuningError(f"level table not monotone between levels {a.level} and {b.level}")
    return LevelTable(tuple(recs), chi, collapsed)


def level_seed(seed: int, i: int, top: int):
    # the ultimate level shares FLAT's stream so that k = 0 reproduces a FLAT store
    return seed if i == top else [seed, i]


def preprocess_horn(
    inst: TdInstance,
    params: TuningParams,
    profile: MetricProfile,
    seed: int = 0,
    workers: int = 1,
    verify: bool = True,
    depth_cap: int = DEFAULT_DEPTH_CAP,
    cell_cap: int | None = None,
) -> OracleStore:
    started = time.perf_counter()
    profile = _with_period(profile, inst)
    n = inst.n
    table = derive_levels(n, params.gamma or 2.0, params.k, params.delta, params.r, params.xi, params.alpha, params.nu)
    top = table.levels[-1].level
    sampled: dict[int, list[int]] = {}
    for rec in table.levels:
        rng = np.random.default_rng(level_seed(seed, rec.level, top))
        for v in sample_landmarks(n, rec.rho, rng):
            sampled.setdefault(v, []).append(rec.level)
    by_level = {rec.level: rec for rec in table.levels}
    R = params.radius(inst.period)
    jobs = []
    for v in sorted(sampled):
        lv = max(sampled[v])
        rec = by_level[lv]
        if lv == top:
            kw = dict(eps=params.eps, profile=profile, radius=R, depth_cap=depth_cap, cell_cap=cell_cap)
        else:
            kw = dict(eps=params.eps, profile=profile, size=rec.c, nearby_size=rec.F,
                      depth_cap=depth_cap, cell_cap=cell_cap)
        jobs.append((v, kw))
    entries = run_landmarks(inst, jobs, workers)
    landmarks: dict[int, LandmarkEntry] = {}
    for e in entries:
        e.levels = tuple(sorted(sampled[e.vertex]))
        e.level = max(e.levels)
        e.coverage = "all" if e.level == top else "explicit"
        landmarks[e.vertex] = e
    store = OracleStore("horn", n, params.eps, seed, params, profile, landmarks, list(table.levels))
    return _finalize(store, inst, verify, seed, started)


def is_informed(store: OracleStore, ell: int, d: int) -> bool:
    if ell not in store.landmarks:
        raise KeyError(f"{ell} is not a landmark")
    return store.informed(ell, d)
