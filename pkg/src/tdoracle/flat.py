"""Landmark sampling and preprocessing for the TRAPONLY and FLAT oracles."""

from __future__ import annotations

import dataclasses
import math
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .bisect import DEFAULT_DEPTH_CAP, bis_build
from .instance import TdInstance
from .store import LandmarkEntry, OracleStore, spot_check
from .tdd import expanded_radius, static_ball
from .trap import build_summaries
from .tuning import MetricProfile, TuningParams

__all__ = [
    "OracleStore",
    "TuningParams",
    "sample_landmarks",
    "preprocess_traponly",
    "preprocess_flat",
]


class EmptyLandmarkSet(ValueError):
    pass


def sample_landmarks(inst_or_n: TdInstance | int, rho: float, seed) -> list[int]:
    """Each vertex independently with probability rho; one retry when empty."""
    n = inst_or_n if isinstance(inst_or_n, int) else inst_or_n.n
    if not (0 < rho <= 1):
        raise ValueError("rho must lie in (0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    for _ in range(2):
        picked = np.flatnonzero(rng.random(n) < rho)
        if picked.size:
            return [int(x) for x in picked]
    raise EmptyLandmarkSet(f"no landmark sampled with rho={rho:.4g} on n={n} (after one retry)")


def _with_period(profile: MetricProfile, inst: TdInstance) -> MetricProfile:
    if profile.period == inst.period and profile.n == inst.n:
        return profile
    return dataclasses.replace(profile, period=inst.period, n=inst.n)


def split_landmark(
    inst: TdInstance,
    ell: int,
    eps: float,
    profile: MetricProfile,
    *,
    radius: float | None = None,
    size: int | None = None,
    nearby_size: int | None = None,
    with_bis: bool = True,
    depth_cap: int = DEFAULT_DEPTH_CAP,
    cell_cap: int | None = None,
) -> LandmarkEntry:
    """Summaries from one landmark.

    The covered set is the whole reachable graph, or the ``size`` closest
    vertices.  Vertices within free-flow ``radius`` (or the ``nearby_size``
    closest ones) are nearby: BIS inside the expanded ball handles them, or
    nothing does when ``with_bis`` is false.  TRAP handles the rest.
    """
    ball = static_ball(inst, ell, "free", size=size)
    order, free = ball.order, ball.dist
    if nearby_size is not None:
        cut = min(nearby_size, len(order))
    else:
        # boundary ties belong to the nearby side
        cut = sum(1 for v in order if free[v] <= radius)
    nearby, far = order[:cut], order[cut:]
    r_near = free[nearby[-1]] if nearby else 0.0
    r_bar = expanded_radius(inst, ell, nearby) if nearby else 0.0
    if size is None:
        ball_cap = sum(1 for v in order if free[v] <= r_bar)
    else:
        ball_cap = len(static_ball(inst, ell, "free", radius=r_bar).order)
    summaries = {}
    bis_calls = 0
    flagged: dict[int, float] = {}
    if with_bis and len(nearby) > 1:
        allowed = set(static_ball(inst, ell, "free", radius=r_bar).order) if size is not None else {
            v for v in order if free[v] <= r_bar
        }
        b = bis_build(inst, ell, nearby, eps, profile, depth_cap=depth_cap, allowed=allowed)
        summaries.update(b.summaries)
        bis_calls = b.calls
        flagged = b.flagged
    t = build_summaries(inst, ell, far, eps, profile, free=free, cell_cap=cell_cap)
    summaries.update(t.summaries)
    return LandmarkEntry(
        vertex=ell,
        level=0,
        levels=(),
        coverage="all" if with_bis and size is None else ("faraway" if not with_bis else "explicit"),
        summaries=dict(sorted(summaries.items())),
        radius=r_near if nearby_size is not None else float(radius),
        nearby=len(nearby),
        ball_cap=ball_cap,
        tau_star=t.tau_star,
        trap_cells=t.n_cells,
        trap_calls=t.calls,
        bis_calls=bis_calls,
        flagged=flagged,
    )


_WORKER_INST: TdInstance | None = None


def _init_worker(inst: TdInstance) -> None:
    global _WORKER_INST
    _WORKER_INST = inst


def _run_job(job: tuple[Callable, int, dict]) -> LandmarkEntry:
    fn, ell, kw = job
    return fn(_WORKER_INST, ell, **kw)


def run_landmarks(
    inst: TdInstance, jobs: Sequence[tuple[int, dict]], workers: int = 1
) -> list[LandmarkEntry]:
    """Run ``split_landmark`` per (landmark, kwargs), in parallel when workers > 1."""
    if workers <= 1 or len(jobs) <= 1:
        return [split_landmark(inst, ell, **kw) for ell, kw in jobs]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(inst,)) as ex:
        return list(ex.map(_run_job, [(split_landmark, ell, kw) for ell, kw in jobs], chunksize=1))


def _finalize(
    store: OracleStore, inst: TdInstance, verify: bool, seed: int, started: float
) -> OracleStore:
    store.attach(inst)
    if verify:
        rng = np.random.default_rng([seed, 1])
        for v in sorted(store.landmarks):
            spot_check(inst, store.landmarks[v], store.eps, rng)
    store.build_seconds = time.perf_counter() - started  # type: ignore[attr-defined]
    return store


def preprocess_traponly(
    inst: TdInstance,
    params: TuningParams,
    profile: MetricProfile,
    seed: int = 0,
    workers: int = 1,
    verify: bool = True,
    landmarks: Sequence[int] | None = None,
    cell_cap: int | None = None,
) -> OracleStore:
    """TRAP summaries toward vertices beyond free-flow radius T**theta; nearby
    vertices are left to the query's live search."""
    started = time.perf_counter()
    profile = _with_period(profile, inst)
    L = list(landmarks) if landmarks is not None else sample_landmarks(inst, params.rho(inst.n), seed)
    R = params.radius(inst.period)
    kw = dict(eps=params.eps, profile=profile, radius=R, with_bis=False, cell_cap=cell_cap)
    entries = run_landmarks(inst, [(ell, kw) for ell in L], workers)
    for e in entries:
        e.coverage = "faraway"
    store = OracleStore("traponly", inst.n, params.eps, seed, params, profile, {e.vertex: e for e in entries})
    return _finalize(store, inst, verify, seed, started)


def preprocess_flat(
    inst: TdInstance,
    params: TuningParams,
    profile: MetricProfile,
    seed: int = 0,
    workers: int = 1,
    verify: bool = True,
    landmarks: Sequence[int] | None = None,
    depth_cap: int = DEFAULT_DEPTH_CAP,
    cell_cap: int | None = None,
) -> OracleStore:
    """BIS toward the free-flow ball of radius T**theta, TRAP toward the rest."""
    started = time.perf_counter()
    profile = _with_period(profile, inst)
    L = list(landmarks) if landmarks is not None else sample_landmarks(inst, params.rho(inst.n), seed)
    R = params.radius(inst.period)
    kw = dict(eps=params.eps, profile=profile, radius=R, depth_cap=depth_cap, cell_cap=cell_cap)
    entries = run_landmarks(inst, [(ell, kw) for ell in L], workers)
    store = OracleStore("flat", inst.n, params.eps, seed, params, profile, {e.vertex: e for e in entries})
    return _finalize(store, inst, verify, seed, started)


def store_summary(store: OracleStore) -> dict:
    """Build-report numbers that do not depend on wall time."""
    es = store.landmarks.values()
    return {
        "mode": store.mode,
        "landmarks": len(store.landmarks),
        "summaries": sum(len(e.summaries) for e in es),
        "breakpoints": store.total_breakpoints,
        "trap_calls": sum(e.trap_calls for e in es),
        "bis_calls": sum(e.bis_calls for e in es),
        "F": store.F,
        "max_ball_cap": max((e.ball_cap for e in es), default=0),
        "flagged": sum(len(e.flagged) for e in es),
        "expansion": max((e.ball_cap / max(1, e.nearby) for e in es), default=1.0),
    }


def radius_for(params: TuningParams, inst: TdInstance) -> float:
    return params.radius(inst.period)


def landmark_count_bounds(n: int, rho: float, sigmas: float = 3.0) -> tuple[float, float]:
    mu = n * rho
    sd = math.sqrt(n * rho * (1 - rho))
    return mu - sigmas * sd, mu + sigmas * sd
