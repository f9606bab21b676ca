"""Bisection summaries for nearby destinations.

The departure-time axis [0,T) is halved until every destination's trapezoidal
cell certifies the (1+eps) bound.  Samples are cached by departure time and
shared by all destinations and tree nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Collection

from .instance import TdInstance
from .pwl import PwlFunction, simplify
from .tdd import stop_when_all, tdsp_one_to_all
from .trap import TrapCell, build_cell

DEFAULT_DEPTH_CAP = 40


@dataclass
class BisBuild:
    landmark: int
    summaries: dict[int, PwlFunction]
    calls: int
    leaves: list[tuple[float, float]]
    samples: dict[float, dict[int, float]] = field(repr=False, default_factory=dict)
    # destinations that still fail at the depth cap, with their achieved eps
    flagged: dict[int, float] = field(default_factory=dict)
    max_depth: int = 0


def bis_build(
    inst: TdInstance,
    ell: int,
    destinations: Collection[int],
    eps: float,
    profile,
    depth_cap: int = DEFAULT_DEPTH_CAP,
    allowed: Collection[int] | None = None,
    keep_samples: bool = False,
) -> BisBuild:
    if eps <= 0:
        raise ValueError("eps must be positive")
    lam_min, lam_max = profile.lam_min, profile.lam_max
    dests = sorted(set(destinations) - {ell})
    T = inst.period
    cache: dict[float, dict[int, float]] = {}

    def sample(t: float) -> dict[int, float]:
        if t not in cache:
            ball = tdsp_one_to_all(inst, ell, t, stop=stop_when_all(dests), allowed=allowed)
            cache[t] = {v: ball.dist[v] for v in dests if v in ball.dist}
        return cache[t]

    if not dests:
        return BisBuild(ell, {}, 0, [])
    first = sample(0.0)
    dests = [v for v in dests if v in first]
    last = sample(T)

    leaves: list[tuple[float, float]] = []
    flagged: dict[int, float] = {}
    deepest = 0
    # per destination, the cells where refinement stopped, in time order
    kept: dict[int, list[TrapCell]] = {v: [] for v in dests}

    # explicit stack, right child pushed first so cells come out in time order.
    # A child's envelope gap never exceeds its parent's, so a destination
    # certified at a node stays certified below it and drops out there.
    stack = [(0.0, T, 0, dests)]
    while stack:
        a, b, depth, active = stack.pop()
        sa = first if a == 0.0 else sample(a)
        sb = last if b == T else sample(b)
        failing = []
        for v in active:
            cell = build_cell(sa[v], sb[v], a, b, lam_min, lam_max)
            if cell.certifies(eps):
                kept[v].append(cell)
            else:
                failing.append((v, cell))
        mid = 0.5 * (a + b)
        if failing and depth < depth_cap and a < mid < b:
            rest = [v for v, _ in failing]
            stack.append((mid, b, depth + 1, rest))
            stack.append((a, mid, depth + 1, rest))
            continue
        for v, cell in failing:
            flagged[v] = max(flagged.get(v, 0.0), cell.achieved_eps())
            kept[v].append(cell)
        leaves.append((a, b))
        deepest = max(deepest, depth)

    summaries: dict[int, PwlFunction] = {}
    for v in dests:
        pts = [p for cell in kept[v] for p in cell.upper_points()]
        summaries[v] = simplify(PwlFunction.from_points(pts, T))
    return BisBuild(
        ell,
        summaries,
        len(cache),
        leaves,
        cache if keep_samples else {},
        flagged,
        deepest,
    )
