"""Exact time-dependent Dijkstra, Dijkstra-Rank, and static balls."""

from __future__ import annotations

import heapq
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Collection, Iterator

from .instance import TdInstance

# A stop predicate sees (vertex, label, settled count) after each settle and
# returns a stop reason or None.
StopFn = Callable[[int, float, int], "str | None"]

TARGET = "target-settled"
LANDMARK = "landmark-settled"
SIZE = "size-reached"
RADIUS = "radius-reached"
EXHAUSTED = "exhausted"


@dataclass
class BallResult:
    origin: int
    t_o: float
    order: list[int] = field(default_factory=list)
    dist: dict[int, float] = field(default_factory=dict)
    parent: dict[int, int] = field(default_factory=dict)
    stop_reason: str = EXHAUSTED

    @property
    def settled(self) -> list[tuple[int, float, int]]:
        return [(v, self.dist[v], self.parent.get(v, -1)) for v in self.order]

    @property
    def size(self) -> int:
        return len(self.order)

    def rank_of(self, v: int) -> int | None:
        try:
            return self.order.index(v) + 1
        except ValueError:
            return None

    def ranks(self) -> dict[int, int]:
        return {v: i + 1 for i, v in enumerate(self.order)}

    def path_to(self, v: int) -> list[int]:
        path = [v]
        while path[-1] != self.origin:
            path.append(self.parent[path[-1]])
        return path[::-1]

    @property
    def radius(self) -> float:
        return self.dist[self.order[-1]] if self.order else 0.0


def stop_at_target(d: int) -> StopFn:
    return lambda v, _lab, _cnt: TARGET if v == d else None


def stop_at_any(vertices: Collection[int], reason: str = LANDMARK) -> StopFn:
    return lambda v, _lab, _cnt: reason if v in vertices else None


def stop_at_size(F: int) -> StopFn:
    return lambda _v, _lab, cnt: SIZE if cnt >= F else None


def stop_when_all(targets: Collection[int]) -> StopFn:
    """Stop once every vertex of ``targets`` is settled."""
    left = set(targets)

    def fn(v: int, _lab: float, _cnt: int) -> str | None:
        left.discard(v)
        return TARGET if not left else None

    if not left:
        return lambda _v, _lab, _cnt: TARGET
    return fn


def any_of(*stops: StopFn | None) -> StopFn | None:
    fns = [s for s in stops if s is not None]
    if not fns:
        return None
    if len(fns) == 1:
        return fns[0]

    def fn(v: int, lab: float, cnt: int) -> str | None:
        for s in fns:
            r = s(v, lab, cnt)
            if r is not None:
                return r
        return None

    return fn


def grow(
    inst: TdInstance,
    origin: int,
    t_o: float,
    allowed: Collection[int] | None = None,
) -> Iterator[tuple[int, float, int]]:
    """Yield settled (vertex, travel time from origin, parent) in settle order.

    Ties are broken by vertex id.  Arc costs are evaluated at the tail's
    arrival time; waiting is never useful under FIFO.
    """
    adj = inst.adjacency
    T = inst.period
    dist = {origin: 0.0}
    parent = {origin: -1}
    done: set[int] = set()
    heap = [(0.0, origin)]
    pop, push = heapq.heappop, heapq.heappush
    while heap:
        d, u = pop(heap)
        if u in done:
            continue
        done.add(u)
        yield u, d, parent[u]
        tt = (t_o + d) % T
        for v, _a, times, values, slopes in adj[u]:
            if v in done:
                continue
            if allowed is not None and v not in allowed:
                continue
            i = bisect_right(times, tt) - 1
            if i < 0:
                c = values[-1] + slopes[-1] * (tt + T - times[-1])
            else:
                c = values[i] + slopes[i] * (tt - times[i])
            nd = d + c
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                parent[v] = u
                push(heap, (nd, v))


def tdsp_one_to_all(
    inst: TdInstance,
    o: int,
    t_o: float,
    stop: StopFn | None = None,
    radius: float | None = None,
    allowed: Collection[int] | None = None,
) -> BallResult:
    """Exact TDD from (o, t_o).

    ``radius`` settles every vertex with travel time at most ``radius``.
    ``stop`` is checked after each settle; the stop vertex is included.
    ``allowed`` restricts the search to an induced subgraph.
    """
    if not (0 <= o < inst.n):
        raise ValueError(f"origin {o} not a vertex")
    if t_o < 0:
        raise ValueError("departure time must be >= 0")
    res = BallResult(o, t_o)
    order, dist, parent = res.order, res.dist, res.parent
    for v, d, p in grow(inst, o, t_o, allowed):
        if radius is not None and d > radius:
            res.stop_reason = RADIUS
            return res
        order.append(v)
        dist[v] = d
        if p >= 0:
            parent[v] = p
        if stop is not None:
            r = stop(v, d, len(order))
            if r is not None:
                res.stop_reason = r
                return res
    res.stop_reason = EXHAUSTED
    return res


def tree_slopes(inst: TdInstance, order, dist, parent, t: float) -> dict[int, float]:
    """Right derivative of the arrival time at each v, departing s at t, along
    the shortest-path tree; the slope of D[s, v] is this minus one."""
    T = inst.period
    adj = inst.adjacency
    der = {order[0]: 1.0}
    for v in order[1:]:
        u = parent[v]
        tt = (t + dist[u]) % T
        best = None
        for h, _a, times, values, slopes in adj[u]:
            if h != v:
                continue
            i = bisect_right(times, tt) - 1
            c = values[i] + slopes[i] * (tt - times[i]) if i >= 0 else values[-1] + slopes[-1] * (tt + T - times[-1])
            if best is None or c < best[0]:
                best = (c, slopes[i])
        der[v] = der[u] * (1.0 + best[1])
    return der


def travel_time(inst: TdInstance, o: int, d: int, t_o: float) -> float:
    """Exact D[o,d](t_o); +inf when d is unreachable."""
    for v, lab, _ in grow(inst, o, t_o):
        if v == d:
            return lab
    return math.inf


def dijkstra_rank(inst: TdInstance, o: int, d: int, t_o: float) -> int | None:
    """Settle index of d (1-based); None when d is unreachable."""
    for cnt, (v, _lab, _p) in enumerate(grow(inst, o, t_o), start=1):
        if v == d:
            return cnt
    return None


def static_ball(
    inst: TdInstance,
    o: int,
    metric: str = "free",
    size: int | None = None,
    radius: float | None = None,
    reverse: bool = False,
) -> BallResult:
    """Dijkstra in the free-flow (``"free"``) or full-congestion (``"full"``) metric."""
    if metric not in ("free", "full"):
        raise ValueError(f"unknown metric {metric!r}")
    nbrs = inst.static_adjacency(metric, reverse)
    res = BallResult(o, 0.0)
    dist = {o: 0.0}
    parent = {o: -1}
    done: set[int] = set()
    heap = [(0.0, o)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        if radius is not None and d > radius:
            res.stop_reason = RADIUS
            return res
        done.add(u)
        res.order.append(u)
        res.dist[u] = d
        if parent[u] >= 0:
            res.parent[u] = parent[u]
        if size is not None and len(res.order) >= size:
            res.stop_reason = SIZE
            return res
        for v, c in nbrs[u]:
            nd = d + c
            if v not in done and nd < dist.get(v, math.inf):
                dist[v] = nd
                parent[v] = u
                heapq.heappush(heap, (nd, v))
    res.stop_reason = EXHAUSTED
    return res


def static_distances(inst: TdInstance, o: int, metric: str = "free", reverse: bool = False) -> dict[int, float]:
    return static_ball(inst, o, metric, reverse=reverse).dist


def expanded_radius(inst: TdInstance, ell: int, inner: Collection[int]) -> float:
    """Largest full-congestion distance from ell to a vertex of ``inner``."""
    left = set(inner)
    nbrs = inst.static_adjacency("full")
    dist = {ell: 0.0}
    done: set[int] = set()
    heap = [(0.0, ell)]
    far = 0.0
    while heap and left:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u in left:
            left.discard(u)
            far = d
        for v, c in nbrs[u]:
            nd = d + c
            if v not in done and nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    if left:
        raise ValueError("inner ball contains vertices unreachable in the full-congestion metric")
    return far


def expanded_ball(inst: TdInstance, ell: int, F: int) -> set[int]:
    """Free-flow ball around ell whose radius is the largest full-congestion
    distance from ell to any vertex of the F-vertex free-flow ball."""
    inner = static_ball(inst, ell, "free", size=F).order
    r_bar = expanded_radius(inst, ell, inner)
    return set(static_ball(inst, ell, "free", radius=r_bar).order)
