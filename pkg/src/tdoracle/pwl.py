"""Periodic, continuous piecewise-linear functions.

A function is stored as sorted breakpoints ``(t_i, v_i)`` with ``0 <= t_i < T``.
Between the last breakpoint and the first one shifted by ``T`` the function
follows an implicit wrap segment, so it is continuous on the circle.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

REL_TOL = 1e-9


class PwlError(ValueError):
    pass


@dataclass(frozen=True)
class PwlFunction:
    times: tuple[float, ...]
    values: tuple[float, ...]
    period: float
    slopes: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        times = tuple(float(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        T = float(self.period)
        if not T > 0 or not math.isfinite(T):
            raise PwlError(f"period must be positive and finite, got {T}")
        if not times or len(times) != len(values):
            raise PwlError("need at least one breakpoint and matching value list")
        for i, t in enumerate(times):
            if not (0.0 <= t < T):
                raise PwlError(f"breakpoint time {t} outside [0, {T})")
            if i and not times[i - 1] < t:
                raise PwlError("breakpoint times must be strictly increasing")
        for v in values:
            if not math.isfinite(v):
                raise PwlError(f"non-finite breakpoint value {v}")
        k = len(times)
        slopes = []
        for i in range(k):
            if i + 1 < k:
                dt = times[i + 1] - times[i]
                dv = values[i + 1] - values[i]
            else:
                dt = times[0] + T - times[i]
                dv = values[0] - values[i]
            slopes.append(dv / dt)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "period", T)
        object.__setattr__(self, "slopes", tuple(slopes))

    @classmethod
    def constant(cls, value: float, period: float) -> "PwlFunction":
        return cls((0.0,), (value,), period)

    @classmethod
    def from_points(cls, points: Iterable[tuple[float, float]], period: float) -> "PwlFunction":
        pts = sorted(points)
        return cls(tuple(p[0] for p in pts), tuple(p[1] for p in pts), period)

    @property
    def k(self) -> int:
        return len(self.times)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.times, self.values))

    @property
    def min_value(self) -> float:
        return min(self.values)

    @property
    def max_value(self) -> float:
        return max(self.values)

    def is_constant(self) -> bool:
        lo, hi = self.min_value, self.max_value
        return hi - lo <= REL_TOL * max(1.0, abs(hi))

    def is_fifo(self, strict: bool = False) -> bool:
        lo = min(self.slopes)
        return lo > -1.0 if strict else lo >= -1.0 - REL_TOL

    def __call__(self, t: float) -> float:
        return eval_at(self, t)

    def scaled(self, factor: float) -> "PwlFunction":
        """Scale both time and value axes; slopes are unchanged."""
        return PwlFunction(
            tuple(t * factor for t in self.times),
            tuple(v * factor for v in self.values),
            self.period * factor,
        )

    def tiled(self, copies: int) -> "PwlFunction":
        """The same function viewed with period ``copies * T``."""
        if copies < 1:
            raise PwlError("copies must be >= 1")
        T = self.period
        times = [t + j * T for j in range(copies) for t in self.times]
        values = [v for _ in range(copies) for v in self.values]
        return PwlFunction(tuple(times), tuple(values), T * copies)


def eval_at(f: PwlFunction, t: float) -> float:
    T = f.period
    tt = t % T
    times = f.times
    i = bisect_right(times, tt) - 1
    if i < 0:
        # before the first breakpoint: on the wrap segment started at the last one
        return f.values[-1] + f.slopes[-1] * (tt + T - times[-1])
    return f.values[i] + f.slopes[i] * (tt - times[i])


def arrival(f: PwlFunction, t: float) -> float:
    return t + eval_at(f, t)


def compose_arrival(fs: Sequence[PwlFunction], t: float) -> float:
    for f in fs:
        t = t + eval_at(f, t)
    return t


def slope_range(f: PwlFunction) -> tuple[float, float]:
    return min(f.slopes), max(f.slopes)


def _gt(a: float, b: float, scale: float) -> bool:
    return a - b > REL_TOL * max(1.0, scale)


def count_concavity_spoiling(f: PwlFunction) -> int:
    """Junctions (wrap junction included) where the slope increases."""
    k = f.k
    if k == 1:
        return 0
    s = f.slopes
    scale = max(abs(x) for x in s)
    return sum(1 for i in range(k) if _gt(s[i], s[i - 1], scale))


def simplify(f: PwlFunction, tol: float = 1e-12) -> PwlFunction:
    """Drop breakpoints whose neighbours are collinear with them."""
    k = f.k
    if k <= 2:
        return f
    s = f.slopes
    scale = max(1.0, max(abs(x) for x in s))
    keep = [i for i in range(k) if abs(s[i] - s[i - 1]) > tol * scale]
    if not keep:
        return PwlFunction.constant(f.values[0], f.period) if f.is_constant() else f
    if len(keep) == k:
        return f
    return PwlFunction(tuple(f.times[i] for i in keep), tuple(f.values[i] for i in keep), f.period)


def min_envelope(f: PwlFunction, g: PwlFunction) -> PwlFunction:
    """Pointwise minimum of two functions with the same period."""
    T = f.period
    if abs(g.period - T) > REL_TOL * T:
        raise PwlError("min_envelope needs equal periods")
    grid = sorted(set(f.times) | set(g.times))
    out_t: list[float] = []
    out_v: list[float] = []
    ends = grid + [grid[0] + T]
    for j, a in enumerate(grid):
        fa, ga = eval_at(f, a), eval_at(g, a)
        out_t.append(a)
        # ties keep f, the first argument
        out_v.append(fa if fa <= ga else ga)
        b = ends[j + 1]
        fb, gb = eval_at(f, b), eval_at(g, b)
        da, db = fa - ga, fb - gb
        if (da < 0 < db) or (db < 0 < da):
            x = a + (b - a) * da / (da - db)
            if a < x < b:
                xv = fa + (fb - fa) * (x - a) / (b - a)
                out_t.append(x % T)
                out_v.append(xv)
    pts = sorted(zip(out_t, out_v))
    merged_t: list[float] = []
    merged_v: list[float] = []
    for t, v in pts:
        if merged_t and t - merged_t[-1] <= 0.0:
            continue
        merged_t.append(t)
        merged_v.append(v)
    return PwlFunction(tuple(merged_t), tuple(merged_v), T)
