"""Trapezoidal envelopes and one-to-many summaries for faraway destinations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Collection

from .instance import TdInstance
from .pwl import PwlFunction, simplify
from .tdd import static_ball, stop_when_all, tdsp_one_to_all

SLOPE_TOL = 1e-9


class SlopeBoundError(ValueError):
    """Two samples are further apart than the slope bounds allow."""


class CellCapError(ValueError):
    pass


@dataclass(frozen=True)
class TrapCell:
    t_s: float
    t_f: float
    d_s: float
    d_f: float
    lam_min: float
    lam_max: float

    @property
    def width(self) -> float:
        return self.t_f - self.t_s

    def upper(self, t: float) -> float:
        return min(self.d_s + self.lam_max * (t - self.t_s), self.d_f + self.lam_min * (self.t_f - t))

    def lower(self, t: float) -> float:
        return max(self.d_s - self.lam_min * (t - self.t_s), self.d_f - self.lam_max * (self.t_f - t))

    @property
    def upper_peak(self) -> tuple[float, float]:
        """Intersection of the two upper legs, clamped into the cell."""
        lsum = self.lam_min + self.lam_max
        if lsum == 0:
            return self.t_s, self.d_s
        t = (self.d_f - self.d_s) / lsum + (self.lam_min * self.t_f + self.lam_max * self.t_s) / lsum
        v = (self.lam_max * self.d_f + self.lam_min * self.d_s) / lsum + (
            self.lam_min * self.lam_max * self.width / lsum
        )
        if t <= self.t_s:
            return self.t_s, self.d_s
        if t >= self.t_f:
            return self.t_f, self.d_f
        return t, v

    @property
    def lower_valley(self) -> tuple[float, float]:
        """Intersection of the two lower legs, clamped into the cell."""
        lsum = self.lam_min + self.lam_max
        if lsum == 0:
            return self.t_s, self.d_s
        t = (self.d_s - self.d_f) / lsum + (self.lam_min * self.t_s + self.lam_max * self.t_f) / lsum
        v = (self.lam_max * self.d_s + self.lam_min * self.d_f) / lsum - (
            self.lam_min * self.lam_max * self.width / lsum
        )
        if t <= self.t_s:
            return self.t_s, self.d_s
        if t >= self.t_f:
            return self.t_f, self.d_f
        return t, v

    @property
    def mae(self) -> float:
        t, _ = self.lower_valley
        return self.upper(t) - self.lower(t)

    def test_points(self) -> tuple[float, float, float, float]:
        return self.t_s, self.t_f, self.upper_peak[0], self.lower_valley[0]

    def achieved_eps(self) -> float:
        """Largest upper/lower ratio minus one over the four test points."""
        worst = 0.0
        for t in self.test_points():
            lo = self.lower(t)
            hi = self.upper(t)
            if lo <= 0:
                return math.inf
            worst = max(worst, hi / lo - 1.0)
        return worst

    def certifies(self, eps: float) -> bool:
        """True when upper <= (1+eps) * lower on the whole cell.

        upper - (1+eps)*lower is concave, so its four breakpoints suffice.
        """
        for t in self.test_points():
            if self.upper(t) > (1.0 + eps) * self.lower(t):
                return False
        return True

    def upper_points(self) -> list[tuple[float, float]]:
        pts = [(self.t_s, self.d_s)]
        t, v = self.upper_peak
        if self.t_s < t < self.t_f:
            pts.append((t, v))
        return pts


def build_cell(d_ts: float, d_tf: float, t_s: float, t_f: float, lam_min: float, lam_max: float) -> TrapCell:
    if not t_s < t_f:
        raise ValueError("cell needs t_s < t_f")
    if not (0 <= lam_min < 1) or lam_max < 0:
        raise ValueError("slope bounds need 0 <= lam_min < 1 and lam_max >= 0")
    tau = t_f - t_s
    tol = SLOPE_TOL * max(1.0, abs(d_ts), abs(d_tf))
    diff = d_tf - d_ts
    if diff > lam_max * tau + tol or diff < -lam_min * tau - tol:
        raise SlopeBoundError(
            f"samples {d_ts:.17g} at {t_s:.17g} and {d_tf:.17g} at {t_f:.17g} "
            f"are inconsistent with slopes in [-{lam_min}, {lam_max}]"
        )
    return TrapCell(t_s, t_f, d_ts, d_tf, lam_min, lam_max)


def sufficient_tau(d_free: float, eps: float, lam_max: float) -> float:
    if eps <= 0:
        raise ValueError("eps must be positive")
    if lam_max == 0:
        return math.inf
    return d_free / ((1.0 + 1.0 / eps) * lam_max)


def faraway_set(
    inst: TdInstance, ell: int, tau: float, eps: float, lam_max: float, free: dict[int, float] | None = None
) -> set[int]:
    if free is None:
        free = static_ball(inst, ell, "free").dist
    return {v for v, d in free.items() if sufficient_tau(d, eps, lam_max) > tau}


def default_cell_cap(inst: TdInstance) -> int:
    return max(1, math.ceil(10 * inst.period))


@dataclass
class TrapBuild:
    landmark: int
    tau_star: float
    n_cells: int
    calls: int
    summaries: dict[int, PwlFunction]
    max_mae: dict[int, float] = field(default_factory=dict)
    cells: dict[int, list[TrapCell]] | None = None


def build_summaries(
    inst: TdInstance,
    ell: int,
    destinations: Collection[int],
    eps: float,
    profile,
    free: dict[int, float] | None = None,
    cell_cap: int | None = None,
    keep_cells: bool = False,
) -> TrapBuild:
    """Summaries toward ``destinations`` from one shared grid of TDD samples.

    ``profile`` only needs ``lam_min`` and ``lam_max`` attributes.
    """
    dests = sorted(set(destinations) - {ell})
    lam_min, lam_max = profile.lam_min, profile.lam_max
    if not dests:
        return TrapBuild(ell, math.inf, 0, 0, {})
    if free is None:
        free = static_ball(inst, ell, "free").dist
    dests = [v for v in dests if v in free]
    if not dests:
        return TrapBuild(ell, math.inf, 0, 0, {})
    tau = min(sufficient_tau(free[v], eps, lam_max) for v in dests)
    T = inst.period
    n_cells = 1 if math.isinf(tau) else max(1, math.ceil(T / tau))
    cap = default_cell_cap(inst) if cell_cap is None else cell_cap
    if n_cells > cap:
        raise CellCapError(
            f"landmark {ell}: {n_cells} cells exceed the cap of {cap}; "
            "use a larger tau (drop close destinations) or raise the cap"
        )
    grid = [0.0] if n_cells == 1 else [k * tau for k in range(n_cells)]
    samples = []
    for t in grid:
        ball = tdsp_one_to_all(inst, ell, t, stop=stop_when_all(dests))
        samples.append(ball.dist)
    summaries: dict[int, PwlFunction] = {}
    max_mae: dict[int, float] = {}
    cells_out: dict[int, list[TrapCell]] | None = {} if keep_cells else None
    for v in dests:
        if v not in samples[0]:
            continue
        pts: list[tuple[float, float]] = []
        worst = 0.0
        vcells = []
        for k in range(n_cells):
            t_s = grid[k]
            t_f = grid[k + 1] if k + 1 < n_cells else T
            d_f = samples[k + 1][v] if k + 1 < n_cells else samples[0][v]
            cell = build_cell(samples[k][v], d_f, t_s, t_f, lam_min, lam_max)
            pts.extend(cell.upper_points())
            worst = max(worst, cell.mae)
            if keep_cells:
                vcells.append(cell)
        summaries[v] = simplify(PwlFunction.from_points(pts, T))
        max_mae[v] = worst
        if cells_out is not None:
            cells_out[v] = vcells
    return TrapBuild(ell, tau, n_cells, len(grid), summaries, max_mae, cells_out)
