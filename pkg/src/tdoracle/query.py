"""Query algorithms over a landmark store: FCA, RQA, RQA+ and HQA."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Callable

from .tdd import grow, travel_time

if TYPE_CHECKING:
    from .store import OracleStore


class NoPathError(ValueError):
    pass


# ---------------------------------------------------------------- constants


def psi_value(eps: float, zeta: float, lam_max: float) -> float:
    return 1 + lam_max * (1 + eps) * (1 + 2 * zeta + lam_max * zeta) + (1 + eps) * zeta


def sigma_value(eps: float, psi: float, r: int) -> float:
    """Stretch excess of RQA with budget r; equals eps + psi at r = 0."""
    if r == 0:
        return eps + psi
    a = (1 + eps / psi) ** (r + 1)
    return eps * a / (a - 1)


def phi_value(eps: float, psi: float, r: int) -> float:
    """ESC scale: psi / (phi (r+1)) equals sigma(r)/(1+eps/psi)^(r+1), so ESC never
    reports worse than 1 + sigma(r); phi >= 1 by Bernoulli's inequality."""
    a = (1 + eps / psi) ** (r + 1)
    return psi * (a - 1) / (eps * (r + 1))


@dataclass(frozen=True)
class StretchConstants:
    eps: float
    zeta: float
    lam_max: float
    r: int
    psi: float
    sigma: float
    phi: float

    @property
    def esc_threshold(self) -> float:
        return (1 + self.eps) * self.phi * (self.r + 1) + self.psi - 1

    @property
    def esc_stretch(self) -> float:
        return 1 + self.eps + self.psi / (self.phi * (self.r + 1))


def stretch_constants(eps: float, zeta: float, lam_max: float, r: int) -> StretchConstants:
    if eps <= 0 or zeta < 1 or lam_max < 0 or r < 0:
        raise ValueError("need eps > 0, zeta >= 1, lam_max >= 0, r >= 0")
    psi = psi_value(eps, zeta, lam_max)
    return StretchConstants(eps, zeta, lam_max, r, psi, sigma_value(eps, psi, r), phi_value(eps, psi, r))


# ---------------------------------------------------------------- results


@dataclass
class QueryResult:
    origin: int
    destination: int
    t_o: float
    value: float
    exact: bool
    termination: str
    settled: int
    centers: list[int] = field(default_factory=list)
    landmark: int | None = None
    suffix: str | None = None  # "summary" or "exact" when a landmark was used
    level: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


# A candidate source turns (landmark, arrival time at it) into
# (suffix travel time, suffix kind, extra settled) or None when it cannot help.
Source = Callable[[int, float], "tuple[float, str, int] | None"]


def _summary_source(store: "OracleStore", d: int, live: bool) -> Source:
    inst = store.instance

    def src(ell: int, t: float) -> tuple[float, str, int] | None:
        f = store.summary(ell, d)
        if f is not None:
            return f(t), "summary", 0
        if not live:
            return None
        cap = store.landmarks[ell].ball_cap
        cnt = 0
        for v, lab, _ in grow(inst, ell, t):
            cnt += 1
            if v == d:
                return lab, "exact", cnt
            if cnt >= cap:
                break
        return None

    return src


@dataclass
class _Best:
    value: float = math.inf
    exact: bool = False
    centers: list[int] = field(default_factory=list)
    landmark: int | None = None
    suffix: str | None = None

    def offer(self, value: float, exact: bool, centers: list[int], landmark: int | None, suffix: str | None) -> None:
        if value < self.value:
            self.value = value
            self.exact = exact
            self.centers = list(centers)
            self.landmark = landmark
            self.suffix = suffix


def _recursive(
    store: "OracleStore",
    o: int,
    d: int,
    t_o: float,
    r: int,
    is_landmark: Callable[[int], bool],
    source: Source,
    best: _Best | None = None,
) -> tuple[_Best, int]:
    """Recursive ball growing shared by FCA (r = 0), RQA and RQA+.

    Each ball grows from its centre until d or a landmark that yields a
    candidate is settled.  With budget left, every other vertex settled in the
    ball becomes a new centre, departing at its exact arrival time.
    """
    inst = store.instance
    best = best or _Best()
    settled = 0
    seen: dict[int, list[tuple[float, int]]] = {}

    def dominated(center: int, prefix: float, budget: int) -> bool:
        for p, b in seen.get(center, ()):
            if p <= prefix and b >= budget:
                return True
        return False

    # iterative depth-first search; a stack frame is (centre, prefix, budget, chain)
    stack = [(o, 0.0, r, [o])]
    while stack:
        center, prefix, budget, chain = stack.pop()
        if dominated(center, prefix, budget):
            continue
        seen.setdefault(center, []).append((prefix, budget))
        t_c = t_o + prefix
        inner: list[tuple[int, float]] = []
        for v, lab, _ in grow(inst, center, t_c):
            settled += 1
            if v == d:
                best.offer(prefix + lab, center == o, chain, None, None)
                if center == o:
                    return best, settled
                break
            if is_landmark(v):
                got = source(v, t_c + lab)
                if got is not None:
                    suffix, kind, extra = got
                    settled += extra
                    best.offer(prefix + lab + suffix, False, chain, v, kind)
                    break
            if v != center:
                inner.append((v, lab))
        if budget > 0:
            for v, lab in reversed(inner):
                stack.append((v, prefix + lab, budget - 1, chain + [v]))
    return best, settled


def _finish(best: _Best, o: int, d: int, t_o: float, settled: int, termination: str | None = None, level=None):
    if math.isinf(best.value):
        raise NoPathError(f"no path found from {o} to {d}")
    term = termination or ("exact" if best.exact else "landmark")
    return QueryResult(o, d, t_o, best.value, best.exact, term, max(1, settled), best.centers,
                       best.landmark, best.suffix, level)


def _check(store: "OracleStore", o: int, d: int, t_o: float) -> None:
    n = store.instance.n
    if not (0 <= o < n and 0 <= d < n):
        raise ValueError("query endpoints must be vertices")
    if t_o < 0:
        raise ValueError("departure time must be >= 0")


def rqa(store: "OracleStore", o: int, d: int, t_o: float, r: int) -> QueryResult:
    _check(store, o, d, t_o)
    if store.mode not in ("flat", "traponly"):
        raise ValueError(f"rqa needs a flat or traponly store, got {store.mode}")
    live = store.mode == "traponly"
    best, settled = _recursive(store, o, d, t_o, r, store.is_landmark, _summary_source(store, d, live))
    return _finish(best, o, d, t_o, settled)


def fca(store: "OracleStore", o: int, d: int, t_o: float) -> QueryResult:
    return rqa(store, o, d, t_o, 0)


def rqa_plus(store: "OracleStore", o: int, d: int, t_o: float, r: int) -> QueryResult:
    if store.mode != "traponly":
        raise ValueError("rqa+ needs a traponly store")
    return rqa(store, o, d, t_o, r)


def hqa(
    store: "OracleStore",
    o: int,
    d: int,
    t_o: float,
    r: int | None = None,
    delta: float | None = None,
    max_settled: int | None = None,
) -> QueryResult:
    """Hierarchical query: one ball from o that stops on d, ESC or ALH."""
    _check(store, o, d, t_o)
    if store.mode != "horn":
        raise ValueError(f"hqa needs a horn store, got {store.mode}")
    inst = store.instance
    p = store.params
    r = p.r if r is None else r
    delta = p.delta if delta is None else delta
    sc = stretch_constants(p.eps, store.profile.zeta, store.profile.lam_max, r)
    esc = sc.esc_threshold
    n = inst.n
    ln = math.log(n) if n > 1 else 1.0
    k = len(store.levels) - 1
    ring: dict[int, tuple[float, float]] = {}
    for rec in store.levels[:k]:
        x = rec.N ** (delta / (r + 1))
        ring[rec.level] = (max(1.0, x / ln), ln * x)
    top = k + 1
    top_after = ln * store.levels[k - 1].N ** (delta / (r + 1)) if k >= 1 else 0.0

    best = _Best()
    level = None
    cnt = 0
    for v, lab, _ in grow(inst, o, t_o):
        cnt += 1
        if max_settled is not None and cnt > max_settled:
            break
        if v == d:
            best.offer(lab, True, [o], None, None)
            return _finish(best, o, d, t_o, cnt, "exact")
        entry = store.landmarks.get(v)
        if entry is None:
            continue
        f = store.summary(v, d)
        if f is None:
            continue
        val = f(t_o + lab)
        best.offer(lab + val, False, [o], v, "summary")
        if lab == 0 or val / lab >= esc:
            return _finish(best, o, d, t_o, cnt, "ESC")
        for i in entry.levels:
            if i in ring and ring[i][0] <= cnt <= ring[i][1]:
                level = i
                break
            if i == top and cnt > top_after:
                level = i
                break
        if level is not None:
            break
    else:
        raise NoPathError(f"no path found from {o} to {d}")

    if level is None:
        value = travel_time(inst, o, d, t_o)
        if math.isinf(value):
            raise NoPathError(f"no path found from {o} to {d}")
        return QueryResult(o, d, t_o, value, True, "budget-exhausted", cnt, [o], None, None, None)

    def in_m(v: int) -> bool:
        e = store.landmarks.get(v)
        return e is not None and e.level >= level

    best, extra = _recursive(store, o, d, t_o, r, in_m, _summary_source(store, d, False), best)
    return _finish(best, o, d, t_o, cnt + extra, "exact" if best.exact else "ALH+RQA", level)
