"""Time-dependent network model, synthetic generator, period normalization, TDI I/O."""

from __future__ import annotations

import heapq
import math
from itertools import accumulate
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree, shortest_path
from scipy.spatial import cKDTree

from .pwl import PwlFunction, count_concavity_spoiling, slope_range

MAX_AVG_DEGREE = 10.0


class FifoViolation(ValueError):
    def __init__(self, arc: int, slope: float):
        super().__init__(f"arc {arc} violates FIFO: slope {slope:.6g} < -1")
        self.arc = arc
        self.slope = slope


class TdiParseError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class TdInstance:
    """Directed graph with a periodic pwl cost function per arc.

    Treated as immutable; adjacency and static metrics are cached on first use.
    """

    def __init__(
        self,
        n: int,
        tails: Sequence[int],
        heads: Sequence[int],
        costs: Sequence[PwlFunction],
        period: float,
        check: bool = True,
    ):
        self.n = int(n)
        self.tails = tuple(int(x) for x in tails)
        self.heads = tuple(int(x) for x in heads)
        self.costs = tuple(costs)
        self.period = float(period)
        if not (len(self.tails) == len(self.heads) == len(self.costs)):
            raise ValueError("tails, heads and costs must have equal length")
        if check:
            self.validate()

    def validate(self) -> None:
        T = self.period
        for a, (u, v, f) in enumerate(zip(self.tails, self.heads, self.costs)):
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"arc {a} has endpoint outside [0, {self.n})")
            if abs(f.period - T) > 1e-9 * T:
                raise ValueError(f"arc {a} has period {f.period}, instance period is {T}")
            if f.min_value <= 0:
                raise ValueError(f"arc {a} has non-positive cost {f.min_value}")
            lo, _ = slope_range(f)
            if not f.is_fifo():
                raise FifoViolation(a, lo)

    @property
    def m(self) -> int:
        return len(self.tails)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TdInstance):
            return NotImplemented
        return (
            self.n == other.n
            and self.period == other.period
            and self.tails == other.tails
            and self.heads == other.heads
            and all(f.times == g.times and f.values == g.values for f, g in zip(self.costs, other.costs))
        )

    def __repr__(self) -> str:
        return f"TdInstance(n={self.n}, m={self.m}, T={self.period:.6g})"

    @cached_property
    def free_flow(self) -> tuple[float, ...]:
        return tuple(f.min_value for f in self.costs)

    @cached_property
    def full_congestion(self) -> tuple[float, ...]:
        return tuple(f.max_value for f in self.costs)

    @cached_property
    def adjacency(self) -> list[list[tuple]]:
        """Per vertex: (head, arc id, times, values, slopes) for every out-arc."""
        adj: list[list[tuple]] = [[] for _ in range(self.n)]
        for a, (u, v, f) in enumerate(zip(self.tails, self.heads, self.costs)):
            adj[u].append((v, a, f.times, f.values, f.slopes))
        return adj

    @cached_property
    def reverse_adjacency(self) -> list[list[tuple[int, int]]]:
        radj: list[list[tuple[int, int]]] = [[] for _ in range(self.n)]
        for a, (u, v) in enumerate(zip(self.tails, self.heads)):
            radj[v].append((u, a))
        return radj

    def static_adjacency(self, metric: str = "free", reverse: bool = False) -> list[list[tuple[int, float]]]:
        key = (metric, reverse)
        cache = self.__dict__.setdefault("_static_adj", {})
        if key not in cache:
            w = self.free_flow if metric == "free" else self.full_congestion
            if reverse:
                cache[key] = [[(u, w[a]) for u, a in lst] for lst in self.reverse_adjacency]
            else:
                cache[key] = [[(e[0], w[e[1]]) for e in lst] for lst in self.adjacency]
        return cache[key]

    @property
    def max_cost(self) -> float:
        return max(self.full_congestion, default=0.0)

    @property
    def breakpoint_total(self) -> int:
        return sum(f.k for f in self.costs)

    @property
    def k_max(self) -> int:
        return max((f.k for f in self.costs), default=0)

    @property
    def k_star(self) -> int:
        return sum(count_concavity_spoiling(f) for f in self.costs)

    def static_matrix(self, metric: str = "free"):
        w = self.free_flow if metric == "free" else self.full_congestion
        # parallel arcs: keep the cheapest
        best: dict[tuple[int, int], float] = {}
        for u, v, c in zip(self.tails, self.heads, w):
            if u != v and c < best.get((u, v), math.inf):
                best[(u, v)] = c
        rows = [k[0] for k in best]
        cols = [k[1] for k in best]
        return coo_matrix((list(best.values()), (rows, cols)), shape=(self.n, self.n)).tocsr()

    def all_pairs(self, metric: str = "free") -> np.ndarray:
        return shortest_path(self.static_matrix(metric), method="D", directed=True)

    def diameter(self, metric: str = "free") -> float:
        if self.n == 0:
            return 0.0
        d = self.all_pairs(metric)
        finite = d[np.isfinite(d)]
        return float(finite.max()) if finite.size else 0.0

    def is_strongly_connected(self) -> bool:
        if self.n == 0:
            return True
        k, _ = connected_components(self.static_matrix(), directed=True, connection="strong")
        return k == 1

    def map_costs(self, fn) -> "TdInstance":
        costs = [fn(f) for f in self.costs]
        return TdInstance(self.n, self.tails, self.heads, costs, costs[0].period if costs else self.period)


def scale_instance(inst: TdInstance, factor: float) -> TdInstance:
    """Multiply every time and travel time by ``factor``."""
    costs = [f.scaled(factor) for f in inst.costs]
    return TdInstance(inst.n, inst.tails, inst.heads, costs, inst.period * factor)


def normalize_period(inst: TdInstance, alpha: float) -> TdInstance:
    """Tile the period until it covers the free-flow diameter, then rescale it to n**alpha."""
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0, 1)")
    if inst.n == 0:
        return inst
    target = inst.n ** alpha
    diam = inst.diameter("free")
    T = inst.period
    copies = 1
    if T < diam:
        copies = math.ceil(diam / T)
        while copies * T < diam:
            copies += 1
    span = copies * T
    factor = target / span
    if inst.m and min(inst.free_flow) * factor < 1e-12:
        raise ValueError(f"alpha={alpha} would scale the cheapest arc below 1e-12")
    if copies == 1 and factor == 1.0:
        return inst
    costs = []
    for f in inst.costs:
        g = f.tiled(copies) if copies > 1 else f
        costs.append(g.scaled(factor) if factor != 1.0 else g)
    return TdInstance(inst.n, inst.tails, inst.heads, costs, target)


# ---------------------------------------------------------------- generator


@dataclass(frozen=True)
class GeneratorConfig:
    n: int = 500
    avg_degree: float = 4.0
    k_range: tuple[int, int] = (2, 6)
    spoiling_fraction: float = 0.5
    lam_max_target: float = 0.2
    zeta_target: float = 1.5
    topology: str = "random-geometric"
    seed: int = 0
    # peak relative increase of an arc cost over its free-flow value
    congestion: float = 1.0
    # raw period is at least this multiple of a free-flow diameter upper bound
    period_slack: float = 1.0
    # None keeps the raw period, otherwise the period is rescaled to n**alpha
    alpha: float | None = 0.5
    # TDD probes used to hold minimum-travel-time slopes below lam_max_target
    probe_centres: int = 4
    probe_times: int = 8
    probe_rounds: int = 4
    # a handful of probes undersamples the worst slope; aim this far below target
    probe_safety: float = 0.8
    # vertices settled per probe round: small graphs get more centres,
    # large ones fewer times (probe_centres is a floor, probe_times a ceiling)
    probe_budget: int = 60_000

    def validate(self) -> None:
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.avg_degree <= 0 or self.avg_degree > MAX_AVG_DEGREE:
            raise ValueError(f"avg_degree must lie in (0, {MAX_AVG_DEGREE}]")
        lo, hi = self.k_range
        if lo < 1 or hi < lo:
            raise ValueError("k_range must satisfy 1 <= lo <= hi")
        if not (0 <= self.spoiling_fraction <= 1):
            raise ValueError("spoiling_fraction must lie in [0, 1]")
        if self.lam_max_target < 0 or self.lam_max_target >= 1:
            raise ValueError("lam_max_target must lie in [0, 1)")
        if self.zeta_target < 1:
            raise ValueError("zeta_target must be >= 1")
        if self.topology not in ("grid", "random-geometric"):
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.congestion < 0 or self.period_slack <= 0:
            raise ValueError("congestion must be >= 0 and period_slack > 0")
        if not (0 < self.probe_safety <= 1):
            raise ValueError("probe_safety must lie in (0, 1]")
        if self.alpha is not None and not (0 < self.alpha < 1):
            raise ValueError("alpha must lie in (0, 1)")


def _grid_edges(n: int, rng: np.random.Generator) -> list[tuple[int, int, float]]:
    side = math.ceil(math.sqrt(n))
    edges = []
    for v in range(n):
        r, c = divmod(v, side)
        if c + 1 < side and v + 1 < n:
            edges.append((v, v + 1))
        if v + side < n:
            edges.append((v, v + side))
    lengths = rng.uniform(0.8, 1.2, size=len(edges))
    return [(u, v, float(w)) for (u, v), w in zip(edges, lengths)]


def _geometric_edges(n: int, k: int, rng: np.random.Generator) -> list[tuple[int, int, float]]:
    pts = rng.random((n, 2))
    tree = cKDTree(pts)
    kk = min(n, k + 1)
    dist, idx = tree.query(pts, k=kk)
    seen: set[tuple[int, int]] = set()
    edges = []
    scale = math.sqrt(n)  # mean edge length close to 1
    for u in range(n):
        for j in range(1, kk):
            v = int(idx[u, j])
            key = (min(u, v), max(u, v))
            if key not in seen:
                seen.add(key)
                edges.append((key[0], key[1], float(dist[u, j]) * scale))
    # connect stray components through nearest point pairs
    while True:
        g = coo_matrix(([1] * len(edges), ([e[0] for e in edges], [e[1] for e in edges])), shape=(n, n))
        ncomp, lab = connected_components(g, directed=False)
        if ncomp == 1:
            return edges
        main = np.flatnonzero(lab == lab[0])
        rest = np.flatnonzero(lab != lab[0])
        d, j = cKDTree(pts[main]).query(pts[rest])
        i = int(np.argmin(d))
        u, v = int(rest[i]), int(main[j[i]])
        edges.append((min(u, v), max(u, v), float(d[i]) * scale))


def _select_edges(n: int, cand: list[tuple[int, int, float]], target: int) -> list[tuple[int, int, float]]:
    """Spanning tree first (connectivity), then the shortest remaining candidates."""
    if n == 1:
        return []
    w = coo_matrix(([e[2] for e in cand], ([e[0] for e in cand], [e[1] for e in cand])), shape=(n, n))
    mst = minimum_spanning_tree(w.tocsr()).tocoo()
    tree = {(min(int(a), int(b)), max(int(a), int(b))) for a, b in zip(mst.row, mst.col)}
    chosen = [e for e in cand if (e[0], e[1]) in tree]
    picked = {(e[0], e[1]) for e in chosen}
    for e in sorted(cand, key=lambda e: (e[2], e[0], e[1])):
        if len(chosen) >= target:
            break
        if (e[0], e[1]) not in picked:
            picked.add((e[0], e[1]))
            chosen.append(e)
    return sorted(chosen, key=lambda e: (e[0], e[1]))


def _unit_profile(k: int, spoil: float, rng: np.random.Generator) -> tuple[list[float], list[float], float]:
    """Random periodic shape on [0,1) with values in [0,1].

    Returns times, values and the maximum absolute slope.  Each junction is a
    slope increase with probability ``spoil``; at least one increase and one
    decrease always exist for a non-constant periodic function.
    """
    up = (rng.random(k) < spoil).tolist()
    if not any(up):
        up[int(rng.integers(k))] = True
    if all(up):
        up[int(rng.integers(k))] = False
    mag = rng.uniform(0.5, 1.5, size=k).tolist()
    rise = sum(m for m, u in zip(mag, up) if u)
    fall = sum(m for m, u in zip(mag, up) if not u)
    inc = [m * fall / rise if u else -m for m, u in zip(mag, up)]  # slope change entering segment i
    lengths = rng.uniform(0.5, 1.5, size=k).tolist()
    total = sum(lengths)
    lengths = [x / total for x in lengths]
    s = list(accumulate(inc))
    mean = sum(a * b for a, b in zip(s, lengths))
    s = [x - mean for x in s]  # zero mean slope, so the shape closes up
    vals = [0.0, *accumulate(a * b for a, b in zip(s[:-1], lengths[:-1]))]
    low = min(vals)
    vals = [v - low for v in vals]
    top = max(vals)
    if top <= 0:
        return [0.0], [0.0], 0.0
    vals = [v / top for v in vals]
    smax = max(abs(x) for x in s) / top
    starts = [0.0, *accumulate(lengths[:-1])]
    phase = float(rng.random())
    t = [(x + phase) % 1.0 for x in starts]
    order = sorted(range(k), key=t.__getitem__)
    return [t[i] for i in order], [vals[i] for i in order], smax


def _dijkstra_ecc(n: int, adj: list[list[tuple[int, float]]], src: int) -> float:
    dist = [math.inf] * n
    dist[src] = 0.0
    heap = [(0.0, src)]
    far = 0.0
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        far = d
        for v, w in adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return far


def probe_slopes(inst: TdInstance, rng: np.random.Generator, centres: int, times: int) -> tuple[float, float]:
    """Largest rise and fall rates of D[s, v] seen as exact right derivatives
    along shortest-path trees from a few centres and departure times."""
    from .tdd import tdsp_one_to_all, tree_slopes

    up = dn = 0.0
    for s in rng.choice(inst.n, size=min(centres, inst.n), replace=False):
        for j in range(times):
            t = (j + rng.random()) * inst.period / times
            ball = tdsp_one_to_all(inst, int(s), t)
            der = tree_slopes(inst, ball.order, ball.dist, ball.parent, t)
            up = max(up, max(der.values()) - 1.0)
            dn = max(dn, 1.0 - min(der.values()))
    return up, dn


def generate(cfg: GeneratorConfig) -> TdInstance:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    if cfg.topology == "grid":
        cand = _grid_edges(n, rng)
    else:
        cand = _geometric_edges(n, max(2, math.ceil(cfg.avg_degree) + 2), rng)
    if n > 1 and cfg.avg_degree * n < 2 * (n - 1):
        raise ValueError(f"avg_degree {cfg.avg_degree} too small for a strongly connected graph")
    if cfg.topology == "grid" and cfg.avg_degree > 4:
        raise ValueError(f"avg_degree {cfg.avg_degree} exceeds the grid maximum of 4")
    target = round(cfg.avg_degree * n / 2)
    edges = _select_edges(n, cand, target)

    tails: list[int] = []
    heads: list[int] = []
    bases: list[float] = []
    for u, v, length in edges:
        ratio = rng.uniform(1.0, cfg.zeta_target)
        b = length * rng.uniform(1.0, 1.2)
        fwd, bwd = (b, b * ratio) if rng.random() < 0.5 else (b * ratio, b)
        tails += [u, v]
        heads += [v, u]
        bases += [fwd, bwd]

    lo, hi = cfg.k_range
    shapes = []
    for _ in bases:
        k = int(rng.integers(lo, hi + 1))
        if cfg.spoiling_fraction == 0 or k == 1 or cfg.congestion == 0 or cfg.lam_max_target == 0:
            shapes.append(([0.0], [0.0], 0.0, 0.0))
            continue
        t, v, smax = _unit_profile(k, cfg.spoiling_fraction, rng)
        amp = cfg.congestion * rng.uniform(0.5, 1.0)
        shapes.append((t, v, smax, amp))

    adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    radj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for u, v, b in zip(tails, heads, bases):
        adj[u].append((v, b))
        radj[v].append((u, b))
    diam_ub = _dijkstra_ecc(n, adj, 0) + _dijkstra_ecc(n, radj, 0) if n > 1 else 1.0
    diam_ub = max(diam_ub, 1e-9)

    # arc slope in raw units is base * amp * smax / T0; keep it below the target
    need = max((b * s[3] * s[2] for b, s in zip(bases, shapes)), default=0.0)
    T0 = cfg.period_slack * diam_ub
    if cfg.lam_max_target > 0:
        T0 = max(T0, need / cfg.lam_max_target)

    def build(period: float, scale: float = 1.0, final: bool = False) -> TdInstance:
        # scale multiplies every time and value, as scale_instance would
        costs = []
        out = period * scale
        for b, (t, v, _, amp) in zip(bases, shapes):
            times = tuple(x * out for x in t)
            values = tuple(b * scale * (1.0 + amp * y) for y in v)
            costs.append(PwlFunction(times, values, out))
        return TdInstance(n, tails, heads, costs, out, check=final)

    inst = build(T0)
    # slopes compound along paths; stretch the period until probed
    # minimum-travel-time slopes respect the target as well
    if cfg.lam_max_target > 0 and cfg.probe_centres > 0:
        prng = np.random.default_rng([cfg.seed, 99])
        centres = min(n, max(cfg.probe_centres, cfg.probe_budget // (n * cfg.probe_times)))
        times = max(2, min(cfg.probe_times, cfg.probe_budget // (centres * n)))
        for _ in range(cfg.probe_rounds):
            up, dn = probe_slopes(inst, prng, centres, times)
            worst = max(up, dn)
            aim = cfg.probe_safety * cfg.lam_max_target
            if worst <= aim:
                break
            T0 *= 1.05 * worst / aim
            inst = build(T0)
    if cfg.alpha is not None:
        return build(T0, n**cfg.alpha / T0, final=True)
    inst.validate()
    return inst


# ---------------------------------------------------------------- TDI format


def _fmt(x: float) -> str:
    return format(x, ".17g")


def dumps(inst: TdInstance) -> str:
    out = [f"tdi 1 {inst.n} {inst.m} {_fmt(inst.period)}"]
    for u, v, f in zip(inst.tails, inst.heads, inst.costs):
        out.append(f"arc {u} {v} {f.k}")
        out.extend(f"{_fmt(t)} {_fmt(y)}" for t, y in zip(f.times, f.values))
    return "\n".join(out) + "\n"


def save(inst: TdInstance, path: str | Path) -> None:
    Path(path).write_text(dumps(inst), encoding="utf-8")


def loads(text: str) -> TdInstance:
    lines = text.splitlines()
    pos = 0

    def next_line() -> tuple[int, list[str]]:
        nonlocal pos
        while pos < len(lines):
            pos += 1
            s = lines[pos - 1].strip()
            if s and not s.startswith("#"):
                return pos, s.split()
        raise TdiParseError(pos + 1, "unexpected end of file")

    ln, head = next_line()
    if len(head) != 5 or head[0] != "tdi" or head[1] != "1":
        raise TdiParseError(ln, "expected header 'tdi 1 <n> <m> <T>'")
    try:
        n, m, T = int(head[2]), int(head[3]), float(head[4])
    except ValueError as e:
        raise TdiParseError(ln, f"bad header field ({e})") from None
    if n < 0 or m < 0 or not T > 0:
        raise TdiParseError(ln, "header needs n >= 0, m >= 0, T > 0")
    tails, heads, costs = [], [], []
    for a in range(m):
        ln, tok = next_line()
        if len(tok) != 4 or tok[0] != "arc":
            raise TdiParseError(ln, "expected 'arc <tail> <head> <K>'")
        try:
            u, v, k = int(tok[1]), int(tok[2]), int(tok[3])
        except ValueError as e:
            raise TdiParseError(ln, f"bad arc field ({e})") from None
        if not (0 <= u < n and 0 <= v < n) or k < 1:
            raise TdiParseError(ln, f"arc {a}: endpoints must lie in [0,{n}) and K >= 1")
        ts, vs = [], []
        for _ in range(k):
            ln, tok = next_line()
            if len(tok) != 2:
                raise TdiParseError(ln, "expected '<t> <value>'")
            try:
                ts.append(float(tok[0]))
                vs.append(float(tok[1]))
            except ValueError as e:
                raise TdiParseError(ln, f"bad breakpoint ({e})") from None
        try:
            f = PwlFunction(tuple(ts), tuple(vs), T)
        except ValueError as e:
            raise TdiParseError(ln, f"arc {a}: {e}") from None
        if f.min_value <= 0:
            raise TdiParseError(ln, f"arc {a}: travel times must be positive")
        if not f.is_fifo():
            raise FifoViolation(a, slope_range(f)[0])
        tails.append(u)
        heads.append(v)
        costs.append(f)
    return TdInstance(n, tails, heads, costs, T)


def load(path: str | Path) -> TdInstance:
    return loads(Path(path).read_text(encoding="utf-8"))
