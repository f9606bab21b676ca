"""Measured instance constants and parameter formulas for the oracles."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .instance import TdInstance
from .query import stretch_constants
from .tdd import grow, static_ball, tree_slopes

ALL_PAIRS_LIMIT = 3000


class TuningError(ValueError):
    pass


@dataclass
class MetricProfile:
    """Slope bounds, opposite-trip ratio, ball expansion and rank/distance fit.

    ``lam_min``/``lam_max`` are the bounds the builders use.  With
    ``slope_mode == "certified"`` they are guaranteed bounds on the slopes
    of every minimum-travel-time function; otherwise they come from sampling.
    The raw sampled estimates are kept alongside for reporting.
    """

    lam_min: float
    lam_max: float
    zeta: float = 1.0
    expansion: float = 1.0
    lam: float = 1.0
    f_n: float = 1.0
    g_n: float = 1.0
    nu: float = 1.0
    M: float = 0.0
    K: int = 0
    K_max: int = 0
    K_star: int = 0
    lam_min_sampled: float = 0.0
    lam_max_sampled: float = 0.0
    slope_mode: str = "given"
    diam_free: float = 0.0
    diam_full: float = 0.0
    period: float = 0.0
    n: int = 0
    grid_times: int = 0
    grid_pairs: int = 0

    def __post_init__(self) -> None:
        if not (0 <= self.lam_min < 1):
            raise ValueError(f"lam_min must lie in [0,1), got {self.lam_min}")
        if self.lam_max < 0 or self.zeta < 1 or self.lam < 1 or self.nu <= 0:
            raise ValueError("profile needs lam_max >= 0, zeta >= 1, lam >= 1, nu > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricProfile":
        names = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            if k not in names:
                continue
            if k in ("K", "K_max", "K_star", "n", "grid_times", "grid_pairs"):
                kw[k] = int(v)
            elif k == "slope_mode":
                kw[k] = str(v)
            else:
                kw[k] = float(v)
        return cls(**kw)


DP_LEVELS = 8192


def _max_gain(inst: TdInstance, gains: np.ndarray, budget: float) -> float:
    """Largest sum of ``gains`` along a walk whose free-flow length is <= budget.

    Free-flow lengths are rounded down to a grid fine enough that every arc
    costs at least one step, so the result is an upper bound for every path.
    Falls back to the best gain-per-length ratio times the budget when that
    grid would be too fine.
    """
    w = np.asarray(inst.free_flow, dtype=float)
    ratio = float((gains / w).max())
    if ratio <= 0:
        return 0.0
    step = w.min()
    levels = math.ceil(budget / step)
    if levels > DP_LEVELS:
        return ratio * budget
    tails = np.asarray(inst.tails)
    heads = np.asarray(inst.heads)
    wq = np.floor(w / step).astype(np.int64)
    best = np.full((levels + 1, inst.n), -np.inf)
    best[0, :] = 0.0
    for b in range(levels + 1):
        row = best[b]
        tgt = b + wq
        ok = (tgt <= levels) & np.isfinite(row[tails])
        if ok.any():
            np.maximum.at(best, (tgt[ok], heads[ok]), row[tails[ok]] + gains[ok])
    return min(float(best.max()), ratio * budget)


def certified_slopes(inst: TdInstance, diam_full: float | None = None) -> tuple[float, float]:
    """Slope bounds valid for every minimum-travel-time function.

    Along the path that is shortest at departure t, the derivative of the
    path travel time is prod(1 + s_a) - 1 with s_a the arc slopes met, and the
    free-flow costs along that path sum to at most D(t) <= diam(G, full).  The
    bound maximizes sum(log(1 + s_a)) under that length budget.
    """
    if inst.m == 0:
        return 0.0, 0.0
    if diam_full is None:
        diam_full = full_diameter_bound(inst)
    hi = np.array([max(0.0, max(f.slopes)) for f in inst.costs])
    lo = np.array([max(0.0, -min(f.slopes)) for f in inst.costs])
    if lo.max() >= 1:
        return 1.0, math.inf
    lam_max = math.expm1(_max_gain(inst, np.log1p(hi), diam_full))
    lam_min = -math.expm1(-_max_gain(inst, -np.log1p(-lo), diam_full))
    return lam_min, lam_max


def _ecc(nbrs, src: int) -> float:
    import heapq

    dist = {src: 0.0}
    heap = [(0.0, src)]
    far = 0.0
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        far = d
        for v, c in nbrs[u]:
            nd = d + c
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return far


def full_diameter_bound(inst: TdInstance) -> float:
    """Exact full-congestion diameter for small graphs, else out+in eccentricity of vertex 0."""
    if inst.n <= ALL_PAIRS_LIMIT:
        return inst.diameter("full")
    return _ecc(inst.static_adjacency("full"), 0) + _ecc(inst.static_adjacency("full", True), 0)


def free_diameter(inst: TdInstance) -> float:
    if inst.n <= ALL_PAIRS_LIMIT:
        return inst.diameter("free")
    return _ecc(inst.static_adjacency("free"), 0) + _ecc(inst.static_adjacency("free", True), 0)


def expansion_factor(inst: TdInstance, landmarks: list[int]) -> float:
    """max |B'[l;F]| / F over the given centres and F = 2, 4, 8, ..."""
    worst = 1.0
    for ell in landmarks:
        free = static_ball(inst, ell, "free")
        full = static_ball(inst, ell, "full").dist
        fvals = np.sort(np.fromiter(free.dist.values(), float))
        r_bar = 0.0
        F = 2
        for cnt, v in enumerate(free.order, start=1):
            r_bar = max(r_bar, full[v])
            if cnt == F:
                size = int(np.searchsorted(fvals, r_bar, side="right"))
                worst = max(worst, size / F)
                F *= 2
    return worst


def estimate_profile(
    inst: TdInstance,
    pairs: int = 256,
    times: int = 64,
    seed: int = 0,
    slope_mode: str = "margin",
    rank_targets: int = 64,
    margin: float = 1.5,
) -> MetricProfile:
    """Measure the instance constants on sampled pairs and a departure-time grid.

    Slopes come from grid difference quotients and from exact right
    derivatives along the shortest-path trees at the grid times.  The
    ``slope_mode`` picks what the builders get: "sampled" as measured,
    "margin" the sampled values times ``margin`` capped by the certified
    bounds, "certified" the path-budget bounds alone.
    """
    if inst.n < 2:
        raise TuningError("profile needs at least two vertices")
    if slope_mode not in ("certified", "sampled", "margin"):
        raise ValueError("slope_mode must be 'certified', 'sampled' or 'margin'")
    rng = np.random.default_rng(seed)
    k = min(inst.n, math.ceil((1 + math.sqrt(1 + 4 * pairs)) / 2))
    centres = sorted(int(x) for x in rng.choice(inst.n, size=k, replace=False))
    T = inst.period
    grid = [j * T / times for j in range(times)]
    step = T / times
    extra = sorted(int(x) for x in rng.choice(inst.n, size=min(inst.n, rank_targets), replace=False))
    targets = sorted(set(centres) | set(extra))

    # D[s][j][x]
    table: dict[int, list[dict[int, float]]] = {}
    ranks_D: list[float] = []
    ranks_G: list[float] = []
    up = 0.0
    dn = 0.0
    for s in centres:
        rows = []
        for t in grid:
            dist: dict[int, float] = {}
            par: dict[int, int] = {}
            order = []
            for cnt, (v, lab, p) in enumerate(grow(inst, s, t), start=1):
                dist[v] = lab
                par[v] = p
                order.append(v)
                if v != s and v in extra and lab > 0:
                    ranks_D.append(lab)
                    ranks_G.append(cnt)
            rows.append({x: dist[x] for x in targets if x in dist})
            der = tree_slopes(inst, order, dist, par, t)
            for x in targets:
                if x in der:
                    up = max(up, der[x] - 1.0)
                    dn = max(dn, 1.0 - der[x])
        table[s] = rows

    zeta = 1.0
    used = 0
    for s in centres:
        rows = table[s]
        for x in targets:
            if x == s or x not in rows[0]:
                continue
            used += 1
            vals = [rows[j][x] for j in range(times)]
            for j in range(times):
                q = (vals[(j + 1) % times] - vals[j]) / step
                up = max(up, q)
                dn = max(dn, -q)
            if x in table:
                back = table[x]
                if s in back[0]:
                    for j in range(times):
                        zeta = max(zeta, vals[j] / back[j][s])
    if used == 0:
        raise TuningError("no sampled pair is connected")

    lam, f_n, g_n = fit_rank_growth(np.array(ranks_D), np.array(ranks_G))
    diam_free = free_diameter(inst)
    diam_full = full_diameter_bound(inst)
    nu = math.log(diam_free) / math.log(T) if diam_free > 1 and T > 1 else float("nan")
    if not (nu > 0):
        warnings.warn(
            f"free-flow diameter {diam_free:.4g} and period {T:.4g} do not define a positive nu; using 1.0",
            stacklevel=2,
        )
        nu = 1.0
    expansion = expansion_factor(inst, centres[: min(8, len(centres))])
    cmin, cmax = certified_slopes(inst, diam_full)
    if slope_mode == "certified":
        lmin, lmax = cmin, cmax
    elif slope_mode == "sampled":
        lmin, lmax = min(dn, 1 - 1e-9), up
    else:
        lmin = min(margin * dn, cmin, 1 - 1e-9)
        lmax = min(margin * up, cmax)
    # the MAE bound lam_max * tau needs lam_max >= lam_min
    lmax = max(lmax, lmin)
    return MetricProfile(
        lam_min=lmin,
        lam_max=lmax,
        zeta=zeta,
        expansion=expansion,
        lam=lam,
        f_n=f_n,
        g_n=g_n,
        nu=nu,
        M=inst.max_cost,
        K=inst.breakpoint_total,
        K_max=inst.k_max,
        K_star=inst.k_star,
        lam_min_sampled=dn,
        lam_max_sampled=up,
        slope_mode=slope_mode,
        diam_free=diam_free,
        diam_full=diam_full,
        period=T,
        n=inst.n,
        grid_times=times,
        grid_pairs=used,
    )


def fit_rank_growth(D: np.ndarray, G: np.ndarray) -> tuple[float, float, float]:
    """Fit Gamma <= f * D**lam and D <= g * Gamma**(1/lam).

    lam is the least-squares slope of log Gamma on log D (at least 1); f and g
    are the tightest constants for that lam over the sample.
    """
    keep = (D > 0) & (G >= 2)
    if keep.sum() < 3:
        return 1.0, 1.0, 1.0
    x, y = np.log(D[keep]), np.log(G[keep])
    if np.ptp(x) == 0:
        lam = 1.0
    else:
        lam = max(1.0, float(np.polyfit(x, y, 1)[0]))
    f_n = max(1.0, float(np.max(G / D**lam)))
    g_n = max(1.0, float(np.max(D / G ** (1.0 / lam))))
    return lam, f_n, g_n


# ---------------------------------------------------------------- formulas


@dataclass
class TuningParams:
    mode: str
    eps: float
    alpha: float
    omega: float
    theta: float
    nu: float
    delta: float
    beta: float
    r: int
    gamma: float = 0.0
    k: int = 0
    xi: tuple[float, ...] = field(default_factory=tuple)
    chi: float = 0.0
    phi: float = 0.0

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.r < 0 or int(self.r) != self.r:
            raise ValueError("r must be a non-negative integer")
        self.r = int(self.r)
        self.xi = tuple(float(x) for x in self.xi)

    def rho(self, n: int) -> float:
        return n ** (-self.omega)

    def radius(self, period: float) -> float:
        return period**self.theta

    def to_dict(self) -> dict:
        d = asdict(self)
        d["xi"] = list(self.xi)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TuningParams":
        kw = dict(d)
        kw["xi"] = tuple(kw.get("xi", ()))
        for key in ("r", "k"):
            if key in kw:
                kw[key] = int(kw[key])
        return cls(**{f.name: kw[f.name] for f in fields(cls) if f.name in kw})


def _finish_r(x: float, floor_r: bool, hint: str) -> int:
    r = math.floor(x) - 1
    if r < 0:
        if floor_r:
            warnings.warn(f"recursion budget {r} floored to 0 ({hint})", stacklevel=3)
            return 0
        raise TuningError(f"recursion budget r={r} < 0; {hint}")
    return r


def _check_open(name: str, x: float, lo: float, hi: float) -> None:
    if not (lo < x < hi):
        raise TuningError(f"{name}={x} must lie in ({lo}, {hi})")


def tune_flat(
    n: int, alpha: float, nu: float, eps: float, psi: float, delta: float, beta: float, floor_r: bool = False
) -> TuningParams:
    _check_open("alpha", alpha, 0, 1)
    _check_open("delta", delta, alpha, 1)
    if nu <= 0:
        raise TuningError("nu must be positive")
    a2 = 2.0 / nu + alpha
    bmax = alpha * (1 + alpha) / a2
    if not (0 < beta <= bmax):
        raise TuningError(f"beta={beta} must lie in (0, {bmax:.6g}]")
    theta = (1 + alpha) / a2
    x = (delta / alpha) * a2 / ((beta / alpha) * a2 + (2.0 / nu - 1))
    r = _finish_r(x, floor_r, "use a larger delta or a smaller beta")
    return TuningParams("flat", eps, alpha, delta / (r + 1), theta, nu, delta, beta, r)


def tune_traponly(
    n: int, alpha: float, nu: float, eps: float, psi: float, delta: float, beta: float, floor_r: bool = False
) -> TuningParams:
    _check_open("alpha", alpha, 0, 1)
    _check_open("delta", delta, alpha, 1)
    if nu <= 0:
        raise TuningError("nu must be positive")
    bmax = alpha * alpha * nu
    if not (0 < beta <= bmax):
        raise TuningError(f"beta={beta} must lie in (0, {bmax:.6g}]")
    x = delta * (1 + alpha * nu) / (alpha + beta)
    r = _finish_r(x, floor_r, "use a larger delta or a smaller beta")
    return TuningParams("traponly", eps, alpha, delta / (r + 1), delta * nu / (r + 1), nu, delta, beta, r)


def budget_for_stretch(k: int, eps: float, psi: float) -> int:
    """Smallest recursion budget whose stretch bound is at most 1 + k*eps."""
    if k < 2:
        raise ValueError("k must be >= 2")
    return math.ceil(math.log(k / (k - 1)) / math.log(1 + eps / psi)) - 1


def xi_window(n: int, gamma: float, i: int, lam: float, zeta: float, lam_min: float) -> tuple[float, float]:
    ln = math.log(n)
    lo = ((1 + lam) * math.log(ln) + lam * math.log(1 + zeta / (1 - lam_min))) / ln
    return lo, 1.0 - gamma ** (-i)


def horn_budget(alpha: float, nu: float, gamma: float, delta: float, beta: float) -> float:
    """The real number whose floor minus one is the HORN recursion budget."""
    return (delta / alpha) * (2 / nu + alpha) * (1 - 1 / gamma) / (beta * (2 / (alpha * nu) + 1) + 2 / nu - 1)


def tune_horn(
    n: int,
    alpha: float,
    nu: float,
    gamma: float,
    k: int,
    delta: float,
    beta: float,
    profile: MetricProfile,
    eps: float,
    xi: tuple[float, ...] | None = None,
    floor_r: bool = False,
) -> TuningParams:
    _check_open("alpha", alpha, 0, 1)
    _check_open("delta", delta, alpha, 1)
    if gamma <= 1 or k < 1 or beta <= 0 or nu <= 0:
        raise TuningError("need gamma > 1, k >= 1, beta > 0, nu > 0")
    r = _finish_r(horn_budget(alpha, nu, gamma, delta, beta), floor_r, "use a larger delta or a smaller beta")
    windows = [xi_window(n, gamma, i, profile.lam, profile.zeta, profile.lam_min) for i in range(1, k + 1)]
    if xi is None:
        bad = [i for i, (lo, hi) in enumerate(windows, start=1) if not lo < hi]
        if bad:
            detail = ", ".join(f"level {i}: ({windows[i - 1][0]:.4g}, {windows[i - 1][1]:.4g})" for i in bad)
            raise TuningError(f"empty xi window for {detail}; pass xi explicitly or use a larger n")
        xi = tuple(0.5 * (lo + hi) for lo, hi in windows)
    else:
        xi = tuple(xi)
        if len(xi) != k:
            raise TuningError(f"need {k} xi values, got {len(xi)}")
        for i, (x, (lo, hi)) in enumerate(zip(xi, windows), start=1):
            if not lo < x < hi:
                warnings.warn(f"xi_{i}={x:.4g} outside its window ({lo:.4g}, {hi:.4g})", stacklevel=2)
    chi = (1 + alpha) / (2 + alpha * nu)
    sc = stretch_constants(eps, profile.zeta, profile.lam_max, r)
    return TuningParams(
        "horn",
        eps,
        alpha,
        delta / (r + 1),
        chi * nu,
        nu,
        delta,
        beta,
        r,
        gamma=gamma,
        k=k,
        xi=xi,
        chi=chi,
        phi=sc.phi,
    )
