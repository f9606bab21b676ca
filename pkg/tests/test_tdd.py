import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_travel_time, random_small_instance, small_instances
from tdoracle.instance import GeneratorConfig, TdInstance, generate
from tdoracle.pwl import PwlFunction
from tdoracle.tdd import (
    EXHAUSTED,
    SIZE,
    TARGET,
    dijkstra_rank,
    expanded_ball,
    static_ball,
    stop_at_size,
    stop_at_target,
    tdsp_one_to_all,
    travel_time,
)


def fixture3() -> TdInstance:
    # o=0, a=1, d=2; the a->d arc falls faster than FIFO allows, so skip validation
    c = PwlFunction.constant
    costs = [c(2.0, 10.0), PwlFunction((0.0, 5.0), (10.0, 1.0), 10.0), c(9.0, 10.0)]
    return TdInstance(3, [0, 1, 0], [1, 2, 2], costs, 10.0, check=False)


def fixture6() -> TdInstance:
    edges = [(0, 1, 1.0), (1, 2, 1.0), (0, 3, 2.5), (3, 4, 0.5), (2, 5, 4.0), (4, 5, 1.0), (5, 0, 1.0), (2, 0, 3.0)]
    tails = [u for u, _, _ in edges]
    heads = [v for _, v, _ in edges]
    # every arc varies between w and 1.5w over the period
    costs = [PwlFunction((0.0, 5.0), (w, 1.5 * w), 10.0) for _, _, w in edges]
    return TdInstance(6, tails, heads, costs, 10.0)


def brute_static(inst: TdInstance, metric: str = "free") -> np.ndarray:
    w = inst.free_flow if metric == "free" else inst.full_congestion
    d = np.full((inst.n, inst.n), math.inf)
    np.fill_diagonal(d, 0.0)
    for u, v, c in zip(inst.tails, inst.heads, w):
        d[u, v] = min(d[u, v], c)
    for k in range(inst.n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def test_fixture_at_zero():
    inst = fixture3()
    assert travel_time(inst, 0, 2, 0.0) == pytest.approx(8.4)
    assert dijkstra_rank(inst, 0, 2, 0.0) == 3
    ball = tdsp_one_to_all(inst, 0, 0.0)
    assert ball.order == [0, 1, 2] and ball.path_to(2) == [0, 1, 2]


def test_fixture_at_four_matches_enumeration():
    inst = fixture3()
    # via a: arrive at 6, wrap segment (5,1)->(10,10) gives 2.8
    assert travel_time(inst, 0, 2, 4.0) == pytest.approx(4.8)
    assert travel_time(inst, 0, 2, 4.0) == pytest.approx(brute_travel_time(inst, 0, 2, 4.0))


def test_rank_of_origin_and_unreachable():
    inst = fixture3()
    assert dijkstra_rank(inst, 1, 1, 3.0) == 1
    assert dijkstra_rank(inst, 2, 0, 0.0) is None
    assert travel_time(inst, 2, 0, 0.0) == math.inf
    res = tdsp_one_to_all(inst, 2, 0.0, stop=stop_at_target(0))
    assert res.stop_reason == EXHAUSTED


@given(small_instances(), st.floats(0, 30))
def test_labels_match_brute_force(inst, t):
    ball = tdsp_one_to_all(inst, 0, t)
    for d in range(inst.n):
        want = brute_travel_time(inst, 0, d, t)
        got = ball.dist.get(d, math.inf)
        if math.isinf(want):
            assert math.isinf(got)
        else:
            assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_constant_costs_match_static_dijkstra():
    inst = generate(GeneratorConfig(n=150, spoiling_fraction=0.0, seed=2))
    flat = inst.map_costs(lambda f: PwlFunction.constant(f.min_value, f.period))
    ref = brute_static(flat)
    for o in (0, 17, 99):
        for t in (0.0, 3.3):
            ball = tdsp_one_to_all(flat, o, t)
            for v, lab in ball.dist.items():
                assert lab == pytest.approx(ref[o, v], rel=1e-12)


def test_settle_order_monotone_and_size_stop():
    inst = random_small_instance(11, n_max=8)
    big = generate(GeneratorConfig(n=200, seed=4))
    for g in (inst, big):
        ball = tdsp_one_to_all(g, 0, 1.0)
        labels = [ball.dist[v] for v in ball.order]
        assert labels == sorted(labels)
    res = tdsp_one_to_all(big, 5, 2.0, stop=stop_at_size(17))
    assert res.size == 17 and res.stop_reason == SIZE
    res = tdsp_one_to_all(big, 5, 2.0, stop=stop_at_target(42))
    assert res.order[-1] == 42 and res.stop_reason == TARGET


def test_ties_broken_by_vertex_id():
    c = PwlFunction.constant(1.0, 4.0)
    inst = TdInstance(4, [0, 0, 0], [3, 1, 2], [c, c, c], 4.0)
    assert tdsp_one_to_all(inst, 0, 0.0).order == [0, 1, 2, 3]


def test_static_ball_examples():
    inst = fixture6()
    assert static_ball(inst, 0, "free", size=inst.n).size == inst.n
    assert static_ball(inst, 0, "free", radius=0.0).order == [0]
    ref = brute_static(inst)[0]
    ball = static_ball(inst, 0, "free", size=3)
    assert sorted(ball.order) == sorted(np.argsort(ref, kind="stable")[:3].tolist())
    full = static_ball(inst, 0, "full")
    for v, d in full.dist.items():
        assert d == pytest.approx(brute_static(inst, "full")[0, v])


def test_expanded_ball_constant_costs_equals_free_ball():
    inst = fixture6().map_costs(lambda f: PwlFunction.constant(f.min_value, f.period))
    for F in range(1, 7):
        assert expanded_ball(inst, 0, F) == set(static_ball(inst, 0, "free", size=F).order)


def test_expanded_ball_grows_under_congestion():
    inst = fixture6()
    inner = static_ball(inst, 0, "free", size=3).order
    full = brute_static(inst, "full")[0]
    free = brute_static(inst, "free")[0]
    r_bar = max(full[v] for v in inner)
    want = {v for v in range(inst.n) if free[v] <= r_bar}
    got = expanded_ball(inst, 0, 3)
    assert got == want and len(got) > 3
    assert expanded_ball(inst, 0, inst.n) == set(range(inst.n))


@settings(max_examples=30)
@given(small_instances(), st.floats(0, 10), st.floats(0, 10))
def test_fifo_arrival_monotone(inst, a, b):
    lo, hi = min(a, b), max(a, b)
    x, y = tdsp_one_to_all(inst, 0, lo), tdsp_one_to_all(inst, 0, hi)
    for v in x.dist:
        assert lo + x.dist[v] <= hi + y.dist[v] + 1e-9
