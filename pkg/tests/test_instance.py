import time

import numpy as np
import pytest

from tdoracle.instance import (
    FifoViolation,
    GeneratorConfig,
    TdiParseError,
    TdInstance,
    dumps,
    generate,
    load,
    loads,
    normalize_period,
    save,
)
from tdoracle.pwl import PwlFunction, slope_range
from tdoracle.tdd import travel_time
from tdoracle.tuning import estimate_profile


def fixture3() -> TdInstance:
    # the hand-traced TDD fixture drops 10 -> 1 over 5 time units (slope -1.8),
    # which the loader rejects; this variant keeps the shape but respects FIFO
    c = PwlFunction.constant
    return TdInstance(3, [0, 1, 0], [1, 2, 2], [c(2.0, 10.0), PwlFunction((0.0, 5.0), (5.0, 1.0), 10.0), c(9.0, 10.0)], 10.0)


def same_instance(a: TdInstance, b: TdInstance) -> bool:
    return (a.n, a.tails, a.heads, a.period) == (b.n, b.tails, b.heads, b.period) and list(a.costs) == list(b.costs)


def test_generate_is_deterministic_and_fifo():
    cfg = GeneratorConfig(n=150, seed=3)
    a, b = generate(cfg), generate(cfg)
    assert dumps(a) == dumps(b)
    assert all(f.is_fifo() for f in a.costs)
    assert a.is_strongly_connected()
    assert a.period == pytest.approx(150**0.5)


def test_generate_seed_changes_instance():
    assert dumps(generate(GeneratorConfig(n=80, seed=1))) != dumps(generate(GeneratorConfig(n=80, seed=2)))


def test_no_spoiling_gives_k_star_zero():
    inst = generate(GeneratorConfig(n=120, spoiling_fraction=0.0, seed=4))
    assert inst.k_star == 0


def test_grid_is_strongly_connected():
    inst = generate(GeneratorConfig(n=100, topology="grid", seed=2))
    assert inst.n == 100 and inst.is_strongly_connected()


def test_lam_target_bounds_arc_and_travel_time_slopes():
    inst = generate(GeneratorConfig(n=200, lam_max_target=0.2, seed=7))
    for f in inst.costs:
        lo, hi = slope_range(f)
        assert -0.2 - 1e-9 <= lo and hi <= 0.2 + 1e-9
    prof = estimate_profile(inst, pairs=64, times=32, seed=1, slope_mode="sampled")
    assert prof.lam_max <= 0.25


def test_generator_rejects_dense_graphs():
    with pytest.raises(ValueError, match="avg_degree"):
        generate(GeneratorConfig(n=50, avg_degree=12))


def test_grid_10k_is_fast():
    t0 = time.perf_counter()
    inst = generate(GeneratorConfig(n=10_000, topology="grid", seed=0))
    assert inst.n == 10_000
    assert time.perf_counter() - t0 < 10


def test_tdi_round_trip(tmp_path):
    inst = fixture3()
    p = tmp_path / "f.tdi"
    save(inst, p)
    assert same_instance(load(p), inst)
    g = generate(GeneratorConfig(n=60, seed=9))
    assert dumps(loads(dumps(g))) == dumps(g)
    assert same_instance(loads(dumps(g)), g)


def test_fifo_violation_names_arc():
    text = "tdi 1 2 2 10\narc 0 1 1\n0 1\narc 1 0 2\n0 5\n2 2\n"
    with pytest.raises(FifoViolation) as e:
        loads(text)
    assert e.value.arc == 1 and e.value.slope == pytest.approx(-1.5)


@pytest.mark.parametrize(
    "text, line",
    [
        ("tdi 2 1 0 10\n", 1),
        ("tdi 1 2 1 10\narc 0 5 1\n0 1\n", 2),
        ("tdi 1 2 1 10\n# note\narc 0 1 2\n0 1\nfoo\n", 5),
        ("tdi 1 2 1 10\narc 0 1 1\n", 3),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(TdiParseError) as e:
        loads(text)
    assert e.value.line == line


def test_empty_graph():
    inst = loads("tdi 1 0 0 5\n")
    assert inst.n == 0 and inst.m == 0


def test_normalize_fixed_point():
    # 4-cycle with half-unit arcs: diameter 1.5 <= T = 2 = 4**0.5
    small = TdInstance(4, [0, 1, 2, 3], [1, 2, 3, 0], [PwlFunction.constant(0.5, 2.0)] * 4, 2.0)
    assert normalize_period(small, 0.5) is small


def test_normalize_doubles_and_keeps_argmin():
    c = PwlFunction.constant
    inst = TdInstance(
        3, [0, 1, 0], [1, 2, 2], [c(1.0, 10.0), PwlFunction((0.0, 5.0), (1.0, 2.0), 10.0), c(2.5, 10.0)], 10.0
    )
    # n**alpha = 20 with n=400 needs alpha = 0.5; pad the vertex count instead
    big = TdInstance(400, inst.tails, inst.heads, inst.costs, 10.0)
    out = normalize_period(big, 0.5)
    assert out.period == pytest.approx(20.0)
    for f, g in zip(big.costs, out.costs):
        for t in np.linspace(0, 10, 21):
            assert g(2 * t) == pytest.approx(2 * f(t))
    for t in (0.0, 3.0, 7.5):
        via = travel_time(big, 0, 1, t) + big.costs[1](t + big.costs[0](t))
        direct = big.costs[2](t)
        assert (via < direct) == (travel_time(out, 0, 1, 2 * t) + out.costs[1](2 * t + out.costs[0](2 * t)) < out.costs[2](2 * t))


def test_normalize_tiles_short_period():
    # a 26-vertex path with unit arcs has free-flow diameter 25 > T = 10
    n = 26
    f = PwlFunction((0.0, 5.0), (1.0, 1.2), 10.0)
    inst = TdInstance(n, list(range(n - 1)), list(range(1, n)), [f] * (n - 1), 10.0)
    out = normalize_period(inst, 0.5)
    assert out.period == pytest.approx(n**0.5)
    # three copies then rescale by sqrt(26)/30
    s = n**0.5 / 30
    assert out.costs[0](0.0) == pytest.approx(s)
    assert out.costs[0](10 * s) == pytest.approx(s)
    assert out.diameter("free") == pytest.approx(25 * s)
    assert out.diameter("free") <= out.period
