import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import fifo_functions
from tdoracle.pwl import (
    PwlError,
    PwlFunction,
    arrival,
    compose_arrival,
    count_concavity_spoiling,
    eval_at,
    min_envelope,
    simplify,
    slope_range,
)

F = PwlFunction((0.0, 5.0), (2.0, 4.0), 10.0)


def test_eval_examples():
    assert eval_at(F, 0) == 2
    assert eval_at(F, 12.5) == pytest.approx(3)
    # wrap segment from (5,4) back to (10,2)
    assert eval_at(F, 7.5) == pytest.approx(3)


def test_eval_before_first_breakpoint_uses_wrap():
    f = PwlFunction((2.0, 6.0), (1.0, 3.0), 8.0)
    # wrap from (6,3) to (10,1): at t=1 (= 9 on the wrap) value is 1.5
    assert f(1.0) == pytest.approx(1.5)


def test_arrival_examples():
    assert arrival(PwlFunction.constant(2.0, 10.0), 3.0) == 5.0
    assert arrival(F, 7.5) == pytest.approx(10.5)


def test_compose_examples():
    c2, c3 = PwlFunction.constant(2.0, 10.0), PwlFunction.constant(3.0, 10.0)
    assert compose_arrival([c2, c3], 0.0) == 5.0
    assert compose_arrival([], 7.0) == 7.0
    g = PwlFunction((0.0, 5.0), (1.0, 3.0), 10.0)
    assert compose_arrival([g, c2], 4.0) == pytest.approx(8.6)


def test_compose_matches_stepwise_simulation():
    g = PwlFunction((0.0, 5.0), (1.0, 3.0), 10.0)
    t = 4.0
    for f in (g, PwlFunction.constant(2.0, 10.0)):
        t = t + f(t)
    assert compose_arrival([g, PwlFunction.constant(2.0, 10.0)], 4.0) == t


def test_min_envelope_examples():
    assert min_envelope(F, F) == F
    five, three = PwlFunction.constant(5, 10), PwlFunction.constant(3, 10)
    m = min_envelope(five, three)
    assert m.is_constant() and m(1.234) == 3
    line = PwlFunction((0.0, 8.0), (2.0, 10.0), 10.0)
    m = min_envelope(line, PwlFunction.constant(6.0, 10.0))
    assert (4.0, 6.0) in [(pytest.approx(t), pytest.approx(v)) for t, v in m.points]
    assert m(2.0) == pytest.approx(4.0) and m(6.0) == pytest.approx(6.0)


def test_slope_range_examples():
    assert slope_range(PwlFunction.constant(3.0, 4.0)) == (0.0, 0.0)
    lo, hi = slope_range(F)
    assert lo == pytest.approx(-0.4) and hi == pytest.approx(0.4)


def test_concavity_spoiling_examples():
    assert count_concavity_spoiling(PwlFunction.constant(1.0, 10.0)) == 0
    assert count_concavity_spoiling(PwlFunction((0.0, 5.0), (1.0, 6.0), 10.0)) == 1
    assert count_concavity_spoiling(PwlFunction((0.0, 5.0), (6.0, 1.0), 10.0)) == 1


@pytest.mark.parametrize(
    "times, values, period",
    [((), (), 1.0), ((0.5, 0.2), (1, 1), 1.0), ((0.0, 1.0), (1, 1), 1.0), ((0.0,), (math.nan,), 1.0), ((0.0,), (1,), 0.0)],
)
def test_invalid_functions_rejected(times, values, period):
    with pytest.raises(PwlError):
        PwlFunction(times, values, period)


def test_fifo_detection():
    assert F.is_fifo()
    steep = PwlFunction((0.0, 1.0), (5.0, 1.0), 10.0)
    assert not steep.is_fifo()


def test_scaled_and_tiled_keep_shape():
    s = F.scaled(3.0)
    assert s.period == 30 and s(22.5) == pytest.approx(3 * F(7.5))
    assert slope_range(s) == pytest.approx(slope_range(F))
    t = F.tiled(3)
    for x in np.linspace(0, 30, 61):
        assert t(x) == pytest.approx(F(x))


@given(fifo_functions(), st.floats(0, 100))
def test_eval_is_periodic(f, t):
    assert f(t + f.period) == pytest.approx(f(t), abs=1e-9 * f.max_value)


@given(fifo_functions(), st.floats(0, 50), st.floats(0, 50))
def test_arrival_is_nondecreasing(f, a, b):
    lo, hi = min(a, b), max(a, b)
    assert arrival(f, lo) <= arrival(f, hi) + 1e-9


@given(st.lists(fifo_functions(), min_size=1, max_size=4), st.floats(0, 50), st.floats(0, 50))
def test_compose_arrival_is_nondecreasing(fs, a, b):
    lo, hi = min(a, b), max(a, b)
    assert compose_arrival(fs, lo) <= compose_arrival(fs, hi) + 1e-9


@given(fifo_functions())
def test_generated_fifo_slopes_bounded(f):
    assert slope_range(f)[0] >= -1


@given(fifo_functions(), fifo_functions(), st.lists(st.floats(0, 10, exclude_max=True), min_size=20, max_size=20))
def test_min_envelope_is_pointwise_min(f, g, ts):
    m = min_envelope(f, g)
    for t in ts + list(f.times) + list(g.times):
        want = min(f(t), g(t))
        assert m(t) == pytest.approx(want, rel=1e-9, abs=1e-9)
        assert m(t) <= f(t) + 1e-9 and m(t) <= g(t) + 1e-9


@given(fifo_functions())
def test_simplify_preserves_values(f):
    s = simplify(f)
    assert s.k <= f.k
    for t in np.linspace(0, f.period, 37):
        assert s(t) == pytest.approx(f(t), rel=1e-9, abs=1e-9)


def test_simplify_drops_collinear_points():
    f = PwlFunction((0.0, 1.0, 2.0, 5.0), (1.0, 2.0, 3.0, 1.0), 10.0)
    assert simplify(f).times == (0.0, 2.0, 5.0)
