import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdoracle.instance import GeneratorConfig, generate
from tdoracle.pwl import PwlFunction
from tdoracle.tdd import static_ball, travel_time
from tdoracle.trap import (
    CellCapError,
    SlopeBoundError,
    build_cell,
    build_summaries,
    faraway_set,
    sufficient_tau,
)
from tdoracle.tuning import MetricProfile, estimate_profile

from test_tdd import fixture6


def intersect(p, a, q, b):
    """Crossing of y = p + a*t and y = q + b*t."""
    t = (q - p) / (a - b)
    return t, p + a * t


def test_build_cell_example():
    cell = build_cell(5.0, 7.0, 0.0, 10.0, 0.5, 1.0)
    t, v = cell.upper_peak
    assert t == pytest.approx(14 / 3)
    assert v == pytest.approx(9.5 / 1.5 + 10 / 3)
    # independent: rising leg 5 + t, falling leg 7 + 0.5*(10 - t)
    assert (t, v) == pytest.approx(intersect(5.0, 1.0, 12.0, -0.5))
    tl, vl = cell.lower_valley
    assert (tl, vl) == pytest.approx(intersect(5.0, -0.5, -3.0, 1.0))


def test_symmetric_cell_mae_is_lam_tau():
    cell = build_cell(4.0, 4.0, 0.0, 2.0, 0.3, 0.3)
    assert cell.mae == pytest.approx(0.3 * 2.0)


def test_static_cell_needs_equal_samples():
    cell = build_cell(3.0, 3.0, 0.0, 1.0, 0.0, 0.0)
    assert cell.upper(0.5) == cell.lower(0.5) == 3.0
    with pytest.raises(SlopeBoundError):
        build_cell(3.0, 3.5, 0.0, 1.0, 0.0, 0.0)


def test_sufficient_tau_examples():
    assert sufficient_tau(10.0, 1.0, 0.5) == pytest.approx(10.0)
    assert sufficient_tau(10.0, 1e12, 0.5) == pytest.approx(20.0)
    assert sufficient_tau(10.0, 0.5, 0.0) == math.inf


def test_faraway_set_splits_between_taus():
    inst = fixture6()
    free = static_ball(inst, 0, "free").dist
    taus = sorted({sufficient_tau(d, 0.5, 0.4) for v, d in free.items() if v != 0})
    lo, hi = taus[1], taus[2]
    cut = 0.5 * (lo + hi)
    got = faraway_set(inst, 0, cut, 0.5, 0.4)
    assert got == {v for v, d in free.items() if sufficient_tau(d, 0.5, 0.4) > cut}
    assert got and got != set(free) - {0}
    assert faraway_set(inst, 0, 1e-12, 0.5, 0.4) == set(free) - {0}
    assert faraway_set(inst, 0, math.inf, 0.5, 0.4) == set()


@given(
    st.floats(1.0, 20.0),
    st.floats(-0.4, 0.9),
    st.floats(0.0, 0.9),
    st.floats(0.05, 1.5),
    st.floats(0.1, 5.0),
)
def test_cell_envelope_invariants(d_s, frac, lam_min, lam_max, tau):
    # pick d_f consistent with the slope bounds
    d_f = d_s + (frac * lam_max * tau if frac >= 0 else frac * lam_min * tau)
    cell = build_cell(d_s, d_f, 0.0, tau, lam_min, lam_max)
    for t in np.linspace(0.0, tau, 33):
        assert cell.lower(t) <= cell.upper(t) + 1e-9
    assert cell.upper(0.0) == pytest.approx(d_s) and cell.upper(tau) == pytest.approx(d_f)
    assert cell.mae <= max(lam_max, lam_min) * tau + 1e-9
    gap = [cell.upper(t) - cell.lower(t) for t in np.linspace(0.0, tau, 65)]
    assert max(gap) <= cell.mae + 1e-9


@pytest.fixture(scope="module")
def inst200():
    return generate(GeneratorConfig(n=200, seed=8))


@pytest.fixture(scope="module")
def prof200(inst200):
    return estimate_profile(inst200, pairs=96, times=48, seed=0)


def test_empty_destinations():
    inst = fixture6()
    prof = MetricProfile(lam_min=0.1, lam_max=0.1)
    assert build_summaries(inst, 0, [], 0.5, prof).summaries == {}
    assert build_summaries(inst, 0, [0], 0.5, prof).summaries == {}


def test_static_instance_gives_exact_summaries():
    inst = generate(GeneratorConfig(n=60, seed=3)).map_costs(lambda f: PwlFunction.constant(f.min_value, f.period))
    res = build_summaries(inst, 0, range(1, 60), 0.5, MetricProfile(lam_min=0.0, lam_max=0.0))
    assert res.calls == 1
    for v, s in res.summaries.items():
        assert s.is_constant() and s(1.0) == pytest.approx(travel_time(inst, 0, v, 0.0))


def test_cell_cap():
    inst = fixture6()
    with pytest.raises(CellCapError, match="larger tau"):
        build_summaries(inst, 0, [1], 0.5, MetricProfile(lam_min=0.5, lam_max=0.9), cell_cap=2)


def test_sandwich_on_generated_instance(inst200, prof200):
    eps = 0.5
    rng = np.random.default_rng(0)
    T = inst200.period
    for ell in (3, 77, 150):
        free = static_ball(inst200, ell, "free").dist
        tau = float(np.median([sufficient_tau(d, eps, prof200.lam_max) for d in free.values()]))
        far = faraway_set(inst200, ell, tau, eps, prof200.lam_max, free)
        res = build_summaries(inst200, ell, far, eps, prof200, keep_cells=True)
        n_cells = math.ceil(T / res.tau_star)
        assert res.calls == n_cells
        assert len(far) >= 20
        for v in rng.choice(sorted(far), size=20, replace=False):
            s = res.summaries[int(v)]
            assert s.k <= 2 * n_cells
            assert res.max_mae[int(v)] <= prof200.lam_max * res.tau_star + 1e-9
            for t in rng.uniform(0, T, size=8):
                exact = travel_time(inst200, ell, int(v), t)
                assert exact * (1 - 1e-9) <= s(t) <= (1 + eps) * exact * (1 + 1e-9)
