import math

import numpy as np
import pytest

from tdoracle.flat import (
    EmptyLandmarkSet,
    landmark_count_bounds,
    preprocess_traponly,
    sample_landmarks,
    split_landmark,
    store_summary,
)
from tdoracle.store import check_coverage, dumps, verify_store
from tdoracle.tdd import expanded_ball, static_ball, travel_time

from conftest import traponly_params


def test_rho_one_picks_everything():
    assert sample_landmarks(50, 1.0, 3) == list(range(50))


def test_landmark_count_concentrates():
    lo, hi = landmark_count_bounds(10_000, 0.5)
    assert (lo, hi) == pytest.approx((4850, 5150))
    for seed in range(5):
        assert lo <= len(sample_landmarks(10_000, 0.5, seed)) <= hi


def test_sampling_is_deterministic():
    assert sample_landmarks(1000, 0.05, 9) == sample_landmarks(1000, 0.05, 9)
    assert sample_landmarks(1000, 0.05, 9) != sample_landmarks(1000, 0.05, 10)


def test_empty_landmark_set_after_retry():
    with pytest.raises(EmptyLandmarkSet, match="retry"):
        sample_landmarks(3, 1e-9, 0)


def test_flat_coverage_and_spot_check(flat500):
    assert flat500.mode == "flat"
    assert check_coverage(flat500) == len(flat500.landmarks)
    assert verify_store(flat500, seed=3, frac=0.02) > 0
    info = store_summary(flat500)
    assert info["flagged"] == 0 and info["landmarks"] == len(flat500.landmarks)


def test_flat_sandwich_on_nearby_and_far(inst500, flat500):
    rng = np.random.default_rng(5)
    eps = flat500.eps
    for ell in sorted(flat500.landmarks)[:4]:
        e = flat500.landmarks[ell]
        free = static_ball(inst500, ell, "free").dist
        near = [v for v in e.summaries if free[v] <= e.radius]
        far = [v for v in e.summaries if free[v] > e.radius]
        for group in (near, far):
            if not group:
                continue
            for v in rng.choice(group, size=min(5, len(group)), replace=False):
                for t in rng.uniform(0, inst500.period, 4):
                    exact = travel_time(inst500, ell, int(v), t)
                    got = e.summaries[int(v)](t)
                    assert exact * (1 - 1e-9) <= got <= (1 + eps) * exact * (1 + 1e-9)


def test_traponly_stores_only_faraway(inst500, trap500):
    assert check_coverage(trap500) == len(trap500.landmarks)
    for ell, e in trap500.landmarks.items():
        assert e.coverage == "faraway" and e.bis_calls == 0
        free = static_ball(inst500, ell, "free").dist
        assert all(free[v] > e.radius for v in e.summaries)
    verify_store(trap500, seed=1, frac=0.05)


def test_traponly_small_radius_is_all_trap(inst500, prof500):
    # nearest neighbours force a fine grid, so lift the cell cap
    e = split_landmark(inst500, 10, 0.5, prof500, radius=1e-9, with_bis=False, cell_cap=2000)
    assert e.nearby == 1 and len(e.summaries) == inst500.n - 1


def test_expanded_ball_cap_matches(inst500, flat500):
    for ell in sorted(flat500.landmarks)[:3]:
        e = flat500.landmarks[ell]
        assert e.ball_cap == len(expanded_ball(inst500, ell, e.nearby))


def test_trap_calls_match_cell_count(inst500, trap500):
    for e in trap500.landmarks.values():
        if e.summaries:
            assert e.trap_calls == math.ceil(inst500.period / e.tau_star)


def test_build_is_deterministic(inst500, prof500, trap500):
    again = preprocess_traponly(inst500, traponly_params(inst500, prof500), prof500, seed=0)
    assert dumps(again) == dumps(trap500)


def test_explicit_landmarks(inst500, prof500):
    t = preprocess_traponly(inst500, traponly_params(inst500, prof500), prof500, landmarks=[4, 9])
    assert sorted(t.landmarks) == [4, 9]
