import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hmsn.geometry import (
    BoundaryViolationError,
    Curvature,
    DenominatorUnderflowError,
    check_in_ball,
    clip_euclidean,
    conformal_factor,
    distance,
    exp_map,
    log_map,
    mobius_add,
    project_to_ball,
)


def ball_points(rng, n, d, c, rmax=0.9):
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * rng.uniform(0, rmax, (n, 1)) / math.sqrt(c)


# -- curvature -------------------------------------------------------------------


def test_curvature_invariants():
    with pytest.raises(ValueError):
        Curvature(0.0)
    with pytest.raises(ValueError):
        Curvature(1.0, ball_eps=1e-2)
    with pytest.raises(ValueError):
        Curvature(1.0, zero_eps=1e-6)
    k = Curvature(4.0)
    assert k.sqrt_c == 2.0
    assert k.max_norm == pytest.approx((1 - 1e-5) / 2)


# -- conformal factor -------------------------------------------------------------


def test_conformal_factor_examples():
    assert conformal_factor(np.zeros(5)) == 2.0
    assert conformal_factor(np.array([0.5, 0.0])) == pytest.approx(2 / 0.75, abs=1e-15)
    assert conformal_factor(np.array([0.5, 0.0]), 1e-12) == pytest.approx(2.0, abs=1e-11)


def test_conformal_factor_rejects_boundary():
    with pytest.raises(BoundaryViolationError):
        conformal_factor(np.array([1.0, 0.0]))


# -- Möbius addition ----------------------------------------------------------------


def test_mobius_examples():
    np.testing.assert_allclose(mobius_add(np.zeros(2), np.array([0.3, 0.1])), [0.3, 0.1], atol=1e-15)
    v = np.array([0.3, 0.1])
    np.testing.assert_allclose(mobius_add(-v, v), [0.0, 0.0], atol=1e-15)
    out = mobius_add(np.array([0.1, 0.0]), np.array([0.0, 0.2]), 1e-8)
    np.testing.assert_allclose(out, [0.1, 0.2], atol=1e-6)


def test_mobius_matches_formula():
    rng = np.random.default_rng(0)
    for c in (0.1, 1.0, 3.0):
        v, w = ball_points(rng, 50, 4, c), ball_points(rng, 50, 4, c)
        vw = np.sum(v * w, 1, keepdims=True)
        v2 = np.sum(v * v, 1, keepdims=True)
        w2 = np.sum(w * w, 1, keepdims=True)
        ref = ((1 + 2 * c * vw + c * w2) * v + (1 - c * v2) * w) / (1 + 2 * c * vw + c * c * v2 * w2)
        np.testing.assert_allclose(mobius_add(v, w, c), ref, atol=1e-13)


def test_mobius_rejects_outside_points():
    with pytest.raises(BoundaryViolationError):
        mobius_add(np.array([1.2, 0.0]), np.zeros(2))


def test_mobius_denominator_underflow():
    # (1 - c||v||^2)^2 is the smallest denominator; a tight margin lets it underflow
    k = Curvature(1.0, ball_eps=1e-9)
    v = np.array([1 - 2e-9, 0.0])
    with pytest.raises(DenominatorUnderflowError):
        mobius_add(v, -v, k)


@pytest.mark.parametrize("c", [0.1, 1.0])
def test_left_identity_and_inverse(c):
    rng = np.random.default_rng(1)
    v = ball_points(rng, 10_000, 5, c)
    np.testing.assert_allclose(mobius_add(np.zeros_like(v), v, c), v, atol=1e-10)
    np.testing.assert_allclose(mobius_add(-v, v, c), 0.0, atol=1e-10)


@pytest.mark.parametrize("k", [4, 5, 6, 7, 8])
def test_euclidean_limit_order(k):
    c = 10.0**-k
    rng = np.random.default_rng(k)
    v = rng.uniform(-1, 1, (2000, 3))
    w = rng.uniform(-1, 1, (2000, 3))
    err = np.linalg.norm(mobius_add(v, w, c) - (v + w), axis=1)
    bound = 10 * c * (np.linalg.norm(v, axis=1) + np.linalg.norm(w, axis=1)) ** 3
    assert np.all(err <= bound + 1e-15)


# -- exp / log ----------------------------------------------------------------------


def test_exp_log_examples():
    np.testing.assert_array_equal(exp_map(np.zeros(3)), np.zeros(3))
    np.testing.assert_allclose(exp_map(np.array([1.0, 0.0])), [math.tanh(1.0), 0.0], atol=1e-15)
    np.testing.assert_allclose(exp_map(np.array([0.2, 0.0]), None, 1e-12), [0.2, 0.0], atol=1e-12)
    np.testing.assert_allclose(log_map(np.array([math.tanh(1.0), 0.0])), [1.0, 0.0], atol=1e-12)
    v = np.array([0.3, -0.2])
    np.testing.assert_array_equal(log_map(v, v), np.zeros(2))


def test_exp_returns_base_for_zero_vector():
    v = np.array([0.3, -0.4])
    np.testing.assert_array_equal(exp_map(np.zeros(2), v), v)
    np.testing.assert_array_equal(exp_map(np.full(2, 1e-14), v), v)


def test_exp_log_origin_roundtrip():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((10_000, 4))
    x *= rng.uniform(0, 3, (10_000, 1)) / np.linalg.norm(x, axis=1, keepdims=True)
    np.testing.assert_allclose(log_map(exp_map(x)), x, atol=1e-8)


@pytest.mark.parametrize("c", [0.1, 1.0])
def test_exp_log_roundtrip_arbitrary_base(c):
    # tangent vectors limited to Riemannian length 6 (tanh(3) from the base);
    # longer steps land inside the ball_eps margin where projection is lossy
    rng = np.random.default_rng(3)
    v = ball_points(rng, 10_000, 4, c, 0.9)
    lam = conformal_factor(v, c, keepdims=True)
    x = rng.standard_normal((10_000, 4))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    x *= np.minimum(rng.uniform(0, 3, (10_000, 1)), 6.0 / (math.sqrt(c) * lam))
    np.testing.assert_allclose(log_map(exp_map(x, v, c), v, c), x, atol=1e-7)


def test_exp_map_formula_at_base():
    rng = np.random.default_rng(4)
    c = 0.7
    v = ball_points(rng, 20, 3, c, 0.6)
    x = rng.standard_normal((20, 3)) * 0.3
    lam = conformal_factor(v, c, keepdims=True)
    n = np.linalg.norm(x, axis=1, keepdims=True)
    u = np.tanh(math.sqrt(c) * lam * n / 2) * x / (math.sqrt(c) * n)
    np.testing.assert_allclose(exp_map(x, v, c), mobius_add(v, u, c), atol=1e-13)


# -- distance -----------------------------------------------------------------------


def test_distance_examples():
    assert distance(np.zeros(2), np.array([0.5, 0.0])) == pytest.approx(1.0986122886681098, abs=1e-12)
    x = np.array([0.2, 0.3])
    assert distance(x, x) == 0.0


@pytest.mark.parametrize("c", [0.1, 1.0])
def test_distance_symmetric_nonnegative(c):
    rng = np.random.default_rng(5)
    x, y = ball_points(rng, 10_000, 3, c), ball_points(rng, 10_000, 3, c)
    d1, d2 = distance(x, y, c), distance(y, x, c)
    assert np.all(d1 >= 0)
    np.testing.assert_allclose(d1, d2, atol=1e-10)


def test_distance_from_origin_closed_form():
    rng = np.random.default_rng(6)
    for c in (0.1, 1.0, 2.5):
        x = ball_points(rng, 100, 3, c)
        ref = 2 / math.sqrt(c) * np.arctanh(math.sqrt(c) * np.linalg.norm(x, axis=1))
        np.testing.assert_allclose(distance(np.zeros_like(x), x, c), ref, rtol=1e-12, atol=1e-14)


def test_distance_triangle_inequality():
    rng = np.random.default_rng(7)
    a, b, c = (ball_points(rng, 2000, 3, 1.0) for _ in range(3))
    assert np.all(distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9)


# -- clipping / projection ------------------------------------------------------------


def test_clip_examples():
    np.testing.assert_array_equal(clip_euclidean(np.array([0.1, 0.1]), 2.3), [0.1, 0.1])
    np.testing.assert_allclose(clip_euclidean(np.array([6.0, 8.0]), 5.0), [3.0, 4.0], atol=1e-15)


@given(arrays(np.float64, (7, 3), elements=st.floats(-1e3, 1e3)), st.floats(0.01, 10))
@settings(max_examples=100, deadline=None)
def test_clip_norm_bound(x, r):
    assert np.all(np.linalg.norm(clip_euclidean(x, r), axis=-1) <= r * (1 + 1e-12))


def test_project_examples():
    np.testing.assert_array_equal(project_to_ball(np.zeros(3)), np.zeros(3))
    x = np.array([1.5, 0.0])
    assert np.linalg.norm(project_to_ball(x)) == pytest.approx(1 - 1e-5, abs=1e-15)


@given(arrays(np.float64, (5, 4), elements=st.floats(-10, 10)), st.sampled_from([0.1, 1.0, 4.0]))
@settings(max_examples=100, deadline=None)
def test_project_idempotent_and_inside(x, c):
    p = project_to_ball(x, c)
    np.testing.assert_array_equal(project_to_ball(p, c), p)
    check_in_ball(p, c)


# -- ball invariant fuzz ---------------------------------------------------------------


@given(st.integers(0, 2**31 - 1), st.sampled_from([0.1, 1.0]))
@settings(max_examples=50, deadline=None)
def test_outputs_stay_inside_ball(seed, c):
    rng = np.random.default_rng(seed)
    k = Curvature(c)
    near = ball_points(rng, 64, 3, c, 1 - 1e-5)
    other = ball_points(rng, 64, 3, c, 1 - 1e-5)
    lim = k.max_norm * (1 + 1e-12)
    for out in (mobius_add(near, other, k), exp_map(rng.standard_normal((64, 3)) * 5, near, k),
                exp_map(rng.standard_normal((64, 3)) * 50, None, k)):
        assert np.all(np.linalg.norm(out, axis=1) <= lim)
