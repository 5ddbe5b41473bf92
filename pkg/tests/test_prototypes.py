import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmsn.geometry import BoundaryViolationError, distance
from hmsn.prototypes import (
    EUCLIDEAN,
    IDEAL,
    LEARNABLE,
    PrototypeBank,
    busemann,
    init_learnable,
    min_pairwise_angle,
    place_ideal,
)


def test_circle_placement_is_exact():
    bank = place_ideal(8, 2, np.random.default_rng(0))
    ang = np.sort(np.arctan2(bank.vectors[:, 1], bank.vectors[:, 0]) % (2 * np.pi))
    np.testing.assert_allclose(np.diff(ang), 2 * np.pi / 8, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(bank.vectors, axis=1), 1.0, atol=1e-15)


def test_antipodal_pair():
    bank = place_ideal(2, 5, np.random.default_rng(1))
    assert min_pairwise_angle(bank.vectors) == pytest.approx(math.pi, abs=1e-6)


@pytest.mark.parametrize("K", [3, 4, 5])
def test_simplex_when_k_at_most_d_plus_one(K):
    # the regular simplex is the unique optimum: all cosines equal -1/(K-1)
    bank = place_ideal(K, 4, np.random.default_rng(K))
    assert min_pairwise_angle(bank.vectors) == pytest.approx(math.acos(-1 / (K - 1)), abs=1e-4)


def test_octahedron_in_three_dimensions():
    bank, hist = place_ideal(6, 3, np.random.default_rng(2), return_history=True)
    angle = math.degrees(min_pairwise_angle(bank.vectors))
    assert 85.0 <= angle <= 90.0 + 1e-6
    assert all(b <= a for a, b in zip(hist, hist[1:]))


def test_placement_is_seed_deterministic():
    a = place_ideal(10, 4, np.random.default_rng(7)).vectors
    b = place_ideal(10, 4, np.random.default_rng(7)).vectors
    np.testing.assert_array_equal(a, b)


def test_ideal_bank_is_read_only():
    bank = place_ideal(4, 3, np.random.default_rng(0))
    assert not bank.trainable
    with pytest.raises(ValueError):
        bank.vectors[0, 0] = 0.0


def test_bank_validation():
    with pytest.raises(ValueError):
        PrototypeBank(IDEAL, np.array([[1.0, 0.0], [0.5, 0.0]]))
    with pytest.raises(ValueError):
        PrototypeBank("cube", np.eye(2))
    with pytest.raises(ValueError):
        PrototypeBank(LEARNABLE, np.ones((1, 3)) * 0.1)
    with pytest.raises(BoundaryViolationError):
        PrototypeBank(LEARNABLE, np.array([[1.0, 0.0], [0.0, 0.1]]))
    with pytest.raises(ValueError):
        place_ideal(1, 3, np.random.default_rng(0))


def test_learnable_init_statistics():
    bank = init_learnable(4000, 16, np.random.default_rng(3))
    assert bank.mode == LEARNABLE and bank.trainable
    assert abs(bank.vectors.std() - 0.01) < 2e-4
    assert abs(bank.vectors.mean()) < 1e-4
    assert bank.mean_norm() < 0.05
    assert init_learnable(4, 3, np.random.default_rng(0), mode=EUCLIDEAN).mode == EUCLIDEAN


def test_busemann_examples():
    q = np.array([1.0, 0.0])
    assert busemann(q, np.zeros(2)) == 0.0
    assert busemann(q, 0.5 * q) == pytest.approx(-1.0986122886681098, abs=1e-12)


@given(st.integers(0, 10_000), st.floats(0.0, 8.0))
@settings(max_examples=50, deadline=None)
def test_busemann_decreases_at_unit_speed_toward_ideal_point(seed, s):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    z = math.tanh(s / 2) * q  # hyperbolic distance s from the origin along the ray to q
    assert float(busemann(q, z)) == pytest.approx(-s, abs=1e-7)


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_busemann_is_one_lipschitz(seed):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(3)
    q /= np.linalg.norm(q)
    z, w = (rng.uniform(-0.5, 0.5, 3) for _ in range(2))
    assert abs(float(busemann(q, z) - busemann(q, w))) <= float(distance(z, w)) + 1e-9


def test_busemann_rejects_boundary():
    with pytest.raises(BoundaryViolationError):
        busemann(np.array([1.0, 0.0]), np.array([0.0, 1.0]))


def test_busemann_broadcasts():
    q = np.eye(3)
    z = np.random.default_rng(4).uniform(-0.3, 0.3, (5, 1, 3))
    out = busemann(q, z)
    assert out.shape == (5, 3)
    assert out[2, 1] == pytest.approx(float(busemann(q[1], z[2, 0])))
