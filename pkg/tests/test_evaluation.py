import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmsn.geometry import BoundaryViolationError, distance, exp_map
from hmsn.evaluation import (
    EmptyClassError,
    EvalReport,
    InsufficientExamplesError,
    ProbeConfig,
    config_hash,
    delta_hyperbolicity,
    low_shot_split,
    prototype_norm_trace,
    train_probe,
)
from hmsn.prototypes import init_learnable


def blobs(rng, classes=5, per=80, d=6, spread=0.1):
    centres = rng.standard_normal((classes, d)) * 2
    X = np.repeat(centres, per, axis=0) + spread * rng.standard_normal((classes * per, d))
    y = np.repeat(np.arange(classes), per)
    return X, y


def gromov_delta(D):
    """max over base points w of the Gromov-product form of delta."""
    n = len(D)
    best = 0.0
    for w in range(n):
        G = (D[:, w][:, None] + D[:, w][None, :] - D) / 2
        for x, y, z in itertools.product(range(n), repeat=3):
            best = max(best, min(G[x, z], G[y, z]) - G[x, y])
    return best


# -- probes --------------------------------------------------------------------------


def test_probe_config_validation():
    with pytest.raises(ValueError):
        ProbeConfig(kind="mlp")
    with pytest.raises(ValueError):
        ProbeConfig(label_fraction=0.0)
    with pytest.raises(ValueError):
        ProbeConfig(epochs=0)


def test_separable_blobs_are_solved():
    X, y = blobs(np.random.default_rng(0))
    _, rep = train_probe(X, y, ProbeConfig(kind="euclidean", label_fraction=0.5))
    assert rep.top1 >= 99.0
    Xb = exp_map(X * 0.3)
    _, rep = train_probe(Xb, y, ProbeConfig(label_fraction=0.5))
    assert rep.top1 >= 99.0


def test_permuted_labels_give_chance():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((2000, 8))
    y = rng.permutation(np.repeat(np.arange(4), 500))
    _, rep = train_probe(X, y, ProbeConfig(kind="euclidean", label_fraction=0.5, epochs=200))
    assert abs(rep.top1 - 25.0) <= 5.0


def test_tangent_probe_needs_ball_points():
    X, y = blobs(np.random.default_rng(2))
    with pytest.raises(BoundaryViolationError):
        train_probe(X * 10, y, ProbeConfig(label_fraction=0.5))


def test_probe_with_explicit_eval_set_and_report_json():
    rng = np.random.default_rng(3)
    X, y = blobs(rng, 3, 40)
    _, rep = train_probe(X[::2], y[::2], ProbeConfig(kind="euclidean"), X[1::2], y[1::2], seed=4,
                         config_hash="abc")
    data = json.loads(rep.to_json())
    assert data["split"]["n_train"] == 60 and data["split"]["n_eval"] == 60
    assert data["seed"] == 4 and data["config_hash"] == "abc"
    assert len(data["per_class"]) == 3


def test_probe_is_deterministic():
    X, y = blobs(np.random.default_rng(5), spread=2.0)
    cfg = ProbeConfig(kind="euclidean", label_fraction=0.1, epochs=50)
    a = train_probe(X, y, cfg, seed=2)
    b = train_probe(X, y, cfg, seed=2)
    np.testing.assert_array_equal(a[0].W, b[0].W)
    assert a[1].top1 == b[1].top1


def test_empty_class_rejected():
    X = np.zeros((6, 2))
    with pytest.raises(EmptyClassError):
        train_probe(X, np.array([0, 0, 1, 1, 0, 1]), ProbeConfig(kind="euclidean", classes=3),
                    X, np.zeros(6, int))


def test_report_rejects_bad_accuracy():
    with pytest.raises(ValueError):
        EvalReport(top1=101.0, per_class=[], split={}, seed=0)


# -- low-shot splits ---------------------------------------------------------------------


@given(st.lists(st.integers(1, 300), min_size=1, max_size=6), st.floats(0.01, 1.0), st.integers(0, 100))
@settings(max_examples=100, deadline=None)
def test_split_arithmetic(sizes, fraction, seed):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    if any(fraction * n < 1 - 1e-9 for n in sizes):
        with pytest.raises(InsufficientExamplesError):
            low_shot_split(labels, fraction, seed)
        return
    tr, ev = low_shot_split(labels, fraction, seed)
    for c, n in enumerate(sizes):
        assert np.sum(labels[tr] == c) == math.ceil(fraction * n - 1e-9)
    assert len(np.intersect1d(tr, ev)) == 0
    assert len(tr) + len(ev) == len(labels)


def test_one_percent_of_five_hundred():
    labels = np.repeat(np.arange(16), 500)
    tr, ev = low_shot_split(labels, 0.01, 0)
    assert len(tr) == 80 and len(ev) == 7920
    a, _ = low_shot_split(labels, 0.01, 0)
    b, _ = low_shot_split(labels, 0.01, 1)
    np.testing.assert_array_equal(a, tr)
    assert not np.array_equal(a, b)


# -- Gromov delta ----------------------------------------------------------------------------


def test_unit_square_delta():
    sq = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    D = np.linalg.norm(sq[:, None] - sq[None], axis=-1)
    expected = gromov_delta(D)
    assert expected == pytest.approx(math.sqrt(2) - 1, abs=1e-12)
    assert delta_hyperbolicity(sq, exact=True) == pytest.approx(expected, abs=1e-12)


def test_points_on_a_line_are_a_tree():
    x = np.stack([np.sort(np.random.default_rng(0).uniform(-3, 3, 12)), np.zeros(12)], axis=1)
    assert delta_hyperbolicity(x, exact=True) == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 1000))
@settings(max_examples=10, deadline=None)
def test_exact_delta_matches_gromov_products(seed):
    x = exp_map(np.random.default_rng(seed).standard_normal((6, 2)))
    D = np.asarray(distance(x[:, None], x[None]))
    assert delta_hyperbolicity(x, curvature=1.0, exact=True) == pytest.approx(gromov_delta(D), abs=1e-9)


def test_sampled_delta_bounded_by_exact():
    x = np.random.default_rng(4).standard_normal((12, 3))
    exact = delta_hyperbolicity(x, exact=True)
    for s in range(5):
        assert delta_hyperbolicity(x, sample_size=50, seed=s) <= exact + 1e-12
    with pytest.raises(ValueError):
        delta_hyperbolicity(x[:3])


# -- misc ----------------------------------------------------------------------------------------


def test_prototype_norm_trace_examples():
    banks = [np.array([[3.0, 4.0], [0.0, 1.0]]), init_learnable(4, 2, np.random.default_rng(0))]
    trace = prototype_norm_trace(banks)
    assert trace[0] == pytest.approx(3.0)
    assert trace[1] == pytest.approx(banks[1].mean_norm())


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
