import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmsn import gradsuite
from hmsn.diff import (
    Graph,
    NonFiniteError,
    ScalarLossError,
    backward,
    finite_diff_check,
    forward,
    grad,
    numeric_gradient,
    tape_gradient,
)
from hmsn.diff import ops as F
from hmsn.geometry import distance
from hmsn.prototypes import busemann


def test_forward_product():
    g = Graph()
    a, b = g.param(2.0), g.param(3.0)
    out = a * b
    assert forward(g, [out])[0] == 6.0


def test_forward_distance_node():
    g = Graph()
    x = g.param(np.array([0.5, 0.0]))
    d = distance(np.zeros(2), x)
    assert forward(g, [d])[0] == pytest.approx(1.0986122886681098, abs=1e-12)


def test_forward_replay_is_bitwise_and_tracks_leaf_changes():
    g = Graph()
    x = g.param(np.array([0.3, -0.2, 0.1]))
    y = F.sum(F.tanh(x) * F.exp(x))
    first = forward(g, [y])[0].copy()
    np.testing.assert_array_equal(forward(g, [y])[0], first)
    x.value = np.array([0.1, 0.1, 0.1])
    assert forward(g, [y])[0] == pytest.approx(3 * np.tanh(0.1) * np.exp(0.1))


def test_nodes_are_topologically_ordered():
    g = Graph()
    x = g.param(np.ones(3))
    _ = F.sum(F.log(x + 1.0) * x)
    for node in g.nodes:
        assert all(i < node.id for i in node.input_ids)


def test_backward_square():
    g = Graph()
    a = g.param(3.0)
    loss = a * a
    assert backward(g, loss)[a.id] == 6.0


def test_backward_requires_scalar():
    g = Graph()
    a = g.param(np.ones(3))
    with pytest.raises(ScalarLossError):
        backward(g, a * 2.0)


def test_non_finite_forward_reports_node():
    g = Graph()
    a = g.param(np.array([-1.0]))
    with pytest.raises(NonFiniteError) as e, np.errstate(invalid="ignore"):
        F.log(a)
    assert e.value.op == "log"
    assert e.value.node_id == len(g.nodes) - 1


def test_non_finite_gradient_reports_node():
    g = Graph(check_finite=False)
    a = g.param(np.array([0.0]))
    loss = F.sum(F.sqrt(a))
    with pytest.raises(NonFiniteError), np.errstate(divide="ignore"):
        backward(g, loss)


def test_adjoints_reset_between_passes():
    g = Graph()
    a = g.param(np.array([1.0, 2.0]))
    loss = F.sum(a * a)
    first = backward(g, loss)[a.id].copy()
    second = backward(g, loss)[a.id]
    np.testing.assert_array_equal(first, second)


def test_distance_gradient_matches_fd():
    f = lambda x: distance(np.zeros(2), x)  # noqa: E731
    assert finite_diff_check(f, np.array([0.5, 0.0])) <= 1e-6


def test_busemann_gradient_matches_fd():
    q = np.array([0.6, 0.8])
    f = lambda z: busemann(q, z)  # noqa: E731
    for z in ([0.1, -0.3], [0.4, 0.4], [-0.5, 0.2]):
        assert finite_diff_check(f, np.array(z)) <= 1e-6


def test_quadratic_check_is_tight():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(10)
    assert finite_diff_check(lambda v: F.sum(v * v), x) <= 1e-8


def test_step_robustness():
    rng = np.random.default_rng(1)
    case = {c.name: c for c in gradsuite.cases()}["hmsn_ip_loss"]
    x = case.sample(rng)
    e5 = finite_diff_check(case.f, x, h=1e-5)
    e6 = finite_diff_check(case.f, x, h=1e-6)
    assert max(e5, e6) <= 1e-6


def test_numeric_gradient_leaves_input_untouched():
    x = np.array([1.0, 2.0])
    before = x.copy()
    numeric_gradient(lambda v: F.sum(v * v), x)
    np.testing.assert_array_equal(x, before)


@given(st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_gradient_of_sum_is_sum_of_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-0.5, 0.5, 6)
    f1 = lambda v: F.sum(F.tanh(v) * 3.0)  # noqa: E731
    f2 = lambda v: F.sum(F.exp(v) * v)  # noqa: E731
    both = tape_gradient(lambda v: f1(v) + f2(v), x)
    np.testing.assert_allclose(both, tape_gradient(f1, x) + tape_gradient(f2, x), atol=1e-12)


def test_detached_branch_gets_no_gradient():
    g = Graph()
    theta = g.param(np.array([0.2, -0.1]))
    target = F.stop_gradient(F.tanh(theta) * 2.0)
    loss = F.sum(F.stop_gradient(target) * theta) + F.sum(F.stop_gradient(F.exp(theta)))
    gr = backward(g, loss)[theta.id]
    np.testing.assert_allclose(gr, np.tanh([0.2, -0.1]) * 2.0)


def test_constant_leaves_receive_no_gradient():
    g = Graph()
    w = g.param(np.ones(2))
    c = g.leaf(np.array([3.0, 4.0]))
    loss = F.sum(w * c)
    out = backward(g, loss)
    assert set(out) == {w.id}
    assert not np.any(c.adjoint)


def test_grad_named_wrapper():
    g = Graph()
    p = g.params({"a": np.array([1.0]), "b": np.array([2.0])})
    loss = F.sum(p["a"] * p["b"] * p["b"])
    out = grad(loss, p)
    assert out["a"][0] == 4.0 and out["b"][0] == 4.0


def test_broadcast_gradients_are_reduced():
    g = Graph()
    a = g.param(np.ones((3, 4)))
    b = g.param(np.ones(4))
    loss = F.sum(a * b)
    out = backward(g, loss)
    assert out[b.id].shape == (4,)
    np.testing.assert_array_equal(out[b.id], np.full(4, 3.0))


def test_ndarray_on_the_left_defers_to_node():
    g = Graph()
    a = g.param(np.array([1.0, 2.0]))
    out = np.array([3.0, 4.0]) * a
    assert hasattr(out, "graph")
    assert backward(g, F.sum(out))[a.id].tolist() == [3.0, 4.0]


@pytest.mark.parametrize("case", gradsuite.cases(), ids=lambda c: c.name)
def test_gradient_suite_case(case):
    rng = np.random.default_rng(0)
    for _ in range(5):
        assert finite_diff_check(case.f, case.sample(rng)) <= 1e-4
