import threading

import numpy as np
import pytest
from hypothesis import given, strategies as st

from attacklab.numerics import make_rng
from attacklab.scenarios import mlp_victim
from attacklab.victims import (DegenerateVictimError, InvalidVictimError, VictimSpec, build_victim,
                               make_linear_victim, make_mlp_victim, make_quadratic_victim,
                               random_mlp_layers)
from oracles import central_difference_gradient


def test_linear_signs_and_tie():
    o, t = make_linear_victim([1.0, 0.0], [0.0, 0.0])
    assert o.query_sign(np.array([0.5, 7])) == 1
    assert o.query_sign(np.array([-0.5, 7])) == -1
    assert o.query_sign(np.array([0.0, 3])) == 1
    assert o.query_count == 3 and o.tie_count == 1
    assert np.array_equal(t.gradient(np.zeros(2)), [1.0, 0.0])
    assert t.beta_S == 0.0
    assert t.local_constants(np.zeros(2), 0.5)[0] == pytest.approx(1.0)


def test_linear_rejects_zero_normal():
    with pytest.raises(DegenerateVictimError):
        make_linear_victim([0.0, 0.0])


def test_batch_queries_count_rows():
    o, _ = make_linear_victim([1.0, -1.0])
    s = o.query_signs(np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]]))
    assert list(s) == [1, -1, 1]
    assert o.query_count == 3


def test_counter_survives_threads():
    o, _ = make_linear_victim([1.0, 0.0])
    x = np.array([1.0, 0.0])

    def work():
        for _ in range(500):
            o.query_sign(x)

    ts = [threading.Thread(target=work) for _ in range(4)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert o.query_count == 2000


def test_quadratic_examples():
    _, t = make_quadratic_victim([1.0, 0.0], [0.0, 0.0], np.diag([2.0, 0.0]))
    assert np.array_equal(t.gradient(np.array([1.0, 1.0])), [3.0, 0.0])
    assert t.beta_S == 2.0
    w = np.array([0.3, -1.0, 2.0])
    b = np.array([0.1, 0.2, 0.3])
    _, tq = make_quadratic_victim(w, b, np.zeros((3, 3)))
    _, tl = make_linear_victim(w, b)
    x = np.array([1.5, -2.0, 0.7])
    assert tq.value(x) == pytest.approx(tl.value(x), abs=1e-15)
    assert np.max(np.abs(tq.gradient(x) - tl.gradient(x))) <= 1e-15


def test_quadratic_rejects_asymmetric():
    H = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(InvalidVictimError):
        make_quadratic_victim([1.0, 0.0], [0.0, 0.0], H)


@given(seed=st.integers(0, 2**32))
def test_quadratic_gradient_finite_difference(seed):
    rng = make_rng(seed)
    G = rng.standard_normal((8, 8))
    _, t = make_quadratic_victim(rng.standard_normal(8), rng.standard_normal(8), G + G.T)
    x = rng.standard_normal(8)
    g = t.gradient(x)
    fd = central_difference_gradient(t.value, x)
    assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)


def test_single_layer_mlp_is_linear():
    rng = make_rng(0)
    W = rng.standard_normal((3, 5))
    c = rng.standard_normal(3)
    o, t = make_mlp_victim([(W, c)], "tanh", y_ben=2, y_mal=0)
    x = rng.standard_normal(5)
    assert np.allclose(t.gradient(x), W[0] - W[2], atol=1e-15)
    assert t.value(x) == pytest.approx((W[0] - W[2]) @ x + c[0] - c[2], abs=1e-12)


@given(seed=st.integers(0, 2**32))
def test_mlp_gradient_finite_difference(seed):
    rng = make_rng(seed)
    layers = random_mlp_layers([2, 16, 3], rng, scale=1.5)
    _, t = make_mlp_victim(layers)
    x = rng.standard_normal(2)
    g = t.gradient(x)
    fd = central_difference_gradient(t.value, x)
    assert np.max(np.abs(g - fd)) <= 1e-5 * max(np.max(np.abs(g)), 1e-3)


def test_gradients_on_many_points():
    _, t, _ = mlp_victim(seed=4)
    rng = make_rng(9)
    for _ in range(100):
        x = rng.standard_normal(32)
        g = t.gradient(x)
        fd = central_difference_gradient(t.value, x)
        assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(g)


def test_output_scaling_keeps_signs():
    rng = make_rng(2)
    layers = random_mlp_layers([2, 16, 3], rng)
    scaled = layers[:-1] + [(10 * layers[-1][0], 10 * layers[-1][1])]
    o1, _ = make_mlp_victim(layers)
    o2, _ = make_mlp_victim(scaled)
    X = rng.standard_normal((1000, 2))
    assert np.array_equal(o1.query_signs(X), o2.query_signs(X))


@pytest.mark.parametrize("layers,labels", [
    ([(np.zeros((4, 3)), np.zeros(4)), (np.zeros((3, 5)), np.zeros(3))], (0, 1)),
    ([(np.zeros((1, 3)), np.zeros(1))], (0, 1)),
    ([(np.zeros((3, 3)), np.zeros(3))], (1, 1)),
])
def test_mlp_shape_errors(layers, labels):
    with pytest.raises(InvalidVictimError):
        make_mlp_victim(layers, "tanh", *labels)


def test_spec_roundtrip_and_errors():
    doc = {"kind": "linear", "w": [1.0, 2.0]}
    spec = VictimSpec.from_dict(doc)
    assert spec.dim == 2 and spec.to_dict() == doc
    o, _ = build_victim(spec)
    assert o.query_sign(np.array([1.0, 0.0])) == 1
    with pytest.raises(InvalidVictimError):
        VictimSpec.from_dict({"kind": "quadratic", "w": [1.0]})
    with pytest.raises(InvalidVictimError):
        VictimSpec.from_dict({"kind": "banana"})


def test_mlp_local_constants_positive():
    _, t, _ = mlp_victim(seed=1)
    L, beta = t.local_constants(np.zeros(32), 0.1, rng=0, directions=8)
    assert L > 0 and beta > 0
