import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from attacklab.attack import (AttackConfig, PreconditionError, TrivialInstanceError,
                              binary_search_to_boundary, run_attack, step_size_search)
from attacklab.projections import identity_projection
from attacklab.scenarios import make_pairs, mlp_victim
from attacklab.victims import make_linear_victim


def neg_x1():
    return make_linear_victim([-1.0, 0.0])  # adversarial iff x1 <= 0


def test_binary_search_example():
    o, _ = neg_x1()
    r = binary_search_to_boundary(o, np.array([-1.0, 0.0]), np.array([1.0, 0.0]), 1e-3)
    assert 0.5 - 1e-3 <= r.alpha <= 0.5
    assert -2e-3 <= r.point[0] <= 0
    assert r.alpha_benign - r.alpha <= 1e-3
    assert o.query_sign(r.point) == 1


def test_binary_search_depth_bound():
    o, _ = neg_x1()
    r = binary_search_to_boundary(o, np.array([-1e-5, 0.0]), np.array([1.0, 0.0]), 1e-3,
                                  check_endpoints=False)
    assert r.queries <= math.ceil(math.log2(1e3))


@given(a=st.floats(-5, -1e-3), tx=st.floats(1e-3, 5), y=st.floats(-3, 3))
def test_binary_search_never_moves_away(a, tx, y):
    o, _ = neg_x1()
    x_hat, x_tgt = np.array([a, y]), np.array([tx, -y])
    r = binary_search_to_boundary(o, x_hat, x_tgt, 1e-3)
    assert np.linalg.norm(r.point - x_tgt) <= np.linalg.norm(x_hat - x_tgt) + 1e-12


def test_binary_search_errors():
    o, _ = neg_x1()
    with pytest.raises(TrivialInstanceError):
        binary_search_to_boundary(o, np.array([-1.0, 0]), np.array([-2.0, 0]), 1e-3)
    with pytest.raises(PreconditionError):
        binary_search_to_boundary(o, np.array([1.0, 0]), np.array([2.0, 0]), 1e-3)


def test_step_search_cases():
    o, _ = neg_x1()
    x = np.array([0.0, 1.0])
    s = step_size_search(o, x, np.array([-1.0, 0.0]), 1.0, 1)
    assert s.progressed and s.queries == 1 and s.xi == 1.0
    s = step_size_search(o, x, np.array([1.0, 0.0]), 1.0, 1)
    assert not s.progressed and np.array_equal(s.x_hat, x) and s.xi == 0.0
    assert s.queries == 40  # 1, 1/2, ..., down to the 1e-12 floor
    with pytest.raises(ValueError):
        step_size_search(o, x, np.array([2.0, 0.0]), 1.0, 1)


def test_step_search_diagonal_direction():
    o, _ = neg_x1()
    x = np.array([-0.1, 0.0])
    d = np.array([1.0, 1.0]) / math.sqrt(2)
    d_t, t = 4.0, 4
    s = step_size_search(o, x, d, d_t, t)
    xi = d_t / math.sqrt(t)
    while x[0] + xi * d[0] > 0:
        xi /= 2
    assert s.xi == xi


def test_linear_two_dim_converges():
    o, _ = make_linear_victim([1.0, 0.0])
    tr = run_attack(o, identity_projection, np.array([0.002, 3.0]), np.array([-1e-6, 0.0]),
                    AttackConfig(budget=500))
    assert tr.final_mse < 1e-8
    assert tr.queries <= 500 and o.query_count == tr.queries


def test_tiny_budget_truncates():
    o, _ = make_linear_victim([1.0, 0.0])
    tr = run_attack(o, identity_projection, np.array([1.0, 3.0]), np.array([-1.0, 0.0]),
                    AttackConfig(budget=3))
    assert [r[3] for r in tr.rows] == ["init", "binsearch"]
    assert not tr.success and tr.truncated and tr.queries == 3


def test_precondition_errors():
    o, _ = make_linear_victim([1.0, 0.0])
    with pytest.raises(PreconditionError):
        run_attack(o, identity_projection, np.array([-1.0, 0]), np.array([-2.0, 0]), AttackConfig(budget=50))
    with pytest.raises(TrivialInstanceError):
        run_attack(o, identity_projection, np.array([1.0, 0]), np.array([2.0, 0]), AttackConfig(budget=50))


@pytest.mark.parametrize("seed", range(3))
def test_trace_invariants_on_mlp(seed):
    o, t, _ = mlp_victim(seed=0)
    pair = make_pairs(t, 32, 1, seed=seed)[0]
    tr = run_attack(o, identity_projection, pair.x_src, pair.x_tgt,
                    AttackConfig(budget=1500, seed=seed, keep_points=True))
    qs = [r[0] for r in tr.rows]
    assert all(a < b for a, b in zip(qs, qs[1:]))
    assert tr.queries == o.query_count <= 1500
    assert all(t.value(x) >= 0 for x in tr.points)
    assert all(r[2] == pytest.approx(r[1] ** 2 / 32, rel=1e-15) for r in tr.rows)
    # each bisection ends no farther from the target than the point it started from
    for prev, cur in zip(tr.rows, tr.rows[1:]):
        if cur[3] == "binsearch":
            assert cur[1] <= prev[1] + 1e-12


def test_determinism_bytewise():
    o1, t, _ = mlp_victim(seed=0)
    o2, _, _ = mlp_victim(seed=0)
    pair = make_pairs(t, 32, 1, seed=7)[0]
    a = run_attack(o1, identity_projection, pair.x_src, pair.x_tgt, AttackConfig(budget=800, seed=3))
    b = run_attack(o2, identity_projection, pair.x_src, pair.x_tgt, AttackConfig(budget=800, seed=3))
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == "queries,l2,mse,event"


def test_batch_schedule():
    cfg = AttackConfig(budget=10, initial_B=100)
    assert cfg.batch_size(1, 1000) == 100
    assert cfg.batch_size(4, 1000) == 200
    assert cfg.batch_size(100, 64) == 64
    assert AttackConfig(budget=10, sampling_mode="normalized_gaussian", max_B=150).batch_size(9, 64) == 150
    with pytest.raises(ValueError):
        AttackConfig(budget=0)
    with pytest.raises(ValueError):
        AttackConfig(budget=10, theta=1.5)
