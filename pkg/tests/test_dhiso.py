import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hisoflow import dhiso
from hisoflow.central import NotPositiveDefiniteError, random_spd
from hisoflow.costs import CostEnsemble, QuadraticCost, quadratic_cost
from hisoflow.dhiso import (NetworkState, agent_rhs, dgd2_run, dhiso_rhs, dhiso_run, diagnostics,
                            finite_time_bound, hat_variables, message_floats_per_step, sgn)
from hisoflow.graph import build_graph, named_graph, random_connected_graph


def quadratics(centers, curvatures=None):
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.shape[0] == 1:
        centers = centers.T
    if curvatures is None:
        return CostEnsemble(quadratic_cost(c) for c in centers)
    return CostEnsemble(quadratic_cost(c, Q) for c, Q in zip(centers, curvatures))


def random_problem(seed, n, d):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(rng, n, 0.3)
    costs = CostEnsemble(quadratic_cost(rng.standard_normal(d), random_spd(rng, d, 0.5, 3.0))
                         for _ in range(n))
    return g, costs, rng


@pytest.fixture
def k2():
    return named_graph("k2")


# sign ------------------------------------------------------------------------

def test_sgn_examples():
    assert sgn(0.0) == 0.0
    np.testing.assert_array_equal(sgn([-3.2, 0.1]), [-1.0, 1.0])
    assert sgn(0.25, epsilon=0.5) == pytest.approx(0.5)
    assert sgn(-2.0, epsilon=0.5) == -1.0
    with pytest.raises(ValueError):
        sgn(1.0, epsilon=-1.0)


@given(u=st.floats(-1e6, 1e6), eps=st.floats(0.0, 10.0))
def test_sgn_bounded_and_odd(u, eps):
    s = float(sgn(u, eps))
    assert -1.0 <= s <= 1.0
    assert float(sgn(-u, eps)) == -s


# right-hand side -------------------------------------------------------------

def test_k2_rhs_example(k2):
    costs = quadratics([0.0, 2.0])
    state = NetworkState.initial(np.zeros(2))
    np.testing.assert_array_equal(state.z(costs)[:, 0], [0.0, -2.0])
    dv, dx = dhiso_rhs(state, k2, costs)
    np.testing.assert_array_equal(dv[:, 0], [-1.0, 1.0])
    np.testing.assert_array_equal(dx[:, 0], [0.0, 2.0])


def test_identical_agents_run_local_newton():
    g = named_graph("fig1")
    Q = random_spd(np.random.default_rng(0), 3)
    costs = quadratics(np.tile([1.0, -1.0, 0.5], (5, 1)), [Q] * 5)
    x = np.tile([0.3, 0.2, -0.7], (5, 1))
    state = NetworkState(x, np.tile([0.1, 0.0, 0.2], (5, 1)))
    dv, dx = dhiso_rhs(state, g, costs)
    np.testing.assert_array_equal(dv, 0.0)
    z = state.z(costs)
    np.testing.assert_allclose(dx, -np.linalg.solve(Q, z.T).T, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 9), d=st.integers(1, 4),
       eps=st.sampled_from([0.0, 1e-3, 0.5]))
def test_sum_of_dv_vanishes(seed, n, d, eps):
    g, costs, rng = random_problem(seed, n, d)
    v = rng.standard_normal((n, d))
    v -= v.mean(axis=0)
    dv, _ = dhiso_rhs(NetworkState(rng.standard_normal((n, d)), v), g, costs, eps)
    np.testing.assert_allclose(dv.sum(axis=0), 0.0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 7), d=st.integers(1, 3),
       use_h=st.booleans())
def test_agent_rhs_matches_network_rhs(seed, n, d, use_h):
    g, costs, rng = random_problem(seed, n, d)
    state = NetworkState(rng.standard_normal((n, d)), rng.standard_normal((n, d)))
    Z = state.z(costs)
    dv, dx = dhiso_rhs(state, g, costs, use_hessian=use_h)
    for i in range(n):
        nb = g.neighbors(i)
        dvi, dxi = agent_rhs(i, g, state.x[i], Z[i], {j: state.x[j] for j in nb},
                             {j: Z[j] for j in nb}, costs[i], use_hessian=use_h)
        np.testing.assert_allclose(dvi, dv[i], atol=1e-12)
        np.testing.assert_allclose(dxi, dx[i], atol=1e-10)


def test_agent_rhs_requires_exact_neighbourhood(k2):
    costs = quadratics([0.0, 2.0])
    with pytest.raises(ValueError, match="neighbours"):
        agent_rhs(0, k2, np.zeros(1), np.zeros(1), {}, {}, costs[0])


def test_non_pd_local_hessian_names_agent():
    g = named_graph("cycle3")
    bad = QuadraticCost.__new__(QuadraticCost)
    object.__setattr__(bad, "center", np.zeros(1))
    object.__setattr__(bad, "curvature", np.zeros((1, 1)))
    costs = CostEnsemble.__new__(CostEnsemble)
    costs.agents, costs.dim = (quadratic_cost([0.0]), quadratic_cost([1.0]), bad), 1
    with pytest.raises(NotPositiveDefiniteError) as exc:
        dhiso_rhs(NetworkState.initial(np.zeros(3)), g, costs)
    assert exc.value.agent == 3
    # DGD2 never touches the Hessian
    dhiso_rhs(NetworkState.initial(np.zeros(3)), g, costs, use_hessian=False)


# diagnostics and bounds -------------------------------------------------------

def test_consensus_state_diagnostics():
    g = named_graph("fig1")
    costs = quadratics(np.zeros(5))
    d = diagnostics(NetworkState.initial(np.full(5, 0.7)), g, costs)
    assert d.cons_x == 0.0 and d.cons_z == 0.0
    zh, xh = hat_variables(NetworkState.initial(np.full(5, 0.7)), g, costs)
    np.testing.assert_allclose(zh, 0.0, atol=1e-14)
    np.testing.assert_allclose(xh, 0.0, atol=1e-14)


def test_zero_v_gives_sum_z_equal_grad_sum():
    g, costs, rng = random_problem(4, 6, 2)
    d = diagnostics(NetworkState.initial(rng.standard_normal((6, 2))), g, costs)
    assert d.sum_z == d.grad_sum
    assert d.sum_v == 0.0


def test_finite_time_bound_examples(k2):
    assert finite_time_bound(k2, np.array([1.0, -1.0])) == pytest.approx(np.sqrt(2))
    assert finite_time_bound(named_graph("fig1"), np.ones((5, 3))) == 0.0
    costs = quadratics([0.0, 2.0])
    state = NetworkState.initial(np.zeros(2))
    # z(0) = (0, -2): disagreement sqrt(2), lambda_bar = 1/4
    assert finite_time_bound(k2, state, costs) == pytest.approx(np.sqrt(2))


def test_message_size():
    g = named_graph("fig1")
    np.testing.assert_array_equal(message_floats_per_step(g, 6), 12 * np.array([4, 2, 3, 2, 3]))


# simulation -----------------------------------------------------------------------

def test_k2_converges_to_mean(k2):
    costs = quadratics([0.0, 2.0])
    for run in (dhiso_run, dgd2_run):
        tr = run(k2, costs, np.zeros(2), 1e-3, 20.0, x_star=[1.0])
        np.testing.assert_allclose(tr.x_final[:, 0], 1.0, atol=1e-6)
        assert tr.max_opt_err[-1] <= 1e-6


def test_start_at_optimum_stays_near_it():
    g = named_graph("fig1")
    rng = np.random.default_rng(8)
    Qs = [random_spd(rng, 2, 0.5, 2.0) for _ in range(5)]
    costs = quadratics(rng.standard_normal((5, 2)), Qs)
    x_star = np.linalg.solve(sum(Qs), sum(Q @ c.center for Q, c in zip(Qs, costs)))
    step = 1e-3
    tr = dhiso_run(g, costs, np.tile(x_star, (5, 1)), step, 2.0, x_star=x_star)
    assert tr.grad_sum[0] <= 1e-12
    # local gradients disagree, so x leaves x* transiently but only by O(delta)-scaled
    # amounts relative to the initial gradient disagreement
    assert tr.max_opt_err.max() <= 10 * np.abs(tr.z0).max()
    assert tr.max_opt_err[-1] <= 50 * step


def test_identity_hessians_make_runs_coincide():
    g = named_graph("fig1")
    rng = np.random.default_rng(0)
    costs = quadratics(rng.standard_normal((5, 3)))
    x0 = rng.standard_normal((5, 3))
    a = dhiso_run(g, costs, x0, 1e-3, 2.0, keep_states=True)
    b = dgd2_run(g, costs, x0, 1e-3, 2.0, keep_states=True)
    assert a.label == "DHISO" and b.label == "DGD2"
    assert np.abs(a.x_history - b.x_history).max() <= 1e-12


@pytest.mark.parametrize("eps", [0.0, 1e-2])
def test_invariants_along_random_run(eps):
    g, costs, rng = random_problem(21, 6, 2)
    tr = dhiso_run(g, costs, rng.standard_normal((6, 2)), 1e-3, 8.0, epsilon=eps)
    cons = dhiso.check_conservation(tr, 6)
    assert cons["sum_v_ok"] and cons["identity_ok"]
    assert dhiso.check_sum_decay_window(tr)["ok"]
    assert dhiso.check_finite_time_consensus(tr, g, 2)["ok"]
    # on quadratics sum z decays exactly like (1 - delta)^k
    assert dhiso.check_sum_decay(tr)["ok"]


def test_record_every_keeps_final_row(k2):
    tr = dhiso_run(k2, quadratics([0.0, 2.0]), np.zeros(2), 1e-2, 1.05, x_star=[1.0],
                   record_every=10)
    assert tr.t[-1] == pytest.approx(1.05)
    assert np.all(np.diff(tr.t) > 0)


def test_run_input_validation(k2):
    costs = quadratics([0.0, 2.0])
    with pytest.raises(ValueError):
        dhiso_run(k2, costs, np.zeros(2), 0.0, 1.0)
    with pytest.raises(ValueError, match="nodes"):
        dhiso_run(named_graph("fig1"), costs, np.zeros(2), 1e-3, 1.0)
    with pytest.raises(ValueError, match="shape"):
        dhiso_run(k2, costs, np.zeros((2, 3)), 1e-3, 1.0)


def test_divergence_is_reported(k2):
    costs = quadratics([0.0, 2.0])
    with pytest.raises(dhiso.DivergenceError):
        dgd2_run(k2, costs, np.array([5.0, -5.0]), 1.5, 200.0, x_star=[1.0])
