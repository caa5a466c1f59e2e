import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hisoflow.costs import (AssumptionError, CostEnsemble, LogisticEnsemble, LogRegData,
                            fd_check, generate_logreg_data, load_logreg_csv, logistic_cost,
                            logistic_ensemble, quadratic_cost, quartic_cost, quartic_ensemble,
                            random_quartic_coefficients, save_logreg_csv)


# quartic -------------------------------------------------------------------

def test_quartic_direct_formula():
    c = quartic_cost(0.1, 0.1)
    assert c.value(1.0) == pytest.approx(0.2)
    assert c.gradient(1.0)[0] == pytest.approx(0.6)
    assert c.hessian(1.0)[0, 0] == pytest.approx(1.4)


@pytest.mark.parametrize("a, b", [(0.01, 0.0), (0.05, 0.1), (1.0, 3.0)])
def test_quartic_at_origin(a, b):
    c = quartic_cost(a, b)
    assert c.gradient(0.0)[0] == 0.0
    assert c.hessian(0.0)[0, 0] == pytest.approx(2 * a)


def test_quartic_gradient_value():
    # 2 * 0.05 * 2 + 4 * 0.02 * 8 = 0.2 + 0.64
    assert quartic_cost(0.05, 0.02).gradient(2.0)[0] == pytest.approx(0.84, abs=1e-15)


def test_quartic_bounds_and_rejections():
    c = quartic_cost(0.05, 0.02, radius=2.0)
    assert c.m_lower == pytest.approx(0.1)
    assert c.m_upper == pytest.approx(0.1 + 12 * 0.02 * 4)
    with pytest.raises(AssumptionError):
        quartic_cost(0.0, 0.1)
    with pytest.raises(AssumptionError):
        quartic_cost(0.1, -0.1)


def test_random_quartic_coefficients_range():
    a, b = random_quartic_coefficients(np.random.default_rng(0), 1000, 0.01, 0.1)
    assert a.min() >= 0.01 and a.max() <= 0.1
    assert b.min() >= 0.01 and b.max() <= 0.1


def test_quartic_fd_at_one():
    ge, he = fd_check(quartic_cost(0.07, 0.04), np.array([1.0]), h=1e-5)
    assert ge <= 1e-6 and he <= 1e-6


# quadratic ------------------------------------------------------------------

@given(x=st.floats(-100, 100))
def test_quadratic_fd_is_exact(x):
    ge, he = fd_check(quadratic_cost([0.0]), np.array([x]))
    assert he <= 1e-8
    assert ge <= 1e-6


def test_quadratic_rejects_indefinite_curvature():
    with pytest.raises(AssumptionError):
        quadratic_cost([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])


# logistic -------------------------------------------------------------------

@pytest.fixture(scope="module")
def data():
    return generate_logreg_data(7, 5, 5, 10)


def test_dataset_shape(data):
    assert data.n_agents == 5
    assert sum(data.sample_counts()) == 50
    assert all(set(np.unique(y)) <= {-1.0, 1.0} for y in data.labels)
    assert data.dim == 6


def test_dataset_is_deterministic(data):
    again = generate_logreg_data(7, 5, 5, 10)
    for a, b in zip(data.features, again.features):
        assert np.array_equal(a, b)


def test_zero_separation_gives_one_distribution():
    d = generate_logreg_data(0, 1, 3, 4000, separation=0.0)
    c, y = d.features[0], d.labels[0]
    np.testing.assert_allclose(c[y > 0].mean(axis=0), c[y < 0].mean(axis=0), atol=0.1)


def test_bad_labels_rejected():
    with pytest.raises(ValueError, match="labels"):
        LogRegData((np.zeros((2, 1)),), (np.array([1.0, 0.0]),), 1.0)


def test_logistic_at_zero(data):
    c = logistic_cost(data, 0)
    x0 = np.zeros(c.dim)
    s = data.features[0].shape[0]
    assert c.value(x0) == pytest.approx(s * np.log(2))
    expected_w = -0.5 * (data.labels[0][:, None] * data.features[0]).sum(axis=0)
    np.testing.assert_allclose(c.gradient(x0)[:-1], expected_w, rtol=1e-14)


def test_logistic_regularizes_weights_only(data):
    c = logistic_cost(data, 2)
    assert c.m_lower == pytest.approx(2.0 / 5)
    H = c.hessian(np.zeros(c.dim))
    assert H[-1, -1] == pytest.approx(0.25 * data.features[2].shape[0])
    assert not c.strongly_convex_in_bias


def test_logistic_value_is_stable_for_large_margins(data):
    c = logistic_cost(data, 0)
    big = np.full(c.dim, 1e3)
    assert np.isfinite(c.value(big))
    assert np.all(np.isfinite(c.gradient(big)))


def test_logistic_fd_random_points(data):
    rng = np.random.default_rng(3)
    for i in range(data.n_agents):
        c = logistic_cost(data, i)
        for _ in range(5):
            ge, he = fd_check(c, rng.standard_normal(c.dim))
            assert ge <= 1e-5 and he <= 1e-5


def test_batched_ensemble_matches_per_agent(data):
    fast = logistic_ensemble(data)
    assert isinstance(fast, LogisticEnsemble)
    slow = CostEnsemble(logistic_cost(data, i) for i in range(data.n_agents))
    X = np.random.default_rng(1).standard_normal((data.n_agents, data.dim))
    np.testing.assert_allclose(fast.local_gradients(X), slow.local_gradients(X), rtol=1e-12)
    np.testing.assert_allclose(fast.local_hessians(X), slow.local_hessians(X), rtol=1e-12)
    assert fast.value(X[0]) == pytest.approx(slow.value(X[0]), rel=1e-13)


def test_unequal_sample_counts_fall_back(data):
    d = LogRegData((data.features[0], data.features[1][:4]),
                   (data.labels[0], data.labels[1][:4]), 2.0)
    assert not isinstance(logistic_ensemble(d), LogisticEnsemble)


def test_logreg_csv_round_trip(tmp_path, data):
    p = tmp_path / "data.csv"
    save_logreg_csv(data, p)
    back = load_logreg_csv(p, data.regularization)
    for a, b in zip(data.features, back.features):
        assert np.array_equal(a, b)
    for a, b in zip(data.labels, back.labels):
        assert np.array_equal(a, b)


# ensembles and the fd helper -------------------------------------------------

def test_ensemble_sums():
    ens = quartic_ensemble([0.1, 0.2], [0.3, 0.4])
    assert ens.value(1.0) == pytest.approx(0.1 + 0.3 + 0.2 + 0.4)
    assert ens.gradient(1.0)[0] == pytest.approx(2 * 0.3 + 4 * 0.7)
    assert ens.hessians(1.0).shape == (2, 1, 1)
    assert ens.m_lower == pytest.approx(0.2)


def test_ensemble_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        CostEnsemble([quadratic_cost([0.0]), quadratic_cost([0.0, 1.0])])


def test_fd_check_catches_wrong_gradient():
    class Wrong(type(quadratic_cost([0.0]))):
        def gradient(self, x):
            return 2 * super().gradient(x)

    c = Wrong(np.array([0.0]), np.eye(1))
    ge, _ = fd_check(c, np.array([3.0]))
    assert ge > 0.1
    with pytest.raises(ValueError):
        fd_check(c, np.array([0.0]), h=0)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.01, 0.1), b=st.floats(0.01, 0.1), x=st.floats(-3, 3))
def test_quartic_fd_property(a, b, x):
    ge, he = fd_check(quartic_cost(a, b), np.array([x]))
    assert ge <= 1e-5 and he <= 1e-5
