import numpy as np
import pytest

from streamkern import additive
from streamkern.additive import AdditiveEstimator, AdditiveFeatures
from streamkern.eigensystems import PeriodicBernoulli, SobolevMin, make_system
from streamkern.projection import EstimatorConfig, ProjectionEstimator
from streamkern.simulate import doppler_component, regression_truth


def stacked_refit(est):
    Psi = est.features.rows(est.X, est.N)
    return np.linalg.lstsq(Psi, est.Y, rcond=None)[0]


def fill(est, X, Y):
    for x, y in zip(X, Y):
        additive.additive_observe(est, x, y)
    return est


@pytest.mark.parametrize("kernel_id", ["sobolev_min", "poly2+periodic_bernoulli"])
def test_one_dimension_reduces_to_projection(kernel_id):
    rng = np.random.default_rng(0)
    x = rng.random(300)
    y = np.sin(5 * x) + 0.3 * rng.standard_normal(300)
    sys = make_system(kernel_id)
    a = AdditiveEstimator(sys, 1, alpha=1.0, c=0.5)
    p = ProjectionEstimator(EstimatorConfig(sys, alpha=1.0, c=0.5))
    for xi, yi in zip(x, y):
        a.observe(np.array([xi]), yi)
        p.observe(xi, yi)
        assert a.N == p.N
        if p.initialized:
            np.testing.assert_allclose(a.theta, p.theta, rtol=1e-12, atol=1e-12)


def test_noiseless_two_coordinate_recovery():
    rng = np.random.default_rng(1)
    X = rng.random((600, 2))
    psi1 = SobolevMin().basis(1, X)
    est = fill(AdditiveEstimator(SobolevMin(), 2, alpha=1.0, c=0.5), X, psi1.sum(axis=1))
    table = est.coefficient_table()
    np.testing.assert_allclose(table[0], [1.0, 1.0], atol=1e-7)
    np.testing.assert_allclose(table[1:], 0.0, atol=1e-7)


@pytest.mark.parametrize("kernel_id", ["sobolev_min", "poly2+periodic_bernoulli"])
def test_streaming_matches_stacked_least_squares(kernel_id):
    rng = np.random.default_rng(2)
    X = rng.random((300, 3))
    Y = np.sin(3 * X[:, 0]) + X[:, 1] ** 2 - np.cos(4 * X[:, 2]) + 0.5 * rng.standard_normal(300)
    est = AdditiveEstimator(make_system(kernel_id), 3, alpha=2.0, c=0.2)
    for i, (x, y) in enumerate(zip(X, Y)):
        est.observe(x, y)
        if est.initialized and i % 20 == 0:
            ref = stacked_refit(est)
            assert np.linalg.norm(est.theta - ref) <= 1e-8 * np.linalg.norm(ref)
    grid = rng.random((100, 3))
    ref_pred = est.features.rows(grid, est.N) @ stacked_refit(est)
    np.testing.assert_allclose(additive.additive_predict(est, grid), ref_pred, atol=1e-7)


def test_feature_layout_with_polynomials():
    feats = AdditiveFeatures(make_system("poly2+periodic_bernoulli"), 3)
    x = np.array([0.1, 0.2, 0.3])
    row = feats.rows(x, 2)
    assert feats.n_fixed == 7 and row.shape == (7 + 6,)
    np.testing.assert_allclose(row[:7], [1, 0.1, 0.01, 0.2, 0.04, 0.3, 0.09])
    sin1 = np.sqrt(2) * np.sin(2 * np.pi * x)
    cos1 = np.sqrt(2) * np.cos(2 * np.pi * x)
    np.testing.assert_allclose(row[7:], np.concatenate([sin1, cos1]), atol=1e-15)


def test_zero_coefficients_predict_zero():
    est = AdditiveEstimator(SobolevMin(), 4, alpha=1.0, c=0.5)
    est.initialized = True
    est.theta = np.zeros(est.p)
    np.testing.assert_array_equal(est.predict(np.random.default_rng(3).random((5, 4))), 0.0)


def test_single_slot_depends_on_one_coordinate():
    est = AdditiveEstimator(PeriodicBernoulli(), 3, alpha=2.0, c=0.2)
    est.N = 2
    est.initialized = True
    theta = np.zeros(est.p)
    theta[1 * 3 + 2] = 1.7  # level 2, coordinate 3
    est.theta = theta
    a = est.predict(np.array([0.1, 0.9, 0.3]))
    b = est.predict(np.array([0.7, 0.2, 0.3]))
    assert a == pytest.approx(b, abs=1e-15)
    assert a == pytest.approx(1.7 * np.sqrt(2) * np.cos(2 * np.pi * 0.3))


def test_components_sum_to_prediction():
    rng = np.random.default_rng(4)
    X = rng.random((500, 3))
    Y = regression_truth("additive10", np.concatenate([X, rng.random((500, 7))], axis=1)) + rng.standard_normal(500)
    est = fill(AdditiveEstimator(make_system("poly2+periodic_bernoulli"), 3, alpha=2.0, c=0.2), X, Y)
    Z = rng.random((50, 3))
    parts = sum(additive.component_function(est, k)(Z[:, k - 1]) for k in range(1, 4))
    np.testing.assert_allclose(parts, est.predict(Z), atol=1e-12)
    with pytest.raises(IndexError):
        est.component_function(4)


def test_single_component_equals_prediction():
    rng = np.random.default_rng(5)
    X = rng.random((200, 1))
    est = fill(AdditiveEstimator(make_system("poly1+sobolev_min"), 1, alpha=1.0, c=0.5), X, np.exp(X[:, 0]))
    u = np.linspace(0, 1, 11)
    np.testing.assert_allclose(est.component_function(1)(u), est.predict(u[:, None]), atol=1e-13)


def test_noiseless_additive_truth_components_recovered():
    # separable truth from the additive benchmark, centred components, n = 10^4
    rng = np.random.default_rng(6)
    n, d = 10_000, 10
    X = rng.random((n, d))
    est = fill(AdditiveEstimator(make_system("poly2+periodic_bernoulli"), d, alpha=2.0, c=0.2), X, regression_truth("additive10", X))
    u = np.linspace(0, 1, 201)
    worst = 0.0
    for k in range(1, d + 1):
        f = est.component_function(k)(u)
        g = doppler_component(k, u)
        worst = max(worst, np.max(np.abs((f - f.mean()) - (g - g.mean()))))
    assert worst <= 1e-3
