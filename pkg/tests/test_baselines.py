import math

import numpy as np
import pytest

from streamkern import baselines
from streamkern.baselines import KrrModel, SgdModel
from streamkern.eigensystems import PeriodicBernoulli, SobolevMin


def test_krr_single_point_scalar_solve():
    k = SobolevMin()
    m = baselines.krr_fit(np.array([0.6]), np.array([2.0]), k, 0.3)
    assert m.coef[0] == pytest.approx(2.0 / (0.6 + 0.3))


def test_krr_residual_of_linear_system():
    rng = np.random.default_rng(0)
    X, Y = rng.random(50), rng.standard_normal(50)
    lam = 1e-3
    m = KrrModel(SobolevMin(), lam).fit(X, Y)
    K = SobolevMin().gram(X)
    resid = (K + 50 * lam * np.eye(50)) @ m.coef - Y
    assert np.max(np.abs(resid)) <= 1e-8 * np.max(np.abs(Y))


def test_krr_large_ridge_shrinks_to_zero():
    rng = np.random.default_rng(1)
    X, Y = rng.random(30), rng.standard_normal(30)
    m = KrrModel(SobolevMin(), 1e9).fit(X, Y)
    assert np.max(np.abs(m.predict(np.linspace(0, 1, 20)))) < 1e-8


def test_krr_unit_coefficient_reproduces_kernel_section():
    m = KrrModel(PeriodicBernoulli(), 1.0)
    m.X = np.array([0.2, 0.7])
    m.coef = np.array([1.0, 0.0])
    z = np.linspace(0, 1, 9)
    np.testing.assert_allclose(baselines.krr_predict(m, z), PeriodicBernoulli().kernel(0.2, z), atol=1e-15)


def test_krr_small_ridge_nearly_interpolates():
    rng = np.random.default_rng(2)
    X = np.sort(rng.random(25))
    Y = np.sin(4 * X)
    m = KrrModel(SobolevMin(), 1e-9).fit(X, Y)
    np.testing.assert_allclose(m.predict(X), Y, atol=1e-2)


def test_krr_zero_targets():
    m = KrrModel(SobolevMin(), 0.1).fit(np.linspace(0.1, 0.9, 6), np.zeros(6))
    np.testing.assert_array_equal(m.predict(np.linspace(0, 1, 4)), 0.0)


def test_krr_rejects_bad_ridge():
    with pytest.raises(ValueError):
        KrrModel(SobolevMin(), 0.0)


def test_sgd_first_weight():
    m = baselines.sgd_step(SgdModel(SobolevMin(), 5.0), 0.4, 1.3)
    assert m.raw_weights[0] == pytest.approx(5.0 * 1.3)
    # f^_1 = (f~_0 + f~_1) / 2 with f~_0 = 0
    assert m.avg_weights[0] == pytest.approx(5.0 * 1.3 / 2)


def test_sgd_zero_targets_keep_zero_weights():
    m = SgdModel(SobolevMin(), 5.0)
    for x in np.random.default_rng(3).random(40):
        m.step(x, 0.0)
    np.testing.assert_array_equal(m.raw_weights, 0.0)
    np.testing.assert_array_equal(m.avg_weights, 0.0)


def test_sgd_raw_recursion_by_hand():
    k = SobolevMin()
    X = np.array([0.3, 0.8, 0.5])
    Y = np.array([1.0, -0.5, 0.25])
    m = SgdModel(k, 2.0)
    for x, y in zip(X, Y):
        m.step(x, y)
    a1 = 2.0 * Y[0]
    a2 = 2.0 / math.sqrt(2) * (Y[1] - a1 * k.kernel(X[0], X[1]))
    a3 = 2.0 / math.sqrt(3) * (Y[2] - a1 * k.kernel(X[0], X[2]) - a2 * k.kernel(X[1], X[2]))
    np.testing.assert_allclose(m.raw_weights, [a1, a2, a3], rtol=1e-14)


def test_polyak_average_equals_prefix_recompute():
    rng = np.random.default_rng(4)
    n = 100
    X = rng.random(n)
    Y = np.sin(6 * X) + rng.standard_normal(n)
    m = SgdModel(SobolevMin(), 5.0)
    for x, y in zip(X, Y):
        sgd = baselines.sgd_step(m, x, y)
    raw = sgd.raw_weights
    # f~_k uses the first k raw weights; average f~_0 .. f~_n
    prefix = np.zeros(n)
    for k in range(1, n + 1):
        prefix[:k] += raw[:k]
    direct = prefix / (n + 1)
    np.testing.assert_allclose(sgd.avg_weights, direct, rtol=0, atol=1e-10)
    Z = np.linspace(0, 1, 17)
    np.testing.assert_allclose(baselines.sgd_predict(sgd, Z), SobolevMin().gram(Z, X) @ direct, atol=1e-10)


def test_sgd_kernel_evaluations_quadratic():
    m = SgdModel(SobolevMin(), 1.0)
    for x in np.linspace(0.01, 0.99, 50):
        m.step(x, 1.0)
    assert m.kernel_evals == 50 * 49 // 2


def test_sgd_predict_empty_and_raw():
    m = SgdModel(SobolevMin(), 1.0)
    assert m.predict(0.3) == 0.0
    np.testing.assert_array_equal(m.predict(np.array([0.1, 0.2])), 0.0)
    m.step(0.5, 2.0)
    assert m.predict(0.5, averaged=False) == pytest.approx(2.0 * 0.5)
    assert m.predict(0.5) == pytest.approx(1.0 * 0.5)


def test_sgd_multivariate_points():
    from streamkern.eigensystems import TensorProduct

    k = TensorProduct(SobolevMin(), 2)
    m = SgdModel(k, 1.0)
    rng = np.random.default_rng(5)
    for x in rng.random((20, 2)):
        m.step(x, 1.0)
    assert m.predict(rng.random((4, 2))).shape == (4,)
