import numpy as np
import pytest

from leverage_classifier import Dataset, Hyperplane
from leverage_classifier.hessian import (DegenerateHessianError, HessianEstimate,
                                         estimate_hessian, gaussian_kernel, regularized_inverse,
                                         silverman_bandwidth)
from leverage_classifier.pipeline import uniform_draw
from leverage_classifier.sampling import SubsampleDraw


def test_bandwidth_zero_spread_fallback():
    assert silverman_bandwidth(np.full(32, 0.7)) == pytest.approx(32 ** -0.2)


def test_bandwidth_homogeneous():
    r = np.random.default_rng(0).normal(size=200)
    assert silverman_bandwidth(3.5 * r) == pytest.approx(3.5 * silverman_bandwidth(r), rel=1e-12)


def test_bandwidth_five_points():
    r = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    sd = np.sqrt(np.sum((r - 2.0) ** 2) / 4)  # 1.5811
    # linear interpolation: Q(0.25) at position 1, Q(0.75) at position 3
    iqr = 3.0 - 1.0
    expected = 0.9 * min(sd, iqr / 1.34) * 5 ** -0.2
    assert silverman_bandwidth(r) == pytest.approx(expected, rel=1e-14)


def test_bandwidth_needs_two_points():
    with pytest.raises(ValueError):
        silverman_bandwidth([1.0])


def test_single_point_hessian():
    N = 10
    data = Dataset(np.array([[2.0]] + [[0.0]] * (N - 1)), [1] + [-1] * (N - 1))
    draw = SubsampleDraw(np.array([0]), np.array([1.0 / N]), 0)
    H = estimate_hessian(data, draw, Hyperplane(1.0, [0.0]), 1.0)  # residual 0
    K0 = 1 / np.sqrt(2 * np.pi)
    np.testing.assert_allclose(H.matrix, K0 * np.array([[1, 2], [2, 4]]), rtol=1e-14)


def test_gaussian_tail_is_negligible():
    rng = np.random.default_rng(1)
    N, h = 500, 0.05
    X = rng.normal(size=(N, 2))
    y = np.where(rng.random(N) < 0.5, 1, -1)
    data = Dataset(X, y)
    # push every margin far from 1
    beta = Hyperplane(0.0, [0.0, 0.0])
    draw = uniform_draw(N, 50, 2)
    Xt = data.augmented(draw.indices)
    r = 1.0 - data.y[draw.indices] * beta.decision_function(data.X[draw.indices])
    assert np.all(np.abs(r) >= 10 * h)
    H = estimate_hessian(data, draw, beta, h)
    bound = 1.0 * np.exp(-50) / (h * np.sqrt(2 * np.pi)) * (Xt ** 2).sum(axis=1).max()
    assert np.abs(H.matrix).max() <= bound


def test_hessian_symmetric_psd_and_weights():
    rng = np.random.default_rng(2)
    N = 2000
    data = Dataset(rng.normal(size=(N, 4)), np.where(rng.random(N) < 0.5, 1, -1))
    beta = Hyperplane(0.1, rng.normal(size=4) * 0.3)
    for s in range(20):
        draw = uniform_draw(N, 100, s)
        H = estimate_hessian(data, draw, beta, 0.3)
        np.testing.assert_array_equal(H.matrix, H.matrix.T)
        assert np.linalg.eigvalsh(H.matrix).min() >= -1e-8
    # uniform pilot: weights 1/(N/N) = 1, so H is the plain kernel average
    idx = draw.indices
    Xt = data.augmented(idx)
    r = 1.0 - data.y[idx] * beta.decision_function(data.X[idx])
    plain = sum(gaussian_kernel(ri, 0.3) * np.outer(x, x) for ri, x in zip(r, Xt)) / len(idx)
    np.testing.assert_allclose(H.matrix, plain, rtol=1e-12)


def test_kernel_mass_at_zero():
    for h in (0.01, 0.5, 3.0):
        assert gaussian_kernel(0.0, h) * h * np.sqrt(2 * np.pi) == pytest.approx(1.0, abs=1e-12)


def test_nonpositive_bandwidth():
    data = Dataset([[0.0], [1.0]], [1, -1])
    with pytest.raises(ValueError):
        estimate_hessian(data, uniform_draw(2, 2, 0), Hyperplane.zeros(1), 0.0)


def test_inverse_identity():
    H = HessianEstimate(np.eye(3), 1.0)
    np.testing.assert_array_equal(regularized_inverse(H), np.eye(3))
    assert H.ridge_used == 0.0


def test_inverse_singular_gets_jitter():
    H = HessianEstimate(np.diag([1.0, 0.0]), 1.0)
    inv = regularized_inverse(H)
    eps = H.ridge_used
    assert eps > 0
    J = H.matrix + eps * np.eye(2)
    assert np.abs(J @ inv - np.eye(2)).max() <= 1e-8
    assert np.linalg.cond(J) <= 1e12
    np.testing.assert_allclose(np.diag(inv), [1 / (1 + eps), 1 / eps], rtol=1e-10)


def test_inverse_residual_contract_random():
    rng = np.random.default_rng(3)
    for _ in range(50):
        B = rng.normal(size=(5, 3))
        H = HessianEstimate(B @ B.T * rng.exponential(), 1.0)  # rank 3 of 5
        inv = regularized_inverse(H)
        J = H.matrix + H.ridge_used * np.eye(5)
        assert np.abs(J @ inv - np.eye(5)).max() <= 1e-8


def test_inverse_degenerate():
    with pytest.raises(DegenerateHessianError, match="degenerate Hessian"):
        regularized_inverse(HessianEstimate(np.zeros((3, 3)), 1.0))


def test_hessian_estimate_validation():
    with pytest.raises(ValueError):
        HessianEstimate(np.array([[1.0, 2.0], [0.0, 1.0]]), 1.0)
