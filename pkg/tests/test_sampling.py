import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from leverage_classifier import Dataset, Hyperplane, Instances, empirical_gradient
from leverage_classifier.sampling import (AliasTable, Criterion, ProbabilityVector,
                                          SubsampleDraw, draw_with_replacement, export_probs_csv,
                                          ht_weights, optimal_probs, thresholded_probs,
                                          uniform_probs)


def test_uniform_probs_examples():
    np.testing.assert_array_equal(uniform_probs(4).probs, [0.25] * 4)
    np.testing.assert_array_equal(uniform_probs(1).probs, [1.0])
    assert uniform_probs(7).probs.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        uniform_probs(0)


def test_probability_vector_invariants():
    with pytest.raises(ValueError):
        ProbabilityVector([0.5, 0.5, 0.0])
    with pytest.raises(ValueError):
        ProbabilityVector([0.5, 0.6])
    with pytest.raises(ValueError):
        ProbabilityVector([])


def three_point_data():
    # ||(1, x)|| = 2, 1, 5 and pilot margins y f = -sqrt(3), 0, sqrt(24)
    X = np.array([[np.sqrt(3.0)], [0.0], [np.sqrt(24.0)]])
    return Dataset(X, [-1, 1, 1]), Hyperplane(0.0, [1.0])


def test_l_criterion_three_points():
    data, beta = three_point_data()
    delta = 0.01 / 3
    pi = optimal_probs(data, beta, None, "L", delta).probs
    # direct evaluation of max(indicator * score, delta) / sum
    num = np.array([max(2.0, delta), max(1.0, delta), max(0.0, delta)])
    np.testing.assert_allclose(pi, num / num.sum(), rtol=1e-14)
    np.testing.assert_allclose(pi, [0.66593, 0.33296, 0.00111], atol=5e-6)


def test_all_indicators_zero_gives_exact_uniform():
    X = np.array([[-3.0], [-2.0], [2.0], [3.0], [4.0]])
    data = Dataset(X, [-1, -1, 1, 1, 1])
    pi = optimal_probs(data, Hyperplane(0.0, [5.0]), np.eye(2), "A", 0.01 / 5)
    np.testing.assert_array_equal(pi.probs, uniform_probs(5).probs)


def test_a_with_identity_equals_l():
    rng = np.random.default_rng(0)
    data = Dataset(rng.normal(size=(200, 3)), np.where(rng.random(200) < 0.5, 1, -1))
    beta = Hyperplane(0.1, [0.5, -0.2, 0.3])
    a = optimal_probs(data, beta, np.eye(4), "A")
    l = optimal_probs(data, beta, None, "L")
    np.testing.assert_allclose(a.probs, l.probs, rtol=1e-14)


def test_optimal_probs_errors():
    data, beta = three_point_data()
    with pytest.raises(ValueError, match="inverse Hessian"):
        optimal_probs(data, beta, None, "A")
    with pytest.raises(ValueError):
        optimal_probs(data, beta, np.eye(3), "A")
    with pytest.raises(ValueError):
        optimal_probs(data, beta, None, "Q")
    with pytest.raises(ValueError, match="non-finite"):
        thresholded_probs([1.0, np.inf], [True, True], 0.1)
    with pytest.raises(ValueError):
        thresholded_probs([1.0, 1.0], [True, True], 0.0)
    assert Criterion.parse("a") is Criterion.A


def test_floor_property():
    rng = np.random.default_rng(1)
    N = 1000
    scores = rng.exponential(size=N)
    ind = rng.random(N) < 0.3
    delta = 0.01 / N
    pi = thresholded_probs(scores, ind, delta)
    num = np.maximum(np.where(ind, scores, 0), delta)
    assert pi.min() >= delta / num.sum() * (1 - 1e-12)
    assert pi.min() >= delta / (N * num.max())
    assert pi.min() > 0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 400), st.integers(0, 2**32 - 1),
       st.floats(1e-3, 1e3, allow_nan=False, allow_infinity=False))
def test_scale_invariance(N, seed, c):
    rng = np.random.default_rng(seed)
    s = rng.exponential(size=N)
    ind = rng.random(N) < 0.5
    delta = 0.01 / N
    a = thresholded_probs(s, ind, delta)
    b = thresholded_probs(c * s, ind, c * delta)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)
    assert abs(a.sum() - 1) <= 1e-12 and np.all(a > 0)


# -- alias sampling --------------------------------------------------------

def table_probabilities(t: AliasTable):
    n = len(t)
    p = t.prob / n
    for j in range(n):
        if t.alias[j] != j:
            p[t.alias[j]] += (1 - t.prob[j]) / n
    return p


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(1e-6, 1e3, allow_nan=False), min_size=1, max_size=60))
def test_alias_table_encodes_distribution(w):
    w = np.array(w)
    p = w / w.sum()
    np.testing.assert_allclose(table_probabilities(AliasTable(p)), p, rtol=1e-9, atol=1e-12)


def test_degenerate_draw():
    d = draw_with_replacement(ProbabilityVector([1.0]), 50, seed=3)
    assert np.all(d.indices == 0) and len(d) == 50


def test_draw_determinism():
    p = ProbabilityVector([0.1, 0.2, 0.7])
    a, b = draw_with_replacement(p, 100, 42), draw_with_replacement(p, 100, 42)
    np.testing.assert_array_equal(a.indices, b.indices)
    np.testing.assert_array_equal(a.draw_probs, b.draw_probs)
    assert a.seed == b.seed == 42
    np.testing.assert_array_equal(a.draw_probs, p.probs[a.indices])


def test_draw_errors():
    with pytest.raises(ValueError):
        draw_with_replacement(np.array([]), 5, 0)
    with pytest.raises(ValueError):
        draw_with_replacement(ProbabilityVector([1.0]), 0, 0)


def test_draw_frequencies():
    pi = np.array([0.2, 0.3, 0.5])
    n = 100_000
    d = draw_with_replacement(ProbabilityVector(pi), n, seed=7)
    freq = np.bincount(d.indices, minlength=3) / n
    assert np.all(np.abs(freq - pi) <= 3 * np.sqrt(pi * (1 - pi) / n))


def test_alias_chi_square():
    rng = np.random.default_rng(8)
    pi = rng.dirichlet(np.ones(10))
    n = 1_000_000
    d = draw_with_replacement(ProbabilityVector(pi / pi.sum()), n, seed=8)
    obs = np.bincount(d.indices, minlength=10)
    assert stats.chisquare(obs, n * pi / pi.sum()).pvalue > 0.001


# -- Horvitz-Thompson ------------------------------------------------------

def test_ht_weight_examples():
    d = draw_with_replacement(uniform_probs(10), 20, seed=1)
    np.testing.assert_allclose(ht_weights(d, 10).weights, 1.0, rtol=1e-15)
    half = SubsampleDraw(np.array([3]), np.array([0.5]), 0)
    assert ht_weights(half, 10).weights[0] == pytest.approx(0.2)
    with pytest.raises(ValueError):
        ht_weights(SubsampleDraw(np.array([0]), np.array([0.0]), 0), 10)


def test_ht_unbiased_small():
    rng = np.random.default_rng(9)
    N, n, R = 400, 40, 1000
    data = Dataset(rng.normal(size=(N, 2)), np.where(rng.random(N) < 0.5, 1, -1))
    beta = Hyperplane(0.2, [0.7, -0.4])
    full = empirical_gradient(beta, data, Instances.full(N))
    pi = optimal_probs(data, beta, None, "L")
    est = np.array([empirical_gradient(beta, data, ht_weights(draw_with_replacement(pi, n, s), N))
                    for s in range(R)])
    se = est.std(axis=0, ddof=1) / np.sqrt(R)
    assert np.all(np.abs(est.mean(axis=0) - full) <= 4 * se)


def test_export_probs_csv(tmp_path):
    p = ProbabilityVector([0.125, 0.375, 0.5])
    path = tmp_path / "pi.csv"
    export_probs_csv(p, path)
    arr = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(arr[:, 0], [0, 1, 2])
    np.testing.assert_array_equal(arr[:, 1], p.probs)
