import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import central_diff, max_rel_error
from uol import networks as nn
from uol.distribution import (SampleNoise, compare_distributions, frobenius_dispersion, reparam_sample,
                              reparam_sample_grad, wasserstein_sq)

G = nn.GaussianEmbedding


def test_frobenius_dispersion_examples():
    assert frobenius_dispersion(np.ones(4)) == 2.0
    assert frobenius_dispersion(np.array([4.0])) == 2.0
    assert frobenius_dispersion(np.full(3, 1e-300)) < 1e-149


def test_frobenius_dispersion_rejects_nonpositive():
    with pytest.raises(ValueError):
        frobenius_dispersion(np.array([1.0, 0.0]))


def test_wasserstein_examples():
    a = G(np.array([0.5, -1.0]), np.array([0.3, 2.0]))
    assert wasserstein_sq(a, a) == 0.0
    assert wasserstein_sq(G(np.zeros(1), np.ones(1)), G(np.array([3.0]), np.ones(1))) == 9.0
    # variances are differenced directly
    assert wasserstein_sq(G(np.zeros(1), np.array([1.0])), G(np.zeros(1), np.array([4.0]))) == 9.0


def test_wasserstein_dimension_mismatch():
    with pytest.raises(ValueError):
        wasserstein_sq(G(np.zeros(1), np.ones(1)), G(np.zeros(2), np.ones(2)))


# hundredths keep squared gaps clear of underflow
finite = st.integers(-1000, 1000).map(lambda k: k / 100)
positive = st.integers(1, 1000).map(lambda k: k / 100)


@given(arrays(float, 3, elements=finite), arrays(float, 3, elements=positive),
       arrays(float, 3, elements=finite), arrays(float, 3, elements=positive))
def test_wasserstein_symmetric_nonnegative(m1, v1, m2, v2):
    a, b = G(m1, v1), G(m2, v2)
    assert wasserstein_sq(a, b) == wasserstein_sq(b, a)
    assert wasserstein_sq(a, b) >= 0
    assert (wasserstein_sq(a, b) == 0) == (np.array_equal(m1, m2) and np.array_equal(v1, v2))


def test_reparam_sample_degenerate_cases():
    z = G(np.array([1.0, -2.0]), np.array([0.5, 3.0]))
    assert np.array_equal(reparam_sample(z, np.zeros(2)), z.mu)
    tiny = G(z.mu, np.full(2, 1e-300))
    assert np.allclose(reparam_sample(tiny, np.array([3.0, -5.0])), z.mu, atol=1e-140)


def test_reparam_sample_moments():
    z = G(np.array([1.0, -2.0, 0.0]), np.array([0.25, 4.0, 1.0]))
    n = 100_000
    s = reparam_sample(z, np.random.default_rng(0).standard_normal((n, 3)))
    se_mean = np.sqrt(z.var_diag / n)
    assert np.all(np.abs(s.mean(0) - z.mu) < 4 * se_mean)
    # var of the sample variance of a normal is 2 sigma^4 / (n - 1)
    se_var = np.sqrt(2 * z.var_diag ** 2 / (n - 1))
    assert np.all(np.abs(s.var(0, ddof=1) - z.var_diag) < 4 * se_var)


def test_reparam_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    mu, var, eps = rng.standard_normal(5), rng.uniform(0.2, 2, 5), rng.standard_normal(5)
    w = rng.standard_normal(5)
    g_mu, g_var = reparam_sample_grad(var, eps, w)
    num = central_diff(lambda ts: float(w @ reparam_sample((ts[0], ts[1]), eps)), [mu.copy(), var.copy()])
    assert max_rel_error([g_mu, g_var], num) < 1e-6


def test_compare_collapses_to_point_comparison():
    cmp_ = nn.init_params(nn.comparator_sizes(4), seed=1)
    rng = np.random.default_rng(1)
    z1 = G(rng.standard_normal(4), np.full(4, 1e-300))
    z2 = G(rng.standard_normal(4), np.ones(4))
    noise = SampleNoise(np.zeros((1, 4)), np.zeros((1, 4)))
    assert np.array_equal(compare_distributions(cmp_, z1, z2, noise), nn.compare_points(cmp_, z1.mu, z2.mu))


def test_compare_averages_logits():
    rows = np.eye(3)
    stub = lambda s1, s2: rows
    z = G(np.zeros(2), np.ones(2))
    noise = SampleNoise.draw(np.random.default_rng(0), 3, 2)
    assert np.allclose(compare_distributions(stub, z, z, noise), [1 / 3, 1 / 3, 1 / 3])


def test_compare_rejects_empty_noise():
    with pytest.raises(ValueError):
        SampleNoise.draw(np.random.default_rng(0), 0, 2)


def test_compare_variance_shrinks_like_one_over_t():
    cmp_ = nn.init_params(nn.comparator_sizes(4), seed=5)
    rng = np.random.default_rng(5)
    z1 = G(rng.standard_normal(4), np.full(4, 0.8))
    z2 = G(rng.standard_normal(4), np.full(4, 1.2))

    def spread(T):
        out = [compare_distributions(cmp_, z1, z2, SampleNoise.draw(np.random.default_rng(s), T, 4))
               for s in range(100)]
        return np.var(out, axis=0, ddof=1)

    v4, v32 = spread(4), spread(32)
    assert np.all(v32 < v4)
    ratio = v4 / v32
    assert np.all((ratio > 8 / 2) & (ratio < 8 * 2)), ratio
