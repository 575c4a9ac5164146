import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import central_diff, max_rel_error
from uol.losses import (KL_FLOOR, LossWeights, ce_loss, ce_loss_grad, hinge_from_distances,
                        hinge_loss_grad, hinge_ordinal_loss, kl_dispersion_grad, kl_dispersion_loss,
                        total_loss)
from uol.networks import GaussianEmbedding
from uol.ordering import OrderRelation, Triplet

A, L, G = OrderRelation.APPROX, OrderRelation.LESS, OrderRelation.GREATER


def test_ce_uniform_logits():
    for target in OrderRelation:
        assert math.isclose(ce_loss(np.zeros(3), target), math.log(3), rel_tol=1e-15)


def test_ce_confident_logit():
    expected = -math.log(math.exp(10) / (math.exp(10) + 2))
    assert math.isclose(ce_loss(np.array([10.0, 0.0, 0.0]), A), expected, rel_tol=1e-10)
    assert math.isclose(expected, 9.0797e-5, rel_tol=1e-3)
    losses = [ce_loss(np.array([c, 0.0, 0.0]), A) for c in (1, 5, 10, 20)]
    assert all(a > b for a, b in zip(losses, losses[1:]))


@given(arrays(float, 3, elements=st.floats(-20, 20)), st.floats(-50, 50), st.sampled_from(list(OrderRelation)))
def test_ce_shift_invariant_and_nonnegative(logits, c, target):
    a = ce_loss(logits, target)
    assert a >= 0
    assert math.isclose(a, ce_loss(logits + c, target), rel_tol=1e-9, abs_tol=1e-9)


def test_ce_grad_matches_finite_differences():
    rng = np.random.default_rng(0)
    logits = rng.standard_normal((5, 3))
    targets = rng.integers(0, 3, 5)
    _, g = ce_loss_grad(logits, targets)
    num = central_diff(lambda ts: ce_loss_grad(ts[0], targets)[0], [logits.copy()])
    assert max_rel_error([g], num) < 1e-6


def test_hinge_examples():
    assert hinge_from_distances([1.0], [5.0], 1.0) == 0.0
    assert hinge_from_distances([2.0], [2.0], 1.0) == 1.0
    assert hinge_from_distances([1.0, 2.0], [5.0, 2.0], 1.0) == 0.5


def test_hinge_on_embeddings():
    zl = GaussianEmbedding(np.zeros(1), np.ones(1))
    zm = GaussianEmbedding(np.array([1.0]), np.ones(1))
    zn = GaussianEmbedding(np.array([5.0]), np.ones(1))
    assert hinge_ordinal_loss([(zl, zm, zn)], 1.0) == 0.0
    assert hinge_ordinal_loss([(zl, zm, zm)], 1.0) == 1.0


def test_hinge_empty_set_warns():
    with pytest.warns(RuntimeWarning):
        assert hinge_ordinal_loss([], 1.0) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_hinge_grad_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    mu, var = rng.standard_normal((6, 3)), rng.uniform(0.2, 2, (6, 3))
    triplets = [Triplet(i, (i + 1) % 6, (i + 3) % 6) for i in range(6)]
    tau = 2.0
    _, gmu, gvar = hinge_loss_grad(mu, var, triplets, tau)
    num = central_diff(lambda ts: hinge_loss_grad(ts[0], ts[1], triplets, tau)[0], [mu.copy(), var.copy()])
    assert max_rel_error([gmu, gvar], num) < 1e-5


def test_hinge_batch_matches_scalar_definition():
    rng = np.random.default_rng(3)
    mu, var = rng.standard_normal((5, 2)), rng.uniform(0.2, 2, (5, 2))
    triplets = [Triplet(0, 1, 2), Triplet(3, 4, 0), Triplet(2, 3, 1)]
    emb = [GaussianEmbedding(mu[i], var[i]) for i in range(5)]
    scalar = hinge_ordinal_loss([(emb[l], emb[m], emb[n]) for l, m, n in triplets], 1.5)
    assert math.isclose(hinge_loss_grad(mu, var, triplets, 1.5)[0], scalar, rel_tol=1e-12)


def test_kl_examples():
    eta = np.array([0.3, 1.2, 0.7])
    assert abs(kl_dispersion_loss(eta, eta)) < 1e-7
    assert math.isclose(kl_dispersion_loss(np.full(2, math.e), np.ones(2)), -2.0, rel_tol=1e-7)


def test_kl_zero_variance_instance_is_finite():
    assert kl_dispersion_loss(np.array([0.5, 1.0]), np.array([0.0, 1.0])) == 0.0 + 1.0 * (math.log(1 + KL_FLOOR))


def test_kl_gradient():
    rng = np.random.default_rng(2)
    pred, eta = rng.uniform(0.5, 3, 6), rng.uniform(0, 1, 6)
    _, g = kl_dispersion_grad(pred, eta)
    assert np.allclose(g, -eta / pred, rtol=0, atol=0)
    num = central_diff(lambda ts: kl_dispersion_loss(ts[0], eta), [pred.copy()])
    assert max_rel_error([g], num) < 1e-6


def test_kl_normalized_variant():
    rng = np.random.default_rng(2)
    pred, eta = rng.uniform(0.5, 3, 6), rng.uniform(0.1, 1, 6)
    loss, g = kl_dispersion_grad(pred, eta, normalized=True)
    assert loss >= 0
    # proportional predictions reach zero
    assert abs(kl_dispersion_loss(3 * eta, eta, normalized=True)) < 1e-7
    num = central_diff(lambda ts: kl_dispersion_loss(ts[0], eta, normalized=True), [pred.copy()])
    assert max_rel_error([g], num) < 1e-6


def test_kl_rejects_nonpositive_prediction():
    with pytest.raises(ValueError):
        kl_dispersion_loss(np.array([0.0]), np.array([1.0]))


def test_total_loss():
    w = LossWeights(alpha=1e-4, beta=1e-3)
    assert math.isclose(total_loss(1.0, 10.0, 100.0, w), 1.101, rel_tol=1e-12)
    assert total_loss(0.7, 5.0, 9.0, LossWeights(0.0, 0.0)) == 0.7
    a = total_loss(1.0, 2.0, 3.0, w)
    b = total_loss(1.0, 4.0, 3.0, w)
    assert math.isclose(b - a, 2.0 * w.alpha, rel_tol=1e-9)


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(alpha=-1.0)
    with pytest.raises(ValueError):
        LossWeights(tau=0.0)
