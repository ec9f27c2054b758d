import math

import numpy as np
import pytest

from graphdive import moe
from graphdive.moe import (
    MoeParams,
    elbo_probe,
    expert_predict,
    gate_prior,
    kl_divergence,
    loss_post,
    loss_pri,
    mean_mix_predict,
    mixture_predict,
    posterior,
)
from graphdive.numerics import ParamStore, grad_check


def _hand_head():
    """Uniform prior, experts at 0.8 and 0.2 for x = [1]."""
    p = MoeParams.init(d=1, T=1, M=2)
    p.arrays["gate.W"][...] = 0.0
    p.arrays["expert.W"][...] = [[math.log(4), -math.log(4)]]
    return p


def _random_head(rng, d=6, T=2, M=3, **kw):
    p = MoeParams.init(d=d, T=T, M=M, rng=rng, **kw)
    p.arrays["expert.b"][...] = rng.normal(size=p.arrays["expert.b"].shape)
    return p


class TestHandCases:
    def test_expert_and_prior(self):
        p = _hand_head()
        np.testing.assert_allclose(expert_predict([1.0], p).ravel(), [0.8, 0.2], atol=1e-15)
        assert gate_prior([1.0], p).tolist() == [0.5, 0.5]
        assert abs(mixture_predict([1.0], p) - 0.5) < 1e-15

    def test_posterior(self):
        p = _hand_head()
        np.testing.assert_allclose(posterior([1.0], 1, p), [0.8, 0.2], atol=1e-15)
        np.testing.assert_allclose(posterior([1.0], 0, p), [0.2, 0.8], atol=1e-15)

    def test_loss_pri(self):
        expected = -0.5 * (math.log(0.8) + math.log(0.2))
        assert abs(loss_pri([1.0], [1.0], _hand_head()) - expected) < 1e-14

    def test_loss_post_without_kl(self):
        expected = -(0.8 * math.log(0.8) + 0.2 * math.log(0.2))
        assert abs(loss_post([1.0], [1.0], _hand_head(), 0.0) - expected) < 1e-14

    def test_loss_post_unit_lambda_is_negative_log_likelihood(self):
        # at lambda=1 with the exact posterior the bound is tight
        assert abs(loss_post([1.0], [1.0], _hand_head(), 1.0) - math.log(2)) < 1e-14

    def test_mean_mix(self):
        assert abs(mean_mix_predict([1.0], _hand_head()) - 0.5) < 1e-15


class TestSingleExpert:
    @pytest.mark.parametrize("mode", ["shared", "individual"])
    def test_prior_is_exactly_one(self, mode):
        rng = np.random.default_rng(0)
        p = MoeParams.init(d=5, T=2, M=1, gate_mode=mode, rng=rng)
        x = rng.normal(size=(20, 5)) * 100
        for t in range(2):
            assert np.all(gate_prior(x, p, t) == 1.0)

    def test_posterior_is_one(self):
        rng = np.random.default_rng(1)
        p = MoeParams.init(d=4, T=1, M=1, rng=rng)
        assert np.all(posterior(rng.normal(size=(10, 4)), 1, p) == 1.0)

    def test_all_objectives_agree(self):
        rng = np.random.default_rng(2)
        p = _random_head(rng, T=2, M=1)
        x = rng.normal(size=(16, 6))
        y = (rng.random((16, 2)) < 0.3).astype(float)
        base = loss_pri(x, y, p)
        for lam in (0.0, 0.5, 10.0):
            assert loss_post(x, y, p, lam) == pytest.approx(base, abs=1e-12)
        xt = moe.ad.Tensor(x)
        mm = moe.mean_mix_loss_t(xt, y, np.ones_like(y, bool), p.arrays, p).value
        assert float(mm) == pytest.approx(base, abs=1e-12)


class TestBayes:
    @pytest.mark.parametrize("M", range(2, 9))
    def test_matches_brute_force(self, M):
        rng = np.random.default_rng(M)
        p = _random_head(rng, d=4, T=1, M=M)
        p.arrays["gate.W"] *= 3.0
        x = rng.normal(size=(2000, 4))
        y = (rng.random(2000) < 0.5).astype(float)
        got = posterior(x, y, p)
        prior = gate_prior(x, p)
        q = expert_predict(x, p)[:, :, 0]
        lik = np.where(y[:, None] == 1, q, 1 - q)
        brute = prior * lik / np.sum(prior * lik, axis=1, keepdims=True)
        assert np.max(np.abs(got - brute)) < 1e-12

    def test_sums_to_one_under_extreme_logits(self):
        rng = np.random.default_rng(3)
        p = _random_head(rng, d=3, T=1, M=4)
        p.arrays["expert.W"] *= 500.0
        post = posterior(rng.normal(size=(100, 3)) * 10, 1, p)
        assert np.all(np.isfinite(post))
        np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)

    def test_masked_label_rejected(self):
        with pytest.raises(ValueError):
            posterior([1.0], 1, _hand_head(), mask=False)


class TestElbo:
    def test_bound_and_gap(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            M = int(rng.integers(2, 7))
            p = _random_head(rng, d=3, T=1, M=M)
            x = rng.normal(size=3)
            y = int(rng.integers(0, 2))
            q = rng.dirichlet(np.ones(M))
            log_lik, lower = elbo_probe(x, y, q, p)
            assert lower <= log_lik + 1e-9
            post = posterior(x, y, p)
            assert abs((log_lik - lower) - kl_divergence(q, np.log(post))) < 1e-8
            ll2, lo2 = elbo_probe(x, y, post, p)
            assert ll2 - lo2 < 1e-9

    def test_rejects_non_distribution(self):
        with pytest.raises(ValueError):
            elbo_probe([1.0], 1, np.array([0.7, 0.7]), _hand_head())


class TestGateModes:
    def test_shapes(self):
        rng = np.random.default_rng(5)
        x = moe.ad.Tensor(rng.normal(size=(7, 6)))
        for mode, G in (("shared", 1), ("individual", 3)):
            p = MoeParams.init(d=6, T=3, M=4, gate_mode=mode, rng=rng)
            assert moe.gate_log_prior(x, p.arrays, p).shape == (7, G, 4)
            assert moe.expert_probs(x, p.arrays, p).shape == (7, 3, 4)

    def test_single_task_mode_requires_one_task(self):
        with pytest.raises(ValueError):
            MoeParams(M=2, T=2, d=3, gate_mode="single_task")

    def test_individual_gates_differ_per_task(self):
        rng = np.random.default_rng(6)
        p = MoeParams.init(d=4, T=2, M=3, rng=rng)
        x = rng.normal(size=4)
        assert not np.allclose(gate_prior(x, p, 0), gate_prior(x, p, 1))
        with pytest.raises(ValueError):
            gate_prior(x, p)

    def test_temperature_flattens(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=4)
        hot = MoeParams.init(d=4, T=1, M=3, tau=0.1, rng=np.random.default_rng(1))
        cold = MoeParams.init(d=4, T=1, M=3, tau=100.0, rng=np.random.default_rng(1))
        assert np.max(gate_prior(x, hot)) > np.max(gate_prior(x, cold))
        np.testing.assert_allclose(gate_prior(x, cold), 1 / 3, atol=0.01)

    def test_cosine_gate_scale_free(self):
        rng = np.random.default_rng(8)
        p = MoeParams.init(d=4, T=1, M=3, cosine=True, rng=rng)
        x = rng.normal(size=4)
        np.testing.assert_allclose(gate_prior(x, p), gate_prior(50.0 * x, p), atol=1e-14)

    def test_bad_task_index(self):
        p = MoeParams.init(d=2, T=2, M=2, gate_mode="shared")
        with pytest.raises(IndexError):
            mixture_predict([0.0, 1.0], p, 5)


class TestMasking:
    def test_masked_entries_ignored(self):
        rng = np.random.default_rng(9)
        p = _random_head(rng, T=2, M=3)
        x = rng.normal(size=(5, 6))
        y = (rng.random((5, 2)) < 0.5).astype(float)
        mask = np.ones((5, 2), bool)
        mask[1, 0] = mask[3, 1] = False
        y2 = y.copy()
        y2[1, 0] = 1 - y2[1, 0]
        y2[3, 1] = 1 - y2[3, 1]
        for fn in (lambda yy: loss_pri(x, yy, p, mask), lambda yy: loss_post(x, yy, p, 0.3, mask)):
            assert fn(y) == fn(y2)

    def test_all_masked_raises(self):
        p = _hand_head()
        with pytest.raises(ValueError):
            loss_pri([1.0], [1.0], p, mask=[False])


@pytest.mark.parametrize("mode", ["shared", "individual"])
@pytest.mark.parametrize("lam", [0.0, 1.0, 10.0])
def test_post_gradient_with_frozen_posterior(mode, lam):
    rng = np.random.default_rng(10)
    p = _random_head(rng, d=4, T=2, M=3, gate_mode=mode, gate_bias=True)
    x = rng.normal(size=(6, 4))
    y = (rng.random((6, 2)) < 0.5).astype(float)
    mask = np.ones_like(y, bool)
    store = ParamStore(p.arrays)
    frozen = moe.posterior_value(moe.ad.Tensor(x), y, mask, p.arrays, p)
    err = grad_check(lambda leaves: moe.post_loss_t(moe.ad.constant(x), y, mask, leaves, p, lam, frozen), store)
    assert err < 1e-6


def test_pri_gradient_cosine():
    rng = np.random.default_rng(11)
    p = _random_head(rng, d=4, T=1, M=3, cosine=True)
    x = rng.normal(size=(6, 4))
    y = (rng.random((6, 1)) < 0.5).astype(float)
    store = ParamStore(p.arrays)
    err = grad_check(lambda leaves: moe.pri_loss_t(moe.ad.constant(x), y, np.ones_like(y, bool), leaves, p), store)
    assert err < 1e-6
