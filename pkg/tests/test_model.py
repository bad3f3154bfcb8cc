"""Unit and property tests for the generative model core."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrnnplan.errors import ConfigError, NumericalError, ShapeError
from vrnnplan.model import (AdaptationVars, LayerConfig, ModelConfig,
                            NetworkParams, elbo, forward_posterior,
                            forward_prior, kld_arrays, kld_term, mtrnn_cell,
                            posterior_params, prior_params, rollout)
from vrnnplan.numeric import make_rng


def small_config(T=6, w=0.01, w_I=0.001):
    return ModelConfig(layers=(LayerConfig(4, 2, 2.0, w),
                               LayerConfig(3, 1, 4.0, w / 2)),
                       output_dim=2, T=T, w_I=w_I, lr=0.001, epochs=10, seed=0)


# ---------------------------------------------------------------------------
# Configuration validation


def test_timescales_must_increase_upward():
    with pytest.raises(ValueError):
        ModelConfig(layers=(LayerConfig(4, 2, 8.0, 0.1),
                            LayerConfig(3, 1, 4.0, 0.1)))


def test_layer_config_validation():
    with pytest.raises(ShapeError):
        LayerConfig(0, 1, 2.0, 0.1)
    with pytest.raises(ValueError):
        LayerConfig(4, 1, 0.5, 0.1)   # tau below one
    with pytest.raises(ValueError):
        LayerConfig(4, 1, 2.0, -0.1)


# ---------------------------------------------------------------------------
# Distribution parameter maps


def test_posterior_params_tanh_exp():
    mu, sig = posterior_params(np.array([0.0, 1.0]), np.array([0.0, -1.0]))
    assert np.allclose(mu, [0.0, np.tanh(1.0)])
    assert np.allclose(sig, [1.0, np.exp(-1.0)])


def test_prior_is_unit_gaussian_at_t1_regardless_of_d():
    cfg = small_config()
    params = NetworkParams.init_random(cfg, make_rng(0))
    d_prev = [np.ones(4) * 5.0, np.ones(3) * -3.0]
    mus, sigs = prior_params(d_prev, params, t=1)
    for mu, sig in zip(mus, sigs):
        assert np.array_equal(mu, np.zeros_like(mu))
        assert np.array_equal(sig, np.ones_like(sig))


def test_prior_depends_on_d_after_t1():
    cfg = small_config()
    params = NetworkParams.init_random(cfg, make_rng(0))
    mus1, _ = prior_params([np.ones(4), np.ones(3)], params, t=2)
    mus2, _ = prior_params([np.zeros(4), np.zeros(3)], params, t=2)
    assert not np.allclose(mus1[0], mus2[0])
    assert np.allclose(mus2[0], 0.0)   # tanh(W @ 0) = 0


# ---------------------------------------------------------------------------
# Cell dynamics


def _hand_params(tau_bottom=2.0, tau_top=4.0):
    cfg = ModelConfig(layers=(LayerConfig(1, 1, tau_bottom, 0.01),
                              LayerConfig(1, 1, tau_top, 0.01)),
                      output_dim=1, T=3)
    blocks = {
        "W_dd0": np.array([[0.5]]), "W_zd0": np.array([[1.0]]),
        "W_td0": np.array([[0.25]]),
        "W_dd1": np.array([[0.5]]), "W_zd1": np.array([[1.0]]),
        "W_pm0": np.array([[0.3]]), "W_ps0": np.array([[0.1]]),
        "W_pm1": np.array([[0.3]]), "W_ps1": np.array([[0.1]]),
        "O": np.array([[2.0]]), "b": np.array([0.1]),
    }
    return NetworkParams(cfg, blocks)


def test_mtrnn_cell_hand_case():
    # Bottom layer, tau = 2: h = 0.5*h_prev + (0.5*d0 + 1.0*z0 + 0.25*d1)/2.
    params = _hand_params()
    h_prev = [np.array([0.4]), np.array([0.8])]
    d_prev = [np.array([0.2]), np.array([0.6])]
    z_t = [np.array([1.0]), np.array([-1.0])]
    h, d = mtrnn_cell(h_prev, d_prev, z_t, params)
    expected_h0 = 0.5 * 0.4 + (0.5 * 0.2 + 1.0 * 1.0 + 0.25 * 0.6) / 2.0
    expected_h1 = 0.75 * 0.8 + (0.5 * 0.6 + 1.0 * -1.0) / 4.0
    assert h[0][0] == pytest.approx(expected_h0)
    assert h[1][0] == pytest.approx(expected_h1)   # top layer: no W_td input
    assert d[0][0] == pytest.approx(np.tanh(expected_h0))


def test_tau_one_reduces_to_vanilla_rnn():
    cfg = ModelConfig(layers=(LayerConfig(2, 1, 1.0, 0.01),), output_dim=1, T=3)
    params = NetworkParams.init_random(cfg, make_rng(1))
    h_prev = [np.array([5.0, -5.0])]
    d_prev = [np.array([0.3, 0.1])]
    z_t = [np.array([0.2])]
    h, _ = mtrnn_cell(h_prev, d_prev, z_t, params)
    rec = params.blocks["W_dd0"] @ d_prev[0] + params.blocks["W_zd0"] @ z_t[0]
    assert np.allclose(h[0], rec)   # previous h forgotten entirely


def test_huge_tau_freezes_state():
    cfg = ModelConfig(layers=(LayerConfig(2, 1, 1e6, 0.01),), output_dim=1, T=3)
    params = NetworkParams.init_random(cfg, make_rng(1))
    h_prev = [np.array([1.0, -1.0])]
    h, _ = mtrnn_cell(h_prev, [np.array([0.3, 0.1])], [np.array([0.2])], params)
    assert np.allclose(h[0], h_prev[0], atol=1e-5)


# ---------------------------------------------------------------------------
# KLD


def test_kld_hand_value():
    # KL(N(0.5, 1) || N(0, 1)) = mu^2 / 2 = 0.125.
    weighted, unweighted = kld_term([0.5], [1.0], [0.0], [1.0], w_eff=0.1)
    assert unweighted == pytest.approx(0.125)
    assert weighted == pytest.approx(0.0125)


def test_kld_zero_iff_equal():
    _, un = kld_term([0.3, -0.2], [0.5, 2.0], [0.3, -0.2], [0.5, 2.0], 1.0)
    assert un == pytest.approx(0.0, abs=1e-15)


def test_kld_rejects_nonpositive_sigma():
    with pytest.raises(NumericalError):
        kld_term([0.0], [0.0], [0.0], [1.0], 1.0)


@given(st.floats(-3, 3), st.floats(0.05, 5), st.floats(-3, 3),
       st.floats(0.05, 5))
@settings(max_examples=300, deadline=None)
def test_kld_nonnegative_property(mq, sq, mp, sp):
    _, un = kld_term([mq], [sq], [mp], [sp], 1.0)
    assert un >= -1e-12
    if abs(mq - mp) > 1e-6 or abs(sq - sp) > 1e-6:
        assert un > 0.0


def test_kld_bulk_nonnegative_and_zero_iff_equal():
    # 10^4 random parameter tuples in one vectorized sweep.
    rng = make_rng(99)
    mq = rng.uniform(-3, 3, 10_000)
    sq = rng.uniform(0.05, 5, 10_000)
    mp = rng.uniform(-3, 3, 10_000)
    sp = rng.uniform(0.05, 5, 10_000)
    kl = (np.log(sp / sq) + ((mp - mq) ** 2 + sq ** 2) / (2 * sp ** 2) - 0.5)
    assert np.all(kl >= -1e-12)
    kl_eq = (np.log(sq / sq) + ((mq - mq) ** 2 + sq ** 2) / (2 * sq ** 2) - 0.5)
    assert np.allclose(kl_eq, 0.0, atol=1e-12)


# ---------------------------------------------------------------------------
# Rollout and ELBO


def test_rollout_shapes_and_initial_state():
    cfg = small_config(T=5)
    params = NetworkParams.init_random(cfg, make_rng(0))
    trace = forward_prior(params, cfg, make_rng(1), batch=3)
    assert trace.x.shape == (5, 3, 2)
    assert trace.d[0].shape == (5, 3, 4)
    assert trace.src == ["prior"] * 5
    # h_0 = d_0 = 0: the t=0 hidden state is built from zero context, so
    # mu_p at t=1 is exactly the unit Gaussian.
    assert np.array_equal(trace.mu_p[0][0], np.zeros((3, 2)))
    assert np.array_equal(trace.sig_p[0][0], np.ones((3, 2)))


def test_rollout_noise_replay_is_exact():
    cfg = small_config(T=5)
    params = NetworkParams.init_random(cfg, make_rng(0))
    A = AdaptationVars.zeros(cfg, 2)
    t1 = rollout(params, cfg, A=A, rng=make_rng(3))
    t2 = rollout(params, cfg, A=A, eps=t1.eps)
    assert np.array_equal(t1.x, t2.x)


def test_elbo_identity_accuracy_minus_complexity():
    cfg = small_config(T=6)
    params = NetworkParams.init_random(cfg, make_rng(0))
    A = AdaptationVars.zeros(cfg, 2)
    rng = make_rng(4)
    trace = rollout(params, cfg, A=A, rng=rng)
    target = rng.uniform(0, 1, (6, 2, 2))
    rep = elbo(trace, target, cfg)
    assert rep.elbo == rep.accuracy - rep.complexity   # exact, same floats
    assert rep.accuracy == pytest.approx(-0.5 * np.sum((trace.x - target) ** 2))


def test_elbo_perfect_reconstruction_accuracy_zero():
    cfg = small_config(T=4)
    params = NetworkParams.init_random(cfg, make_rng(0))
    A = AdaptationVars.zeros(cfg, 1)
    trace = rollout(params, cfg, A=A, rng=make_rng(2))
    rep = elbo(trace, trace.x.copy(), cfg)
    assert rep.accuracy == 0.0
    assert rep.elbo == -rep.complexity


def test_t1_kld_uses_unit_prior_weighted_by_w_I():
    cfg = small_config(T=4, w=0.5, w_I=0.001)
    params = NetworkParams.init_random(cfg, make_rng(0))
    A = AdaptationVars.zeros(cfg, 1)
    # Zero adaptation: q = (0,1) = t=1 prior, so the t=1 KLD must vanish.
    trace = rollout(params, cfg, A=A, rng=make_rng(2))
    unweighted, weighted, _ = kld_arrays(trace, cfg)
    assert unweighted[0, 0] == pytest.approx(0.0, abs=1e-12)
    # Push the t=1 posterior mean away from zero: the weighted t=1 term
    # must use w_I, not the layer weight.
    A.a_mu[0][:, 0] = 2.0
    trace = rollout(params, cfg, A=A, rng=make_rng(2))
    unweighted, weighted, _ = kld_arrays(trace, cfg)
    assert weighted[0, 0] == pytest.approx(cfg.w_I * unweighted[0, 0])


def test_mismatched_target_length_raises():
    cfg = small_config(T=4)
    params = NetworkParams.init_random(cfg, make_rng(0))
    trace = forward_prior(params, cfg, make_rng(1))
    with pytest.raises(ShapeError):
        elbo(trace, np.zeros((7, 2)), cfg)


def test_forward_posterior_uses_adaptation():
    cfg = small_config(T=5)
    params = NetworkParams.init_random(cfg, make_rng(0))
    A = AdaptationVars.zeros(cfg, 2)
    A.a_mu[0][:] = 0.9
    trace = forward_posterior(params, A, cfg, make_rng(5))
    assert trace.src == ["posterior"] * 5
    assert np.allclose(trace.mu_q[0], np.tanh(0.9))


def test_params_flat_roundtrip():
    cfg = small_config()
    params = NetworkParams.init_random(cfg, make_rng(0))
    flat = params.to_flat()
    clone = params.from_flat(flat)
    for k in params.blocks:
        assert np.array_equal(params.blocks[k], clone.blocks[k])


def test_adaptation_flat_roundtrip_and_select():
    cfg = small_config(T=5)
    A = AdaptationVars.zeros(cfg, 3)
    A.a_mu[0][:] = np.arange(A.a_mu[0].size).reshape(A.a_mu[0].shape)
    flat = A.to_flat()
    B = AdaptationVars.zeros(cfg, 3).from_flat(flat)
    assert np.array_equal(A.a_mu[0], B.a_mu[0])
    one = A.select(1)
    assert one.n_seq == 1
    assert np.array_equal(one.a_mu[0][0], A.a_mu[0][1])
