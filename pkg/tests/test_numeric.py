"""Unit tests for the dense numeric kernel."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from vrnnplan.errors import NumericalError, ShapeError
from vrnnplan.numeric import (Adam, AdamState, adam_step, clip_global_norm,
                              derive_rng, finite_diff_gradient, make_rng,
                              matvec, sample_gaussian)


# ---------------------------------------------------------------------------
# RNG plumbing


def test_make_rng_reproducible():
    a = make_rng(123).standard_normal(8)
    b = make_rng(123).standard_normal(8)
    assert np.array_equal(a, b)


def test_make_rng_seed_sensitivity():
    assert not np.array_equal(make_rng(1).standard_normal(8),
                              make_rng(2).standard_normal(8))


def test_derive_rng_streams_are_independent_and_stable():
    a1 = derive_rng(5, 0).standard_normal(8)
    a2 = derive_rng(5, 0).standard_normal(8)
    b = derive_rng(5, 1).standard_normal(8)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)


# ---------------------------------------------------------------------------
# matvec / sampling


def test_matvec_matches_numpy():
    rng = make_rng(0)
    W = rng.standard_normal((3, 4))
    v = rng.standard_normal(4)
    assert np.allclose(matvec(W, v), W @ v)


def test_matvec_shape_error():
    with pytest.raises(ShapeError):
        matvec(np.zeros((3, 4)), np.zeros(5))


def test_sample_gaussian_replayable():
    rng = make_rng(7)
    mu = np.array([0.5, -0.5])
    sigma = np.array([0.1, 2.0])
    z, eps = sample_gaussian(rng, mu, sigma)
    assert np.allclose(z, mu + sigma * eps)


def test_sample_gaussian_rejects_nonpositive_sigma():
    with pytest.raises(NumericalError):
        sample_gaussian(make_rng(0), np.zeros(2), np.array([1.0, 0.0]))


# ---------------------------------------------------------------------------
# Adam


def test_adam_first_step_closed_form():
    # After one step m_hat = g and v_hat = g^2, so the update is
    # -lr * g / (|g| + eps_hat) with eps_hat = lr / 10.
    state = AdamState.for_param(np.zeros(1), lr=0.1)
    new = adam_step(state, np.zeros(1), np.ones(1), 0.1)
    assert np.allclose(new, [-0.1 / (1.0 + 0.01)])
    assert np.allclose(new, [-0.09900990099009901])


def test_adam_zero_gradient_is_identity():
    param = np.array([1.0, -2.0])
    state = AdamState.for_param(param, lr=0.01)
    assert np.array_equal(adam_step(state, param, np.zeros(2), 0.01), param)


def test_adam_eps_hat_is_lr_over_ten():
    state = AdamState.for_param(np.zeros(3), lr=0.05)
    assert state.eps_hat == pytest.approx(0.005)


def test_adam_rejects_nonfinite_gradient():
    state = AdamState.for_param(np.zeros(1), lr=0.1)
    with pytest.raises(NumericalError):
        adam_step(state, np.zeros(1), np.array([np.nan]), 0.1)


def test_adam_collection_tracks_per_block_state():
    opt = Adam(0.1)
    params = {"a": np.zeros(2), "b": np.ones(3)}
    grads = {"a": np.ones(2), "b": np.zeros(3)}
    out = opt.step(params, grads)
    assert np.allclose(out["a"], -0.1 / 1.01)
    assert np.array_equal(out["b"], np.ones(3))


@given(hnp.arrays(np.float64, 4, elements=st.floats(-10, 10)),
       hnp.arrays(np.float64, 4, elements=st.floats(-10, 10)))
@settings(max_examples=50, deadline=None)
def test_adam_step_bounded_by_lr(param, grad):
    # |update| <= lr / (1 - something tiny); with eps_hat > 0 each step
    # moves every coordinate by strictly less than ~lr * |g|/(|g| + eps).
    lr = 0.1
    state = AdamState.for_param(param, lr)
    new = adam_step(state, param, grad, lr)
    assert np.all(np.abs(new - param) <= lr + 1e-12)


# ---------------------------------------------------------------------------
# Gradient clipping


def test_clip_global_norm_pass_through():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    clipped, norm = clip_global_norm(grads, 10.0)
    assert norm == pytest.approx(5.0)
    assert clipped is grads


def test_clip_global_norm_scales_direction_preserved():
    grads = {"a": np.array([30.0]), "b": np.array([40.0])}
    clipped, norm = clip_global_norm(grads, 5.0)
    assert norm == pytest.approx(50.0)
    assert np.allclose(clipped["a"], [3.0])
    assert np.allclose(clipped["b"], [4.0])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8),
       st.floats(0.1, 100.0))
@settings(max_examples=100, deadline=None)
def test_clip_global_norm_property(values, max_norm):
    grads = {"g": np.asarray(values)}
    clipped, norm = clip_global_norm(grads, max_norm)
    post = float(np.sqrt(np.sum(clipped["g"] ** 2)))
    assert post <= max_norm * (1 + 1e-9) or norm <= max_norm
    if norm > 0:
        # positive scalar multiple of the input gradient
        scale = post / norm
        assert np.allclose(clipped["g"], np.asarray(values) * scale)


# ---------------------------------------------------------------------------
# Finite differences


def test_finite_diff_quadratic_exact():
    x = np.array([1.0, -2.0, 0.5])
    grad = finite_diff_gradient(lambda v: 0.5 * float(v @ v), x)
    assert np.allclose(grad, x, atol=1e-9)


def test_finite_diff_matches_analytic_trig():
    x = np.array([0.3, 1.1])
    grad = finite_diff_gradient(lambda v: float(np.sum(np.sin(v))), x)
    assert np.allclose(grad, np.cos(x), atol=1e-8)
