"""Minimal dense numeric kernel.

Arrays are plain float64 numpy arrays (the networks here are at most a few
dozen units wide, so there is no need for anything fancier). This module
collects the pieces the rest of the package leans on: a checked
matrix-vector product, an Adam optimizer with the epsilon-tied-to-learning-
rate convention used throughout, seeded Gaussian sampling with replayable
noise, and a central finite-difference oracle used to certify the
hand-written BPTT gradients.

Randomness: every generator in this package is a numpy ``Generator`` backed
by the PCG64 bit generator, seeded through ``SeedSequence``. PCG64 and
numpy's normal-draw algorithm are fixed by numpy's stability policy, so a
seed fully determines every draw sequence across runs and platforms.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ShapeError


def make_rng(seed):
    """Generator for a master seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derive_rng(seed, index):
    """Independent generator for worker/candidate `index` under a master seed."""
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    return np.random.Generator(np.random.PCG64(ss))


def matvec(W, v):
    """Matrix-vector product with an explicit dimension check."""
    W = np.asarray(W, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if W.ndim != 2 or v.ndim != 1 or W.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec shape mismatch: {W.shape} @ {v.shape}")
    return W @ v


def sample_gaussian(rng, mu, sigma):
    """Reparameterized Gaussian draw: z = mu + sigma * eps, eps ~ N(0, I).

    Returns ``(z, eps)`` so that the identical draw can be replayed when
    backpropagating through the sample. ``sigma`` must be positive.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if mu.shape != sigma.shape:
        raise ShapeError(f"mu/sigma shape mismatch: {mu.shape} vs {sigma.shape}")
    if np.any(sigma <= 0):
        raise NumericalError("sigma must be positive elementwise")
    eps = rng.standard_normal(mu.shape)
    return mu + sigma * eps, eps


@dataclass
class AdamState:
    """Per-parameter-block Adam accumulator.

    ``eps_hat`` follows the convention of being set to lr / 10 by callers;
    it is stored here rather than passed per step so a block keeps one
    consistent setting for its lifetime.
    """

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-4

    @classmethod
    def for_param(cls, param, lr):
        param = np.asarray(param)
        return cls(m=np.zeros_like(param, dtype=np.float64),
                   v=np.zeros_like(param, dtype=np.float64),
                   eps_hat=lr / 10.0)


def adam_step(state, param, grad, lr, name="param"):
    """One Adam update; returns the new parameter value.

    The update is -lr * m_hat / (sqrt(v_hat) + eps_hat) with the usual
    bias correction. ``state`` is advanced in place.
    """
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ShapeError(
            f"adam_step shape mismatch for {name}: param {param.shape}, "
            f"grad {grad.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericalError(f"non-finite gradient for parameter block '{name}'")
    if lr <= 0:
        raise ValueError("lr must be positive")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return param - lr * m_hat / (np.sqrt(v_hat) + state.eps_hat)


class Adam:
    """Adam over a named collection of parameter blocks."""

    def __init__(self, lr):
        self.lr = lr
        self._states = {}

    def step(self, params, grads):
        """Update a dict of arrays in place given a matching dict of grads."""
        for name in params:
            if name not in self._states:
                self._states[name] = AdamState.for_param(params[name], self.lr)
            params[name] = adam_step(self._states[name], params[name],
                                     grads[name], self.lr, name=name)
        return params


def clip_global_norm(grads, max_norm):
    """Scale a dict of gradient arrays so their joint L2 norm is <= max_norm.

    Direction is preserved; gradients below the threshold pass unchanged.
    Returns (clipped grads, pre-clip norm).
    """
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g) ** 2))
    norm = np.sqrt(total)
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


def finite_diff_gradient(f, x, h=1e-5):
    """Central-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    if h <= 0:
        raise ValueError("h must be positive")
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericalError(f"non-finite function value at coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
