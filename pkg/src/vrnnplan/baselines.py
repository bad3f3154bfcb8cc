"""Comparison models: deterministic forward model (FM) and
stochastic-initial-state MTRNN (SI).

Both share the leaky-integrator dynamics of the main model but are driven
by an external input u (the current sensory state; on the 2D task the
"motor" and sensory spaces coincide, so u is simply the agent position).
FM has no stochastic units at all. SI has Gaussian latents only at t=1,
one per deterministic unit, with a unit-Gaussian prior and per-sequence
raw posterior parameters analogous to the main model's adaptation
variables.

Training is one-step prediction in a partially closed loop: the fed-back
input is a blend of the model's own prediction and the ground truth,
u_hat = blend * predicted + (1 - blend) * truth, and gradients flow
through the predicted part. SI additionally applies global-norm gradient
clipping before the Adam update.

Time convention: a rollout over a length-T trajectory has T-1 steps; the
step consuming u_k (the position at time k) emits the prediction of the
position at time k+1.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError, TrainingDiverged
from .model import ModelConfig, _glorot, _exp_sigma, _stack_dataset
from .numeric import Adam, clip_global_norm, make_rng

DEFAULT_BLEND = 0.9
SI_CLIP_NORM = 50.0


class FmParams:
    """MTRNN weights plus an input map U; no stochastic units."""

    kind = "FM"

    def __init__(self, config, blocks):
        self.config = config
        self.blocks = blocks

    @classmethod
    def init_random(cls, config, rng):
        blocks = {}
        layers = config.layers
        for l, lc in enumerate(layers):
            n = lc.d_size
            blocks[f"W_dd{l}"] = _glorot(rng, n, n)
            if l < len(layers) - 1:
                blocks[f"W_td{l}"] = _glorot(rng, n, layers[l + 1].d_size)
        blocks["U"] = _glorot(rng, layers[0].d_size, config.output_dim)
        blocks["O"] = _glorot(rng, config.output_dim, layers[0].d_size)
        blocks["b"] = np.zeros(config.output_dim)
        return cls(config, blocks)

    def copy(self):
        return type(self)(self.config, {k: v.copy() for k, v in self.blocks.items()})

    # Flat-vector views, used by the finite-difference certification.
    def to_flat(self):
        return np.concatenate([self.blocks[k].ravel() for k in sorted(self.blocks)])

    def from_flat(self, vec):
        out = {}
        i = 0
        for k in sorted(self.blocks):
            shape = self.blocks[k].shape
            size = int(np.prod(shape))
            out[k] = vec[i:i + size].reshape(shape).copy()
            i += size
        return type(self)(self.config, out)


class SiParams(FmParams):
    """FM weights plus z -> h maps used at t=1 only (one z per d unit)."""

    kind = "SI"

    @classmethod
    def init_random(cls, config, rng):
        base = super().init_random(config, rng)
        for l, lc in enumerate(config.layers):
            base.blocks[f"W_zd{l}"] = _glorot(rng, lc.d_size, lc.d_size)
        return base


class SiAdaptation:
    """Raw t=1 posterior parameters per sequence and layer: (S, d_size)."""

    def __init__(self, a_mu, a_sig):
        self.a_mu = list(a_mu)
        self.a_sig = list(a_sig)

    @classmethod
    def zeros(cls, config, n_seq):
        return cls([np.zeros((n_seq, lc.d_size)) for lc in config.layers],
                   [np.zeros((n_seq, lc.d_size)) for lc in config.layers])

    @property
    def n_seq(self):
        return self.a_mu[0].shape[0]

    def select(self, idx):
        idx = np.atleast_1d(idx)
        return SiAdaptation([a[idx].copy() for a in self.a_mu],
                            [a[idx].copy() for a in self.a_sig])

    def posterior(self):
        """Per-layer (mu_q, sigma_q) lists."""
        return ([np.tanh(a) for a in self.a_mu],
                [_exp_sigma(a) for a in self.a_sig])

    def blocks(self):
        out = {}
        for l in range(len(self.a_mu)):
            out[f"S_mu{l}"] = self.a_mu[l]
            out[f"S_sig{l}"] = self.a_sig[l]
        return out

    def load_blocks(self, blocks):
        for l in range(len(self.a_mu)):
            self.a_mu[l] = blocks[f"S_mu{l}"]
            self.a_sig[l] = blocks[f"S_sig{l}"]


@dataclass
class IoTrace:
    """Record of one input-driven rollout: K = T - 1 steps."""

    u: np.ndarray          # (K, B, in)
    h: list                # per layer (K, B, n)
    d: list
    x: np.ndarray          # (K, B, out)
    z1: list | None        # per layer (B, n) actual latent values at step 0
    eps1: list | None

    @property
    def K(self):
        return self.x.shape[0]

    @property
    def batch(self):
        return self.x.shape[1]

    def trajectory(self, init, b=0):
        """Positions (T, out): the initial state followed by the predictions."""
        return np.vstack([np.asarray(init, float)[None, :], self.x[:, b, :]])


def fm_step(h_prev, d_prev, u_t, params):
    """One unbatched FM step; returns (h_t, d_t, x_t)."""
    cfg = params.config
    L = cfg.n_layers
    B = params.blocks
    u_t = np.asarray(u_t, dtype=float)
    if u_t.shape != (cfg.output_dim,):
        raise ShapeError(f"input shape {u_t.shape} != ({cfg.output_dim},)")
    h_out, d_out = [], []
    for l, lc in enumerate(cfg.layers):
        rec = B[f"W_dd{l}"] @ np.asarray(d_prev[l], dtype=float)
        if l == 0:
            rec = rec + B["U"] @ u_t
        if l < L - 1:
            rec = rec + B[f"W_td{l}"] @ np.asarray(d_prev[l + 1], dtype=float)
        h = (1.0 - 1.0 / lc.tau) * np.asarray(h_prev[l], dtype=float) + rec / lc.tau
        h_out.append(h)
        d_out.append(np.tanh(h))
    return h_out, d_out, B["O"] @ d_out[0] + B["b"]


def _step_batch(params, h_prev, d_prev, u_k, z1=None):
    cfg = params.config
    L = cfg.n_layers
    B = params.blocks
    h_out, d_out = [], []
    for l, lc in enumerate(cfg.layers):
        rec = d_prev[l] @ B[f"W_dd{l}"].T
        if l == 0:
            rec = rec + u_k @ B["U"].T
        if l < L - 1:
            rec = rec + d_prev[l + 1] @ B[f"W_td{l}"].T
        if z1 is not None:
            rec = rec + z1[l] @ B[f"W_zd{l}"].T
        h = (1.0 - 1.0 / lc.tau) * h_prev[l] + rec / lc.tau
        h_out.append(h)
        d_out.append(np.tanh(h))
    x = d_out[0] @ B["O"].T + B["b"]
    return h_out, d_out, x


def rollout_io(params, u_seq, z1=None, eps1=None):
    """Teacher-forced / open-loop rollout with an explicit input sequence.

    u_seq: (K, B, in). z1 (SI only): per-layer (B, n) latent values
    injected at the first step.
    """
    cfg = params.config
    u_seq = np.asarray(u_seq, dtype=float)
    K, Bn = u_seq.shape[0], u_seq.shape[1]
    h = [np.zeros((K, Bn, lc.d_size)) for lc in cfg.layers]
    d = [np.zeros((K, Bn, lc.d_size)) for lc in cfg.layers]
    x = np.zeros((K, Bn, cfg.output_dim))
    h_prev = [np.zeros((Bn, lc.d_size)) for lc in cfg.layers]
    d_prev = [np.zeros((Bn, lc.d_size)) for lc in cfg.layers]
    for k in range(K):
        hk, dk, xk = _step_batch(params, h_prev, d_prev, u_seq[k],
                                 z1 if k == 0 else None)
        for l in range(cfg.n_layers):
            h[l][k] = hk[l]
            d[l][k] = dk[l]
        x[k] = xk
        h_prev, d_prev = hk, dk
    return IoTrace(u=u_seq.copy(), h=h, d=d, x=x, z1=z1, eps1=eps1)


def rollout_feedback(params, truths, blend, z1=None, eps1=None, init=None):
    """Closed or partially closed loop rollout.

    With ``truths`` (T, B, in): u_1 is the true initial state and later
    inputs blend the previous prediction with the truth. With ``truths``
    None, ``init`` (B, in) seeds a fully closed loop (blend ignored).
    """
    cfg = params.config
    if truths is not None:
        truths = np.asarray(truths, dtype=float)
        K = truths.shape[0] - 1
        Bn = truths.shape[1]
        u0 = truths[0]
    else:
        init = np.atleast_2d(np.asarray(init, dtype=float))
        K = cfg.T - 1
        Bn = init.shape[0]
        u0 = init
        blend = 1.0
    u = np.zeros((K, Bn, cfg.output_dim))
    h = [np.zeros((K, Bn, lc.d_size)) for lc in cfg.layers]
    d = [np.zeros((K, Bn, lc.d_size)) for lc in cfg.layers]
    x = np.zeros((K, Bn, cfg.output_dim))
    h_prev = [np.zeros((Bn, lc.d_size)) for lc in cfg.layers]
    d_prev = [np.zeros((Bn, lc.d_size)) for lc in cfg.layers]
    for k in range(K):
        if k == 0:
            u[k] = u0
        elif truths is not None:
            u[k] = blend * x[k - 1] + (1.0 - blend) * truths[k]
        else:
            u[k] = x[k - 1]
        hk, dk, xk = _step_batch(params, h_prev, d_prev, u[k],
                                 z1 if k == 0 else None)
        for l in range(cfg.n_layers):
            h[l][k] = hk[l]
            d[l][k] = dk[l]
        x[k] = xk
        h_prev, d_prev = hk, dk
    return IoTrace(u=u, h=h, d=d, x=x, z1=z1, eps1=eps1)


def backward_io(params, trace, err, feedback, compute_theta=True,
                want_u_grad=False, want_z1_grad=False):
    """BPTT for the input-driven MTRNN.

    err: (K, B, out) direct gradient of the loss w.r.t. each prediction.
    feedback: (K,) coefficient of x[k-1] inside u[k] (0 for free or
    teacher-forced inputs). Returns (theta_grads, u_grad, z1_grad).
    """
    cfg = params.config
    L = cfg.n_layers
    B = params.blocks
    K, Bn = trace.K, trace.batch
    taus = [lc.tau for lc in cfg.layers]
    tg = {k: np.zeros_like(v) for k, v in B.items()} if compute_theta else None
    du = np.zeros((K, Bn, cfg.output_dim))
    dz1 = [np.zeros((Bn, lc.d_size)) for lc in cfg.layers] if want_z1_grad else None
    dh_next = [np.zeros((Bn, lc.d_size)) for lc in cfg.layers]
    dd_carry = [np.zeros((Bn, lc.d_size)) for lc in cfg.layers]
    for k in range(K - 1, -1, -1):
        dx = err[k].copy()
        if k + 1 < K and feedback[k + 1] != 0.0:
            dx += feedback[k + 1] * du[k + 1]
        dd0 = dx @ B["O"]
        if compute_theta:
            tg["O"] += dx.T @ trace.d[0][k]
            tg["b"] += dx.sum(axis=0)
        new_carry = [np.zeros((Bn, lc.d_size)) for lc in cfg.layers]
        for l in range(L):
            dd = dd_carry[l] + (dd0 if l == 0 else 0.0)
            dh = dd * (1.0 - trace.d[l][k] ** 2) + (1.0 - 1.0 / taus[l]) * dh_next[l]
            s = dh / taus[l]
            d_prev_l = trace.d[l][k - 1] if k > 0 else \
                np.zeros((Bn, cfg.layers[l].d_size))
            if compute_theta:
                tg[f"W_dd{l}"] += s.T @ d_prev_l
                if l < L - 1:
                    d_prev_up = trace.d[l + 1][k - 1] if k > 0 else \
                        np.zeros((Bn, cfg.layers[l + 1].d_size))
                    tg[f"W_td{l}"] += s.T @ d_prev_up
                if l == 0:
                    tg["U"] += s.T @ trace.u[k]
                if k == 0 and trace.z1 is not None:
                    tg[f"W_zd{l}"] += s.T @ trace.z1[l]
            if l == 0:
                du[k] = s @ B["U"]
            if k == 0 and want_z1_grad:
                dz1[l] = s @ B[f"W_zd{l}"]
            new_carry[l] += s @ B[f"W_dd{l}"]
            if l < L - 1:
                new_carry[l + 1] += s @ B[f"W_td{l}"]
            dh_next[l] = dh
        dd_carry = new_carry
    return tg, (du if want_u_grad else None), dz1


def _feedback_coeffs(K, blend):
    fb = np.full(K, blend)
    fb[0] = 0.0
    return fb


def train_fm(dataset, config, rng=None, blend=DEFAULT_BLEND, log_every=0):
    """One-step prediction training of the forward model; returns (params, history)."""
    X = _stack_dataset(dataset, config)
    if rng is None:
        rng = make_rng(config.seed)
    params = FmParams.init_random(config, rng)
    opt = Adam(config.lr)
    K = config.T - 1
    fb = _feedback_coeffs(K, blend)
    hist = np.zeros(config.epochs)
    for epoch in range(config.epochs):
        trace = rollout_feedback(params, X, blend)
        err = trace.x - X[1:]
        loss = 0.5 * float(np.sum(err ** 2))
        if not np.isfinite(loss):
            raise TrainingDiverged(epoch)
        hist[epoch] = loss
        tg, _, _ = backward_io(params, trace, err, fb)
        params.blocks = opt.step(params.blocks, tg)
        if log_every and epoch % log_every == 0:
            print(f"fm epoch {epoch:6d}  loss {loss:.6f}")
    return params, hist


def sample_z1(adapt, rng=None, eps1=None):
    """Draw the t=1 latents from an SiAdaptation posterior; returns (z1, eps1)."""
    mu, sig = adapt.posterior()
    if eps1 is None:
        eps1 = [rng.standard_normal(m.shape) for m in mu]
    z1 = [m + s * e for m, s, e in zip(mu, sig, eps1)]
    return z1, eps1


def _si_kld(adapt):
    """KL(q1 || N(0, I)) summed over layers, units, sequences."""
    mu, sig = adapt.posterior()
    total = 0.0
    for m, s in zip(mu, sig):
        total += float(np.sum(-np.log(s) + (m ** 2 + s ** 2) / 2.0 - 0.5))
    return total


def _si_adapt_grads(adapt, dz1, eps1, w_I):
    """Gradients of the SI objective w.r.t. the raw t=1 posterior parameters."""
    mu, sig = adapt.posterior()
    out = {}
    for l, (m, s) in enumerate(zip(mu, sig)):
        dmu = dz1[l] + w_I * m
        dsig = dz1[l] * eps1[l] + w_I * (s - 1.0 / s)
        out[f"S_mu{l}"] = dmu * (1.0 - m ** 2)
        out[f"S_sig{l}"] = dsig * s
    return out


def train_si(dataset, config, rng=None, blend=DEFAULT_BLEND,
             clip_norm=SI_CLIP_NORM, log_every=0):
    """ELBO-style training of the SI model; returns (params, adaptation, history)."""
    X = _stack_dataset(dataset, config)
    S = X.shape[1]
    if rng is None:
        rng = make_rng(config.seed)
    params = SiParams.init_random(config, rng)
    adapt = SiAdaptation.zeros(config, S)
    opt = Adam(config.lr)
    K = config.T - 1
    fb = _feedback_coeffs(K, blend)
    hist = np.zeros(config.epochs)
    for epoch in range(config.epochs):
        z1, eps1 = sample_z1(adapt, rng)
        trace = rollout_feedback(params, X, blend, z1=z1, eps1=eps1)
        err = trace.x - X[1:]
        loss = 0.5 * float(np.sum(err ** 2)) + config.w_I * _si_kld(adapt)
        if not np.isfinite(loss):
            raise TrainingDiverged(epoch)
        hist[epoch] = loss
        tg, _, dz1 = backward_io(params, trace, err, fb, want_z1_grad=True)
        grads = dict(tg)
        grads.update(_si_adapt_grads(adapt, dz1, eps1, config.w_I))
        grads, _ = clip_global_norm(grads, clip_norm)
        merged = dict(params.blocks)
        merged.update(adapt.blocks())
        merged = opt.step(merged, grads)
        params.blocks = {k: merged[k] for k in params.blocks}
        adapt.load_blocks(merged)
        if log_every and epoch % log_every == 0:
            print(f"si epoch {epoch:6d}  loss {loss:.6f}")
    return params, adapt, hist
