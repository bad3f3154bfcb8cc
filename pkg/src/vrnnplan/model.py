"""Variational multiple-timescale RNN: generative model, ELBO, and training.

The network is a stack of leaky-integrator (CTRNN) layers, bottom layer
fastest, each carrying deterministic units d and Gaussian stochastic units
z. Per layer l and timestep t:

    h_t = (1 - 1/tau) h_{t-1} + (1/tau) (W_dd d_{t-1} + W_zd z_t + W_td d_next_{t-1})
    d_t = tanh(h_t)

with the top-down term absent at the top layer and h_0 = d_0 = 0. The
prior over z_t is a unit Gaussian at t=1 and otherwise a Gaussian whose
mean/scale are tanh/exp maps of the same layer's d_{t-1}. The approximate
posterior is parameterized directly by per-sequence, per-step adaptation
variables: mu_q = tanh(A_mu), sigma_q = exp(A_sigma). The output is an
affine map of the bottom layer's d.

Training maximizes the ELBO = accuracy - complexity where accuracy is the
negated squared reconstruction error and complexity is the KL divergence
between posterior and prior, weighted per layer (w) and, at t=1, by a
separate initial-state weight (w_I). Gradients for both the weights and
the adaptation variables are computed by a hand-written BPTT pass that
replays the stored reparameterization noise, so they are exact for the
sampled path (certified against finite differences in the test suite).

All internal arrays are time-major and batched: (T, B, units).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ShapeError, TrainingDiverged
from .numeric import Adam, make_rng

# Floor for sigma after exp, and cap on the pre-exp activation. Both only
# guard against extreme adaptation values / weights; gradients are computed
# as if the maps were pure exp, which is exact whenever the guards are idle.
SIGMA_FLOOR = 1e-6
RAW_CAP = 12.0


@dataclass(frozen=True)
class LayerConfig:
    """One MTRNN layer: sizes, time constant, and complexity weight."""

    d_size: int
    z_size: int
    tau: float
    w: float

    def __post_init__(self):
        if self.d_size < 1:
            raise ShapeError("d_size must be >= 1")
        if self.z_size < 0:
            raise ShapeError("z_size must be >= 0")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if self.w < 0:
            raise ValueError("w must be >= 0")


@dataclass
class ModelConfig:
    """Network shape plus training hyperparameters.

    Layers are ordered bottom (fastest) to top (slowest); tau must be
    strictly increasing upward.
    """

    layers: tuple
    output_dim: int = 2
    T: int = 30
    w_I: float = 0.001
    lr: float = 0.001
    epochs: int = 50000
    error_dropout_p: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.layers = tuple(self.layers)
        if not self.layers:
            raise ValueError("at least one layer required")
        if self.output_dim < 1:
            raise ShapeError("output_dim must be >= 1")
        if self.w_I < 0:
            raise ValueError("w_I must be >= 0")
        if not 0.0 <= self.error_dropout_p < 1.0:
            raise ValueError("error_dropout_p must be in [0, 1)")
        taus = [l.tau for l in self.layers]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError("tau must be strictly increasing bottom to top")

    @property
    def n_layers(self):
        return len(self.layers)


def _glorot(rng, rows, cols):
    lim = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-lim, lim, size=(rows, cols))


class NetworkParams:
    """All weight matrices, stored as a flat dict of named blocks.

    Per layer l: W_dd{l} (recurrent), W_zd{l} (z into h), W_td{l}
    (top-down from layer l+1, absent at the top), W_pm{l} / W_ps{l}
    (d -> prior mean / pre-exp scale). Output map "O" and bias "b" read
    the bottom layer only.
    """

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
            blocks[f"W_zd{l}"] = _glorot(rng, n, lc.z_size)
            if l < len(layers) - 1:
                blocks[f"W_td{l}"] = _glorot(rng, n, layers[l + 1].d_size)
            blocks[f"W_pm{l}"] = _glorot(rng, lc.z_size, n)
            blocks[f"W_ps{l}"] = _glorot(rng, lc.z_size, n)
        blocks["O"] = _glorot(rng, config.output_dim, layers[0].d_size)
        blocks["b"] = np.zeros(config.output_dim)
        return cls(config, blocks)

    def copy(self):
        return NetworkParams(self.config, {k: v.copy() for k, v in self.blocks.items()})

    def check_finite(self):
        for name, arr in self.blocks.items():
            if not np.all(np.isfinite(arr)):
                raise NumericalError(f"non-finite values in weight block '{name}'")

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
        return NetworkParams(self.config, out)


class AdaptationVars:
    """Raw posterior parameters per sequence, timestep, and layer.

    ``a_mu[l]`` and ``a_sig[l]`` have shape (n_seq, T, z_size_l). The
    posterior for sequence s at step t is N(tanh(a_mu), exp(a_sig)^2).
    """

    def __init__(self, a_mu, a_sig):
        self.a_mu = list(a_mu)
        self.a_sig = list(a_sig)

    @classmethod
    def zeros(cls, config, n_seq, T=None):
        T = T if T is not None else config.T
        a_mu = [np.zeros((n_seq, T, lc.z_size)) for lc in config.layers]
        a_sig = [np.zeros((n_seq, T, lc.z_size)) for lc in config.layers]
        return cls(a_mu, a_sig)

    @property
    def n_seq(self):
        return self.a_mu[0].shape[0]

    @property
    def T(self):
        return self.a_mu[0].shape[1]

    def copy(self):
        return AdaptationVars([a.copy() for a in self.a_mu],
                              [a.copy() for a in self.a_sig])

    def select(self, idx):
        """Sub-view (copy) of the given sequence indices."""
        idx = np.atleast_1d(idx)
        return AdaptationVars([a[idx].copy() for a in self.a_mu],
                              [a[idx].copy() for a in self.a_sig])

    def first_step(self, seq):
        """(a_mu, a_sig) lists at t=1 of one sequence."""
        return ([a[seq, 0].copy() for a in self.a_mu],
                [a[seq, 0].copy() for a in self.a_sig])

    def blocks(self, prefix="A"):
        out = {}
        for l in range(len(self.a_mu)):
            out[f"{prefix}_mu{l}"] = self.a_mu[l]
            out[f"{prefix}_sig{l}"] = self.a_sig[l]
        return out

    def load_blocks(self, blocks, prefix="A"):
        for l in range(len(self.a_mu)):
            self.a_mu[l] = blocks[f"{prefix}_mu{l}"]
            self.a_sig[l] = blocks[f"{prefix}_sig{l}"]

    def to_flat(self):
        parts = [a.ravel() for a in self.a_mu] + [a.ravel() for a in self.a_sig]
        return np.concatenate(parts)

    def from_flat(self, vec):
        arrs = []
        i = 0
        for a in list(self.a_mu) + list(self.a_sig):
            size = a.size
            arrs.append(vec[i:i + size].reshape(a.shape).copy())
            i += size
        L = len(self.a_mu)
        return AdaptationVars(arrs[:L], arrs[L:])


@dataclass
class ForwardTrace:
    """Everything recorded during one batched rollout.

    Per-layer lists of (T, B, units) arrays, plus the output x of shape
    (T, B, output_dim). ``src`` records, per timestep, whether z came from
    the prior or the posterior.
    """

    h: list
    d: list
    z: list
    eps: list
    mu_p: list
    sig_p: list
    mu_q: list
    sig_q: list
    x: np.ndarray
    src: list

    @property
    def T(self):
        return self.x.shape[0]

    @property
    def batch(self):
        return self.x.shape[1]

    def trajectory(self, b=0):
        """Output sequence of one batch element, shape (T, output_dim)."""
        return self.x[:, b, :].copy()


@dataclass
class ElboReport:
    accuracy: float
    complexity: float
    elbo: float
    kld_pq: float
    # kld_pq split by which weight governs each term: the first step is
    # scaled by w_I while every later step is scaled by the per-layer w,
    # so comparisons across w settings should use the t>=2 part and report
    # the initial-step part alongside it.
    kld_pq_initial: float = 0.0
    kld_pq_meta: float = 0.0


def _exp_sigma(raw):
    return np.maximum(np.exp(np.minimum(raw, RAW_CAP)), SIGMA_FLOOR)


def posterior_params(a_mu, a_sig):
    """Map raw adaptation values to (mu_q, sigma_q)."""
    return np.tanh(np.asarray(a_mu, dtype=float)), _exp_sigma(np.asarray(a_sig, dtype=float))


def prior_params(d_prev, params, t):
    """Per-layer prior (mu_p, sigma_p) lists given previous d.

    t is 1-based; at t=1 the prior is the unit Gaussian regardless of d.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    cfg = params.config
    mus, sigs = [], []
    for l, lc in enumerate(cfg.layers):
        if t == 1:
            mus.append(np.zeros(lc.z_size))
            sigs.append(np.ones(lc.z_size))
        else:
            d = np.asarray(d_prev[l], dtype=float)
            mus.append(np.tanh(params.blocks[f"W_pm{l}"] @ d))
            sigs.append(_exp_sigma(params.blocks[f"W_ps{l}"] @ d))
    return mus, sigs


def mtrnn_cell(h_prev, d_prev, z_t, params):
    """One unbatched MTRNN step over all layers; returns (h_t, d_t) lists."""
    cfg = params.config
    L = cfg.n_layers
    h_out, d_out = [], []
    for l, lc in enumerate(cfg.layers):
        rec = params.blocks[f"W_dd{l}"] @ np.asarray(d_prev[l], dtype=float)
        rec = rec + params.blocks[f"W_zd{l}"] @ np.asarray(z_t[l], dtype=float)
        if l < L - 1:
            rec = rec + params.blocks[f"W_td{l}"] @ np.asarray(d_prev[l + 1], dtype=float)
        h = (1.0 - 1.0 / lc.tau) * np.asarray(h_prev[l], dtype=float) + rec / lc.tau
        h_out.append(h)
        d_out.append(np.tanh(h))
    return h_out, d_out


def kld_term(mu_q, sigma_q, mu_p, sigma_p, w_eff):
    """Gaussian KL(q || p) summed over units; returns (weighted, unweighted).

    Uses the standard closed form; at t=1 callers pass (0, 1) for the
    prior, which this reduces to correctly.
    """
    mu_q, sigma_q = np.asarray(mu_q, float), np.asarray(sigma_q, float)
    mu_p, sigma_p = np.asarray(mu_p, float), np.asarray(sigma_p, float)
    if np.any(sigma_q <= 0) or np.any(sigma_p <= 0):
        raise NumericalError("sigma must be positive in kld_term")
    unweighted = float(np.sum(
        np.log(sigma_p / sigma_q)
        + ((mu_p - mu_q) ** 2 + sigma_q ** 2) / (2.0 * sigma_p ** 2)
        - 0.5))
    return w_eff * unweighted, unweighted


# ---------------------------------------------------------------------------
# Batched rollout and BPTT engine


def rollout(params, config, *, batch=None, A=None, posterior_steps=None,
            rng=None, eps=None, T=None, sigma_override=None):
    """Roll the generative model forward and record a full trace.

    posterior_steps: boolean mask of length T; where True (and A is given),
    z is sampled from the posterior, otherwise from the prior. ``eps`` may
    be passed to replay a previous noise draw (list per layer of
    (T, B, z) arrays); otherwise noise is drawn from ``rng``.
    ``sigma_override`` is a test hook replacing every sampling sigma.
    """
    T = T if T is not None else (A.T if A is not None else config.T)
    if A is not None:
        if batch is None:
            batch = A.n_seq
        if A.T != T:
            raise ShapeError(f"adaptation length {A.T} != rollout length {T}")
    if batch is None:
        batch = 1
    L = config.n_layers
    dsz = [lc.d_size for lc in config.layers]
    zsz = [lc.z_size for lc in config.layers]
    if posterior_steps is None:
        posterior_steps = [A is not None] * T
    if eps is None:
        if rng is None:
            rng = make_rng(config.seed)
        eps = [rng.standard_normal((T, batch, z)) for z in zsz]

    h = [np.zeros((T, batch, n)) for n in dsz]
    d = [np.zeros((T, batch, n)) for n in dsz]
    z = [np.zeros((T, batch, zs)) for zs in zsz]
    mu_p = [np.zeros((T, batch, zs)) for zs in zsz]
    sig_p = [np.ones((T, batch, zs)) for zs in zsz]
    mu_q = [np.zeros((T, batch, zs)) for zs in zsz]
    sig_q = [np.ones((T, batch, zs)) for zs in zsz]
    x = np.zeros((T, batch, config.output_dim))
    src = []

    B = params.blocks
    d_prev = [np.zeros((batch, n)) for n in dsz]
    h_prev = [np.zeros((batch, n)) for n in dsz]
    for t in range(T):
        use_q = bool(posterior_steps[t])
        src.append("posterior" if use_q else "prior")
        for l, lc in enumerate(config.layers):
            if t > 0:
                mu_p[l][t] = np.tanh(d_prev[l] @ B[f"W_pm{l}"].T)
                sig_p[l][t] = _exp_sigma(d_prev[l] @ B[f"W_ps{l}"].T)
            if A is not None:
                # Record the posterior wherever A defines one, even on
                # prior-sampled steps, so KLD diagnostics can compare the
                # trained posterior against the rolled-out prior.
                mu_q[l][t] = np.tanh(A.a_mu[l][:, t])
                sig_q[l][t] = _exp_sigma(A.a_sig[l][:, t])
            if use_q:
                mu, sig = mu_q[l][t], sig_q[l][t]
            else:
                mu, sig = mu_p[l][t], sig_p[l][t]
            if sigma_override is not None:
                sig = np.full_like(sig, sigma_override)
            z[l][t] = mu + sig * eps[l][t]
            rec = d_prev[l] @ B[f"W_dd{l}"].T + z[l][t] @ B[f"W_zd{l}"].T
            if l < L - 1:
                rec = rec + d_prev[l + 1] @ B[f"W_td{l}"].T
            h[l][t] = (1.0 - 1.0 / lc.tau) * h_prev[l] + rec / lc.tau
            d[l][t] = np.tanh(h[l][t])
        x[t] = d[0][t] @ B["O"].T + B["b"]
        d_prev = [d[l][t] for l in range(L)]
        h_prev = [h[l][t] for l in range(L)]
    return ForwardTrace(h=h, d=d, z=z, eps=eps, mu_p=mu_p, sig_p=sig_p,
                        mu_q=mu_q, sig_q=sig_q, x=x, src=src)


def _complexity_weights(config, T):
    """(T, L) array of effective KL weights: w_I at t=1, layer w after."""
    w = np.zeros((T, config.n_layers))
    for l, lc in enumerate(config.layers):
        w[0, l] = config.w_I
        w[1:, l] = lc.w
    return w


def kld_arrays(trace, config):
    """Unweighted and weighted KLD per (timestep, batch), summed over layers.

    Also returns the per-layer unweighted arrays for diagnostics.
    """
    T, Bn = trace.T, trace.batch
    w = _complexity_weights(config, T)
    unweighted = np.zeros((T, Bn))
    weighted = np.zeros((T, Bn))
    per_layer = []
    for l in range(config.n_layers):
        kl = np.sum(
            np.log(trace.sig_p[l] / trace.sig_q[l])
            + ((trace.mu_p[l] - trace.mu_q[l]) ** 2 + trace.sig_q[l] ** 2)
            / (2.0 * trace.sig_p[l] ** 2)
            - 0.5, axis=2)
        per_layer.append(kl)
        unweighted += kl
        weighted += w[:, l][:, None] * kl
    return unweighted, weighted, per_layer


def elbo(trace, target, config):
    """ELBO report for a trace against a target of shape (T, out) or (T, B, out).

    Sums over timesteps and, if batched, over the batch.
    """
    target = np.asarray(target, dtype=float)
    if target.ndim == 2:
        target = target[:, None, :]
    if target.shape[0] != trace.T:
        raise ShapeError(f"target length {target.shape[0]} != trace length {trace.T}")
    err = trace.x - target
    accuracy = -0.5 * float(np.sum(err ** 2))
    unweighted, weighted, _ = kld_arrays(trace, config)
    complexity = float(np.sum(weighted))
    return ElboReport(accuracy=accuracy, complexity=complexity,
                      elbo=accuracy - complexity,
                      kld_pq=float(np.sum(unweighted)),
                      kld_pq_initial=float(np.sum(unweighted[0])),
                      kld_pq_meta=float(np.sum(unweighted[1:])))


def backward(params, config, trace, target, A, acc_mask=None, compute_theta=True):
    """BPTT gradients of (-ELBO) w.r.t. weights and adaptation variables.

    Requires a fully posterior-sampled trace (training / planning forward
    pass). ``acc_mask`` of shape (T, B) scales the per-step error signal
    before it enters the accuracy gradient (error-signal dropout, or
    endpoint-only planning objectives); complexity gradients are never
    masked. Returns (theta_grads, a_grads) as dicts of arrays; A gradients
    keep the (B, T, z) per-sequence layout.
    """
    if any(s != "posterior" for s in trace.src):
        raise ValueError("backward requires a posterior-sampled trace")
    target = np.asarray(target, dtype=float)
    if target.ndim == 2:
        target = target[:, None, :]
    T, Bn = trace.T, trace.batch
    if acc_mask is None:
        acc_mask = np.ones((T, Bn))
    L = config.n_layers
    B = params.blocks
    taus = [lc.tau for lc in config.layers]
    wts = _complexity_weights(config, T)

    tg = {k: np.zeros_like(v) for k, v in B.items()} if compute_theta else None
    g_amu = [np.zeros_like(a) for a in A.a_mu]
    g_asig = [np.zeros_like(a) for a in A.a_sig]

    dh_next = [np.zeros((Bn, lc.d_size)) for lc in config.layers]
    dd_carry = [np.zeros((Bn, lc.d_size)) for lc in config.layers]

    for t in range(T - 1, -1, -1):
        e = (trace.x[t] - target[t]) * acc_mask[t][:, None]
        dd0_out = e @ B["O"]
        if compute_theta:
            tg["O"] += e.T @ trace.d[0][t]
            tg["b"] += e.sum(axis=0)
        new_carry = [np.zeros((Bn, lc.d_size)) for lc in config.layers]
        for l in range(L):
            dd = dd_carry[l] + (dd0_out if l == 0 else 0.0)
            dh = dd * (1.0 - trace.d[l][t] ** 2) + (1.0 - 1.0 / taus[l]) * dh_next[l]
            s = dh / taus[l]
            d_prev_l = trace.d[l][t - 1] if t > 0 else np.zeros((Bn, config.layers[l].d_size))
            if compute_theta:
                tg[f"W_dd{l}"] += s.T @ d_prev_l
                tg[f"W_zd{l}"] += s.T @ trace.z[l][t]
                if l < L - 1:
                    d_prev_up = trace.d[l + 1][t - 1] if t > 0 else \
                        np.zeros((Bn, config.layers[l + 1].d_size))
                    tg[f"W_td{l}"] += s.T @ d_prev_up
            new_carry[l] += s @ B[f"W_dd{l}"]
            if l < L - 1:
                new_carry[l + 1] += s @ B[f"W_td{l}"]
            dz = s @ B[f"W_zd{l}"]

            mu_q, sig_q = trace.mu_q[l][t], trace.sig_q[l][t]
            mu_p, sig_p = trace.mu_p[l][t], trace.sig_p[l][t]
            w_eff = wts[t, l]
            dmu_q = w_eff * (mu_q - mu_p) / sig_p ** 2 + dz
            dsig_q = w_eff * (-1.0 / sig_q + sig_q / sig_p ** 2) + dz * trace.eps[l][t]
            g_amu[l][:, t] = dmu_q * (1.0 - mu_q ** 2)
            g_asig[l][:, t] = dsig_q * sig_q
            if t > 0:
                diff = mu_p - mu_q
                dmu_p = w_eff * diff / sig_p ** 2
                dsig_p = w_eff * (1.0 / sig_p - (diff ** 2 + sig_q ** 2) / sig_p ** 3)
                da_p = dmu_p * (1.0 - mu_p ** 2)
                da_s = dsig_p * sig_p
                if compute_theta:
                    tg[f"W_pm{l}"] += da_p.T @ d_prev_l
                    tg[f"W_ps{l}"] += da_s.T @ d_prev_l
                new_carry[l] += da_p @ B[f"W_pm{l}"] + da_s @ B[f"W_ps{l}"]
            dh_next[l] = dh
        dd_carry = new_carry

    a_grads = {}
    for l in range(L):
        a_grads[f"A_mu{l}"] = g_amu[l]
        a_grads[f"A_sig{l}"] = g_asig[l]
    return tg, a_grads


# ---------------------------------------------------------------------------
# Training and generation entry points


def _stack_dataset(dataset, config):
    """(T, S, out) array from trajectories or raw arrays."""
    seqs = []
    for item in dataset:
        arr = np.asarray(getattr(item, "positions", item), dtype=float)
        if arr.ndim != 2 or arr.shape[1] != config.output_dim:
            raise ShapeError(f"sequence shape {arr.shape} incompatible with "
                             f"output_dim {config.output_dim}")
        if arr.shape[0] != config.T:
            raise ShapeError(f"sequence length {arr.shape[0]} != config.T {config.T}")
        seqs.append(arr)
    return np.stack(seqs, axis=1)


def train(dataset, config, rng=None, log_every=0):
    """Full-batch ELBO training of weights and per-sequence adaptations.

    Returns (params, adaptation_vars, history) where history maps
    'accuracy' / 'complexity' / 'elbo' to per-epoch arrays.
    """
    X = _stack_dataset(dataset, config)
    S = X.shape[1]
    if rng is None:
        rng = make_rng(config.seed)
    params = NetworkParams.init_random(config, rng)
    A = AdaptationVars.zeros(config, S)
    opt = Adam(config.lr)
    hist = {"accuracy": np.zeros(config.epochs),
            "complexity": np.zeros(config.epochs),
            "elbo": np.zeros(config.epochs)}
    for epoch in range(config.epochs):
        trace = rollout(params, config, A=A, rng=rng)
        rep = elbo(trace, X, config)
        if not np.isfinite(rep.elbo):
            raise TrainingDiverged(epoch)
        hist["accuracy"][epoch] = rep.accuracy
        hist["complexity"][epoch] = rep.complexity
        hist["elbo"][epoch] = rep.elbo
        mask = (rng.random((config.T, S)) >= config.error_dropout_p).astype(float)
        tg, ag = backward(params, config, trace, X, A, acc_mask=mask)
        merged = dict(params.blocks)
        merged.update(A.blocks())
        grads = dict(tg)
        grads.update(ag)
        merged = opt.step(merged, grads)
        params.blocks = {k: merged[k] for k in params.blocks}
        A.load_blocks(merged)
        if log_every and epoch % log_every == 0:
            print(f"epoch {epoch:6d}  elbo {rep.elbo:12.4f}  "
                  f"acc {rep.accuracy:12.4f}  cx {rep.complexity:10.4f}")
    return params, A, hist


def forward_prior(params, config, rng, T=None, batch=1, sigma_override=None):
    """Generate by sampling every z from the (learned) prior."""
    return rollout(params, config, batch=batch, rng=rng, T=T,
                   posterior_steps=[False] * (T or config.T),
                   sigma_override=sigma_override)


def forward_posterior(params, A, config, rng, eps=None, sigma_override=None):
    """Generate with z sampled from the adaptation-variable posterior."""
    return rollout(params, config, A=A, rng=rng, eps=eps,
                   sigma_override=sigma_override)


def regenerate_target(params, a_seq, config, rng, n_rollouts,
                      sigma_override=None):
    """Roll out with the trained t=1 posterior and the prior afterwards.

    ``a_seq`` is the trained AdaptationVars row of one sequence (n_seq=1,
    see AdaptationVars.select). Only its t=1 entry drives sampling; the
    remaining steps sample from the prior, but the full trained posterior
    is still recorded in the trace so the per-timestep KLD between the
    trained posterior and the rolled-out prior can be inspected. Returns
    one batched trace of n_rollouts independent rollouts.
    """
    if a_seq.n_seq != 1:
        raise ShapeError("a_seq must hold exactly one sequence")
    T = a_seq.T
    A = AdaptationVars([np.repeat(a, n_rollouts, axis=0) for a in a_seq.a_mu],
                       [np.repeat(a, n_rollouts, axis=0) for a in a_seq.a_sig])
    steps = [True] + [False] * (T - 1)
    return rollout(params, config, A=A, rng=rng, posterior_steps=steps, T=T,
                   sigma_override=sigma_override)
