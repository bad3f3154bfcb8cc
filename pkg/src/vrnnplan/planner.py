"""Goal-directed plan generation for all three model families.

The main planner infers zero-initialized adaptation variables that
maximize an estimated lower bound: reconstruction accuracy restricted to
the initial and final (goal) timesteps, minus the usual weighted
prior/posterior KL over the whole horizon. Network weights stay frozen;
several independent candidates are optimized in one batched pass and the
one with the highest final bound wins (index tie-break).

The comparison planners mirror the baselines: the SI planner optimizes
only the t=1 latents against the goal error, the FM planner optimizes the
raw input sequence directly (no latent prior exists, so its reported
bound is just the negated endpoint error).
"""

from dataclasses import dataclass, field

import numpy as np

from .baselines import (SiAdaptation, backward_io, rollout_feedback,
                        rollout_io, sample_z1, _feedback_coeffs)
from .errors import ConfigError, PlanFailed, ShapeError
from .model import (AdaptationVars, ElboReport, backward, elbo, kld_arrays,
                    rollout)
from .numeric import Adam, make_rng

PLAN_RATE = 0.05
PLAN_EPOCHS = 500
N_CANDIDATES = 10


@dataclass
class PlanRequest:
    """Initial state, goal state, and optimization settings for one plan."""

    initial: np.ndarray
    goal: np.ndarray
    T: int = 30
    rate: float = PLAN_RATE
    epochs: int = PLAN_EPOCHS
    n_candidates: int = N_CANDIDATES
    seed: int = 0

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        self.goal = np.asarray(self.goal, dtype=float)
        if self.initial.shape != self.goal.shape:
            raise ShapeError("initial and goal must have the same dimension")
        if np.any(self.initial < 0) or np.any(self.initial > 1) \
                or np.any(self.goal < 0) or np.any(self.goal > 1):
            raise ConfigError("states must lie in [0, 1] per dimension")
        if self.n_candidates < 1:
            raise ConfigError("n_candidates must be >= 1")


@dataclass
class PlanResult:
    """Best plan of a candidate batch plus its diagnostics."""

    trajectory: np.ndarray
    lower_bound: float
    kld_pq: float
    candidate_scores: np.ndarray
    epochs_run: int
    model_kind: str
    adaptation: object = None

    def goal_deviation(self, goal):
        return float(np.linalg.norm(self.trajectory[-1] - np.asarray(goal)))


def _endpoint_target_mask(request, batch):
    T = request.T
    dim = request.initial.shape[0]
    target = np.zeros((T, batch, dim))
    target[0] = request.initial
    target[-1] = request.goal
    mask = np.zeros((T, batch))
    mask[0] = 1.0
    mask[-1] = 1.0
    return target, mask


def _bound_per_candidate(trace, request, config):
    """Weighted bound, unweighted KLD, per batch element."""
    acc = -0.5 * (np.sum((trace.x[0] - request.initial) ** 2, axis=1)
                  + np.sum((trace.x[-1] - request.goal) ** 2, axis=1))
    unweighted, weighted, _ = kld_arrays(trace, config)
    return acc - weighted.sum(axis=0), unweighted.sum(axis=0)


def estimated_lower_bound(trace, request, config):
    """Planning objective for a trace: endpoint accuracy minus complexity."""
    if trace.T != request.T:
        raise ShapeError(f"trace length {trace.T} != request horizon {request.T}")
    acc = -0.5 * float(np.sum((trace.x[0] - request.initial) ** 2)
                       + np.sum((trace.x[-1] - request.goal) ** 2))
    unweighted, weighted, _ = kld_arrays(trace, config)
    complexity = float(np.sum(weighted))
    return ElboReport(accuracy=acc, complexity=complexity,
                      elbo=acc - complexity, kld_pq=float(np.sum(unweighted)))


def _select(scores):
    alive = np.isfinite(scores)
    if not np.any(alive):
        raise PlanFailed("all plan candidates produced non-finite objectives")
    masked = np.where(alive, scores, -np.inf)
    return int(np.argmax(masked))


def plan_glean(params, config, request, rng=None):
    """Latent-inference planning on the trained variational RNN.

    Only the adaptation variables move; the weights are left untouched.
    """
    if request.T != config.T:
        raise ShapeError(f"request horizon {request.T} != trained T {config.T}")
    if rng is None:
        rng = make_rng(request.seed)
    C = request.n_candidates
    A = AdaptationVars.zeros(config, C)
    target, mask = _endpoint_target_mask(request, C)
    opt = Adam(request.rate)
    for _ in range(request.epochs):
        trace = rollout(params, config, A=A, rng=rng)
        _, ag = backward(params, config, trace, target, A, acc_mask=mask,
                         compute_theta=False)
        for g in ag.values():
            np.nan_to_num(g, copy=False, nan=0.0, posinf=0.0, neginf=0.0)
        blocks = opt.step(A.blocks(), ag)
        A.load_blocks(blocks)
    trace = rollout(params, config, A=A, rng=rng)
    scores, klds = _bound_per_candidate(trace, request, config)
    best = _select(scores)
    return PlanResult(trajectory=trace.trajectory(best),
                      lower_bound=float(scores[best]),
                      kld_pq=float(klds[best]),
                      candidate_scores=scores,
                      epochs_run=request.epochs,
                      model_kind="PVRNN",
                      adaptation=A.select(best))


def plan_si(params, config, request, rng=None):
    """Initial-latent planning on the SI baseline (closed-loop rollout)."""
    if request.T != config.T:
        raise ShapeError(f"request horizon {request.T} != trained T {config.T}")
    if rng is None:
        rng = make_rng(request.seed)
    C = request.n_candidates
    adapt = SiAdaptation.zeros(config, C)
    init = np.tile(request.initial, (C, 1))
    fb = np.ones(config.T - 1)
    fb[0] = 0.0
    opt = Adam(request.rate)
    from .baselines import _si_adapt_grads
    for _ in range(request.epochs):
        z1, eps1 = sample_z1(adapt, rng)
        trace = rollout_feedback(params, None, 1.0, z1=z1, eps1=eps1, init=init)
        err = np.zeros_like(trace.x)
        err[-1] = trace.x[-1] - request.goal
        _, _, dz1 = backward_io(params, trace, err, fb, compute_theta=False,
                                want_z1_grad=True)
        ag = _si_adapt_grads(adapt, dz1, eps1, config.w_I)
        for g in ag.values():
            np.nan_to_num(g, copy=False, nan=0.0, posinf=0.0, neginf=0.0)
        blocks = opt.step(adapt.blocks(), ag)
        adapt.load_blocks(blocks)
    z1, eps1 = sample_z1(adapt, rng)
    trace = rollout_feedback(params, None, 1.0, z1=z1, eps1=eps1, init=init)
    mu, sig = adapt.posterior()
    kld_c = np.zeros(C)
    for m, s in zip(mu, sig):
        kld_c += np.sum(-np.log(s) + (m ** 2 + s ** 2) / 2.0 - 0.5, axis=1)
    acc = -0.5 * np.sum((trace.x[-1] - request.goal) ** 2, axis=1)
    scores = acc - config.w_I * kld_c
    best = _select(scores)
    return PlanResult(trajectory=trace.trajectory(request.initial, best),
                      lower_bound=float(scores[best]),
                      kld_pq=float(kld_c[best]),
                      candidate_scores=scores,
                      epochs_run=request.epochs,
                      model_kind="SI",
                      adaptation=adapt.select(best))


def plan_fm(params, config, request, rng=None, random_init=False):
    """Input-sequence planning on the forward model.

    The decision variables are the raw inputs u_{1:T-1}; the objective is
    the endpoint error alone (the model carries no latent prior). The
    reported bound is the negated endpoint error.
    """
    if request.T != config.T:
        raise ShapeError(f"request horizon {request.T} != trained T {config.T}")
    if rng is None:
        rng = make_rng(request.seed)
    C = request.n_candidates
    K = config.T - 1
    if random_init:
        u = rng.uniform(0.0, 1.0, size=(K, C, config.output_dim))
    else:
        u = np.tile(request.initial, (K, C, 1))
    opt = Adam(request.rate)
    fb = np.zeros(K)
    for _ in range(request.epochs):
        trace = rollout_io(params, u)
        err = np.zeros_like(trace.x)
        err[-1] = trace.x[-1] - request.goal
        _, du, _ = backward_io(params, trace, err, fb, compute_theta=False,
                               want_u_grad=True)
        du[0] += u[0] - request.initial
        np.nan_to_num(du, copy=False, nan=0.0, posinf=0.0, neginf=0.0)
        blocks = opt.step({"u": u}, {"u": du})
        u = blocks["u"]
    trace = rollout_io(params, u)
    scores = -0.5 * (np.sum((u[0] - request.initial) ** 2, axis=1)
                     + np.sum((trace.x[-1] - request.goal) ** 2, axis=1))
    best = _select(scores)
    traj = np.vstack([u[0, best][None, :], trace.x[:, best, :]])
    return PlanResult(trajectory=traj,
                      lower_bound=float(scores[best]),
                      kld_pq=0.0,
                      candidate_scores=scores,
                      epochs_run=request.epochs,
                      model_kind="FM",
                      adaptation=u[:, best].copy())


# ---------------------------------------------------------------------------
# One-step look-ahead prediction


@dataclass
class LookaheadResult:
    predictions: np.ndarray   # (T-1, dims), predictions of positions 1..T-1
    rmse: float


def _rmse(pred, truth):
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def lookahead_fm(params, truth):
    """Teacher-forced one-step predictions from the forward model."""
    truth = np.asarray(truth, dtype=float)
    trace = rollout_io(params, truth[:-1, None, :])
    preds = trace.x[:, 0, :]
    return LookaheadResult(predictions=preds, rmse=_rmse(preds, truth[1:]))


def lookahead_si(params, config, truth, rng=None, window=None,
                 epochs=100, rate=PLAN_RATE):
    """Infer the t=1 latents once from a prefix, then predict teacher-forced."""
    truth = np.asarray(truth, dtype=float)
    T = truth.shape[0]
    W = T if window is None else max(2, min(window, T))
    if rng is None:
        rng = make_rng(0)
    adapt = SiAdaptation.zeros(config, 1)
    fb = np.zeros(W - 1)
    opt = Adam(rate)
    from .baselines import _si_adapt_grads
    prefix = truth[:W, None, :]
    for _ in range(epochs):
        z1, eps1 = sample_z1(adapt, rng)
        trace = rollout_io(params, prefix[:-1], z1=z1, eps1=eps1)
        err = trace.x - prefix[1:]
        _, _, dz1 = backward_io(params, trace, err, fb, compute_theta=False,
                                want_z1_grad=True)
        ag = _si_adapt_grads(adapt, dz1, eps1, config.w_I)
        blocks = opt.step(adapt.blocks(), ag)
        adapt.load_blocks(blocks)
    mu, _ = adapt.posterior()
    trace = rollout_io(params, truth[:-1, None, :], z1=mu)
    preds = trace.x[:, 0, :]
    return LookaheadResult(predictions=preds, rmse=_rmse(preds, truth[1:]))


def lookahead_pvrnn(params, config, truth, rng=None, window=None,
                    epochs=30, rate=PLAN_RATE):
    """Error regression over the growing prefix, then a one-step prior rollout.

    At each step t the adaptation variables of the prefix are re-optimized
    (warm-started from the previous step) against the observed prefix;
    the prediction for t+1 uses the posterior means over the prefix and
    the prior mean at t+1.
    """
    truth = np.asarray(truth, dtype=float)
    T = truth.shape[0]
    if rng is None:
        rng = make_rng(0)
    preds = np.zeros((T - 1, truth.shape[1]))
    a_mu = [np.zeros((1, 0, lc.z_size)) for lc in config.layers]
    a_sig = [np.zeros((1, 0, lc.z_size)) for lc in config.layers]
    for P in range(1, T):
        a_mu = [np.concatenate([a, np.zeros((1, 1, a.shape[2]))], axis=1)
                for a in a_mu]
        a_sig = [np.concatenate([a, np.zeros((1, 1, a.shape[2]))], axis=1)
                 for a in a_sig]
        A = AdaptationVars(a_mu, a_sig)
        target = truth[:P, None, :]
        mask = np.ones((P, 1))
        if window is not None and window < P:
            mask[:P - window] = 0.0
        opt = Adam(rate)
        for _ in range(epochs):
            trace = rollout(params, config, A=A, rng=rng, T=P)
            _, ag = backward(params, config, trace, target, A, acc_mask=mask,
                             compute_theta=False)
            blocks = opt.step(A.blocks(), ag)
            A.load_blocks(blocks)
        a_mu, a_sig = A.a_mu, A.a_sig
        # Deterministic prediction: zero noise everywhere, prior mean at P+1.
        A_ext = AdaptationVars(
            [np.concatenate([a, np.zeros((1, 1, a.shape[2]))], axis=1) for a in a_mu],
            [np.concatenate([a, np.zeros((1, 1, a.shape[2]))], axis=1) for a in a_sig])
        eps = [np.zeros((P + 1, 1, lc.z_size)) for lc in config.layers]
        steps = [True] * P + [False]
        trace = rollout(params, config, A=A_ext, posterior_steps=steps,
                        eps=eps, T=P + 1)
        preds[P - 1] = trace.x[P, 0]
    return LookaheadResult(predictions=preds, rmse=_rmse(preds, truth[1:]))
