"""Staged experiment pipeline: resumable, deterministic, file-backed.

Each stage writes into ``<out_dir>/<experiment name>/<stage>/`` and drops
a ``DONE`` marker when it finishes. A completed stage is never rerun or
overwritten; a crashed stage leaves its partial results in place (no
marker), so a rerun redoes only the unfinished work. Wall-clock timings
go to a ``timing.json`` sidecar per stage so that the result files
themselves are byte-identical across reruns with the same spec and seeds.

Stage order: gen-data, train, prior-gen, target-regen, plan, lookahead,
compare, report. Later stages read earlier stages' files and fail fast
with a ConfigError when a prerequisite is missing.

Within a stage, independent repetitions run on a thread pool; every task
gets its own generator derived from the experiment seed and a fixed task
index, and results are collected in index order, so the thread count
never changes the output.
"""

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import baselines, model, planner
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .dataset import (generate_center_goal_set, generate_dataset,
                      load_trajectories, save_trajectories)
from .errors import ConfigError
from .metrics import (endpoint_record, evaluate_plans, kld_timeseries,
                      kld_timeseries_csv)
from .numeric import derive_rng
from .planner import (PlanRequest, lookahead_fm, lookahead_pvrnn,
                      lookahead_si, plan_fm, plan_glean, plan_si)

STAGES = ("gen-data", "train", "prior-gen", "target-regen", "plan",
          "lookahead", "compare", "report")

N_ROLLOUTS = 60          # prior-generation / regeneration sample count

# Fixed offsets keeping derived seed indexes disjoint across stages.
_SEED_BLOCK = {"train": 1000, "prior-gen": 2000, "target-regen": 3000,
               "plan": 10000, "lookahead": 40000, "compare": 50000}


def _run_dir(out_dir, spec):
    return os.path.join(out_dir, spec[("experiment", "name")])


def _stage_dir(out_dir, spec, stage):
    return os.path.join(_run_dir(out_dir, spec), stage)


def stage_done(out_dir, spec, stage):
    return os.path.exists(os.path.join(_stage_dir(out_dir, spec, stage), "DONE"))


def _require(out_dir, spec, stage):
    if not stage_done(out_dir, spec, stage):
        raise ConfigError(f"stage '{stage}' has not completed; run it first")


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def _write_record(path, record):
    with open(path, "w") as fh:
        fh.write(record.to_json())


def _pmap(fn, n_items, threads):
    """Run fn(index) for each index; results returned in index order."""
    if threads <= 1:
        return [fn(i) for i in range(n_items)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_items)))


def _snapshot(spec):
    return {section: dict(kv) for section, kv in spec.values.items()}


# ---------------------------------------------------------------------------
# Stages


def stage_gen_data(spec, out_dir, threads=1):
    d = _stage_dir(out_dir, spec, "gen-data")
    os.makedirs(d, exist_ok=True)
    data_seed = int(spec[("data", "seed")])
    noise = float(spec[("data", "noise_scale")])
    T = int(spec[("data", "t")])
    geom = spec.geometry()
    train = generate_dataset(data_seed, int(spec[("data", "n_train")]),
                             geometry=geom, noise_scale=noise, T=T)
    test = generate_dataset(data_seed + 1, int(spec[("data", "n_test")]),
                            geometry=geom, noise_scale=noise, T=T)
    center = generate_center_goal_set(data_seed, int(spec[("data", "n_center")]),
                                      geometry=geom, noise_scale=noise, T=T)
    save_trajectories(os.path.join(d, "train.csv"), train)
    save_trajectories(os.path.join(d, "test.csv"), test)
    save_trajectories(os.path.join(d, "center.csv"), center)
    return {"n_train": len(train), "n_test": len(test), "n_center": len(center)}


def _load_split(out_dir, spec, name):
    _require(out_dir, spec, "gen-data")
    return load_trajectories(os.path.join(_stage_dir(out_dir, spec, "gen-data"),
                                          f"{name}.csv"))


def _ckpt_path(out_dir, spec, name):
    return os.path.join(_stage_dir(out_dir, spec, "train"), f"{name}.json")


def _load_ckpt(out_dir, spec, name):
    _require(out_dir, spec, "train")
    return load_checkpoint(_ckpt_path(out_dir, spec, name))


def stage_train(spec, out_dir, threads=1):
    d = _stage_dir(out_dir, spec, "train")
    os.makedirs(d, exist_ok=True)
    train_set = _load_split(out_dir, spec, "train")
    seed = spec.seed
    names = list(spec.meta_prior_names)

    def train_one(i):
        name = names[i]
        cfg = spec.model_config(name)
        rng = derive_rng(seed, _SEED_BLOCK["train"] + i)
        params, A, history = model.train(train_set, cfg, rng=rng)
        return name, cfg, params, A, history

    results = _pmap(train_one, len(names), threads)
    target = np.stack([t.positions for t in train_set], axis=1)
    summary = {}
    for name, cfg, params, A, history in results:
        save_checkpoint(_ckpt_path(out_dir, spec, f"pvrnn_{name}"),
                        Checkpoint(kind="PVRNN", config=cfg, params=params,
                                   adaptation=A, seed=seed))
        trace = model.forward_posterior(params, A, cfg,
                                        derive_rng(seed, _SEED_BLOCK["train"]))
        report = model.elbo(trace, target, cfg)
        summary[f"pvrnn_{name}"] = {
            "final_elbo": float(history["elbo"][-1]),
            "final_complexity": float(history["complexity"][-1]),
            "kld_pq": report.kld_pq,
            "kld_pq_initial": report.kld_pq_initial,
            "kld_pq_meta": report.kld_pq_meta,
        }

    bcfg = spec.baseline_config()
    blend = float(spec[("baselines", "blend")])
    clip = float(spec[("baselines", "clip_norm")])

    def train_baseline(i):
        rng = derive_rng(seed, _SEED_BLOCK["train"] + 100 + i)
        if i == 0:
            return ("fm",) + baselines.train_fm(train_set, bcfg, rng=rng,
                                                blend=blend)
        return ("si",) + baselines.train_si(train_set, bcfg, rng=rng,
                                            blend=blend, clip_norm=clip)

    for row in _pmap(train_baseline, 2, threads):
        if row[0] == "fm":
            _, params, history = row
            save_checkpoint(_ckpt_path(out_dir, spec, "fm"),
                            Checkpoint(kind="FM", config=bcfg, params=params,
                                       seed=seed))
        else:
            _, params, adapt, history = row
            save_checkpoint(_ckpt_path(out_dir, spec, "si"),
                            Checkpoint(kind="SI", config=bcfg, params=params,
                                       adaptation=adapt, seed=seed))
        summary[row[0]] = {"final_loss": float(history[-1])}
    _write_json(os.path.join(d, "summary.json"), summary)
    return summary


def stage_prior_gen(spec, out_dir, threads=1):
    d = _stage_dir(out_dir, spec, "prior-gen")
    os.makedirs(d, exist_ok=True)
    geom = spec.geometry()
    out = {}
    for i, name in enumerate(spec.meta_prior_names):
        ckpt = _load_ckpt(out_dir, spec, f"pvrnn_{name}")
        rng = derive_rng(spec.seed, _SEED_BLOCK["prior-gen"] + i)
        trace = model.forward_prior(ckpt.params, ckpt.config, rng,
                                    batch=N_ROLLOUTS)
        unweighted, _, _ = model.kld_arrays(trace, ckpt.config)
        record = endpoint_record(trace.x[-1], unweighted.mean(axis=0), geom,
                                 model_kind="PVRNN",
                                 config_snapshot=_snapshot(spec),
                                 seeds={"experiment": spec.seed, "task": i})
        _write_record(os.path.join(d, f"{name}.json"), record)
        kld_timeseries_csv(os.path.join(d, f"{name}_kld.csv"),
                           kld_timeseries(trace, ckpt.config))
        out[name] = record.goal_dist
    return out


def stage_target_regen(spec, out_dir, threads=1):
    d = _stage_dir(out_dir, spec, "target-regen")
    os.makedirs(d, exist_ok=True)
    geom = spec.geometry()
    train_set = _load_split(out_dir, spec, "train")
    left_idx = next(i for i, t in enumerate(train_set) if t.label == "left")
    out = {}
    for i, name in enumerate(spec.meta_prior_names):
        ckpt = _load_ckpt(out_dir, spec, f"pvrnn_{name}")
        rng = derive_rng(spec.seed, _SEED_BLOCK["target-regen"] + i)
        a_seq = ckpt.adaptation.select(left_idx)
        trace = model.regenerate_target(ckpt.params, a_seq, ckpt.config, rng,
                                        N_ROLLOUTS)
        unweighted, _, _ = model.kld_arrays(trace, ckpt.config)
        record = endpoint_record(trace.x[-1], unweighted.mean(axis=0), geom,
                                 model_kind="PVRNN",
                                 config_snapshot=_snapshot(spec),
                                 seeds={"experiment": spec.seed, "task": i,
                                        "target_index": left_idx})
        _write_record(os.path.join(d, f"{name}.json"), record)
        kld_timeseries_csv(os.path.join(d, f"{name}_kld.csv"),
                           kld_timeseries(trace, ckpt.config))
        # Per-timestep posterior-vs-prior KLD profile over the training set:
        # where each network stores its branch decision. The strong network
        # concentrates it in a sharp commitment right after the first step.
        ptrace = model.forward_posterior(ckpt.params, ckpt.adaptation,
                                         ckpt.config, rng)
        kld_timeseries_csv(os.path.join(d, f"{name}_posterior_kld.csv"),
                           kld_timeseries(ptrace, ckpt.config))
        out[name] = record.goal_dist
    return out


def _plan_batch(spec, out_dir, threads, truths, ckpt, plan_fn, seed_base):
    """Plan to every truth's endpoint, `repetitions` times each."""
    reps = int(spec[("plan", "repetitions")])
    req_kw = dict(T=ckpt.config.T,
                  rate=float(spec[("plan", "rate")]),
                  epochs=int(spec[("plan", "epochs")]),
                  n_candidates=int(spec[("plan", "n_candidates")]))
    tasks = [(g, r) for g in range(len(truths)) for r in range(reps)]

    def run_one(i):
        g, _ = tasks[i]
        truth = truths[g]
        request = PlanRequest(initial=truth.positions[0],
                              goal=truth.positions[-1], **req_kw)
        rng = derive_rng(spec.seed, seed_base + i)
        return plan_fn(ckpt.params, ckpt.config, request, rng=rng)

    plans = _pmap(run_one, len(tasks), threads)
    paired_truths = [truths[g] for g, _ in tasks]
    return plans, paired_truths


def stage_plan(spec, out_dir, threads=1):
    d = _stage_dir(out_dir, spec, "plan")
    os.makedirs(d, exist_ok=True)
    geom = spec.geometry()
    test = _load_split(out_dir, spec, "test")
    center = _load_split(out_dir, spec, "center")
    ckpts = {name: _load_ckpt(out_dir, spec, f"pvrnn_{name}")
             for name in spec.meta_prior_names}
    out = {}
    for i, (name, ckpt) in enumerate(ckpts.items()):
        plans, truths = _plan_batch(spec, out_dir, threads, test, ckpt,
                                    plan_glean,
                                    _SEED_BLOCK["plan"] + 1000 * i)
        record = evaluate_plans(plans, truths, geom, model_kind="PVRNN",
                                config_snapshot=_snapshot(spec),
                                seeds={"experiment": spec.seed, "block": i})
        _write_record(os.path.join(d, f"{name}.json"), record)
        out[name] = record.aggregates
    # Unlearned (center-region) goals, planned with the mid-setting model.
    mid = spec.meta_prior_names[len(spec.meta_prior_names) // 2]
    plans, truths = _plan_batch(spec, out_dir, threads, center, ckpts[mid],
                                plan_glean, _SEED_BLOCK["plan"] + 9000)
    record = evaluate_plans(plans, truths, geom, model_kind="PVRNN",
                            config_snapshot=_snapshot(spec),
                            seeds={"experiment": spec.seed, "block": "center"})
    _write_record(os.path.join(d, "center.json"), record)
    out["center"] = record.aggregates
    return out


def stage_lookahead(spec, out_dir, threads=1):
    d = _stage_dir(out_dir, spec, "lookahead")
    os.makedirs(d, exist_ok=True)
    test = _load_split(out_dir, spec, "test")
    n_seq = min(int(spec[("lookahead", "n_sequences")]), len(test))
    mid = spec.meta_prior_names[len(spec.meta_prior_names) // 2]
    pv = _load_ckpt(out_dir, spec, f"pvrnn_{mid}")
    fm = _load_ckpt(out_dir, spec, "fm")
    si = _load_ckpt(out_dir, spec, "si")
    epochs = int(spec[("lookahead", "epochs")])
    si_epochs = int(spec[("lookahead", "si_epochs")])
    rate = float(spec[("lookahead", "rate")])

    def run_one(i):
        truth = test[i].positions
        base = _SEED_BLOCK["lookahead"] + 10 * i
        r_pv = lookahead_pvrnn(pv.params, pv.config, truth,
                               rng=derive_rng(spec.seed, base),
                               epochs=epochs, rate=rate)
        r_fm = lookahead_fm(fm.params, truth)
        r_si = lookahead_si(si.params, si.config, truth,
                            rng=derive_rng(spec.seed, base + 1),
                            epochs=si_epochs, rate=rate)
        return {"GLean": r_pv.rmse, "FM": r_fm.rmse, "SI": r_si.rmse}

    rows = _pmap(run_one, n_seq, threads)
    doc = {
        "per_sequence": rows,
        "mean_rmse": {k: float(np.mean([r[k] for r in rows]))
                      for k in ("GLean", "FM", "SI")},
        "seeds": {"experiment": spec.seed},
    }
    _write_json(os.path.join(d, "lookahead.json"), doc)
    return doc["mean_rmse"]


def stage_compare(spec, out_dir, threads=1):
    d = _stage_dir(out_dir, spec, "compare")
    os.makedirs(d, exist_ok=True)
    _require(out_dir, spec, "plan")
    geom = spec.geometry()
    test = _load_split(out_dir, spec, "test")
    fm = _load_ckpt(out_dir, spec, "fm")
    si = _load_ckpt(out_dir, spec, "si")
    out = {}
    for i, (name, ckpt, fn) in enumerate((("fm", fm, plan_fm),
                                          ("si", si, plan_si))):
        plans, truths = _plan_batch(spec, out_dir, threads, test, ckpt, fn,
                                    _SEED_BLOCK["compare"] + 1000 * i)
        record = evaluate_plans(plans, truths, geom,
                                model_kind=ckpt.kind,
                                config_snapshot=_snapshot(spec),
                                seeds={"experiment": spec.seed, "block": i})
        _write_record(os.path.join(d, f"{name}.json"), record)
        out[name] = record.aggregates
    mid = spec.meta_prior_names[len(spec.meta_prior_names) // 2]
    with open(os.path.join(_stage_dir(out_dir, spec, "plan"),
                           f"{mid}.json")) as fh:
        glean = json.load(fh)
    table = {"plan_rmse": {"GLean": glean["aggregates"]["rmse"]["mean"],
                           "FM": out["fm"]["rmse"]["mean"],
                           "SI": out["si"]["rmse"]["mean"]}}
    _write_json(os.path.join(d, "comparison.json"), table)
    out["comparison"] = table
    return out


def stage_report(spec, out_dir, threads=1):
    d = _stage_dir(out_dir, spec, "report")
    os.makedirs(d, exist_ok=True)
    run = _run_dir(out_dir, spec)
    doc = {"experiment": spec[("experiment", "name")], "stages": {}}
    for stage in STAGES[:-1]:
        sdir = os.path.join(run, stage)
        entry = {"done": stage_done(out_dir, spec, stage), "files": {}}
        if os.path.isdir(sdir):
            for fname in sorted(os.listdir(sdir)):
                if fname.endswith(".json") and fname != "timing.json":
                    with open(os.path.join(sdir, fname)) as fh:
                        payload = json.load(fh)
                    trimmed = {k: payload[k] for k in
                               ("aggregates", "goal_dist", "mean_rmse",
                                "plan_rmse") if k in payload}
                    entry["files"][fname] = trimmed or payload
        doc["stages"][stage] = entry
    _write_json(os.path.join(d, "report.json"), doc)
    return doc


_STAGE_FN = {
    "gen-data": stage_gen_data,
    "train": stage_train,
    "prior-gen": stage_prior_gen,
    "target-regen": stage_target_regen,
    "plan": stage_plan,
    "lookahead": stage_lookahead,
    "compare": stage_compare,
    "report": stage_report,
}


def run_stage(spec, out_dir, stage, threads=1, log=print):
    """Run one stage unless it already completed; returns its summary."""
    if stage not in _STAGE_FN:
        raise ConfigError(f"unknown stage '{stage}'; choose from {STAGES}")
    sdir = _stage_dir(out_dir, spec, stage)
    if stage_done(out_dir, spec, stage):
        if log:
            log(f"[{stage}] already complete, skipping")
        return None
    t0 = time.time()
    result = _STAGE_FN[stage](spec, out_dir, threads=threads)
    elapsed = time.time() - t0
    _write_json(os.path.join(sdir, "timing.json"),
                {"stage": stage, "seconds": elapsed})
    with open(os.path.join(sdir, "DONE"), "w") as fh:
        fh.write("done\n")
    if log:
        log(f"[{stage}] finished in {elapsed:.1f}s")
    return result


def run_experiment(spec, out_dir, stages=None, threads=1, log=print):
    """Run the requested stages (default: all) in pipeline order."""
    chosen = STAGES if stages is None else tuple(stages)
    for stage in chosen:
        if stage not in STAGES:
            raise ConfigError(f"unknown stage '{stage}'; choose from {STAGES}")
    results = {}
    for stage in STAGES:
        if stage in chosen:
            results[stage] = run_stage(spec, out_dir, stage, threads=threads,
                                       log=log)
    return results
