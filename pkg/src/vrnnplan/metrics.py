"""Evaluation metrics and machine-readable run records.

All comparisons happen on [0,1]-scaled coordinates. RMSE is the root of
the mean squared error over timesteps and dimensions; goal deviation (GD)
is the Euclidean distance between a trajectory's final state and the
requested goal. Endpoints are classified into goal regions by closed-disc
membership (a point exactly on the boundary counts as inside); a third
"neither" bucket is reported alongside the binary nearest-goal split.
"""

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ShapeError
from .model import kld_arrays


@dataclass
class Metrics:
    """Per-plan quality measures against one ground-truth trajectory."""

    rmse: float
    goal_deviation: float
    kld_pq: float
    goal_label: str        # closed-region membership: left / right / neither
    nearest_goal: str      # binary split by nearest goal center
    success: bool          # endpoint inside the truth's goal region


def classify_endpoint(point, geometry):
    """(region label, nearest-center label) for one endpoint."""
    point = np.asarray(point, dtype=float)
    d_left = np.linalg.norm(point - np.asarray(geometry.left_goal))
    d_right = np.linalg.norm(point - np.asarray(geometry.right_goal))
    nearest = "left" if d_left <= d_right else "right"
    if d_left <= geometry.goal_radius and d_right <= geometry.goal_radius:
        label = nearest
    elif d_left <= geometry.goal_radius:
        label = "left"
    elif d_right <= geometry.goal_radius:
        label = "right"
    else:
        label = "neither"
    return label, nearest


def goal_distribution(endpoints, geometry):
    """Percentages dict over left / right / neither plus the binary split."""
    labels = [classify_endpoint(p, geometry) for p in endpoints]
    n = len(labels)
    region = {k: 100.0 * sum(1 for l, _ in labels if l == k) / n
              for k in ("left", "right", "neither")}
    nearest = {k: 100.0 * sum(1 for _, m in labels if m == k) / n
               for k in ("left", "right")}
    return {"region": region, "nearest": nearest}


@dataclass
class RunRecord:
    """One stage's results: per-item metrics plus recomputable aggregates.

    Wall-clock time is kept out of the serialized record (see
    ``to_json``) so identical reruns produce byte-identical files; the
    pipeline stores timings in a sidecar instead.
    """

    model_kind: str
    config_snapshot: dict
    seeds: dict
    per_plan: list
    aggregates: dict
    goal_dist: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def to_json(self, include_timing=False):
        doc = {
            "model_kind": self.model_kind,
            "config_snapshot": self.config_snapshot,
            "seeds": self.seeds,
            "per_plan": [asdict(m) for m in self.per_plan],
            "aggregates": self.aggregates,
            "goal_dist": self.goal_dist,
        }
        if include_timing:
            doc["wall_clock"] = self.wall_clock
        return json.dumps(doc, indent=2, sort_keys=True)


def _aggregate(values):
    arr = np.asarray(values, dtype=float)
    return {"mean": float(np.mean(arr)), "std": float(np.std(arr)),
            "n": int(arr.size)}


def evaluate_plans(plans, truths, geometry, model_kind="PVRNN",
                   config_snapshot=None, seeds=None):
    """Pair up plans with ground-truth trajectories and summarize."""
    if len(plans) != len(truths):
        raise ShapeError(f"{len(plans)} plans vs {len(truths)} truths")
    per = []
    for plan, truth in zip(plans, truths):
        traj = np.asarray(getattr(plan, "trajectory", plan), dtype=float)
        ref = np.asarray(getattr(truth, "positions", truth), dtype=float)
        if traj.shape != ref.shape:
            raise ShapeError(f"plan shape {traj.shape} != truth shape {ref.shape}")
        rmse = float(np.sqrt(np.mean((traj - ref) ** 2)))
        gd = float(np.linalg.norm(traj[-1] - ref[-1]))
        kld = float(getattr(plan, "kld_pq", 0.0))
        label, nearest = classify_endpoint(traj[-1], geometry)
        truth_label = getattr(truth, "label", None)
        if truth_label in ("left", "right"):
            goal_center = np.asarray(geometry.goal_center(truth_label))
            success = bool(np.linalg.norm(traj[-1] - goal_center)
                           <= geometry.goal_radius)
        else:
            success = bool(gd <= geometry.goal_radius)
        per.append(Metrics(rmse=rmse, goal_deviation=gd, kld_pq=kld,
                           goal_label=label, nearest_goal=nearest,
                           success=success))
    aggregates = {
        "rmse": _aggregate([m.rmse for m in per]),
        "goal_deviation": _aggregate([m.goal_deviation for m in per]),
        "kld_pq": _aggregate([m.kld_pq for m in per]),
        "success_rate": 100.0 * sum(m.success for m in per) / len(per),
    }
    endpoints = [np.asarray(getattr(p, "trajectory", p))[-1] for p in plans]
    return RunRecord(model_kind=model_kind,
                     config_snapshot=config_snapshot or {},
                     seeds=seeds or {},
                     per_plan=per,
                     aggregates=aggregates,
                     goal_dist=goal_distribution(endpoints, geometry))


def endpoint_record(endpoints, klds, geometry, model_kind,
                    config_snapshot=None, seeds=None):
    """Record for unconditioned rollouts (no ground-truth pairing).

    RMSE has no reference here and is reported as 0; goal deviation is the
    distance from the endpoint to the nearest goal center, and success
    means the endpoint landed inside either goal region.
    """
    endpoints = np.asarray(endpoints, dtype=float)
    klds = np.asarray(klds, dtype=float)
    if endpoints.shape[0] != klds.shape[0]:
        raise ShapeError(f"{endpoints.shape[0]} endpoints vs "
                         f"{klds.shape[0]} KLD values")
    per = []
    for point, kld in zip(endpoints, klds):
        label, nearest = classify_endpoint(point, geometry)
        gd = float(np.linalg.norm(point - np.asarray(geometry.goal_center(nearest))))
        per.append(Metrics(rmse=0.0, goal_deviation=gd, kld_pq=float(kld),
                           goal_label=label, nearest_goal=nearest,
                           success=label != "neither"))
    aggregates = {
        "rmse": _aggregate([m.rmse for m in per]),
        "goal_deviation": _aggregate([m.goal_deviation for m in per]),
        "kld_pq": _aggregate([m.kld_pq for m in per]),
        "success_rate": 100.0 * sum(m.success for m in per) / len(per),
    }
    return RunRecord(model_kind=model_kind,
                     config_snapshot=config_snapshot or {},
                     seeds=seeds or {},
                     per_plan=per,
                     aggregates=aggregates,
                     goal_dist=goal_distribution(endpoints, geometry))


def verify_aggregates(record):
    """Recompute aggregates from per-item entries; True when they match."""
    fresh = {
        "rmse": _aggregate([m.rmse for m in record.per_plan]),
        "goal_deviation": _aggregate([m.goal_deviation for m in record.per_plan]),
        "kld_pq": _aggregate([m.kld_pq for m in record.per_plan]),
        "success_rate": 100.0 * sum(m.success for m in record.per_plan)
                        / len(record.per_plan),
    }
    return fresh == record.aggregates


def kld_timeseries(traces, config):
    """Per-timestep, per-layer mean and std of the unweighted KLD.

    Accepts one or more traces (all the same length); the statistics pool
    every rollout in every trace. Returns {"mean": (T, L), "std": (T, L)}.
    """
    if not isinstance(traces, (list, tuple)):
        traces = [traces]
    if not traces:
        raise ShapeError("at least one trace required")
    per_layer_all = None
    for trace in traces:
        _, _, per_layer = kld_arrays(trace, config)
        stacked = [kl for kl in per_layer]   # each (T, B)
        if per_layer_all is None:
            per_layer_all = [[kl] for kl in stacked]
        else:
            for l, kl in enumerate(stacked):
                per_layer_all[l].append(kl)
    means, stds = [], []
    for chunks in per_layer_all:
        allb = np.concatenate(chunks, axis=1)   # (T, total rollouts)
        means.append(allb.mean(axis=1))
        stds.append(allb.std(axis=1))
    return {"mean": np.stack(means, axis=1), "std": np.stack(stds, axis=1)}


def kld_timeseries_csv(path, series):
    """Plot-ready CSV: t, then mean/std column pair per layer."""
    mean, std = series["mean"], series["std"]
    T, L = mean.shape
    with open(path, "w") as fh:
        cols = ",".join(f"layer{l + 1}_mean,layer{l + 1}_std" for l in range(L))
        fh.write(f"t,{cols}\n")
        for t in range(T):
            vals = ",".join(f"{float(mean[t, l])!r},{float(std[t, l])!r}"
                            for l in range(L))
            fh.write(f"{t + 1},{vals}\n")
