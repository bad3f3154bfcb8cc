"""Tests for metrics, run records, the spec loader, and the pipeline."""

import json
import os

import numpy as np
import pytest

from vrnnplan.baselines import FmParams
from vrnnplan.checkpoint import (Checkpoint, load_checkpoint, save_checkpoint)
from vrnnplan.dataset import TaskGeometry, Trajectory, generate_dataset
from vrnnplan.errors import ConfigError, ShapeError
from vrnnplan.metrics import (RunRecord, classify_endpoint, evaluate_plans,
                              goal_distribution, kld_timeseries,
                              kld_timeseries_csv, verify_aggregates)
from vrnnplan.model import (AdaptationVars, LayerConfig, ModelConfig,
                            NetworkParams, forward_posterior, rollout)
from vrnnplan.numeric import make_rng
from vrnnplan.pipeline import STAGES, run_experiment, run_stage
from vrnnplan.runspec import load_spec

GEOM = TaskGeometry()


class FakePlan:
    def __init__(self, trajectory, kld_pq=0.0):
        self.trajectory = np.asarray(trajectory, dtype=float)
        self.kld_pq = kld_pq


def straight_line(end, T=30):
    return np.linspace([0.0, 0.0], end, T)


# ---------------------------------------------------------------------------
# Metrics


def test_plan_identical_to_truth_scores_zero():
    truth = Trajectory(positions=straight_line(GEOM.left_goal), label="left")
    rec = evaluate_plans([FakePlan(truth.positions)], [truth], GEOM)
    m = rec.per_plan[0]
    assert m.rmse == 0.0 and m.goal_deviation == 0.0 and m.success


def test_constant_offset_hand_case():
    truth = Trajectory(positions=straight_line(GEOM.left_goal), label="left")
    plan = FakePlan(truth.positions + 0.01)
    m = evaluate_plans([plan], [truth], GEOM).per_plan[0]
    assert m.rmse == pytest.approx(0.01)
    assert m.goal_deviation == pytest.approx(0.01 * np.sqrt(2))


def test_boundary_point_counts_as_inside():
    point = np.asarray(GEOM.left_goal) + [GEOM.goal_radius, 0.0]
    label, nearest = classify_endpoint(point, GEOM)
    assert label == "left" and nearest == "left"


def test_goal_distribution_percentages_sum():
    pts = [GEOM.left_goal, GEOM.right_goal, (0.5, 0.5), (0.0, 0.0)]
    dist = goal_distribution(pts, GEOM)
    assert sum(dist["region"].values()) == pytest.approx(100.0)
    assert sum(dist["nearest"].values()) == pytest.approx(100.0)
    assert dist["region"]["neither"] == pytest.approx(50.0)


def test_evaluate_plans_length_mismatch():
    truth = Trajectory(positions=straight_line(GEOM.left_goal), label="left")
    with pytest.raises(ShapeError):
        evaluate_plans([], [truth], GEOM)


def test_aggregates_recomputable():
    truths = [Trajectory(positions=straight_line(GEOM.left_goal), label="left"),
              Trajectory(positions=straight_line(GEOM.right_goal), label="right")]
    plans = [FakePlan(t.positions + 0.005, kld_pq=1.0) for t in truths]
    rec = evaluate_plans(plans, truths, GEOM)
    assert verify_aggregates(rec)
    rec.aggregates["rmse"]["mean"] = 42.0
    assert not verify_aggregates(rec)


def test_run_record_json_excludes_timing_by_default():
    truths = [Trajectory(positions=straight_line(GEOM.left_goal), label="left")]
    rec = evaluate_plans([FakePlan(truths[0].positions)], truths, GEOM)
    rec.wall_clock = 12.5
    doc = json.loads(rec.to_json())
    assert "wall_clock" not in doc
    assert "wall_clock" in json.loads(rec.to_json(include_timing=True))


# ---------------------------------------------------------------------------
# KLD time series


def small_cfg():
    return ModelConfig(layers=(LayerConfig(4, 2, 2.0, 0.05),
                               LayerConfig(3, 1, 4.0, 0.02)),
                       output_dim=2, T=6, w_I=0.001)


def test_kld_timeseries_zero_when_posterior_equals_prior():
    cfg = small_cfg()
    params = NetworkParams.init_random(cfg, make_rng(0))
    trace = forward_posterior(params, AdaptationVars.zeros(cfg, 2), cfg,
                              make_rng(1))
    # Force the recorded posterior to match the prior exactly.
    for l in range(cfg.n_layers):
        trace.mu_q[l][:] = trace.mu_p[l]
        trace.sig_q[l][:] = trace.sig_p[l]
    series = kld_timeseries(trace, cfg)
    assert np.allclose(series["mean"], 0.0, atol=1e-12)
    assert series["mean"].shape == (6, 2)


def test_kld_timeseries_std_zero_for_single_rollout():
    cfg = small_cfg()
    params = NetworkParams.init_random(cfg, make_rng(0))
    trace = forward_posterior(params, AdaptationVars.zeros(cfg, 1), cfg,
                              make_rng(1))
    series = kld_timeseries(trace, cfg)
    assert np.allclose(series["std"], 0.0)


def test_kld_timeseries_csv_roundtrip(tmp_path):
    cfg = small_cfg()
    params = NetworkParams.init_random(cfg, make_rng(0))
    trace = forward_posterior(params, AdaptationVars.zeros(cfg, 3), cfg,
                              make_rng(1))
    series = kld_timeseries(trace, cfg)
    path = tmp_path / "kld.csv"
    kld_timeseries_csv(path, series)
    rows = path.read_text().splitlines()
    assert rows[0] == "t,layer1_mean,layer1_std,layer2_mean,layer2_std"
    assert len(rows) == 7
    loaded = np.array([[float(v) for v in r.split(",")[1:]] for r in rows[1:]])
    assert np.allclose(loaded[:, 0], series["mean"][:, 0])


# ---------------------------------------------------------------------------
# Checkpoints


def test_checkpoint_roundtrip_pvrnn(tmp_path):
    cfg = small_cfg()
    params = NetworkParams.init_random(cfg, make_rng(0))
    A = AdaptationVars.zeros(cfg, 2)
    A.a_mu[0][:] = 0.25
    path = tmp_path / "m.json"
    save_checkpoint(path, Checkpoint(kind="PVRNN", config=cfg, params=params,
                                     adaptation=A, seed=11))
    back = load_checkpoint(path)
    assert back.kind == "PVRNN" and back.seed == 11
    assert back.config == cfg
    for k in params.blocks:
        assert np.array_equal(back.params.blocks[k], params.blocks[k])
    assert np.array_equal(back.adaptation.a_mu[0], A.a_mu[0])


def test_checkpoint_roundtrip_fm(tmp_path):
    cfg = ModelConfig(layers=(LayerConfig(4, 0, 2.0, 0.0),), output_dim=2, T=6)
    params = FmParams.init_random(cfg, make_rng(0))
    path = tmp_path / "fm.json"
    save_checkpoint(path, Checkpoint(kind="FM", config=cfg, params=params))
    back = load_checkpoint(path)
    assert back.kind == "FM" and back.adaptation is None
    assert isinstance(back.params, FmParams)


def test_checkpoint_missing_and_malformed(tmp_path):
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_checkpoint(bad)
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"format_version": 99}))
    with pytest.raises(ConfigError):
        load_checkpoint(wrong)


# ---------------------------------------------------------------------------
# Spec files


def test_spec_defaults_and_overrides(tmp_path):
    spec = load_spec(None)
    assert spec.seed == 11
    assert spec.meta_prior_names == ("weak", "intermediate", "strong")
    cfg = spec.model_config("strong")
    assert cfg.layers[0].w == pytest.approx(0.2)
    assert cfg.layers[1].w == pytest.approx(0.1)
    path = tmp_path / "o.spec"
    path.write_text("[experiment]\nseed = 99\n")
    assert load_spec(path).seed == 99


def test_spec_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.spec"
    path.write_text("[experiment]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        load_spec(path)
    path.write_text("[nosuchsection]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_spec(path)


def test_spec_missing_file():
    with pytest.raises(ConfigError):
        load_spec("/nonexistent/x.spec")


# ---------------------------------------------------------------------------
# Pipeline plumbing (tiny settings, full run)


@pytest.fixture(scope="module")
def tiny_spec(tmp_path_factory):
    root = tmp_path_factory.mktemp("specs")
    path = root / "tiny.spec"
    path.write_text("""
[experiment]
name = tiny
seed = 3
[data]
n_train = 4
n_test = 2
n_center = 1
[model]
epochs = 20
[baselines]
epochs = 20
[plan]
epochs = 5
repetitions = 1
n_candidates = 2
[lookahead]
epochs = 2
si_epochs = 3
n_sequences = 1
""")
    return load_spec(path)


def test_pipeline_end_to_end_and_rerun_identical(tiny_spec, tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    run_experiment(tiny_spec, str(out1), log=None)
    run_experiment(tiny_spec, str(out2), threads=2, log=None)
    # identical RunRecords regardless of rerun or thread count
    for stage in STAGES:
        d1 = out1 / "tiny" / stage
        for name in sorted(os.listdir(d1)):
            if name == "timing.json" or not name.endswith(".json"):
                continue
            a = (d1 / name).read_text()
            b = (out2 / "tiny" / stage / name).read_text()
            assert a == b, f"{stage}/{name} differs between reruns"
    # completed stages are skipped, not overwritten
    marker = out1 / "tiny" / "train" / "DONE"
    before = marker.stat().st_mtime_ns
    run_stage(tiny_spec, str(out1), "train", log=None)
    assert marker.stat().st_mtime_ns == before


def test_pipeline_requires_prerequisites(tiny_spec, tmp_path):
    with pytest.raises(ConfigError):
        run_stage(tiny_spec, str(tmp_path / "fresh"), "train", log=None)


def test_pipeline_rejects_unknown_stage(tiny_spec, tmp_path):
    with pytest.raises(ConfigError):
        run_stage(tiny_spec, str(tmp_path), "no-such-stage", log=None)
