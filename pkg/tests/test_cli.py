import json
from pathlib import Path

import pytest
import torch
import yaml

from trafficworld.cli import main
from trafficworld.config import ConfigError, RunConfig

torch.set_num_threads(2)

SMALL_CFG = {
    "data": {"n_train": 2, "n_val": 1, "n_holdout": 1, "n_frames": 8,
             "n_vehicles_min": 3, "n_vehicles_max": 5,
             "n_pedestrians_min": 0, "n_pedestrians_max": 1},
    "model": {"preset": "tiny", "raster_grid": 64},
    "rollout": {"horizon_s": 1.0, "n_rollouts": 2},
    "training": {"max_steps": 4, "batch_size": 2, "data_workers": 1},
    "planner": {"n_rollouts": 1, "horizon_s": 0.5, "workers": 1},
    "env": {"horizon_s": 0.5},
    "scaling": {"token_budget": 500, "max_steps": 3},
}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    cfg_path = root / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(SMALL_CFG))
    data = root / "data"
    assert main(["--config", str(cfg_path), "--seed", "1",
                 "gen-data", "--out", str(data)]) == 0
    ckpt_dir = root / "ckpt"
    assert main(["--config", str(cfg_path), "--seed", "1", "train",
                 "--scenarios", str(data / "train"), "--out", str(ckpt_dir)]) == 0
    return root, cfg_path, data, ckpt_dir / "model.npz"


class TestConfig:
    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig({"bogus_key": 1})
        with pytest.raises(ConfigError):
            RunConfig({"training": {"nope": 2}})

    def test_hash_stable_under_reordering(self):
        a = RunConfig({"training": {"lr": 1e-3}, "seed": 4})
        b = RunConfig({"seed": 4, "training": {"lr": 1e-3}})
        assert a.config_hash == b.config_hash

    def test_hash_changes_with_values(self):
        a = RunConfig({"training": {"lr": 1e-3}})
        b = RunConfig({"training": {"lr": 2e-3}})
        assert a.config_hash != b.config_hash

    def test_model_config_presets(self):
        cfg = RunConfig({"model": {"preset": "tiny", "n_layers": 3}})
        mc = cfg.model_config()
        assert mc.n_layers == 3
        assert mc.d_model == 64

    def test_signed_velocity_switch_preserves_layout(self):
        base = RunConfig({}).model_config().vocabulary()
        signed = RunConfig({"model": {"signed_velocity": True}}) \
            .model_config().vocabulary()
        assert base.size == signed.size
        assert signed.quant.attr("v_x").lo == -25.0


class TestPipeline:
    def test_gen_data_outputs(self, pipeline):
        root, cfg_path, data, ckpt = pipeline
        assert len(list((data / "train").glob("*.jsonl"))) == 2
        manifest = json.loads((data / "train" / "manifest.json").read_text())
        assert manifest["complete"]

    def test_train_checkpoint(self, pipeline):
        root, cfg_path, data, ckpt = pipeline
        assert ckpt.exists()
        assert (ckpt.parent / "curves.tsv").exists()

    def test_rollout_evaluate(self, pipeline):
        root, cfg_path, data, ckpt = pipeline
        rollouts = root / "rollouts"
        assert main(["--config", str(cfg_path), "--seed", "1", "rollout",
                     "--checkpoint", str(ckpt), "--scenarios", str(data / "val"),
                     "--out", str(rollouts)]) == 0
        eval_dir = root / "eval"
        assert main(["--config", str(cfg_path), "evaluate",
                     "--rollouts", str(rollouts), "--out", str(eval_dir)]) == 0
        report = json.loads((eval_dir / "evaluation.json").read_text())
        assert 0.0 < report["mean_meta"] <= 1.0

    def test_plan(self, pipeline):
        root, cfg_path, data, ckpt = pipeline
        out = root / "plans"
        assert main(["--config", str(cfg_path), "--seed", "2", "plan",
                     "--checkpoint", str(ckpt), "--scenarios", str(data / "val"),
                     "--out", str(out), "--policies", "2"]) == 0
        plan = json.loads((out / "plan_0000.json").read_text())
        assert plan["rollouts_executed"] == 2

    def test_rl_check(self, pipeline):
        root, cfg_path, data, ckpt = pipeline
        out = root / "rl"
        assert main(["--config", str(cfg_path), "--seed", "3", "rl-check",
                     "--checkpoint", str(ckpt), "--scenarios", str(data / "val"),
                     "--out", str(out), "--iterations", "1"]) == 0
        assert (out / "cem_curve.tsv").exists()

    def test_render_deterministic(self, pipeline):
        root, cfg_path, data, ckpt = pipeline
        out1, out2 = root / "svg1", root / "svg2"
        src = next((data / "val").glob("*.jsonl"))
        for out in (out1, out2):
            assert main(["render", "--scenarios", str(src), "--out", str(out),
                         "--frame", "0"]) == 0
        f1 = next(out1.rglob("*.svg")).read_bytes()
        f2 = next(out2.rglob("*.svg")).read_bytes()
        assert f1 == f2

    def test_scaling(self, pipeline):
        root, cfg_path, data, ckpt = pipeline
        out = root / "scaling"
        assert main(["--config", str(cfg_path), "scaling",
                     "--scenarios", str(data / "train"), "--out", str(out)]) == 0
        assert (out / "comparison.tsv").exists()

    def test_bad_config_fails_cleanly(self, pipeline, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("nonsense_key: 1\n")
        rc = main(["--config", str(bad), "gen-data", "--out", str(tmp_path / "x")])
        assert rc == 1
