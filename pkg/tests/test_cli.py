"""Command-line pipeline: file contracts, determinism, error reporting."""

import json
import os

import numpy as np
import pytest
from PIL import Image

from splatseg.cli import main

SYNTH_TOML = """
seed = 0

[synthetic]
n_instances = 3
gaussians_per_instance = 50
n_views = 6
image_width = 48
image_height = 48
corruption = "permute"
"""

RUN_TOML = """
seed = 0

[paths]
scene = "{work}/data/scene.ply"
cameras = "{work}/data/cameras.json"
masks = "{work}/data/masks"
output = "{work}/run"

[training]
iterations = 250
loss_report_interval = 50
"""


def write_configs(tmp_path):
    synth_cfg = tmp_path / "synth.toml"
    synth_cfg.write_text(SYNTH_TOML)
    run_cfg = tmp_path / "run.toml"
    run_cfg.write_text(RUN_TOML.format(work=tmp_path))
    return synth_cfg, run_cfg


class TestPipeline:
    @pytest.fixture()
    def pipeline(self, tmp_path):
        synth_cfg, run_cfg = write_configs(tmp_path)
        assert main(["synth", "--config", str(synth_cfg), "--out", f"{tmp_path}/data"]) == 0
        return tmp_path, synth_cfg, run_cfg

    def test_synth_outputs(self, pipeline):
        tmp_path, _, _ = pipeline
        data = tmp_path / "data"
        assert (data / "scene.ply").exists()
        assert (data / "cameras.json").exists()
        assert len(list((data / "masks").glob("*.png"))) == 6
        assert len(list((data / "gt_masks").glob("*.png"))) == 6
        assert (data / "records.json").exists()
        assert (data / "run.json").exists()

    def test_full_chain(self, pipeline):
        tmp_path, synth_cfg, run_cfg = pipeline
        assert main(["associate", "--config", str(run_cfg)]) == 0
        run = tmp_path / "run"
        assert len(list((run / "relabeled").glob("*.png"))) == 6
        assert len(list((run / "relabeled_color").glob("*.png"))) == 6
        assert (run / "association_log.jsonl").exists()
        assert (run / "bank.json").exists()
        log = [
            json.loads(line)
            for line in (run / "association_log.jsonl").read_text().splitlines()
        ]
        assert all(
            set(e) == {"view", "label", "group", "ratio", "created_new"} for e in log
        )

        assert main(["train", "--config", str(run_cfg)]) == 0
        assert (run / "scene.ids").exists()
        loss_lines = (run / "loss.csv").read_text().strip().splitlines()
        assert loss_lines[0] == "step,mean_loss"
        assert len(loss_lines) == 6  # 250 steps at interval 50 + final

        assert main(["render", "--config", str(run_cfg)]) == 0
        renders = run / "renders"
        assert len(list(renders.glob("color_*.png"))) == 6
        assert len(list(renders.glob("label_*.png"))) >= 6

        # score rendered labels against the consistent ground truth
        pred_dir = run / "pred"
        os.makedirs(pred_dir, exist_ok=True)
        for vid in range(6):
            (pred_dir / f"{vid}.png").write_bytes(
                (renders / f"label_{vid}.png").read_bytes()
            )
        assert (
            main(
                [
                    "eval",
                    "--pred-dir", str(pred_dir),
                    "--gt-dir", f"{tmp_path}/data/gt_masks",
                    "--out", str(run / "eval"),
                    "--boundary",
                ]
            )
            == 0
        )
        report = json.loads((run / "eval" / "report.json").read_text())
        assert report["mean_iou"] > 0.8
        assert "mean_boundary_iou" in report

        # edit: remove the first group, then re-render
        script = tmp_path / "edits.json"
        script.write_text(json.dumps([{"op": "remove", "group_id": 1}]))
        assert main(["edit", "--config", str(run_cfg), "--script", str(script)]) == 0
        assert (run / "edited.ply").exists()
        assert (run / "edited.ids").exists()
        edited = json.loads((run / "bank.json").read_text())
        assert edited["groups"]  # original bank untouched

    def test_render_views_subset(self, pipeline):
        tmp_path, _, run_cfg = pipeline
        assert main(["associate", "--config", str(run_cfg)]) == 0
        assert main(["train", "--config", str(run_cfg)]) == 0
        assert main(["render", "--config", str(run_cfg), "--views", "0,2"]) == 0
        renders = tmp_path / "run" / "renders"
        assert sorted(p.name for p in renders.glob("color_*.png")) == [
            "color_0.png",
            "color_2.png",
        ]


class TestDeterminism:
    def test_rerun_is_byte_identical(self, tmp_path):
        outs = []
        for run_name in ("a", "b"):
            work = tmp_path / run_name
            work.mkdir()
            synth_cfg = work / "synth.toml"
            synth_cfg.write_text(SYNTH_TOML)
            run_cfg = work / "run.toml"
            run_cfg.write_text(RUN_TOML.format(work=work))
            assert main(["synth", "--config", str(synth_cfg), "--out", f"{work}/data"]) == 0
            assert main(["associate", "--config", str(run_cfg)]) == 0
            assert main(["train", "--config", str(run_cfg)]) == 0
            assert main(["render", "--config", str(run_cfg)]) == 0
            outs.append(work)
        a, b = outs
        for rel in sorted(
            p.relative_to(a) for p in a.rglob("*.png")
        ):
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
        assert (a / "run/scene.ids").read_bytes() == (b / "run/scene.ids").read_bytes()
        assert (a / "run/bank.json").read_bytes() == (b / "run/bank.json").read_bytes()


class TestModes:
    def test_no_association_passthrough(self, tmp_path):
        synth_cfg, run_cfg = write_configs(tmp_path)
        assert main(["synth", "--config", str(synth_cfg), "--out", f"{tmp_path}/data"]) == 0
        assert (
            main(
                [
                    "associate",
                    "--config", str(run_cfg),
                    "--mode", "no_association",
                ]
            )
            == 0
        )
        for vid in range(6):
            src = np.asarray(Image.open(tmp_path / "data" / "masks" / f"{vid}.png"))
            out = np.asarray(Image.open(tmp_path / "run" / "relabeled" / f"{vid}.png"))
            np.testing.assert_array_equal(src, out)

    def test_ablation_sweep(self, tmp_path):
        synth_cfg, run_cfg = write_configs(tmp_path)
        assert main(["synth", "--config", str(synth_cfg), "--out", f"{tmp_path}/data"]) == 0
        assert (
            main(
                [
                    "associate",
                    "--config", str(run_cfg),
                    "--ablation", "overlap_threshold",
                ]
            )
            == 0
        )
        base = tmp_path / "run" / "ablation_overlap_threshold"
        assert sorted(p.name for p in base.iterdir()) == ["0.01", "0.1", "0.2", "summary.json"]


class TestErrors:
    def test_missing_paths_listed(self, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text('[paths]\nscene = "/nope/scene.ply"\n')
        code = main(["associate", "--config", str(cfg)])
        assert code == 2

    def test_unknown_synthetic_field(self, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("[synthetic]\nn_instances = 2\nbogus = 1\n")
        code = main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 1
