"""End-to-end CLI runs via main(), covering the full command chain."""

import json

import numpy as np
import pytest

from lesionbench.app.cli import main
from lesionbench.data import load_manifest, save_manifest
from lesionbench.ensemble import load_search_results
from lesionbench.pipeline import PredictionBatch, load_predictions, save_predictions

WORKSPACE_TOML = """
[synth]
class_counts = [8, 8, 8]
image_size = [48, 48]
seed = 11
out = "data"

[stats]
manifest = "splitdir/manifest.jsonl"

[split]
manifest = "data/manifest.jsonl"
test_fraction = 0.25
seed = 0
out = "splitdir"

[train]
manifest = "splitdir/manifest.jsonl"
backbone = "small-cnn"
out = "model"
[train.training]
epochs = 2
batch_size = 8
input_size = [48, 48]
seed = 3

[predict]
model = "model"
manifest = "splitdir/manifest.jsonl"
split = "test"
out = "preds"

[ensemble]
manifest = "splitdir/manifest.jsonl"
logs = ["preds/predictions.jsonl", "preds2/predictions.jsonl"]
k_values = [1, 2]
out = "ens"

[report]
manifest = "splitdir/manifest.jsonl"
k_values = [1, 2]
out = "reportdir"
[report.predictions]
small-cnn = "preds/predictions.jsonl"

[detect-eval]
manifest = "splitdir/manifest.jsonl"
detector_id = "oracle"
truth = "data/truth.jsonl"
out = "det"
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One directory where synth/split/train/predict have already run."""
    root = tmp_path_factory.mktemp("cli")
    config = root / "run.toml"
    config.write_text(WORKSPACE_TOML)
    for command in ("synth", "split", "train", "predict"):
        assert main([command, "--config", str(config)]) == 0, command
    # a second, random prediction log so the ensemble has two members
    base = load_predictions(root / "preds" / "predictions.jsonl")
    rng = np.random.default_rng(0)
    probs = rng.dirichlet(np.ones(base.probs.shape[1]), size=base.probs.shape[0])
    save_predictions(
        PredictionBatch(sample_ids=base.sample_ids, probs=probs, model_id="rand"),
        root / "preds2" / "predictions.jsonl",
    )
    return root, config


class TestPipelineChain:
    def test_synth_artifacts(self, workspace):
        root, _ = workspace
        manifest = load_manifest(root / "data" / "manifest.jsonl")
        assert len(manifest) == 24
        assert manifest.num_classes == 3
        assert (root / "data" / "truth.jsonl").exists()

    def test_split_rebases_image_paths(self, workspace):
        root, _ = workspace
        manifest = load_manifest(root / "splitdir" / "manifest.jsonl")
        assert len(manifest.subset("train")) == 18
        assert len(manifest.subset("test")) == 6
        for record in manifest.records:
            assert manifest.resolve_path(record).exists()

    def test_stats_output(self, workspace, capsys):
        _, config = workspace
        assert main(["stats", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        rows = [" ".join(line.split()) for line in out.splitlines()]
        assert "lesion_00 6 2" in rows
        assert "total 18 6" in rows

    def test_train_saved_model(self, workspace):
        root, _ = workspace
        assert (root / "model" / "weights.pt").exists()
        assert (root / "model" / "metadata.json").exists()

    def test_predict_log_shape(self, workspace):
        root, _ = workspace
        batch = load_predictions(root / "preds" / "predictions.jsonl")
        assert batch.n_samples == 6
        assert batch.model_id == "small-cnn"
        np.testing.assert_allclose(batch.probs.sum(axis=1), 1.0, atol=1e-6)

    def test_ensemble_enumerates_all_subsets(self, workspace, capsys):
        _, config = workspace
        assert main(["ensemble", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        root = workspace[0]
        results = load_search_results(root / "ens" / "subsets.json")
        assert len(results) == 3  # 2^2 - 1
        assert [r.rank for r in results] == [1, 2, 3]
        top1s = [r.top1 for r in results]
        assert top1s == sorted(top1s, reverse=True)
        assert "EnsembleNet" in out

    def test_report_bundle(self, workspace, capsys):
        root, config = workspace
        assert main(["report", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        for name in ("report.json", "tables.txt", "confusion.png", "per_class.png"):
            assert (root / "reportdir" / name).exists()
        assert "top-1 (%)" in out
        payload = json.loads((root / "reportdir" / "report.json").read_text())
        assert "small-cnn" in payload["models"]

    def test_detect_eval_oracle_is_perfect(self, workspace, capsys):
        root, config = workspace
        assert main(["detect-eval", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "overall accuracy: 100.00%" in out
        summary = json.loads((root / "det" / "detect_eval.json").read_text())
        assert summary["overall"] == 1.0
        assert summary["n_no_detection"] == 0
        assert (root / "det" / "detections.jsonl").exists()

    def test_clean_removes_noise_flagged(self, tmp_path):
        config = tmp_path / "clean.toml"
        config.write_text(
            """
[synth]
class_counts = [10, 10]
image_size = [48, 48]
noise_image_fraction = 0.2
seed = 4
out = "noisy"

[clean]
manifest = "noisy/manifest.jsonl"
out = "cleaned"
"""
        )
        assert main(["synth", "--config", str(config)]) == 0
        assert main(["clean", "--config", str(config)]) == 0
        noisy = load_manifest(tmp_path / "noisy" / "manifest.jsonl")
        cleaned = load_manifest(tmp_path / "cleaned" / "manifest.jsonl")
        flagged = sum(1 for r in noisy.records if r.noise_flag)
        assert flagged == 4  # floor(0.2 * 20)
        assert len(cleaned) == len(noisy) - flagged
        assert all(not r.noise_flag for r in cleaned.records)
        for record in cleaned.records:
            assert cleaned.resolve_path(record).exists()


class TestStatsReference:
    def test_reference_fixture_row(self, reference_manifest, tmp_path, capsys):
        save_manifest(reference_manifest, tmp_path / "ref.jsonl")
        config = tmp_path / "stats.toml"
        config.write_text('[stats]\nmanifest = "ref.jsonl"\n')
        assert main(["stats", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        rows = [" ".join(line.split()) for line in out.splitlines()]
        assert "Acne Vulgaris 1598 399" in rows


class TestOverrides:
    def synth_config(self, tmp_path, seed=11):
        tmp_path.mkdir(parents=True, exist_ok=True)
        config = tmp_path / "run.toml"
        config.write_text(
            f"""
[synth]
class_counts = [3, 3]
image_size = [48, 48]
seed = {seed}
out = "data"
"""
        )
        return config

    def test_same_seed_same_bytes(self, tmp_path):
        c1 = self.synth_config(tmp_path / "a")
        c2 = self.synth_config(tmp_path / "b")
        assert main(["synth", "--config", str(c1)]) == 0
        assert main(["synth", "--config", str(c2)]) == 0
        m1 = (tmp_path / "a" / "data" / "manifest.jsonl").read_bytes()
        m2 = (tmp_path / "b" / "data" / "manifest.jsonl").read_bytes()
        assert m1 == m2

    def test_seed_flag_overrides_config(self, tmp_path):
        config = self.synth_config(tmp_path)
        assert main(["synth", "--config", str(config), "--seed", "99", "--out", str(tmp_path / "alt")]) == 0
        base = load_manifest(tmp_path / "alt" / "manifest.jsonl")
        assert main(["synth", "--config", str(config)]) == 0
        default = load_manifest(tmp_path / "data" / "manifest.jsonl")
        assert base.content_hash() != default.content_hash()

    def test_out_flag_overrides_config(self, tmp_path):
        config = self.synth_config(tmp_path)
        target = tmp_path / "elsewhere"
        assert main(["synth", "--config", str(config), "--out", str(target)]) == 0
        assert (target / "manifest.jsonl").exists()


class TestExitCodes:
    def test_unknown_command_is_usage_error(self, capsys):
        assert main(["frobnicate", "--config", "x.toml"]) == 2
        capsys.readouterr()

    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 2
        capsys.readouterr()

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        capsys.readouterr()

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["stats", "--config", str(tmp_path / "ghost.toml")]) == 2
        assert "config error" in capsys.readouterr().err

    def test_invalid_toml(self, tmp_path, capsys):
        config = tmp_path / "bad.toml"
        config.write_text("[stats\nmanifest =")
        assert main(["stats", "--config", str(config)]) == 2
        assert "invalid TOML" in capsys.readouterr().err

    def test_missing_section(self, tmp_path, capsys):
        config = tmp_path / "empty.toml"
        config.write_text("[other]\nx = 1\n")
        assert main(["stats", "--config", str(config)]) == 2
        assert "no [stats] section" in capsys.readouterr().err

    def test_missing_required_key(self, tmp_path, capsys):
        config = tmp_path / "nokey.toml"
        config.write_text("[synth]\nout = \"data\"\n")
        assert main(["synth", "--config", str(config)]) == 2
        assert "class_counts" in capsys.readouterr().err

    def test_referenced_input_missing(self, tmp_path, capsys):
        config = tmp_path / "ref.toml"
        config.write_text('[stats]\nmanifest = "absent.jsonl"\n')
        assert main(["stats", "--config", str(config)]) == 2
        assert "does not exist" in capsys.readouterr().err

    def test_malformed_data_file_is_runtime_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("this is not a manifest\n")
        config = tmp_path / "run.toml"
        config.write_text(f'[stats]\nmanifest = "bad.jsonl"\n')
        assert main(["stats", "--config", str(config)]) == 1
        assert "error" in capsys.readouterr().err

    def test_unregistered_backbone_is_runtime_error(self, tmp_path, capsys):
        config = tmp_path / "run.toml"
        config.write_text(
            """
[synth]
class_counts = [2, 2]
image_size = [48, 48]
out = "data"

[split]
manifest = "data/manifest.jsonl"
test_fraction = 0.25
out = "splitdir"

[train]
manifest = "splitdir/manifest.jsonl"
backbone = "not-a-backbone"
out = "model"
"""
        )
        assert main(["synth", "--config", str(config)]) == 0
        assert main(["split", "--config", str(config)]) == 0
        assert main(["train", "--config", str(config)]) == 1
        assert "unregistered backbone" in capsys.readouterr().err

    def test_invalid_training_section_is_config_error(self, tmp_path, capsys):
        config = tmp_path / "run.toml"
        config.write_text(
            """
[train]
manifest = "m.jsonl"
backbone = "small-cnn"
out = "model"
[train.training]
epochs = -3
"""
        )
        (tmp_path / "m.jsonl").write_text("")
        assert main(["train", "--config", str(config)]) == 2
        assert "train.training" in capsys.readouterr().err

    def test_bad_k_values_is_config_error(self, workspace, tmp_path, capsys):
        root, _ = workspace
        config = tmp_path / "run.toml"
        config.write_text(
            f"""
[report]
manifest = "{root}/splitdir/manifest.jsonl"
k_values = [0]
out = "reportdir"
[report.predictions]
small-cnn = "{root}/preds/predictions.jsonl"
"""
        )
        assert main(["report", "--config", str(config)]) == 2
        assert "k_values" in capsys.readouterr().err
