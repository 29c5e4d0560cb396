import json

import numpy as np
import pytest
from PIL import Image

from conftest import orientation_dataset
from insideout.cli import main
from insideout.config import load_run_config
from insideout.dataset import write_fer_csv
from insideout.errors import ConfigError


def write_run_config(tmp_path, csv_path, out_dir, **overrides):
    payload = {
        "dataset": {"csv_path": str(csv_path)},
        "split": {"mode": "stratified_random", "ratios": [0.7, 0.15, 0.15]},
        "augment": {
            "crop_scale_range": [1.0, 1.0],
            "rotation_degrees": 0.0,
            "hflip_prob": 0.0,
            "jitter": [0.0, 0.0, 0.0],
        },
        "model": {"backbone": "tiny_cnn", "weights_source": "random_init", "dropout_rate": 0.0},
        "training": {
            "initial_lr": 1e-3,
            "min_lr": 1e-5,
            "batch_size": 16,
            "max_epochs": 2,
            "patience": 2,
            "min_delta": 0.0,
        },
        "output_dir": str(out_dir),
        "seed": 7,
    }
    payload.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload, indent=2))
    return path


@pytest.fixture
def workspace(tmp_path):
    ds = orientation_dataset([8] * 7, seed=2)
    csv_path = tmp_path / "data.csv"
    write_fer_csv(ds, csv_path)
    out_dir = tmp_path / "run"
    config = write_run_config(tmp_path, csv_path, out_dir)
    return {"config": config, "out": out_dir, "csv": csv_path, "ds": ds}


def run_cli(*argv):
    return main(list(argv))


class TestPrepare:
    def test_writes_all_artifacts_and_digest(self, workspace, capsys):
        assert run_cli("prepare", "--config", str(workspace["config"])) == 0
        out = workspace["out"]
        for name in (
            "split.json",
            "validation.txt",
            "class_histogram.csv",
            "class_distribution.png",
            "augmented_samples.png",
        ):
            assert (out / name).exists(), name
        stdout = capsys.readouterr().out
        assert "dataset digest:" in stdout
        digest = stdout.split("dataset digest:")[1].split()[0]
        assert digest == digest.lower() and len(digest) == 64

    def test_histogram_csv_totals(self, workspace):
        run_cli("prepare", "--config", str(workspace["config"]))
        rows = (workspace["out"] / "class_histogram.csv").read_text().strip().splitlines()[1:]
        assert sum(int(r.split(",")[1]) for r in rows) == 56

    def test_missing_dataset_exits_nonzero(self, tmp_path, capsys):
        config = write_run_config(tmp_path, tmp_path / "absent.csv", tmp_path / "run")
        assert run_cli("prepare", "--config", str(config)) == 1
        assert "error:" in capsys.readouterr().err

    def test_overwrite_guard(self, workspace, capsys):
        assert run_cli("prepare", "--config", str(workspace["config"])) == 0
        assert run_cli("prepare", "--config", str(workspace["config"])) == 1
        assert "--overwrite" in capsys.readouterr().err
        assert run_cli("prepare", "--config", str(workspace["config"]), "--overwrite") == 0

    def test_seed_override_changes_split(self, workspace):
        run_cli("prepare", "--config", str(workspace["config"]))
        first = json.loads((workspace["out"] / "split.json").read_text())
        run_cli("prepare", "--config", str(workspace["config"]), "--overwrite", "--seed", "99")
        second = json.loads((workspace["out"] / "split.json").read_text())
        assert first["train"] != second["train"]
        assert second["seed"] == 99

    def test_emit_samples_controls_grid(self, workspace):
        assert (
            run_cli("prepare", "--config", str(workspace["config"]), "--emit-samples", "4") == 0
        )
        assert (workspace["out"] / "augmented_samples.png").exists()


class TestTrain:
    def test_requires_prepare_first(self, workspace, capsys):
        assert run_cli("train", "--config", str(workspace["config"])) == 1
        assert "prepare" in capsys.readouterr().err

    def test_full_train_writes_artifacts(self, workspace):
        run_cli("prepare", "--config", str(workspace["config"]))
        assert run_cli("train", "--config", str(workspace["config"])) == 0
        out = workspace["out"]
        for name in ("manifest.json", "curves.csv", "curves_acc.png", "curves_loss.png"):
            assert (out / name).exists(), name
        ckpt = out / "checkpoint_best"
        for name in (
            "weights.pt",
            "optimizer.pt",
            "model_config.json",
            "labels.json",
            "normalization.json",
            "training_state.json",
        ):
            assert (ckpt / name).exists(), name
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["epochs_trained"] == 2
        assert len(manifest["epochs"]) == 2
        assert manifest["stopped_early"] in (False, True)
        assert len(manifest["class_weights"]) == 7
        assert len(manifest["dataset_digest"]) == 64
        assert len(manifest["split_digest"]) == 64

    def test_curves_csv_one_row_per_epoch(self, workspace):
        run_cli("prepare", "--config", str(workspace["config"]))
        run_cli("train", "--config", str(workspace["config"]))
        rows = (workspace["out"] / "curves.csv").read_text().strip().splitlines()
        assert rows[0].startswith("epoch,")
        assert len(rows) == 1 + 2

    def test_seeded_runs_give_identical_manifests_modulo_wall_time(self, tmp_path):
        ds = orientation_dataset([8] * 7, seed=2)
        csv_path = tmp_path / "data.csv"
        write_fer_csv(ds, csv_path)

        def one_run(name):
            out = tmp_path / name
            config = write_run_config(tmp_path, csv_path, out)
            run_cli("prepare", "--config", str(config))
            run_cli("train", "--config", str(config))
            manifest = json.loads((out / "manifest.json").read_text())
            for record in manifest["epochs"]:
                record["wall_time"] = None
            manifest["total_wall_time"] = None
            manifest["config"]["output_dir"] = None
            return json.dumps(manifest, sort_keys=True)

        assert one_run("run_a") == one_run("run_b")

    def test_stale_split_digest_rejected(self, workspace, capsys):
        run_cli("prepare", "--config", str(workspace["config"]))
        other = orientation_dataset([8] * 7, seed=9)
        write_fer_csv(other, workspace["csv"])
        assert run_cli("train", "--config", str(workspace["config"])) == 1
        assert "different dataset" in capsys.readouterr().err


class TestEvaluate:
    @pytest.fixture
    def trained(self, workspace):
        run_cli("prepare", "--config", str(workspace["config"]))
        run_cli("train", "--config", str(workspace["config"]))
        return workspace

    def test_writes_report_artifacts(self, trained, capsys):
        assert run_cli("evaluate", "--config", str(trained["config"])) == 0
        out = trained["out"]
        for name in ("report.txt", "report.json", "confusion.csv", "confusion.png"):
            assert (out / name).exists(), name
        text = (out / "report.txt").read_text()
        assert "test partition" in text
        for column in ("Precision", "Recall", "F1"):
            assert column in text
        payload = json.loads((out / "report.json").read_text())
        assert payload["partition"] == "test"
        assert set(payload["per_class"]) == {
            "Anger", "Disgust", "Fear", "Happy", "Sadness", "Surprise", "Neutral",
        }

    def test_partition_flag_respected(self, trained):
        assert (
            run_cli(
                "evaluate", "--config", str(trained["config"]), "--partition", "val",
                "--overwrite",
            )
            == 0
        )
        assert "val partition" in (trained["out"] / "report.txt").read_text()

    def test_confusion_csv_totals_match_partition(self, trained):
        run_cli("evaluate", "--config", str(trained["config"]))
        rows = (trained["out"] / "confusion.csv").read_text().strip().splitlines()[1:]
        total = sum(int(v) for row in rows for v in row.split(",")[1:])
        split = json.loads((trained["out"] / "split.json").read_text())
        assert total == len(split["test"])

    def test_missing_checkpoint_errors(self, workspace, capsys):
        run_cli("prepare", "--config", str(workspace["config"]))
        assert run_cli("evaluate", "--config", str(workspace["config"])) == 1
        assert "checkpoint" in capsys.readouterr().err

    def test_empty_partition_errors_without_partial_artifacts(self, trained, capsys):
        split_path = trained["out"] / "split.json"
        payload = json.loads(split_path.read_text())
        payload["train"].extend(payload["test"])
        payload["test"] = []
        split_path.write_text(json.dumps(payload))
        for name in ("report.txt", "report.json", "confusion.csv", "confusion.png"):
            (trained["out"] / name).unlink(missing_ok=True)
        assert run_cli("evaluate", "--config", str(trained["config"])) == 1
        assert "empty" in capsys.readouterr().err
        for name in ("report.txt", "report.json", "confusion.csv", "confusion.png"):
            assert not (trained["out"] / name).exists()


class TestInfer:
    @pytest.fixture
    def trained(self, workspace):
        run_cli("prepare", "--config", str(workspace["config"]))
        run_cli("train", "--config", str(workspace["config"]))
        return workspace

    def write_images(self, tmp_path, n=3):
        ds = orientation_dataset([1] * 7, seed=4)
        paths = []
        for k in range(n):
            path = tmp_path / f"img_{k}.png"
            Image.fromarray(ds.images[k]).save(path)
            paths.append(str(path))
        return paths

    def test_results_in_input_order(self, trained, tmp_path):
        paths = self.write_images(tmp_path)
        assert run_cli("infer", "--config", str(trained["config"]), *paths) == 0
        results = json.loads((trained["out"] / "inferences.json").read_text())
        assert [r["image"] for r in results] == paths
        for r in results:
            assert r["ok"]
            assert 0 < r["confidence"] <= 1
            probs = [t["probability"] for t in r["top_k"]]
            assert probs == sorted(probs, reverse=True)
            assert sum(probs) <= 1 + 1e-6

    def test_unreadable_file_is_per_file_error(self, trained, tmp_path, capsys):
        paths = self.write_images(tmp_path, n=2)
        bad = tmp_path / "broken.png"
        bad.write_text("not an image")
        argv = ["infer", "--config", str(trained["config"]), paths[0], str(bad), paths[1]]
        assert main(argv) == 0
        results = json.loads((trained["out"] / "inferences.json").read_text())
        assert [r["ok"] for r in results] == [True, False, True]
        assert results[1]["error"]
        assert "ERROR" in capsys.readouterr().err

    def test_all_unreadable_fails(self, trained, tmp_path):
        bad = tmp_path / "broken.png"
        bad.write_text("nope")
        assert run_cli("infer", "--config", str(trained["config"]), str(bad)) == 1

    def test_grid_written_on_request(self, trained, tmp_path):
        paths = self.write_images(tmp_path)
        assert (
            run_cli("infer", "--config", str(trained["config"]), "--grid", *paths) == 0
        )
        assert (trained["out"] / "inference_grid.png").exists()


class TestReport:
    def test_regenerates_from_saved_outputs(self, workspace):
        run_cli("prepare", "--config", str(workspace["config"]))
        run_cli("train", "--config", str(workspace["config"]))
        run_cli("evaluate", "--config", str(workspace["config"]))
        out = workspace["out"]
        original = (out / "report.txt").read_text()
        (out / "report.txt").unlink()
        (out / "curves_acc.png").unlink()
        assert run_cli("report", "--config", str(workspace["config"])) == 0
        assert (out / "report.txt").read_text() == original
        assert (out / "curves_acc.png").exists()

    def test_nothing_to_report(self, workspace, capsys):
        assert run_cli("report", "--config", str(workspace["config"])) == 1
        assert "nothing to report" in capsys.readouterr().err


class TestConfig:
    def test_data_root_env_resolves_relative_paths(self, workspace, tmp_path, monkeypatch):
        config = write_run_config(
            tmp_path, "data.csv", workspace["out"], dataset={"csv_path": "data.csv"}
        )
        monkeypatch.setenv("INSIDEOUT_DATA_ROOT", str(tmp_path))
        cfg = load_run_config(config)
        assert cfg.dataset_csv == tmp_path / "data.csv"

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"dataset": {"csv_path": "x"}, "output_dir": "o", "typo": 1}))
        with pytest.raises(ConfigError, match="unknown config keys"):
            load_run_config(path)

    def test_section_errors_are_config_errors(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(
            json.dumps(
                {
                    "dataset": {"csv_path": "x"},
                    "output_dir": "o",
                    "augment": {"hflip_prob": 2.0},
                }
            )
        )
        with pytest.raises(ConfigError, match="augment"):
            load_run_config(path)

    def test_seed_flows_into_sections(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(
            json.dumps({"dataset": {"csv_path": "x"}, "output_dir": "o", "seed": 123})
        )
        cfg = load_run_config(path)
        assert cfg.split.seed == 123
        assert cfg.augment.seed == 123
        assert cfg.model.seed == 123
        assert cfg.training.seed == 123
