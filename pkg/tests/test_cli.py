"""CLI contract tests: subcommands, exit codes, echo files, artifacts."""

import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from fundusnet import fixtures, network, weights_io
from fundusnet.cli import cli

@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def labels_3200(tmp_path):
    path = tmp_path / "labels.csv"
    fixtures.write_synthetic_labels(path, 3200, seed=0)
    return path


@pytest.fixture
def fixture_dataset(tmp_path):
    root = tmp_path / "fixture"
    root.mkdir()
    return fixtures.write_overfit_fixture(root, seed=7)


@pytest.fixture
def small_weights_file(tmp_path):
    path = tmp_path / "small.fnw"
    weights_io.save_weights(network.init_weights(network.GRADCHECK_CONFIG, 2), path)
    return path


@pytest.fixture
def default_weights_file(tmp_path):
    path = tmp_path / "model.fnw"
    weights_io.save_weights(network.init_weights(network.DEFAULT_CONFIG, 3), path)
    return path


class TestSplit:
    def test_published_counts(self, runner, labels_3200, tmp_path):
        out = tmp_path / "manifest.tsv"
        result = runner.invoke(cli, ["split", "--labels", str(labels_3200),
                                     "--out", str(out), "--seed", "5"])
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert body["counts"] == {"train": 1920, "validation": 640, "test": 640}
        lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert len(lines) == 3200

    def test_same_seed_byte_identical(self, runner, labels_3200, tmp_path):
        outs = []
        for name in ("m1.tsv", "m2.tsv"):
            out = tmp_path / name
            result = runner.invoke(cli, ["split", "--labels", str(labels_3200),
                                         "--out", str(out), "--seed", "5"])
            assert result.exit_code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_bad_ratios_exit_2(self, runner, labels_3200, tmp_path):
        result = runner.invoke(cli, ["split", "--labels", str(labels_3200),
                                     "--out", str(tmp_path / "m.tsv"),
                                     "--ratios", "0.5", "0.5", "0.5"])
        assert result.exit_code == 2

    def test_echo_file_reruns_identically(self, runner, labels_3200, tmp_path):
        out = tmp_path / "m1.tsv"
        result = runner.invoke(cli, ["split", "--labels", str(labels_3200),
                                     "--out", str(out), "--seed", "9"])
        assert result.exit_code == 0
        echo = json.loads((tmp_path / "m1.tsv.config.json").read_text())
        assert echo["command"] == "split"
        opts = echo["options"]
        out2 = tmp_path / "m2.tsv"
        rerun = runner.invoke(cli, ["split", "--labels", opts["labels"],
                                    "--out", str(out2),
                                    "--ratios", *map(str, opts["ratios"]),
                                    "--seed", str(opts["seed"])])
        assert rerun.exit_code == 0
        assert out.read_bytes() == out2.read_bytes()

    def test_malformed_labels_exit_1(self, runner, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("ID,Disease_Risk,DR\nx,7,0\n", encoding="utf-8")
        result = runner.invoke(cli, ["split", "--labels", str(bad),
                                     "--out", str(tmp_path / "m.tsv")])
        assert result.exit_code == 1


class TestTrain:
    def test_short_run_writes_artifacts(self, runner, fixture_dataset, tmp_path):
        out_dir = tmp_path / "run"
        result = runner.invoke(cli, [
            "train",
            "--labels", fixture_dataset["labels"],
            "--images", fixture_dataset["images_dir"],
            "--manifest", fixture_dataset["manifest"],
            "--out-dir", str(out_dir),
            "--epochs", "1", "--steps-per-epoch", "2", "--batch-size", "4",
            "--validation-steps", "1", "--no-augment",
        ])
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert os.path.exists(body["weights"])
        for name in ("history.json", "history.csv", "training.png", "train-config.json"):
            assert (out_dir / name).exists()
        loaded = weights_io.load_weights(body["weights"])
        assert loaded.param_count() == 229_537
        history = json.loads((out_dir / "history.json").read_text())
        assert len(history) == 1

    def test_epochs_zero_writes_initialized_weights(self, runner, fixture_dataset, tmp_path):
        out_dir = tmp_path / "zero"
        result = runner.invoke(cli, [
            "train",
            "--labels", fixture_dataset["labels"],
            "--images", fixture_dataset["images_dir"],
            "--manifest", fixture_dataset["manifest"],
            "--out-dir", str(out_dir),
            "--epochs", "0", "--seed", "17",
        ])
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert body["epochs"] == 0 and body["final_train_loss"] is None
        loaded = weights_io.load_weights(body["weights"])
        fresh = network.init_weights(network.DEFAULT_CONFIG, 17)
        assert network.weight_checksum(loaded) == network.weight_checksum(fresh)

    def test_missing_image_names_id(self, runner, fixture_dataset, tmp_path):
        victim = os.path.join(fixture_dataset["images_dir"], "fx_tr_d00.png")
        os.remove(victim)
        result = runner.invoke(cli, [
            "train",
            "--labels", fixture_dataset["labels"],
            "--images", fixture_dataset["images_dir"],
            "--manifest", fixture_dataset["manifest"],
            "--out-dir", str(tmp_path / "run"),
            "--epochs", "1", "--steps-per-epoch", "1",
        ])
        assert result.exit_code == 1
        assert "fx_tr_d00" in result.output


class TestEval:
    def test_report_and_artifacts(self, runner, fixture_dataset, default_weights_file, tmp_path):
        out_dir = tmp_path / "eval"
        result = runner.invoke(cli, [
            "eval",
            "--weights", str(default_weights_file),
            "--labels", fixture_dataset["labels"],
            "--images", fixture_dataset["images_dir"],
            "--manifest", fixture_dataset["manifest"],
            "--part", "train",
            "--out-dir", str(out_dir),
        ])
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert body["n"] == 16
        assert set(body["metrics"]) == {"accuracy", "precision", "recall", "specificity",
                                        "f1", "auroc"}
        for name in ("report.json", "metrics.csv", "roc.csv", "roc.png", "confusion.png",
                     "eval-config.json"):
            assert (out_dir / name).exists()

    def test_single_class_part_null_auroc(self, runner, fixture_dataset,
                                          default_weights_file, tmp_path):
        # validation part has one of each class; test part too -> rebuild a
        # manifest whose validation part is single-class
        manifest = tmp_path / "single.tsv"
        lines = open(fixture_dataset["manifest"]).read().splitlines()
        rewritten = []
        for line in lines:
            if line.endswith("\tvalidation") and "_h" in line:
                line = line.replace("\tvalidation", "\ttest")
            rewritten.append(line)
        manifest.write_text("\n".join(rewritten) + "\n")
        result = runner.invoke(cli, [
            "eval",
            "--weights", str(default_weights_file),
            "--labels", fixture_dataset["labels"],
            "--images", fixture_dataset["images_dir"],
            "--manifest", str(manifest),
            "--part", "validation",
        ])
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert body["metrics"]["auroc"] is None
        assert body["metrics"]["recall"] is not None

    def test_pretty_format(self, runner, fixture_dataset, default_weights_file):
        result = runner.invoke(cli, [
            "eval",
            "--weights", str(default_weights_file),
            "--labels", fixture_dataset["labels"],
            "--images", fixture_dataset["images_dir"],
            "--manifest", fixture_dataset["manifest"],
            "--part", "train", "--format", "pretty",
        ])
        assert result.exit_code == 0
        assert "confusion:" in result.output

    def test_bad_weights_path_nonzero(self, runner, fixture_dataset, tmp_path):
        bogus = tmp_path / "bogus.fnw"
        bogus.write_bytes(b"JUNKJUNKJUNK")
        result = runner.invoke(cli, [
            "eval",
            "--weights", str(bogus),
            "--labels", fixture_dataset["labels"],
            "--images", fixture_dataset["images_dir"],
            "--manifest", fixture_dataset["manifest"],
        ])
        assert result.exit_code == 1


class TestPredict:
    def test_zero_weights_score_half(self, runner, tmp_path, solid_png):
        init = network.init_weights(network.DEFAULT_CONFIG, 0)
        zeros = {name: np.zeros_like(arr) for name, arr in init.parameters()}
        wpath = tmp_path / "zero.fnw"
        weights_io.save_weights(
            network.weights_from_params(network.DEFAULT_CONFIG, zeros), wpath
        )
        img = tmp_path / "img.png"
        img.write_bytes(solid_png(0))
        result = runner.invoke(cli, ["predict", "--weights", str(wpath), str(img),
                                     "--config-echo", str(tmp_path / "echo.json")])
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert body["score"] == 0.5
        assert body["label"] == network.DISEASED  # tie rule
        assert set(body) == {"label", "score", "threshold", "model_version"}

    def test_nonexistent_image_decode_error(self, runner, default_weights_file, tmp_path):
        result = runner.invoke(cli, ["predict", "--weights", str(default_weights_file),
                                     str(tmp_path / "missing.png"),
                                     "--config-echo", str(tmp_path / "echo.json")])
        assert result.exit_code == 1
        assert "decode_error" in result.output

    def test_threshold_flag(self, runner, default_weights_file, tmp_path, solid_png):
        img = tmp_path / "img.png"
        img.write_bytes(solid_png(40))
        result = runner.invoke(cli, ["predict", "--weights", str(default_weights_file),
                                     str(img), "--threshold", "0.9",
                                     "--config-echo", str(tmp_path / "echo.json")])
        body = json.loads(result.output)
        assert body["threshold"] == 0.9
        assert (body["label"] == network.DISEASED) == (body["score"] >= 0.9)


class TestGradcheck:
    def test_passes_exit_zero(self, runner, tmp_path):
        result = runner.invoke(cli, ["gradcheck", "--seed", "0",
                                     "--config-echo", str(tmp_path / "echo.json")])
        assert result.exit_code == 0, result.output
        assert "pass" in result.output and "FAIL" not in result.output

    def test_corrupted_backward_fails(self, runner, tmp_path):
        result = runner.invoke(cli, ["gradcheck", "--seed", "0",
                                     "--corrupt", "dense1.weights",
                                     "--config-echo", str(tmp_path / "echo.json")])
        assert result.exit_code == 1
        assert "FAIL" in result.output

    def test_same_seed_identical_table(self, runner, tmp_path):
        outs = []
        for i in range(2):
            result = runner.invoke(cli, ["gradcheck", "--seed", "3", "--format", "json",
                                         "--config-echo", str(tmp_path / f"e{i}.json")])
            assert result.exit_code == 0
            outs.append(result.output)
        assert outs[0] == outs[1]


class TestServe:
    def test_builds_app_and_calls_runner(self, runner, default_weights_file, tmp_path,
                                         monkeypatch):
        captured = {}

        def fake_run(app, **kwargs):
            captured["app"] = app
            captured["kwargs"] = kwargs

        import uvicorn
        monkeypatch.setattr(uvicorn, "run", fake_run)
        result = runner.invoke(cli, ["serve", "--weights", str(default_weights_file),
                                     "--port", "9999",
                                     "--config-echo", str(tmp_path / "echo.json")])
        assert result.exit_code == 0, result.output
        assert captured["kwargs"]["port"] == 9999
        routes = {route.path for route in captured["app"].routes}
        assert {"/healthz", "/metadata", "/predict"} <= routes

    def test_wrong_kind_weights_exit_1(self, runner, small_weights_file, tmp_path,
                                       fixture_dataset, monkeypatch):
        # a config mismatch is not a serve blocker, but a corrupt file is
        bogus = tmp_path / "corrupt.fnw"
        blob = bytearray(open(small_weights_file, "rb").read())
        blob[10] ^= 0x55
        bogus.write_bytes(bytes(blob))
        result = runner.invoke(cli, ["serve", "--weights", str(bogus),
                                     "--config-echo", str(tmp_path / "echo.json")])
        assert result.exit_code == 1


def test_make_fixture_command(runner, tmp_path):
    out = tmp_path / "fx"
    result = runner.invoke(cli, ["make-fixture", "--out-dir", str(out), "--seed", "7"])
    assert result.exit_code == 0, result.output
    body = json.loads(result.output)
    assert os.path.isdir(body["images_dir"])
    assert os.path.exists(body["labels"])
    assert os.path.exists(body["manifest"])


class TestTrainResume:
    def test_resume_of_completed_checkpoint_is_stable(self, runner, fixture_dataset, tmp_path):
        args = [
            "train",
            "--labels", fixture_dataset["labels"],
            "--images", fixture_dataset["images_dir"],
            "--manifest", fixture_dataset["manifest"],
            "--epochs", "2", "--steps-per-epoch", "2", "--batch-size", "2",
            "--validation-steps", "1", "--no-augment", "--checkpoint-every", "1",
        ]
        first = runner.invoke(cli, args + ["--out-dir", str(tmp_path / "a")])
        assert first.exit_code == 0, first.output
        body1 = json.loads(first.output)
        resumed = runner.invoke(cli, [
            "train",
            "--labels", fixture_dataset["labels"],
            "--images", fixture_dataset["images_dir"],
            "--manifest", fixture_dataset["manifest"],
            "--out-dir", str(tmp_path / "b"),
            "--resume", str(tmp_path / "a" / "checkpoint.fnc"),
        ])
        assert resumed.exit_code == 0, resumed.output
        body2 = json.loads(resumed.output)
        # the checkpoint was written at the final epoch; resuming it runs no
        # further steps and reproduces the same weights
        assert body2["checksum"] == body1["checksum"]
        assert body2["epochs"] == body1["epochs"]
