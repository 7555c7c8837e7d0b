"""Report-rendering tests: JSON/CSV/figure files come out well formed."""

import csv
import json

import numpy as np

from fundusnet import evaluation, network, reporting, training
from fundusnet.data import ImageRecord

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def sample_report(seed=0):
    rng = np.random.default_rng(seed)
    records = [
        ImageRecord(id=f"s{i}", pixels=rng.uniform(0, 1, (12, 12, 3)).astype(np.float32),
                    label=i % 2)
        for i in range(10)
    ]
    weights = network.init_weights(network.GRADCHECK_CONFIG, seed)
    return evaluation.evaluate_model(weights, records)


def sample_history():
    return [
        training.EpochStats(epoch=i + 1, train_loss=0.7 - 0.1 * i, train_accuracy=0.5 + 0.05 * i,
                            val_loss=0.72 - 0.09 * i, val_accuracy=0.5 + 0.04 * i,
                            seconds=1.0 + 0.1 * i)
        for i in range(5)
    ]


def test_render_eval_outputs(tmp_path):
    report = sample_report()
    paths = reporting.render_eval_outputs(report, tmp_path / "out")
    with open(paths["report"]) as fh:
        parsed = json.load(fh)
    assert parsed == report.to_json_dict()
    with open(paths["metrics_csv"], newline="") as fh:
        rows = {row[0]: row[1] for row in csv.reader(fh) if row}
    assert rows["n"] == "10"
    assert "accuracy" in rows
    with open(paths["roc_csv"], newline="") as fh:
        roc_rows = list(csv.reader(fh))
    assert roc_rows[0] == ["fpr", "tpr"]
    assert len(roc_rows) == len(report.roc.points) + 1
    for key in ("roc_png", "confusion_png"):
        with open(paths[key], "rb") as fh:
            assert fh.read(8) == PNG_MAGIC


def test_render_eval_outputs_single_class(tmp_path):
    rng = np.random.default_rng(1)
    records = [
        ImageRecord(id=f"d{i}", pixels=rng.uniform(0, 1, (12, 12, 3)).astype(np.float32),
                    label=1)
        for i in range(4)
    ]
    weights = network.init_weights(network.GRADCHECK_CONFIG, 1)
    report = evaluation.evaluate_model(weights, records)
    paths = reporting.render_eval_outputs(report, tmp_path / "single")
    parsed = json.load(open(paths["report"]))
    assert parsed["metrics"]["auroc"] is None
    assert parsed["roc"] is None
    with open(paths["roc_png"], "rb") as fh:
        assert fh.read(8) == PNG_MAGIC


def test_render_train_outputs(tmp_path):
    history = sample_history()
    paths = reporting.render_train_outputs(history, tmp_path / "train")
    parsed = json.load(open(paths["history_json"]))
    assert len(parsed) == 5
    assert parsed[0]["epoch"] == 1
    with open(paths["history_csv"], newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "epoch"
    assert len(rows) == 6
    with open(paths["curves_png"], "rb") as fh:
        assert fh.read(8) == PNG_MAGIC


def test_render_train_outputs_empty_history(tmp_path):
    paths = reporting.render_train_outputs([], tmp_path / "empty")
    assert json.load(open(paths["history_json"])) == []
    with open(paths["curves_png"], "rb") as fh:
        assert fh.read(8) == PNG_MAGIC
