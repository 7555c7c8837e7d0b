"""Command-line entry point: split, train, eval, predict, gradcheck, serve.

Output is JSON first (``--format pretty`` for humans). Every run writes a
config-echo JSON capturing all effective option values, so any command can
be reproduced from its echo file alone. Exit codes: 0 success, 1 runtime
error, 2 usage error.
"""

from __future__ import annotations

import json
import os
import sys

import click

from . import __version__, data, evaluation, fixtures, gradcheck, network, reporting
from . import service as service_mod
from . import training as training_mod
from . import weights_io
from .errors import FundusnetError, ImageDecodeError


def _echo_config(command: str, options: dict, path) -> None:
    payload = {"command": command, "version": __version__, "options": options}
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fail(message: str) -> "click.ClickException":
    exc = click.ClickException(message)
    exc.exit_code = 1
    return exc


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__)
def cli() -> None:
    """Retinal fundus screening toolkit."""


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------

@cli.command("split")
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Label CSV (ID, Disease_Risk, disease columns).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Manifest file to write.")
@click.option("--ratios", nargs=3, type=float, default=(0.6, 0.2, 0.2), show_default=True,
              help="Train/validation/test fractions; must sum to 1.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config-echo", "echo_path", type=click.Path(dir_okay=False), default=None,
              help="Where to write the config echo (default: <out>.config.json).")
def cmd_split(labels_path, out_path, ratios, seed, echo_path):
    """Deterministically partition the labelled ids into train/validation/test."""
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise click.UsageError(f"--ratios must be non-negative and sum to 1, got {ratios}")
    try:
        rows = data.load_labels(labels_path)
        split = data.split_dataset([row.id for row in rows], ratios=tuple(ratios), seed=seed)
        data.write_manifest(split, out_path)
    except FundusnetError as exc:
        raise _fail(str(exc))
    _echo_config("split", {
        "labels": labels_path, "out": out_path, "ratios": list(ratios), "seed": seed,
    }, echo_path or out_path + ".config.json")
    click.echo(json.dumps({
        "manifest": out_path,
        "counts": {
            "train": len(split.train),
            "validation": len(split.validation),
            "test": len(split.test),
        },
    }))


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

@cli.command("train")
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--images", "images_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--steps-per-epoch", type=int, default=45, show_default=True)
@click.option("--validation-steps", type=int, default=8, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--learning-rate", type=float, default=0.001, show_default=True)
@click.option("--seed", "init_seed", type=int, default=0, show_default=True,
              help="Weight initialization seed.")
@click.option("--shuffle-seed", type=int, default=0, show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--augment/--no-augment", default=True, show_default=True)
@click.option("--flip-prob", type=float, default=0.5, show_default=True)
@click.option("--rotation", type=float, default=20.0, show_default=True,
              help="Max rotation in degrees.")
@click.option("--zoom", type=float, default=0.1, show_default=True,
              help="Max zoom fraction.")
@click.option("--shear", type=float, default=10.0, show_default=True,
              help="Max shear in degrees.")
@click.option("--augment-seed", type=int, default=0, show_default=True)
@click.option("--resume", "resume_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Continue from a checkpoint instead of a fresh init; the "
                   "checkpoint's own recorded recipe wins over the flags above.")
@click.option("--checkpoint-every", type=int, default=0, show_default=True,
              help="Write <out-dir>/checkpoint.fnc every N epochs (0 disables).")
@click.option("--config-echo", "echo_path", type=click.Path(dir_okay=False), default=None)
def cmd_train(labels_path, images_dir, manifest_path, out_dir, epochs, steps_per_epoch,
              validation_steps, batch_size, learning_rate, init_seed, shuffle_seed,
              threshold, augment, flip_prob, rotation, zoom, shear, augment_seed,
              resume_path, checkpoint_every, echo_path):
    """Train the screening model and write weights plus history artifacts."""
    os.makedirs(out_dir, exist_ok=True)
    augment_params = data.AugmentParams(
        flip_prob=flip_prob, rotation_deg=rotation, zoom_frac=zoom,
        shear_deg=shear, seed=augment_seed,
    ) if augment else None
    config = training_mod.TrainConfig(
        learning_rate=learning_rate, epochs=epochs, steps_per_epoch=steps_per_epoch,
        validation_steps=validation_steps, batch_size=batch_size,
        init_seed=init_seed, shuffle_seed=shuffle_seed, threshold=threshold,
        augment_params=augment_params,
    )
    _echo_config("train", {
        "labels": labels_path, "images": images_dir, "manifest": manifest_path,
        "out_dir": out_dir, "resume": resume_path, "checkpoint_every": checkpoint_every,
        **config.to_json_dict(),
    }, echo_path or os.path.join(out_dir, "train-config.json"))

    checkpoint_path = os.path.join(out_dir, "checkpoint.fnc")

    def after_epoch(state):
        if checkpoint_every and state.epochs_done % checkpoint_every == 0:
            training_mod.save_checkpoint(state, checkpoint_path)

    try:
        rows = data.load_labels(labels_path)
        split = data.read_manifest(manifest_path)
        needed = (*split.train, *split.validation)
        records = data.load_records(rows, images_dir, ids=needed)
        if resume_path:
            state = training_mod.load_checkpoint(resume_path)
            result = training_mod.resume_training(state, records, split, after_epoch=after_epoch)
        else:
            result = training_mod.train(config, records, split, after_epoch=after_epoch)
        weights_path = os.path.join(out_dir, "weights.fnw")
        weights_io.save_weights(result.weights, weights_path)
        paths = reporting.render_train_outputs(result.history, out_dir)
    except FundusnetError as exc:
        raise _fail(str(exc))
    click.echo(json.dumps({
        "weights": weights_path,
        "checksum": network.weight_checksum(result.weights),
        "epochs": len(result.history),
        "final_train_loss": result.history[-1].train_loss if result.history else None,
        "final_val_loss": result.history[-1].val_loss if result.history else None,
        **{k: v for k, v in paths.items()},
    }))


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _format_report_pretty(report) -> str:
    d = report.to_json_dict()
    lines = [
        f"n={d['n']}  healthy={d['n_healthy']}  diseased={d['n_diseased']}  "
        f"threshold={d['threshold']}",
        f"confusion: tn={d['confusion']['tn']} fp={d['confusion']['fp']} "
        f"fn={d['confusion']['fn']} tp={d['confusion']['tp']}",
    ]
    for name, value in d["metrics"].items():
        lines.append(f"{name:>12}: {'undefined' if value is None else f'{value:.4f}'}")
    return "\n".join(lines)


@cli.command("eval")
@click.option("--weights", "weights_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--images", "images_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--part", type=click.Choice(data.PARTS), default="validation", show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=None,
              help="Also write report.json, CSVs, and figures here.")
@click.option("--format", "fmt", type=click.Choice(["json", "pretty"]), default="json",
              show_default=True)
@click.option("--config-echo", "echo_path", type=click.Path(dir_okay=False), default=None)
def cmd_eval(weights_path, labels_path, images_dir, manifest_path, part, threshold,
             batch_size, out_dir, fmt, echo_path):
    """Score one data part and report confusion, metrics, and ROC."""
    _echo_config("eval", {
        "weights": weights_path, "labels": labels_path, "images": images_dir,
        "manifest": manifest_path, "part": part, "threshold": threshold,
        "batch_size": batch_size, "out_dir": out_dir, "format": fmt,
    }, echo_path or (os.path.join(out_dir, "eval-config.json") if out_dir
                     else "fundusnet-eval-config.json"))
    try:
        weights = weights_io.load_weights(weights_path)
        rows = data.load_labels(labels_path)
        split = data.read_manifest(manifest_path)
        records = data.load_records(rows, images_dir, ids=split.part(part))
        report = evaluation.evaluate_model(
            weights, list(records.values()), threshold=threshold, batch_size=batch_size
        )
        if out_dir:
            reporting.render_eval_outputs(report, out_dir)
    except FundusnetError as exc:
        raise _fail(str(exc))
    if fmt == "pretty":
        click.echo(_format_report_pretty(report))
    else:
        click.echo(json.dumps(report.to_json_dict()))


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------

@cli.command("predict")
@click.option("--weights", "weights_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--config-echo", "echo_path", type=click.Path(dir_okay=False), default=None)
@click.argument("image_path", type=click.Path(dir_okay=False))
def cmd_predict(weights_path, threshold, echo_path, image_path):
    """One-line JSON diagnosis for a single image file."""
    _echo_config("predict", {
        "weights": weights_path, "image": image_path, "threshold": threshold,
    }, echo_path or "fundusnet-predict-config.json")
    try:
        weights = weights_io.load_weights(weights_path)
        try:
            with open(image_path, "rb") as fh:
                pixels = data.decode_and_resize(fh.read())
        except (OSError, ImageDecodeError) as exc:
            click.echo(json.dumps({"error": "decode_error", "detail": str(exc)}), err=True)
            sys.exit(1)
        diagnosis = network.predict(weights, pixels, threshold)
    except FundusnetError as exc:
        raise _fail(str(exc))
    click.echo(json.dumps({
        "label": diagnosis.label,
        "score": diagnosis.score,
        "threshold": diagnosis.threshold,
        "model_version": weights_io.file_checksum(weights_path),
    }))


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

@cli.command("gradcheck")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "pretty"]), default="pretty",
              show_default=True)
@click.option("--corrupt", "corrupt_name", default=None, hidden=True,
              help="Test hook: scale one analytic gradient so the check must fail.")
@click.option("--config-echo", "echo_path", type=click.Path(dir_okay=False), default=None)
def cmd_gradcheck(seed, fmt, corrupt_name, echo_path):
    """Finite-difference check of every layer's backward pass."""
    _echo_config("gradcheck", {"seed": seed, "format": fmt, "corrupt": corrupt_name},
                 echo_path or "fundusnet-gradcheck-config.json")
    try:
        results = gradcheck.check_model_gradients(seed=seed, corrupt=corrupt_name)
    except KeyError as exc:
        raise click.UsageError(str(exc))
    if fmt == "json":
        click.echo(json.dumps([
            {"parameter": r.name, "max_rel_err": r.max_rel_err, "passed": r.passed}
            for r in results
        ]))
    else:
        click.echo(gradcheck.format_table(results))
    if not all(r.passed for r in results):
        sys.exit(1)


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------

@cli.command("serve")
@click.option("--weights", "weights_path", required=True, envvar="FUNDUSNET_WEIGHTS",
              type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True, envvar="FUNDUSNET_HOST")
@click.option("--port", type=int, default=8000, show_default=True, envvar="FUNDUSNET_PORT")
@click.option("--threshold", type=float, default=0.5, show_default=True,
              envvar="FUNDUSNET_THRESHOLD")
@click.option("--ui-dir", type=click.Path(file_okay=False), default=None,
              envvar="FUNDUSNET_UI_DIR",
              help="Static UI bundle to serve at / (default: packaged bundle).")
@click.option("--config-echo", "echo_path", type=click.Path(dir_okay=False), default=None)
def cmd_serve(weights_path, host, port, threshold, ui_dir, echo_path):
    """Serve the diagnosis endpoint and the upload UI."""
    import uvicorn

    _echo_config("serve", {
        "weights": weights_path, "host": host, "port": port,
        "threshold": threshold, "ui_dir": ui_dir,
    }, echo_path or "fundusnet-serve-config.json")
    try:
        weights = weights_io.load_weights(weights_path)
        app = service_mod.create_app(
            weights,
            threshold=threshold,
            model_version=weights_io.file_checksum(weights_path),
            ui_dir=ui_dir,
        )
    except FundusnetError as exc:
        raise _fail(str(exc))
    uvicorn.run(app, host=host, port=port,
                timeout_keep_alive=service_mod.REQUEST_TIMEOUT_S)


# ---------------------------------------------------------------------------
# fixture (developer utility)
# ---------------------------------------------------------------------------

@cli.command("make-fixture")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=7, show_default=True)
def cmd_make_fixture(out_dir, seed):
    """Write the separable smoke-test fixture (images, labels, manifest)."""
    os.makedirs(out_dir, exist_ok=True)
    paths = fixtures.write_overfit_fixture(out_dir, seed=seed)
    _echo_config("make-fixture", {"out_dir": out_dir, "seed": seed},
                 os.path.join(out_dir, "make-fixture-config.json"))
    click.echo(json.dumps(paths))


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
