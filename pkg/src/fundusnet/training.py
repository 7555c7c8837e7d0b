"""Mini-batch RMSprop training on binary cross-entropy, with checkpoints.

The training stream is conceptually infinite: pass p over the train part
uses a permutation keyed by (shuffle_seed, p), and batches are consecutive
windows of the concatenated passes. An epoch is steps_per_epoch batches,
so epochs never starve even when steps_per_epoch * batch_size differs from
the part size. Everything downstream of (config, data, seeds) is
deterministic, and a checkpoint carries enough state (parameters,
optimizer accumulators, stream position) to resume bit-identically.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import network, ops, weights_io
from .data import AugmentParams, DatasetSplit, ImageRecord, augment
from .errors import CorruptFileError, DataFormatError, TrainingDivergedError


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    learning_rate, epochs, steps_per_epoch, and validation_steps default to
    the published recipe; batch_size is implementation-decided (the recipe
    leaves it open, and 45 steps/epoch does not divide a 1920-image train
    part evenly for any integral batch size).
    """

    learning_rate: float = 0.001
    epochs: int = 10
    steps_per_epoch: int = 45
    validation_steps: int = 8
    batch_size: int = 32
    rho: float = 0.9
    epsilon: float = 1e-7
    init_seed: int = 0
    shuffle_seed: int = 0
    threshold: float = 0.5
    augment_params: Optional[AugmentParams] = AugmentParams()

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if min(self.epochs, self.steps_per_epoch, self.validation_steps, self.batch_size) < 0 \
                or self.steps_per_epoch == 0 or self.validation_steps == 0 or self.batch_size == 0:
            raise ValueError("epochs may be 0; all other counts must be positive")

    def to_json_dict(self) -> dict:
        d = {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "steps_per_epoch": self.steps_per_epoch,
            "validation_steps": self.validation_steps,
            "batch_size": self.batch_size,
            "rho": self.rho,
            "epsilon": self.epsilon,
            "init_seed": self.init_seed,
            "shuffle_seed": self.shuffle_seed,
            "threshold": self.threshold,
        }
        if self.augment_params is None:
            d["augment"] = None
        else:
            a = self.augment_params
            d["augment"] = {
                "flip_prob": a.flip_prob,
                "rotation_deg": a.rotation_deg,
                "zoom_frac": a.zoom_frac,
                "shear_deg": a.shear_deg,
                "seed": a.seed,
            }
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "TrainConfig":
        aug = d.get("augment")
        return TrainConfig(
            learning_rate=d["learning_rate"],
            epochs=d["epochs"],
            steps_per_epoch=d["steps_per_epoch"],
            validation_steps=d["validation_steps"],
            batch_size=d["batch_size"],
            rho=d["rho"],
            epsilon=d["epsilon"],
            init_seed=d["init_seed"],
            shuffle_seed=d["shuffle_seed"],
            threshold=d["threshold"],
            augment_params=None if aug is None else AugmentParams(**aug),
        )


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    seconds: float

    def to_json_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "train_accuracy": self.train_accuracy,
            "val_loss": self.val_loss,
            "val_accuracy": self.val_accuracy,
            "seconds": self.seconds,
        }


@dataclass
class TrainState:
    """Resumable snapshot: parameters, optimizer accumulators, stream cursor."""

    model_config: network.ModelConfig
    config: TrainConfig
    params: dict
    opt_v: dict
    epochs_done: int
    global_step: int
    history: list

    def weights(self) -> network.ModelWeights:
        return network.weights_from_params(
            self.model_config, self.params, seed=self.config.init_seed
        )


@dataclass(frozen=True)
class TrainResult:
    weights: network.ModelWeights
    history: list
    state: TrainState


class _TrainStream:
    """Maps a global sample position to a record, across reshuffled passes."""

    def __init__(self, records: Sequence[ImageRecord], shuffle_seed: int):
        self.records = list(records)
        self.shuffle_seed = shuffle_seed
        self._perms = {}

    def record_at(self, position: int) -> ImageRecord:
        n = len(self.records)
        pass_idx, offset = divmod(position, n)
        perm = self._perms.get(pass_idx)
        if perm is None:
            perm = np.random.default_rng((self.shuffle_seed, pass_idx)).permutation(n)
            self._perms[pass_idx] = perm
        return self.records[perm[offset]]


def _gather_part(records_by_id: Mapping[str, ImageRecord], ids, part: str):
    out = []
    for image_id in ids:
        rec = records_by_id.get(image_id)
        if rec is None:
            raise DataFormatError(f"{part} part references id {image_id!r} with no loaded image")
        out.append(rec)
    if not out:
        raise DataFormatError(f"{part} part is empty")
    return out


def validate(weights: network.ModelWeights, records: Sequence[ImageRecord],
             steps: int, batch_size: int, threshold: float = 0.5):
    """Mean loss and accuracy over ``steps`` un-augmented batches.

    Batches walk the records in their given order, cycling when steps *
    batch_size exceeds the part. Never mutates the weights.
    """
    records = list(records)
    if not records:
        raise DataFormatError("validation part is empty")
    n = len(records)
    losses = []
    correct = 0
    seen = 0
    for step in range(steps):
        idx = [(step * batch_size + j) % n for j in range(batch_size)]
        images = np.stack([records[i].pixels for i in idx])
        labels = np.array([records[i].label for i in idx], dtype=np.int64)
        scores = network.forward_batch(weights, images)
        losses.append(ops.bce_loss_mean(scores, labels))
        correct += int(((scores >= threshold).astype(np.int64) == labels).sum())
        seen += len(idx)
    return float(np.mean(losses)), correct / seen


def _fresh_state(config: TrainConfig, model_config: network.ModelConfig) -> TrainState:
    weights = network.init_weights(model_config, config.init_seed)
    params = dict(weights.parameters())
    opt_v = {name: np.zeros_like(arr) for name, arr in params.items()}
    return TrainState(
        model_config=model_config,
        config=config,
        params=params,
        opt_v=opt_v,
        epochs_done=0,
        global_step=0,
        history=[],
    )


def _run(state: TrainState, records_by_id: Mapping[str, ImageRecord], split: DatasetSplit,
         after_epoch: Optional[Callable[[TrainState], Optional[bool]]] = None) -> TrainResult:
    cfg = state.config
    train_records = _gather_part(records_by_id, split.train, "train")
    val_records = _gather_part(records_by_id, split.validation, "validation")
    stream = _TrainStream(train_records, cfg.shuffle_seed)

    while state.epochs_done < cfg.epochs:
        t0 = time.perf_counter()
        weights = state.weights()
        losses = []
        correct = 0
        seen = 0
        for _ in range(cfg.steps_per_epoch):
            base = state.global_step * cfg.batch_size
            recs = [stream.record_at(base + j) for j in range(cfg.batch_size)]
            images = np.empty((cfg.batch_size, *state.model_config.input_shape), dtype=np.float32)
            for j, rec in enumerate(recs):
                if cfg.augment_params is not None:
                    images[j] = augment(rec.pixels, cfg.augment_params, base + j)
                else:
                    images[j] = rec.pixels
            labels = np.array([rec.label for rec in recs], dtype=np.int64)

            grads, loss, scores = network.backward_batch(weights, images, labels)
            if not np.isfinite(loss):
                ids = ", ".join(rec.id for rec in recs)
                raise TrainingDivergedError(
                    f"non-finite loss at step {state.global_step} (batch ids: {ids})"
                )
            for name in state.params:
                opt = ops.RmsPropState(
                    v=state.opt_v[name], rho=cfg.rho, epsilon=cfg.epsilon,
                    learning_rate=cfg.learning_rate,
                )
                new_param, new_opt = ops.rmsprop_step(state.params[name], grads[name], opt)
                state.params[name] = new_param
                state.opt_v[name] = new_opt.v
            weights = state.weights()

            losses.append(loss)
            correct += int(((scores >= cfg.threshold).astype(np.int64) == labels).sum())
            seen += cfg.batch_size
            state.global_step += 1

        val_loss, val_acc = validate(
            weights, val_records, cfg.validation_steps, cfg.batch_size, cfg.threshold
        )
        state.epochs_done += 1
        state.history.append(EpochStats(
            epoch=state.epochs_done,
            train_loss=float(np.mean(losses)),
            train_accuracy=correct / seen,
            val_loss=val_loss,
            val_accuracy=val_acc,
            seconds=time.perf_counter() - t0,
        ))
        if after_epoch is not None and after_epoch(state) is False:
            break

    return TrainResult(weights=state.weights(), history=list(state.history), state=state)


def train(config: TrainConfig, records_by_id: Mapping[str, ImageRecord], split: DatasetSplit,
          model_config: network.ModelConfig = network.DEFAULT_CONFIG,
          after_epoch: Optional[Callable[[TrainState], Optional[bool]]] = None) -> TrainResult:
    """Run the configured number of epochs from a fresh initialization.

    ``after_epoch`` is called with the mutable TrainState after each epoch
    (checkpoint hook); returning False stops early. With epochs=0 the
    result carries the initialized weights and an empty history.
    """
    state = _fresh_state(config, model_config)
    return _run(state, records_by_id, split, after_epoch=after_epoch)


def resume_training(state: TrainState, records_by_id: Mapping[str, ImageRecord],
                    split: DatasetSplit,
                    after_epoch: Optional[Callable[[TrainState], Optional[bool]]] = None
                    ) -> TrainResult:
    """Continue a (possibly reloaded) TrainState to its configured epochs."""
    return _run(state, records_by_id, split, after_epoch=after_epoch)


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(state: TrainState, path) -> None:
    """Persist weights, optimizer state, stream cursors, and history."""
    arrays = list(state.params.items())
    arrays += [(f"opt.{name}", arr) for name, arr in state.opt_v.items()]
    meta = {
        "epochs_done": state.epochs_done,
        "global_step": state.global_step,
        "train_config": state.config.to_json_dict(),
        "history": [e.to_json_dict() for e in state.history],
    }
    weights_io.write_container(
        path, weights_io.KIND_CHECKPOINT, state.model_config, arrays,
        seed=state.config.init_seed, meta=meta,
    )


def load_checkpoint(path) -> TrainState:
    """Rebuild a TrainState from a checkpoint file; errors are structured."""
    _, model_config, arrays, _, meta = weights_io.read_container(
        path, expect_kind=weights_io.KIND_CHECKPOINT
    )
    params = {}
    opt_v = {}
    for name, arr in arrays:
        if name.startswith("opt."):
            opt_v[name[len("opt."):]] = arr
        else:
            params[name] = arr
    config = TrainConfig.from_json_dict(meta["train_config"])
    state = TrainState(
        model_config=model_config,
        config=config,
        params=params,
        opt_v=opt_v,
        epochs_done=int(meta["epochs_done"]),
        global_step=int(meta["global_step"]),
        history=[EpochStats(**e) for e in meta["history"]],
    )
    state.weights()  # validates parameter shapes against the config
    if set(opt_v) != set(params):
        raise CorruptFileError(f"{path}: optimizer state does not cover every parameter")
    return state
