"""The screening CNN: layer stack, initialization, forward/backward, prediction.

The production architecture is five conv(3x3)+ReLU+maxpool(2x2) stages
(16, 32, 64, 64, 64 filters) over a 150x150x3 input, flatten, a 512-unit
ReLU dense layer, and a single sigmoid output. That stack has exactly
229,537 scalar parameters and its shape trace ends 2x2x64 -> 256 -> 512 -> 1.

A note on layer counting: descriptions of this family of models sometimes
quote "14 layers" by counting the input and output rows of the stack table;
this module counts 13 computational transforms (conv+ReLU merged per stage)
plus the input.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import ops
from .errors import ShapeError

DISEASED = "Diseased"
HEALTHY = "Healthy"

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; defaults are the production stack."""

    input_shape: tuple = (150, 150, 3)
    conv_filters: tuple = (16, 32, 64, 64, 64)
    dense_units: tuple = (512,)

    def __post_init__(self):
        if len(self.input_shape) != 3:
            raise ShapeError(f"input_shape must be (H, W, C), got {self.input_shape}")
        if not self.conv_filters:
            raise ShapeError("at least one conv stage is required")
        if any(int(v) <= 0 for v in (*self.input_shape, *self.conv_filters, *self.dense_units)):
            raise ShapeError("all config dimensions must be positive")
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "conv_filters", tuple(int(v) for v in self.conv_filters))
        object.__setattr__(self, "dense_units", tuple(int(v) for v in self.dense_units))

    def canonical_string(self) -> str:
        h, w, c = self.input_shape
        return (
            f"in={h}x{w}x{c};k={ops.KERNEL_SIZE};"
            f"conv={','.join(map(str, self.conv_filters))};"
            f"dense={','.join(map(str, self.dense_units))};out=1"
        )

    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.canonical_string().encode("ascii")).digest()[:16]


DEFAULT_CONFIG = ModelConfig()

# Shrunken stack shipped for gradient checking: small enough that central
# finite differences over every parameter run in well under a minute.
GRADCHECK_CONFIG = ModelConfig(input_shape=(12, 12, 3), conv_filters=(2, 2), dense_units=(8,))


def infer_shapes(config: ModelConfig) -> list:
    """Per-layer output shapes from input to the final scalar.

    Conv stages shrink each spatial dim by 2 (valid 3x3, stride 1); pooling
    halves with floor; flatten preserves the element count. Raises
    ShapeError if a spatial dimension underflows.
    """
    h, w, c = config.input_shape
    shapes = []
    for stage, f in enumerate(config.conv_filters, start=1):
        if h < ops.KERNEL_SIZE or w < ops.KERNEL_SIZE:
            raise ShapeError(
                f"spatial dims {h}x{w} too small for the 3x3 convolution at stage {stage}"
            )
        h, w, c = h - ops.KERNEL_SIZE + 1, w - ops.KERNEL_SIZE + 1, f
        shapes.append((h, w, c))
        if h < 2 or w < 2:
            raise ShapeError(f"spatial dims {h}x{w} too small for the 2x2 pool at stage {stage}")
        h, w = h // 2, w // 2
        shapes.append((h, w, c))
    size = h * w * c
    shapes.append((size,))
    for units in config.dense_units:
        shapes.append((units,))
    shapes.append((1,))
    return shapes


def flatten_length(config: ModelConfig) -> int:
    return infer_shapes(config)[2 * len(config.conv_filters)][0]


def _dense_sizes(config: ModelConfig) -> list:
    sizes = [flatten_length(config), *config.dense_units, 1]
    return list(zip(sizes[:-1], sizes[1:]))


@dataclass(frozen=True)
class ModelWeights:
    """All learned parameters for one ModelConfig, in forward order."""

    config: ModelConfig
    conv: tuple
    dense: tuple
    seed: int = 0

    def __post_init__(self):
        expected_conv = len(self.config.conv_filters)
        expected_dense = len(self.config.dense_units) + 1
        if len(self.conv) != expected_conv or len(self.dense) != expected_dense:
            raise ShapeError(
                f"weights hold {len(self.conv)} conv / {len(self.dense)} dense layers, "
                f"config wants {expected_conv} / {expected_dense}"
            )

    def parameters(self) -> list:
        """Ordered (name, array) pairs; the canonical parameter enumeration."""
        out = []
        for i, kern in enumerate(self.conv, start=1):
            out.append((f"conv{i}.weights", kern.weights))
            out.append((f"conv{i}.bias", kern.bias))
        for i, p in enumerate(self.dense, start=1):
            out.append((f"dense{i}.weights", p.weights))
            out.append((f"dense{i}.bias", p.bias))
        return out

    def param_count(self) -> int:
        return sum(arr.size for _, arr in self.parameters())

    def to_param_dict(self) -> dict:
        return dict(self.parameters())


def expected_param_shapes(config: ModelConfig) -> list:
    """Ordered (name, shape) pairs a weight set for ``config`` must carry."""
    out = []
    c = config.input_shape[2]
    for i, f in enumerate(config.conv_filters, start=1):
        out.append((f"conv{i}.weights", (ops.KERNEL_SIZE, ops.KERNEL_SIZE, c, f)))
        out.append((f"conv{i}.bias", (f,)))
        c = f
    for i, (n_in, n_out) in enumerate(_dense_sizes(config), start=1):
        out.append((f"dense{i}.weights", (n_in, n_out)))
        out.append((f"dense{i}.bias", (n_out,)))
    return out


def weights_from_params(config: ModelConfig, params: Mapping[str, np.ndarray],
                        seed: int = 0) -> ModelWeights:
    """Assemble ModelWeights from a name->array mapping, validating shapes."""
    expected = expected_param_shapes(config)
    missing = [name for name, _ in expected if name not in params]
    if missing:
        raise ShapeError(f"missing parameter tensors: {', '.join(missing)}")
    for name, shape in expected:
        if tuple(params[name].shape) != shape:
            raise ShapeError(f"{name} has shape {params[name].shape}, expected {shape}")
    conv = tuple(
        ops.ConvKernel(params[f"conv{i}.weights"], params[f"conv{i}.bias"])
        for i in range(1, len(config.conv_filters) + 1)
    )
    dense = tuple(
        ops.DenseParams(params[f"dense{i}.weights"], params[f"dense{i}.bias"])
        for i in range(1, len(config.dense_units) + 2)
    )
    return ModelWeights(config=config, conv=conv, dense=dense, seed=seed)


def init_weights(config: ModelConfig, seed: int) -> ModelWeights:
    """Glorot-uniform weights, zero biases, fully determined by ``seed``."""
    infer_shapes(config)  # reject underflowing configs before allocating
    rng = np.random.default_rng(seed)
    params = {}
    c = config.input_shape[2]
    k2 = ops.KERNEL_SIZE * ops.KERNEL_SIZE
    for i, f in enumerate(config.conv_filters, start=1):
        limit = np.sqrt(6.0 / (k2 * c + k2 * f))
        params[f"conv{i}.weights"] = rng.uniform(
            -limit, limit, (ops.KERNEL_SIZE, ops.KERNEL_SIZE, c, f)
        ).astype(np.float32)
        params[f"conv{i}.bias"] = np.zeros(f, dtype=np.float32)
        c = f
    for i, (n_in, n_out) in enumerate(_dense_sizes(config), start=1):
        limit = np.sqrt(6.0 / (n_in + n_out))
        params[f"dense{i}.weights"] = rng.uniform(-limit, limit, (n_in, n_out)).astype(np.float32)
        params[f"dense{i}.bias"] = np.zeros(n_out, dtype=np.float32)
    return weights_from_params(config, params, seed=seed)


def glorot_limits(config: ModelConfig) -> dict:
    """Per-layer Glorot bound for the weight matrices (biases excluded)."""
    out = {}
    c = config.input_shape[2]
    k2 = ops.KERNEL_SIZE * ops.KERNEL_SIZE
    for i, f in enumerate(config.conv_filters, start=1):
        out[f"conv{i}.weights"] = float(np.sqrt(6.0 / (k2 * c + k2 * f)))
        c = f
    for i, (n_in, n_out) in enumerate(_dense_sizes(config), start=1):
        out[f"dense{i}.weights"] = float(np.sqrt(6.0 / (n_in + n_out)))
    return out


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _check_batch(weights: ModelWeights, images: np.ndarray) -> None:
    if images.ndim != 4 or images.shape[1:] != weights.config.input_shape:
        raise ShapeError(
            f"image batch shape {images.shape} does not match input shape "
            f"(B, {', '.join(map(str, weights.config.input_shape))})"
        )


def _forward_core(weights: ModelWeights, images: np.ndarray, keep: bool):
    conv_cache = []
    h = images
    for kern in weights.conv:
        pre = ops.conv2d_forward_batch(h, kern)
        act = ops.relu_forward(pre)
        pooled, pidx = ops.maxpool2x2_forward_batch(act)
        if keep:
            conv_cache.append((h, pre, pidx))
        h = pooled
    pooled_shape = h.shape
    a = h.reshape(h.shape[0], -1)
    dense_cache = []
    for p in weights.dense[:-1]:
        pre = ops.dense_forward_batch(a, p)
        if keep:
            dense_cache.append((a, pre))
        a = ops.relu_forward(pre)
    if keep:
        dense_cache.append((a, None))
    logits = ops.dense_forward_batch(a, weights.dense[-1])[:, 0]
    return logits, (conv_cache, dense_cache, pooled_shape)


def forward_batch(weights: ModelWeights, images: np.ndarray) -> np.ndarray:
    """Scores in (0, 1) for a batch of images, as float64 (B,)."""
    _check_batch(weights, images)
    logits, _ = _forward_core(weights, images, keep=False)
    return ops.sigmoid_vec(logits)


def forward(weights: ModelWeights, image: np.ndarray) -> float:
    """Score one image through the full stack; deterministic and pure."""
    if image.ndim != 3 or image.shape != weights.config.input_shape:
        raise ShapeError(
            f"image shape {image.shape} does not match input shape {weights.config.input_shape}"
        )
    return float(forward_batch(weights, image[None])[0])


def backward_batch(weights: ModelWeights, images: np.ndarray, labels: np.ndarray):
    """Gradients of the mean BCE loss over a batch.

    Returns ``(grads, loss, scores)``: a name->array gradient dict matching
    ``weights.parameters()``, the mean loss, and the per-sample scores.
    """
    _check_batch(weights, images)
    y = np.asarray(labels)
    if y.shape != (images.shape[0],):
        raise ShapeError(f"labels shape {y.shape} != ({images.shape[0]},)")
    logits, (conv_cache, dense_cache, pooled_shape) = _forward_core(weights, images, keep=True)
    scores = ops.sigmoid_vec(logits)
    loss = ops.bce_loss_mean(scores, y)

    b = images.shape[0]
    # d(mean BCE)/d(logit) for BCE composed with sigmoid is (score - y) / B.
    dlogit = ((scores - y.astype(np.float64)) / b).astype(images.dtype, copy=False)

    grads = {}
    n_dense = len(weights.dense)
    g = dlogit[:, None]
    for i in range(n_dense, 0, -1):
        p = weights.dense[i - 1]
        a_in, pre = dense_cache[i - 1]
        gx, gw, gb = ops.dense_backward_batch(a_in, p, g)
        grads[f"dense{i}.weights"] = gw
        grads[f"dense{i}.bias"] = gb
        if i > 1:
            _, prev_pre = dense_cache[i - 2]
            g = ops.relu_backward(prev_pre, gx)
        else:
            g = gx
    g = g.reshape(pooled_shape)
    for i in range(len(weights.conv), 0, -1):
        x_in, pre, pidx = conv_cache[i - 1]
        g = ops.maxpool2x2_backward_batch(pidx, g)
        g = ops.relu_backward(pre, g)
        g, gw, gb = ops.conv2d_backward_batch(x_in, weights.conv[i - 1], g)
        grads[f"conv{i}.weights"] = gw
        grads[f"conv{i}.bias"] = gb
    return grads, loss, scores


def backward(weights: ModelWeights, image: np.ndarray, y: int):
    """Gradients of bce_loss(forward(image), y) for every parameter tensor."""
    if image.ndim != 3 or image.shape != weights.config.input_shape:
        raise ShapeError(
            f"image shape {image.shape} does not match input shape {weights.config.input_shape}"
        )
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y!r}")
    grads, loss, _ = backward_batch(weights, image[None], np.array([y]))
    return grads, loss


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnosis:
    """Binary screening outcome at a fixed operating threshold."""

    label: str
    score: float
    threshold: float


def predict(weights: ModelWeights, image: np.ndarray,
            threshold: float = DEFAULT_THRESHOLD) -> Diagnosis:
    """Diseased iff score >= threshold (ties resolve to Diseased)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    score = forward(weights, image)
    label = DISEASED if score >= threshold else HEALTHY
    return Diagnosis(label=label, score=score, threshold=threshold)


def weight_checksum(weights: ModelWeights) -> str:
    """SHA-256 over all parameter bytes in canonical order (hex digest)."""
    digest = hashlib.sha256()
    for name, arr in weights.parameters():
        digest.update(name.encode("ascii"))
        digest.update(np.ascontiguousarray(arr).tobytes())
    return digest.hexdigest()
