"""Forward/backward numeric kernels for every layer of the screening CNN.

Tensors are C-contiguous numpy arrays, float32 on the production path.
The accumulating kernels (convolution, dense) compute at the dtype of
their inputs: float32 in training/inference, float64 when the
gradient-check harness or the direct-vs-fast comparison hands in float64
tensors. Loss/score scalars and the optimizer update are always computed
at float64 and stored back at the parameter dtype.

All operations are pure: they never mutate their arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ShapeError

KERNEL_SIZE = 3
BCE_CLAMP = 1e-7


def as_tensor(values, shape=None) -> np.ndarray:
    """Coerce ``values`` to a C-contiguous float32 array, optionally reshaped."""
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if shape is not None:
        arr = arr.reshape(shape)
    return arr


def _require_rank(name: str, x: np.ndarray, rank: int) -> None:
    if x.ndim != rank:
        raise ShapeError(f"{name} must have rank {rank}, got rank {x.ndim} (shape {x.shape})")


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvKernel:
    """A bank of 3x3 filters: weights (K, K, Cin, F) plus per-filter bias (F,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        _require_rank("conv weights", self.weights, 4)
        k0, k1, _, f = self.weights.shape
        if k0 != KERNEL_SIZE or k1 != KERNEL_SIZE:
            raise ShapeError(f"kernel size must be {KERNEL_SIZE}x{KERNEL_SIZE}, got {k0}x{k1}")
        _require_rank("conv bias", self.bias, 1)
        if self.bias.shape[0] != f:
            raise ShapeError(f"bias length {self.bias.shape[0]} != filter count {f}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ShapeError("conv parameters must be finite")

    @property
    def in_channels(self) -> int:
        return self.weights.shape[2]

    @property
    def filters(self) -> int:
        return self.weights.shape[3]


@dataclass(frozen=True)
class DenseParams:
    """Fully connected layer parameters: weights (In, Out) plus bias (Out,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        _require_rank("dense weights", self.weights, 2)
        _require_rank("dense bias", self.bias, 1)
        if self.bias.shape[0] != self.weights.shape[1]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != output width {self.weights.shape[1]}"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ShapeError("dense parameters must be finite")

    @property
    def in_features(self) -> int:
        return self.weights.shape[0]

    @property
    def out_features(self) -> int:
        return self.weights.shape[1]


# ---------------------------------------------------------------------------
# Convolution (valid, stride 1, 3x3)
# ---------------------------------------------------------------------------

def _check_conv_input(x: np.ndarray, kernel: ConvKernel, spatial_axes=(0, 1)) -> None:
    h, w = x.shape[spatial_axes[0]], x.shape[spatial_axes[1]]
    if h < KERNEL_SIZE or w < KERNEL_SIZE:
        raise ShapeError(
            f"input spatial dims must be >= {KERNEL_SIZE}x{KERNEL_SIZE} for a valid "
            f"{KERNEL_SIZE}x{KERNEL_SIZE} convolution, got {h}x{w}"
        )
    c = x.shape[spatial_axes[1] + 1]
    if c != kernel.in_channels:
        raise ShapeError(f"input has {c} channels but kernel expects {kernel.in_channels}")


def _im2col(x: np.ndarray, ho: int, wo: int) -> np.ndarray:
    """Gather all 3x3 receptive fields into rows of a (B*ho*wo, 9*C) matrix."""
    b, _, _, c = x.shape
    s0, s1, s2, s3 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x, (b, ho, wo, KERNEL_SIZE, KERNEL_SIZE, c), (s0, s1, s2, s1, s2, s3),
        writeable=False,
    )
    return windows.reshape(b * ho * wo, KERNEL_SIZE * KERNEL_SIZE * c)


def conv2d_forward_batch(x: np.ndarray, kernel: ConvKernel) -> np.ndarray:
    """Valid 3x3 convolution over a batch (B, H, W, Cin) -> (B, H-2, W-2, F).

    Fast path: im2col plus a single GEMM per layer, at the input dtype.
    """
    _require_rank("input", x, 4)
    _check_conv_input(x, kernel, spatial_axes=(1, 2))
    b, h, w, c = x.shape
    ho, wo = h - KERNEL_SIZE + 1, w - KERNEL_SIZE + 1
    f = kernel.filters

    dt = np.result_type(x, kernel.weights)
    xc = np.ascontiguousarray(x, dtype=dt)
    wmat = kernel.weights.astype(dt, copy=False).reshape(-1, f)
    out = _im2col(xc, ho, wo) @ wmat
    out += kernel.bias.astype(dt, copy=False)
    return out.reshape(b, ho, wo, f).astype(x.dtype, copy=False)


def conv2d_forward(x: np.ndarray, kernel: ConvKernel) -> np.ndarray:
    """Valid 3x3 convolution of one image (H, W, Cin) -> (H-2, W-2, F)."""
    _require_rank("input", x, 3)
    _check_conv_input(x, kernel)
    return conv2d_forward_batch(x[None], kernel)[0]


def conv2d_forward_direct(x: np.ndarray, kernel: ConvKernel) -> np.ndarray:
    """Reference convolution: explicit loops over every output and tap.

    Orders of magnitude slower than :func:`conv2d_forward`; exists as the
    independent implementation the fast path is checked against. Only
    sensible on small tensors.
    """
    _require_rank("input", x, 3)
    _check_conv_input(x, kernel)
    h, w, c = x.shape
    k = KERNEL_SIZE
    f = kernel.filters
    out = np.empty((h - k + 1, w - k + 1, f), dtype=np.float64)
    for i in range(h - k + 1):
        for j in range(w - k + 1):
            for fi in range(f):
                acc = float(kernel.bias[fi])
                for a in range(k):
                    for bb in range(k):
                        for ci in range(c):
                            acc += float(x[i + a, j + bb, ci]) * float(kernel.weights[a, bb, ci, fi])
                out[i, j, fi] = acc
    return out.astype(x.dtype, copy=False)


def conv2d_backward_batch(x: np.ndarray, kernel: ConvKernel, grad_out: np.ndarray):
    """Gradients of conv2d_forward_batch summed over the batch.

    Returns ``(grad_input, grad_weights, grad_bias)`` with shapes mirroring
    the primals.
    """
    _require_rank("input", x, 4)
    _require_rank("grad_out", grad_out, 4)
    _check_conv_input(x, kernel, spatial_axes=(1, 2))
    b, h, w, c = x.shape
    ho, wo = h - KERNEL_SIZE + 1, w - KERNEL_SIZE + 1
    f = kernel.filters
    if grad_out.shape != (b, ho, wo, f):
        raise ShapeError(
            f"grad_out shape {grad_out.shape} does not match forward output {(b, ho, wo, f)}"
        )

    dt = np.result_type(x, kernel.weights, grad_out)
    xc = np.ascontiguousarray(x, dtype=dt)
    wmat = kernel.weights.astype(dt, copy=False).reshape(-1, f)
    go = grad_out.astype(dt, copy=False)
    go_flat = go.reshape(-1, f)

    grad_b = go.sum(axis=(0, 1, 2), dtype=np.float64)
    cols = _im2col(xc, ho, wo)
    grad_w = (cols.T @ go_flat).reshape(KERNEL_SIZE, KERNEL_SIZE, c, f)
    grad_cols = (go_flat @ wmat.T).reshape(b, ho, wo, KERNEL_SIZE, KERNEL_SIZE, c)
    grad_x = np.zeros((b, h, w, c), dtype=dt)
    for a in range(KERNEL_SIZE):
        for bb in range(KERNEL_SIZE):
            grad_x[:, a:a + ho, bb:bb + wo, :] += grad_cols[:, :, :, a, bb, :]

    return (
        grad_x.astype(x.dtype, copy=False),
        grad_w.astype(kernel.weights.dtype, copy=False),
        grad_b.astype(kernel.bias.dtype, copy=False),
    )


def conv2d_backward(x: np.ndarray, kernel: ConvKernel, grad_out: np.ndarray):
    """Gradients of conv2d_forward for one image."""
    _require_rank("input", x, 3)
    _require_rank("grad_out", grad_out, 3)
    gx, gw, gb = conv2d_backward_batch(x[None], kernel, grad_out[None])
    return gx[0], gw, gb


# ---------------------------------------------------------------------------
# ReLU
# ---------------------------------------------------------------------------

def relu_forward(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x); shape and dtype preserved."""
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass gradient where x > 0, zero elsewhere (subgradient 0 at exactly 0)."""
    if x.shape != grad_out.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != input shape {x.shape}")
    return grad_out * (x > 0)


# ---------------------------------------------------------------------------
# 2x2 max pooling (non-overlapping, floor semantics)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoolIndex:
    """Bookkeeping from a pooling forward pass for the matching backward.

    ``idx`` holds the within-window argmax (0..3, row-major) per output cell;
    ``input_shape`` remembers the pre-pool shape including any dropped
    trailing odd row/column.
    """

    input_shape: tuple
    idx: np.ndarray


_POOL_OFFSETS = ((0, 0), (0, 1), (1, 0), (1, 1))  # row-major within-window order


def _pool_corners(x: np.ndarray, h2: int, w2: int):
    return [x[:, dr:2 * h2:2, dc:2 * w2:2, :] for dr, dc in _POOL_OFFSETS]


def maxpool2x2_forward_batch(x: np.ndarray):
    """2x2 max pool over a batch (B, H, W, C) -> (B, H//2, W//2, C) plus indices."""
    _require_rank("input", x, 4)
    _, h, w, _ = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"pooling needs spatial dims >= 2x2, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    c0, c1, c2, c3 = _pool_corners(x, h2, w2)
    out = np.maximum(np.maximum(c0, c1), np.maximum(c2, c3))
    # First maximum in row-major window order wins, matching argmax semantics.
    idx = np.where(
        c0 == out, np.uint8(0),
        np.where(c1 == out, np.uint8(1), np.where(c2 == out, np.uint8(2), np.uint8(3))),
    )
    return out, PoolIndex(input_shape=x.shape, idx=idx)


def maxpool2x2_forward(x: np.ndarray):
    """2x2 max pool of one feature map (H, W, C); trailing odd row/col dropped."""
    _require_rank("input", x, 3)
    out, pidx = maxpool2x2_forward_batch(x[None])
    return out[0], PoolIndex(input_shape=x.shape, idx=pidx.idx[0])


def maxpool2x2_backward_batch(pidx: PoolIndex, grad_out: np.ndarray) -> np.ndarray:
    """Route each grad_out entry to its argmax position; zeros elsewhere."""
    if grad_out.shape != pidx.idx.shape:
        raise ShapeError(
            f"grad_out shape {grad_out.shape} does not match pooled shape {pidx.idx.shape}"
        )
    b, h, w, c = pidx.input_shape
    h2, w2 = h // 2, w // 2
    grad_x = np.zeros((b, h, w, c), dtype=grad_out.dtype)
    for k, corner in enumerate(_pool_corners(grad_x, h2, w2)):
        np.copyto(corner, grad_out, where=(pidx.idx == k))
    return grad_x


def maxpool2x2_backward(pidx: PoolIndex, grad_out: np.ndarray) -> np.ndarray:
    """Backward of the single-image pooling forward."""
    _require_rank("grad_out", grad_out, 3)
    if len(pidx.input_shape) != 3:
        raise ShapeError("pool index was produced by the batched forward")
    batched = PoolIndex(input_shape=(1, *pidx.input_shape), idx=pidx.idx[None])
    return maxpool2x2_backward_batch(batched, grad_out[None])[0]


# ---------------------------------------------------------------------------
# Flatten
# ---------------------------------------------------------------------------

def flatten(x: np.ndarray) -> np.ndarray:
    """Row-major flatten to rank 1; values unchanged."""
    return x.reshape(-1)


def unflatten(x: np.ndarray, shape) -> np.ndarray:
    """Inverse of :func:`flatten`; restores the original shape exactly."""
    return x.reshape(shape)


# ---------------------------------------------------------------------------
# Dense
# ---------------------------------------------------------------------------

def dense_forward_batch(x: np.ndarray, p: DenseParams) -> np.ndarray:
    """(B, In) @ (In, Out) + bias, accumulated at the input dtype."""
    _require_rank("input", x, 2)
    if x.shape[1] != p.in_features:
        raise ShapeError(f"input width {x.shape[1]} != dense input size {p.in_features}")
    dt = np.result_type(x, p.weights)
    out = x.astype(dt, copy=False) @ p.weights.astype(dt, copy=False)
    out += p.bias.astype(dt, copy=False)
    return out.astype(x.dtype, copy=False)


def dense_forward(x: np.ndarray, p: DenseParams) -> np.ndarray:
    """x^T W + b for a single feature vector."""
    _require_rank("input", x, 1)
    return dense_forward_batch(x[None], p)[0]


def dense_backward_batch(x: np.ndarray, p: DenseParams, grad_out: np.ndarray):
    """Gradients of dense_forward_batch summed over the batch."""
    _require_rank("input", x, 2)
    _require_rank("grad_out", grad_out, 2)
    if x.shape[1] != p.in_features:
        raise ShapeError(f"input width {x.shape[1]} != dense input size {p.in_features}")
    if grad_out.shape != (x.shape[0], p.out_features):
        raise ShapeError(
            f"grad_out shape {grad_out.shape} does not match ({x.shape[0]}, {p.out_features})"
        )
    dt = np.result_type(x, p.weights, grad_out)
    xd = x.astype(dt, copy=False)
    wd = p.weights.astype(dt, copy=False)
    god = grad_out.astype(dt, copy=False)
    grad_x = god @ wd.T
    grad_w = xd.T @ god
    grad_b = god.sum(axis=0, dtype=np.float64)
    return (
        grad_x.astype(x.dtype, copy=False),
        grad_w.astype(p.weights.dtype, copy=False),
        grad_b.astype(p.bias.dtype, copy=False),
    )


def dense_backward(x: np.ndarray, p: DenseParams, grad_out: np.ndarray):
    """grad_x = W grad_out, grad_W = outer(x, grad_out), grad_b = grad_out."""
    _require_rank("input", x, 1)
    _require_rank("grad_out", grad_out, 1)
    gx, gw, gb = dense_backward_batch(x[None], p, grad_out[None])
    return gx[0], gw, gb


# ---------------------------------------------------------------------------
# Sigmoid and binary cross-entropy
# ---------------------------------------------------------------------------

def sigmoid(x: float) -> float:
    """Numerically stable logistic function; exact 0.5 at 0, no overflow."""
    xf = float(x)
    if xf >= 0.0:
        return 1.0 / (1.0 + math.exp(-xf))
    e = math.exp(xf)
    return e / (1.0 + e)


def sigmoid_vec(x: np.ndarray) -> np.ndarray:
    """Stable elementwise sigmoid at float64."""
    x64 = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x64)
    pos = x64 >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x64[pos]))
    e = np.exp(x64[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def bce_loss(y_hat: float, y: int) -> float:
    """Binary cross-entropy for one sample; y_hat clamped away from {0, 1}."""
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y!r}")
    p = min(max(float(y_hat), BCE_CLAMP), 1.0 - BCE_CLAMP)
    return -math.log(p) if y == 1 else -math.log1p(-p)


def bce_loss_mean(y_hat: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy over a batch, computed at float64."""
    p = np.clip(np.asarray(y_hat, dtype=np.float64), BCE_CLAMP, 1.0 - BCE_CLAMP)
    y64 = np.asarray(y, dtype=np.float64)
    return float(-(y64 * np.log(p) + (1.0 - y64) * np.log1p(-p)).mean())


# ---------------------------------------------------------------------------
# RMSprop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RmsPropState:
    """Per-parameter squared-gradient accumulator plus the update constants."""

    v: np.ndarray
    rho: float = 0.9
    epsilon: float = 1e-7
    learning_rate: float = 0.001


def init_rmsprop(param: np.ndarray, learning_rate: float = 0.001,
                 rho: float = 0.9, epsilon: float = 1e-7) -> RmsPropState:
    """Fresh optimizer state (v = 0) for one parameter tensor."""
    return RmsPropState(
        v=np.zeros_like(param), rho=rho, epsilon=epsilon, learning_rate=learning_rate
    )


def rmsprop_step(param: np.ndarray, grad: np.ndarray, state: RmsPropState):
    """One update: v <- rho v + (1-rho) g^2; param <- param - lr g / (sqrt(v) + eps).

    Pure: returns (new_param, new_state). Math at float64, results stored in
    the parameter dtype so a persisted state resumes bit-identically.
    """
    if param.shape != grad.shape:
        raise ShapeError(f"grad shape {grad.shape} != param shape {param.shape}")
    if state.v.shape != param.shape:
        raise ShapeError(f"optimizer state shape {state.v.shape} != param shape {param.shape}")
    g = grad.astype(np.float64, copy=False)
    v_new = state.rho * state.v.astype(np.float64, copy=False) + (1.0 - state.rho) * g * g
    p_new = param.astype(np.float64, copy=False) - state.learning_rate * g / (np.sqrt(v_new) + state.epsilon)
    return (
        p_new.astype(param.dtype, copy=False),
        replace(state, v=v_new.astype(param.dtype, copy=False)),
    )
