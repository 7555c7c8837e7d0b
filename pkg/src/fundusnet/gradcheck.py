"""Finite-difference verification of the hand-derived backward passes.

The harness recomputes everything at float64 (the kernels preserve input
dtype) and compares analytic gradients against central differences with a
fixed step. It is independent of the backward code it checks: the numeric
side only ever calls forward passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import network, ops

FD_STEP = 1e-3
MODEL_TOLERANCE = 1e-4
REL_ERR_FLOOR = 1e-6


def numeric_gradient(f, arr: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of scalar ``f()`` w.r.t. ``arr`` (in place).

    ``f`` must read ``arr`` by reference; entries are perturbed one at a
    time and restored exactly.
    """
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = f()
        flat[i] = orig - step
        f_minus = f()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = REL_ERR_FLOOR) -> float:
    """max over entries of |a - b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    max_rel_err: float
    passed: bool


def _to_float64(weights: network.ModelWeights) -> network.ModelWeights:
    params = {name: arr.astype(np.float64) for name, arr in weights.parameters()}
    return network.weights_from_params(weights.config, params, seed=weights.seed)


def check_model_gradients(config: network.ModelConfig = network.GRADCHECK_CONFIG,
                          seed: int = 0,
                          step: float = FD_STEP,
                          tolerance: float = MODEL_TOLERANCE,
                          corrupt: str | None = None) -> list:
    """Compare every parameter gradient against finite differences.

    Returns one GradCheckResult per parameter tensor. ``corrupt`` names a
    parameter whose analytic gradient gets scaled by 1.01 before the
    comparison; it exists so tests can confirm the harness actually detects
    a wrong backward pass.
    """
    weights = _to_float64(network.init_weights(config, seed))
    rng = np.random.default_rng(seed + 1)
    image = rng.uniform(0.0, 1.0, config.input_shape)
    y = int(rng.integers(0, 2))

    analytic, _ = network.backward(weights, image, y)
    if corrupt is not None:
        if corrupt not in analytic:
            raise KeyError(f"unknown parameter {corrupt!r}")
        analytic = dict(analytic)
        analytic[corrupt] = analytic[corrupt] * 1.01

    def loss() -> float:
        return ops.bce_loss(network.forward(weights, image), y)

    results = []
    for name, arr in weights.parameters():
        numeric = numeric_gradient(loss, arr, step=step)
        err = relative_error(analytic[name], numeric)
        results.append(GradCheckResult(name=name, max_rel_err=err, passed=err < tolerance))
    return results


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'parameter'.ljust(width)}  max_rel_err  status"]
    for r in results:
        status = "pass" if r.passed else "FAIL"
        lines.append(f"{r.name.ljust(width)}  {r.max_rel_err:.3e}    {status}")
    return "\n".join(lines)
