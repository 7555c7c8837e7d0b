"""Shared fixtures: synthetic images, small record sets, score fixtures."""

import io

import numpy as np
import pytest
from PIL import Image

from fundusnet.data import DatasetSplit, ImageRecord


def png_bytes(array_uint8: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(array_uint8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture
def solid_png():
    def make(value: int, size: int = 150) -> bytes:
        return png_bytes(np.full((size, size, 3), value, dtype=np.uint8))
    return make


# Synthetic score/label set engineered to land exactly on the published
# confusion matrix at threshold 0.5: tn=7, fp=83, fn=45, tp=505 (n=640).
def confusion_fixture():
    scores = np.concatenate([
        np.full(7, 0.1), np.full(83, 0.9),    # actual healthy
        np.full(45, 0.1), np.full(505, 0.9),  # actual diseased
    ])
    labels = np.concatenate([np.zeros(90, dtype=int), np.ones(550, dtype=int)])
    return scores, labels


@pytest.fixture
def table_scores():
    return confusion_fixture()


def tiny_records(n: int = 12, side: int = 12, seed: int = 0):
    """Small in-memory records sized for the shrunken model config."""
    rng = np.random.default_rng(seed)
    records = {}
    train, val, test = [], [], []
    for i in range(n):
        label = i % 2
        base = rng.uniform(0.6, 0.9) if label else rng.uniform(0.0, 0.25)
        pixels = np.clip(base + rng.uniform(-0.05, 0.05, (side, side, 3)), 0, 1).astype(np.float32)
        rid = f"t{i:02d}"
        records[rid] = ImageRecord(id=rid, pixels=pixels, label=label)
        (train if i < n - 4 else (val if i < n - 2 else test)).append(rid)
    split = DatasetSplit(train=tuple(train), validation=tuple(val), test=tuple(test), seed=seed)
    return records, split


@pytest.fixture
def small_dataset():
    return tiny_records()
