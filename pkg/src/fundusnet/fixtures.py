"""Synthetic fixtures: the separable overfit set and label-file generators.

The overfit fixture is 16 training images built to be trivially separable
(diseased = bright blob on a dark field, healthy = uniformly dark) plus a
small validation/test tail, so a correct training loop drives its loss
near zero within a couple hundred steps. Everything is deterministic in
the seed, and the on-disk variant round-trips through real PNG encoding.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .data import DatasetSplit, ImageRecord, INPUT_SIZE, write_manifest

# The 45 disease-code columns of the public retinal fundus multi-disease
# label schema, in file order.
DISEASE_CODES = (
    "DR", "ARMD", "MH", "DN", "MYA", "BRVO", "TSLN", "ERM", "LS", "MS",
    "CSR", "ODC", "CRVO", "TV", "AH", "ODP", "ODE", "ST", "AION", "PT",
    "RT", "RS", "CRS", "EDN", "RPEC", "MHL", "RP", "CWS", "CB", "ODPM",
    "PRH", "MNF", "HR", "CRAO", "TD", "CME", "PTCR", "CF", "VH", "MCA",
    "VS", "BRAO", "PLQ", "HPED", "CL",
)

LABEL_HEADER = ("ID", "Disease_Risk", *DISEASE_CODES)


def _blob_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """Dark field with one bright disc; uint8-quantized like a real PNG."""
    base = rng.uniform(0.02, 0.10) + rng.uniform(0.0, 0.03, (size, size, 3))
    cy, cx = rng.uniform(0.3 * size, 0.7 * size, 2)
    radius = rng.uniform(0.15 * size, 0.30 * size)
    yy, xx = np.mgrid[0:size, 0:size]
    disc = ((yy - cy) ** 2 + (xx - cx) ** 2) <= radius ** 2
    img = base
    img[disc] = rng.uniform(0.85, 1.0)
    quantized = np.clip(img * 255.0, 0, 255).astype(np.uint8)
    return quantized.astype(np.float32) / np.float32(255.0)


def _dark_image(rng: np.random.Generator, size: int) -> np.ndarray:
    base = rng.uniform(0.05, 0.15) + rng.uniform(0.0, 0.05, (size, size, 3))
    quantized = np.clip(base * 255.0, 0, 255).astype(np.uint8)
    return quantized.astype(np.float32) / np.float32(255.0)


def overfit_records(seed: int = 7, size: int = INPUT_SIZE):
    """(records_by_id, split) for the separable smoke fixture.

    16 train images (8 diseased, 8 healthy), 2 validation, 2 test; parts
    are disjoint as the split contract requires.
    """
    rng = np.random.default_rng(seed)
    records = {}
    assignments = []
    counts = {"train": 8, "validation": 1, "test": 1}
    for part in ("train", "validation", "test"):
        for klass in (1, 0):
            for i in range(counts[part]):
                image_id = f"fx_{part[:2]}_{'d' if klass else 'h'}{i:02d}"
                pixels = _blob_image(rng, size) if klass else _dark_image(rng, size)
                records[image_id] = ImageRecord(id=image_id, pixels=pixels, label=klass)
                assignments.append((image_id, part))
    split = DatasetSplit(
        train=tuple(i for i, p in assignments if p == "train"),
        validation=tuple(i for i, p in assignments if p == "validation"),
        test=tuple(i for i, p in assignments if p == "test"),
        seed=seed,
    )
    return records, split


def write_overfit_fixture(out_dir, seed: int = 7) -> dict:
    """Write the overfit fixture to disk: images/, labels.csv, manifest.tsv."""
    records, split = overfit_records(seed=seed)
    images_dir = os.path.join(out_dir, "images")
    os.makedirs(images_dir, exist_ok=True)
    for image_id, rec in records.items():
        arr = np.round(rec.pixels * 255.0).astype(np.uint8)
        Image.fromarray(arr, mode="RGB").save(os.path.join(images_dir, f"{image_id}.png"))
    labels_path = os.path.join(out_dir, "labels.csv")
    with open(labels_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(LABEL_HEADER) + "\n")
        for image_id, rec in records.items():
            flags = ["0"] * len(DISEASE_CODES)
            if rec.label == 1:
                flags[0] = "1"
            fh.write(f"{image_id},{rec.label}," + ",".join(flags) + "\n")
    manifest_path = os.path.join(out_dir, "manifest.tsv")
    write_manifest(split, manifest_path)
    return {"images_dir": images_dir, "labels": labels_path, "manifest": manifest_path}


def write_synthetic_labels(path, n: int, seed: int = 0, diseased_fraction: float = 0.8) -> list:
    """A label CSV with ``n`` plausible rows; returns the ids written."""
    rng = np.random.default_rng(seed)
    ids = [f"img{i:05d}" for i in range(1, n + 1)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(LABEL_HEADER) + "\n")
        for image_id in ids:
            diseased = int(rng.random() < diseased_fraction)
            flags = np.zeros(len(DISEASE_CODES), dtype=int)
            if diseased:
                flags[rng.integers(0, len(DISEASE_CODES))] = 1
            fh.write(f"{image_id},{diseased}," + ",".join(map(str, flags)) + "\n")
    return ids
