"""Dataset ingestion: labels, deterministic splits, decoding, augmentation.

The label file is a CSV with header ``ID, Disease_Risk, <disease-code
columns>`` and 0/1 integer cells; images live in a directory as
``<ID>.png`` (JPEG accepted). Splits are persisted as tab-separated
manifests so they are auditable and shareable. Every stage is a pure
function of its inputs and seeds: two runs produce identical batches.
"""

from __future__ import annotations

import csv
import io
import os
import warnings
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DataFormatError, ImageDecodeError

INPUT_SIZE = 150
INPUT_SHAPE = (INPUT_SIZE, INPUT_SIZE, 3)

REQUIRED_COLUMNS = ("ID", "Disease_Risk")

MANIFEST_HEADER = "# fundusnet-split v1"
PARTS = ("train", "validation", "test")


class DataQualityWarning(UserWarning):
    """A label row is internally inconsistent but still usable."""


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabelRow:
    """One labelled image: id, overall disease risk, per-disease flags."""

    id: str
    disease_risk: int
    flags: dict


def _parse_binary(cell: str, line_no: int, column: str) -> int:
    value = cell.strip()
    if value not in ("0", "1"):
        raise DataFormatError(f"line {line_no}: column {column!r} must be 0 or 1, got {cell!r}")
    return int(value)


def load_labels(path) -> list:
    """Parse a label CSV into LabelRow objects, rejecting malformed rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty label file")
        columns = [c.strip() for c in header]
        for pos, required in enumerate(REQUIRED_COLUMNS):
            if pos >= len(columns) or columns[pos] != required:
                raise DataFormatError(
                    f"{path}: missing required column {required!r} at position {pos + 1}"
                )
        disease_columns = columns[len(REQUIRED_COLUMNS):]
        if not disease_columns:
            raise DataFormatError(f"{path}: no disease-code columns after {REQUIRED_COLUMNS}")

        rows = []
        seen = set()
        for line_no, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(columns):
                raise DataFormatError(
                    f"line {line_no}: expected {len(columns)} cells, got {len(record)}"
                )
            image_id = record[0].strip()
            if not image_id:
                raise DataFormatError(f"line {line_no}: empty ID")
            if image_id in seen:
                raise DataFormatError(f"line {line_no}: duplicate id {image_id!r}")
            seen.add(image_id)
            risk = _parse_binary(record[1], line_no, "Disease_Risk")
            flags = {
                col: _parse_binary(cell, line_no, col)
                for col, cell in zip(disease_columns, record[2:])
            }
            rows.append(LabelRow(id=image_id, disease_risk=risk, flags=flags))
    return rows


def binary_label(row: LabelRow) -> int:
    """Diseased iff the risk column or any per-disease flag says so.

    A set flag with Disease_Risk=0 is contradictory; the row counts as
    diseased and a DataQualityWarning is emitted.
    """
    flagged = any(row.flags.values())
    if flagged and row.disease_risk == 0:
        warnings.warn(
            DataQualityWarning(
                f"id {row.id!r}: a disease flag is set but Disease_Risk is 0; treating as diseased"
            ),
            stacklevel=2,
        )
        return 1
    return row.disease_risk


# ---------------------------------------------------------------------------
# Split
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/validation/test id lists plus the seed that made them."""

    train: tuple
    validation: tuple
    test: tuple
    seed: int

    def part(self, name: str):
        if name not in PARTS:
            raise ValueError(f"unknown part {name!r}, expected one of {PARTS}")
        return getattr(self, name)

    @property
    def all_ids(self):
        return (*self.train, *self.validation, *self.test)


def split_dataset(ids: Iterable[str], ratios=(0.6, 0.2, 0.2), seed: int = 0) -> DatasetSplit:
    """Seeded shuffle then contiguous partition: floor/floor/remainder sizes."""
    ids = list(ids)
    if not ids:
        raise DataFormatError("cannot split an empty id list")
    if len(set(ids)) != len(ids):
        raise DataFormatError("duplicate ids in split input")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    ordered = sorted(ids)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    shuffled = [ordered[i] for i in perm]
    n = len(shuffled)
    n_train = int(ratios[0] * n)
    n_val = int(ratios[1] * n)
    return DatasetSplit(
        train=tuple(shuffled[:n_train]),
        validation=tuple(shuffled[n_train:n_train + n_val]),
        test=tuple(shuffled[n_train + n_val:]),
        seed=seed,
    )


def write_manifest(split: DatasetSplit, path) -> None:
    """Persist a split as `<id>\\t<part>` lines with a seed header."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{MANIFEST_HEADER}\n")
        fh.write(f"# seed={split.seed}\n")
        fh.write(f"# counts={len(split.train)}/{len(split.validation)}/{len(split.test)}\n")
        for part in PARTS:
            for image_id in split.part(part):
                fh.write(f"{image_id}\t{part}\n")


def read_manifest(path) -> DatasetSplit:
    parts = {name: [] for name in PARTS}
    seed = None
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != MANIFEST_HEADER:
            raise DataFormatError(f"{path}: not a split manifest (bad header line)")
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("# ")
                if body.startswith("seed="):
                    seed = int(body[len("seed="):])
                continue
            cells = line.split("\t")
            if len(cells) != 2:
                raise DataFormatError(f"{path} line {line_no}: expected '<id>\\t<part>'")
            image_id, part = cells
            if part not in PARTS:
                raise DataFormatError(f"{path} line {line_no}: unknown part {part!r}")
            parts[part].append(image_id)
    if seed is None:
        raise DataFormatError(f"{path}: manifest is missing its seed header")
    return DatasetSplit(
        train=tuple(parts["train"]),
        validation=tuple(parts["validation"]),
        test=tuple(parts["test"]),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------

def decode_and_resize(data: bytes) -> np.ndarray:
    """PNG/JPEG bytes -> float32 (150, 150, 3) in [0, 1] (bilinear resize)."""
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise ImageDecodeError(f"cannot decode image bytes: {exc}") from exc
    try:
        img = img.convert("RGB")
    except Exception as exc:
        raise ImageDecodeError(f"cannot convert image to RGB: {exc}") from exc
    if img.size != (INPUT_SIZE, INPUT_SIZE):
        img = img.resize((INPUT_SIZE, INPUT_SIZE), Image.Resampling.BILINEAR)
    return np.asarray(img, dtype=np.float32) / np.float32(255.0)


@dataclass(frozen=True)
class ImageRecord:
    """A decoded, labelled image ready for the model."""

    id: str
    pixels: np.ndarray
    label: int

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise DataFormatError(f"id {self.id!r}: pixels must be (H, W, 3), got {self.pixels.shape}")
        if self.label not in (0, 1):
            raise DataFormatError(f"id {self.id!r}: label must be 0 or 1, got {self.label!r}")
        lo, hi = float(self.pixels.min()), float(self.pixels.max())
        if lo < 0.0 or hi > 1.0:
            raise DataFormatError(f"id {self.id!r}: pixel values outside [0, 1] ({lo}..{hi})")


IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


def _image_path(images_dir, image_id: str):
    for ext in IMAGE_EXTENSIONS:
        candidate = os.path.join(images_dir, image_id + ext)
        if os.path.exists(candidate):
            return candidate
    return None


def load_records(rows: Sequence[LabelRow], images_dir, ids=None) -> dict:
    """Decode images for the given ids (default: all rows) keyed by id."""
    by_id = {row.id: row for row in rows}
    wanted = list(ids) if ids is not None else [row.id for row in rows]
    records = {}
    for image_id in wanted:
        row = by_id.get(image_id)
        if row is None:
            raise DataFormatError(f"id {image_id!r} is not present in the label file")
        path = _image_path(images_dir, image_id)
        if path is None:
            raise DataFormatError(
                f"image file for id {image_id!r} not found under {images_dir} "
                f"(tried {', '.join(IMAGE_EXTENSIONS)})"
            )
        with open(path, "rb") as fh:
            pixels = decode_and_resize(fh.read())
        records[image_id] = ImageRecord(id=image_id, pixels=pixels, label=binary_label(row))
    return records


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AugmentParams:
    """Random flip/rotation/zoom/shear settings plus the stream seed.

    The exact transform set the screening pipeline should use is a
    reconstruction (typical defaults for this kind of augmentation), so
    everything is configurable rather than hard-coded.
    """

    flip_prob: float = 0.5
    rotation_deg: float = 20.0
    zoom_frac: float = 0.1
    shear_deg: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must be in [0, 1]")
        if self.seed < 0:
            raise ValueError("augmentation seed must be non-negative")


def augment(img: np.ndarray, params: AugmentParams, draw_index: int) -> np.ndarray:
    """One augmented view, fully determined by (params.seed, draw_index).

    Draw order is fixed (flip, rotation, zoom, shear) so zeroed-out ranges
    do not shift the stream. Out-of-frame pixels take the nearest edge
    value; interpolation is bilinear; output stays float32 in [0, 1].
    """
    if draw_index < 0:
        raise ValueError("draw_index must be non-negative")
    rng = np.random.default_rng((params.seed, draw_index))
    flip = rng.random() < params.flip_prob
    angle = rng.uniform(-params.rotation_deg, params.rotation_deg)
    zoom = rng.uniform(1.0 - params.zoom_frac, 1.0 + params.zoom_frac)
    shear = rng.uniform(-params.shear_deg, params.shear_deg)

    out = img[:, ::-1, :] if flip else img
    if angle == 0.0 and zoom == 1.0 and shear == 0.0:
        return np.ascontiguousarray(out)

    theta = np.deg2rad(angle)
    sigma = np.deg2rad(shear)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    shr = np.array([[1.0, np.tan(sigma)], [0.0, 1.0]])
    mat2 = rot @ shr / zoom
    center = (np.asarray(out.shape[:2], dtype=np.float64) - 1.0) / 2.0
    offset2 = center - mat2 @ center

    matrix = np.eye(3)
    matrix[:2, :2] = mat2
    offset = np.array([offset2[0], offset2[1], 0.0])
    warped = ndimage.affine_transform(
        out, matrix, offset=offset, order=1, mode="nearest", output=np.float32
    )
    return np.clip(warped, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

def batches(records: Sequence[ImageRecord], batch_size: int, seed: int = 0,
            epoch: int = 0, augment_params: AugmentParams | None = None,
            draw_offset: int = 0, shuffle: bool = True) -> Iterator[tuple]:
    """One pass over the records in seeded order; final partial batch emitted.

    The order is a permutation keyed by (seed, epoch) when shuffling.
    Augmentation draw index for position k in the pass is draw_offset + k,
    so a consumer that chains passes keeps a gap-free augmentation stream.
    """
    records = list(records)
    if not records:
        raise DataFormatError("cannot iterate over an empty dataset part")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if shuffle:
        order = np.random.default_rng((seed, epoch)).permutation(len(records))
    else:
        order = np.arange(len(records))
    for start in range(0, len(records), batch_size):
        chunk = order[start:start + batch_size]
        images = np.empty((len(chunk), *records[0].pixels.shape), dtype=np.float32)
        labels = np.empty(len(chunk), dtype=np.int64)
        for j, rec_idx in enumerate(chunk):
            rec = records[rec_idx]
            if augment_params is not None:
                images[j] = augment(rec.pixels, augment_params, draw_offset + start + j)
            else:
                images[j] = rec.pixels
            labels[j] = rec.label
        yield images, labels
