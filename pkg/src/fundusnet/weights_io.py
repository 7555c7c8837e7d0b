"""Portable binary container for model weights and training checkpoints.

Layout (all integers little-endian):

    magic           4 bytes  b"FNWB"
    format version  u32      currently 1
    kind            u8       0 = weights file, 1 = training checkpoint
    config block             input H/W/C (u32 x3), conv filter counts
                             (u8 count + u32 each), dense units
                             (u8 count + u32 each)
    fingerprint     16 bytes sha256 of the canonical config string
    seed            i64      init seed recorded in the weights
    record count    u32
    records                  name (u16 len + utf-8), rank (u8),
                             dims (u32 x rank), raw float32 data
    meta            u32 len + utf-8 JSON (checkpoint cursors etc.)
    checksum        u32      crc32 over every preceding byte

Loading verifies, in order: magic, version, structure, checksum, and
(optionally) that the stored config matches the one the caller expects.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from . import network
from .errors import (
    BadMagicError,
    ChecksumError,
    CorruptFileError,
    FingerprintMismatchError,
    VersionMismatchError,
)

MAGIC = b"FNWB"
FORMAT_VERSION = 1
KIND_WEIGHTS = 0
KIND_CHECKPOINT = 1


def _pack_config(config: network.ModelConfig) -> bytes:
    h, w, c = config.input_shape
    out = struct.pack("<III", h, w, c)
    out += struct.pack("<B", len(config.conv_filters))
    out += struct.pack(f"<{len(config.conv_filters)}I", *config.conv_filters)
    out += struct.pack("<B", len(config.dense_units))
    if config.dense_units:
        out += struct.pack(f"<{len(config.dense_units)}I", *config.dense_units)
    return out


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CorruptFileError(
                f"file truncated: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.blob) - self.pos}"
            )
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_config(r: _Reader) -> network.ModelConfig:
    h, w, c = r.unpack("<III")
    (n_conv,) = r.unpack("<B")
    conv = r.unpack(f"<{n_conv}I") if n_conv else ()
    (n_dense,) = r.unpack("<B")
    dense = r.unpack(f"<{n_dense}I") if n_dense else ()
    return network.ModelConfig(input_shape=(h, w, c), conv_filters=conv, dense_units=dense)


def write_container(path, kind: int, config: network.ModelConfig,
                    arrays, seed: int = 0, meta: dict | None = None) -> None:
    """Serialize named float32 arrays plus JSON metadata to ``path``."""
    body = bytearray()
    body += MAGIC
    body += struct.pack("<I", FORMAT_VERSION)
    body += struct.pack("<B", kind)
    body += _pack_config(config)
    body += config.fingerprint()
    body += struct.pack("<q", seed)
    arrays = list(arrays)
    body += struct.pack("<I", len(arrays))
    for name, arr in arrays:
        data = np.ascontiguousarray(arr, dtype=np.float32)
        encoded = name.encode("utf-8")
        body += struct.pack("<H", len(encoded))
        body += encoded
        body += struct.pack("<B", data.ndim)
        body += struct.pack(f"<{data.ndim}I", *data.shape)
        body += data.tobytes()
    meta_blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    body += struct.pack("<I", len(meta_blob))
    body += meta_blob
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(body))


def read_container(path, expect_kind: int | None = None):
    """Parse and verify a container; returns (kind, config, arrays, seed, meta)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) or blob[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: not a fundusnet weights container")
    if len(blob) < len(MAGIC) + 8:
        raise CorruptFileError(f"{path}: file too short")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, this build reads {FORMAT_VERSION}"
        )
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    actual_crc = zlib.crc32(blob[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumError(
            f"{path}: checksum mismatch (stored {stored_crc:08x}, computed {actual_crc:08x})"
        )

    r = _Reader(blob[:-4])
    r.take(8)  # magic + version already verified
    (kind,) = r.unpack("<B")
    if expect_kind is not None and kind != expect_kind:
        kinds = {KIND_WEIGHTS: "weights file", KIND_CHECKPOINT: "checkpoint"}
        raise CorruptFileError(
            f"{path}: is a {kinds.get(kind, f'kind-{kind} file')}, "
            f"expected a {kinds.get(expect_kind)}"
        )
    config = _read_config(r)
    fingerprint = r.take(16)
    if fingerprint != config.fingerprint():
        raise FingerprintMismatchError(f"{path}: fingerprint does not match stored config")
    (seed,) = r.unpack("<q")
    (n_records,) = r.unpack("<I")
    arrays = []
    for _ in range(n_records):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<B")
        shape = r.unpack(f"<{rank}I") if rank else ()
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = r.take(4 * count)
        arrays.append((name, np.frombuffer(raw, dtype="<f4").reshape(shape).copy()))
    (meta_len,) = r.unpack("<I")
    meta = json.loads(r.take(meta_len).decode("utf-8"))
    if r.pos != len(r.blob):
        raise CorruptFileError(f"{path}: {len(r.blob) - r.pos} unexpected trailing bytes")
    return kind, config, arrays, seed, meta


def save_weights(weights: network.ModelWeights, path) -> None:
    """Persist model weights; load_weights(save_weights(w)) is bit-exact."""
    write_container(
        path, KIND_WEIGHTS, weights.config, weights.parameters(), seed=weights.seed,
        meta={"parameter_count": weights.param_count()},
    )


def load_weights(path, expect_config: network.ModelConfig | None = None) -> network.ModelWeights:
    """Load a weights file; errors are distinct per failure mode.

    If ``expect_config`` is given the stored config must match it exactly,
    otherwise the file's own config is used.
    """
    _, config, arrays, seed, _ = read_container(path, expect_kind=KIND_WEIGHTS)
    if expect_config is not None and config != expect_config:
        raise FingerprintMismatchError(
            f"{path}: stores weights for config '{config.canonical_string()}', "
            f"expected '{expect_config.canonical_string()}'"
        )
    try:
        return network.weights_from_params(config, dict(arrays), seed=seed)
    except Exception as exc:
        raise CorruptFileError(f"{path}: stored tensors are inconsistent: {exc}") from exc


def file_checksum(path) -> str:
    """Hex of the container's stored integrity checksum (crc32 of the body).

    Used as the served model version tag. Hashing the body rather than the
    whole file matters: appending a CRC to a message fixes the CRC of the
    concatenation at a constant residue.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise CorruptFileError(f"{path}: file too short")
    return f"{zlib.crc32(blob[:-4]) & 0xFFFFFFFF:08x}"
