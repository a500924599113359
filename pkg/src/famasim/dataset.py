"""FAMA-TX v1: flat binary tensor-exchange format for block datasets.

Little-endian layout:

    magic   4 bytes  b"FAMA"
    u8      version (1)
    u32     num_records
    u32     block_n          complex symbols per block
    u32     num_users        users simulated when the data was produced
    u32     k_sel_used       ports combined per symbol
    f32     aperture         wavelengths
    f32     snr_db
    payload num_records * [clean block | received block]

Each block is ``block_n`` complex samples stored as ``2 * block_n``
float32 values interleaved re, im.  The received block is the combiner
output normalized by the realized combiner gain, so
``received - clean`` is exactly the residual impairment seen after the
receiver front end.  Total file size is
``29 + num_records * 2 * (2 * block_n * 4)`` bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"FAMA"
VERSION = 1
_HEADER = struct.Struct("<4sBIIIIff")
HEADER_SIZE = _HEADER.size  # 29 bytes


@dataclass(frozen=True)
class Dataset:
    """An in-memory FAMA-TX v1 file."""

    clean: np.ndarray = field(repr=False)
    received: np.ndarray = field(repr=False)
    num_users: int
    k_sel_used: int
    aperture: float
    snr_db: float

    @property
    def num_records(self) -> int:
        return self.clean.shape[0]

    @property
    def block_n(self) -> int:
        return self.clean.shape[1]


def write_dataset(path, dataset: Dataset) -> None:
    """Serialize a dataset; blocks are cast to complex64 on the way out."""
    clean = np.asarray(dataset.clean, dtype="<c8")
    received = np.asarray(dataset.received, dtype="<c8")
    if clean.shape != received.shape or clean.ndim != 2:
        raise ValueError("clean and received must share a (records, n) shape")
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        clean.shape[0],
        clean.shape[1],
        dataset.num_users,
        dataset.k_sel_used,
        dataset.aperture,
        dataset.snr_db,
    )
    payload = np.stack([clean, received], axis=1)
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(payload.tobytes())


def read_dataset(path) -> Dataset:
    """Parse a FAMA-TX v1 file, validating magic, version, and size."""
    with open(path, "rb") as handle:
        raw = handle.read()
    if len(raw) < HEADER_SIZE:
        raise ValueError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, num_records, block_n, num_users, k_sel_used, aperture, snr_db = (
        _HEADER.unpack_from(raw)
    )
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expected = HEADER_SIZE + num_records * 2 * (2 * block_n * 4)
    if len(raw) != expected:
        raise ValueError(
            f"{path}: expected {expected} bytes for {num_records} records "
            f"of {block_n} samples, found {len(raw)}"
        )
    blocks = np.frombuffer(raw, dtype="<c8", offset=HEADER_SIZE)
    blocks = blocks.reshape(num_records, 2, block_n)
    return Dataset(
        clean=blocks[:, 0, :].copy(),
        received=blocks[:, 1, :].copy(),
        num_users=num_users,
        k_sel_used=k_sel_used,
        aperture=aperture,
        snr_db=snr_db,
    )
