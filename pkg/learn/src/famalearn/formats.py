"""Readers and writers for the interchange formats of the core simulator.

This package never imports the simulator; it talks to it exclusively
through two on-disk formats:

* "FAMA-TX v1" block datasets (magic ``FAMA``), each record holding the
  tagged user's clean transmitted block and the normalized post-combiner
  received block, so ``received - clean`` is the realized residual
  impairment after the receiver front end.
* The benchmark CSV result schema, one row per SER measurement.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"FAMA"
VERSION = 1
_HEADER = struct.Struct("<4sBIIIIff")
HEADER_SIZE = _HEADER.size

CSV_COLUMNS = (
    "scheme", "U", "K", "W", "ksel", "gamma_th", "spacing", "d", "cbr",
    "snr_db", "trials", "symbols", "errors", "ser", "ci_lo", "ci_hi",
    "seed", "wall_time_s",
)

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class BlockDataset:
    """One parsed FAMA-TX v1 file."""

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

    @property
    def residual(self) -> np.ndarray:
        """Realized post-combiner impairment, ``received - clean``."""
        return self.received - self.clean


def read_blocks(path) -> BlockDataset:
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
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    blocks = np.frombuffer(raw, dtype="<c8", offset=HEADER_SIZE)
    blocks = blocks.reshape(num_records, 2, block_n)
    return BlockDataset(
        clean=blocks[:, 0, :].astype(np.complex128),
        received=blocks[:, 1, :].astype(np.complex128),
        num_users=num_users,
        k_sel_used=k_sel_used,
        aperture=aperture,
        snr_db=snr_db,
    )


def write_blocks(path, dataset: BlockDataset) -> None:
    """Serialize a dataset in FAMA-TX v1 (used for synthetic test data)."""
    clean = np.asarray(dataset.clean, dtype="<c8")
    received = np.asarray(dataset.received, dtype="<c8")
    if clean.shape != received.shape or clean.ndim != 2:
        raise ValueError("clean and received must share a (records, n) shape")
    header = _HEADER.pack(
        MAGIC, VERSION, clean.shape[0], clean.shape[1],
        dataset.num_users, dataset.k_sel_used, dataset.aperture, dataset.snr_db,
    )
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(np.stack([clean, received], axis=1).tobytes())


def wilson_interval(errors: int, total: int) -> tuple[float, float]:
    """95% Wilson score interval for an error proportion."""
    if total <= 0:
        raise ValueError(f"total must be positive, got {total}")
    if not 0 <= errors <= total:
        raise ValueError(f"errors {errors} outside [0, {total}]")
    p = errors / total
    z2 = _Z95 * _Z95
    denom = 1.0 + z2 / total
    center = (p + z2 / (2.0 * total)) / denom
    half = (_Z95 / denom) * math.sqrt(p * (1.0 - p) / total + z2 / (4.0 * total * total))
    lo = 0.0 if errors == 0 else max(center - half, 0.0)
    hi = 1.0 if errors == total else min(center + half, 1.0)
    return lo, hi


def write_result_rows(path, rows, append: bool = False) -> None:
    """Write benchmark-schema CSV rows (dicts keyed by CSV_COLUMNS)."""
    mode = "a" if append else "w"
    with open(path, mode, newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=CSV_COLUMNS)
        if not append or handle.tell() == 0:
            writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_result_rows(path) -> list[dict]:
    """Read benchmark-schema CSV rows, converting numeric fields."""
    rows = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns in {path}")
        for raw in reader:
            row = dict(raw)
            for key in ("U", "K", "ksel", "trials", "symbols", "errors", "seed"):
                row[key] = int(raw[key])
            for key in ("W", "gamma_th", "d", "cbr", "snr_db", "ser", "ci_lo",
                        "ci_hi", "wall_time_s"):
                row[key] = float(raw[key])
            rows.append(row)
    return rows
