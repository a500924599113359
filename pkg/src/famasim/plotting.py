"""Plot SER sweep results from harness CSV files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from famasim.harness import SerRecord, read_records

# Columns a sweep can vary over, in auto-detection priority order.
_AXIS_COLUMNS = ("U", "K", "W", "d", "cbr", "snr_db")

_AXIS_LABELS = {
    "U": "number of users",
    "K": "number of ports",
    "W": "aperture (wavelengths)",
    "d": "port spacing fraction",
    "cbr": "channel bandwidth ratio",
    "snr_db": "average SNR (dB)",
}


def detect_axis(records: list[SerRecord]) -> str:
    """Pick the swept column: the one with the most distinct values."""
    best = "U"
    best_count = 0
    for column in _AXIS_COLUMNS:
        count = len({getattr(record, column) for record in records})
        if count > best_count:
            best, best_count = column, count
    return best


def plot_results(in_path, out_path, x_column: str | None = None) -> str:
    """Render SER-vs-axis curves (one per scheme) with a log SER axis.

    Zero-error points cannot be placed on a log axis and are skipped.
    Returns the column used for the x axis.
    """
    records = read_records(in_path)
    if not records:
        raise ValueError(f"{in_path} holds no records")
    if x_column is None:
        x_column = detect_axis(records)

    figure, axes = plt.subplots(figsize=(5.0, 3.6))
    markers = iter(("o", "s", "^", "v", "D", "x"))
    by_scheme: dict[str, list[SerRecord]] = {}
    for record in records:
        by_scheme.setdefault(record.scheme, []).append(record)
    for scheme, group in by_scheme.items():
        group = sorted(group, key=lambda record: getattr(record, x_column))
        xs = [getattr(record, x_column) for record in group if record.ser > 0]
        ys = [record.ser for record in group if record.ser > 0]
        errs = np.asarray(
            [
                (record.ser - record.ci_lo, record.ci_hi - record.ser)
                for record in group
                if record.ser > 0
            ]
        )
        if not xs:
            continue
        axes.errorbar(
            xs,
            ys,
            yerr=errs.T,
            marker=next(markers),
            capsize=2,
            label=scheme,
        )
    axes.set_yscale("log")
    axes.set_xlabel(_AXIS_LABELS.get(x_column, x_column))
    axes.set_ylabel("symbol error rate")
    axes.grid(True, which="both", alpha=0.3)
    axes.legend()
    figure.tight_layout()
    figure.savefig(out_path)
    plt.close(figure)
    return x_column
