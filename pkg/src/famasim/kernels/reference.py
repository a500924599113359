"""NumPy fallback for the per-drop simulation kernels.

One call simulates every symbol instant of a single block-fading drop for
the tagged user, given the precomputed port observations (channel matmul
plus noise happen in the driver so both kernel backends consume identical
inputs).  Three modes:

* ``MODE_FIXED_PORTS``: MRC over a fixed ascending port list (all-port
  MRC, or a turbo shortlist that is constant over the drop).
* ``MODE_RANKED``: per-symbol turbo shortlisting over the candidate set —
  deviation ranking with ties to the lower index, then a minimum
  index-gap walk (``gap == 1`` accepts any distinct port) — followed by
  MRC.
* ``MODE_FASTFAMA``: per-symbol best-realized-SINR port, detected after
  derotation by that port's gain.

MRC sums always run in ascending port order so fixed and ranked modes
agree bit-for-bit when they select the same ports.  ``weight`` is the
per-symbol combiner gain on the desired symbol, i.e. ``combined / weight``
equals the clean symbol plus residual impairment.
"""

from __future__ import annotations

import numpy as np

MODE_FIXED_PORTS = 0
MODE_RANKED = 1
MODE_FASTFAMA = 2

_SINR_SATURATION = np.finfo(np.float64).max


def simulate_drop(
    received: np.ndarray,
    desired_gains: np.ndarray,
    sym_idx: np.ndarray,
    points: np.ndarray,
    desired_power: float,
    symbol_power: float,
    mode: int,
    ports: np.ndarray,
    candidates: np.ndarray,
    k_sel: int,
    gap: int,
    collect: bool,
):
    num_symbols = received.shape[1]
    combined = np.empty(num_symbols, dtype=np.complex128)
    weight = np.empty(num_symbols, dtype=np.float64) if collect else None

    if mode == MODE_FASTFAMA:
        sent = points[sym_idx]
        impairment = received - np.outer(desired_gains, sent)
        gain_power = np.abs(desired_gains) ** 2
        numerator = gain_power[:, np.newaxis] * (np.abs(sent) ** 2)[np.newaxis, :]
        denominator = np.abs(impairment) ** 2
        sinr = np.full(denominator.shape, _SINR_SATURATION)
        np.divide(numerator, denominator, out=sinr, where=denominator > 0)
        np.minimum(sinr, _SINR_SATURATION, out=sinr)
        best = np.argmax(sinr, axis=0)
        combined[:] = np.conj(desired_gains[best]) * received[
            best, np.arange(num_symbols)
        ]
        if collect:
            weight[:] = gain_power[best]

    elif mode == MODE_FIXED_PORTS:
        scale = 1.0 / np.sqrt(desired_power)
        weights = np.conj(desired_gains[ports])
        sub = received[ports]
        for s in range(num_symbols):
            combined[s] = np.dot(weights, np.ascontiguousarray(sub[:, s])) * scale
        if collect:
            weight[:] = float(np.sum(np.abs(desired_gains[ports]) ** 2)) * scale

    elif mode == MODE_RANKED:
        scale = 1.0 / np.sqrt(desired_power)
        predicted = np.abs(desired_gains[candidates]) ** 2 * symbol_power
        measured = np.abs(received[candidates]) ** 2
        deviations = np.full(measured.shape, np.inf)
        usable = (predicted > 0)[:, np.newaxis]
        np.divide(
            np.abs(measured - predicted[:, np.newaxis]),
            predicted[:, np.newaxis],
            out=deviations,
            where=usable,
        )
        order = np.argsort(deviations, axis=0, kind="stable")
        for s in range(num_symbols):
            if gap <= 1:
                selected = np.sort(candidates[order[:k_sel, s]])
            else:
                chosen: list[int] = []
                for pos in order[:, s]:
                    port = int(candidates[pos])
                    if all(abs(port - other) >= gap for other in chosen):
                        chosen.append(port)
                        if len(chosen) == k_sel:
                            break
                selected = np.sort(np.asarray(chosen, dtype=np.int64))
            combined[s] = (
                np.dot(np.conj(desired_gains[selected]), received[selected, s])
                * scale
            )
            if collect:
                weight[s] = (
                    float(np.sum(np.abs(desired_gains[selected]) ** 2)) * scale
                )
    else:
        raise ValueError(f"unknown kernel mode {mode}")

    detected = (2 * (combined.imag < 0) + (combined.real < 0)).astype(np.uint8)
    errors = int(np.count_nonzero(detected != sym_idx))
    return errors, detected, combined, weight
