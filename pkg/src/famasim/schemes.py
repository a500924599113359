"""Receiver schemes: turbo front end, all-port MRC, fast port hopping.

Three ways to turn one symbol instant's port observations into a bit
decision for the tagged user:

* ``TurboFrontEnd``: shortlist ports (see :mod:`famasim.port_select`),
  then maximum-ratio combine the shortlist.
* ``AllPortMrc``: maximum-ratio combine every port.
* ``FastFamaOracle``: switch to the single port with the best realized
  instantaneous SINR for this symbol, as if port switching were free and
  the receiver could peek at the realized impairment.

MRC weights are the conjugate desired gains scaled by
``1 / sqrt(desired_power)``, so the combiner output is phase-aligned and
is detected against reference ``1``.  The fast scheme detects the raw
port sample after derotating by that port's desired gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from famasim.fas_channel import ChannelDrop, FasGeometry
from famasim.phy_signal import PortObservations, SymbolBlock, instantaneous_sinr, receive
from famasim.port_select import SelectionConfig, Shortlist
from famasim.port_select import shortlist as build_shortlist


@dataclass(frozen=True)
class TurboFrontEnd:
    """Shortlist-then-MRC receiver."""

    selection: SelectionConfig


@dataclass(frozen=True)
class AllPortMrc:
    """MRC over the full port array."""


@dataclass(frozen=True)
class FastFamaOracle:
    """Per-symbol best-SINR port switching."""


ReceiverScheme = TurboFrontEnd | AllPortMrc | FastFamaOracle


def mrc_combine(
    observations: PortObservations,
    desired_gains: np.ndarray,
    ports: Shortlist | np.ndarray,
    desired_power: float,
) -> complex:
    """Maximum-ratio combine the given ports.

    The sum always runs in ascending port order, so the result is
    independent of how the port list happens to be ordered.
    """
    if desired_power <= 0:
        raise ValueError(f"desired power must be positive, got {desired_power}")
    indices = ports.ports if isinstance(ports, Shortlist) else np.asarray(ports)
    if indices.size == 0:
        raise ValueError("cannot combine an empty port list")
    indices = np.sort(indices)
    weights = np.conj(desired_gains[indices])
    return complex(
        np.dot(weights, observations.received[indices]) / np.sqrt(desired_power)
    )


def fast_fama_select(
    drop: ChannelDrop, block: SymbolBlock, noise: np.ndarray
) -> int:
    """Index of the port with the best realized SINR (ties to the lowest)."""
    return int(np.argmax(instantaneous_sinr(drop, block, noise)))


def detect_qpsk(value: complex, reference: complex = 1.0 + 0.0j) -> tuple[int, int]:
    """Minimum-distance QPSK decision after derotating by ``reference``.

    Equivalent to sign decisions on the real and imaginary parts; values
    exactly on a decision boundary resolve toward the positive half-plane
    (bit 0).  Returns the bit pair ``(b0, b1)`` of the QPSK labeling.
    """
    if reference == 0:
        raise ValueError("detection reference must be nonzero")
    rotated = complex(value) * np.conj(reference)
    return int(rotated.imag < 0), int(rotated.real < 0)


def run_symbol(
    scheme: ReceiverScheme,
    drop: ChannelDrop,
    block: SymbolBlock,
    geometry: FasGeometry,
    noise_power: float,
    rng: np.random.Generator,
) -> tuple[int, int]:
    """Receive one symbol instant and detect the tagged user's bit pair."""
    observations = receive(drop, block, noise_power, rng)
    desired = drop.desired_gains

    if isinstance(scheme, FastFamaOracle):
        port = fast_fama_select(drop, block, observations.noise)
        return detect_qpsk(observations.received[port], reference=desired[port])

    if isinstance(scheme, AllPortMrc):
        ports = np.arange(drop.num_ports)
    else:
        ports = build_shortlist(
            observations, desired, scheme.selection, geometry, block.symbol_power
        )
    combined = mrc_combine(observations, desired, ports, drop.desired_power)
    return detect_qpsk(combined)
