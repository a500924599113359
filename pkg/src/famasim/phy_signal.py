"""QPSK transport and per-port observations on the fluid-antenna uplink.

Gray-mapped QPSK: the bit pair ``(b0, b1)`` maps to
``sqrt(symbol_power / 2) * ((1 - 2*b1) + 1j * (1 - 2*b0))``, i.e.
``00 -> +1+1j``, ``01 -> -1+1j``, ``11 -> -1-1j``, ``10 -> +1-1j`` (up to
the power scale), so neighbouring constellation points differ in exactly
one bit.  Symbols are also addressed by the integer index
``2*b0 + b1`` throughout the package.

With every user transmitting one symbol per instant, port ``k`` of the,
tagged user's fluid antenna observes

    r[k] = g[user, k] * s[user] + sum_{u' != user} g[u', k] * s[u'] + eta[k]

with ``eta[k] ~ CN(0, noise_power)``.  The instantaneous signal to
interference-plus-noise ratio at a port scores the desired term against
the *realized* impairment, i.e. the same noise samples that produced the
observation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from famasim.fas_channel import ChannelDrop

# Instantaneous SINR saturates at the largest finite double when the
# realized impairment is exactly zero, keeping downstream comparisons and
# argmax well-defined.
SINR_SATURATION = float(np.finfo(np.float64).max)


def constellation(symbol_power: float) -> np.ndarray:
    """The four QPSK points indexed by ``2*b0 + b1``."""
    if symbol_power < 0:
        raise ValueError(f"symbol power must be nonnegative, got {symbol_power}")
    index = np.arange(4)
    scale = np.sqrt(symbol_power / 2.0)
    return scale * ((1 - 2 * (index & 1)) + 1j * (1 - 2 * (index >> 1)))


def modulate_qpsk(bits: np.ndarray, symbol_power: float) -> np.ndarray:
    """Map an even-length 0/1 sequence to Gray-coded QPSK symbols."""
    bits = np.asarray(bits)
    if bits.size % 2 != 0:
        raise ValueError(f"bit count must be even, got {bits.size}")
    if symbol_power < 0:
        raise ValueError(f"symbol power must be nonnegative, got {symbol_power}")
    b0 = bits[0::2]
    b1 = bits[1::2]
    scale = np.sqrt(symbol_power / 2.0)
    return scale * ((1 - 2 * b1) + 1j * (1 - 2 * b0))


def demodulate_qpsk(symbols: np.ndarray) -> np.ndarray:
    """Hard sign decisions back to bits; boundary values resolve to bit 0."""
    symbols = np.asarray(symbols)
    bits = np.empty(2 * symbols.size, dtype=np.int64)
    bits[0::2] = symbols.imag < 0
    bits[1::2] = symbols.real < 0
    return bits


@dataclass(frozen=True)
class SymbolBlock:
    """One symbol per user for a single transmission instant."""

    symbols: np.ndarray = field(repr=False)
    symbol_power: float

    @property
    def num_users(self) -> int:
        return self.symbols.shape[0]

    @classmethod
    def random(
        cls, num_users: int, symbol_power: float, rng: np.random.Generator
    ) -> "SymbolBlock":
        """Uniformly random QPSK symbol per user."""
        indices = rng.integers(0, 4, size=num_users)
        return cls(
            symbols=constellation(symbol_power)[indices], symbol_power=symbol_power
        )


@dataclass(frozen=True)
class PortObservations:
    """Per-port received samples plus the noise realization behind them."""

    received: np.ndarray = field(repr=False)
    noise: np.ndarray = field(repr=False)
    noise_power: float


def receive(
    drop: ChannelDrop,
    block: SymbolBlock,
    noise_power: float,
    rng: np.random.Generator,
) -> PortObservations:
    """Observe one symbol instant at every port of the tagged user's antenna."""
    if noise_power < 0:
        raise ValueError(f"noise power must be nonnegative, got {noise_power}")
    if block.num_users != drop.num_users:
        raise ValueError(
            f"block carries {block.num_users} symbols for {drop.num_users} users"
        )
    normals = rng.standard_normal((2, drop.num_ports))
    noise = np.sqrt(noise_power / 2.0) * (normals[0] + 1j * normals[1])
    received = block.symbols @ drop.gains + noise
    return PortObservations(received=received, noise=noise, noise_power=noise_power)


def instantaneous_sinr(
    drop: ChannelDrop, block: SymbolBlock, noise: np.ndarray
) -> np.ndarray:
    """Realized per-port SINR of the tagged user for one symbol instant.

    The denominator uses the supplied noise samples, so feeding back the
    ``noise`` field of the matching :class:`PortObservations` scores exactly
    the impairment that corrupted the observation.  Ports where that
    impairment is exactly zero return :data:`SINR_SATURATION`.
    """
    desired = drop.desired_gains * block.symbols[drop.user]
    impairment = (block.symbols @ drop.gains - desired) + noise
    numerator = np.abs(desired) ** 2
    denominator = np.abs(impairment) ** 2
    sinr = np.full(drop.num_ports, SINR_SATURATION)
    np.divide(numerator, denominator, out=sinr, where=denominator > 0)
    return np.minimum(sinr, SINR_SATURATION)


def average_snr(desired_power: float, symbol_power: float, noise_power: float) -> float:
    """Average received SNR ``desired_power * symbol_power / noise_power``."""
    if noise_power <= 0:
        raise ValueError(f"noise power must be positive, got {noise_power}")
    return desired_power * symbol_power / noise_power
