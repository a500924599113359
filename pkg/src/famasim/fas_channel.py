"""Spatially correlated fading for a fluid antenna system (FAS).

A fluid antenna exposes ``K`` switchable ports spread uniformly over a
linear aperture of ``W`` wavelengths, so ports ``n`` and ``m`` sit
``|n - m| * W / (K - 1)`` wavelengths apart.  Under rich isotropic
scattering the Rayleigh fading observed at two ports is correlated with
coefficient

    J[n, m] = J0(2 * pi * |n - m| / (K - 1) * W),

where ``J0`` is the zeroth-order Bessel function of the first kind.
This module builds that port correlation matrix, factors it through an
eigendecomposition ``J = Q diag(lam) Q^H`` (eigenvalues clamped to be
nonnegative and sorted in descending order), and draws jointly
correlated channel rows

    g = sqrt(power) * Q * diag(sqrt(lam)) * w,    w ~ CN(0, I),

one row per transmitting user, all as seen by a single tagged receiving
user.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz
from scipy.special import j0


@dataclass(frozen=True)
class FasGeometry:
    """Port layout of a fluid antenna: ``num_ports`` over ``aperture`` wavelengths."""

    num_ports: int
    aperture: float

    def __post_init__(self) -> None:
        if self.num_ports < 2:
            raise ValueError(
                f"a fluid antenna needs at least 2 ports, got {self.num_ports}"
            )
        if self.aperture < 0:
            raise ValueError(f"aperture must be nonnegative, got {self.aperture}")

    def port_separation(self, port_a: int, port_b: int) -> float:
        """Distance between two ports in wavelengths."""
        return abs(port_a - port_b) * self.aperture / (self.num_ports - 1)


@dataclass(frozen=True)
class CorrelationModel:
    """Factored port correlation for one geometry.

    Attributes:
        geometry: The port layout the model was built for.
        matrix: ``(K, K)`` correlation matrix ``J`` (real symmetric Toeplitz,
            unit diagonal).
        eigenvectors: ``(K, K)`` orthonormal eigenvectors, column ``i``
            paired with ``eigenvalues[i]``.
        eigenvalues: ``(K,)`` eigenvalues sorted descending, clamped to
            ``>= 0`` (round-off can produce tiny negatives for large
            ``K * W``).
        root: ``(K, r)`` sampling factor ``Q[:, :r] * sqrt(lam[:r])``.
            Directions whose eigenvalue falls below ``rank_tol`` times the
            largest carry no statistical weight at double precision and are
            dropped from the factor; the retained rank ``r`` is usually far
            below ``K`` for large apertures, which makes row sampling cheap.
    """

    geometry: FasGeometry
    matrix: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    root: np.ndarray = field(repr=False)

    @property
    def rank(self) -> int:
        """Number of eigen-directions retained by the sampling factor."""
        return self.root.shape[1]


@dataclass(frozen=True)
class ChannelDrop:
    """One block-fading realization seen by a tagged receiving user.

    ``gains[u_prime, k]`` is the complex gain from transmitting user
    ``u_prime`` to port ``k`` of the tagged user's fluid antenna.  The
    tagged user's own (desired) row is ``gains[user]``; every other row is
    an interferer drawn with ``cross_power``.
    """

    gains: np.ndarray = field(repr=False)
    user: int
    desired_power: float
    cross_power: float

    @property
    def num_users(self) -> int:
        return self.gains.shape[0]

    @property
    def num_ports(self) -> int:
        return self.gains.shape[1]

    @property
    def desired_gains(self) -> np.ndarray:
        """The tagged user's own channel row, shape ``(K,)``."""
        return self.gains[self.user]


def build_correlation(
    geometry: FasGeometry, rank_tol: float | None = None
) -> CorrelationModel:
    """Build and factor the Jakes port correlation matrix for ``geometry``.

    Args:
        geometry: Port count and aperture.
        rank_tol: Relative eigenvalue cutoff for the sampling factor.
            Defaults to ``K * eps``, which only discards directions whose
            contribution is below double-precision round-off.  Eigenvalues
            that are exactly zero after clamping are always dropped (they
            contribute nothing).

    Returns:
        The factored correlation model.
    """
    num_ports = geometry.num_ports
    separations = np.arange(num_ports) * (geometry.aperture / (num_ports - 1))
    first_row = j0(2.0 * np.pi * separations)
    matrix = toeplitz(first_row)

    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    # eigh returns ascending order; re-sort descending, keeping the original
    # relative order of exactly repeated eigenvalues.
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = np.maximum(eigenvalues[order], 0.0)
    eigenvectors = eigenvectors[:, order]

    if rank_tol is None:
        rank_tol = num_ports * np.finfo(np.float64).eps
    keep = int(np.count_nonzero(eigenvalues > rank_tol * eigenvalues[0]))
    keep = max(keep, 1)
    root = eigenvectors[:, :keep] * np.sqrt(eigenvalues[:keep])

    return CorrelationModel(
        geometry=geometry,
        matrix=matrix,
        eigenvectors=eigenvectors,
        eigenvalues=eigenvalues,
        root=np.ascontiguousarray(root),
    )


def sample_channel_row(
    model: CorrelationModel, power: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw one correlated Rayleigh row ``g`` with ``E[g g^H] = power * J``.

    Consumes ``(2, rank)`` standard normal draws from ``rng`` (real parts
    first, then imaginary parts), so a fixed seed reproduces the row
    bit-for-bit.
    """
    if power < 0:
        raise ValueError(f"channel power must be nonnegative, got {power}")
    normals = rng.standard_normal((2, model.rank))
    white = np.sqrt(0.5) * (normals[0] + 1j * normals[1])
    return np.sqrt(power) * (model.root @ white)


def sample_drop(
    model: CorrelationModel,
    num_users: int,
    desired_power: float,
    cross_power: float,
    rng: np.random.Generator,
    user: int = 0,
) -> ChannelDrop:
    """Draw one block-fading drop: ``num_users`` independent correlated rows.

    Row ``user`` is scaled by ``desired_power``, every other row by
    ``cross_power``.  The RNG consumption matches ``num_users`` consecutive
    :func:`sample_channel_row` calls, row by row.
    """
    if num_users < 1:
        raise ValueError(f"need at least one user, got {num_users}")
    if not 0 <= user < num_users:
        raise ValueError(f"tagged user {user} outside [0, {num_users})")
    if desired_power < 0 or cross_power < 0:
        raise ValueError("channel powers must be nonnegative")

    normals = rng.standard_normal((num_users, 2, model.rank))
    white = np.sqrt(0.5) * (normals[:, 0, :] + 1j * normals[:, 1, :])
    scales = np.full(num_users, np.sqrt(cross_power))
    scales[user] = np.sqrt(desired_power)
    gains = scales[:, np.newaxis] * (white @ model.root.T)

    return ChannelDrop(
        gains=gains,
        user=user,
        desired_power=desired_power,
        cross_power=cross_power,
    )
