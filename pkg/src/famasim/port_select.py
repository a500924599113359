"""Port shortlisting for the turbo receiver front end.

Instead of scanning every port, the front end keeps a small shortlist:

1. Predict the desired received power per port, ``p[k] = |g[k]|^2 * sp``
   where ``sp`` is the symbol power.
2. Score every port by its normalized deviation
   ``delta[k] = abs(|r[k]|^2 - p[k]) / p[k]`` (ports with zero predicted
   power are unusable and score ``+inf``).
3. Rank ports by ascending deviation, breaking ties toward the lower
   index.
4. Keep only candidate ports whose desired gain power is within a factor
   ``gamma_th`` of the best port.
5. Thin the survivors down to ``k_sel`` ports, either by solving a
   spatial-dispersion max-min problem (``sdm``), by walking the ranked
   list with a fixed minimum index spacing (``fixed``), or by simply
   taking the ``k_sel`` best-ranked survivors (``none``).

All port indices are 0-based.  The deviation statistic is a selection
heuristic; :func:`deviation_probability` quantifies how likely a given
deviation is under the Gaussian impairment model, purely as a diagnostic
(it never gates the selection itself).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ncx2

from famasim.fas_channel import FasGeometry
from famasim.phy_signal import PortObservations

SPACING_SDM = "sdm"
SPACING_FIXED = "fixed"
SPACING_NONE = "none"
SPACING_MODES = (SPACING_SDM, SPACING_FIXED, SPACING_NONE)

# Above these sizes the exact max-min subset enumeration becomes too
# expensive and sdm_select switches to greedy farthest-point insertion.
EXACT_MAX_CANDIDATES = 20
EXACT_MAX_KSEL = 5


@dataclass(frozen=True)
class SelectionConfig:
    """Shortlisting knobs for the turbo front end.

    ``min_gap_fraction`` is only consulted when ``spacing == "fixed"``; the
    enforced index gap is then ``ceil(min_gap_fraction * K)``.
    """

    k_sel: int = 20
    gamma_th: float = 0.6
    spacing: str = SPACING_SDM
    min_gap_fraction: float = 0.05

    def __post_init__(self) -> None:
        if self.k_sel < 1:
            raise ValueError(f"k_sel must be at least 1, got {self.k_sel}")
        if not 0.0 < self.gamma_th < 1.0:
            raise ValueError(f"gamma_th must lie in (0, 1), got {self.gamma_th}")
        if self.spacing not in SPACING_MODES:
            raise ValueError(
                f"spacing must be one of {SPACING_MODES}, got {self.spacing!r}"
            )
        if self.spacing == SPACING_FIXED and not 0.0 < self.min_gap_fraction < 1.0:
            raise ValueError(
                f"min_gap_fraction must lie in (0, 1), got {self.min_gap_fraction}"
            )


@dataclass(frozen=True)
class Shortlist:
    """Selected port indices with their deviation scores.

    For ``none`` and ``fixed`` spacing the list keeps the deviation-ranked
    order (deviations nondecreasing); ``sdm`` returns ports sorted by index
    since its max-min objective ignores the ranking.
    """

    ports: np.ndarray
    deviations: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.ports.shape != self.deviations.shape:
            raise ValueError("ports and deviations must have matching shapes")

    def __len__(self) -> int:
        return self.ports.size


def predicted_desired_power(
    desired_gains: np.ndarray, symbol_power: float
) -> np.ndarray:
    """Per-port power the desired symbol alone would deliver."""
    return np.abs(desired_gains) ** 2 * symbol_power


def normalized_deviation(
    observations: PortObservations, desired_gains: np.ndarray, symbol_power: float
) -> np.ndarray:
    """How far each port's received power strays from its prediction.

    Ports with zero predicted power are unusable and score ``+inf``.
    """
    predicted = predicted_desired_power(desired_gains, symbol_power)
    measured = np.abs(observations.received) ** 2
    deviations = np.full(predicted.shape, np.inf)
    usable = predicted > 0
    np.divide(np.abs(measured - predicted), predicted, out=deviations, where=usable)
    return deviations


def expected_impairment_power(
    num_users: int, symbol_power: float, cross_power: float, noise_power: float
) -> float:
    """Average interference-plus-noise power at a port."""
    return (num_users - 1) * symbol_power * cross_power + noise_power


def deviation_probability(
    deviation: float, desired_power: float, impairment_power: float
) -> float:
    """Probability that a port's normalized power deviation stays below
    ``deviation``.

    Under the Gaussian impairment model the received sample is
    ``r ~ CN(m, impairment_power)`` with ``|m|^2 = desired_power``, so
    ``|r|^2`` scaled by half the impairment power follows a noncentral
    chi-squared law with 2 degrees of freedom.  ``deviation`` is a
    threshold on the *normalized* deviation, so the two-sided event
    ``abs(|r|^2 - desired_power) < deviation * desired_power`` is an
    exact CDF difference.  Diagnostic only; the shortlist never
    thresholds on it.
    """
    if deviation < 0:
        raise ValueError(f"deviation must be nonnegative, got {deviation}")
    if desired_power <= 0:
        raise ValueError(f"desired power must be positive, got {desired_power}")
    if impairment_power <= 0:
        raise ValueError(
            f"impairment power must be positive, got {impairment_power}"
        )
    half = impairment_power / 2.0
    noncentrality = desired_power / half
    spread = deviation * desired_power
    upper = (desired_power + spread) / half
    lower = max(desired_power - spread, 0.0) / half
    return float(ncx2.cdf(upper, 2, noncentrality) - ncx2.cdf(lower, 2, noncentrality))


def deviation_probability_bound(
    deviation: float, desired_power: float, impairment_power: float
) -> float:
    """One-sided upper-tail companion of :func:`deviation_probability`.

    Evaluates ``1 - F(deviation / impairment_power)`` for the noncentral
    chi-squared CDF ``F`` with 2 degrees of freedom and noncentrality
    ``desired_power / impairment_power``.  This decreasing tail screen is
    sometimes quoted in place of the exact two-sided probability; it is
    kept for reference and flagged here because it is *not* the event
    probability (it equals 1 at zero deviation).
    """
    if deviation < 0:
        raise ValueError(f"deviation must be nonnegative, got {deviation}")
    if desired_power <= 0:
        raise ValueError(f"desired power must be positive, got {desired_power}")
    if impairment_power <= 0:
        raise ValueError(
            f"impairment power must be positive, got {impairment_power}"
        )
    return float(
        1.0
        - ncx2.cdf(
            deviation / impairment_power, 2, desired_power / impairment_power
        )
    )


def candidate_set(desired_gains: np.ndarray, gamma_th: float) -> np.ndarray:
    """Ports whose desired gain power is within ``gamma_th`` of the best."""
    desired_gains = np.asarray(desired_gains)
    if desired_gains.size == 0:
        raise ValueError("need at least one port")
    powers = np.abs(desired_gains) ** 2
    return np.flatnonzero(powers >= gamma_th * powers.max())


def _min_separation(indices: tuple[int, ...], scale: float) -> float:
    # Indices arrive sorted ascending, so adjacent gaps carry the minimum.
    return min(
        (indices[i + 1] - indices[i]) * scale for i in range(len(indices) - 1)
    )


def sdm_select(
    candidates: np.ndarray,
    k_sel: int,
    geometry: FasGeometry,
    deviations: np.ndarray | None = None,
    exact_max_candidates: int = EXACT_MAX_CANDIDATES,
    exact_max_ksel: int = EXACT_MAX_KSEL,
) -> Shortlist:
    """Pick ``k_sel`` candidates maximizing the minimum pairwise separation.

    Small instances (``len(candidates) <= exact_max_candidates`` and
    ``k_sel <= exact_max_ksel``) are solved exactly by subset enumeration,
    keeping the lexicographically first optimum.  Larger instances fall
    back to greedy farthest-point insertion seeded with the two extreme
    candidates, breaking score ties toward the lower index; the greedy
    minimum separation is at worst half the exact optimum.

    ``k_sel == 1`` returns the lowest-deviation candidate (lowest index if
    no deviations are supplied), and fewer than ``k_sel`` candidates are
    returned whole; the shortlist is never padded.
    """
    candidates = np.unique(np.asarray(candidates, dtype=np.int64))
    if candidates.size == 0:
        raise ValueError("candidate set must not be empty")
    if k_sel < 1:
        raise ValueError(f"k_sel must be at least 1, got {k_sel}")
    if deviations is None:
        scores = np.zeros(candidates.size)
    else:
        scores = np.asarray(deviations, dtype=np.float64)[candidates]

    if k_sel == 1:
        best = int(np.lexsort((candidates, scores))[0])
        chosen = candidates[[best]]
        return Shortlist(ports=chosen, deviations=scores[[best]])
    if candidates.size <= k_sel:
        return Shortlist(ports=candidates, deviations=scores)

    scale = geometry.aperture / (geometry.num_ports - 1)
    if candidates.size <= exact_max_candidates and k_sel <= exact_max_ksel:
        best_combo: tuple[int, ...] | None = None
        best_gap = -1.0
        for combo in itertools.combinations(candidates.tolist(), k_sel):
            gap = _min_separation(combo, scale)
            if gap > best_gap:
                best_combo, best_gap = combo, gap
        chosen = np.asarray(best_combo, dtype=np.int64)
    else:
        picked = [int(candidates[0]), int(candidates[-1])]
        pool = candidates[1:-1].tolist()
        while len(picked) < k_sel and pool:
            best_pos = 0
            best_dist = -1.0
            for pos, cand in enumerate(pool):
                dist = min(abs(cand - p) * scale for p in picked)
                if dist > best_dist:
                    best_pos, best_dist = pos, dist
            picked.append(pool.pop(best_pos))
        chosen = np.sort(np.asarray(picked, dtype=np.int64))

    lookup = {int(c): s for c, s in zip(candidates.tolist(), scores.tolist())}
    return Shortlist(
        ports=chosen,
        deviations=np.asarray([lookup[int(c)] for c in chosen]),
    )


def fixed_spacing_select(
    ranked: Shortlist,
    k_sel: int,
    min_gap_fraction: float,
    geometry: FasGeometry,
) -> Shortlist:
    """Walk a deviation-ranked list enforcing a minimum index spacing.

    Accepts a port only if it sits at least ``ceil(min_gap_fraction * K)``
    indices away from every previously accepted port, stopping once
    ``k_sel`` ports are accepted.  If the walk runs out of ports first,
    the accepted ports are returned as-is (never padded).
    """
    if k_sel < 1:
        raise ValueError(f"k_sel must be at least 1, got {k_sel}")
    gap = math.ceil(min_gap_fraction * geometry.num_ports)
    accepted: list[int] = []
    kept: list[int] = []
    for position, port in enumerate(ranked.ports.tolist()):
        if all(abs(port - other) >= gap for other in accepted):
            accepted.append(port)
            kept.append(position)
            if len(accepted) == k_sel:
                break
    return Shortlist(
        ports=np.asarray(accepted, dtype=np.int64),
        deviations=ranked.deviations[kept],
    )


def shortlist(
    observations: PortObservations,
    desired_gains: np.ndarray,
    config: SelectionConfig,
    geometry: FasGeometry,
    symbol_power: float,
) -> Shortlist:
    """Full shortlisting pass: score, rank, filter, thin.

    Deviation ranking is ascending with ties broken toward the lower port
    index.  The ``gamma_th`` filter is applied to the ranked list before
    the spacing step.  If the filter leaves fewer than ``k_sel`` ports,
    every survivor is returned.
    """
    desired_gains = np.asarray(desired_gains)
    num_ports = desired_gains.size
    if config.k_sel > num_ports:
        raise ValueError(
            f"k_sel={config.k_sel} exceeds the {num_ports} available ports"
        )

    deviations = normalized_deviation(observations, desired_gains, symbol_power)
    order = np.argsort(deviations, kind="stable")
    candidates = candidate_set(desired_gains, config.gamma_th)

    if config.spacing == SPACING_SDM:
        return sdm_select(candidates, config.k_sel, geometry, deviations=deviations)

    keep = np.isin(order, candidates)
    ranked = Shortlist(ports=order[keep], deviations=deviations[order[keep]])
    if config.spacing == SPACING_FIXED:
        return fixed_spacing_select(
            ranked, config.k_sel, config.min_gap_fraction, geometry
        )
    return Shortlist(
        ports=ranked.ports[: config.k_sel],
        deviations=ranked.deviations[: config.k_sel],
    )
