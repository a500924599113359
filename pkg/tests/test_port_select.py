"""Shortlisting pipeline tests: scoring, filtering, spacing, composition."""

import numpy as np
import pytest

from famasim.fas_channel import ChannelDrop, FasGeometry, build_correlation, sample_drop
from famasim.phy_signal import PortObservations, SymbolBlock, instantaneous_sinr, receive
from famasim.port_select import (
    SelectionConfig,
    Shortlist,
    candidate_set,
    deviation_probability,
    deviation_probability_bound,
    expected_impairment_power,
    fixed_spacing_select,
    normalized_deviation,
    predicted_desired_power,
    sdm_select,
    shortlist,
)
from oracles import shortlist_oracle


def _observations(received):
    received = np.asarray(received, dtype=complex)
    return PortObservations(
        received=received,
        noise=np.zeros_like(received),
        noise_power=0.0,
    )


def test_selection_config_validation():
    SelectionConfig(k_sel=1, gamma_th=0.5, spacing="none")
    with pytest.raises(ValueError):
        SelectionConfig(k_sel=0)
    with pytest.raises(ValueError):
        SelectionConfig(gamma_th=1.0)
    with pytest.raises(ValueError):
        SelectionConfig(spacing="diagonal")
    with pytest.raises(ValueError):
        SelectionConfig(spacing="fixed", min_gap_fraction=0.0)


def test_predicted_power():
    assert predicted_desired_power(np.array([0j]), 2.0)[0] == 0
    assert predicted_desired_power(np.array([1 + 1j]), 3.0)[0] == pytest.approx(6.0)
    rng = np.random.default_rng(0)
    gains = rng.standard_normal(10) + 1j * rng.standard_normal(10)
    expected = [abs(g) ** 2 * 1.7 for g in gains]
    assert np.allclose(predicted_desired_power(gains, 1.7), expected)


def test_normalized_deviation_values():
    gains = np.array([1.0 + 0j, 2.0 + 0j, 0j])
    received = np.array([1.0 + 0j, np.sqrt(8) + 0j, 1.0 + 0j])
    deviations = normalized_deviation(_observations(received), gains, 1.0)
    assert deviations[0] == 0.0
    assert deviations[1] == pytest.approx(1.0)
    assert deviations[2] == np.inf


def test_normalized_deviation_recomputation():
    rng = np.random.default_rng(1)
    gains = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    received = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    deviations = normalized_deviation(_observations(received), gains, 2.5)
    for k in range(8):
        predicted = abs(gains[k]) ** 2 * 2.5
        expected = abs(abs(received[k]) ** 2 - predicted) / predicted
        assert deviations[k] == pytest.approx(expected)


def test_normalized_deviation_scale_invariance():
    rng = np.random.default_rng(2)
    gains = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    received = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    base = normalized_deviation(_observations(received), gains, 1.0)
    scaled = normalized_deviation(
        _observations(received * 3.0), gains * 3.0, 1.0
    )
    assert np.allclose(scaled, base)


def test_expected_impairment_power():
    assert expected_impairment_power(1, 1.0, 1.0, 0.25) == pytest.approx(0.25)
    assert expected_impairment_power(5, 2.0, 0.5, 0.1) == pytest.approx(4.1)


def test_deviation_probability_endpoints_and_monotonicity():
    assert deviation_probability(0.0, 1.0, 1.0) == 0.0
    assert deviation_probability(1e9, 1.0, 1.0) == pytest.approx(1.0)
    grid = np.linspace(0.0, 6.0, 25)
    values = [deviation_probability(d, 1.5, 0.8) for d in grid]
    assert all(0.0 <= v <= 1.0 for v in values)
    assert np.all(np.diff(values) >= 0)


def test_deviation_probability_matches_monte_carlo():
    # Event: | |r|^2 - P | < delta * P with r ~ CN(sqrt(P), sigma^2).
    delta, power, impairment = 2.0, 1.0, 1.0
    rng = np.random.default_rng(3)
    count = 1_000_000
    noise = np.sqrt(impairment / 2.0) * (
        rng.standard_normal(count) + 1j * rng.standard_normal(count)
    )
    received = np.sqrt(power) + noise
    hits = np.abs(np.abs(received) ** 2 - power) < delta * power
    estimate = float(np.mean(hits))
    sigma = np.sqrt(estimate * (1 - estimate) / count)
    assert abs(deviation_probability(delta, power, impairment) - estimate) < 3 * sigma


def test_deviation_probability_validation():
    with pytest.raises(ValueError):
        deviation_probability(-0.1, 1.0, 1.0)
    with pytest.raises(ValueError):
        deviation_probability(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        deviation_probability(1.0, 1.0, 0.0)


def test_deviation_probability_bound_is_a_tail():
    # The companion bound is a decreasing tail, not the event probability.
    assert deviation_probability_bound(0.0, 1.0, 1.0) == pytest.approx(1.0)
    grid = np.linspace(0.0, 8.0, 17)
    values = [deviation_probability_bound(d, 1.0, 1.0) for d in grid]
    assert np.all(np.diff(values) <= 0)


def test_candidate_set_examples():
    gains = np.array([2.0 + 0j, 1.0 + 0j, np.sqrt(3) + 0j])
    assert list(candidate_set(gains, 0.6)) == [0, 2]
    assert list(candidate_set(gains, 1e-9)) == [0, 1, 2]
    with pytest.raises(ValueError):
        candidate_set(np.array([]), 0.5)


def test_candidate_set_monotone_and_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(50):
        gains = rng.standard_normal(12) + 1j * rng.standard_normal(12)
        powers = np.abs(gains) ** 2
        loose = set(candidate_set(gains, 0.3).tolist())
        tight = set(candidate_set(gains, 0.7).tolist())
        assert tight <= loose
        expected = {
            k for k in range(12) if powers[k] >= 0.7 * powers.max()
        }
        assert tight == expected


def test_sdm_select_examples():
    geometry = FasGeometry(num_ports=12, aperture=3.0)
    assert list(sdm_select(np.arange(5), 2, geometry).ports) == [0, 4]
    assert list(sdm_select(np.array([0, 1, 2, 9]), 3, geometry).ports) == [0, 2, 9]
    equally = np.array([0, 3, 6, 9])
    assert list(sdm_select(equally, 4, geometry).ports) == [0, 3, 6, 9]
    with pytest.raises(ValueError):
        sdm_select(np.array([], dtype=int), 2, geometry)


def test_sdm_select_k1_uses_deviations():
    geometry = FasGeometry(num_ports=10, aperture=1.0)
    deviations = np.array([5.0, 0.5, 0.1, 0.5, 9.0, 1.0, 2.0, 3.0, 4.0, 6.0])
    picked = sdm_select(np.array([1, 2, 3]), 1, geometry, deviations=deviations)
    assert list(picked.ports) == [2]
    # Ties go to the lower index.
    tied = sdm_select(np.array([1, 3]), 1, geometry, deviations=deviations)
    assert list(tied.ports) == [1]


def test_sdm_greedy_within_half_of_exact():
    geometry = FasGeometry(num_ports=40, aperture=4.0)
    rng = np.random.default_rng(5)
    scale = geometry.aperture / (geometry.num_ports - 1)

    def min_gap(ports):
        ports = sorted(ports)
        return min(
            (b - a) * scale for a, b in zip(ports, ports[1:])
        )

    for _ in range(100):
        size = int(rng.integers(5, 20))
        candidates = np.sort(
            rng.choice(np.arange(40), size=size, replace=False)
        )
        k_sel = int(rng.integers(2, 5))
        if size <= k_sel:
            continue
        exact = sdm_select(candidates, k_sel, geometry)
        greedy = sdm_select(
            candidates, k_sel, geometry, exact_max_candidates=0
        )
        assert min_gap(greedy.ports) >= 0.5 * min_gap(exact.ports)


def test_fixed_spacing_examples():
    geometry = FasGeometry(num_ports=100, aperture=10.0)
    ranked = Shortlist(
        ports=np.array([10, 12, 30]), deviations=np.array([0.1, 0.2, 0.3])
    )
    thinned = fixed_spacing_select(ranked, 2, 0.05, geometry)
    assert list(thinned.ports) == [10, 30]
    # A vanishing fraction keeps the leading ranked ports untouched.
    loose = fixed_spacing_select(ranked, 2, 1e-9, geometry)
    assert list(loose.ports) == [10, 12]
    # Exhaustion returns fewer than k_sel, never padded.
    packed = Shortlist(
        ports=np.array([10, 12, 14]), deviations=np.array([0.1, 0.2, 0.3])
    )
    short = fixed_spacing_select(packed, 3, 0.05, geometry)
    assert list(short.ports) == [10]


def test_shortlist_all_zero_deviations_break_ties_by_index():
    # When received power equals the prediction at every port, all
    # deviations are exactly zero and the ranked order degenerates to the
    # index order within the candidate filter.
    rng = np.random.default_rng(6)
    geometry = FasGeometry(num_ports=10, aperture=2.0)
    model = build_correlation(geometry)
    drop = sample_drop(model, 1, 1.0, 1.0, rng)
    obs = _observations(drop.desired_gains.copy())
    config = SelectionConfig(k_sel=3, gamma_th=0.2, spacing="none")
    result = shortlist(obs, drop.desired_gains, config, geometry, 1.0)
    assert np.all(result.deviations == 0)
    candidates = candidate_set(drop.desired_gains, 0.2)
    assert list(result.ports) == sorted(candidates.tolist())[:3]


def test_shortlist_crafted_instance():
    # K=8 hand-executed run.  Deviations (symbol_power=1):
    #   port:      0     1     2     3     4     5     6     7
    #   |g|^2:     4     1     3     2   0.1     4     3     2
    #   |r|^2:     4     9     6     2    16     2     3     8
    #   dev:       0     8     1     0   159   0.5     0     3
    # gamma_th=0.4 keeps |g|^2 >= 1.6: candidates {0, 2, 3, 5, 6}.
    # Ranked by (dev, index): 0, 3, 6, 5, 2.
    gains = np.sqrt(np.array([4, 1, 3, 2, 0.1, 4, 3, 2])).astype(complex)
    received = np.sqrt(np.array([4, 9, 6, 2, 16, 2, 3, 8])).astype(complex)
    geometry = FasGeometry(num_ports=8, aperture=2.0)
    obs = _observations(received)

    plain = shortlist(
        obs, gains, SelectionConfig(k_sel=3, gamma_th=0.4, spacing="none"),
        geometry, 1.0,
    )
    assert list(plain.ports) == [0, 3, 6]

    spaced = shortlist(
        obs, gains,
        SelectionConfig(k_sel=3, gamma_th=0.4, spacing="fixed", min_gap_fraction=0.4),
        geometry, 1.0,
    )
    # gap = ceil(0.4 * 8) = 4: accept 0, reject 3 (|3-0| < 4), accept 6,
    # reject 5 and 2; the walk exhausts with two ports, never padded.
    assert list(spaced.ports) == [0, 6]

    dispersed = shortlist(
        obs, gains, SelectionConfig(k_sel=3, gamma_th=0.4, spacing="sdm"),
        geometry, 1.0,
    )
    # Max-min separation over {0, 2, 3, 5, 6} at k_sel=3: {0, 3, 6}.
    assert list(dispersed.ports) == [0, 3, 6]


def test_shortlist_matches_straight_line_oracle():
    rng = np.random.default_rng(7)
    spacings = ("none", "fixed", "sdm")
    for trial in range(200):
        num_ports = int(rng.integers(2, 21))
        k_sel = int(rng.integers(1, min(4, num_ports) + 1))
        gamma_th = float(rng.uniform(0.05, 0.95))
        spacing = spacings[trial % 3]
        gap_fraction = float(rng.uniform(0.02, 0.4))
        gains = rng.standard_normal(num_ports) + 1j * rng.standard_normal(num_ports)
        received = rng.standard_normal(num_ports) + 1j * rng.standard_normal(
            num_ports
        )
        config = SelectionConfig(
            k_sel=k_sel,
            gamma_th=gamma_th,
            spacing=spacing,
            min_gap_fraction=gap_fraction,
        )
        geometry = FasGeometry(num_ports=num_ports, aperture=5.0)
        result = shortlist(
            _observations(received), gains, config, geometry, 1.0
        )
        expected = shortlist_oracle(
            received, gains, 1.0, k_sel, gamma_th, spacing, gap_fraction, num_ports
        )
        assert list(result.ports) == expected, f"instance {trial}"


def test_shortlist_phase_invariance():
    rng = np.random.default_rng(8)
    geometry = FasGeometry(num_ports=12, aperture=3.0)
    gains = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    received = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    config = SelectionConfig(k_sel=4, gamma_th=0.3, spacing="sdm")
    base = shortlist(_observations(received), gains, config, geometry, 1.0)
    rotated = shortlist(
        _observations(received), gains * np.exp(0.9j), config, geometry, 1.0
    )
    assert np.array_equal(base.ports, rotated.ports)


def test_shortlist_size_bounds():
    rng = np.random.default_rng(9)
    geometry = FasGeometry(num_ports=16, aperture=4.0)
    for spacing in ("none", "sdm"):
        for _ in range(50):
            gains = rng.standard_normal(16) + 1j * rng.standard_normal(16)
            received = rng.standard_normal(16) + 1j * rng.standard_normal(16)
            config = SelectionConfig(k_sel=5, gamma_th=0.5, spacing=spacing)
            result = shortlist(_observations(received), gains, config, geometry, 1.0)
            survivors = candidate_set(gains, 0.5).size
            assert len(result) == min(5, survivors)


def test_shortlist_rejects_oversized_ksel():
    geometry = FasGeometry(num_ports=4, aperture=1.0)
    config = SelectionConfig(k_sel=5, gamma_th=0.5, spacing="none")
    with pytest.raises(ValueError):
        shortlist(
            _observations(np.ones(4, dtype=complex)),
            np.ones(4, dtype=complex),
            config,
            geometry,
            1.0,
        )


def test_shortlist_targets_high_sinr_ports():
    # Selected ports should carry better instantaneous SINR on average
    # than the whole aperture (strong-gain clustering).
    rng = np.random.default_rng(10)
    geometry = FasGeometry(num_ports=1000, aperture=20.0)
    model = build_correlation(geometry)
    config = SelectionConfig(k_sel=20, gamma_th=0.6, spacing="sdm")
    noise_power = 0.1

    selected_total = 0.0
    overall_total = 0.0
    for _ in range(10):
        drop = sample_drop(model, 100, 1.0, 1.0, rng)
        for _ in range(5):
            block = SymbolBlock.random(100, 1.0, rng)
            obs = receive(drop, block, noise_power, rng)
            sinr = instantaneous_sinr(drop, block, obs.noise)
            picked = shortlist(obs, drop.desired_gains, config, geometry, 1.0)
            selected_total += float(np.mean(sinr[picked.ports]))
            overall_total += float(np.mean(sinr))
    assert selected_total > overall_total
