"""Monte-Carlo SER harness over block-fading drops.

One *trial* is a single block-fading drop: the channel is frozen, then
``symbols_per_drop`` symbol instants are transmitted with fresh
interferer symbols and noise each instant.  Trials are embarrassingly
parallel; trial ``t`` of an experiment seeded ``s`` always consumes the
dedicated RNG substream ``SeedSequence(s, spawn_key=(t, user))``, so
error counts are bit-identical no matter how trials are scheduled across
worker processes, and the total is accumulated as an exact integer sum.

SER for the tagged user (always user 0) is reported with a Wilson 95%
confidence interval.  When ``min_errors`` is positive the experiment
keeps appending batches of ``num_trials`` further trials (deterministic
trial indices) until the error target or the trial cap is hit.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from famasim import kernels
from famasim.fas_channel import FasGeometry, build_correlation
from famasim.phy_signal import constellation
from famasim.port_select import (
    SPACING_FIXED,
    SPACING_MODES,
    SPACING_SDM,
    SelectionConfig,
    candidate_set,
    sdm_select,
)

SCHEME_TURBO = "turbo"
SCHEME_ALLPORT = "allport"
SCHEME_FASTFAMA = "fastfama"
SCHEMES = (SCHEME_TURBO, SCHEME_ALLPORT, SCHEME_FASTFAMA)

CSV_COLUMNS = (
    "scheme",
    "U",
    "K",
    "W",
    "ksel",
    "gamma_th",
    "spacing",
    "d",
    "cbr",
    "snr_db",
    "trials",
    "symbols",
    "errors",
    "ser",
    "ci_lo",
    "ci_hi",
    "seed",
    "wall_time_s",
)

# Two-sided 95% normal quantile used by the Wilson interval.
_Z95 = 1.959963984540054


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one SER measurement."""

    scheme: str = SCHEME_TURBO
    num_users: int = 1
    num_ports: int = 200
    aperture: float = 20.0
    k_sel: int = 20
    gamma_th: float = 0.6
    spacing: str = SPACING_SDM
    min_gap_fraction: float = 0.05
    snr_db: float = 10.0
    num_trials: int = 10_000
    symbols_per_drop: int = 16
    seed: int = 0
    cbr: float = 1.0
    desired_power: float = 1.0
    cross_power: float = 1.0
    symbol_power: float = 1.0
    workers: int = 1
    min_errors: int = 0
    max_trials: int = 0

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.num_users < 1:
            raise ValueError(f"need at least one user, got {self.num_users}")
        if self.num_trials < 1 or self.symbols_per_drop < 1:
            raise ValueError("num_trials and symbols_per_drop must be positive")
        if self.workers < 1:
            raise ValueError(f"workers must be positive, got {self.workers}")
        if self.symbol_power < 0 or self.desired_power < 0 or self.cross_power < 0:
            raise ValueError("powers must be nonnegative")
        if self.cbr <= 0:
            raise ValueError(f"cbr must be positive, got {self.cbr}")
        if self.scheme == SCHEME_TURBO:
            if self.k_sel > self.num_ports:
                raise ValueError(
                    f"k_sel={self.k_sel} exceeds the {self.num_ports} ports"
                )
            # Delegate the remaining shortlisting validation.
            self.selection  # noqa: B018

    @property
    def selection(self) -> SelectionConfig:
        return SelectionConfig(
            k_sel=self.k_sel,
            gamma_th=self.gamma_th,
            spacing=self.spacing,
            min_gap_fraction=self.min_gap_fraction,
        )

    @property
    def geometry(self) -> FasGeometry:
        return FasGeometry(num_ports=self.num_ports, aperture=self.aperture)

    @property
    def noise_power(self) -> float:
        """Noise variance achieving the configured average SNR."""
        return self.desired_power * self.symbol_power / 10.0 ** (self.snr_db / 10.0)


@dataclass(frozen=True)
class SerRecord:
    """One CSV row of harness output."""

    scheme: str
    U: int
    K: int
    W: float
    ksel: int
    gamma_th: float
    spacing: str
    d: float
    cbr: float
    snr_db: float
    trials: int
    symbols: int
    errors: int
    ser: float
    ci_lo: float
    ci_hi: float
    seed: int
    wall_time_s: float

    def to_row(self) -> list:
        data = asdict(self)
        return [data[column] for column in CSV_COLUMNS]


def wilson_interval(
    errors: int, total: int, z: float = _Z95
) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if total <= 0:
        raise ValueError(f"total count must be positive, got {total}")
    if not 0 <= errors <= total:
        raise ValueError(f"errors={errors} outside [0, {total}]")
    p_hat = errors / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (p_hat + z2 / (2.0 * total)) / denom
    half = (
        z
        * math.sqrt(p_hat * (1.0 - p_hat) / total + z2 / (4.0 * total * total))
        / denom
    )
    lo = 0.0 if errors == 0 else max(center - half, 0.0)
    hi = 1.0 if errors == total else min(center + half, 1.0)
    return lo, hi


def write_records(path, records, append: bool = False) -> None:
    """Write SER records as CSV, emitting the header for new files."""
    mode = "a" if append else "w"
    with open(path, mode, newline="") as handle:
        writer = csv.writer(handle)
        if not append or handle.tell() == 0:
            writer.writerow(CSV_COLUMNS)
        for record in records:
            writer.writerow(record.to_row())


def read_records(path) -> list[SerRecord]:
    """Read back CSV rows written by :func:`write_records`."""
    records = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns in {path}")
        for row in reader:
            records.append(
                SerRecord(
                    scheme=row["scheme"],
                    U=int(row["U"]),
                    K=int(row["K"]),
                    W=float(row["W"]),
                    ksel=int(row["ksel"]),
                    gamma_th=float(row["gamma_th"]),
                    spacing=row["spacing"],
                    d=float(row["d"]),
                    cbr=float(row["cbr"]),
                    snr_db=float(row["snr_db"]),
                    trials=int(row["trials"]),
                    symbols=int(row["symbols"]),
                    errors=int(row["errors"]),
                    ser=float(row["ser"]),
                    ci_lo=float(row["ci_lo"]),
                    ci_hi=float(row["ci_hi"]),
                    seed=int(row["seed"]),
                    wall_time_s=float(row["wall_time_s"]),
                )
            )
    return records


def _build_payload(config: ExperimentConfig) -> dict:
    """Precompute everything trials share: correlation factor, routing."""
    geometry = config.geometry
    model = build_correlation(geometry)
    scales = np.full(config.num_users, np.sqrt(config.cross_power))
    scales[0] = np.sqrt(config.desired_power)
    return {
        "config": config,
        "geometry": geometry,
        "root": model.root,
        "scales": scales,
        "points": constellation(config.symbol_power),
        "user": 0,
        "noise_power": config.noise_power,
    }


def _simulate_trial(payload: dict, trial: int, collect: bool = False):
    """Run one block-fading drop on its dedicated RNG substream.

    Returns ``(errors, detected, combined, weight, sent)`` where the last
    three are ``None`` unless ``collect`` is set.
    """
    config: ExperimentConfig = payload["config"]
    root = payload["root"]
    user = payload["user"]
    num_users = config.num_users
    num_ports = config.num_ports
    num_symbols = config.symbols_per_drop
    points = payload["points"]

    seq = np.random.SeedSequence(entropy=config.seed, spawn_key=(trial, user))
    rng = np.random.default_rng(seq)

    normals = rng.standard_normal((num_users, 2, root.shape[1]))
    white = np.sqrt(0.5) * (normals[:, 0, :] + 1j * normals[:, 1, :])
    gains = payload["scales"][:, np.newaxis] * (white @ root.T)
    sym = rng.integers(0, 4, size=(num_users, num_symbols), dtype=np.uint8)
    normals = rng.standard_normal((2, num_ports, num_symbols))
    noise = np.sqrt(payload["noise_power"] / 2.0) * (normals[0] + 1j * normals[1])

    received = gains.T @ points[sym]
    received += noise
    desired = np.ascontiguousarray(gains[user])
    sym_user = sym[user]

    no_ports = np.empty(0, dtype=np.int64)
    mode = kernels.MODE_FIXED_PORTS
    ports = no_ports
    candidates = no_ports
    k_sel = 0
    gap = 1
    if config.scheme == SCHEME_ALLPORT:
        ports = np.arange(num_ports, dtype=np.int64)
    elif config.scheme == SCHEME_FASTFAMA:
        mode = kernels.MODE_FASTFAMA
    else:
        cand = candidate_set(desired, config.gamma_th).astype(np.int64)
        if config.spacing == SPACING_SDM and config.k_sel >= 2:
            # The max-min dispersion objective ignores per-symbol
            # deviations, so the SDM shortlist is a per-drop constant.
            ports = sdm_select(cand, config.k_sel, payload["geometry"]).ports
        else:
            mode = kernels.MODE_RANKED
            candidates = cand
            k_sel = config.k_sel
            if config.spacing == SPACING_FIXED:
                gap = math.ceil(config.min_gap_fraction * num_ports)

    errors, detected, combined, weight = kernels.simulate_drop(
        received,
        desired,
        sym_user,
        points,
        config.desired_power,
        config.symbol_power,
        mode,
        ports,
        candidates,
        k_sel,
        gap,
        collect,
    )
    if not collect:
        return errors, None, None, None, None
    return errors, detected, combined, weight, points[sym_user]


_WORKER_PAYLOAD: dict | None = None


def _init_worker(config: ExperimentConfig) -> None:
    global _WORKER_PAYLOAD
    _WORKER_PAYLOAD = _build_payload(config)


def _worker_trials(trials: list[int]) -> int:
    total = 0
    for trial in trials:
        total += _simulate_trial(_WORKER_PAYLOAD, trial)[0]
    return total


def _run_batch(
    payload: dict,
    start: int,
    count: int,
    executor: ProcessPoolExecutor | None,
    workers: int,
) -> int:
    trials = range(start, start + count)
    if executor is None:
        return sum(_simulate_trial(payload, trial)[0] for trial in trials)
    chunks = [
        chunk.tolist() for chunk in np.array_split(np.asarray(trials), workers * 4)
    ]
    chunks = [chunk for chunk in chunks if chunk]
    return sum(executor.map(_worker_trials, chunks))


def run_experiment(config: ExperimentConfig) -> SerRecord:
    """Measure SER for one configuration.

    Runs ``num_trials`` drops, then, if ``min_errors > 0``, keeps running
    equal-sized batches until the error target is reached or the trial
    cap (``max_trials``, defaulting to ``100 * num_trials``) is hit.
    """
    start_time = time.perf_counter()
    payload = _build_payload(config)

    if config.min_errors > 0:
        cap = config.max_trials if config.max_trials > 0 else 100 * config.num_trials
    else:
        cap = config.max_trials if config.max_trials > 0 else config.num_trials
    cap = max(cap, config.num_trials)

    executor = None
    if config.workers > 1:
        executor = ProcessPoolExecutor(
            max_workers=config.workers,
            initializer=_init_worker,
            initargs=(config,),
        )
    try:
        errors = 0
        trials_done = 0
        while trials_done < cap:
            batch = min(config.num_trials, cap - trials_done)
            errors += _run_batch(payload, trials_done, batch, executor, config.workers)
            trials_done += batch
            if config.min_errors <= 0 or errors >= config.min_errors:
                break
    finally:
        if executor is not None:
            executor.shutdown()

    symbols = trials_done * config.symbols_per_drop
    ser = errors / symbols
    ci_lo, ci_hi = wilson_interval(errors, symbols)
    return SerRecord(
        scheme=config.scheme,
        U=config.num_users,
        K=config.num_ports,
        W=config.aperture,
        ksel=config.k_sel if config.scheme == SCHEME_TURBO else 0,
        gamma_th=config.gamma_th if config.scheme == SCHEME_TURBO else 0.0,
        spacing=config.spacing if config.scheme == SCHEME_TURBO else "",
        d=(
            config.min_gap_fraction
            if config.scheme == SCHEME_TURBO and config.spacing == SPACING_FIXED
            else 0.0
        ),
        cbr=config.cbr,
        snr_db=config.snr_db,
        trials=trials_done,
        symbols=symbols,
        errors=errors,
        ser=ser,
        ci_lo=ci_lo,
        ci_hi=ci_hi,
        seed=config.seed,
        wall_time_s=time.perf_counter() - start_time,
    )


def export_dataset(
    config: ExperimentConfig, num_records: int, block_n: int, path
) -> None:
    """Export block-level training data in the FAMA-TX v1 format.

    Each record is one block-fading drop carrying ``block_n`` symbol
    instants: the tagged user's clean transmitted block, and the receiver
    front-end output normalized by the realized combiner gain so that
    ``received - clean`` is the residual impairment after combining.
    Record ``i`` uses the same RNG substream as harness trial ``i``, so an
    export is exactly reproducible from ``(config, num_records)``.
    """
    from famasim.dataset import Dataset, write_dataset

    if num_records < 1 or block_n < 1:
        raise ValueError("num_records and block_n must be positive")
    payload = _build_payload(replace(config, symbols_per_drop=block_n))
    clean = np.empty((num_records, block_n), dtype=np.complex64)
    received = np.empty((num_records, block_n), dtype=np.complex64)
    for record in range(num_records):
        _, _, combined, weight, sent = _simulate_trial(payload, record, collect=True)
        clean[record] = sent
        normalized = np.zeros_like(combined)
        np.divide(combined, weight, out=normalized, where=weight > 0)
        received[record] = normalized
    if config.scheme == SCHEME_ALLPORT:
        k_sel_used = config.num_ports
    elif config.scheme == SCHEME_FASTFAMA:
        k_sel_used = 1
    else:
        k_sel_used = config.k_sel
    write_dataset(
        path,
        Dataset(
            clean=clean,
            received=received,
            num_users=config.num_users,
            k_sel_used=k_sel_used,
            aperture=config.aperture,
            snr_db=config.snr_db,
        ),
    )


SWEEP_AXES = ("users", "ports", "aperture", "spacing-d", "cbr", "blocklength")


def _apply_axis(config: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis == "users":
        return replace(config, num_users=int(value))
    if axis == "ports":
        return replace(config, num_ports=int(value))
    if axis == "aperture":
        return replace(config, aperture=float(value))
    if axis == "spacing-d":
        return replace(config, spacing=SPACING_FIXED, min_gap_fraction=float(value))
    if axis == "cbr":
        return replace(config, cbr=float(value))
    if axis == "blocklength":
        # Blocklength n maps onto the channel-bandwidth-ratio metadata
        # n / 1024; it does not change the per-symbol physics.
        return replace(config, cbr=float(value) / 1024.0)
    raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")


def run_sweep(
    config: ExperimentConfig,
    axis: str,
    values,
    out_path=None,
    min_errors: int = 100,
) -> list[SerRecord]:
    """Run one experiment per axis value, optionally appending CSV rows.

    Every point inherits ``config`` with the axis value applied and
    ``min_errors`` (default 100) enforced through trial auto-extension.
    """
    records = []
    for index, value in enumerate(values):
        point = _apply_axis(config, axis, value)
        if point.min_errors <= 0:
            point = replace(point, min_errors=min_errors)
        records.append(run_experiment(point))
        if out_path is not None:
            write_records(out_path, records[-1:], append=index > 0)
    return records
