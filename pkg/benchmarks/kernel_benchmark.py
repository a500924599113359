"""Compare the compiled drop kernel against the pure-numpy fallback.

Runs the same per-drop workload through both backends and reports wall
time plus the speedup ratio.  The two implementations must agree on the
error count for every drop; the benchmark aborts if they diverge.

Usage::

    python3 benchmarks/kernel_benchmark.py [--ports 256] [--symbols 2048]
"""

import argparse
import time

import numpy as np

from famasim.fas_channel import FasGeometry, build_correlation, sample_drop
from famasim.kernels import MODE_FASTFAMA, MODE_RANKED, load_backend
from famasim.phy_signal import constellation
from famasim.port_select import candidate_set, predicted_desired_power


def build_workload(num_drops, num_users, num_ports, aperture, symbols, snr_db, seed):
    geometry = FasGeometry(num_ports=num_ports, aperture=aperture)
    model = build_correlation(geometry)
    points = constellation(1.0)
    noise_power = 1.0 / 10.0 ** (snr_db / 10.0)
    rng = np.random.default_rng(seed)
    drops = []
    for _ in range(num_drops):
        drop = sample_drop(model, num_users, 1.0, 1.0, rng)
        sym = rng.integers(0, 4, size=(num_users, symbols)).astype(np.uint8)
        normals = rng.standard_normal((2, num_ports, symbols))
        noise = np.sqrt(noise_power / 2.0) * (normals[0] + 1j * normals[1])
        received = np.ascontiguousarray(drop.gains.T @ points[sym] + noise)
        desired = np.ascontiguousarray(drop.gains[0])
        drops.append((received, desired, np.ascontiguousarray(sym[0])))
    return points, drops


def run_backend(impl, points, drops, mode, k_sel, gamma_th, gap):
    empty = np.empty(0, dtype=np.int64)
    errors = []
    start = time.perf_counter()
    for received, desired, sym in drops:
        if mode == MODE_RANKED:
            powers = predicted_desired_power(desired, 1.0)
            candidates = candidate_set(powers, gamma_th)
        else:
            candidates = empty
        out = impl.simulate_drop(
            received, desired, sym, points, 1.0, 1.0,
            mode, empty, candidates, k_sel, gap, False,
        )
        errors.append(out[0])
    return time.perf_counter() - start, errors


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--drops", type=int, default=20)
    parser.add_argument("--users", type=int, default=8)
    parser.add_argument("--ports", type=int, default=256)
    parser.add_argument("--aperture", type=float, default=10.0)
    parser.add_argument("--symbols", type=int, default=2048)
    parser.add_argument("--ksel", type=int, default=8)
    parser.add_argument("--gamma-th", type=float, default=0.6)
    parser.add_argument("--snr-db", type=float, default=10.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    points, drops = build_workload(
        args.drops, args.users, args.ports, args.aperture,
        args.symbols, args.snr_db, args.seed,
    )

    backends = {}
    for name in ("numpy", "cython"):
        try:
            backends[name] = load_backend(name)
        except ImportError:
            print(f"{name:>8}: unavailable")
    if "cython" not in backends:
        raise SystemExit("compiled backend missing; build the package first")

    for label, mode, gap in (
        ("ranked shortlist", MODE_RANKED, 1),
        ("fast port switch", MODE_FASTFAMA, 1),
    ):
        print(f"-- {label} ({args.drops} drops, K={args.ports}, S={args.symbols})")
        times = {}
        results = {}
        for name, impl in backends.items():
            times[name], results[name] = run_backend(
                impl, points, drops, mode, args.ksel, args.gamma_th, gap,
            )
            print(f"{name:>8}: {times[name]:.3f} s")
        if results["numpy"] != results["cython"]:
            raise SystemExit("backend mismatch: error counts differ")
        print(f"{'speedup':>8}: {times['numpy'] / times['cython']:.1f}x")


if __name__ == "__main__":
    main()
