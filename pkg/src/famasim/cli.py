"""``fama-bench``: SER measurements, sweeps, dataset export, plots."""

from __future__ import annotations

import dataclasses

import click

from famasim import harness


def _parse_spacing(value: str) -> tuple[str, float | None]:
    """Parse ``sdm``, ``none``, or ``fixed:D`` with D the gap fraction."""
    if value in ("sdm", "none"):
        return value, None
    if value.startswith("fixed:"):
        try:
            fraction = float(value.split(":", 1)[1])
        except ValueError as exc:
            raise click.BadParameter(f"bad spacing fraction in {value!r}") from exc
        return "fixed", fraction
    raise click.BadParameter(
        f"spacing must be 'sdm', 'none', or 'fixed:D', got {value!r}"
    )


def _channel_options(command):
    for option in reversed(
        [
            click.option("--users", default=1, show_default=True, help="Number of users."),
            click.option("--ports", default=200, show_default=True, help="Fluid-antenna ports K."),
            click.option("--aperture", default=20.0, show_default=True, help="Aperture in wavelengths."),
            click.option("--ksel", default=20, show_default=True, help="Shortlist size for the turbo scheme."),
            click.option("--gamma-th", default=0.6, show_default=True, help="Candidate power threshold in (0, 1)."),
            click.option("--spacing", default="sdm", show_default=True, help="Shortlist spacing: sdm, none, or fixed:D."),
            click.option("--snr-db", default=10.0, show_default=True, help="Average SNR in dB."),
            click.option("--symbols", default=16, show_default=True, help="Symbols per block-fading drop."),
            click.option("--cbr", default=1.0, show_default=True, help="Channel bandwidth ratio metadata."),
            click.option("--seed", default=0, show_default=True, help="Experiment seed."),
            click.option("--workers", default=1, show_default=True, help="Worker processes."),
        ]
    ):
        command = option(command)
    return command


def _make_config(scheme, users, ports, aperture, ksel, gamma_th, spacing, snr_db,
                 symbols, cbr, seed, workers, trials, min_errors, max_trials):
    spacing_mode, fraction = _parse_spacing(spacing)
    kwargs = dict(
        scheme=scheme,
        num_users=users,
        num_ports=ports,
        aperture=aperture,
        k_sel=ksel,
        gamma_th=gamma_th,
        spacing=spacing_mode,
        snr_db=snr_db,
        num_trials=trials,
        symbols_per_drop=symbols,
        seed=seed,
        cbr=cbr,
        workers=workers,
        min_errors=min_errors,
        max_trials=max_trials,
    )
    if fraction is not None:
        kwargs["min_gap_fraction"] = fraction
    return harness.ExperimentConfig(**kwargs)


@click.group()
def main() -> None:
    """Monte-Carlo benchmarks for fluid-antenna multiple-access receivers."""


@main.command()
@click.option(
    "--scheme",
    type=click.Choice(harness.SCHEMES),
    default="turbo",
    show_default=True,
)
@_channel_options
@click.option("--trials", default=10_000, show_default=True, help="Block-fading drops.")
@click.option("--min-errors", default=0, show_default=True, help="Auto-extend until this many errors (0 disables).")
@click.option("--max-trials", default=0, show_default=True, help="Trial cap for auto-extension (0 = default cap).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="Append the result row to this CSV.")
def run(scheme, users, ports, aperture, ksel, gamma_th, spacing, snr_db, symbols,
        cbr, seed, workers, trials, min_errors, max_trials, out_path):
    """Measure SER for a single configuration."""
    config = _make_config(scheme, users, ports, aperture, ksel, gamma_th, spacing,
                          snr_db, symbols, cbr, seed, workers, trials, min_errors,
                          max_trials)
    record = harness.run_experiment(config)
    if out_path is not None:
        import os

        harness.write_records(out_path, [record], append=os.path.exists(out_path))
    click.echo(
        f"{record.scheme}: SER {record.ser:.3e} "
        f"[{record.ci_lo:.3e}, {record.ci_hi:.3e}] "
        f"({record.errors} errors / {record.symbols} symbols, "
        f"{record.wall_time_s:.1f} s)"
    )


@main.command()
@click.option(
    "--scheme",
    type=click.Choice(harness.SCHEMES),
    default="turbo",
    show_default=True,
)
@click.option("--axis", type=click.Choice(harness.SWEEP_AXES), required=True)
@click.option("--values", required=True, help="Comma-separated axis values, e.g. 1,50,100.")
@_channel_options
@click.option("--trials", default=10_000, show_default=True, help="Base drops per point.")
@click.option("--min-errors", default=100, show_default=True, help="Error target per point.")
@click.option("--max-trials", default=0, show_default=True, help="Trial cap per point (0 = default cap).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def sweep(scheme, axis, values, users, ports, aperture, ksel, gamma_th, spacing,
          snr_db, symbols, cbr, seed, workers, trials, min_errors, max_trials,
          out_path):
    """Sweep one axis, writing a CSV row per point."""
    try:
        parsed = [float(token) for token in values.split(",") if token.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"bad --values list {values!r}") from exc
    if not parsed:
        raise click.BadParameter("--values must list at least one number")
    config = _make_config(scheme, users, ports, aperture, ksel, gamma_th, spacing,
                          snr_db, symbols, cbr, seed, workers, trials, 0, max_trials)
    records = harness.run_sweep(config, axis, parsed, out_path, min_errors=min_errors)
    for record in records:
        click.echo(
            f"{axis}={getattr(record, {'users': 'U', 'ports': 'K', 'aperture': 'W', 'spacing-d': 'd', 'cbr': 'cbr', 'blocklength': 'cbr'}[axis])}"
            f": SER {record.ser:.3e} ({record.errors} errors)"
        )
    click.echo(f"wrote {len(records)} rows to {out_path}")


@main.command()
@click.option(
    "--scheme",
    type=click.Choice(harness.SCHEMES),
    default="turbo",
    show_default=True,
)
@_channel_options
@click.option("--records", "num_records", default=64, show_default=True, help="Blocks to export.")
@click.option("--block", "block_n", default=1024, show_default=True, help="Symbols per block.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def export(scheme, users, ports, aperture, ksel, gamma_th, spacing, snr_db, symbols,
           cbr, seed, workers, num_records, block_n, out_path):
    """Export clean/received block pairs as a FAMA-TX v1 dataset."""
    config = _make_config(scheme, users, ports, aperture, ksel, gamma_th, spacing,
                          snr_db, symbols, cbr, seed, workers, 1, 0, 0)
    harness.export_dataset(config, num_records, block_n, out_path)
    click.echo(f"wrote {num_records} records of {block_n} symbols to {out_path}")


@main.command()
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--x", "x_column", default=None, help="Column for the x axis (auto-detected by default).")
def plot(in_path, out_path, x_column):
    """Plot SER curves from a sweep CSV (log-scale SER axis)."""
    from famasim.plotting import plot_results

    used = plot_results(in_path, out_path, x_column)
    click.echo(f"plotted SER vs {used} to {out_path}")


if __name__ == "__main__":
    main()
