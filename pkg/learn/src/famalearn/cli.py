"""Command line driver: staged training and SER evaluation (fama-learn)."""

from __future__ import annotations

import os
from dataclasses import replace

import click

from .formats import read_blocks, write_result_rows
from .jscc_codec import BlockCodec, preset_spec
from .mixddpm import DiffusionSchedule, MixtureDenoiser, default_mixture
from .train_pipeline import (EVAL_SCHEMES, TrainConfig, evaluate_ser,
                             load_checkpoint, save_checkpoint,
                             stage1_pretrain, stage2_train_diffusion,
                             stage3_joint)


@click.group()
def main():
    """Train and evaluate the learned block receiver."""


_data_option = click.option("--data", required=True,
                            type=click.Path(exists=True, dir_okay=False),
                            help="FAMA-TX v1 dataset file.")
_ckpt_option = click.option("--ckpt", required=True,
                            type=click.Path(dir_okay=False),
                            help="Checkpoint file (JSON sidecar alongside).")


@main.command()
@_data_option
@_ckpt_option
@click.option("--preset", default="small",
              type=click.Choice(["small", "full"]), show_default=True)
@click.option("--epochs", default=100, show_default=True)
@click.option("--batch", default=64, show_default=True)
@click.option("--lr", default=1e-4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--learn-centers", is_flag=True,
              help="Make the mixture centers trainable.")
def stage1(data, ckpt, preset, epochs, batch, lr, seed, learn_centers):
    """Pretrain the codec on Gaussian-only corruption; write a checkpoint."""
    dataset = read_blocks(data)
    spec = preset_spec(preset, block_n=dataset.block_n)
    codec = BlockCodec(spec)
    mixture = default_mixture()
    denoiser = MixtureDenoiser(spec.latent_dim, mixture,
                               learn_centers=learn_centers)
    schedule = DiffusionSchedule.linear()
    config = TrainConfig(stage1_epochs=epochs, batch_size=batch,
                         learning_rate=lr, seed=seed)
    history = stage1_pretrain(dataset, codec, config)
    save_checkpoint(ckpt, codec, denoiser, schedule, mixture, config)
    click.echo(f"stage1: {len(history['val'])} epochs, "
               f"val MSE {history['val'][0]:.5f} -> {history['val'][-1]:.5f}")


@main.command()
@_data_option
@_ckpt_option
@click.option("--epochs", default=100, show_default=True)
def stage2(data, ckpt, epochs):
    """Train the mixture denoiser on frozen-codec latents."""
    dataset = read_blocks(data)
    codec, denoiser, schedule, mixture, config = load_checkpoint(ckpt)
    config = replace(config, stage2_epochs=epochs)
    history = stage2_train_diffusion(dataset, codec, denoiser, schedule,
                                     mixture, config)
    save_checkpoint(ckpt, codec, denoiser, schedule, mixture, config)
    click.echo(f"stage2: {len(history['train'])} epochs, "
               f"loss {history['train'][0]:.5f} -> {history['train'][-1]:.5f}")


@main.command()
@_data_option
@_ckpt_option
@click.option("--lambda", "lambda_weight", default=1.0, show_default=True,
              help="Weight of the diffusion term in the joint loss.")
@click.option("--epochs", default=20, show_default=True)
@click.option("--sample-steps", default=50, show_default=True,
              help="Reverse-chain steps used while fine-tuning.")
def stage3(data, ckpt, lambda_weight, epochs, sample_steps):
    """Joint fine-tune of codec and denoiser on realized residuals."""
    dataset = read_blocks(data)
    codec, denoiser, schedule, mixture, config = load_checkpoint(ckpt)
    config = replace(config, stage3_epochs=epochs,
                     lambda_weight=lambda_weight,
                     num_sample_steps=sample_steps)
    history = stage3_joint(dataset, codec, denoiser, schedule, mixture,
                           config)
    save_checkpoint(ckpt, codec, denoiser, schedule, mixture, config)
    click.echo(f"stage3: {len(history['train'])} epochs, "
               f"val MSE {history['val'][0]:.5f} -> {history['val'][-1]:.5f}")


@main.command(name="eval")
@_data_option
@_ckpt_option
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="CSV results file (appended to when it exists).")
@click.option("--scheme", default="both", show_default=True,
              type=click.Choice(("both",) + EVAL_SCHEMES))
@click.option("--ports", default=0, show_default=True,
              help="Port count recorded in the CSV metadata.")
@click.option("--sample-steps", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
def eval_command(data, ckpt, out, scheme, ports, sample_steps, seed):
    """Measure SER over a dataset and append benchmark CSV rows."""
    dataset = read_blocks(data)
    codec, denoiser, schedule, mixture, config = load_checkpoint(ckpt)
    config = replace(config, num_sample_steps=sample_steps)
    schemes = EVAL_SCHEMES if scheme == "both" else (scheme,)
    rows = [evaluate_ser(dataset, codec, denoiser, schedule, config, name,
                         num_ports=ports, seed=seed)
            for name in schemes]
    write_result_rows(out, rows, append=os.path.exists(out))
    for row in rows:
        click.echo(f"{row['scheme']}: ser={row['ser']:.5g} "
                   f"({row['errors']}/{row['symbols']} symbols)")


if __name__ == "__main__":
    main()
