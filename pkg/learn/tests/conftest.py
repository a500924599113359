"""Shared fixtures for the learned-receiver suite.

Every dataset and reference row is produced by invoking the installed
``fama-bench`` command in a subprocess, so the suite exercises the real
interchange files rather than private simulator state. The trained-model
fixture runs the full three-stage schedule once per session; the budgets
below are sized for a single core.
"""

import copy
import shutil
import subprocess
from types import SimpleNamespace

import pytest
import torch

from famalearn import (
    BlockCodec,
    BlockDataset,
    DiffusionSchedule,
    MixtureDenoiser,
    TrainConfig,
    default_mixture,
    preset_spec,
    read_blocks,
    read_result_rows,
    stage1_pretrain,
    stage2_train_diffusion,
    stage3_joint,
)

# Operating point shared by most generated data: a shortlist-receiver cell
# deep enough into the interference-limited region that the learned
# receiver sees realistic residuals, small enough to train on one core.
CHANNEL_ARGS = (
    "--users", "16", "--ports", "64", "--aperture", "20",
    "--ksel", "56", "--gamma-th", "0.05", "--spacing", "sdm",
    "--snr-db", "10",
)
# Same cell with half the users. The residual power drops from ~0.49 to
# ~0.23, light enough that the joint stage has recoverable structure
# left on held-out records; the learning-signal gate trains here.
LIGHT_CHANNEL_ARGS = (
    "--users", "8", "--ports", "64", "--aperture", "20",
    "--ksel", "56", "--gamma-th", "0.05", "--spacing", "sdm",
    "--snr-db", "10",
)
BLOCK_N = 128

STAGE1_CONFIG = TrainConfig(stage1_epochs=120, learning_rate=1e-3, seed=0)
STAGE2_CONFIG = TrainConfig(stage2_epochs=30, learning_rate=1e-3, seed=0)
STAGE3_CONFIG = TrainConfig(stage3_epochs=20, learning_rate=3e-4,
                            num_sample_steps=6, seed=0)


def bench_command():
    path = shutil.which("fama-bench")
    if path is None:
        pytest.fail("fama-bench is not on PATH; install the simulator package")
    return path


def run_bench(*args):
    command = (bench_command(),) + tuple(str(a) for a in args)
    result = subprocess.run(command, capture_output=True, text=True)
    if result.returncode != 0:
        pytest.fail(f"{' '.join(command)} failed:\n{result.stderr}")
    return result.stdout


def subset(dataset: BlockDataset, records: int) -> BlockDataset:
    return BlockDataset(
        clean=dataset.clean[:records],
        received=dataset.received[:records],
        num_users=dataset.num_users,
        k_sel_used=dataset.k_sel_used,
        aperture=dataset.aperture,
        snr_db=dataset.snr_db,
    )


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("datasets")


@pytest.fixture(scope="session")
def train_dataset(data_dir):
    path = data_dir / "train_blocks.bin"
    run_bench("export", "--scheme", "turbo", *CHANNEL_ARGS,
              "--records", 768, "--block", BLOCK_N, "--seed", 1,
              "--out", path)
    return read_blocks(path)


@pytest.fixture(scope="session")
def eval_dataset(data_dir):
    path = data_dir / "eval_blocks.bin"
    run_bench("export", "--scheme", "turbo", *CHANNEL_ARGS,
              "--records", 256, "--block", BLOCK_N, "--seed", 2,
              "--out", path)
    return read_blocks(path)


@pytest.fixture(scope="session")
def light_train_dataset(data_dir):
    path = data_dir / "light_train_blocks.bin"
    run_bench("export", "--scheme", "turbo", *LIGHT_CHANNEL_ARGS,
              "--records", 768, "--block", BLOCK_N, "--seed", 1,
              "--out", path)
    return read_blocks(path)


@pytest.fixture(scope="session")
def light_eval_dataset(data_dir):
    path = data_dir / "light_eval_blocks.bin"
    run_bench("export", "--scheme", "turbo", *LIGHT_CHANNEL_ARGS,
              "--records", 256, "--block", BLOCK_N, "--seed", 2,
              "--out", path)
    return read_blocks(path)


@pytest.fixture(scope="session")
def allport_dataset(data_dir):
    path = data_dir / "allport_blocks.bin"
    run_bench("export", "--scheme", "allport",
              "--users", 16, "--ports", 64, "--aperture", 20,
              "--snr-db", 10, "--records", 256, "--block", BLOCK_N,
              "--seed", 3, "--out", path)
    return read_blocks(path)


@pytest.fixture(scope="session")
def allport_row(data_dir):
    path = data_dir / "allport_row.csv"
    run_bench("run", "--scheme", "allport",
              "--users", 16, "--ports", 64, "--aperture", 20,
              "--snr-db", 10, "--trials", 256, "--symbols", BLOCK_N,
              "--seed", 3, "--out", path)
    rows = read_result_rows(path)
    assert len(rows) == 1
    return rows[0]


@pytest.fixture(scope="session")
def tiny_dataset_path(data_dir):
    # Small export for CLI round-trips; block length stays divisible by
    # the patch and window factors of the small preset.
    path = data_dir / "tiny_blocks.bin"
    run_bench("export", "--scheme", "turbo", *CHANNEL_ARGS,
              "--records", 48, "--block", 64, "--seed", 5,
              "--out", path)
    return path


def train_three_stages(dataset):
    """Take a fresh codec and denoiser through the full schedule."""
    spec = preset_spec("small", block_n=dataset.block_n)
    mixture = default_mixture()
    schedule = DiffusionSchedule.linear()
    torch.manual_seed(0)
    codec = BlockCodec(spec)
    denoiser = MixtureDenoiser(spec.latent_dim, mixture)

    history1 = stage1_pretrain(dataset, codec, STAGE1_CONFIG)
    codec_stage1 = copy.deepcopy(codec)
    history2 = stage2_train_diffusion(dataset, codec, denoiser,
                                      schedule, mixture, STAGE2_CONFIG)
    history3 = stage3_joint(dataset, codec, denoiser, schedule,
                            mixture, STAGE3_CONFIG)
    return SimpleNamespace(
        codec=codec,
        codec_stage1=codec_stage1,
        denoiser=denoiser,
        schedule=schedule,
        mixture=mixture,
        history1=history1,
        history2=history2,
        history3=history3,
        eval_config=TrainConfig(num_sample_steps=6, seed=0),
    )


@pytest.fixture(scope="session")
def trained(train_dataset):
    """Codec and denoiser trained on the interference-limited cell."""
    bundle = train_three_stages(train_dataset)
    # Re-seeding reproduces the exact initial weights of bundle.codec.
    torch.manual_seed(0)
    bundle.untrained_codec = BlockCodec(
        preset_spec("small", block_n=train_dataset.block_n))
    return bundle


@pytest.fixture(scope="session")
def trained_light(light_train_dataset):
    """Codec and denoiser trained on the light-interference cell."""
    return train_three_stages(light_train_dataset)
