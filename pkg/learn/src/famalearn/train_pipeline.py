"""Three-stage training and evaluation for the learned receiver.

Stage 1 pretrains the block codec against Gaussian-only corruption at the
dataset's stated signal-to-noise ratio. Stage 2 trains the mixture
denoiser on frozen-codec latents. Stage 3 fine-tunes codec and denoiser
jointly on the realized residual impairments carried by the dataset,
minimizing L_total = L_JSCC + lambda * L_MixDDPM. Evaluation re-detects
reconstructed blocks to the nearest QPSK points and emits rows in the
benchmark CSV schema.

All loops are single-process and seeded; on CPU a fixed seed reproduces
the loss curves exactly.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass

import numpy as np
import torch

from .formats import BlockDataset, wilson_interval
from .jscc_codec import BlockCodec, CodecSpec, complex_to_latent
from .mixddpm import (DiffusionSchedule, MixtureDenoiser, MixtureSpec,
                      denoise, losses)

EVAL_SCHEMES = ("turbo_jscc", "turbo_jscc_mixddpm")

_VAL_FRACTION = 0.1


@dataclass(frozen=True)
class TrainConfig:
    lambda_weight: float = 1.0
    stage1_epochs: int = 100
    stage2_epochs: int = 100
    stage3_epochs: int = 20
    learning_rate: float = 1e-4
    batch_size: int = 64
    patience: int = 10
    num_sample_steps: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.lambda_weight <= 0.0:
            raise ValueError(f"lambda_weight must be positive, "
                             f"got {self.lambda_weight}")
        for name in ("stage1_epochs", "stage2_epochs", "stage3_epochs",
                     "batch_size", "patience", "num_sample_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")


def complex_mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-symbol mean square error (reporting metric)."""
    diff = a - b
    return (diff.real.square() + diff.imag.square()).mean()


def reconstruction_loss(recon: torch.Tensor, clean: torch.Tensor) -> torch.Tensor:
    """Squared reconstruction norm per block, batch-averaged (training loss)."""
    diff = recon - clean
    return (diff.real.square() + diff.imag.square()).sum(dim=1).mean()


def detect_blocks(blocks: torch.Tensor) -> torch.Tensor:
    """Nearest-QPSK detection to 2-bit symbol indices."""
    b0 = (blocks.imag < 0).to(torch.int8)
    b1 = (blocks.real < 0).to(torch.int8)
    return 2 * b0 + b1


def _complex64(blocks: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(blocks.astype(np.complex64)))


def _noise_std(dataset: BlockDataset) -> float:
    # Gaussian-only corruption at the dataset's mean residual power; for an
    # interference-free export this reduces to the thermal level. Per real
    # coordinate the variance is half the complex residual variance.
    power = float(np.mean(np.abs(dataset.residual) ** 2))
    return math.sqrt(max(power, 1e-12) / 2.0)


def _split(total: int, generator: torch.Generator):
    if total < 2:
        raise ValueError(f"need at least 2 records to train, got {total}")
    perm = torch.randperm(total, generator=generator)
    num_val = max(1, int(round(_VAL_FRACTION * total)))
    return perm[num_val:], perm[:num_val]


def _batches(indices: torch.Tensor, batch_size: int,
             generator: torch.Generator):
    order = indices[torch.randperm(indices.shape[0], generator=generator)]
    for start in range(0, order.shape[0], batch_size):
        yield order[start:start + batch_size]


def stage1_pretrain(dataset: BlockDataset, codec: BlockCodec,
                    config: TrainConfig) -> dict:
    """Codec-only pretraining with Gaussian corruption; no diffusion term.

    The corruption level matches the dataset's mean residual power, so the
    decoder is pretrained at the impairment scale it will actually see.
    Returns per-epoch {"train", "val"} loss curves and stops early once
    validation stalls for more than `patience` epochs.
    """
    clean = _complex64(dataset.clean)
    generator = torch.Generator().manual_seed(config.seed)
    train_idx, val_idx = _split(clean.shape[0], generator)
    noise_std = _noise_std(dataset)
    optimizer = torch.optim.Adam(codec.parameters(), lr=config.learning_rate)
    history = {"train": [], "val": []}
    best = math.inf
    stall = 0
    for _ in range(config.stage1_epochs):
        codec.train()
        batch_losses = []
        for batch in _batches(train_idx, config.batch_size, generator):
            blocks = clean[batch]
            latent = codec.encode(blocks)
            noisy = latent + noise_std * torch.randn(
                latent.shape, generator=generator, dtype=latent.dtype)
            loss = reconstruction_loss(codec.decode(noisy), blocks)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            batch_losses.append(float(loss.detach()))
        codec.eval()
        with torch.no_grad():
            blocks = clean[val_idx]
            latent = codec.encode(blocks)
            noisy = latent + noise_std * torch.randn(
                latent.shape, generator=generator, dtype=latent.dtype)
            val = float(reconstruction_loss(codec.decode(noisy), blocks))
        history["train"].append(float(np.mean(batch_losses)))
        history["val"].append(val)
        if val < best:
            best = val
            stall = 0
        else:
            stall += 1
            if stall > config.patience:
                break
    return history


def stage2_train_diffusion(dataset: BlockDataset, codec: BlockCodec,
                           denoiser: MixtureDenoiser,
                           schedule: DiffusionSchedule, mixture: MixtureSpec,
                           config: TrainConfig) -> dict:
    """Denoiser-only training on frozen-codec latents.

    The codec is only ever evaluated under no_grad and its parameters are
    not in the optimizer, so stage isolation holds by construction. The
    monitored variational terms are recorded once per epoch.
    """
    clean = _complex64(dataset.clean)
    codec.eval()
    with torch.no_grad():
        latents = torch.cat([
            codec.encode(clean[start:start + config.batch_size])
            for start in range(0, clean.shape[0], config.batch_size)
        ])
    generator = torch.Generator().manual_seed(config.seed + 1)
    optimizer = torch.optim.Adam(denoiser.parameters(),
                                 lr=config.learning_rate)
    all_idx = torch.arange(latents.shape[0])
    history = {"train": [], "vlb_terminal": [], "vlb_step": []}
    best = math.inf
    stall = 0
    for _ in range(config.stage2_epochs):
        denoiser.train()
        batch_losses = []
        first = True
        for batch in _batches(all_idx, config.batch_size, generator):
            loss, diagnostics = losses(latents[batch], denoiser, schedule,
                                       mixture, generator=generator,
                                       with_vlb=first)
            if first:
                history["vlb_terminal"].append(diagnostics["vlb_terminal"])
                history["vlb_step"].append(diagnostics["vlb_step"])
                first = False
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            batch_losses.append(float(loss.detach()))
        epoch_loss = float(np.mean(batch_losses))
        history["train"].append(epoch_loss)
        if epoch_loss < best:
            best = epoch_loss
            stall = 0
        else:
            stall += 1
            if stall > config.patience:
                break
    return history


def stage3_loss(clean: torch.Tensor, residual: torch.Tensor,
                codec: BlockCodec, denoiser: MixtureDenoiser,
                schedule: DiffusionSchedule, mixture: MixtureSpec,
                config: TrainConfig,
                generator: torch.Generator | None = None) -> dict:
    """Combined objective pieces; total = jscc + lambda_weight * mix exactly.

    The reverse chain runs with the posterior-weighted component means so
    the whole pipeline stays differentiable end to end.
    """
    latent = codec.encode(clean)
    noisy = latent + complex_to_latent(residual).to(latent.dtype)
    denoised = denoise(noisy, denoiser, schedule,
                       num_sample_steps=config.num_sample_steps,
                       expected_centers=True)
    jscc = reconstruction_loss(codec.decode(denoised), clean)
    mix, _ = losses(latent, denoiser, schedule, mixture, generator=generator)
    return {"total": jscc + config.lambda_weight * mix, "jscc": jscc,
            "mix": mix}


def stage3_joint(dataset: BlockDataset, codec: BlockCodec,
                 denoiser: MixtureDenoiser, schedule: DiffusionSchedule,
                 mixture: MixtureSpec, config: TrainConfig) -> dict:
    """Joint fine-tune of codec and denoiser on realized residuals."""
    clean = _complex64(dataset.clean)
    residual = _complex64(dataset.residual)
    generator = torch.Generator().manual_seed(config.seed + 2)
    train_idx, val_idx = _split(clean.shape[0], generator)
    parameters = list(codec.parameters()) + list(denoiser.parameters())
    optimizer = torch.optim.Adam(parameters, lr=config.learning_rate)
    history = {"train": [], "jscc": [], "mix": [], "val": []}
    best = math.inf
    stall = 0
    for _ in range(config.stage3_epochs):
        codec.train()
        denoiser.train()
        totals, jsccs, mixes = [], [], []
        for batch in _batches(train_idx, config.batch_size, generator):
            terms = stage3_loss(clean[batch], residual[batch], codec,
                                denoiser, schedule, mixture, config,
                                generator=generator)
            optimizer.zero_grad()
            terms["total"].backward()
            optimizer.step()
            totals.append(float(terms["total"].detach()))
            jsccs.append(float(terms["jscc"].detach()))
            mixes.append(float(terms["mix"].detach()))
        codec.eval()
        denoiser.eval()
        with torch.no_grad():
            recon = pipeline_forward(clean[val_idx], residual[val_idx],
                                     codec, denoiser, schedule,
                                     use_diffusion=True,
                                     sample_steps=config.num_sample_steps)
            val = float(reconstruction_loss(recon, clean[val_idx]))
        history["train"].append(float(np.mean(totals)))
        history["jscc"].append(float(np.mean(jsccs)))
        history["mix"].append(float(np.mean(mixes)))
        history["val"].append(val)
        if val < best:
            best = val
            stall = 0
        else:
            stall += 1
            if stall > config.patience:
                break
    return history


def pipeline_forward(clean: torch.Tensor, residual: torch.Tensor,
                     codec: BlockCodec, denoiser: MixtureDenoiser | None,
                     schedule: DiffusionSchedule | None, *,
                     use_diffusion: bool, sample_steps: int,
                     expected_centers: bool = True,
                     generator: torch.Generator | None = None) -> torch.Tensor:
    """Encode, impair with realized residuals, optionally denoise, decode."""
    latent = codec.encode(clean)
    noisy = latent + complex_to_latent(residual).to(latent.dtype)
    if use_diffusion:
        noisy = denoise(noisy, denoiser, schedule,
                        num_sample_steps=sample_steps,
                        expected_centers=expected_centers,
                        generator=generator)
    return codec.decode(noisy)


def symbol_mse(dataset: BlockDataset, codec: BlockCodec,
               denoiser: MixtureDenoiser | None,
               schedule: DiffusionSchedule | None, *, use_diffusion: bool,
               sample_steps: int, batch_size: int = 64) -> float:
    """End-to-end symbol reconstruction MSE over a whole dataset."""
    clean = _complex64(dataset.clean)
    residual = _complex64(dataset.residual)
    codec.eval()
    if denoiser is not None:
        denoiser.eval()
    total = 0.0
    with torch.no_grad():
        for start in range(0, clean.shape[0], batch_size):
            blocks = clean[start:start + batch_size]
            recon = pipeline_forward(blocks, residual[start:start + batch_size],
                                     codec, denoiser, schedule,
                                     use_diffusion=use_diffusion,
                                     sample_steps=sample_steps)
            total += float(complex_mse(recon, blocks)) * blocks.shape[0]
    return total / clean.shape[0]


def evaluate_ser(dataset: BlockDataset, codec: BlockCodec,
                 denoiser: MixtureDenoiser | None,
                 schedule: DiffusionSchedule | None, config: TrainConfig,
                 scheme: str, *, num_ports: int = 0, gamma_th: float = 0.0,
                 spacing: str = "", port_gap: float = 0.0,
                 seed: int = 0) -> dict:
    """Detect reconstructed blocks and return one benchmark CSV row.

    turbo_jscc decodes the impaired latent directly; turbo_jscc_mixddpm
    runs the reverse chain first using the posterior-weighted component
    means, which keeps the symmetric centers from accumulating a random
    walk over the strided chain. Channel metadata the dataset header does
    not carry (port count, shortlist settings) is provided by the caller
    and defaults to the placeholder values used for non-shortlist rows.
    """
    if scheme not in EVAL_SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of "
                         f"{EVAL_SCHEMES}")
    use_diffusion = scheme == "turbo_jscc_mixddpm"
    start_time = time.perf_counter()
    clean = _complex64(dataset.clean)
    residual = _complex64(dataset.residual)
    codec.eval()
    if denoiser is not None:
        denoiser.eval()
    errors = 0
    with torch.no_grad():
        for start in range(0, clean.shape[0], config.batch_size):
            blocks = clean[start:start + config.batch_size]
            recon = pipeline_forward(blocks, residual[start:start + config.batch_size],
                                     codec, denoiser, schedule,
                                     use_diffusion=use_diffusion,
                                     sample_steps=config.num_sample_steps)
            errors += int((detect_blocks(recon) != detect_blocks(blocks)).sum())
    symbols = dataset.num_records * dataset.block_n
    ser = errors / symbols
    ci_lo, ci_hi = wilson_interval(errors, symbols)
    return {
        "scheme": scheme,
        "U": dataset.num_users,
        "K": num_ports,
        "W": dataset.aperture,
        "ksel": dataset.k_sel_used,
        "gamma_th": gamma_th,
        "spacing": spacing,
        "d": port_gap,
        "cbr": codec.spec.cbr,
        "snr_db": dataset.snr_db,
        "trials": dataset.num_records,
        "symbols": symbols,
        "errors": errors,
        "ser": ser,
        "ci_lo": ci_lo,
        "ci_hi": ci_hi,
        "seed": seed,
        "wall_time_s": time.perf_counter() - start_time,
    }


def save_checkpoint(path, codec: BlockCodec, denoiser: MixtureDenoiser,
                    schedule: DiffusionSchedule, mixture: MixtureSpec,
                    config: TrainConfig) -> None:
    """Serialize model weights plus a JSON sidecar describing every spec."""
    torch.save({"codec": codec.state_dict(),
                "denoiser": denoiser.state_dict()}, path)
    sidecar = {
        "codec_spec": asdict(codec.spec),
        "denoiser": {
            "latent_dim": denoiser.latent_dim,
            "hidden": denoiser.hidden,
            "time_dim": denoiser.time_dim,
            "dropout": denoiser.dropout_rate,
            "learn_centers": denoiser.learn_centers,
        },
        "schedule": {
            "num_steps": schedule.num_steps,
            "beta_start": float(schedule.betas[0]),
            "beta_end": float(schedule.betas[-1]),
        },
        "mixture": {
            "weights": mixture.weights.tolist(),
            "centers": mixture.centers.tolist(),
            "sigmas": mixture.sigmas.tolist(),
        },
        "config": asdict(config),
    }
    with open(f"{path}.json", "w") as handle:
        json.dump(sidecar, handle, indent=2)


def load_checkpoint(path):
    """Rebuild (codec, denoiser, schedule, mixture, config) from disk."""
    with open(f"{path}.json") as handle:
        sidecar = json.load(handle)
    raw_spec = dict(sidecar["codec_spec"])
    for key in ("embed_dims", "attention_depths", "attention_heads"):
        raw_spec[key] = tuple(raw_spec[key])
    spec = CodecSpec(**raw_spec)
    mixture = MixtureSpec.create(**sidecar["mixture"])
    schedule = DiffusionSchedule.linear(**sidecar["schedule"])
    codec = BlockCodec(spec)
    denoiser = MixtureDenoiser(
        sidecar["denoiser"]["latent_dim"], mixture,
        hidden=sidecar["denoiser"]["hidden"],
        time_dim=sidecar["denoiser"]["time_dim"],
        dropout=sidecar["denoiser"]["dropout"],
        learn_centers=sidecar["denoiser"]["learn_centers"],
    )
    state = torch.load(path, map_location="cpu", weights_only=True)
    codec.load_state_dict(state["codec"])
    denoiser.load_state_dict(state["denoiser"])
    return codec, denoiser, schedule, mixture, TrainConfig(**sidecar["config"])
