"""Learned receiver add-on: block codec plus mixture-diffusion denoising.

Consumes datasets and result files produced by the core link simulator
through their on-disk formats only (FAMA-TX v1 blocks, benchmark CSV).
"""

from .formats import (BlockDataset, CSV_COLUMNS, read_blocks,
                      read_result_rows, wilson_interval, write_blocks,
                      write_result_rows)
from .jscc_codec import (BlockCodec, CodecSpec, complex_to_latent,
                         latent_to_complex, preset_spec)
from .mixddpm import (DiffusionSchedule, MixtureDenoiser, MixtureSpec,
                      default_mixture, degenerate_mixture, denoise,
                      forward_sample_ddpm, forward_sample_mix,
                      forward_stepwise, loss_terms, losses, reverse_step)
from .train_pipeline import (TrainConfig, evaluate_ser, load_checkpoint,
                             pipeline_forward, save_checkpoint, stage1_pretrain,
                             stage2_train_diffusion, stage3_joint, stage3_loss,
                             symbol_mse)

__version__ = "0.1.0"

__all__ = [
    "BlockCodec", "BlockDataset", "CSV_COLUMNS", "CodecSpec",
    "DiffusionSchedule", "MixtureDenoiser", "MixtureSpec", "TrainConfig",
    "complex_to_latent", "default_mixture", "degenerate_mixture", "denoise",
    "evaluate_ser", "forward_sample_ddpm", "forward_sample_mix",
    "forward_stepwise", "latent_to_complex", "load_checkpoint", "loss_terms",
    "losses", "pipeline_forward", "preset_spec", "read_blocks",
    "read_result_rows", "reverse_step", "save_checkpoint", "stage1_pretrain",
    "stage2_train_diffusion", "stage3_joint", "stage3_loss", "symbol_mse",
    "wilson_interval", "write_blocks", "write_result_rows",
]
