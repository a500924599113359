"""Learned block codec between QPSK symbol blocks and channel latents.

The encoder maps a length-n complex symbol block to a real latent of
length 2n (one complex channel use per symbol, re/im stacked pairwise) and
power-normalizes it so each complex use carries the QPSK symbol power. The
decoder mirrors the encoder with transposed convolutions and reconstructs
the complex block from a denoised latent.

Both networks are convolutional with windowed self-attention stages and
leaky-ReLU activations, sized by a CodecSpec; presets cover a desk-scale
small model and the full-scale configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn


@dataclass(frozen=True)
class CodecSpec:
    """Architecture hyperparameters; cbr is block_n / 1024 by construction."""

    block_n: int
    embed_dims: tuple = (128, 256)
    attention_depths: tuple = (6, 6)
    attention_heads: tuple = (8, 16)
    window_size: int = 4
    patch_size: int = 2
    dropout: float = 0.1
    symbol_power: float = 1.0

    def __post_init__(self):
        if self.block_n < 2:
            raise ValueError(f"block_n must be at least 2, got {self.block_n}")
        for name in ("embed_dims", "attention_depths", "attention_heads"):
            if len(getattr(self, name)) != 2:
                raise ValueError(f"{name} must list one value per stage")
        if self.block_n % self.patch_size != 0:
            raise ValueError("block_n must be divisible by patch_size")
        stage1 = self.block_n // self.patch_size
        if stage1 % 2 != 0:
            raise ValueError("stage-1 length must be even for the downsample")
        for length in (stage1, stage1 // 2):
            if length % self.window_size != 0:
                raise ValueError(f"stage length {length} not divisible by "
                                 f"window {self.window_size}")
        for dim, heads in zip(self.embed_dims, self.attention_heads):
            if dim % heads != 0 or dim % min(8, dim) != 0:
                raise ValueError(f"embed dim {dim} incompatible with "
                                 f"{heads} heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.symbol_power <= 0.0:
            raise ValueError("symbol_power must be positive")

    @property
    def cbr(self) -> float:
        return self.block_n / 1024.0

    @property
    def latent_dim(self) -> int:
        return 2 * self.block_n


def preset_spec(name: str, block_n: int | None = None) -> CodecSpec:
    """Named presets: 'small' for desk-scale runs, 'full' for the large model."""
    if name == "small":
        return CodecSpec(block_n=block_n or 128, embed_dims=(32, 64),
                         attention_depths=(1, 1), attention_heads=(2, 4))
    if name == "full":
        return CodecSpec(block_n=block_n or 1024)
    raise ValueError(f"unknown preset {name!r}; expected 'small' or 'full'")


def latent_to_complex(latent: torch.Tensor) -> torch.Tensor:
    """Pair consecutive reals as (re, im): (B, 2n) -> complex (B, n)."""
    pairs = latent.view(latent.shape[0], -1, 2)
    return torch.complex(pairs[..., 0], pairs[..., 1])


def complex_to_latent(block: torch.Tensor) -> torch.Tensor:
    """Inverse pairing: complex (B, n) -> (B, 2n) with interleaved re/im."""
    stacked = torch.stack([block.real, block.imag], dim=-1)
    return stacked.reshape(block.shape[0], -1)


class _WindowAttention(nn.Module):
    def __init__(self, channels: int, heads: int, window: int):
        super().__init__()
        self.norm = nn.GroupNorm(min(8, channels), channels)
        self.attn = nn.MultiheadAttention(channels, heads, batch_first=True)
        self.window = window

    def forward(self, x):
        batch, channels, length = x.shape
        h = self.norm(x).permute(0, 2, 1)
        h = h.reshape(batch * (length // self.window), self.window, channels)
        out, _ = self.attn(h, h, h, need_weights=False)
        out = out.reshape(batch, length, channels).permute(0, 2, 1)
        return x + out


class _CodecBlock(nn.Module):
    """Residual convolution followed by attention within local windows."""

    def __init__(self, channels: int, heads: int, window: int, dropout: float):
        super().__init__()
        self.norm = nn.GroupNorm(min(8, channels), channels)
        self.conv = nn.Conv1d(channels, channels, 3, padding=1)
        self.drop = nn.Dropout(dropout)
        self.attn = _WindowAttention(channels, heads, window)

    def forward(self, x):
        x = x + self.drop(self.conv(F.leaky_relu(self.norm(x))))
        return self.attn(x)


def _stage(spec: CodecSpec, index: int) -> nn.ModuleList:
    return nn.ModuleList(
        _CodecBlock(spec.embed_dims[index], spec.attention_heads[index],
                    spec.window_size, spec.dropout)
        for _ in range(spec.attention_depths[index])
    )


class BlockCodec(nn.Module):
    """Encoder/decoder pair over complex symbol blocks.

    The encoder patch-embeds the two-channel (re, im) view of the block,
    runs two convolutional attention stages separated by a 2x downsample,
    and projects to 4*patch_size channels so the flattened latent has
    exactly 2n entries. The decoder mirrors every step with transposed
    convolutions.
    """

    def __init__(self, spec: CodecSpec):
        super().__init__()
        self.spec = spec
        d0, d1 = spec.embed_dims
        head_channels = 4 * spec.patch_size
        self.enc_stem = nn.Conv1d(2, d0, spec.patch_size, stride=spec.patch_size)
        self.enc_stage1 = _stage(spec, 0)
        self.enc_down = nn.Conv1d(d0, d1, 2, stride=2)
        self.enc_stage2 = _stage(spec, 1)
        self.enc_head = nn.Conv1d(d1, head_channels, 1)
        self.dec_head = nn.Conv1d(head_channels, d1, 1)
        self.dec_stage2 = _stage(spec, 1)
        self.dec_up = nn.ConvTranspose1d(d1, d0, 2, stride=2)
        self.dec_stage1 = _stage(spec, 0)
        self.dec_out = nn.ConvTranspose1d(d0, 2, spec.patch_size,
                                          stride=spec.patch_size)

    def encode(self, symbols: torch.Tensor) -> torch.Tensor:
        """Complex (B, n) block -> power-normalized real latent (B, 2n)."""
        if symbols.ndim != 2 or symbols.shape[1] != self.spec.block_n:
            raise ValueError(f"expected (batch, {self.spec.block_n}) complex "
                             f"block, got {tuple(symbols.shape)}")
        if not symbols.is_complex():
            raise ValueError("encode expects a complex-valued block")
        dtype = self.enc_stem.weight.dtype
        h = torch.stack([symbols.real, symbols.imag], dim=1).to(dtype)
        h = F.leaky_relu(self.enc_stem(h))
        for block in self.enc_stage1:
            h = block(h)
        h = F.leaky_relu(self.enc_down(h))
        for block in self.enc_stage2:
            h = block(h)
        h = self.enc_head(h)
        latent = h.permute(0, 2, 1).reshape(h.shape[0], -1)
        power = latent.pow(2).sum(dim=1, keepdim=True).clamp(min=1e-12)
        # Each complex use carries symbol_power, i.e. the 2n reals sum to
        # n * symbol_power per block.
        scale = torch.sqrt(self.spec.block_n * self.spec.symbol_power / power)
        return latent * scale

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        """Real latent (B, 2n) -> reconstructed complex block (B, n)."""
        if latent.ndim != 2 or latent.shape[1] != self.spec.latent_dim:
            raise ValueError(f"expected (batch, {self.spec.latent_dim}) latent, "
                             f"got {tuple(latent.shape)}")
        length = self.spec.latent_dim // (4 * self.spec.patch_size)
        h = latent.view(latent.shape[0], length, -1).permute(0, 2, 1)
        h = F.leaky_relu(self.dec_head(h))
        for block in self.dec_stage2:
            h = block(h)
        h = F.leaky_relu(self.dec_up(h))
        for block in self.dec_stage1:
            h = block(h)
        h = self.dec_out(h)
        return torch.complex(h[:, 0, :], h[:, 1, :])
