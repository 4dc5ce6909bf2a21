"""Patch transformer with per-channel temporal attention followed by
cluster-masked attention across channels."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor, nn

from .errors import NonFiniteActivation, PatchTooLong, ShapeMismatch

MASK_FILL = -1e9


@dataclass(frozen=True)
class PatchConfig:
    patch_len: int = 16
    stride: int = 8
    d_model: int = 128
    n_heads: int = 16
    n_layers: int = 3
    dropout: float = 0.2

    def __post_init__(self):
        if self.patch_len < 1 or self.stride < 1:
            raise ValueError("patch_len and stride must be positive")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.n_layers < 1:
            raise ValueError("need at least one encoder layer")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def n_patches(self, seq_len: int) -> int:
        return n_patches(seq_len, self.patch_len, self.stride)


def n_patches(seq_len: int, patch_len: int, stride: int) -> int:
    if patch_len > seq_len:
        raise PatchTooLong(f"patch length {patch_len} exceeds look-back length {seq_len}")
    return (seq_len - patch_len) // stride + 1


def patchify(x: Tensor, patch_len: int, stride: int) -> Tensor:
    """(..., L) -> (..., C, patch_len); patch c starts at c * stride, no padding."""
    n_patches(x.shape[-1], patch_len, stride)
    return x.unfold(-1, patch_len, stride)


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, dropout: float = 0.0):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.out = nn.Linear(d_model, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: Tensor, mask: Tensor | None = None) -> tuple[Tensor, Tensor]:
        *lead, t, d = x.shape
        def heads(z):
            return z.reshape(*lead, t, self.n_heads, self.d_head).transpose(-3, -2)
        q, k, v = heads(self.q(x)), heads(self.k(x)), heads(self.v(x))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        if mask is not None:
            scores = scores + (1.0 - mask.to(scores.dtype)) * MASK_FILL
        attn = torch.softmax(scores, dim=-1)
        ctx = (attn @ v).transpose(-3, -2).reshape(*lead, t, d)
        return self.drop(self.out(ctx)), attn


class AttentionBlock(nn.Module):
    """Post-norm encoder block: LN(x + MSA(x)), then LN(. + MLP(.))."""

    def __init__(self, d_model: int, n_heads: int, dropout: float):
        super().__init__()
        self.attn = MultiHeadAttention(d_model, n_heads, dropout)
        self.norm1 = nn.LayerNorm(d_model)
        self.mlp = nn.Sequential(
            nn.Linear(d_model, 2 * d_model), nn.ReLU(), nn.Dropout(dropout),
            nn.Linear(2 * d_model, d_model), nn.Dropout(dropout),
        )
        self.norm2 = nn.LayerNorm(d_model)
        self.last_attn: Tensor | None = None

    def forward(self, x: Tensor, mask: Tensor | None = None, keep_attn: bool = False) -> Tensor:
        a, attn = self.attn(x, mask)
        if keep_attn:
            self.last_attn = attn.detach()
        h = self.norm1(x + a)
        return self.norm2(h + self.mlp(h))


class TemporalBlock(AttentionBlock):
    """Attention among the patches of each channel; (B, N, C, d) in and out."""

    def forward(self, z: Tensor, keep_attn: bool = False) -> Tensor:
        return super().forward(z, None, keep_attn)


class ChannelBlock(AttentionBlock):
    """Attention among channels at every patch position, restricted by ``mask``.

    Channels whose mask-vector entry is 0 skip the block and pass through
    unchanged.
    """

    def forward(self, z: Tensor, mask: Tensor, mvec: Tensor | None = None,
                keep_attn: bool = False) -> Tensor:
        n = z.shape[-3]
        if mask.shape != (n, n):
            raise ShapeMismatch(f"mask shape {tuple(mask.shape)} does not match {n} channels")
        tokens = z.transpose(-3, -2)  # (B, C, N, d)
        out = super().forward(tokens, mask, keep_attn).transpose(-3, -2)
        if mvec is None:
            mvec = (mask.bool() & ~torch.eye(n, dtype=torch.bool, device=mask.device)).any(dim=1)
        keep = mvec.bool().reshape(n, 1, 1)
        return torch.where(keep, out, z)


class EncoderLayer(nn.Module):
    def __init__(self, cfg: PatchConfig, channel_block: bool = True):
        super().__init__()
        self.temporal = TemporalBlock(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.channel = ChannelBlock(cfg.d_model, cfg.n_heads, cfg.dropout) if channel_block else None

    def forward(self, z: Tensor, mask: Tensor | None, mvec: Tensor | None,
                keep_attn: bool = False) -> Tensor:
        z = self.temporal(z, keep_attn)
        if self.channel is not None and mask is not None:
            z = self.channel(z, mask, mvec, keep_attn)
        return z


class MaskedPatchForecaster(nn.Module):
    """Maps look-back windows (B, N, L) to forecasts (B, N, S).

    All weights are shared across channels, so the same model serves any
    channel count; the cluster mask (N, N) is passed per call.
    """

    def __init__(self, seq_len: int, pred_len: int, cfg: PatchConfig = PatchConfig(),
                 instance_norm: bool = True, channel_block: bool = True):
        super().__init__()
        self.seq_len, self.pred_len, self.cfg = seq_len, pred_len, cfg
        self.instance_norm = instance_norm
        self.n_patches = cfg.n_patches(seq_len)
        self.embed = nn.Linear(cfg.patch_len, cfg.d_model)
        self.pos = nn.Parameter(torch.empty(self.n_patches, cfg.d_model).uniform_(-0.02, 0.02))
        self.drop = nn.Dropout(cfg.dropout)
        self.layers = nn.ModuleList(EncoderLayer(cfg, channel_block) for _ in range(cfg.n_layers))
        self.head = nn.Linear(self.n_patches * cfg.d_model, pred_len)

    def embed_patches(self, x: Tensor) -> Tensor:
        return self.drop(self.embed(patchify(x, self.cfg.patch_len, self.cfg.stride)) + self.pos)

    def encode(self, z: Tensor, mask: Tensor | None, keep_attn: bool = False) -> Tensor:
        mvec = None
        if mask is not None:
            mask = mask.to(z.dtype)
            n = mask.shape[0]
            mvec = (mask.bool() & ~torch.eye(n, dtype=torch.bool, device=mask.device)).any(dim=1)
        for layer in self.layers:
            z = layer(z, mask, mvec, keep_attn)
        if not torch.isfinite(z).all():
            raise NonFiniteActivation("encoder produced non-finite activations")
        return z

    def project(self, z: Tensor) -> Tensor:
        """Flatten (…, C, d) per channel and map to the horizon (normalized space)."""
        return self.head(z.flatten(-2))

    def forward(self, x: Tensor, mask: Tensor | np.ndarray | None = None,
                keep_attn: bool = False) -> Tensor:
        if x.shape[-1] != self.seq_len:
            raise ShapeMismatch(f"expected look-back length {self.seq_len}, got {x.shape[-1]}")
        if isinstance(mask, np.ndarray):
            mask = torch.as_tensor(mask, dtype=x.dtype, device=x.device)
        if self.instance_norm:
            mu = x.mean(dim=-1, keepdim=True).detach()
            sigma = torch.sqrt(x.var(dim=-1, keepdim=True, unbiased=False) + 1e-5).detach()
            x = (x - mu) / sigma
        y = self.project(self.encode(self.embed_patches(x), mask, keep_attn))
        if self.instance_norm:
            y = y * sigma + mu
        return y


def loss_pred(y_hat: Tensor, y: Tensor) -> Tensor:
    """||Y_hat - Y||_F^2 / (2N) per window, averaged over batch dims."""
    if y_hat.shape != y.shape:
        raise ShapeMismatch(f"forecast shape {tuple(y_hat.shape)} != target {tuple(y.shape)}")
    n = y.shape[-2]
    return (((y_hat - y) ** 2).sum(dim=(-2, -1)) / (2.0 * n)).mean()
