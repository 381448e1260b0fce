"""Dilated residual convolutional encoder producing per-timestep embeddings."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


@dataclass(frozen=True)
class EncoderConfig:
    input_dims: int = 1
    hidden_dims: int = 64
    output_dims: int = 320
    n_residual_blocks: int = 10
    kernel_size: int = 3
    dropout: float = 0.1

    def validate(self):
        for key in ("input_dims", "hidden_dims", "output_dims", "n_residual_blocks", "kernel_size"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be positive, got {getattr(self, key)}")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def dilations(self) -> list[int]:
        return [2 ** l for l in range(self.n_residual_blocks + 1)]


class SamePadConv(nn.Module):
    def __init__(self, in_channels, out_channels, kernel_size, dilation=1):
        super().__init__()
        self.receptive_field = (kernel_size - 1) * dilation + 1
        padding = self.receptive_field // 2
        self.conv = nn.Conv1d(in_channels, out_channels, kernel_size,
                              padding=padding, dilation=dilation)
        # even receptive fields overshoot by one step
        self.remove = 1 if self.receptive_field % 2 == 0 else 0

    def forward(self, x):
        out = self.conv(x)
        if self.remove:
            out = out[:, :, :-self.remove]
        return out


class ConvBlock(nn.Module):
    def __init__(self, in_channels, out_channels, kernel_size, dilation, final=False):
        super().__init__()
        self.conv1 = SamePadConv(in_channels, out_channels, kernel_size, dilation)
        self.conv2 = SamePadConv(out_channels, out_channels, kernel_size, dilation)
        self.projector = (nn.Conv1d(in_channels, out_channels, 1)
                          if in_channels != out_channels or final else None)

    def forward(self, x):
        residual = x if self.projector is None else self.projector(x)
        x = F.gelu(x)
        x = self.conv1(x)
        x = F.gelu(x)
        x = self.conv2(x)
        return x + residual


class Encoder(nn.Module):
    """Linear input projection followed by dilated conv blocks.

    Block ``l`` (0-based) uses dilation ``2**l``; the last block maps
    ``hidden_dims`` to ``output_dims`` through a 1x1 projected skip.
    Input ``(B, L)`` or ``(B, L, 1)``; output ``(B, L, output_dims)``.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.input_fc = nn.Linear(cfg.input_dims, cfg.hidden_dims)
        channels = [cfg.hidden_dims] * cfg.n_residual_blocks + [cfg.output_dims]
        blocks = []
        for l, (d, out) in enumerate(zip(cfg.dilations, channels)):
            cin = cfg.hidden_dims
            blocks.append(ConvBlock(cin, out, cfg.kernel_size, d, final=(l == len(channels) - 1)))
        self.blocks = nn.Sequential(*blocks)
        self.repr_dropout = nn.Dropout(cfg.dropout)

    def forward(self, x):
        if x.ndim == 2:
            x = x.unsqueeze(-1)
        h = self.input_fc(x).transpose(1, 2)  # B x C x L
        h = self.blocks(h).transpose(1, 2)
        return self.repr_dropout(h)

    def receptive_fields(self) -> list[int]:
        """Cumulative receptive field after each block."""
        total, out = 1, []
        for block in self.blocks:
            total += 2 * (block.conv1.receptive_field - 1)
            out.append(total)
        return out


def init_encoder(cfg: EncoderConfig = EncoderConfig(), seed: int = 0,
                 dtype: torch.dtype = torch.float32) -> Encoder:
    """Build an encoder whose parameters depend only on ``cfg`` and ``seed``."""
    cfg.validate()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        enc = Encoder(cfg)
    return enc.to(dtype)


def _param(enc: Encoder):
    return next(enc.parameters())


def encode(enc: Encoder, x) -> torch.Tensor:
    """Per-timestep embeddings for a batch of views, shape ``(B, L, D)``."""
    p = _param(enc)
    x = torch.as_tensor(x, dtype=p.dtype, device=p.device)
    if x.ndim == 1:
        x = x[None]
    if x.shape[1] < 1:
        raise ValueError("views must have at least one timestep")
    if not torch.isfinite(x).all():
        raise ValueError("non-finite values in encoder input")
    return enc(x)


def pool_instance(z):
    """Max over the time axis: ``(B, L, D) -> (B, D)``."""
    if isinstance(z, np.ndarray):
        return z.max(axis=1)
    return z.max(dim=1).values


@torch.no_grad()
def instance_representations(enc: Encoder, values: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Max-pooled embeddings of full series, in eval mode, as float64 numpy."""
    was_training = enc.training
    enc.eval()
    out = [pool_instance(encode(enc, values[i:i + batch_size])).double().cpu().numpy()
           for i in range(0, len(values), batch_size)]
    enc.train(was_training)
    return np.concatenate(out, axis=0)


def save_encoder(enc: Encoder, path, extra: dict | None = None) -> None:
    torch.save({"config": asdict(enc.cfg), "state_dict": enc.state_dict(),
                "dtype": str(_param(enc).dtype), **(extra or {})}, path)


def load_encoder(path) -> tuple[Encoder, dict]:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    cfg = EncoderConfig(**blob["config"])
    dtype = getattr(torch, blob.get("dtype", "torch.float32").split(".")[-1])
    enc = Encoder(cfg).to(dtype)
    enc.load_state_dict(blob["state_dict"])
    return enc, blob
