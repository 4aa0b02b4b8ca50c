"""Transformer encoder: 77 tokens in, one unit-norm embedding out.

A learned CLS vector is prepended (internal length 78, with its own learned
positional slot), the sequence passes through pre-LayerNorm blocks with GELU
feed-forward layers, and the final CLS state is projected H -> D (with bias)
and l2-normalized.
"""

import math
import pickle
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Literal

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import LatentMateError
from .logging import log_extra
from .models import EncoderConfig
from .tokenizer import VOCABULARY

CHECKPOINT_FORMAT_VERSION = 1

Mode = Literal["train", "eval"]


class NumericalFailure(LatentMateError, FloatingPointError):
    """A forward pass produced NaN or infinity; ``layer`` is the block index."""

    def __init__(self, layer: int, where: str = "encoder block") -> None:
        super().__init__(f"non-finite values after {where} {layer}")
        self.layer = layer


class ShapeError(LatentMateError, ValueError):
    """Tensor shapes do not match the encoder config."""


class CheckpointError(LatentMateError):
    """A checkpoint file is unreadable or incompatible."""


class SelfAttention(nn.Module):
    """Multi-head scaled dot-product self-attention."""

    def __init__(self, hidden_dim: int, num_heads: int, dropout: float) -> None:
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = hidden_dim // num_heads
        self.qkv = nn.Linear(hidden_dim, 3 * hidden_dim)
        self.out = nn.Linear(hidden_dim, hidden_dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        b, t, h = x.shape
        qkv = self.qkv(x).view(b, t, 3, self.num_heads, self.head_dim).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        weights = self.dropout(torch.softmax(scores, dim=-1))
        context = (weights @ v).transpose(1, 2).reshape(b, t, h)
        return self.out(context)


class EncoderBlock(nn.Module):
    """Pre-LN transformer block."""

    def __init__(self, config: EncoderConfig) -> None:
        super().__init__()
        self.attn_norm = nn.LayerNorm(config.hidden_dim)
        self.attn = SelfAttention(config.hidden_dim, config.num_heads, config.dropout_rate)
        self.mlp_norm = nn.LayerNorm(config.hidden_dim)
        self.mlp = nn.Sequential(
            nn.Linear(config.hidden_dim, config.mlp_size),
            nn.GELU(),
            nn.Dropout(config.dropout_rate),
            nn.Linear(config.mlp_size, config.hidden_dim),
        )
        self.dropout = nn.Dropout(config.dropout_rate)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.dropout(self.attn(self.attn_norm(x)))
        return x + self.dropout(self.mlp(self.mlp_norm(x)))


class PositionEncoder(nn.Module):
    """The embedding network f(x)."""

    def __init__(self, config: EncoderConfig) -> None:
        super().__init__()
        self.config = config
        h = config.hidden_dim
        self.token_embedding = nn.Embedding(config.vocab_size, h)
        self.cls_token = nn.Parameter(torch.empty(h))
        self.positional = nn.Parameter(torch.empty(config.seq_len + 1, h))
        self.dropout = nn.Dropout(config.dropout_rate)
        self.blocks = nn.ModuleList(EncoderBlock(config) for _ in range(config.num_layers))
        self.final_norm = nn.LayerNorm(h)
        self.projection = nn.Linear(h, config.embed_dim)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for p in (self.token_embedding.weight, self.cls_token, self.positional):
            nn.init.trunc_normal_(p, std=0.02)
        nn.init.trunc_normal_(self.projection.weight, std=0.02)
        nn.init.zeros_(self.projection.bias)
        for block in self.blocks:
            assert isinstance(block, EncoderBlock)
            for linear in (block.attn.qkv, block.attn.out):
                nn.init.xavier_uniform_(linear.weight)
                nn.init.zeros_(linear.bias)
            for module in block.mlp:
                if isinstance(module, nn.Linear):
                    nn.init.trunc_normal_(module.weight, std=0.02)
                    nn.init.zeros_(module.bias)

    def forward(self, tokens: Tensor) -> Tensor:
        if tokens.dim() != 2 or tokens.shape[1] != self.config.seq_len:
            raise ShapeError(
                f"expected token batch of shape (B, {self.config.seq_len}), "
                f"got {tuple(tokens.shape)}"
            )
        x = self.token_embedding(tokens)
        cls = self.cls_token.expand(x.shape[0], 1, -1)
        x = self.dropout(torch.cat([cls, x], dim=1) + self.positional)
        for i, block in enumerate(self.blocks):
            x = block(x)
            if not torch.isfinite(x).all():
                raise NumericalFailure(i)
        z = self.projection(self.final_norm(x[:, 0]))
        if not torch.isfinite(z).all():
            raise NumericalFailure(len(self.blocks), where="projection after block")
        return F.normalize(z, dim=-1)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def parameter_count(config: EncoderConfig) -> int:
    return count_parameters(PositionEncoder(config))


def configure_torch(deterministic: bool = True, threads: int | None = None) -> None:
    """Pin torch to reproducible single-threaded kernels, or set a thread count."""
    if deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)
    elif threads is not None:
        torch.set_num_threads(threads)


@contextmanager
def _seeded(model: nn.Module, seed: int | None) -> Iterator[None]:
    if seed is None:
        yield
        return
    device = next(model.parameters()).device
    devices = [device] if device.type == "cuda" else []
    with torch.random.fork_rng(devices=devices):
        torch.manual_seed(seed)
        yield


def _as_tokens(model: PositionEncoder, seqs: Sequence[Sequence[int]] | np.ndarray) -> Tensor:
    device = next(model.parameters()).device
    return torch.as_tensor(np.asarray(seqs, dtype=np.int64), device=device)


def forward_batch(
    model: PositionEncoder,
    seqs: Sequence[Sequence[int]] | np.ndarray | Tensor,
    mode: Mode = "eval",
    seed: int | None = None,
) -> Tensor:
    """Embed a batch of token sequences.

    In ``eval`` mode dropout is off, no graph is recorded and the result is
    deterministic. In ``train`` mode the returned tensor carries the autograd
    graph needed by ``backward``; ``seed`` fixes the dropout masks.
    """
    tokens = seqs if isinstance(seqs, Tensor) else _as_tokens(model, seqs)
    if mode == "eval":
        model.eval()
        with torch.no_grad():
            return model(tokens)
    model.train()
    with _seeded(model, seed):
        return model(tokens)


def forward(
    model: PositionEncoder,
    seq: Sequence[int],
    mode: Mode = "eval",
    seed: int | None = None,
) -> Tensor:
    """Embed one token sequence; returns a (D,) tensor."""
    return forward_batch(model, [seq], mode, seed)[0]


def backward(model: PositionEncoder, embeddings: Tensor, loss_grad: Tensor) -> dict[str, Tensor]:
    """Backpropagate dL/dz through a recorded train-mode forward pass.

    Returns:
        Gradient for every named parameter (zeros where the graph does not reach)
    """
    if embeddings.shape != loss_grad.shape:
        raise ShapeError(
            f"loss gradient shape {tuple(loss_grad.shape)} does not match "
            f"embeddings {tuple(embeddings.shape)}"
        )
    if not embeddings.requires_grad:
        raise ShapeError("embeddings carry no autograd graph; run forward_batch in train mode")
    model.zero_grad(set_to_none=True)
    embeddings.backward(loss_grad.to(embeddings.dtype))
    return {
        name: p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
        for name, p in model.named_parameters()
    }


def save_checkpoint(
    model: PositionEncoder,
    path: Path,
    step: int | None = None,
    extra: dict[str, Any] | None = None,
) -> Path:
    """Write config, vocabulary and named parameter arrays to ``path``."""
    state = {name: t.detach().cpu().contiguous() for name, t in model.state_dict().items()}
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": model.config.to_text(),
        "vocabulary": list(VOCABULARY),
        "parameters": state,
        "shapes": {name: list(t.shape) for name, t in state.items()},
        "step": step,
        "extra": extra or {},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    log_extra("Checkpoint saved", path=str(path), step=step)
    return path


def load_checkpoint(path: Path, device: str = "cpu") -> PositionEncoder:
    """Rebuild an encoder from ``save_checkpoint`` output, in eval mode.

    Raises:
        CheckpointError: unreadable file, unknown format version, vocabulary or
            shape mismatch
    """
    try:
        payload = torch.load(path, map_location=device, weights_only=True)
    except (OSError, RuntimeError, ValueError, pickle.UnpicklingError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version!r}")
    if tuple(payload["vocabulary"]) != VOCABULARY:
        raise CheckpointError("checkpoint vocabulary differs from this tokenizer")
    config = EncoderConfig.from_text(payload["config"])
    model = PositionEncoder(config).to(device)
    expected = {name: list(t.shape) for name, t in model.state_dict().items()}
    if expected != payload["shapes"]:
        raise CheckpointError("checkpoint parameter shapes do not match its config")
    model.load_state_dict(payload["parameters"])
    model.eval()
    return model
