"""Contrastive training loop.

One step: sample_batch -> forward (train) -> supcon_loss -> backward -> SGD
with momentum. A run directory receives ``loss.tsv``, ``encoder.cfg`` and
``step-XXXXXXX.pt`` checkpoints at the configured cadence plus ``final.pt``.
"""

import csv
import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import Tensor, nn

from .dataset import Dataset, build_positive_index, positive_mask, sample_batch
from .encoder import (
    NumericalFailure,
    PositionEncoder,
    backward,
    configure_torch,
    forward_batch,
    save_checkpoint,
)
from .errors import LatentMateError
from .logging import log_extra, timed_block
from .losses import supcon_loss
from .models import EncoderConfig, LossReport, TrainConfig


class NonFiniteGradient(LatentMateError, FloatingPointError):
    """A gradient contains NaN or infinity; the step was not applied."""

    def __init__(self, names: list[str]) -> None:
        super().__init__(f"non-finite gradient for {', '.join(names)}; step rejected")
        self.names = names


class TrainingFailure(LatentMateError):
    """A numerical failure during training, tagged with the step index."""

    def __init__(self, step: int, cause: Exception) -> None:
        super().__init__(f"training failed at step {step}: {cause}")
        self.step = step


class MomentumSGD:
    """Classical momentum: v <- m*v + g; w <- w - lr*v.

    Thin wrapper over ``torch.optim.SGD`` (dampening 0, no Nesterov, no weight
    decay) that rejects non-finite gradients before touching weights or state.
    """

    def __init__(
        self,
        params: Mapping[str, nn.Parameter],
        learning_rate: float,
        momentum: float,
    ) -> None:
        self.params = dict(params)
        self.optimizer = torch.optim.SGD(
            list(self.params.values()), lr=learning_rate, momentum=momentum
        )

    def step(self, grads: Mapping[str, Tensor]) -> None:
        missing = set(self.params) - set(grads)
        if missing:
            raise KeyError(f"no gradient for {', '.join(sorted(missing))}")
        bad = [name for name, g in grads.items() if not torch.isfinite(g).all()]
        if bad:
            log_extra("Rejected SGD step", logging.WARNING, parameters=bad)
            raise NonFiniteGradient(bad)
        for name, p in self.params.items():
            p.grad = grads[name].to(p.dtype)
        self.optimizer.step()


def sgd_step(optimizer: MomentumSGD, grads: Mapping[str, Tensor]) -> None:
    """Apply one momentum update (functional spelling of ``MomentumSGD.step``)."""
    optimizer.step(grads)


@dataclass(frozen=True)
class TrainResult:
    """What a run produced."""

    model: PositionEncoder
    checkpoints: list[Path]
    losses: list[float]


LOSS_LOG_FIELDS = ("step", "loss", "anchors", "positive_similarity", "negative_similarity")


def train(
    dataset: Dataset,
    encoder_config: EncoderConfig,
    train_config: TrainConfig,
    run_dir: Path,
    device: str = "cpu",
    on_step: Callable[[int, LossReport], None] | None = None,
) -> TrainResult:
    """Train an encoder from scratch and write checkpoints under ``run_dir``.

    Raises:
        TrainingFailure: a numerical failure, carrying the step index
    """
    configure_torch(train_config.deterministic)
    torch.manual_seed(train_config.seed)
    rng = np.random.default_rng(train_config.seed)

    model = PositionEncoder(encoder_config).to(device)
    optimizer = MomentumSGD(
        dict(model.named_parameters()), train_config.learning_rate, train_config.momentum
    )
    index = build_positive_index(dataset, train_config.delta)

    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "encoder.cfg").write_text(encoder_config.to_text(), encoding="utf-8")
    checkpoints: list[Path] = []
    losses: list[float] = []

    with (
        timed_block("train", steps=train_config.steps, positions=len(dataset)) as ctx,
        (run_dir / "loss.tsv").open("w", newline="", encoding="utf-8") as log_file,
    ):
        writer = csv.writer(log_file, delimiter="\t", lineterminator="\n")
        writer.writerow(LOSS_LOG_FIELDS)
        for step in range(1, train_config.steps + 1):
            batch = sample_batch(
                dataset, index, rng, train_config.batch_size, train_config.positives_per_anchor
            )
            try:
                z = forward_batch(model, batch.tokens, "train", seed=train_config.seed + step)
                report, grad = supcon_loss(
                    z, torch.as_tensor(batch.mask, device=z.device), train_config.temperature
                )
                optimizer.step(backward(model, z, grad))
            except (NumericalFailure, NonFiniteGradient) as e:
                raise TrainingFailure(step, e) from e

            losses.append(report.loss)
            writer.writerow(
                (
                    step,
                    f"{report.loss:.6f}",
                    report.anchors_with_positives,
                    _fmt(report.mean_positive_similarity),
                    _fmt(report.mean_negative_similarity),
                )
            )
            log_extra("step", logging.DEBUG, step=step, loss=report.loss)
            if step % train_config.log_every == 0:
                window = losses[-train_config.log_every :]
                log_extra("Training progress", step=step, mean_loss=float(np.mean(window)))
            if on_step is not None:
                on_step(step, report)
            if step % train_config.checkpoint_every == 0:
                checkpoints.append(
                    save_checkpoint(model, run_dir / f"step-{step:07d}.pt", step=step)
                )
        checkpoints.append(save_checkpoint(model, run_dir / "final.pt", step=train_config.steps))
        ctx["final_loss"] = losses[-1]

    model.eval()
    return TrainResult(model=model, checkpoints=checkpoints, losses=losses)


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


@dataclass(frozen=True)
class Separation:
    """Held-out similarity structure of an embedding space."""

    positive_similarity: float
    negative_similarity: float
    pairs: int

    @property
    def gap(self) -> float:
        return self.positive_similarity - self.negative_similarity


def embedding_separation(
    model: PositionEncoder,
    dataset: Dataset,
    delta: float,
    rng: np.random.Generator,
    sample_size: int = 1024,
    batch_size: int = 256,
) -> Separation:
    """Mean cosine of positive pairs vs negative pairs on a sample of ``dataset``."""
    ids = rng.choice(len(dataset), size=min(sample_size, len(dataset)), replace=False)
    z = torch.cat(
        [
            forward_batch(model, dataset.tokens[ids[i : i + batch_size]], "eval")
            for i in range(0, len(ids), batch_size)
        ]
    )
    similarity = (z @ z.T).cpu().numpy()
    mask = positive_mask(np.asarray(dataset.p_white[ids]), delta)
    negatives = ~mask
    np.fill_diagonal(negatives, False)
    if not mask.any() or not negatives.any():
        raise ValueError("sample contains no positive or no negative pairs")
    return Separation(
        positive_similarity=float(similarity[mask].mean()),
        negative_similarity=float(similarity[negatives].mean()),
        pairs=int(mask.sum() + negatives.sum()),
    )
