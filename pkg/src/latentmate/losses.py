"""Supervised contrastive loss with its analytic gradient.

For anchor i with positives P(i) and contrast set A(i) = all j != i:

    l_i = -1/|P(i)| * sum_{p in P(i)} log( exp(s_ip / tau) / sum_{a in A(i)} exp(s_ia / tau) )

with s the cosine similarity. The reported loss is the mean of l_i over anchors
with nonempty P(i); other rows only act as negatives.
"""

import torch
from torch import Tensor

from .encoder import NumericalFailure
from .errors import LatentMateError
from .models import LossReport


class ConfigError(LatentMateError, ValueError):
    """A loss or training parameter is out of range."""


def supcon_loss(embeddings: Tensor, mask: Tensor, temperature: float) -> tuple[LossReport, Tensor]:
    """SupCon loss and dL/dz for a batch of unit-norm embeddings.

    Args:
        embeddings: (B, D) unit vectors (no autograd graph needed)
        mask: (B, B) boolean positive mask with a false diagonal
        temperature: tau > 0

    Returns:
        (report, gradient of the mean loss with respect to ``embeddings``)
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    z = embeddings.detach()
    if not torch.isfinite(z).all():
        raise NumericalFailure(-1, where="embedding input")
    n = z.shape[0]
    if mask.shape != (n, n):
        raise ConfigError(f"mask shape {tuple(mask.shape)} does not match batch of {n}")

    eye = torch.eye(n, dtype=torch.bool, device=z.device)
    positives = mask.to(torch.bool) & ~eye
    pos = positives.to(z.dtype)

    similarity = z @ z.T
    logits = (similarity / temperature).masked_fill(eye, float("-inf"))
    # log-sum-exp over A(i), stabilised by the row max
    row_max = logits.max(dim=1, keepdim=True).values
    shifted = logits - row_max
    log_denominator = torch.log(torch.exp(shifted).sum(dim=1, keepdim=True))
    log_prob = (shifted - log_denominator).masked_fill(eye, 0.0)

    counts = pos.sum(dim=1)
    valid = counts > 0
    n_valid = int(valid.sum())

    if n_valid == 0:
        loss = torch.zeros((), dtype=z.dtype, device=z.device)
        grad = torch.zeros_like(z)
    else:
        safe_counts = counts.clamp(min=1)
        per_anchor = -(pos * log_prob).sum(dim=1) / safe_counts
        loss = per_anchor[valid].mean()

        softmax = torch.exp(log_prob).masked_fill(eye, 0.0)
        weight = (valid.to(z.dtype) / n_valid).unsqueeze(1)
        g = weight * (softmax - pos / safe_counts.unsqueeze(1))
        grad = (g + g.T) @ z / temperature

    off_diag = ~eye
    negatives = off_diag & ~positives
    report = LossReport(
        loss=float(loss),
        anchors_with_positives=n_valid,
        mean_positive_similarity=float(similarity[positives].mean()) if positives.any() else None,
        mean_negative_similarity=float(similarity[negatives].mean()) if negatives.any() else None,
    )
    return report, grad


def infonce_loss(
    anchors: Tensor, positives: Tensor, temperature: float
) -> tuple[LossReport, Tensor]:
    """InfoNCE over paired views: row i of ``anchors`` matches row i of ``positives``.

    Both halves act as anchors and every other row is a negative, i.e. SupCon
    with |P(i)| = 1.

    Returns:
        (report, gradient with respect to the stacked (2B, D) embeddings)
    """
    if anchors.shape != positives.shape:
        raise ConfigError("anchors and positives must have the same shape")
    b = anchors.shape[0]
    z = torch.cat([anchors, positives], dim=0)
    idx = torch.arange(b, device=z.device)
    mask = torch.zeros(2 * b, 2 * b, dtype=torch.bool, device=z.device)
    mask[idx, idx + b] = True
    mask[idx + b, idx] = True
    return supcon_loss(z, mask, temperature)
