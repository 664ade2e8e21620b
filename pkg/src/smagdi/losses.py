"""The four distillation losses and their weighted sum."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import NonFiniteLossError, UndefinedLossError, ValidationError


@dataclass(frozen=True)
class LossCoefficients:
    alpha: float = 1.0  # language modeling
    beta: float = 1.0  # node classification
    gamma: float = 0.1  # contrastive
    delta: float = 0.5  # alignment

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"coefficient {name} must be finite and >= 0, got {v}")

    @classmethod
    def parse(cls, text: str) -> "LossCoefficients":
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValidationError(f"expected four comma-separated coefficients, got {text!r}")
        return cls(*parts)


@dataclass
class LossBundle:
    lm: torch.Tensor | float
    node: torch.Tensor | float
    contrast: torch.Tensor | float
    align: torch.Tensor | float
    total: torch.Tensor | float

    def as_floats(self) -> dict[str, float]:
        return {k: _scalar(getattr(self, k)) for k in ("lm", "node", "contrast", "align", "total")}


def _scalar(value) -> float:
    if isinstance(value, torch.Tensor):
        return float(value.detach())
    return float(value)


def lm_loss(token_logits: torch.Tensor, targets: torch.Tensor, target_mask: torch.Tensor) -> torch.Tensor:
    """Mean next-token cross-entropy over supervised positions.

    ``token_logits`` is ``[..., T, V]`` already aligned with ``targets`` (the
    caller does the one-position shift). Uses log-sum-exp via ``log_softmax``.
    """
    mask = target_mask.to(torch.bool)
    if not bool(mask.any()):
        raise UndefinedLossError("lm_loss: every position is masked")
    logp = torch.log_softmax(token_logits, dim=-1)
    nll = -logp.gather(-1, targets.long().unsqueeze(-1)).squeeze(-1)
    return nll[mask].mean()


def node_loss(logits: torch.Tensor, labels: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy with logits, summed over unmasked nodes per graph and
    averaged over the graphs in the batch. 1-D inputs are one graph."""
    mask = mask.to(torch.bool)
    if not bool(mask.any()):
        raise UndefinedLossError("node_loss: every node is masked")
    num_graphs = 1 if logits.dim() == 1 else logits.shape[0]
    labels = labels.to(logits.dtype)
    # softplus(h) - y*h == -[y log s(h) + (1-y) log(1 - s(h))], stable for large |h|
    per_node = F.softplus(logits) - labels * logits
    return per_node[mask].sum() / num_graphs


def contrastive_loss(s_pos: torch.Tensor, s_neg: torch.Tensor, margin: float = 1.0) -> torch.Tensor:
    """Mean hinge ``max(0, margin - s_pos + s_neg)`` over paired chain scores."""
    if s_pos.shape != s_neg.shape:
        raise ValidationError(f"score shapes differ: {tuple(s_pos.shape)} vs {tuple(s_neg.shape)}")
    if s_pos.numel() == 0:
        raise ValidationError("contrastive_loss needs at least one pair")
    return torch.clamp(margin - s_pos + s_neg, min=0.0).mean()


def alignment_loss(z_dec: torch.Tensor, z_sol: torch.Tensor) -> torch.Tensor:
    """``(1/N) sum_i ||z_dec_i - z_sol_i||^2`` over rows."""
    if z_dec.shape != z_sol.shape:
        raise ValidationError(f"embedding shapes differ: {tuple(z_dec.shape)} vs {tuple(z_sol.shape)}")
    if z_dec.dim() != 2 or z_dec.shape[0] == 0:
        raise ValidationError("alignment_loss expects non-empty [N, P] inputs")
    return ((z_dec - z_sol) ** 2).sum(dim=1).mean()


def total_loss(lm, node, contrast, align, coefficients: LossCoefficients = LossCoefficients()) -> LossBundle:
    for name, value in (("lm", lm), ("node", node), ("contrast", contrast), ("align", align)):
        if not math.isfinite(_scalar(value)):
            raise NonFiniteLossError(name, _scalar(value))
    c = coefficients
    total = c.alpha * lm + c.beta * node + c.gamma * contrast + c.delta * align
    return LossBundle(lm, node, contrast, align, total)
