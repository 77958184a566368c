"""Embedding fusion, classifier and the three-term training loss."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .encoders import linear

DEFAULT_BETA = 2.0
GAMMA_RATIO = 10.0  # target L_P / (gamma * L_MI) at calibration


def mi_loss(h: Tensor, z: Tensor, reduction: str = "mean") -> Tensor:
    """Mutual-information surrogate between two batches of pair embeddings.

    Each row is turned into a distribution by softmax over its dimensions
    (``p`` from ``h``, ``q`` from ``z``); the per-row value is
    ``CE(p, q) + CE(q, p) - KL(p || q) - KL(q || p)``, which equals
    ``H(p) + H(q)``.
    """
    if h.shape != z.shape:
        raise ValueError(f"shape mismatch {tuple(h.shape)} vs {tuple(z.shape)}")
    if h.shape[-1] == 0:
        raise ValueError("empty embedding")
    log_p = F.log_softmax(h, dim=-1)
    log_q = F.log_softmax(z, dim=-1)
    p, q = log_p.exp(), log_q.exp()
    ce_pq = -(p * log_q).sum(-1)
    ce_qp = -(q * log_p).sum(-1)
    kl_pq = (p * (log_p - log_q)).sum(-1)
    kl_qp = (q * (log_q - log_p)).sum(-1)
    # grouped so that swapping the inputs gives a bitwise identical result
    per_row = (ce_pq + ce_qp) - (kl_pq + kl_qp)
    return per_row.mean() if reduction == "mean" else per_row


def center_loss(h_u: Tensor, h_v: Tensor, c_u: Tensor, c_v: Tensor,
                reduction: str = "sum") -> Tensor:
    """``1/2 (||h_u - c_u||^2 + ||h_v - c_v||^2)`` summed (or averaged) over the batch."""
    per_row = 0.5 * (((h_u - c_u) ** 2).sum(-1) + ((h_v - c_v) ** 2).sum(-1))
    return per_row.sum() if reduction == "sum" else per_row.mean()


class DrugCenters(nn.Module):
    """One learnable center per drug entity, initialized at zero."""

    def __init__(self, drug_entities, dim):
        super().__init__()
        drug_entities = sorted(int(d) for d in drug_entities)
        n = (max(drug_entities) + 1) if drug_entities else 0
        lookup = torch.full((n,), -1, dtype=torch.long)
        lookup[drug_entities] = torch.arange(len(drug_entities))
        self.register_buffer("lookup", lookup, persistent=False)
        self.centers = nn.Parameter(torch.zeros(len(drug_entities), dim))

    def forward(self, drugs: Tensor) -> Tensor:
        if len(drugs) and (drugs.max() >= len(self.lookup) or (self.lookup[drugs] < 0).any()):
            raise KeyError("no center vector for some drugs in the batch")
        return self.centers[self.lookup[drugs]]


class FusionMLP(nn.Module):
    """MLP over ``[h_u^KG || h_u^M]``; ReLU between layers, none after the last."""

    def __init__(self, sizes):
        super().__init__()
        self.layers = nn.ModuleList(linear(a, b, bias=True) for a, b in zip(sizes, sizes[1:]))
        self.in_dim, self.out_dim = sizes[0], sizes[-1]

    def forward(self, h_kg, h_mol):
        x = torch.cat([h_kg, h_mol], dim=-1)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"fusion input width {x.shape[-1]} != {self.in_dim}")
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.relu(x)
        return x


def fusion_sizes(d_in, d_out):
    return [d_in, max(d_in // 2, 1), d_out]


def prediction_loss(logits: Tensor, y: Tensor) -> Tensor:
    """Mean cross-entropy of raw logits against class indices."""
    y = torch.as_tensor(y, device=logits.device).long()
    if len(y) and (y.min() < 0 or y.max() >= logits.shape[-1]):
        raise IndexError(f"class index out of range for {logits.shape[-1]} classes")
    return F.cross_entropy(logits, y)


@dataclass
class LossReport:
    L_P: Tensor
    L_C: Tensor
    L_MI: Tensor
    total: Tensor
    beta: float
    gamma: float

    def as_floats(self):
        return {k: float(torch.as_tensor(getattr(self, k)).detach())
                for k in ("L_P", "L_C", "L_MI", "total")}


def total_loss(L_P, L_C, L_MI, beta=DEFAULT_BETA, gamma=0.0) -> LossReport:
    if beta < 0 or gamma < 0:
        raise ValueError("beta and gamma must be non-negative")
    total = L_P + beta * L_C + gamma * L_MI
    return LossReport(L_P, L_C, L_MI, total, beta, gamma)


def calibrate_gamma(L_P, L_MI, ratio=GAMMA_RATIO) -> float:
    """gamma such that ``gamma * L_MI == L_P / ratio``."""
    L_P, L_MI = (float(x.detach()) if isinstance(x, Tensor) else float(x) for x in (L_P, L_MI))
    if L_MI <= 0:
        return 0.0
    return L_P / (ratio * L_MI)
