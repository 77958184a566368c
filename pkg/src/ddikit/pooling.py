"""Interpretable readouts: context-aware subgraph pooling and influence pooling.

All functions take flat node tensors plus ``index`` (graph id per node) so a batch of
graphs is pooled in one call. Pooled vectors are plain means of the re-weighted node
states, i.e. divided by the node count of each graph.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .encoders import linear, segment_softmax


@dataclass
class PooledPair:
    vector: Tensor  # (B, d)
    scores: Tensor  # per node, aligned with the input node order


def _single(h, index):
    if index is None:
        index = torch.zeros(h.shape[0], dtype=torch.long, device=h.device)
    return index, int(index.max()) + 1 if len(index) else 0


def mean_pool(h: Tensor, index: Tensor | None = None, n_graphs: int | None = None) -> Tensor:
    index, n = _single(h, index)
    n = n_graphs or n
    counts = torch.bincount(index, minlength=n).clamp(min=1).to(h.dtype)
    return h.new_zeros(n, h.shape[1]).index_add(0, index, h) / counts[:, None]


class CASPool(nn.Module):
    """Attention of every subgraph node against the pair's base vector ``[h_u || h_v]``."""

    def __init__(self, d, d_att=None):
        super().__init__()
        d_att = d_att or d
        self.W_h = linear(d, d_att)
        self.W_b = linear(2 * d, d_att)

    def forward(self, h, u_pos, v_pos, index=None) -> PooledPair:
        index, n = _single(h, index)
        u_pos = torch.as_tensor(u_pos, device=h.device).view(-1)
        v_pos = torch.as_tensor(v_pos, device=h.device).view(-1)
        base = self.W_b(torch.cat([h[u_pos], h[v_pos]], dim=1))
        logits = (self.W_h(h) * base[index]).sum(-1)
        alpha = segment_softmax(logits, index, n)
        return PooledPair(mean_pool(alpha[:, None] * h, index, n), alpha)


def caspool(h, W_h, W_b, u_pos=0, v_pos=1, index=None) -> PooledPair:
    """Functional form of :class:`CASPool` with explicit weight matrices."""
    index, n = _single(h, index)
    u_pos = torch.as_tensor(u_pos, device=h.device).view(-1)
    v_pos = torch.as_tensor(v_pos, device=h.device).view(-1)
    base = torch.cat([h[u_pos], h[v_pos]], dim=1) @ W_b.T
    logits = ((h @ W_h.T) * base[index]).sum(-1)
    alpha = segment_softmax(logits, index, n)
    return PooledPair(mean_pool(alpha[:, None] * h, index, n), alpha)


def influence_scores(attn: Tensor, inter_edges: Tensor, n_nodes: int) -> Tensor:
    """``c_i``: total attention node ``i`` receives from its cross-drug neighbours.

    ``attn[e]`` is the weight the ``dst`` node of edge ``e`` assigns to its ``src``.
    """
    src = inter_edges[0]
    return attn.new_zeros(n_nodes).index_add(0, src, attn)


def agipool(z: Tensor, attn: Tensor, inter_edges: Tensor, index=None) -> PooledPair:
    index, n = _single(z, index)
    c = influence_scores(attn, inter_edges, z.shape[0])
    return PooledPair(mean_pool(c[:, None] * z, index, n), c)
