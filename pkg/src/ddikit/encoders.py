"""Message-passing layers over flat (batched) edge lists.

Edges are directed ``(src, dst)`` pairs stored as a ``(2, E)`` long tensor; a message
travels from ``src`` to ``dst``. Undirected graphs list both directions.
"""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import Tensor, nn


def segment_softmax(scores: Tensor, index: Tensor, n: int) -> Tensor:
    """Softmax of ``scores`` over entries sharing the same ``index`` (dim 0)."""
    shape = (n,) + scores.shape[1:]
    idx = index.view(-1, *([1] * (scores.dim() - 1))).expand_as(scores)
    top = scores.new_full(shape, -math.inf).scatter_reduce(0, idx, scores, "amax")
    ex = torch.exp(scores - top.detach()[index])
    denom = scores.new_zeros(shape).index_add(0, index, ex)
    return ex / denom[index]


def glorot_(weight: Tensor) -> Tensor:
    fan_out, fan_in = weight.shape[0], weight.shape[-1]
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    with torch.no_grad():
        return weight.uniform_(-bound, bound)


def linear(d_in, d_out, bias=False):
    layer = nn.Linear(d_in, d_out, bias=bias)
    glorot_(layer.weight)
    if bias:
        nn.init.zeros_(layer.bias)
    return layer


def add_self_loops(edge_index: Tensor, n: int) -> Tensor:
    loops = torch.arange(n, device=edge_index.device).repeat(2, 1)
    return torch.cat([edge_index, loops], dim=1)


class SageLayer(nn.Module):
    """``relu(W2 [x_v || mean_{u in N(v)} W1 x_u])``; isolated nodes aggregate zero."""

    def __init__(self, d_in, d_out):
        super().__init__()
        self.W1 = linear(d_in, d_out)
        self.W2 = linear(d_in + d_out, d_out)

    def forward(self, x, edge_index):
        src, dst = edge_index
        msg = self.W1(x)[src]
        agg = x.new_zeros(x.shape[0], msg.shape[1]).index_add(0, dst, msg)
        deg = torch.bincount(dst, minlength=x.shape[0]).clamp(min=1).to(x.dtype)
        return F.relu(self.W2(torch.cat([x, agg / deg[:, None]], dim=1)))


class SageEncoder(nn.Module):
    """Entity embedding table followed by ``n_layers`` GraphSAGE-mean layers.

    The learned table plays the role of one-hot inputs times a first projection.
    """

    def __init__(self, n_entities, d0=64, hidden=64, n_layers=2):
        super().__init__()
        self.embedding = nn.Parameter(glorot_(torch.empty(n_entities, d0)))
        widths = [d0] + [hidden] * n_layers
        self.layers = nn.ModuleList(SageLayer(a, b) for a, b in zip(widths, widths[1:]))
        self.out_dim = widths[-1]

    def forward(self, edge_index):
        x = self.embedding
        for layer in self.layers:
            x = layer(x, edge_index)
        return x


class GraphTransformerLayer(nn.Module):
    """Multi-head neighbourhood attention, output projection, then a GELU FFN.

    With ``residual`` each block is wrapped as ``LayerNorm(x + block(x))``; with
    ``self_loops`` every node also attends to itself.
    """

    def __init__(self, d, heads=2, self_loops=True, residual=True, ffn_mult=2):
        super().__init__()
        self.heads = heads
        self.dn = d // heads
        if self.dn == 0:
            raise ValueError(f"width {d} too small for {heads} heads")
        self.self_loops = self_loops
        self.residual = residual
        self.Q = linear(d, heads * self.dn)
        self.K = linear(d, heads * self.dn)
        self.V = linear(d, heads * self.dn)
        self.O = linear(heads * self.dn, d)
        self.W3 = linear(d, ffn_mult * d)
        self.W4 = linear(ffn_mult * d, d)
        if residual:
            self.norm1 = nn.LayerNorm(d)
            self.norm2 = nn.LayerNorm(d)

    def forward(self, h, edge_index, index=None):
        """Returns new node states and per-edge attention ``(E, heads)``.

        With ``index`` (graph id per node, nodes of a graph contiguous) attention is
        evaluated as padded dense blocks, one per graph; the result is the same.
        """
        n = h.shape[0]
        if self.self_loops:
            edge_index = add_self_loops(edge_index, n)
        q = self.Q(h).view(n, self.heads, self.dn)
        k = self.K(h).view(n, self.heads, self.dn)
        v = self.V(h).view(n, self.heads, self.dn)
        if index is None:
            agg, w = self._sparse(q, k, v, edge_index)
        else:
            agg, w = self._dense(q, k, v, edge_index, index)
        out = self.O(agg.reshape(n, -1))
        if self.residual:
            out = self.norm1(h + out)
        ffn = self.W4(F.gelu(self.W3(out)))
        if self.residual:
            ffn = self.norm2(out + ffn)
        return ffn, w

    def _sparse(self, q, k, v, edge_index):
        n = q.shape[0]
        src, dst = edge_index
        scores = (q[dst] * k[src]).sum(-1) / math.sqrt(self.dn)
        w = segment_softmax(scores, dst, n)
        agg = q.new_zeros(n, self.heads, self.dn).index_add(0, dst, w[..., None] * v[src])
        return agg, w

    def _dense(self, q, k, v, edge_index, index):
        n = q.shape[0]
        n_graphs = int(index.max()) + 1 if n else 0
        counts = torch.bincount(index, minlength=n_graphs)
        start = torch.cumsum(counts, 0) - counts
        slot = torch.arange(n, device=q.device) - start[index]
        width = int(counts.max()) if n else 0
        src, dst = edge_index
        mask = torch.zeros(n_graphs, width, width, dtype=torch.bool, device=q.device)
        mask[index[dst], slot[dst], slot[src]] = True

        def pad(x):
            out = x.new_zeros(n_graphs, width, self.heads, self.dn)
            out[index, slot] = x
            return out.transpose(1, 2)  # (B, H, W, dn)

        qp, kp, vp = pad(q), pad(k), pad(v)
        scores = qp @ kp.transpose(-1, -2) / math.sqrt(self.dn)
        scores = scores.masked_fill(~mask[:, None], -math.inf)
        has_nbr = mask.any(-1)[:, None, :, None]
        attn = torch.softmax(scores.masked_fill(~has_nbr, 0.0), dim=-1) * has_nbr
        agg = (attn @ vp).transpose(1, 2)[index, slot]
        w = attn[index[dst], :, slot[dst], slot[src]]
        return agg, w


class IntraGCNLayer(nn.Module):
    """``relu(sum_j W z_j / sqrt(d_i d_j))`` over intra-drug neighbours, no self-loop."""

    def __init__(self, d_in, d_out):
        super().__init__()
        self.W_intra = linear(d_in, d_out)

    def forward(self, z, edge_index):
        n = z.shape[0]
        src, dst = edge_index
        deg = torch.bincount(dst, minlength=n).to(z.dtype)
        coef = (deg[src] * deg[dst]).rsqrt()
        msg = coef[:, None] * self.W_intra(z)[src]
        return F.relu(z.new_zeros(n, msg.shape[1]).index_add(0, dst, msg))


class InterGATLayer(nn.Module):
    """Cross-drug attention; heads are concatenated.

    Edge ``(src=j, dst=i)`` carries ``alpha_ij``, the weight node ``i`` gives ``j``;
    each ``i`` normalizes over its cross-drug neighbours.
    """

    def __init__(self, d_in, d_out, heads=1, negative_slope=0.2):
        super().__init__()
        if d_out % heads:
            raise ValueError(f"output width {d_out} not divisible by {heads} heads")
        self.heads = heads
        self.dh = d_out // heads
        self.negative_slope = negative_slope
        self.W_inter = linear(d_in, d_out)
        self.a = nn.Parameter(glorot_(torch.empty(heads, 2 * self.dh)))

    def forward(self, z, edge_index):
        n = z.shape[0]
        src, dst = edge_index
        wz = self.W_inter(z).view(n, self.heads, self.dh)
        a_dst, a_src = self.a[:, : self.dh], self.a[:, self.dh:]
        e = (wz[dst] * a_dst).sum(-1) + (wz[src] * a_src).sum(-1)
        alpha = segment_softmax(F.leaky_relu(e, self.negative_slope), dst, n)
        agg = z.new_zeros(n, self.heads, self.dh).index_add(0, dst, alpha[..., None] * wz[src])
        return F.relu(agg.reshape(n, -1)), alpha


class HIGEncoder(nn.Module):
    """Stacked intra-GCN + inter-GAT branches summed per layer; last GAT is single-head."""

    def __init__(self, d_in, hidden=64, n_layers=2, heads=2):
        super().__init__()
        if n_layers < 1:
            raise ValueError("need at least one HIG layer")
        widths = [d_in] + [hidden] * n_layers
        self.intra = nn.ModuleList(IntraGCNLayer(a, b) for a, b in zip(widths, widths[1:]))
        self.inter = nn.ModuleList(
            InterGATLayer(a, b, heads=1 if i == n_layers - 1 else heads)
            for i, (a, b) in enumerate(zip(widths, widths[1:]))
        )
        self.out_dim = hidden

    def forward(self, z, intra_edges, inter_edges):
        """Final fragment states and last-layer attention per inter edge ``(E,)``."""
        attn = None
        for intra, inter in zip(self.intra, self.inter):
            z_inter, attn = inter(z, inter_edges)
            z = intra(z, intra_edges) + z_inter
        return z, attn[:, 0]


class MolGCN(nn.Module):
    """Symmetric-normalized GCN with self-loops and sum pooling per molecule."""

    def __init__(self, d_in=107, hidden=64, n_layers=2):
        super().__init__()
        widths = [d_in] + [hidden] * n_layers
        self.W_M = nn.ModuleList(linear(a, b) for a, b in zip(widths, widths[1:]))
        self.out_dim = widths[-1]

    def forward(self, x, edge_index, mol_index, n_mols):
        n = x.shape[0]
        edge_index = add_self_loops(edge_index, n)
        src, dst = edge_index
        deg = torch.bincount(dst, minlength=n).to(x.dtype)
        coef = (deg[src] * deg[dst]).rsqrt()[:, None]
        for W in self.W_M:
            xw = W(x)
            x = F.relu(xw.new_zeros(n, xw.shape[1]).index_add(0, dst, coef * xw[src]))
        return x.new_zeros(n_mols, x.shape[1]).index_add(0, mol_index, x)
