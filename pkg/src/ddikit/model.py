"""The full pair classifier wiring all encoders, pooling operators and losses."""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .batching import PairBatch
from .config import TrainConfig
from .encoders import GraphTransformerLayer, HIGEncoder, MolGCN, SageEncoder, linear
from .kgstore import ENTITY_CLASSES
from .molgraph import ATOM_DIM
from .objective import (DrugCenters, FusionMLP, LossReport, center_loss, fusion_sizes,
                        mi_loss, prediction_loss, total_loss)
from .pooling import CASPool, agipool, mean_pool
from .pairgraph import position_width


@dataclass
class ModelOutput:
    logits: Tensor
    h_pair: Tensor  # pooled enclosing-subgraph embedding
    z_pair: Tensor  # pooled interaction-graph embedding
    h_u_kg: Tensor
    h_v_kg: Tensor
    node_scores: Tensor | None  # per subgraph node (CASPool weights)
    frag_scores: Tensor | None  # per fragment (influence scores)


class DDIModel(nn.Module):
    """Biological-network branch + molecular branch + pair classifier.

    Ablation flags drop a branch's parameters and feed zero vectors in its place,
    so the classifier keeps its shape.
    """

    def __init__(self, cfg: TrainConfig, n_entities: int, drug_entities, n_relations: int):
        super().__init__()
        self.cfg = cfg
        d_x = cfg.hidden if cfg.L1 > 0 else cfg.d0
        self.d = d = d_x + position_width(cfg.k) + len(ENTITY_CLASSES)
        self.n_relations = n_relations
        if not cfg.no_tsbkg:
            self.sage = SageEncoder(n_entities, cfg.d0, cfg.hidden, cfg.L1)
            self.transformer = nn.ModuleList(
                GraphTransformerLayer(d, cfg.heads, cfg.gt_self_loops, cfg.gt_residual)
                for _ in range(cfg.L2))
            if not cfg.mean_pool:
                self.caspool = CASPool(d)
            self.centers = DrugCenters(drug_entities, d)
        if not cfg.no_hig:
            # interaction-graph width matches the subgraph width so both pooled
            # vectors live on the same support for the MI term
            self.hig = HIGEncoder(cfg.fp_bits, d, cfg.L3, cfg.heads)
        self.molgcn = MolGCN(ATOM_DIM, cfg.hidden, cfg.L4)
        self.fusion = FusionMLP(fusion_sizes(d + cfg.hidden, cfg.hidden))
        self.classifier = linear(2 * d + 2 * cfg.hidden, n_relations)

    # -- branches -----------------------------------------------------------
    def encode_subgraphs(self, batch: PairBatch, kg_edge_index: Tensor, node_mask=None):
        x = self.sage(kg_edge_index)
        h = torch.cat([x[batch.kg_nodes], batch.kg_pos, batch.kg_cat], dim=1)
        if node_mask is not None:
            h = h * node_mask[:, None].to(h.dtype)
        for layer in self.transformer:
            h, _ = layer(h, batch.kg_edges, batch.kg_index)
        return h

    def forward(self, batch: PairBatch, kg_edge_index: Tensor, node_mask=None) -> ModelOutput:
        B, d = batch.size, self.d
        dtype = batch.atom_x.dtype
        zeros = batch.atom_x.new_zeros(B, d)
        node_scores = frag_scores = None
        if self.cfg.no_tsbkg:
            h_pair, h_u, h_v = zeros, zeros, zeros
        else:
            h = self.encode_subgraphs(batch, kg_edge_index, node_mask)
            h_u, h_v = h[batch.u_pos], h[batch.v_pos]
            if self.cfg.mean_pool:
                h_pair = mean_pool(h, batch.kg_index, B)
            else:
                pooled = self.caspool(h, batch.u_pos, batch.v_pos, batch.kg_index)
                h_pair, node_scores = pooled.vector, pooled.scores
        if self.cfg.no_hig:
            z_pair = zeros
        else:
            z, attn = self.hig(batch.frag_x.to(dtype), batch.intra_edges, batch.inter_edges)
            if self.cfg.mean_pool:
                z_pair = mean_pool(z, batch.frag_index, B)
            else:
                pooled = agipool(z, attn, batch.inter_edges, batch.frag_index)
                z_pair, frag_scores = pooled.vector, pooled.scores
        h_mol = self.molgcn(batch.atom_x, batch.atom_edges, batch.atom_mol, batch.n_mols)
        fused_u = self.fusion(h_u, h_mol[batch.u_mol])
        fused_v = self.fusion(h_v, h_mol[batch.v_mol])
        f = torch.cat([h_pair, z_pair, fused_u, fused_v], dim=1)
        return ModelOutput(self.classifier(f), h_pair, z_pair, h_u, h_v, node_scores, frag_scores)

    # -- objective ------------------------------------------------------------
    def loss_terms(self, out: ModelOutput, batch: PairBatch):
        L_P = prediction_loss(out.logits, batch.y)
        if self.cfg.no_tsbkg:
            L_C = L_P.new_zeros(())
        else:
            L_C = center_loss(out.h_u_kg, out.h_v_kg, self.centers(batch.u_ent),
                              self.centers(batch.v_ent), reduction=self.cfg.center_reduction)
        L_MI = mi_loss(out.h_pair, out.z_pair)
        return L_P, L_C, L_MI

    def loss(self, out: ModelOutput, batch: PairBatch, gamma: float) -> LossReport:
        L_P, L_C, L_MI = self.loss_terms(out, batch)
        g = 0.0 if self.cfg.no_infomin else gamma
        return total_loss(L_P, L_C, L_MI, self.cfg.beta, g)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
