"""Per-fold data bundle and collation of drug pairs into flat tensors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .kgstore import BiomedicalKG, DdiSample
from .molgraph import MolecularGraph, SubstructureGraph
from .pairgraph import EnclosingSubgraph, khop_enclosing_subgraph


@dataclass
class DataBundle:
    """Everything a fold needs: its training graph and per-drug molecular data."""

    kg: BiomedicalKG
    mols: dict  # drug entity index -> MolecularGraph
    subs: dict  # drug entity index -> SubstructureGraph
    n_relations: int
    k: int = 2
    node_cap: int = 200
    _edge_index: torch.Tensor | None = field(default=None, repr=False)

    def kg_edge_index(self) -> torch.Tensor:
        if self._edge_index is None:
            pairs = [(a, b) for a, nbrs in enumerate(self.kg.adjacency) for b in nbrs]
            self._edge_index = torch.tensor(pairs, dtype=torch.long).reshape(-1, 2).T.contiguous()
        return self._edge_index

    def records(self, samples) -> list["PairRecord"]:
        return [PairRecord(s, khop_enclosing_subgraph(self.kg, s.u, s.v, self.k, self.node_cap))
                for s in samples]


@dataclass
class PairRecord:
    sample: DdiSample
    subgraph: EnclosingSubgraph


@dataclass
class PairBatch:
    y: torch.Tensor
    u_ent: torch.Tensor
    v_ent: torch.Tensor
    # enclosing subgraphs
    kg_nodes: torch.Tensor
    kg_edges: torch.Tensor
    kg_pos: torch.Tensor
    kg_cat: torch.Tensor
    kg_index: torch.Tensor
    u_pos: torch.Tensor
    v_pos: torch.Tensor
    # hierarchical interaction graphs
    frag_x: torch.Tensor
    intra_edges: torch.Tensor
    inter_edges: torch.Tensor
    frag_index: torch.Tensor
    frag_drug: torch.Tensor
    # molecular graphs of the distinct drugs in the batch
    atom_x: torch.Tensor
    atom_edges: torch.Tensor
    atom_mol: torch.Tensor
    n_mols: int
    u_mol: torch.Tensor
    v_mol: torch.Tensor
    frag_labels: list = field(default_factory=list)

    @property
    def size(self):
        return len(self.y)


def _both(e):
    e = np.asarray(e, dtype=np.int64).reshape(-1, 2)
    return np.concatenate([e, e[:, ::-1]]).T


def collate(records: list[PairRecord], bundle: DataBundle, dtype=torch.float32) -> PairBatch:
    ys, us, vs = [], [], []
    kg_nodes, kg_edges, kg_pos, kg_cat, kg_index, u_pos, v_pos = [], [], [], [], [], [], []
    frag_x, intra, inter, frag_index, frag_drug, labels = [], [], [], [], [], []
    offset = frag_offset = 0
    for b, rec in enumerate(records):
        s, sub = rec.sample, rec.subgraph
        ys.append(s.r)
        us.append(s.u)
        vs.append(s.v)
        kg_nodes.append(sub.node_ids)
        kg_edges.append(_both(sub.local_edges) + offset)
        kg_pos.append(sub.positions)
        kg_cat.append(sub.categories)
        kg_index.append(np.full(sub.n_nodes, b))
        u_pos.append(offset + sub.u_local)
        v_pos.append(offset + sub.v_local)
        offset += sub.n_nodes

        su, sv = bundle.subs[s.u], bundle.subs[s.v]
        nu, nv = len(su), len(sv)
        frag_x += [su.fingerprints(), sv.fingerprints()]
        intra.append(_both(list(su.edges) + [(a + nu, c + nu) for a, c in sv.edges]) + frag_offset)
        cross = np.array([(i, nu + j) for i in range(nu) for j in range(nv)])
        inter.append(_both(cross) + frag_offset)
        frag_index.append(np.full(nu + nv, b))
        frag_drug.append(np.array([0] * nu + [1] * nv))
        labels.append([f.smiles for f in su.fragments] + [f.smiles for f in sv.fragments])
        frag_offset += nu + nv

    drugs = sorted(set(us) | set(vs))
    mol_pos = {d: i for i, d in enumerate(drugs)}
    atom_x, atom_edges, atom_mol = [], [], []
    a_off = 0
    for i, d in enumerate(drugs):
        mol: MolecularGraph = bundle.mols[d]
        atom_x.append(mol.atom_features)
        atom_edges.append(mol.edge_index() + a_off)
        atom_mol.append(np.full(mol.n_atoms, i))
        a_off += mol.n_atoms

    def f(arrs):
        return torch.as_tensor(np.concatenate(arrs), dtype=dtype)

    def li(arrs, axis=0):
        return torch.as_tensor(np.concatenate(arrs, axis=axis), dtype=torch.long)

    return PairBatch(
        y=torch.tensor(ys), u_ent=torch.tensor(us), v_ent=torch.tensor(vs),
        kg_nodes=li(kg_nodes), kg_edges=li(kg_edges, 1), kg_pos=f(kg_pos), kg_cat=f(kg_cat),
        kg_index=li(kg_index), u_pos=torch.tensor(u_pos), v_pos=torch.tensor(v_pos),
        frag_x=f(frag_x), intra_edges=li(intra, 1), inter_edges=li(inter, 1),
        frag_index=li(frag_index), frag_drug=li(frag_drug),
        atom_x=f(atom_x), atom_edges=li(atom_edges, 1), atom_mol=li(atom_mol),
        n_mols=len(drugs),
        u_mol=torch.tensor([mol_pos[u] for u in us]), v_mol=torch.tensor([mol_pos[v] for v in vs]),
        frag_labels=labels,
    )
