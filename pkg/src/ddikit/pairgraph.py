"""Per-pair graphs: k-hop enclosing subgraphs and hierarchical interaction graphs."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .kgstore import ENTITY_CLASSES, BiomedicalKG
from .molgraph import SubstructureGraph

DEFAULT_K = 2
NODE_CAP = 200
INF = np.iinfo(np.int64).max


@dataclass
class EnclosingSubgraph:
    node_ids: np.ndarray  # global entity indices, u and v first
    local_edges: np.ndarray  # (E, 2) undirected, i < j
    u_local: int
    v_local: int
    k: int
    dist_u: np.ndarray  # adjusted, clamped distances
    dist_v: np.ndarray
    classes: np.ndarray  # entity-class index per node

    @property
    def n_nodes(self):
        return len(self.node_ids)

    @property
    def max_distance(self):
        return 2 * self.k + 2

    @property
    def positions(self) -> np.ndarray:
        width = self.max_distance + 1
        p = np.zeros((self.n_nodes, 2 * width))
        rows = np.arange(self.n_nodes)
        p[rows, self.dist_u] = 1.0
        p[rows, width + self.dist_v] = 1.0
        return p

    @property
    def categories(self) -> np.ndarray:
        c = np.zeros((self.n_nodes, len(ENTITY_CLASSES)))
        c[np.arange(self.n_nodes), self.classes] = 1.0
        return c

    def node_features(self, entity_embeddings: np.ndarray) -> np.ndarray:
        """Rows ``[x_i || p_i || c_i]`` given a per-entity embedding table."""
        return np.concatenate(
            [entity_embeddings[self.node_ids], self.positions, self.categories], axis=1)


def position_width(k: int) -> int:
    return 2 * (2 * k + 3)


def _is_target_edge(kg, u, v, a, b):
    if {a, b} != {u, v}:
        return False
    rels = kg.edge_relations.get(frozenset((u, v)), [])
    return all(origin == "ddi" for origin, _ in rels)


def _bfs(adj, src, depth=None, skip=None):
    """Hop distances from ``src``; ``skip`` is an undirected edge to ignore."""
    dist = {src: 0}
    queue = deque([src])
    while queue:
        a = queue.popleft()
        d = dist[a]
        if depth is not None and d >= depth:
            continue
        for b in adj(a):
            if b in dist or (skip is not None and {a, b} == skip):
                continue
            dist[b] = d + 1
            queue.append(b)
    return dist


def khop_enclosing_subgraph(kg: BiomedicalKG, u: int, v: int, k: int = DEFAULT_K,
                            cap: int | None = NODE_CAP) -> EnclosingSubgraph:
    """Induced subgraph on nodes within ``k`` hops of ``u`` or ``v``.

    The pair's own DDI edge is removed first. Membership uses BFS in ``kg``;
    position labels use BFS inside the induced subgraph. When more than ``cap``
    nodes qualify, the ones closest to the pair (ties by global index) are kept.
    """
    n = kg.n_entities
    if not (0 <= u < n and 0 <= v < n):
        raise KeyError(f"drug index out of range: ({u}, {v})")
    if u == v:
        raise ValueError("u and v must differ")
    if k < 0:
        raise ValueError("k must be >= 0")
    skip = {u, v} if _is_target_edge(kg, u, v, u, v) else None
    du = _bfs(kg.neighbors, u, k, skip)
    dv = _bfs(kg.neighbors, v, k, skip)
    members = set(du) | set(dv)
    members.discard(u)
    members.discard(v)
    order = sorted(members, key=lambda i: (min(du.get(i, INF), dv.get(i, INF)), i))
    if cap is not None:
        order = order[: max(cap - 2, 0)]
    nodes = [u, v] + order
    local = {g: i for i, g in enumerate(nodes)}
    edges = []
    for g in nodes:
        for h in kg.neighbors(g):
            if h in local and g < h and not (skip is not None and {g, h} == skip):
                edges.append(tuple(sorted((local[g], local[h]))))
    edges = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)

    sub_adj = [[] for _ in nodes]
    for a, b in edges:
        sub_adj[a].append(b)
        sub_adj[b].append(a)
    dist_u = adjusted_distances(sub_adj, 0, k)
    dist_v = adjusted_distances(sub_adj, 1, k)
    classes = kg.entity_classes()[np.array(nodes)]
    return EnclosingSubgraph(np.array(nodes, dtype=np.int64), edges, 0, 1, k,
                             dist_u, dist_v, classes)


def adjusted_distances(sub_adj, anchor: int, k: int) -> np.ndarray:
    """Hop distance to ``anchor`` inside the subgraph.

    Unreachable nodes get one more than the largest finite distance; everything
    is clamped to ``2k + 2``.
    """
    d = _bfs(lambda i: sub_adj[i], anchor)
    fallback = max(d.values()) + 1
    out = np.array([d.get(i, fallback) for i in range(len(sub_adj))], dtype=np.int64)
    return np.minimum(out, 2 * k + 2)


def adjusted_distance(sub: EnclosingSubgraph, i: int, anchor: str) -> int:
    if anchor == "u":
        return int(sub.dist_u[i])
    if anchor == "v":
        return int(sub.dist_v[i])
    raise ValueError("anchor must be 'u' or 'v'")


@dataclass
class HierarchicalInteractionGraph:
    features: np.ndarray  # (n_u + n_v, F) fragment fingerprints
    intra_edges: np.ndarray  # (E, 2) undirected, within one drug
    inter_edges: np.ndarray  # (n_u * n_v, 2) as (u-fragment, v-fragment)
    membership: np.ndarray  # 0 for drug u, 1 for drug v
    labels: list  # fragment SMILES

    @property
    def n_nodes(self):
        return len(self.membership)


def build_hig(su: SubstructureGraph, sv: SubstructureGraph) -> HierarchicalInteractionGraph:
    """Join two fragment graphs with a complete bipartite set of cross-drug edges."""
    nu, nv = len(su), len(sv)
    if nu == 0 or nv == 0:
        raise ValueError("both drugs need at least one fragment")
    intra = [tuple(e) for e in su.edges] + [(a + nu, b + nu) for a, b in sv.edges]
    inter = [(i, nu + j) for i in range(nu) for j in range(nv)]
    return HierarchicalInteractionGraph(
        features=np.concatenate([su.fingerprints(), sv.fingerprints()]),
        intra_edges=np.array(intra, dtype=np.int64).reshape(-1, 2),
        inter_edges=np.array(inter, dtype=np.int64).reshape(-1, 2),
        membership=np.array([0] * nu + [1] * nv, dtype=np.int64),
        labels=[f.smiles for f in su.fragments] + [f.smiles for f in sv.fragments],
    )
