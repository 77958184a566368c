"""Per-pair explanations from the two attention readouts, plus export helpers."""
from __future__ import annotations

import json
import math
from functools import lru_cache
from importlib import resources

import numpy as np
import torch
from rdkit import Chem

from .batching import DataBundle, PairRecord, collate
from .kgstore import DdiSample
from .model import DDIModel
from .pairgraph import khop_enclosing_subgraph

# ring systems and groups worth naming in fragment listings
NAMED_SUBSTRUCTURES = {
    "triazole": ("n1cncn1", "n1nncc1", "n1ncnc1"),
    "imidazole": ("n1ccnc1",),
    "thiophene": ("s1cccc1",),
    "pyridine": ("n1ccccc1",),
    "benzodioxole": ("c1ccc2OCOc2c1",),
    "acetylene": ("C#C",),
    "hydrazine": ("[NX3][NX3]",),
}


@lru_cache(maxsize=None)
def _patterns():
    return {name: [Chem.MolFromSmarts(s) for s in smarts]
            for name, smarts in NAMED_SUBSTRUCTURES.items()}


def _fragment_mol(smiles):
    mol = Chem.MolFromSmiles(smiles)
    if mol is None:
        mol = Chem.MolFromSmiles(smiles, sanitize=False)
        if mol is None:
            return None
        mol.UpdatePropertyCache(strict=False)
        Chem.GetSymmSSSR(mol)
    return mol


def name_substructures(smiles: str) -> list[str]:
    """Names from :data:`NAMED_SUBSTRUCTURES` whose pattern occurs in ``smiles``."""
    mol = _fragment_mol(smiles)
    if mol is None:
        return []
    return [name for name, pats in _patterns().items()
            if any(mol.HasSubstructMatch(p) for p in pats)]


class UnknownDrugError(KeyError):
    pass


def nearest_ids(name: str, known, n: int = 5) -> list[str]:
    """Known identifiers closest to ``name`` by edit similarity."""
    import difflib

    return difflib.get_close_matches(name, list(known), n=n, cutoff=0.0)


def resolve_drug(name: str, names: list, drugs) -> int:
    index = {n: i for i, n in enumerate(names)}
    drug_names = [names[d] for d in drugs]
    if name not in index or index[name] not in drugs:
        near = ", ".join(nearest_ids(name, drug_names))
        raise UnknownDrugError(f"unknown drug {name!r}; nearest known ids: {near}")
    return index[name]


def _fragment_rows(drug, labels, scores):
    order = np.argsort(-scores, kind="mergesort")
    return [{"drug": drug, "smiles": labels[i], "score": float(max(scores[i], 0.0)),
             "rank": rank + 1, "named": name_substructures(labels[i])}
            for rank, i in enumerate(order)]


@torch.no_grad()
def explain_pair(model: DDIModel, bundle: DataBundle, u: int, v: int, entity_names,
                 entity_classes: dict, relation_names, top_k: int = 2,
                 top_fraction: float = 0.1) -> dict:
    """Prediction plus the ranked fragments and subgraph entities behind it."""
    model.eval()
    sub = khop_enclosing_subgraph(bundle.kg, u, v, bundle.k, bundle.node_cap)
    record = PairRecord(DdiSample(u, v, 0), sub)
    dtype = next(model.parameters()).dtype
    batch = collate([record], bundle, dtype)
    out = model(batch, bundle.kg_edge_index())
    probs = torch.softmax(out.logits[0], -1).cpu().numpy().astype(float)
    best = int(np.argmax(probs))
    result = {
        "drug_u": entity_names[u],
        "drug_v": entity_names[v],
        "predicted": {"relation": relation_names[best], "probability": float(probs[best])},
        "distribution": [{"relation": relation_names[r], "probability": float(p)}
                         for r, p in enumerate(probs)],
        "fragments": None,
        "top_fragments": None,
        "top_entities": None,
    }
    if out.frag_scores is not None:
        scores = out.frag_scores.cpu().numpy().astype(float)
        labels = batch.frag_labels[0]
        nu = len(bundle.subs[u])
        frag_u = _fragment_rows(entity_names[u], labels[:nu], scores[:nu])
        frag_v = _fragment_rows(entity_names[v], labels[nu:], scores[nu:])
        merged = sorted(frag_u + frag_v, key=lambda r: -r["score"])[:top_k]
        result["fragments"] = {"u": frag_u, "v": frag_v}
        result["top_fragments"] = [dict(r, rank=i + 1) for i, r in enumerate(merged)]
    if out.node_scores is not None:
        alpha = out.node_scores.cpu().numpy().astype(float)
        n_top = max(1, math.ceil(top_fraction * len(alpha)))
        order = np.argsort(-alpha, kind="mergesort")[:n_top]
        result["top_entities"] = [
            {"external_id": entity_names[int(sub.node_ids[i])],
             "entity_class": entity_classes.get(int(sub.node_ids[i]), "other"),
             "score": float(alpha[i]),
             "distance_u": int(sub.dist_u[i]), "distance_v": int(sub.dist_v[i])}
            for i in order]
    return result


def load_schema() -> dict:
    text = resources.files("ddikit").joinpath("schemas/explanation.schema.json").read_text()
    return json.loads(text)


def validate_explanation(obj: dict):
    """Raise ``jsonschema.ValidationError`` if ``obj`` does not follow the shipped schema."""
    import jsonschema

    jsonschema.validate(obj, load_schema())


def plot_explanation(obj: dict, path):
    """Horizontal bar charts of the top fragment and entity scores."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    panels = []
    if obj.get("fragments"):
        rows = obj["fragments"]["u"] + obj["fragments"]["v"]
        rows = sorted(rows, key=lambda r: -r["score"])[:10]
        panels.append(("fragment influence", [f"{r['drug']}: {r['smiles']}" for r in rows],
                       [r["score"] for r in rows]))
    if obj.get("top_entities"):
        rows = obj["top_entities"][:10]
        panels.append(("subgraph attention", [f"{r['external_id']} ({r['entity_class']})"
                                              for r in rows], [r["score"] for r in rows]))
    if not panels:
        raise ValueError("nothing to plot: both readouts are disabled in this model")
    fig, axes = plt.subplots(len(panels), 1, figsize=(7, 2.5 + 2.5 * len(panels)), squeeze=False)
    for ax, (title, labels, values) in zip(axes[:, 0], panels):
        ax.barh(range(len(values))[::-1], values)
        ax.set_yticks(range(len(values))[::-1], labels, fontsize=7)
        ax.set_title(f"{obj['drug_u']} / {obj['drug_v']}: {title}", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fidelity(rows, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    s = [r["sparsity"] for r in rows]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(s, [r["fid_plus"] for r in rows], marker="o", label="Fid+")
    ax.plot(s, [r["fid_minus"] for r in rows], marker="s", label="Fid-")
    ax.set_xlabel("sparsity")
    ax.set_ylabel("accuracy drop")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

