"""Loading the four input files into a ready-to-train dataset."""
from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kgstore import (BiomedicalKG, DdiSample, IdMaps, InputError, LoadReport, Triple,
                      build_tsbkg, load_entity_classes, load_smiles, load_triples,
                      samples_from_triples)
from .molgraph import (FP_BITS, FP_RADIUS, Fragment, MolecularGraph, SmilesError,
                       SubstructureGraph, brics_decompose, parse_smiles)

logger = logging.getLogger(__name__)

INPUT_FILES = ("ddi.tsv", "ekg.tsv", "entities.tsv", "smiles.tsv")


@dataclass
class Exclusion:
    drug: str
    reason: str


@dataclass
class Dataset:
    id_maps: IdMaps
    kg: BiomedicalKG
    samples: list
    mols: dict  # entity index -> MolecularGraph
    subs: dict  # entity index -> SubstructureGraph
    relation_names: list
    exclusions: list = field(default_factory=list)

    @property
    def n_relations(self):
        return len(self.relation_names)

    def drug_id(self, index: int) -> str:
        return self.id_maps.entities.names[index]

    def summary(self) -> dict:
        drugs = {s.u for s in self.samples} | {s.v for s in self.samples}
        return {
            "entities": self.kg.n_entities,
            "drugs": len(drugs),
            "ddi_samples": len(self.samples),
            "ddi_relation_types": self.n_relations,
            "ekg_triples": sum(t.origin == "ekg" for t in self.kg.triples),
            "excluded_drugs": len(self.exclusions),
        }


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def substructure_to_json(sub: SubstructureGraph) -> dict:
    return {
        "fragments": [{"smiles": f.smiles, "atoms": list(f.atoms),
                       "on_bits": np.flatnonzero(f.fingerprint).tolist(),
                       "n_bits": len(f.fingerprint)} for f in sub.fragments],
        "edges": [list(e) for e in sub.edges],
        "cut_bonds": [list(b) for b in sub.cut_bonds],
    }


def substructure_from_json(obj: dict) -> SubstructureGraph:
    frags = []
    for f in obj["fragments"]:
        fp = np.zeros(f["n_bits"], dtype=np.uint8)
        fp[f["on_bits"]] = 1
        frags.append(Fragment(f["smiles"], tuple(f["atoms"]), fp))
    return SubstructureGraph(frags, [tuple(e) for e in obj["edges"]],
                             [tuple(b) for b in obj["cut_bonds"]])


class SubstructureCache:
    """JSON files keyed by drug id and fingerprint parameters."""

    def __init__(self, root, n_bits=FP_BITS, radius=FP_RADIUS):
        self.root = Path(root) if root else None
        self.key = hashlib.sha256(f"brics;morgan;r={radius};n={n_bits}".encode()).hexdigest()[:12]
        self.n_bits, self.radius = n_bits, radius
        self.hits = self.misses = 0

    def _path(self, drug, smiles):
        tag = hashlib.sha256(f"{drug}\t{smiles}".encode()).hexdigest()[:20]
        return self.root / self.key / f"{tag}.json"

    def get(self, drug: str, smiles: str) -> SubstructureGraph:
        path = self._path(drug, smiles) if self.root else None
        if path is not None and path.exists():
            self.hits += 1
            return substructure_from_json(json.loads(path.read_text()))
        self.misses += 1
        sub = brics_decompose(smiles, self.n_bits, self.radius)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(substructure_to_json(sub)))
        return sub


def _top_relations(ddi: list[Triple], top: int | None):
    counts = Counter(t.relation for t in ddi)
    order = sorted(counts, key=lambda r: (-counts[r], r))
    return order if top is None else order[:top]


def load_dataset(root, header: bool = False, top_relations: int | None = None,
                 fp_bits: int = FP_BITS, fp_radius: int = FP_RADIUS,
                 cache_dir=None) -> Dataset:
    """Read ``ddi.tsv``, ``ekg.tsv``, ``entities.tsv`` and ``smiles.tsv`` from ``root``.

    DDI triples whose drugs lack a parseable SMILES are excluded and reported.
    With ``top_relations`` only the most frequent DDI types are kept and
    relabelled ``0..top-1`` by descending frequency.
    """
    root = Path(root)
    for name in INPUT_FILES:
        if not (root / name).exists():
            raise InputError(f"missing input file {root / name}")
    id_maps = IdMaps()
    load_entity_classes(root / "entities.tsv", id_maps, header)
    ddi = load_triples(root / "ddi.tsv", "ddi", id_maps, header, LoadReport())
    ekg = load_triples(root / "ekg.tsv", "ekg", id_maps, header, LoadReport())
    smiles = load_smiles(root / "smiles.tsv", header)

    names = id_maps.entities.names
    drugs = sorted({t.head for t in ddi} | {t.tail for t in ddi})
    cache = SubstructureCache(cache_dir, fp_bits, fp_radius)
    mols, subs, exclusions = {}, {}, []
    by_smiles: dict[str, MolecularGraph] = {}
    for d in drugs:
        smi = smiles.get(names[d])
        if not smi:
            exclusions.append(Exclusion(names[d], "missing SMILES"))
            continue
        try:
            if smi not in by_smiles:
                by_smiles[smi] = parse_smiles(smi)
            mols[d] = by_smiles[smi]
            subs[d] = cache.get(names[d], smi)
        except SmilesError as exc:
            exclusions.append(Exclusion(names[d], f"invalid SMILES ({exc})"))
    if exclusions:
        logger.warning("excluded %d drugs without a usable SMILES", len(exclusions))

    ddi = [t for t in ddi if t.head in mols and t.tail in mols]
    keep = _top_relations(ddi, top_relations)
    remap = {old: new for new, old in enumerate(keep)}
    rel_names = [id_maps.relations["ddi"].names[r] for r in keep]
    ddi = [Triple(t.head, remap[t.relation], t.tail, "ddi") for t in ddi if t.relation in remap]
    kg = build_tsbkg(ddi, ekg, id_maps)
    kg.n_ddi_relations = len(rel_names)
    return Dataset(id_maps, kg, samples_from_triples(ddi), mols, subs, rel_names, exclusions)


def write_exclusions(exclusions, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("drug\treason\n")
        for e in exclusions:
            fh.write(f"{e.drug}\t{e.reason}\n")


__all__ = ["Dataset", "DdiSample", "Exclusion", "SubstructureCache", "load_dataset",
           "file_hash", "write_exclusions", "substructure_to_json", "substructure_from_json"]
