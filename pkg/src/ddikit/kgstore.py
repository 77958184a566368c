"""Triple ingestion, the merged biomedical knowledge graph, and evaluation splits."""
from __future__ import annotations

import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

logger = logging.getLogger(__name__)

ENTITY_CLASSES = (
    "drug", "protein", "disease", "side_effect", "pathway", "compound",
    "genetic_disorder", "other",
)
ORIGINS = ("ddi", "ekg")
FOLD_MODES = ("random", "novel_existing", "novel_novel")


class InputError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class Entity:
    index: int
    external_id: str
    entity_class: str = "other"


@dataclass(frozen=True, order=True)
class Triple:
    head: int
    relation: int
    tail: int
    origin: str


@dataclass(frozen=True, order=True)
class DdiSample:
    u: int
    v: int
    r: int


class Registry:
    """Dense first-come index assignment for string identifiers."""

    def __init__(self, names: Iterable[str] = ()):
        self.names: list[str] = []
        self.index: dict[str, int] = {}
        for n in names:
            self.add(n)

    def add(self, name: str) -> int:
        idx = self.index.get(name)
        if idx is None:
            idx = self.index[name] = len(self.names)
            self.names.append(name)
        return idx

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self.index

    def __getitem__(self, name):
        return self.index[name]


@dataclass
class IdMaps:
    """Entity registry shared by all origins plus one relation registry per origin."""

    entities: Registry = field(default_factory=Registry)
    relations: dict = field(default_factory=lambda: {o: Registry() for o in ORIGINS})
    entity_class: dict = field(default_factory=dict)  # entity index -> class

    def entity_table(self) -> list[Entity]:
        return [Entity(i, name, self.entity_class.get(i, "other"))
                for i, name in enumerate(self.entities.names)]


@dataclass
class LoadReport:
    n_rows: int = 0
    n_duplicates: int = 0
    n_self_loops: int = 0


def _read_rows(path, header=False):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if header and lineno == 1:
                continue
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            yield lineno, line.split("\t")


def load_triples(path, origin: str, id_maps: IdMaps, header: bool = False,
                 report: LoadReport | None = None) -> list[Triple]:
    """Read ``head<TAB>relation<TAB>tail`` rows into deduplicated triples.

    Self-loops are dropped and counted; duplicates are dropped with a warning.
    """
    if origin not in ORIGINS:
        raise ValueError(f"unknown origin {origin!r}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    report = report if report is not None else LoadReport()
    rels = id_maps.relations[origin]
    seen = set()
    out = []
    for lineno, cols in _read_rows(path, header):
        if len(cols) != 3 or not all(c.strip() for c in cols):
            raise InputError(f"{path}:{lineno}: expected 3 tab-separated fields, got {cols!r}")
        h, r, t = (c.strip() for c in cols)
        report.n_rows += 1
        if h == t:
            report.n_self_loops += 1
            continue
        triple = Triple(id_maps.entities.add(h), rels.add(r), id_maps.entities.add(t), origin)
        # DDI rows are symmetric: (u, r, v) and (v, r, u) are one interaction
        key = (min(triple.head, triple.tail), triple.relation, max(triple.head, triple.tail)) \
            if origin == "ddi" else triple
        if key in seen:
            report.n_duplicates += 1
            continue
        seen.add(key)
        out.append(triple)
    if report.n_self_loops:
        logger.warning("%s: rejected %d self-loop rows", path, report.n_self_loops)
    if report.n_duplicates:
        warnings.warn(f"{path}: {report.n_duplicates} duplicate rows dropped")
    return out


def load_entity_classes(path, id_maps: IdMaps, header: bool = False) -> int:
    """Read ``external_id<TAB>class`` rows; returns the number of rows applied."""
    n = 0
    for lineno, cols in _read_rows(path, header):
        if len(cols) != 2:
            raise InputError(f"{path}:{lineno}: expected 2 tab-separated fields")
        name, cls = cols[0].strip(), cols[1].strip()
        if cls not in ENTITY_CLASSES:
            cls = "other"
        id_maps.entity_class[id_maps.entities.add(name)] = cls
        n += 1
    return n


def load_smiles(path, header: bool = False) -> dict[str, str]:
    out = {}
    for lineno, cols in _read_rows(path, header):
        if len(cols) != 2:
            raise InputError(f"{path}:{lineno}: expected 2 tab-separated fields")
        out[cols[0].strip()] = cols[1].strip()
    return out


class BiomedicalKG:
    """Union of DDI and external-KG triples with undirected adjacency.

    Treat instances as immutable; :func:`training_graph` returns a new graph.
    """

    def __init__(self, entities: list[Entity], triples: Iterable[Triple],
                 n_ddi_relations: int = 0, n_ekg_relations: int = 0):
        self.entities = list(entities)
        self.triples = sorted(set(triples))
        self.n_ddi_relations = n_ddi_relations
        self.n_ekg_relations = n_ekg_relations
        n = len(self.entities)
        nbrs = [set() for _ in range(n)]
        edge_rel = defaultdict(list)
        for t in self.triples:
            if not (0 <= t.head < n and 0 <= t.tail < n):
                raise InputError(f"triple {t} references an unknown entity")
            nbrs[t.head].add(t.tail)
            nbrs[t.tail].add(t.head)
            edge_rel[frozenset((t.head, t.tail))].append((t.origin, t.relation))
        self.adjacency = [sorted(s) for s in nbrs]
        self.edge_relations = dict(edge_rel)

    @property
    def n_entities(self):
        return len(self.entities)

    def neighbors(self, i):
        return self.adjacency[i]

    def undirected_edges(self) -> set:
        return set(self.edge_relations)

    def ddi_triples(self):
        return [t for t in self.triples if t.origin == "ddi"]

    def entity_classes(self) -> np.ndarray:
        return np.array([ENTITY_CLASSES.index(e.entity_class) for e in self.entities])

    def drug_indices(self):
        return [e.index for e in self.entities if e.entity_class == "drug"]


def build_tsbkg(ddi: list[Triple], ekg: list[Triple], id_maps: IdMaps) -> BiomedicalKG:
    """Merge DDI and eKG triples (set union) over one entity registry."""
    n = len(id_maps.entities)
    for t in list(ddi) + list(ekg):
        if t.head >= n or t.tail >= n:
            raise InputError("triple indexed against a different entity registry")
    for t in ddi:
        if t.origin != "ddi":
            raise InputError(f"non-DDI triple in the DDI list: {t}")
        for e in (t.head, t.tail):
            cls = id_maps.entity_class.setdefault(e, "drug")
            if cls != "drug":
                raise InputError(f"DDI endpoint {id_maps.entities.names[e]} has class {cls}")
    return BiomedicalKG(
        id_maps.entity_table(), set(ddi) | set(ekg),
        n_ddi_relations=len(id_maps.relations["ddi"]),
        n_ekg_relations=len(id_maps.relations["ekg"]),
    )


def samples_from_triples(ddi: list[Triple]) -> list[DdiSample]:
    return [DdiSample(t.head, t.tail, t.relation) for t in ddi]


def training_graph(kg: BiomedicalKG, held_out: Iterable[DdiSample]) -> BiomedicalKG:
    """Copy of ``kg`` without the DDI edges of held-out samples."""
    drop = set()
    for s in held_out:
        drop.add(Triple(s.u, s.r, s.v, "ddi"))
        drop.add(Triple(s.v, s.r, s.u, "ddi"))
    if not drop:
        return kg
    return BiomedicalKG(kg.entities, (t for t in kg.triples if t not in drop),
                        kg.n_ddi_relations, kg.n_ekg_relations)


@dataclass
class FoldSplit:
    mode: str
    fold_id: int
    train: list
    valid: list
    test: list
    held_out_drugs: tuple = ()
    excluded: list = field(default_factory=list)  # pairs in neither train nor test

    def held_out(self):
        """Every sample whose DDI edge must not appear in this fold's training graph."""
        return list(self.valid) + list(self.test) + list(self.excluded)


def _stratified_assign(samples, n_folds, rng):
    """Fold id per sample: shuffle, group by class, deal round-robin across groups."""
    by_class = defaultdict(list)
    for i, s in enumerate(samples):
        by_class[s.r].append(i)
    assign = np.empty(len(samples), dtype=np.int64)
    small = [r for r, idx in by_class.items() if len(idx) < n_folds]
    if small:
        warnings.warn(f"relation types {sorted(small)} have fewer samples than folds; "
                      "assigned without stratification")
    cursor = 0
    for r in sorted(by_class, key=lambda r: (r in small, r)):
        idx = np.array(by_class[r])
        rng.shuffle(idx)
        for i in idx:
            assign[i] = cursor % n_folds
            cursor += 1
    return assign


def carve_validation(train, fraction, rng):
    """Stratified hold-out of ``fraction`` of ``train`` as a validation set."""
    if fraction <= 0 or len(train) < 2:
        return list(train), []
    by_class = defaultdict(list)
    for s in train:
        by_class[s.r].append(s)
    fit, valid = [], []
    for r in sorted(by_class):
        group = by_class[r]
        order = rng.permutation(len(group))
        n_valid = int(round(fraction * len(group)))
        if len(group) < 2:
            n_valid = 0
        valid += [group[k] for k in order[:n_valid]]
        fit += [group[k] for k in order[n_valid:]]
    return sorted(fit), sorted(valid)


def make_folds(samples: list[DdiSample], n_folds: int = 5, mode: str = "random",
               seed: int = 0, valid_fraction: float = 0.0) -> list[FoldSplit]:
    """Cross-validation splits.

    ``random`` deals samples into folds stratified by relation type. The novel modes
    partition the drug set: fold ``f`` holds out one drug group; ``novel_existing``
    tests on pairs with exactly one held-out drug, ``novel_novel`` on pairs with two.
    Train pairs never touch a held-out drug.
    """
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    if mode not in FOLD_MODES:
        raise ValueError(f"unknown fold mode {mode!r}")
    samples = list(samples)
    rng = np.random.default_rng(seed)
    folds = []
    if mode == "random":
        assign = _stratified_assign(samples, n_folds, rng)
        for f in range(n_folds):
            test = sorted(s for s, a in zip(samples, assign) if a == f)
            train = sorted(s for s, a in zip(samples, assign) if a != f)
            train, valid = carve_validation(train, valid_fraction, np.random.default_rng([seed, f]))
            folds.append(FoldSplit(mode, f, train, valid, test))
        return folds

    drugs = np.array(sorted({s.u for s in samples} | {s.v for s in samples}))
    if len(drugs) < n_folds:
        raise ValueError(f"{len(drugs)} drugs cannot be split into {n_folds} folds")
    rng.shuffle(drugs)
    groups = np.array_split(drugs, n_folds)
    for f, group in enumerate(groups):
        held = set(int(d) for d in group)
        want = 1 if mode == "novel_existing" else 2
        train, test, excluded = [], [], []
        for s in samples:
            k = (s.u in held) + (s.v in held)
            if k == 0:
                train.append(s)
            elif k == want:
                test.append(s)
            else:
                excluded.append(s)
        train, valid = carve_validation(sorted(train), valid_fraction, np.random.default_rng([seed, f]))
        folds.append(FoldSplit(mode, f, train, valid, sorted(test), tuple(sorted(held)),
                               sorted(excluded)))
    return folds
