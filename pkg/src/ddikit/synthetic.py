"""Synthetic interaction datasets with a known multi-scale label mechanism.

Every drug targets a few proteins in the knowledge graph and is assembled from a
scaffold, a linker and a warhead ring. The interaction type of a pair combines two
overlap counts:

    type = 4 * min(shared targets, 4) + (# equal building blocks among 3)

The first count is visible only as common neighbours in the graph, the second only
as identical fragments of the two molecules. Neither is a function of one drug
alone, so per-drug features cannot resolve the label.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

WARHEADS = {
    "triazole": "Cn1cncn1",
    "imidazole": "Cn1ccnc1",
    "thiophene": "Cc1cccs1",
    "pyridine": "Cc1ccncc1",
}
SCAFFOLDS = ("c1ccccc1", "c1ccc(F)cc1", "C1CCCCC1", "c1ccc2ccccc2c1")
LINKERS = ("C(=O)N", "OCC")
KG_LEVELS = 5
MOL_LEVELS = 4

# real drugs, handy for explanation demos
KNOWN_DRUGS = {
    "DB00476": ("Duloxetine", "CNCCC(OC1=CC=CC2=CC=CC=C21)C1=CC=CS1"),
    "DB01167": ("Itraconazole",
                "CCC(C)N1N=CN(C1=O)C1=CC=C(C=C1)N1CCN(CC1)C1=CC=C(OCC2COC(CN3C=NC=N3)"
                "(O2)C2=CC=C(Cl)C=C2Cl)C=C1"),
    "DB00420": ("Promazine", "CN(C)CCCN1C2=CC=CC=C2SC2=CC=CC=C12"),
}


@dataclass
class SyntheticParams:
    n_drugs: int = 500
    n_pairs: int = 1000
    n_pathways: int = 10
    proteins_per_pathway: int = 8
    own_targets: int = 4  # drawn from the drug's pathway
    stray_targets: int = 0  # drawn from any pathway
    n_diseases: int = 40
    n_side_effects: int = 60
    noise_edge_rate: float = 0.3
    tail_decay: float = 0.06  # class frequencies fall off as exp(-decay * rank)
    n_rare_types: int = 4  # extra low-frequency types, dropped by a top-20 filter
    rare_count: int = 3
    seed: int = 0

    @property
    def n_types(self):
        return KG_LEVELS * MOL_LEVELS


def drug_smiles(scaffold: int, linker: int, warhead: int) -> str:
    return SCAFFOLDS[scaffold] + LINKERS[linker] + list(WARHEADS.values())[warhead]


def interaction_type(targets_u, targets_v, parts_u, parts_v) -> int:
    shared = min(len(set(targets_u) & set(targets_v)), KG_LEVELS - 1)
    same = sum(a == b for a, b in zip(parts_u, parts_v))
    return MOL_LEVELS * shared + same


def generate(params: SyntheticParams = SyntheticParams()):
    """Return ``(ddi, ekg, entities, smiles, hidden)`` row lists."""
    rng = np.random.default_rng(params.seed)
    n = params.n_drugs
    drugs = [f"D{i:04d}" for i in range(n)]
    pathway = rng.integers(params.n_pathways, size=n)
    parts = np.stack([rng.integers(len(SCAFFOLDS), size=n), rng.integers(len(LINKERS), size=n),
                      rng.integers(len(WARHEADS), size=n)], axis=1)
    ppp = params.proteins_per_pathway
    n_prot = params.n_pathways * ppp
    targets = []
    for i in range(n):
        own = rng.choice(ppp, params.own_targets, replace=False) + pathway[i] * ppp
        stray = rng.choice(n_prot, params.stray_targets, replace=False)
        targets.append(sorted(set(own.tolist()) | set(stray.tolist())))

    proteins = [f"P{p}" for p in range(n_prot)]
    paths = [f"PW{p}" for p in range(params.n_pathways)]
    diseases = [f"DIS{j}" for j in range(params.n_diseases)]
    effects = [f"SE{j}" for j in range(params.n_side_effects)]
    entities = [(d, "drug") for d in drugs] + [(p, "protein") for p in proteins]
    entities += [(p, "pathway") for p in paths]
    entities += [(x, "disease") for x in diseases] + [(x, "side_effect") for x in effects]

    ekg = [(proteins[p], "member_of", paths[p // ppp]) for p in range(n_prot)]
    for i, d in enumerate(drugs):
        ekg += [(d, "targets", proteins[p]) for p in targets[i]]
        if rng.random() < params.noise_edge_rate:
            ekg.append((d, "treats", str(rng.choice(diseases))))
        if rng.random() < params.noise_edge_rate:
            ekg.append((d, "causes", str(rng.choice(effects))))

    # bucket every unordered pair by type, then draw a long-tailed class profile
    buckets = [[] for _ in range(params.n_types)]
    for u in range(n):
        for v in range(u + 1, n):
            buckets[interaction_type(targets[u], targets[v], parts[u], parts[v])].append((u, v))
    order = rng.permutation(params.n_types)
    weights = np.exp(-params.tail_decay * np.arange(params.n_types))
    want = np.floor(params.n_pairs * weights / weights.sum()).astype(int)
    ddi = []
    for rank, t in enumerate(order):
        pool = buckets[t]
        if not pool:
            continue
        take = min(want[rank], len(pool))
        for k in rng.choice(len(pool), take, replace=False):
            u, v = pool[k]
            if rng.random() < 0.5:
                u, v = v, u
            ddi.append((drugs[u], f"type{t:02d}", drugs[v]))
    used = {frozenset((a, b)) for a, _, b in ddi}
    for r in range(params.n_rare_types):
        added = 0
        while added < params.rare_count:
            u, v = (int(x) for x in rng.choice(n, 2, replace=False))
            if frozenset((drugs[u], drugs[v])) in used:
                continue
            used.add(frozenset((drugs[u], drugs[v])))
            ddi.append((drugs[u], f"rare{r}", drugs[v]))
            added += 1
    ddi = [ddi[k] for k in rng.permutation(len(ddi))]

    smiles = [(d, drug_smiles(*parts[i])) for i, d in enumerate(drugs)]
    hidden = {"pathway": pathway, "parts": parts, "targets": targets}
    return ddi, ekg, entities, smiles, hidden


def _write(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write("\t".join(str(x) for x in row) + "\n")


def write_dataset(root, params: SyntheticParams = SyntheticParams()) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    ddi, ekg, entities, smiles, _ = generate(params)
    _write(root / "ddi.tsv", ddi)
    _write(root / "ekg.tsv", ekg)
    _write(root / "entities.tsv", entities)
    _write(root / "smiles.tsv", smiles)
    return root


def write_toy_dataset(root, n_drugs=6, n_relations=4, seed=0) -> Path:
    """Tiny fixture: ``n_drugs`` drugs, every relation type used at least once."""
    rng = np.random.default_rng(seed)
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    names = list(KNOWN_DRUGS) + [f"D{i}" for i in range(max(0, n_drugs - len(KNOWN_DRUGS)))]
    names = names[:n_drugs]
    pairs = [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]
    ddi = [(a, f"rel{j % n_relations}", b) for j, (a, b) in enumerate(pairs)]
    smiles = []
    for i, n in enumerate(names):
        smi = KNOWN_DRUGS[n][1] if n in KNOWN_DRUGS else drug_smiles(i % 4, i % 2, i % 4)
        smiles.append((n, smi))
    ekg = [(n, "targets", f"P{rng.integers(3)}") for n in names]
    entities = [(n, "drug") for n in names] + [(f"P{j}", "protein") for j in range(3)]
    _write(root / "ddi.tsv", ddi)
    _write(root / "ekg.tsv", ekg)
    _write(root / "entities.tsv", entities)
    _write(root / "smiles.tsv", smiles)
    return root


def main(argv=None):
    """``python -m ddikit.synthetic DIR [--toy]`` writes the four input files."""
    import argparse

    p = argparse.ArgumentParser(prog="python -m ddikit.synthetic")
    p.add_argument("out", help="directory to write ddi/ekg/entities/smiles .tsv into")
    p.add_argument("--toy", action="store_true", help="6-drug fixture instead of the benchmark set")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if args.toy:
        root = write_toy_dataset(args.out, seed=args.seed)
    else:
        root = write_dataset(args.out, SyntheticParams(seed=args.seed))
    print(root)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
