"""A first tour: from TSV files to a trained fold in under a minute.

Run with ``python demos/quickstart.py``. Everything happens in a temporary
directory; nothing is written next to the repository.
"""
import tempfile
import warnings
from pathlib import Path

import torch

from ddikit.config import TrainConfig
from ddikit.dataset import load_dataset
from ddikit.kgstore import make_folds
from ddikit.molgraph import brics_decompose, parse_smiles
from ddikit.pairgraph import build_hig, khop_enclosing_subgraph
from ddikit.synthetic import KNOWN_DRUGS, write_toy_dataset
from ddikit.trainer import prepare_fold, train_fold

warnings.simplefilter("ignore")
torch.set_num_threads(1)


def section(title):
    print(f"\n== {title} " + "=" * max(0, 60 - len(title)))


work = Path(tempfile.mkdtemp(prefix="ddikit-quickstart-"))
root = write_toy_dataset(work / "toy", n_drugs=8)

section("1. inputs")
for name in ("ddi.tsv", "ekg.tsv", "entities.tsv", "smiles.tsv"):
    first = (root / name).read_text().splitlines()[0]
    print(f"{name:13s} {first[:70]}")

section("2. the loaded dataset")
ds = load_dataset(root, cache_dir=work / "cache")
for key, value in ds.summary().items():
    print(f"{key:22s} {value}")

section("3. one molecule, two views")
name, smiles = KNOWN_DRUGS["DB00476"]
mol = parse_smiles(smiles)
sub = brics_decompose(mol)
print(f"{name}: {mol.n_atoms} atoms, atom features {mol.atom_features.shape[1]} wide")
print(f"BRICS fragments ({len(sub)}):", ", ".join(f.smiles for f in sub.fragments))
print("fragment graph edges:", sub.edges)

section("4. a drug pair in the knowledge graph")
names = ds.id_maps.entities.names
u, v = names.index("DB00476"), names.index("DB01167")
g = khop_enclosing_subgraph(ds.kg, u, v, k=2)
print(f"enclosing subgraph: {g.n_nodes} nodes;",
      "members:", ", ".join(names[i] for i in g.node_ids))
hig = build_hig(ds.subs[u], ds.subs[v])
print(f"interaction graph: {hig.n_nodes} fragments,",
      f"{hig.inter_edges.shape[0]} cross-drug edges")

section("5. train one fold")
cfg = TrainConfig(d0=16, hidden=16, epochs=30, n_folds=3, valid_fraction=0.0)
fold = make_folds(ds.samples, cfg.n_folds, "random", cfg.seed, cfg.valid_fraction)[0]
data = prepare_fold(ds.kg, fold, ds.mols, ds.subs, ds.n_relations, cfg)
res = train_fold(cfg, data)
print(f"{len(data.train)} train / {len(data.test)} test pairs, gamma = {res.gamma:.4g}")
print("first step losses:", {k: round(v, 4) for k, v in res.history[0].items()
                            if k.startswith(("L_", "total"))})
print("test metrics:", {k: round(v, 3) for k, v in res.test_metrics.to_dict().items()})
print("\nA toy set this small carries no signal; demos/benchmark.py runs the real check.")
