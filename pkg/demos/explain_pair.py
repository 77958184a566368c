"""Which fragments and which graph neighbours drive a prediction?

Trains a small model on the toy set (which contains Itraconazole, Promazine and
Duloxetine), then explains the Itraconazole-Promazine pair: fragment scores from
the interaction-graph readout and entity scores from the subgraph readout.
Run with ``python demos/explain_pair.py [--plot out.png]``.
"""
import argparse
import json
import tempfile
import warnings
from pathlib import Path

import torch

from ddikit.config import TrainConfig
from ddikit.dataset import load_dataset
from ddikit.explain import explain_pair, plot_explanation, validate_explanation
from ddikit.kgstore import make_folds
from ddikit.synthetic import KNOWN_DRUGS, write_toy_dataset
from ddikit.trainer import prepare_fold, train_fold

warnings.simplefilter("ignore")
torch.set_num_threads(1)

parser = argparse.ArgumentParser()
parser.add_argument("--plot", help="write a bar chart of fragment scores here")
args = parser.parse_args()

work = Path(tempfile.mkdtemp(prefix="ddikit-explain-"))
ds = load_dataset(write_toy_dataset(work / "toy", n_drugs=8))
cfg = TrainConfig(d0=16, hidden=16, epochs=40, n_folds=2, valid_fraction=0.0)
fold = make_folds(ds.samples, cfg.n_folds, "random", cfg.seed, cfg.valid_fraction)[0]
data = prepare_fold(ds.kg, fold, ds.mols, ds.subs, ds.n_relations, cfg)
model = train_fold(cfg, data).model

names = ds.id_maps.entities.names
u, v = names.index("DB01167"), names.index("DB00420")
obj = explain_pair(model, data.bundle, u, v, names, ds.id_maps.entity_class,
                   ds.relation_names, top_k=3)
validate_explanation(obj)

print(f"{KNOWN_DRUGS['DB01167'][0]} + {KNOWN_DRUGS['DB00420'][0]}:"
      f" predicted {obj['predicted']['relation']} (p = {obj['predicted']['probability']:.2f})")
for side, drug in (("u", "DB01167"), ("v", "DB00420")):
    print(f"\nfragments of {KNOWN_DRUGS[drug][0]}, highest influence first")
    for f in obj["fragments"][side]:
        tag = f"  [{', '.join(f['named'])}]" if f["named"] else ""
        print(f"  {f['rank']:2d}. {f['score']:.3f}  {f['smiles']}{tag}")

print("\nmost attended knowledge-graph entities")
for e in obj["top_entities"]:
    print(f"  {e['external_id']:8s} {e['entity_class']:8s} score {e['score']:.3f}"
          f"  hops {e['distance_u']}/{e['distance_v']}")

triazoles = [f["rank"] for f in obj["fragments"]["u"] if "triazole" in f["named"]]
print(f"\ntriazole-bearing fragments of Itraconazole sit at ranks {triazoles}.")
print("The toy labels are arbitrary, so the ranking shows the mechanism, not chemistry.")

out = work / "explanation.json"
out.write_text(json.dumps(obj, indent=2))
print(f"full record: {out}")
if args.plot:
    plot_explanation(obj, args.plot)
    print(f"plot: {args.plot}")
