"""Desk-scale benchmark: the full model against baselines and its own ablations.

The synthetic set plants a label that needs both scales: the number of protein
targets two drugs share (seen only through the knowledge graph) and the number of
building blocks their molecules share (seen only through fragments).

    python demos/benchmark.py                 # fold 0, full model + baselines (~2 min)
    python demos/benchmark.py --all           # 5 folds x 5 variants (~50 min, one core)
"""
import argparse
import tempfile
import time
import warnings
from importlib import resources

import numpy as np
import torch

from ddikit.config import ABLATIONS, TrainConfig
from ddikit.dataset import load_dataset
from ddikit.synthetic import SyntheticParams, write_dataset
from ddikit.trainer import run_cv

warnings.simplefilter("ignore")
torch.set_num_threads(1)

parser = argparse.ArgumentParser()
parser.add_argument("--all", action="store_true", help="every fold and every ablation")
args = parser.parse_args()

cfg = TrainConfig.from_text(resources.files("ddikit").joinpath("configs/benchmark.cfg").read_text())
ds = load_dataset(write_dataset(tempfile.mkdtemp(prefix="ddikit-bench-"), SyntheticParams()),
                  top_relations=20)
s = ds.summary()
print(f"{s['ddi_samples']} pairs over {s['drugs']} drugs, {s['ddi_relation_types']} types,"
      f" {s['ekg_triples']} knowledge-graph triples")

folds = None if args.all else [0]
variants = ("full",) + (ABLATIONS if args.all else ())
results = {}
for name in variants:
    start = time.perf_counter()
    variant = cfg if name == "full" else cfg.with_overrides({name: True})
    results[name] = run_cv(variant, ds, folds=folds, baselines=name == "full",
                           fidelity=name == "full")
    f1 = [f["test"]["macro_f1"] for f in results[name]["folds"]]
    print(f"  {name:11s} macro-F1 {np.mean(f1):.3f}  folds {np.round(f1, 3).tolist()}"
          f"  ({time.perf_counter() - start:.0f}s)")

print("\nbaselines on the same folds")
for name, agg in results["full"]["baselines"].items():
    print(f"  {name:21s} macro-F1 {agg['macro_f1']['mean']:.3f}")

print("\nfidelity of the subgraph explanations (mean over folds)")
rows = [f["fidelity"] for f in results["full"]["folds"]]
for i, level in enumerate(r["sparsity"] for r in rows[0]):
    plus = np.mean([r[i]["fid_plus"] for r in rows])
    minus = np.mean([r[i]["fid_minus"] for r in rows])
    print(f"  sparsity {level:.1f}: Fid+ {plus:.3f}  Fid- {minus:.3f}")
if args.all:
    sig = results["full"]["significance"]
    print("\ncorrected paired t-test, full model vs baseline:",
          {k: f"t={v['t']:.2f}, p={v['p']:.3g}" for k, v in sig.items()})
