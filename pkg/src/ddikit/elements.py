"""Per-element one-hot encoding used as the 92-dim elemental block of atom features.

Continuous properties are split into equal-width bins over the range spanned by the
bundled table (elements 1-100). Layout, in order::

    group 18 | period 7 | electronegativity 10 (+1 missing) | covalent radius 10 |
    valence electrons 12 | first ionization energy 10 | electron affinity 10 |
    block 4 | log atomic volume 10
"""
from __future__ import annotations

import csv
import math
from functools import lru_cache
from importlib import resources

import numpy as np

N_BINS = 10
BLOCKS = ("s", "p", "d", "f")

# (name, width)
LAYOUT = (
    ("group", 18),
    ("period", 7),
    ("electronegativity", N_BINS + 1),
    ("covalent_radius", N_BINS),
    ("valence_electrons", 12),
    ("ionization_energy", N_BINS),
    ("electron_affinity", N_BINS),
    ("block", 4),
    ("atomic_volume", N_BINS),
)
ELEMENT_DIM = sum(w for _, w in LAYOUT)
assert ELEMENT_DIM == 92

_BINNED = ("electronegativity", "covalent_radius", "ionization_energy",
           "electron_affinity", "atomic_volume")


def _float(text):
    return float(text) if text else None


@lru_cache(maxsize=1)
def element_table():
    """Rows of the bundled property table keyed by atomic number."""
    path = resources.files("ddikit") / "data" / "elements.csv"
    rows = {}
    with path.open() as fh:
        for rec in csv.DictReader(fh):
            z = int(rec["z"])
            row = {
                "symbol": rec["symbol"],
                "group": int(rec["group"]),
                "period": int(rec["period"]),
                "block": rec["block"],
                "valence_electrons": int(rec["valence_electrons"]),
            }
            for key in _BINNED:
                row[key] = _float(rec[key])
            if row["atomic_volume"] is not None:
                row["atomic_volume"] = math.log(row["atomic_volume"])
            rows[z] = row
    return rows


@lru_cache(maxsize=1)
def _ranges():
    table = element_table()
    out = {}
    for key in _BINNED:
        vals = [r[key] for r in table.values() if r[key] is not None]
        out[key] = (min(vals), max(vals))
    return out


def _bin(value, lo, hi):
    if hi <= lo:
        return 0
    idx = int((value - lo) / (hi - lo) * N_BINS)
    return min(max(idx, 0), N_BINS - 1)


@lru_cache(maxsize=None)
def element_features(atomic_number: int) -> np.ndarray:
    """92-dim one-hot property vector for an element.

    Missing electronegativity gets its own slot; other missing values (mostly
    electron affinities of elements without a stable anion) fall into bin 0.
    """
    table = element_table()
    if atomic_number not in table:
        raise KeyError(f"no element data for atomic number {atomic_number}")
    row = table[atomic_number]
    ranges = _ranges()
    vec = np.zeros(ELEMENT_DIM)
    offset = 0
    for name, width in LAYOUT:
        if name == "group":
            slot = row["group"] - 1
        elif name == "period":
            slot = row["period"] - 1
        elif name == "valence_electrons":
            slot = min(max(row["valence_electrons"], 1), 12) - 1
        elif name == "block":
            slot = BLOCKS.index(row["block"])
        elif name == "electronegativity" and row[name] is None:
            slot = N_BINS
        else:
            value = row[name]
            slot = 0 if value is None else _bin(value, *ranges[name])
        vec[offset + slot] = 1.0
        offset += width
    vec.setflags(write=False)
    return vec


def block_slices():
    """Mapping block name -> slice into the 92-dim vector."""
    out, offset = {}, 0
    for name, width in LAYOUT:
        out[name] = slice(offset, offset + width)
        offset += width
    return out
