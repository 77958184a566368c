"""Atomic molecular graphs and BRICS substructure graphs built from SMILES."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from rdkit import Chem, RDLogger
from rdkit.Chem import AllChem, BRICS, rdFingerprintGenerator

from .elements import ELEMENT_DIM, element_features, element_table

logger = logging.getLogger(__name__)
RDLogger.DisableLog("rdApp.*")

BOND_DIRS = (
    Chem.BondDir.NONE,
    Chem.BondDir.BEGINWEDGE,
    Chem.BondDir.BEGINDASH,
    Chem.BondDir.ENDDOWNRIGHT,
    Chem.BondDir.ENDUPRIGHT,
    Chem.BondDir.EITHERDOUBLE,
    Chem.BondDir.UNKNOWN,
)
BOND_TYPES = (
    Chem.BondType.SINGLE,
    Chem.BondType.DOUBLE,
    Chem.BondType.TRIPLE,
    Chem.BondType.AROMATIC,
)
BOND_DIM = len(BOND_DIRS) + len(BOND_TYPES) + 2 + 2
ATOM_DIM = ELEMENT_DIM + BOND_DIM
assert BOND_DIM == 15 and ATOM_DIM == 107

FP_RADIUS = 2
FP_BITS = 1024
CONFORMER_SEED = 0xF00D


class SmilesError(ValueError):
    def __init__(self, smiles, reason="could not parse"):
        super().__init__(f"{reason}: {smiles!r}")
        self.smiles = smiles


@dataclass
class MolecularGraph:
    smiles: str
    atomic_numbers: np.ndarray
    bonds: np.ndarray  # (n_bonds, 2), i < j
    bond_features: np.ndarray  # (n_bonds, 15)
    atom_features: np.ndarray  # (n_atoms, 107)
    geometry: str = "conformer"

    @property
    def n_atoms(self):
        return len(self.atomic_numbers)

    def edge_index(self):
        """Both directions of every bond, shape (2, 2 * n_bonds)."""
        if len(self.bonds) == 0:
            return np.zeros((2, 0), dtype=np.int64)
        b = self.bonds.T
        return np.concatenate([b, b[::-1]], axis=1).astype(np.int64)


@dataclass
class Fragment:
    smiles: str
    atoms: tuple
    fingerprint: np.ndarray


@dataclass
class SubstructureGraph:
    fragments: list
    edges: list  # (frag_a, frag_b), a < b, one per cut bond
    cut_bonds: list = field(default_factory=list)  # (atom_i, atom_j)

    def __len__(self):
        return len(self.fragments)

    def fingerprints(self):
        return np.stack([f.fingerprint for f in self.fragments]).astype(np.float32)


def _to_rdkit(smiles):
    mol = Chem.MolFromSmiles(smiles)
    if mol is None or mol.GetNumAtoms() == 0:
        raise SmilesError(smiles)
    return mol


def _covalent_length(z1, z2):
    table = element_table()
    r1 = table[z1]["covalent_radius"] or 75.0
    r2 = table[z2]["covalent_radius"] or 75.0
    return (r1 + r2) / 100.0  # pm -> angstrom


def _bond_lengths(mol, embed):
    """Bond lengths in angstrom from an embedded conformer, or covalent radii."""
    if embed and mol.GetNumAtoms() > 1:
        molh = Chem.AddHs(mol)
        params = AllChem.ETKDGv3()
        params.randomSeed = CONFORMER_SEED
        if AllChem.EmbedMolecule(molh, params) == 0:
            conf = molh.GetConformer()
            lengths = []
            for b in mol.GetBonds():
                p = conf.GetAtomPosition(b.GetBeginAtomIdx())
                q = conf.GetAtomPosition(b.GetEndAtomIdx())
                lengths.append((p - q).Length())
            return np.array(lengths), "conformer"
    lengths = [
        _covalent_length(b.GetBeginAtom().GetAtomicNum(), b.GetEndAtom().GetAtomicNum())
        for b in mol.GetBonds()
    ]
    return np.array(lengths), "covalent"


def bond_feature(bond, length):
    vec = np.zeros(BOND_DIM)
    vec[BOND_DIRS.index(bond.GetBondDir())] = 1.0
    off = len(BOND_DIRS)
    btype = bond.GetBondType()
    vec[off + (BOND_TYPES.index(btype) if btype in BOND_TYPES else 0)] = 1.0
    off += len(BOND_TYPES)
    vec[off] = length
    vec[off + 1] = length * length
    vec[off + 2 + int(bond.IsInRing())] = 1.0
    return vec


def parse_smiles(smiles: str, embed: bool = True) -> MolecularGraph:
    """Heavy-atom graph with 107-dim atom features.

    Each atom row is its elemental one-hot block followed by the element-wise sum
    of the 15-dim features of its incident bonds.
    """
    mol = _to_rdkit(smiles)
    zs = np.array([a.GetAtomicNum() for a in mol.GetAtoms()], dtype=np.int64)
    if zs.min() < 1:
        raise SmilesError(smiles, "wildcard atoms are not allowed in a drug")
    lengths, geometry = _bond_lengths(mol, embed)
    n = len(zs)
    bonds = np.zeros((mol.GetNumBonds(), 2), dtype=np.int64)
    bfeat = np.zeros((mol.GetNumBonds(), BOND_DIM))
    agg = np.zeros((n, BOND_DIM))
    for k, b in enumerate(mol.GetBonds()):
        i, j = sorted((b.GetBeginAtomIdx(), b.GetEndAtomIdx()))
        bonds[k] = (i, j)
        bfeat[k] = bond_feature(b, lengths[k])
        agg[i] += bfeat[k]
        agg[j] += bfeat[k]
    elem = np.stack([element_features(int(z)) for z in zs])
    feats = np.concatenate([elem, agg], axis=1)
    assert feats.shape == (n, ATOM_DIM)
    return MolecularGraph(smiles, zs, bonds, bfeat, feats, geometry)


# BRICS rule data (Degen et al. 2008 as curated in RDKit): environment SMARTS and
# the compatible environment pairs whose connecting bond is cleaved.
_ENVIRONS = {k: v for k, v in BRICS.environs.items() if not k.startswith("#")}
_RULES = [rule for group in BRICS.reactionDefs for rule in group]


@lru_cache(maxsize=1)
def _bond_patterns():
    out = []
    for e1, e2, btype in _RULES:
        sma = "[$(%s)]%s;!@[$(%s)]" % (_ENVIRONS["L" + e1], btype, _ENVIRONS["L" + e2])
        out.append((re.sub("[a-zA-Z]", "", e1), re.sub("[a-zA-Z]", "", e2), Chem.MolFromSmarts(sma)))
    return out


def find_brics_bonds(mol) -> list:
    """Cleavable bonds as ((atom_i, atom_j), (label_i, label_j)), first rule wins."""
    seen = set()
    out = []
    for l1, l2, patt in _bond_patterns():
        for i, j in mol.GetSubstructMatches(patt):
            key = frozenset((i, j))
            if key in seen:
                continue
            seen.add(key)
            out.append(((i, j), (l1, l2)))
    return out


def _components(n, edges):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    label = [find(i) for i in range(n)]
    # number components by their lowest atom index
    order = {r: k for k, r in enumerate(sorted(set(label)))}
    return [order[r] for r in label]


def _fragment_smiles(mol, members, cut):
    """SMILES per fragment with a plain '*' wildcard at each cleaved attachment point."""
    if not cut:
        return [Chem.MolToSmiles(mol)]
    bond_ids = [mol.GetBondBetweenAtoms(i, j).GetIdx() for i, j in cut]
    broken = Chem.FragmentOnBonds(mol, bond_ids, addDummies=True)
    n = mol.GetNumAtoms()
    owner = {}
    for a in broken.GetAtoms():
        if a.GetIdx() >= n:
            a.SetIsotope(0)
            owner[a.GetIdx()] = a.GetNeighbors()[0].GetIdx()
    out = []
    for atoms in members:
        inside = set(atoms)
        use = list(atoms) + [d for d, host in owner.items() if host in inside]
        out.append(Chem.MolFragmentToSmiles(broken, atomsToUse=sorted(use)))
    return out


def brics_decompose(mol: MolecularGraph | str, n_bits: int = FP_BITS,
                    radius: int = FP_RADIUS) -> SubstructureGraph:
    """Cut every BRICS bond; fragments are the remaining connected components."""
    smiles = mol if isinstance(mol, str) else mol.smiles
    rd = _to_rdkit(smiles)
    cut = sorted(tuple(sorted(ij)) for ij, _ in find_brics_bonds(rd))
    cut_set = set(cut)
    kept = []
    for b in rd.GetBonds():
        ij = tuple(sorted((b.GetBeginAtomIdx(), b.GetEndAtomIdx())))
        if ij not in cut_set:
            kept.append(ij)
    comp = _components(rd.GetNumAtoms(), kept)
    n_frag = max(comp) + 1
    members = [[] for _ in range(n_frag)]
    for atom, c in enumerate(comp):
        members[c].append(atom)
    fragments = [
        Fragment(fsmi, tuple(atoms), fingerprint(fsmi, n_bits, radius))
        for fsmi, atoms in zip(_fragment_smiles(rd, members, cut), members)
    ]
    edges = sorted(tuple(sorted((comp[i], comp[j]))) for i, j in cut)
    return SubstructureGraph(fragments, edges, cut)


@lru_cache(maxsize=8)
def _morgan(radius, n_bits):
    return rdFingerprintGenerator.GetMorganGenerator(radius=radius, fpSize=n_bits)


def fingerprint(fragment_smiles: str, n_bits: int = FP_BITS, radius: int = FP_RADIUS) -> np.ndarray:
    """Folded circular (Morgan) fingerprint as a uint8 0/1 vector."""
    frag = Chem.MolFromSmiles(fragment_smiles)
    if frag is None:
        frag = Chem.MolFromSmiles(fragment_smiles, sanitize=False)
        if frag is None:
            raise SmilesError(fragment_smiles, "could not parse fragment")
        frag.UpdatePropertyCache(strict=False)
        Chem.GetSymmSSSR(frag)
    return _morgan(radius, n_bits).GetFingerprintAsNumPy(frag).astype(np.uint8)
