"""Reference predictors for the benchmark: majority class and fingerprint logistic regression."""
from __future__ import annotations

import numpy as np
from sklearn.linear_model import LogisticRegression

from .molgraph import FP_BITS, FP_RADIUS, fingerprint


class MajorityClass:
    """Always predicts the most frequent training label (lowest index on ties)."""

    def fit(self, samples, n_relations: int):
        counts = np.bincount([s.r for s in samples], minlength=n_relations)
        self.n_relations = n_relations
        self.label = int(np.argmax(counts))
        return self

    def predict_proba(self, samples) -> np.ndarray:
        probs = np.zeros((len(samples), self.n_relations))
        probs[:, self.label] = 1.0
        return probs


class FingerprintLogistic:
    """Multinomial logistic regression on concatenated whole-molecule fingerprints.

    Each pair is seen in both orientations during training and the two orientation
    predictions are averaged at test time, so the model is symmetric in the pair.
    """

    def __init__(self, smiles_of: dict, n_bits: int = FP_BITS, radius: int = FP_RADIUS,
                 C: float = 1.0, max_iter: int = 1000, seed: int = 0):
        self.smiles_of = smiles_of
        self.n_bits, self.radius = n_bits, radius
        self.C, self.max_iter, self.seed = C, max_iter, seed
        self._fp = {}

    def _fingerprint(self, drug):
        if drug not in self._fp:
            self._fp[drug] = fingerprint(self.smiles_of[drug], self.n_bits, self.radius)
        return self._fp[drug].astype(np.float32)

    def _features(self, samples, flip=False):
        rows = []
        for s in samples:
            a, b = (s.v, s.u) if flip else (s.u, s.v)
            rows.append(np.concatenate([self._fingerprint(a), self._fingerprint(b)]))
        return np.stack(rows) if rows else np.zeros((0, 2 * self.n_bits), np.float32)

    def fit(self, samples, n_relations: int):
        self.n_relations = n_relations
        X = np.concatenate([self._features(samples), self._features(samples, flip=True)])
        y = np.array([s.r for s in samples] * 2)
        self.model = LogisticRegression(C=self.C, max_iter=self.max_iter, random_state=self.seed)
        self.model.fit(X, y)
        return self

    def predict_proba(self, samples) -> np.ndarray:
        probs = np.zeros((len(samples), self.n_relations))
        if not samples:
            return probs
        both = (self.model.predict_proba(self._features(samples))
                + self.model.predict_proba(self._features(samples, flip=True))) / 2
        probs[:, self.model.classes_] = both
        return probs
