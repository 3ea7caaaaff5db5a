"""Pluggable propensity-score learners: a GLM wrapper and a from-scratch
gradient-boosted tree learner on logistic loss, plus ROC-AUC scoring,
Monte Carlo cross-validation tuning, and propensity clipping.

The boosted learner mirrors the usual boosting hyperparameter surface
(rounds, max_depth, learning_rate, min_child_weight, gamma) with exact greedy
splits on sorted features; row/column subsampling ratios are fixed at 1.0,
which also makes training deterministic given the data.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels, glm
from .errors import DegenerateLabels, SingleClass
from .numkit import RngStream

_BOOST_L2 = 1.0  # fixed ridge term on leaf weights; not part of the tuning surface


@dataclass(frozen=True)
class LearnerSpec:
    """Configuration of one propensity learner (kind 'glm' or 'boosted')."""

    kind: str
    link: str = "logistic"
    add_intercept: bool = True
    rounds: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_child_weight: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("glm", "boosted"):
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.kind == "boosted":
            if self.rounds < 1:
                raise ValueError("rounds must be >= 1")
            if self.max_depth < 1:
                raise ValueError("max_depth must be >= 1")
            if not 0.0 < self.learning_rate <= 1.0:
                raise ValueError("learning_rate must be in (0, 1]")
            if self.min_child_weight < 0.0:
                raise ValueError("min_child_weight must be >= 0")
            if self.gamma < 0.0:
                raise ValueError("gamma must be >= 0")

    def label(self) -> str:
        if self.kind == "glm":
            return f"glm({self.link})"
        return (f"boosted(rounds={self.rounds},depth={self.max_depth},"
                f"rate={self.learning_rate},mcw={self.min_child_weight},"
                f"gamma={self.gamma})")


class FittedLearner:
    def predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ConstantLearner(FittedLearner):
    """Fallback predictor for one-class training labels."""

    def __init__(self, p0: float):
        self.p0 = float(p0)

    def predict(self, X):
        return np.full(np.atleast_2d(X).shape[0], self.p0)


class GlmLearner(FittedLearner):
    def __init__(self, fit: glm.GlmFit, add_intercept: bool):
        self.fit = fit
        self.add_intercept = add_intercept

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.add_intercept:
            X = np.column_stack([np.ones(X.shape[0]), X])
        return glm.predict_propensity(self.fit, X)


class BoostedLearner(FittedLearner):
    def __init__(self, trees, learning_rate, base_margin):
        self.trees = trees  # (feat, thr, left, right, leaf)
        self.learning_rate = learning_rate
        self.base_margin = base_margin

    def predict(self, X):
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
        margins = _kernels.boost_predict(
            X, *self.trees, self.learning_rate, self.base_margin
        )
        return glm._sigmoid(margins)


def fallback_constant(z: np.ndarray, clip_delta: float = 0.1) -> ConstantLearner:
    """Pooled label mean clamped away from the boundary."""
    mean = float(np.mean(z))
    return ConstantLearner(min(max(mean, clip_delta), 1.0 - clip_delta))


def train(spec: LearnerSpec, X: np.ndarray, z: np.ndarray,
          stream: RngStream | None = None) -> FittedLearner:
    """Fit the learner described by spec on (X, z).

    Training is deterministic given (spec, data); the stream argument exists
    for learners that may need it and is unused by the built-in kinds.
    Raises DegenerateLabels when z is all-zero or all-one.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    z = np.asarray(z, dtype=float).ravel()
    if X.shape[0] < 2:
        raise DegenerateLabels("need at least two training units")
    if z.min() == z.max():
        raise DegenerateLabels("training labels are single-class")
    if spec.kind == "glm":
        design = X
        if spec.add_intercept:
            design = np.column_stack([np.ones(X.shape[0]), X])
        fit = glm.fit_glm(design, z, glm.get_link(spec.link))
        return GlmLearner(fit, spec.add_intercept)
    mean = min(max(float(z.mean()), 1e-6), 1.0 - 1e-6)
    base_margin = float(np.log(mean / (1.0 - mean)))
    order = np.empty((X.shape[1], X.shape[0]), np.int64)
    for j in range(X.shape[1]):
        order[j] = np.argsort(X[:, j], kind="stable")
    trees = _kernels.boost_fit(
        X, z, order, spec.rounds, spec.max_depth, spec.learning_rate,
        spec.min_child_weight, spec.gamma, _BOOST_L2, base_margin,
    )
    return BoostedLearner(trees, spec.learning_rate, base_margin)


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC: probability a random positive outscores a random
    negative, with ties counted one half."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC-AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def tune_by_mccv(grid: list[LearnerSpec], X: np.ndarray, z: np.ndarray,
                 splits: int = 10, stream: RngStream | None = None) -> LearnerSpec:
    """Pick the grid entry with the best mean held-out ROC-AUC over repeated
    50/50 splits; ties break toward the earliest grid position.

    Splits whose halves degenerate to a single class are skipped; SingleClass
    propagates only when every split is skipped.
    """
    if not grid:
        raise SingleClass("empty tuning grid")
    if stream is None:
        stream = RngStream(0, 0)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    z = np.asarray(z).ravel()
    n = len(z)
    half = n // 2
    usable = []
    for s in range(splits):
        perm = stream.substream(s).permutation(n)
        tr, te = perm[:half], perm[half:]
        if z[tr].min() == z[tr].max() or z[te].min() == z[te].max():
            continue
        usable.append((tr, te))
    if not usable:
        raise SingleClass("every cross-validation split was single-class")
    means = []
    for spec in grid:
        aucs = []
        for tr, te in usable:
            model = train(spec, X[tr], z[tr])
            aucs.append(roc_auc(model.predict(X[te]), z[te]))
        means.append(float(np.mean(aucs)))
    best = int(np.argmax(means))  # argmax returns the first maximizer
    return grid[best]


def clip_propensities(p: np.ndarray, delta: float) -> np.ndarray:
    """Clamp each entry into [delta, 1 - delta]; order-preserving, idempotent."""
    if not 0.0 < delta < 0.5:
        raise ValueError(f"clip delta must be in (0, 0.5), got {delta}")
    p = np.asarray(p, dtype=float)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("propensities must lie in [0, 1] before clipping")
    return np.clip(p, delta, 1.0 - delta)


def spec_from_dict(d: dict) -> LearnerSpec:
    """Build a LearnerSpec from a config-file mapping."""
    kind = d.get("kind")
    if kind not in ("glm", "boosted"):
        raise ValueError(f"learner kind must be 'glm' or 'boosted', got {kind!r}")
    base = LearnerSpec(kind=kind)
    known = {k: v for k, v in d.items() if k != "kind"}
    return replace(base, **known) if known else base
