"""Bagged random-forest classifier grown best-first under a terminal-node cap.

Trees split on count thresholds (midpoints between observed values) chosen by
Gini impurity decrease over a per-split random feature subset. Determinism
contract: a fixed seed and canonically ordered training rows produce an
identical forest, byte for byte, under JSON serialization.
"""

from __future__ import annotations

import heapq
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin

from .textfeat import FeatureMatrix

MODEL_FORMAT_VERSION = 1

_GAIN_EPS = 1e-12


@dataclass(frozen=True)
class ForestHyperparams:
    n_trees: int = 150
    max_terminal_nodes: int = 25
    min_leaf_size: int = 3
    features_per_split: int = 25
    bootstrap_with_replacement: bool = True
    # Alternative reading of the "at least 3 terminal nodes" control: grow at
    # least this many leaves, allowing zero-gain splits to reach it.
    min_terminal_leaves: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_terminal_nodes < 2:
            raise ValueError("max_terminal_nodes must be >= 2")
        if self.min_leaf_size < 1:
            raise ValueError("min_leaf_size must be >= 1")
        if self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")
        if not 1 <= self.min_terminal_leaves <= self.max_terminal_nodes:
            raise ValueError("min_terminal_leaves must be in [1, max_terminal_nodes]")

    def as_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_terminal_nodes": self.max_terminal_nodes,
            "min_leaf_size": self.min_leaf_size,
            "features_per_split": self.features_per_split,
            "bootstrap_with_replacement": self.bootstrap_with_replacement,
            "min_terminal_leaves": self.min_terminal_leaves,
            "seed": self.seed,
        }


@dataclass
class Tree:
    """Flat array representation: node i is a leaf iff feature[i] < 0."""

    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    n_neg: list[int]
    n_pos: list[int]

    def n_leaves(self) -> int:
        return sum(1 for f in self.feature if f < 0)

    def leaf_sizes(self) -> list[int]:
        return [
            self.n_neg[i] + self.n_pos[i]
            for i, f in enumerate(self.feature)
            if f < 0
        ]

    def leaf_for(self, row: np.ndarray) -> int:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if row[self.feature[node]] <= self.threshold[node] else self.right[node]
        return node

    def positive_fraction(self, row: np.ndarray) -> float:
        leaf = self.leaf_for(row)
        total = self.n_neg[leaf] + self.n_pos[leaf]
        return self.n_pos[leaf] / total

    def as_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "n_neg": self.n_neg,
            "n_pos": self.n_pos,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=list(d["feature"]),
            threshold=[float(v) for v in d["threshold"]],
            left=list(d["left"]),
            right=list(d["right"]),
            n_neg=list(d["n_neg"]),
            n_pos=list(d["n_pos"]),
        )


@dataclass
class ForestModel:
    trees: list[Tree]
    hyperparams: ForestHyperparams
    n_features: int
    vocab_hash: str | None = None
    n_pos: int = 0
    n_neg: int = 0
    trained_at: str | None = None

    def predict_proba(self, X) -> np.ndarray:
        """Mean over trees of the leaf positive-class fraction, per row."""
        X = _as_dense(X)
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"feature dimension mismatch: model expects {self.n_features}, got {X.shape[1]}"
            )
        out = np.zeros(X.shape[0])
        for tree in self.trees:
            out += np.array([tree.positive_fraction(row) for row in X])
        return out / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def to_json(self) -> str:
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "hyperparams": self.hyperparams.as_dict(),
            "n_features": self.n_features,
            "vocab_hash": self.vocab_hash,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "trained_at": self.trained_at,
            "trees": [t.as_dict() for t in self.trees],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ForestModel":
        doc = json.loads(text)
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {doc.get('format_version')!r}")
        return cls(
            trees=[Tree.from_dict(t) for t in doc["trees"]],
            hyperparams=ForestHyperparams(**doc["hyperparams"]),
            n_features=doc["n_features"],
            vocab_hash=doc.get("vocab_hash"),
            n_pos=doc.get("n_pos", 0),
            n_neg=doc.get("n_neg", 0),
            trained_at=doc.get("trained_at"),
        )


def _as_dense(X) -> np.ndarray:
    if sp.issparse(X):
        X = X.toarray()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return X


class _ColumnCache:
    """Lazily densified feature columns shared by all trees of one fit."""

    def __init__(self, X):
        self._csc = sp.csc_matrix(X) if sp.issparse(X) else None
        self._dense = None if self._csc is not None else np.asarray(X, dtype=np.float64)
        self._cache: dict[int, np.ndarray] = {}
        self.shape = X.shape

    def col(self, j: int) -> np.ndarray:
        if self._dense is not None:
            return self._dense[:, j]
        got = self._cache.get(j)
        if got is None:
            got = np.asarray(self._csc[:, [j]].todense(), dtype=np.float64).ravel()
            self._cache[j] = got
        return got


def _best_split(cols: _ColumnCache, y: np.ndarray, idx: np.ndarray, features: np.ndarray, min_leaf: int):
    """Best (gain, feature, threshold) over the candidate features, or None.

    Gain is the Gini impurity decrease weighted by node fraction. Ties keep
    the lowest feature index (features are scanned in ascending order) and,
    within a feature, the lowest threshold.
    """
    y_node = y[idx]
    n = idx.size
    pos_total = int(y_node.sum())
    parent = n - (pos_total * pos_total + (n - pos_total) * (n - pos_total)) / n

    best = None  # (gain, feature, threshold)
    for j in features:
        v = cols.col(int(j))[idx]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        if vs[0] == vs[-1]:
            continue
        ys = y_node[order]
        # Candidate cut after position i wherever the value changes.
        change = np.nonzero(vs[:-1] < vs[1:])[0]
        n_left = change + 1
        n_right = n - n_left
        valid = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not valid.any():
            continue
        pos_prefix = np.cumsum(ys)
        pos_left = pos_prefix[change]
        neg_left = n_left - pos_left
        pos_right = pos_total - pos_left
        neg_right = n_right - pos_right
        child_term = (
            n_left - (pos_left**2 + neg_left**2) / n_left
            + n_right - (pos_right**2 + neg_right**2) / n_right
        )
        gain = (parent - child_term) / n
        gain[~valid] = -np.inf
        i = int(np.argmax(gain))
        g = float(gain[i])
        if g < 0:
            continue
        if best is None or g > best[0] + _GAIN_EPS:
            threshold = (vs[change[i]] + vs[change[i] + 1]) / 2.0
            best = (g, int(j), float(threshold))
    return best


def _grow_tree(cols: _ColumnCache, y: np.ndarray, sample_idx: np.ndarray, hp: ForestHyperparams, rng: np.random.Generator) -> Tree:
    n_features = cols.shape[1]
    m = min(hp.features_per_split, n_features)

    tree = Tree(feature=[], threshold=[], left=[], right=[], n_neg=[], n_pos=[])

    def new_node(idx: np.ndarray) -> int:
        node = len(tree.feature)
        tree.feature.append(-1)
        tree.threshold.append(0.0)
        tree.left.append(-1)
        tree.right.append(-1)
        pos = int(y[idx].sum())
        tree.n_pos.append(pos)
        tree.n_neg.append(int(idx.size - pos))
        return node

    def propose(idx: np.ndarray):
        if idx.size < 2 * hp.min_leaf_size:
            return None
        pos = int(y[idx].sum())
        if pos == 0 or pos == idx.size:
            return None  # pure
        feats = np.sort(rng.choice(n_features, size=m, replace=False))
        return _best_split(cols, y, idx, feats, hp.min_leaf_size)

    root = new_node(sample_idx)
    heap: list[tuple[float, int, int, float, int, np.ndarray]] = []
    counter = 0
    split = propose(sample_idx)
    if split is not None:
        heapq.heappush(heap, (-split[0], counter, split[1], split[2], root, sample_idx))
    n_leaves = 1

    while heap and n_leaves < hp.max_terminal_nodes:
        neg_gain, _, feat, thresh, node, idx = heapq.heappop(heap)
        if -neg_gain <= _GAIN_EPS and n_leaves >= hp.min_terminal_leaves:
            continue
        mask = cols.col(feat)[idx] <= thresh
        left_idx, right_idx = idx[mask], idx[~mask]
        tree.feature[node] = feat
        tree.threshold[node] = thresh
        left = new_node(left_idx)
        right = new_node(right_idx)
        tree.left[node] = left
        tree.right[node] = right
        n_leaves += 1
        for child, child_idx in ((left, left_idx), (right, right_idx)):
            s = propose(child_idx)
            if s is not None:
                counter += 1
                heapq.heappush(heap, (-s[0], counter, s[1], s[2], child, child_idx))
    return tree


def _fit_forest(X, y: np.ndarray, hp: ForestHyperparams, n_jobs: int = 1) -> list[Tree]:
    cols = _ColumnCache(X)
    n = y.size
    children = np.random.SeedSequence(hp.seed).spawn(hp.n_trees)

    def build(k: int) -> Tree:
        rng = np.random.Generator(np.random.PCG64(children[k]))
        if hp.bootstrap_with_replacement:
            sample = np.sort(rng.integers(0, n, size=n))
        else:
            sample = np.arange(n)
            rng.integers(0, n, size=n)  # keep the per-tree stream aligned across modes
        return _grow_tree(cols, y, sample, hp, rng)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(build, range(hp.n_trees)))
    return [build(k) for k in range(hp.n_trees)]


class ForestClassifier(BaseEstimator, ClassifierMixin):
    """sklearn-style front end over the bagged forest.

    ``predict_proba`` follows the sklearn (n, 2) convention; the module-level
    :func:`predict_proba` returns the bare positive-class fraction.
    """

    def __init__(
        self,
        n_trees=150,
        max_terminal_nodes=25,
        min_leaf_size=3,
        features_per_split=25,
        bootstrap_with_replacement=True,
        min_terminal_leaves=1,
        seed=0,
        n_jobs=1,
    ):
        self.n_trees = n_trees
        self.max_terminal_nodes = max_terminal_nodes
        self.min_leaf_size = min_leaf_size
        self.features_per_split = features_per_split
        self.bootstrap_with_replacement = bootstrap_with_replacement
        self.min_terminal_leaves = min_terminal_leaves
        self.seed = seed
        self.n_jobs = n_jobs

    def _hyperparams(self) -> ForestHyperparams:
        return ForestHyperparams(
            n_trees=self.n_trees,
            max_terminal_nodes=self.max_terminal_nodes,
            min_leaf_size=self.min_leaf_size,
            features_per_split=self.features_per_split,
            bootstrap_with_replacement=self.bootstrap_with_replacement,
            min_terminal_leaves=self.min_terminal_leaves,
            seed=self.seed,
        )

    def fit(self, X, y, doc_ids: Sequence[str] | None = None, vocab_hash: str | None = None):
        hp = self._hyperparams()
        hp.validate()
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] != y.size:
            raise ValueError("X and y disagree on sample count")
        if set(np.unique(y)) - {0, 1}:
            raise ValueError("labels must be 0/1")
        n_pos = int(y.sum())
        n_neg = int(y.size - n_pos)
        if min(n_pos, n_neg) < hp.min_leaf_size:
            raise ValueError(
                f"need at least min_leaf_size={hp.min_leaf_size} examples of each class "
                f"(got {n_pos} positive, {n_neg} negative)"
            )
        if X.shape[1] < 1:
            raise ValueError("need at least one feature")
        if doc_ids is not None:
            # Canonical pre-sort so determinism is a function of the seed,
            # not of the caller's row order.
            if len(doc_ids) != y.size:
                raise ValueError("doc_ids length mismatch")
            order = np.argsort(np.asarray(doc_ids, dtype=object), kind="stable")
            X = X[order]
            y = y[order]
        trees = _fit_forest(X, y, hp, n_jobs=self.n_jobs)
        self.model_ = ForestModel(
            trees=trees,
            hyperparams=hp,
            n_features=X.shape[1],
            vocab_hash=vocab_hash,
            n_pos=n_pos,
            n_neg=n_neg,
        )
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X) -> np.ndarray:
        p = self.model_.predict_proba(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return self.model_.predict(X)


def train_forest(
    matrix: FeatureMatrix,
    labels: Mapping[str, int] | Sequence[int],
    hp: ForestHyperparams | None = None,
    n_jobs: int = 1,
    trained_at: str | None = None,
) -> ForestModel:
    """Fit a forest on a feature matrix; rows are canonically sorted by doc id."""
    hp = hp or ForestHyperparams()
    if isinstance(labels, Mapping):
        y = np.array([labels[d] for d in matrix.doc_ids], dtype=np.int64)
    else:
        y = np.asarray(labels, dtype=np.int64)
    clf = ForestClassifier(n_jobs=n_jobs, **hp.as_dict())
    clf.fit(matrix.design_matrix(), y, doc_ids=matrix.doc_ids, vocab_hash=matrix.vocab.content_hash())
    clf.model_.trained_at = trained_at
    return clf.model_


def predict_proba(model: ForestModel, X) -> np.ndarray:
    """Positive-class probability per row (vote fraction across trees)."""
    return model.predict_proba(X)


def predict_label(model: ForestModel, X) -> np.ndarray:
    """Hard labels; the 0.5 tie goes to the positive class."""
    return model.predict(X)


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def metrics_from_confusion(tp: int, fp: int, fn: int, tn: int) -> Metrics:
    """Exact rational arithmetic, converted to float at the boundary."""
    n = tp + fp + fn + tn
    if n < 1:
        raise ValueError("empty confusion matrix")
    accuracy = Fraction(tp + tn, n)
    precision = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    recall = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    if precision + recall:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = Fraction(0)
    return Metrics(
        tp=tp, fp=fp, fn=fn, tn=tn,
        accuracy=float(accuracy),
        precision=float(precision),
        recall=float(recall),
        f1=float(f1),
    )


def confusion_counts(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[int, int, int, int]:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    tp = int(((y_true == 1) & (y_pred == 1)).sum())
    fp = int(((y_true == 0) & (y_pred == 1)).sum())
    fn = int(((y_true == 1) & (y_pred == 0)).sum())
    tn = int(((y_true == 0) & (y_pred == 0)).sum())
    return tp, fp, fn, tn


def evaluate(model: ForestModel, X_test, y_test) -> Metrics:
    y_test = np.asarray(y_test, dtype=np.int64)
    if y_test.size == 0:
        raise ValueError("test set is empty")
    y_pred = model.predict(X_test)
    return metrics_from_confusion(*confusion_counts(y_test, y_pred))


def stratified_split(
    ids: Sequence[str],
    labels: Mapping[str, int] | Sequence[int],
    train_fraction: float,
    balance_train: bool = True,
    seed: int = 0,
) -> tuple[list[str], list[str]]:
    """Seeded per-class split; the train side may be downsampled to 50/50.

    Allocation is floor(train_fraction * n_class) per class (stratified),
    which realizes floor(train_fraction * n) overall except for rounding on
    adversarial class sizes. With ``balance_train`` the in-pool majority is
    downsampled to the minority count and the overflow joins the test side,
    which always keeps the natural distribution of the remainder.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    if isinstance(labels, Mapping):
        label_of = dict(labels)
    else:
        label_of = {i: l for i, l in zip(ids, labels)}
    by_class: dict[int, list[str]] = {}
    for i in sorted(ids):
        by_class.setdefault(int(label_of[i]), []).append(i)
    if len(by_class) < 2:
        raise ValueError("both classes must be present")
    rng = np.random.default_rng(seed)
    pools: dict[int, list[str]] = {}
    for cls in sorted(by_class):
        members = by_class[cls]
        take = int(train_fraction * len(members))
        perm = rng.permutation(len(members))
        pools[cls] = [members[k] for k in perm[:take]]
    if balance_train:
        keep = min(len(p) for p in pools.values())
        pools = {cls: p[:keep] for cls, p in pools.items()}
    train = sorted(i for p in pools.values() for i in p)
    train_set = set(train)
    test = sorted(i for i in ids if i not in train_set)
    return train, test


def write_metrics_csv(rows: Sequence[tuple[str, str, Metrics, float | None]], path) -> None:
    """Per-theory metric rows: theory, variant, accuracy, recall, precision, f1, change."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theory", "variant", "accuracy", "recall", "precision", "f1", "change"])
        for theory, variant, m, change in rows:
            writer.writerow(
                [
                    theory,
                    variant,
                    f"{m.accuracy:.4f}",
                    f"{m.recall:.4f}",
                    f"{m.precision:.4f}",
                    f"{m.f1:.4f}",
                    "" if change is None else f"{change:+.4f}",
                ]
            )
