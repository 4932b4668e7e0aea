"""Weighted CART for binary labels in {+1, -1}.

Splits are axis-aligned ``x[f] < t`` (left) / ``x[f] >= t`` (right) with ``t``
the midpoint between consecutive distinct feature values. Ties between equally
good splits go to the lowest feature index, then the lowest threshold. A leaf
predicts +1 only when its positive weight strictly exceeds its negative weight.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import NEGATIVE, POSITIVE, LabeledDataset

FORMAT = "zfp-tree/1"

# Upper bound on elements of the per-node (rows x features) work arrays.
_CHUNK_ELEMS = 4_000_000


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    max_depth: int | None = None
    min_samples_leaf: float = 1
    min_impurity_decrease: float = 0.0

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive or None")
        if self.min_samples_leaf <= 0:
            raise ValueError("min_samples_leaf must be positive")
        if self.min_impurity_decrease < 0:
            raise ValueError("min_impurity_decrease must be nonnegative")


@dataclass(frozen=True)
class ConfusionMatrix:
    TN: float = 0
    TP: float = 0
    FN: float = 0
    FP: float = 0

    @property
    def total(self):
        return self.TN + self.TP + self.FN + self.FP

    @property
    def errors(self):
        return self.FN + self.FP

    def as_row(self) -> tuple:
        return tuple(_num(v) for v in (self.TN, self.TP, self.FN, self.FP))

    def to_dict(self) -> dict:
        return dict(zip(("TN", "TP", "FN", "FP"), self.as_row()))

    @classmethod
    def from_predictions(cls, y, pred, w=None) -> "ConfusionMatrix":
        y = np.asarray(y)
        pred = np.asarray(pred)
        w = np.ones(len(y)) if w is None else np.asarray(w)
        pos = y == POSITIVE
        hit = pred == POSITIVE
        return cls(TN=_num(w[~pos & ~hit].sum()), TP=_num(w[pos & hit].sum()),
                   FN=_num(w[pos & ~hit].sum()), FP=_num(w[~pos & hit].sum()))


def _num(v):
    v = float(v)
    return int(v) if v.is_integer() else v


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    if (counts < 0).any():
        raise ValueError("class counts must be nonnegative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("gini of an empty node is undefined")
    p = counts / total
    return float(1.0 - np.sum(p * p))


class DecisionTree:
    """Array-backed binary tree; node 0 is the root, nodes are in preorder.

    ``counts[i] = (negative weight, positive weight)`` of training samples
    routed to node ``i``. Leaves have ``feature == -1``.
    """

    def __init__(self, feature, threshold, left, right, parent, counts, n_features: int,
                 feature_names=None):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.parent = np.asarray(parent, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.float64).reshape(-1, 2)
        self.n_features = int(n_features)
        if feature_names is None:
            feature_names = [f"x{i}" for i in range(self.n_features)]
        self.feature_names = tuple(feature_names)
        self._validate()

    def _validate(self):
        n = len(self.feature)
        if n == 0:
            raise TreeError("tree has no nodes")
        for a in (self.threshold, self.left, self.right, self.parent):
            if len(a) != n:
                raise TreeError("node arrays have inconsistent lengths")
        if len(self.counts) != n or (self.counts < 0).any():
            raise TreeError("bad leaf counts")
        if len(self.feature_names) != self.n_features:
            raise TreeError("feature name count differs from n_features")
        internal = self.feature >= 0
        if (self.feature >= self.n_features).any():
            raise TreeError("split feature out of range")
        kids = np.concatenate([self.left[internal], self.right[internal]])
        if ((self.left[~internal] != -1) | (self.right[~internal] != -1)).any():
            raise TreeError("leaf with children")
        if len(kids) and ((kids <= 0) | (kids >= n)).any():
            raise TreeError("child index out of range")
        if len(np.unique(kids)) != len(kids) or len(kids) != n - 1:
            raise TreeError("nodes do not form a binary tree")
        for i in np.flatnonzero(internal):
            if self.parent[self.left[i]] != i or self.parent[self.right[i]] != i:
                raise TreeError(f"parent links broken at node {i}")

    @classmethod
    def leaf(cls, neg_weight=0.0, pos_weight=0.0, n_features=1, feature_names=None):
        return cls([-1], [np.nan], [-1], [-1], [-1], [[neg_weight, pos_weight]], n_features,
                   feature_names)

    # -- structure --

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, i: int) -> bool:
        return self.feature[i] < 0

    @property
    def node_labels(self) -> np.ndarray:
        return np.where(self.counts[:, 1] > self.counts[:, 0], POSITIVE, NEGATIVE).astype(np.int8)

    def leaves(self) -> np.ndarray:
        """Leaf ids in left-to-right order."""
        return np.flatnonzero(self.feature < 0)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(1, self.n_nodes):
            depth[i] = depth[self.parent[i]] + 1
        return int(depth.max())

    def path(self, leaf: int) -> list[tuple[int, str, float]]:
        """Root-to-node list of ``(feature, op, threshold)`` with op in {'<', '>='}."""
        steps = []
        node = leaf
        while self.parent[node] >= 0:
            p = self.parent[node]
            op = "<" if self.left[p] == node else ">="
            steps.append((int(self.feature[p]), op, float(self.threshold[p])))
            node = p
        return steps[::-1]

    # -- prediction --

    def _check_dim(self, X: np.ndarray):
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise TreeError(f"expected {self.n_features} features, got shape {X.shape}")

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        self._check_dim(X)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] < self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X):
        """Labels for a batch ``X`` (n x d), or a single label for a vector."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            return int(self.node_labels[self.apply(X.reshape(1, -1))[0]])
        return self.node_labels[self.apply(X)]

    # -- serialization --

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            leaf = self.feature[i] < 0
            nodes.append({
                "id": i,
                "parent": int(self.parent[i]),
                "feature": int(self.feature[i]),
                "threshold": None if leaf else float(self.threshold[i]),
                "left": int(self.left[i]),
                "right": int(self.right[i]),
                "counts": [_num(c) for c in self.counts[i]],
            })
        return {"format": FORMAT, "n_features": self.n_features,
                "feature_names": list(self.feature_names), "nodes": nodes}

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionTree":
        try:
            if data.get("format") != FORMAT:
                raise TreeError(f"unsupported tree format {data.get('format')!r}")
            nodes = sorted(data["nodes"], key=lambda n: n["id"])
            if [n["id"] for n in nodes] != list(range(len(nodes))):
                raise TreeError("node ids are not 0..n-1")
            thr = [np.nan if n["threshold"] is None else float(n["threshold"]) for n in nodes]
            return cls([n["feature"] for n in nodes], thr, [n["left"] for n in nodes],
                       [n["right"] for n in nodes], [n["parent"] for n in nodes],
                       [n["counts"] for n in nodes], data["n_features"],
                       data.get("feature_names"))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, TreeError):
                raise
            raise TreeError(f"malformed tree: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "DecisionTree":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TreeError(f"malformed tree: {exc}") from exc
        if not isinstance(data, dict):
            raise TreeError("malformed tree: not an object")
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "DecisionTree":
        return cls.loads(Path(path).read_text())

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, DecisionTree):
            return NotImplemented
        return self.dumps() == other.dumps()

    def __repr__(self):
        return f"DecisionTree(n_nodes={self.n_nodes}, n_leaves={len(self.leaves())})"


def _best_split(X, pos_w, neg_w, min_leaf):
    """Return ``(score, feature, threshold)`` minimising the weighted child
    Gini sum, or None when no admissible split exists."""
    n, d = X.shape
    P, Q = pos_w.sum(), neg_w.sum()
    W = P + Q
    tol = 1e-12 * W
    chunk = max(1, _CHUNK_ELEMS // max(n, 1))
    col_min = np.full(d, np.inf)
    col_arg = np.zeros(d, dtype=np.int64)
    col_thr = np.zeros(d)
    for f0 in range(0, d, chunk):
        Xc = X[:, f0:f0 + chunk]
        order = np.argsort(Xc, axis=0, kind="stable")
        xs = np.take_along_axis(Xc, order, axis=0)
        cp = np.cumsum(pos_w[order], axis=0)[:-1]
        cn = np.cumsum(neg_w[order], axis=0)[:-1]
        wl = cp + cn
        wr = W - wl
        valid = (xs[1:] > xs[:-1]) & (wl >= min_leaf) & (wr >= min_leaf)
        with np.errstate(divide="ignore", invalid="ignore"):
            score = (wl - (cp * cp + cn * cn) / wl
                     + wr - ((P - cp) ** 2 + (Q - cn) ** 2) / wr)
        score = np.where(valid, score, np.inf)
        if score.size == 0:
            continue
        mins = score.min(axis=0)
        first = np.argmax(score <= (mins + tol)[None, :], axis=0)
        cols = np.arange(Xc.shape[1])
        col_min[f0:f0 + chunk] = mins
        col_arg[f0:f0 + chunk] = first
        lo, hi = xs[first, cols], xs[np.minimum(first + 1, n - 1), cols]
        col_thr[f0:f0 + chunk] = [_midpoint(a, b) for a, b in zip(lo, hi)]
    if not np.isfinite(col_min).any():
        return None
    gmin = col_min.min()
    f = int(np.argmax(col_min <= gmin + tol))
    return float(col_min[f]), f, float(col_thr[f])


def _midpoint(lo: float, hi: float) -> float:
    t = 0.5 * lo + 0.5 * hi
    if not lo < t <= hi:
        t = hi
    return float(t)


def fit_arrays(X, y, w=None, cfg: TrainConfig | None = None, feature_names=None) -> DecisionTree:
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) == 0:
        raise TreeError("cannot fit a tree on an empty dataset")
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=np.float64)
    pos_w = np.where(y == POSITIVE, w, 0.0)
    neg_w = np.where(y == POSITIVE, 0.0, w)
    root_weight = w.sum()
    min_leaf = float(cfg.min_samples_leaf)

    feature, threshold, left, right, parent, counts = [], [], [], [], [], []
    stack = [(np.arange(len(y)), 0, -1, False)]
    while stack:
        idx, depth, par, is_right = stack.pop()
        nid = len(feature)
        if par >= 0:
            (right if is_right else left)[par] = nid
        p, q = pos_w[idx].sum(), neg_w[idx].sum()
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        parent.append(par)
        counts.append((q, p))
        if p == 0 or q == 0 or p + q < 2 * min_leaf:
            continue
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            continue
        Xn = X[idx]
        split = _best_split(Xn, pos_w[idx], neg_w[idx], min_leaf)
        if split is None:
            continue
        score, f, t = split
        W = p + q
        decrease = (W - (p * p + q * q) / W - score) / root_weight
        if decrease < cfg.min_impurity_decrease - 1e-12:
            continue
        feature[nid] = f
        threshold[nid] = t
        go_left = Xn[:, f] < t
        stack.append((idx[~go_left], depth + 1, nid, True))
        stack.append((idx[go_left], depth + 1, nid, False))

    if feature_names is None:
        feature_names = [f"x{i}" for i in range(X.shape[1])]
    return DecisionTree(feature, threshold, left, right, parent, counts, X.shape[1],
                        feature_names)


def fit(ds: LabeledDataset, cfg: TrainConfig | None = None) -> DecisionTree:
    if len(ds) == 0:
        raise TreeError("cannot fit a tree on an empty dataset")
    return fit_arrays(ds.X, ds.y, ds.w, cfg, ds.feature_names)


def predict(tree: DecisionTree, x):
    return tree.predict(x)


def evaluate(tree: DecisionTree, ds: LabeledDataset) -> ConfusionMatrix:
    if ds.d != tree.n_features:
        raise TreeError(f"tree expects {tree.n_features} features, dataset has {ds.d}")
    return ConfusionMatrix.from_predictions(ds.y, tree.predict(ds.X), ds.w)
