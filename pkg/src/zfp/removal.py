"""Iterative removal baseline: retrain, then drop the positives that share a
positive-predicted leaf with misclassified negatives, until no negative is
misclassified. Negatives are never removed, so the final model has zero false
positives on every original negative. Positives the final model still
misclassifies are dropped from the retained mask.

Each round records the misclassification cost before removal (``J_pre``, the
fitted model on the current set) and after removal (``J_post``, the same model
on the reduced set), with ``r_k = J_post / J_pre`` and
``q_k = J_pre(k) / J_post(k-1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import cart
from .cart import ConfusionMatrix, DecisionTree, TrainConfig
from .dataset import NEGATIVE, POSITIVE, LabeledDataset


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


@dataclass(frozen=True)
class Round:
    index: int
    fn_pre: float
    fp_pre: float
    fn_post: float
    fp_post: float
    removed: int
    r: float
    q: float

    @property
    def J_pre(self):
        return self.fn_pre + self.fp_pre

    @property
    def J_post(self):
        return self.fn_post + self.fp_post


@dataclass
class ConvergenceTrace:
    rounds: list[Round] = field(default_factory=list)

    def __len__(self):
        return len(self.rounds)

    def to_csv(self) -> str:
        lines = ["round,J_pre,J_post,removed,r_k,q_k"]
        for r in self.rounds:
            lines.append(",".join(str(v) for v in (
                r.index, cart._num(r.J_pre), cart._num(r.J_post), r.removed, r.r, r.q)))
        return "\n".join(lines) + "\n"


@dataclass
class RemovalResult:
    model: DecisionTree
    positive_mask: np.ndarray
    trace: ConvergenceTrace
    final_confusion: ConfusionMatrix

    @property
    def retained(self) -> int:
        return int(np.count_nonzero(self.positive_mask))


def run_removal(ds: LabeledDataset, cart_cfg: TrainConfig | None = None) -> RemovalResult:
    if ds.n_n == 0:
        raise ValueError("dataset has no negative samples")
    pos_idx = np.flatnonzero(ds.y == POSITIVE)
    neg_idx = np.flatnonzero(ds.y == NEGATIVE)
    mask = np.ones(len(pos_idx), dtype=bool)
    trace = ConvergenceTrace()
    prev_post = None
    while True:
        rows = np.concatenate([neg_idx, pos_idx[mask]])
        sub = ds.subset(rows)
        tree = cart.fit(sub, cart_cfg)
        leaf = tree.apply(sub.X)
        pred = tree.node_labels[leaf]
        pre = ConfusionMatrix.from_predictions(sub.y, pred, sub.w)
        if pre.FP == 0:
            break
        fp_leaves = np.unique(leaf[(sub.y == NEGATIVE) & (pred == POSITIVE)])
        n_neg = len(neg_idx)
        drop = np.isin(leaf[n_neg:], fp_leaves)
        kept_positions = np.flatnonzero(mask)
        mask[kept_positions[drop]] = False
        keep_rows = np.concatenate([np.ones(n_neg, dtype=bool), ~drop])
        post = ConfusionMatrix.from_predictions(sub.y[keep_rows], pred[keep_rows], sub.w[keep_rows])
        J_pre, J_post = pre.errors, post.errors
        trace.rounds.append(Round(
            index=len(trace) + 1, fn_pre=pre.FN, fp_pre=pre.FP, fn_post=post.FN, fp_post=post.FP,
            removed=int(drop.sum()), r=_ratio(J_post, J_pre),
            q=math.nan if prev_post is None else _ratio(J_pre, prev_post)))
        prev_post = J_post
    # positives the final model still misses count as removed
    kept_positions = np.flatnonzero(mask)
    mask[kept_positions[pred[len(neg_idx):] != POSITIVE]] = False
    if not (tree.node_labels[tree.leaves()] == POSITIVE).any():
        tree = DecisionTree.leaf(*tree.counts[0], tree.n_features, tree.feature_names)
    return RemovalResult(tree, mask, trace, cart.evaluate(tree, ds))
