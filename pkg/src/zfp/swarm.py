"""Zero-false-positive swarm classifier.

Each particle is a reduced training set: every negative sample (with a
multiplicity >= 1) plus a subset of the positives, encoded as a boolean mask.
Particles are grown while the core classifier separates them and pruned when
it does not. The best separable particle found so far is the output model; it
never misclassifies a training negative.
"""
from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from . import cart
from .cart import ConfusionMatrix, DecisionTree, TrainConfig
from .dataset import NEGATIVE, POSITIVE, LabeledDataset


class SwarmError(ValueError):
    pass


class Boundary(Protocol):
    def predict(self, X) -> np.ndarray: ...


# (X, y, w) -> fitted boundary
Core = Callable[[np.ndarray, np.ndarray, np.ndarray], Boundary]
# (positive mask, dataset) -> fitness
Fitness = Callable[[np.ndarray, LabeledDataset], float]


def retained_positives(mask: np.ndarray, ds: LabeledDataset | None = None) -> int:
    return int(np.count_nonzero(mask))


def cart_core(cfg: TrainConfig | None = None, feature_names=None) -> Core:
    def fit(X, y, w):
        return cart.fit_arrays(X, y, w, cfg, feature_names)
    return fit


@dataclass(frozen=True)
class SwarmConfig:
    population: int = 5
    k_growth: float = 1.5
    k_reset: float = 1.0
    max_iterations: int = 1000
    target_fn: int = 0
    checkpoints: tuple[int, ...] = (10, 50, 100, 500, 1000)
    seed: int = 0
    w_best: float = 4.0

    def __post_init__(self):
        if self.population < 1:
            raise ValueError("population must be >= 1")
        if not self.k_growth > 1:
            raise ValueError("k_growth must be > 1")
        if self.k_reset < 1:
            raise ValueError("k_reset must be >= 1")
        if self.max_iterations < 0 or self.target_fn < 0:
            raise ValueError("max_iterations and target_fn must be nonnegative")
        object.__setattr__(self, "checkpoints", tuple(sorted(set(int(c) for c in self.checkpoints))))


@dataclass
class Particle:
    positive_mask: np.ndarray
    negative_mult: np.ndarray
    k: float = 1.0
    last_boundary: Boundary | None = None

    @property
    def retained(self) -> int:
        return int(np.count_nonzero(self.positive_mask))


@dataclass(frozen=True)
class BestRecord:
    positive_mask: np.ndarray
    boundary: Boundary
    fitness: float
    full_confusion: ConfusionMatrix
    iteration: int = 0
    particle: int = -1


@dataclass(frozen=True)
class LogEntry:
    iteration: int
    particle: int
    separable: bool
    fitness: float
    particle_confusion: ConfusionMatrix
    full_confusion: ConfusionMatrix | None
    k: float
    retained_after: int

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "particle": self.particle,
            "separable": self.separable,
            "fitness": self.fitness,
            "particle_confusion": self.particle_confusion.to_dict(),
            "full_confusion": None if self.full_confusion is None else self.full_confusion.to_dict(),
            "k": self.k,
            "retained_after": self.retained_after,
        }


@dataclass
class IterationLog:
    entries: list[LogEntry] = field(default_factory=list)
    best_fitness: list[float] = field(default_factory=list)
    best_confusion: list[ConfusionMatrix] = field(default_factory=list)
    checkpoints: list[tuple[int, ConfusionMatrix]] = field(default_factory=list)
    iterations: int = 0

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")
            fh.write(json.dumps({"best_fitness": self.best_fitness,
                                 "iterations": self.iterations}) + "\n")

    def checkpoint_csv(self, comment: str | None = None) -> str:
        lines = [] if comment is None else [f"# {comment}"]
        lines.append("iteration,TN,TP,FN,FP")
        for it, cm in self.checkpoints:
            lines.append(",".join(str(v) for v in (it, *cm.as_row())))
        return "\n".join(lines) + "\n"


@dataclass
class _Problem:
    """Positive/negative split of the training set, shared read-only."""

    ds: LabeledDataset
    pos_idx: np.ndarray
    neg_idx: np.ndarray

    @classmethod
    def of(cls, ds: LabeledDataset) -> "_Problem":
        return cls(ds, np.flatnonzero(ds.y == POSITIVE), np.flatnonzero(ds.y == NEGATIVE))

    @property
    def X_pos(self):
        return self.ds.X[self.pos_idx]

    @property
    def w_pos(self):
        return self.ds.w[self.pos_idx]

    @property
    def neg_total(self):
        return int(self.ds.w[self.neg_idx].sum())


@dataclass
class _FitResult:
    boundary: Boundary
    separable: bool
    fp_neg: np.ndarray          # negatives predicted +, over all negatives
    fn_pos: np.ndarray          # retained positives predicted -, over all positives
    particle_confusion: ConfusionMatrix
    full_hits: np.ndarray | None  # all positives predicted +, only when separable


def _fit_particle(prob: _Problem, p: Particle, core: Core) -> _FitResult:
    ds = prob.ds
    kept = prob.pos_idx[p.positive_mask]
    rows = np.concatenate([prob.neg_idx, kept])
    w = np.concatenate([ds.w[prob.neg_idx] * p.negative_mult, ds.w[kept]])
    boundary = core(ds.X[rows], ds.y[rows], w)
    pred = np.asarray(boundary.predict(ds.X[rows]))
    n_neg = len(prob.neg_idx)
    fp_neg = pred[:n_neg] == POSITIVE
    fn_kept = pred[n_neg:] != POSITIVE
    fn_pos = np.zeros(len(prob.pos_idx), dtype=bool)
    fn_pos[np.flatnonzero(p.positive_mask)[fn_kept]] = True
    pc = ConfusionMatrix.from_predictions(ds.y[rows], pred, w)
    separable = not fp_neg.any() and not fn_kept.any()
    hits = None
    if separable:
        # negatives are all in the particle, so the full-set FP is already known to be 0
        hits = np.asarray(boundary.predict(prob.X_pos)) == POSITIVE if len(kept) < len(prob.pos_idx) \
            else np.ones(len(prob.pos_idx), dtype=bool)
    return _FitResult(boundary, separable, fp_neg, fn_pos, pc, hits)


def _full_confusion(prob: _Problem, hits: np.ndarray) -> ConfusionMatrix:
    w = prob.w_pos
    return ConfusionMatrix(TN=prob.neg_total, TP=int(w[hits].sum()), FN=int(w[~hits].sum()), FP=0)


def is_separable(boundary: Boundary, particle_set: LabeledDataset) -> bool:
    """True iff the boundary makes no weighted error on the set."""
    if len(particle_set) == 0:
        return True
    cm = ConfusionMatrix.from_predictions(particle_set.y, boundary.predict(particle_set.X),
                                          particle_set.w)
    return cm.FP == 0 and cm.FN == 0


def materialize(ds: LabeledDataset, p: Particle) -> LabeledDataset:
    prob = _Problem.of(ds)
    kept = prob.pos_idx[p.positive_mask]
    rows = np.concatenate([prob.neg_idx, kept])
    w = np.concatenate([ds.w[prob.neg_idx] * p.negative_mult, ds.w[kept]])
    return LabeledDataset(ds.X[rows], ds.y[rows], w, ds.feature_names, ds.feature_kinds,
                          ds.code_map, ds.source)


def select_additions(candidates, best_mask: np.ndarray, k: int, rng: np.random.Generator,
                     w_best: float = 4.0) -> np.ndarray:
    """Draw ``min(k, len(candidates))`` distinct candidates without replacement.

    Candidates retained by the Best particle weigh ``w_best``, others 1.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    candidates = np.asarray(candidates, dtype=np.int64)
    m = min(int(k), len(candidates))
    if m == 0:
        return candidates[:0]
    if m == len(candidates):
        return candidates.copy()
    weights = np.where(best_mask[candidates], float(w_best), 1.0)
    return rng.choice(candidates, size=m, replace=False, p=weights / weights.sum())


class Swarm:
    """Mutable swarm state; see :func:`run` for the one-call entry point."""

    def __init__(self, ds: LabeledDataset, cart_cfg: TrainConfig | None = None,
                 cfg: SwarmConfig | None = None, *, core: Core | None = None,
                 fitness: Fitness | None = None, workers: int = 1):
        if ds.n_n == 0:
            raise SwarmError("dataset has no negative samples")
        self.ds = ds
        self.cfg = cfg or SwarmConfig()
        self.core = core or cart_core(cart_cfg, ds.feature_names)
        self.fitness = fitness or retained_positives
        self.workers = max(1, int(workers))
        self.prob = _Problem.of(ds)
        self.log = IterationLog()
        self.iteration = 0
        seeds = np.random.SeedSequence(self.cfg.seed).spawn(self.cfg.population + 1)
        self._init_rng = np.random.default_rng(seeds[0])
        self.rngs = [np.random.default_rng(s) for s in seeds[1:]]
        self.particles: list[Particle] = []
        self.best = self._trivial_best()
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def _trivial_best(self) -> BestRecord:
        ds, prob = self.ds, self.prob
        tree = DecisionTree.leaf(prob.neg_total, 0, ds.d, ds.feature_names)
        hits = np.zeros(len(prob.pos_idx), dtype=bool)
        return BestRecord(hits, tree, 0, _full_confusion(prob, hits))

    def _fit_all(self) -> list[_FitResult]:
        if self._pool is None:
            return [_fit_particle(self.prob, p, self.core) for p in self.particles]
        return list(self._pool.map(lambda p: _fit_particle(self.prob, p, self.core),
                                   self.particles))

    def _offer(self, i: int, p: Particle, res: _FitResult) -> float:
        # the boundary separates its particle plus every positive it hits,
        # so that union is the set scored and snapshotted
        snapshot = p.positive_mask | res.full_hits
        fit = self.fitness(snapshot, self.ds)
        full = _full_confusion(self.prob, res.full_hits)
        b = self.best
        if fit > b.fitness or (fit == b.fitness and full.FN < b.full_confusion.FN):
            self.best = BestRecord(snapshot, res.boundary, fit, full, self.iteration, i)
        return fit

    def init_particles(self) -> None:
        prob, cfg = self.prob, self.cfg
        n_p = len(prob.pos_idx)
        masks = [np.zeros(n_p, dtype=bool) for _ in range(cfg.population)]
        if n_p:
            tree = self.core(self.ds.X, self.ds.y, self.ds.w)
            candidates = np.flatnonzero(np.asarray(tree.predict(prob.X_pos)) == POSITIVE)
            if len(candidates) == 0:
                candidates = np.arange(n_p)
            order = self._init_rng.permutation(candidates)
            for i, m in enumerate(masks):
                m[order[i % len(order)]] = True
        self.particles = [Particle(m, np.ones(len(prob.neg_idx), dtype=np.int64),
                                   cfg.k_reset) for m in masks]
        for i, (p, res) in enumerate(zip(self.particles, self._fit_all())):
            p.last_boundary = res.boundary
            fit = self.fitness(p.positive_mask, self.ds)
            full = None
            if res.separable:
                fit = self._offer(i, p, res)
                full = _full_confusion(prob, res.full_hits)
            self.log.entries.append(LogEntry(0, i, res.separable, fit, res.particle_confusion,
                                             full, p.k, p.retained))
        self._record()

    def _record(self):
        self.log.best_fitness.append(self.best.fitness)
        self.log.best_confusion.append(self.best.full_confusion)
        self.log.iterations = self.iteration

    def step(self) -> None:
        cfg = self.cfg
        self.iteration += 1
        results = self._fit_all()
        for i, (p, res) in enumerate(zip(self.particles, results)):
            p.last_boundary = res.boundary
            full = None
            if res.separable:
                fit = self._offer(i, p, res)
                full = _full_confusion(self.prob, res.full_hits)
                p.positive_mask |= res.full_hits
                budget = int(min(math.floor(p.k), len(p.positive_mask)))
                extra = select_additions(np.flatnonzero(~res.full_hits), self.best.positive_mask,
                                         max(budget, 1), self.rngs[i], cfg.w_best)
                p.positive_mask[extra] = True
                p.k *= cfg.k_growth
            else:
                fit = self.fitness(p.positive_mask, self.ds)
                if res.fn_pos.any():
                    p.positive_mask[res.fn_pos] = False
                else:
                    p.negative_mult[res.fp_neg] += 1
                p.k = cfg.k_reset
            self.log.entries.append(LogEntry(self.iteration, i, res.separable, fit,
                                             res.particle_confusion, full, p.k, p.retained))
        self._record()

    def done(self) -> bool:
        return self.best.full_confusion.FN <= self.cfg.target_fn

    def run(self, progress: Callable[[int, BestRecord], None] | None = None) -> BestRecord:
        cfg = self.cfg
        try:
            if not self.particles:
                self.init_particles()
            self._checkpoint(0)
            while self.iteration < cfg.max_iterations and not self.done():
                self.step()
                self._checkpoint(self.iteration)
                if progress is not None:
                    progress(self.iteration, self.best)
            # a stopped run keeps its model: later checkpoints report it unchanged
            for c in cfg.checkpoints:
                if self.iteration < c <= cfg.max_iterations:
                    self.log.checkpoints.append((c, self.best.full_confusion))
        finally:
            self.close()
        return self.best

    def _checkpoint(self, it: int):
        if it in self.cfg.checkpoints:
            self.log.checkpoints.append((it, self.best.full_confusion))


@dataclass
class RunResult:
    best: BestRecord
    log: IterationLog
    particles: list[Particle]


def init_particles(ds: LabeledDataset, cart_cfg: TrainConfig | None = None,
                   swarm_cfg: SwarmConfig | None = None, **kw) -> tuple[list[Particle], BestRecord]:
    sw = Swarm(ds, cart_cfg, swarm_cfg, **kw)
    sw.init_particles()
    sw.close()
    return sw.particles, sw.best


def run(ds: LabeledDataset, cart_cfg: TrainConfig | None = None,
        swarm_cfg: SwarmConfig | None = None, **kw) -> RunResult:
    progress = kw.pop("progress", None)
    sw = Swarm(ds, cart_cfg, swarm_cfg, **kw)
    best = sw.run(progress)
    return RunResult(best, sw.log, sw.particles)


def min_ones_oracle(ds: LabeledDataset, cart_cfg: TrainConfig | None = None,
                    cap: int = 16) -> tuple[int, np.ndarray]:
    """Largest set of positives that, together with all negatives, the tree
    separates. Exhaustive over positive subsets, largest first."""
    prob = _Problem.of(ds)
    n_p = len(prob.pos_idx)
    if n_p > cap:
        raise SwarmError(f"oracle enumerates 2^n_p subsets; n_p={n_p} exceeds cap {cap}")
    core = cart_core(cart_cfg, ds.feature_names)
    ones = np.ones(len(prob.neg_idx), dtype=np.int64)
    for size in range(n_p, -1, -1):
        for combo in itertools.combinations(range(n_p), size):
            mask = np.zeros(n_p, dtype=bool)
            mask[list(combo)] = True
            if _fit_particle(prob, Particle(mask, ones), core).separable:
                return size, mask
    raise AssertionError("the empty positive set is always separable")


def save_best(best: BestRecord, path, extra: dict | None = None) -> None:
    if not isinstance(best.boundary, DecisionTree):
        raise SwarmError("only tree boundaries can be serialized")
    data = {"tree": best.boundary.to_dict(), "fitness": best.fitness,
            "training_confusion": best.full_confusion.to_dict(),
            "positive_mask": np.flatnonzero(best.positive_mask).tolist()}
    data.update(extra or {})
    Path(path).write_text(json.dumps(data, sort_keys=True))
