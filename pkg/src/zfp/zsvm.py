"""Linear soft-margin SVM with separate slack costs for each class.

Minimises ``0.5*|a|^2 + c1*sum(eta over negatives) + c2*sum(eta over positives)``
where ``eta_i = max(0, 1 - y_i (a.x_i + b0))`` and each term is scaled by the
sample's multiplicity. With ``c1 == c2`` this is the ordinary soft-margin SVM;
``c1 > c2`` penalises misclassified normals more heavily. The solver is a
deterministic full-batch subgradient method with normalised steps and
best-iterate tracking, restarted from the best iterate with a shrinking step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .cart import ConfusionMatrix
from .dataset import NEGATIVE, POSITIVE, LabeledDataset


class ZSVMError(ValueError):
    pass


@dataclass(frozen=True)
class CostConfig:
    c1: float
    c2: float

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise ZSVMError("costs must be positive")


@dataclass(frozen=True)
class SolverConfig:
    iterations: int = 20000
    step: float = 1.0
    schedule: str = "invsqrt"  # step / sqrt(t+1), or "inv": step / (t+1)
    tol: float = 1e-4
    restarts: int = 8  # each restart begins at the best iterate with step / 4

    def step_size(self, t: int) -> float:
        if self.schedule == "invsqrt":
            return self.step / math.sqrt(t + 1)
        if self.schedule == "inv":
            return self.step / (t + 1)
        raise ZSVMError(f"unknown step schedule {self.schedule!r}")


@dataclass(frozen=True)
class LinearBoundary:
    a: np.ndarray
    b0: float

    def decision(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.a + self.b0

    def predict(self, X) -> np.ndarray:
        # points on the boundary go to the normal class
        return np.where(self.decision(X) > 0, POSITIVE, NEGATIVE).astype(np.int8)

    @property
    def gutter(self) -> float:
        n = float(np.linalg.norm(self.a))
        return math.inf if n == 0 else 2.0 / n


@dataclass(frozen=True)
class FitReport:
    boundary: LinearBoundary
    slacks: np.ndarray
    objective: float
    confusion: ConfusionMatrix
    gutter: float
    converged: bool
    iterations: int


def sample_costs(ds: LabeledDataset, costs: CostConfig) -> np.ndarray:
    return np.where(ds.y == NEGATIVE, costs.c1, costs.c2) * ds.w


def slacks(ds: LabeledDataset, a, b0) -> np.ndarray:
    return np.maximum(0.0, 1.0 - ds.y * (ds.X @ np.asarray(a, dtype=np.float64) + b0))


def objective(ds: LabeledDataset, costs: CostConfig, a, b0) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(0.5 * a @ a + sample_costs(ds, costs) @ slacks(ds, a, b0))


def classic_objective(ds: LabeledDataset, c: float, a, b0) -> float:
    """Single-cost soft-margin objective, for comparison with ``c1 == c2``."""
    a = np.asarray(a, dtype=np.float64)
    return float(0.5 * a @ a + c * np.sum(ds.w * slacks(ds, a, b0)))


def fit_zsvm(ds: LabeledDataset, costs: CostConfig,
             solver: SolverConfig | None = None) -> FitReport:
    solver = solver or SolverConfig()
    if len(ds) == 0 or ds.d < 1:
        raise ZSVMError("empty dataset")
    if ds.n_p == 0 or ds.n_n == 0:
        raise ZSVMError("both classes must be present")
    y = ds.y.astype(np.float64)
    Z = np.hstack([ds.X, np.ones((len(ds), 1))])
    C = sample_costs(ds, costs)
    Cy = C * y
    d = ds.d

    def J(z):
        return 0.5 * z[:d] @ z[:d] + C @ np.maximum(0.0, 1.0 - y * (Z @ z))

    best_z = np.zeros(d + 1)
    best_f = J(best_z)
    n = solver.iterations
    history = np.full(n, best_f)
    phases = max(1, min(solver.restarts, n))
    bounds = np.linspace(0, n, phases + 1).astype(int)
    scale = 1.0
    for lo, hi in zip(bounds, bounds[1:]):
        z = best_z.copy()
        for t in range(hi - lo):
            active = y * (Z @ z) < 1.0
            g = -(Cy * active) @ Z
            g[:d] += z[:d]
            gn = np.linalg.norm(g)
            if gn == 0.0:
                break
            z = z - scale * solver.step_size(t) * g / gn
            f = J(z)
            if f < best_f:
                best_f, best_z = f, z.copy()
            history[lo + t] = best_f
        history[hi - 1:] = best_f
        scale /= 4

    # stalled over the last quarter of the run
    converged = True
    if n >= 4:
        start = history[n - n // 4 - 1]
        converged = bool(start - best_f <= solver.tol * max(1.0, abs(best_f)))
    boundary = LinearBoundary(best_z[:d].copy(), float(best_z[d]))
    eta = slacks(ds, boundary.a, boundary.b0)
    cm = ConfusionMatrix.from_predictions(ds.y, boundary.predict(ds.X), ds.w)
    return FitReport(boundary, eta, float(best_f), cm, boundary.gutter, converged, n)


SWEEP_COLUMNS = ("c1", "c2", "TN", "TP", "FN", "FP", "gutter", "objective", "converged")


@dataclass(frozen=True)
class SweepRow:
    c1: float
    c2: float
    report: FitReport | None
    error: str = ""

    def values(self) -> tuple:
        if self.report is None:
            return (self.c1, self.c2, "", "", "", "", "", "", False)
        r = self.report
        return (self.c1, self.c2, *r.confusion.as_row(), r.gutter, r.objective, r.converged)


@dataclass
class SweepTable:
    rows: list[SweepRow] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = [",".join(SWEEP_COLUMNS)]
        lines += [",".join(str(v) for v in row.values()) for row in self.rows]
        return "\n".join(lines) + "\n"


def sweep_costs(ds: LabeledDataset, grid: Iterable[tuple[float, float]],
                solver: SolverConfig | None = None) -> SweepTable:
    grid = list(grid)
    if not grid:
        raise ZSVMError("empty cost grid")
    table = SweepTable()
    for c1, c2 in grid:
        try:
            table.rows.append(SweepRow(c1, c2, fit_zsvm(ds, CostConfig(c1, c2), solver)))
        except ZSVMError as exc:
            table.rows.append(SweepRow(c1, c2, None, str(exc)))
    return table


def parse_grid(text: str) -> list[tuple[float, float]]:
    """``"1:1,50:50,500:50"`` -> [(1, 1), (50, 50), (500, 50)]"""
    out = []
    for cell in text.split(","):
        c1, sep, c2 = cell.strip().partition(":")
        if not sep:
            raise ZSVMError(f"grid cell {cell!r} is not c1:c2")
        out.append((float(c1), float(c2)))
    return out
