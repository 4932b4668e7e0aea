"""Labeled datasets: loading, categorical encoding, stratified subsampling and
synthetic Gaussian constellations.

Labels are +1 (attack) and -1 (normal). Every row carries an integer
multiplicity weight; a weight of ``w`` is equivalent to the row being repeated
``w`` times.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

POSITIVE = 1
NEGATIVE = -1

KDD_FEATURES = (
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes",
    "land", "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in",
    "num_compromised", "root_shell", "su_attempted", "num_root",
    "num_file_creations", "num_shells", "num_access_files", "num_outbound_cmds",
    "is_host_login", "is_guest_login", "count", "srv_count", "serror_rate",
    "srv_serror_rate", "rerror_rate", "srv_rerror_rate", "same_srv_rate",
    "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
    "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate", "dst_host_srv_serror_rate", "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
)
KDD_CATEGORICAL = ("protocol_type", "service", "flag")

POWERGRID_LABEL = "marker"
POWERGRID_POSITIVE = ("Attack",)
POWERGRID_DROP = ("date", "time", "datetime", "timestamp")


class DatasetError(ValueError):
    """Raised for malformed or inconsistent dataset input."""


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: int
    weight: int = 1


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix ``X`` (N x d), labels ``y`` in {+1, -1}, weights ``w`` >= 1.

    ``code_map`` maps each ordinal-encoded column name to its
    ``{raw value: code}`` table, in first-occurrence order.
    """

    X: np.ndarray
    y: np.ndarray
    w: np.ndarray
    feature_names: tuple[str, ...]
    feature_kinds: tuple[str, ...] = ()
    code_map: dict = field(default_factory=dict)
    source: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int8).reshape(-1)
        w = np.asarray(self.w, dtype=np.int64).reshape(-1)
        d = len(self.feature_names)
        if X.size == 0:
            X = X.reshape(0, d)
        if X.ndim != 2 or X.shape[1] != d:
            raise DatasetError(f"feature matrix shape {X.shape} does not match {d} feature names")
        if not (len(X) == len(y) == len(w)):
            raise DatasetError("X, y and w lengths differ")
        if len(y) and not np.isin(y, (POSITIVE, NEGATIVE)).all():
            raise DatasetError("labels must be +1 or -1")
        if len(w) and w.min() < 1:
            raise DatasetError("sample weights must be >= 1")
        kinds = tuple(self.feature_kinds) or ("numeric",) * d
        if len(kinds) != d:
            raise DatasetError("feature_kinds length differs from feature count")
        for a in (X, y, w):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "feature_kinds", kinds)

    def __len__(self):
        return len(self.y)

    @property
    def d(self) -> int:
        return len(self.feature_names)

    @property
    def n_p(self) -> int:
        return int(np.count_nonzero(self.y == POSITIVE))

    @property
    def n_n(self) -> int:
        return int(np.count_nonzero(self.y == NEGATIVE))

    @property
    def N(self) -> int:
        return len(self.y)

    @property
    def samples(self) -> list[Sample]:
        return [Sample(self.X[i], int(self.y[i]), int(self.w[i])) for i in range(len(self))]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.X[idx], self.y[idx], self.w[idx], self.feature_names,
                              self.feature_kinds, self.code_map, self.source)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(list(self.feature_names)).encode())
        for a in (self.X, self.y, self.w):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def from_arrays(X, y, w=None, feature_names=None) -> LabeledDataset:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(X.shape[1])]
    if w is None:
        w = np.ones(len(X), dtype=np.int64)
    return LabeledDataset(X, y, w, tuple(feature_names))


# -- encoding -----------------------------------------------------------------

def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _encode_frame(df: pd.DataFrame, categorical: Iterable[str], code_map: dict | None):
    """Turn a string-typed frame into a float matrix.

    Columns in ``categorical`` (or with no numeric cell at all) are ordinal
    coded by first occurrence. A column mixing numbers and text is an error.
    """
    categorical = set(categorical)
    code_map = {k: dict(v) for k, v in (code_map or {}).items()}
    out = np.empty((len(df), df.shape[1]), dtype=np.float64)
    kinds = []
    for j, col in enumerate(df.columns):
        values = df[col].to_numpy(dtype=object)
        if col in code_map or col in categorical or (
                len(values) and not any(_is_number(v) for v in pd.unique(values))):
            table = code_map.setdefault(col, {})
            codes = np.empty(len(values), dtype=np.float64)
            for i, v in enumerate(values):
                if v not in table:
                    table[v] = len(table)
                codes[i] = table[v]
            out[:, j] = codes
            kinds.append("categorical")
            continue
        # float() rounds correctly; pandas' fast parser can be off by an ulp
        try:
            out[:, j] = values.astype(np.float64)
        except ValueError:
            out[:, j] = [float(v) if _is_number(v) else np.nan for v in values]
        bad = np.flatnonzero(np.isnan(out[:, j]))
        if len(bad):
            r = int(bad[0])
            raise DatasetError(f"unparseable cell at row {r + 1}, column {col!r}: {values[r]!r}")
        kinds.append("numeric")
    return out, tuple(kinds), code_map


def _labels(raw: np.ndarray, positive: set[str], negative: set[str] | None) -> np.ndarray:
    y = np.full(len(raw), NEGATIVE, dtype=np.int8)
    for i, v in enumerate(raw):
        if v in positive:
            y[i] = POSITIVE
        elif negative is not None and v not in negative:
            raise DatasetError(f"unknown label value {v!r} at row {i + 1}")
    return y


def load_csv(path, label_column: str, positive_labels: Iterable[str],
             drop_columns: Sequence[str] = (), *, negative_labels: Iterable[str] | None = None,
             categorical: Iterable[str] = (), code_map: dict | None = None,
             weight_column: str | None = None) -> LabeledDataset:
    """Load a headed CSV file.

    Labels in ``positive_labels`` map to +1, everything else to -1 unless
    ``negative_labels`` is given, in which case other values are rejected.
    Passing a previously persisted ``code_map`` reproduces its encoding.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"no such file: {path}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    df.columns = [c.strip() for c in df.columns]
    if label_column not in df.columns:
        raise DatasetError(f"label column {label_column!r} not found in {path}")
    missing = [c for c in drop_columns if c not in df.columns]
    if missing:
        raise DatasetError(f"drop columns not found: {missing}")
    raw_labels = df[label_column].str.strip().to_numpy(dtype=object)
    w = None
    if weight_column is not None:
        w = pd.to_numeric(df[weight_column]).to_numpy(dtype=np.int64)
        drop_columns = list(drop_columns) + [weight_column]
    features = df.drop(columns=[label_column, *drop_columns])
    X, kinds, cmap = _encode_frame(features, categorical, code_map)
    y = _labels(raw_labels, set(positive_labels),
                None if negative_labels is None else set(negative_labels))
    if w is None:
        w = np.ones(len(y), dtype=np.int64)
    return LabeledDataset(X, y, w, tuple(features.columns), kinds, cmap, str(path))


def load_powergrid(path, *, code_map: dict | None = None) -> LabeledDataset:
    """Power-system attack CSV: ``marker`` label, ``Attack`` rows positive,
    any date/time columns dropped."""
    header = pd.read_csv(path, nrows=0).columns
    drop = [c for c in header if c.strip().lower() in POWERGRID_DROP]
    return load_csv(path, POWERGRID_LABEL, POWERGRID_POSITIVE, drop, code_map=code_map)


def load_kdd(path, *, code_map: dict | None = None) -> LabeledDataset:
    """KDD Cup '99 comma format: 41 features then a label such as ``normal.``.

    Every label other than ``normal`` becomes +1.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"no such file: {path}")
    df = pd.read_csv(path, header=None, dtype=str, keep_default_na=False)
    if df.shape[1] != len(KDD_FEATURES) + 1:
        raise DatasetError(f"expected {len(KDD_FEATURES) + 1} columns, got {df.shape[1]}")
    df.columns = [*KDD_FEATURES, "label"]
    raw = df["label"].str.strip().str.rstrip(".").to_numpy(dtype=object)
    y = np.where(raw == "normal", NEGATIVE, POSITIVE).astype(np.int8)
    features = df.drop(columns=["label"])
    for col in KDD_CATEGORICAL:
        if len(features) and _is_number(features[col].iloc[0]):
            raise DatasetError(f"unknown schema: column {col!r} is not symbolic")
    X, kinds, cmap = _encode_frame(features, KDD_CATEGORICAL, code_map)
    return LabeledDataset(X, y, np.ones(len(y), dtype=np.int64), KDD_FEATURES, kinds, cmap,
                          str(path))


def save_code_map(ds: LabeledDataset, path) -> None:
    Path(path).write_text(json.dumps(ds.code_map, indent=2, sort_keys=True))


def read_code_map(path) -> dict:
    return json.loads(Path(path).read_text())


# -- sampling -----------------------------------------------------------------

def stratified_indices(y: np.ndarray, n: int, seed: int) -> np.ndarray:
    N = len(y)
    if not 0 < n <= N:
        raise DatasetError(f"subsample size {n} outside (0, {N}]")
    rng = np.random.default_rng(seed)
    pos = np.flatnonzero(y == POSITIVE)
    neg = np.flatnonzero(y == NEGATIVE)
    n_pos = min(len(pos), int(round(n * len(pos) / N)))
    n_neg = n - n_pos
    if n_neg > len(neg):
        n_neg = len(neg)
        n_pos = n - n_neg
    picked = np.concatenate([rng.choice(pos, n_pos, replace=False),
                             rng.choice(neg, n_neg, replace=False)])
    return np.sort(picked)


def subsample(ds: LabeledDataset, n: int, seed: int) -> LabeledDataset:
    """Class-stratified sample of ``n`` rows, in original row order."""
    return ds.subset(stratified_indices(ds.y, n, seed))


# -- synthetic constellations -------------------------------------------------

@dataclass(frozen=True)
class Component:
    mean: tuple
    cov: tuple  # d x d, nested tuples
    count: int


@dataclass(frozen=True)
class ConstellationSpec:
    positive: tuple[Component, ...]
    negative: tuple[Component, ...]
    positive_outliers: tuple[tuple, ...] = ()
    negative_outliers: tuple[tuple, ...] = ()

    @property
    def d(self) -> int:
        comp = (self.positive or self.negative)[0]
        return len(comp.mean)


def _draw(rng, comp: Component, d: int) -> np.ndarray:
    mean = np.asarray(comp.mean, dtype=np.float64)
    cov = np.asarray(comp.cov, dtype=np.float64)
    if mean.shape != (d,) or cov.shape != (d, d):
        raise DatasetError("component dimension mismatch")
    if comp.count <= 0:
        raise DatasetError("component counts must be positive")
    if not np.allclose(cov, cov.T):
        raise DatasetError("covariance must be symmetric")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise DatasetError("degenerate covariance (not positive definite)") from None
    return mean + rng.standard_normal((comp.count, d)) @ chol.T


def synth_constellation(spec: ConstellationSpec, seed: int) -> LabeledDataset:
    d = spec.d
    rng = np.random.default_rng(seed)
    parts, labels = [], []
    for comps, outliers, label in ((spec.negative, spec.negative_outliers, NEGATIVE),
                                   (spec.positive, spec.positive_outliers, POSITIVE)):
        for comp in comps:
            pts = _draw(rng, comp, d)
            parts.append(pts)
            labels.append(np.full(len(pts), label))
        if outliers:
            pts = np.asarray(outliers, dtype=np.float64).reshape(-1, d)
            parts.append(pts)
            labels.append(np.full(len(pts), label))
    X = np.vstack(parts) if parts else np.empty((0, d))
    y = np.concatenate(labels) if labels else np.empty(0)
    return from_arrays(X, y)


def _iso(d: int, var: float) -> tuple:
    return tuple(tuple(var if i == j else 0.0 for j in range(d)) for i in range(d))


PRESETS: dict[str, ConstellationSpec] = {
    # Two overlapping clouds with a normal sample deep inside the attack cloud.
    "fig2-like": ConstellationSpec(
        positive=(Component((2.5, 2.5), ((0.8, 0.2), (0.2, 0.8)), 60),),
        negative=(Component((0.0, 0.0), ((0.8, -0.1), (-0.1, 0.8)), 60),),
        negative_outliers=((2.5, 2.5),),
    ),
    "separable": ConstellationSpec(
        positive=(Component((4.0, 4.0), _iso(2, 0.3), 40),),
        negative=(Component((0.0, 0.0), _iso(2, 0.3), 40),),
    ),
    "overlap": ConstellationSpec(
        positive=(Component((1.2, 1.2), _iso(2, 1.0), 50), Component((-2.0, 2.5), _iso(2, 0.4), 20)),
        negative=(Component((0.0, 0.0), _iso(2, 1.0), 70),),
    ),
    "imbalanced": ConstellationSpec(
        positive=(Component((1.5, 0.5), _iso(2, 1.0), 150),),
        negative=(Component((0.0, 0.0), _iso(2, 0.5), 15),),
    ),
}


def preset(name: str) -> ConstellationSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise DatasetError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def random_constellation(seed: int, d: int = 2, overlap: float = 1.0,
                         n_pos: int = 60, n_neg: int = 60) -> ConstellationSpec:
    """Random Gaussian two-class spec; ``overlap`` near 0 separates the
    classes, larger values push their means together."""
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    gap = 6.0 / (1.0 + 3.0 * overlap)
    comps = []
    for sign, count in ((1, n_pos), (-1, n_neg)):
        k = int(rng.integers(1, 3))
        sizes = [count // k + (1 if i < count % k else 0) for i in range(k)]
        parts = []
        for size in sizes:
            mean = sign * direction * gap / 2 + 0.5 * rng.standard_normal(d)
            a = rng.standard_normal((d, d)) * 0.3
            cov = a @ a.T + np.eye(d) * (0.3 + 0.4 * rng.random())
            parts.append(Component(tuple(mean), tuple(map(tuple, cov)), size))
        comps.append(tuple(parts))
    return ConstellationSpec(positive=comps[0], negative=comps[1])


def manifest_entry(ds: LabeledDataset) -> dict:
    return {
        "source": ds.source,
        "digest": ds.digest(),
        "N": ds.N,
        "n_p": ds.n_p,
        "n_n": ds.n_n,
        "d": ds.d,
    }


def total_weight(ds: LabeledDataset, label: int) -> int:
    return int(ds.w[ds.y == label].sum())


def describe(ds: LabeledDataset) -> str:
    return f"{ds.N} samples, {ds.d} features, {ds.n_p} positive / {ds.n_n} negative"

