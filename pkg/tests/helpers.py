"""Dataset builders shared by the test modules."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from zfp import dataset
from zfp.dataset import KDD_FEATURES, from_arrays


def one_d(points):
    """[(x, label), ...] -> 1-feature dataset"""
    X = np.array([[float(x)] for x, _ in points])
    y = np.array([1 if lab in ("+", 1) else -1 for _, lab in points])
    return from_arrays(X, y)


def write_csv(path, ds, label="label", quantize=None):
    X = ds.X if quantize is None else np.round(ds.X, quantize)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([*ds.feature_names, label])
        for x, y in zip(X, ds.y):
            wr.writerow([*(repr(float(v)) for v in x), "attack" if y > 0 else "normal"])
    return Path(path)


# -- tiny sets for the exhaustive oracle ----------------------------------------

def _grid_set(rng, n_p, n_n, levels, d=2):
    X = rng.integers(0, levels, size=(n_p + n_n, d)).astype(float)
    y = np.array([1] * n_p + [-1] * n_n)
    return from_arrays(X, y)


def easy_sets():
    """Ten small sets: separable, or with isolated exact conflicts only."""
    out = []
    for s in range(10):
        rng = np.random.default_rng(100 + s)
        n_p = int(rng.integers(4, 13))
        n_n = int(rng.integers(4, 15))
        if s % 2 == 0:
            # well spread points, some with one positive copied onto a negative
            ds = _grid_set(rng, n_p, n_n, levels=40)
            if s % 4 == 0:
                X = ds.X.copy()
                X[0] = X[n_p]
                ds = from_arrays(X, ds.y)
            out.append(ds)
        else:
            spec = dataset.random_constellation(s, d=2, overlap=0.6, n_pos=n_p, n_neg=n_n)
            out.append(dataset.synth_constellation(spec, s))
    return out


def hard_sets():
    """Ten small sets with heavy overlap, conflicts and weights."""
    out = []
    for s in range(10):
        rng = np.random.default_rng(200 + s)
        n_p = int(rng.integers(6, 13))
        n_n = int(rng.integers(6, 15))
        ds = _grid_set(rng, n_p, n_n, levels=3 + s % 3, d=1 + s % 2)
        if s % 3 == 0:
            w = rng.integers(1, 4, size=len(ds))
            ds = from_arrays(ds.X, ds.y, w)
        out.append(ds)
    return out


def conflict_set():
    """Three positives, two negatives; one positive duplicates a negative."""
    return from_arrays(np.array([[0.0], [0.0], [3.0], [5.0], [7.0]]),
                       np.array([-1, 1, 1, 1, -1]))


# -- KDD-format generator ---------------------------------------------------------

_SERVICES = ["http", "smtp", "ftp", "ftp_data", "domain_u", "private", "ecr_i",
             "eco_i", "telnet", "finger", "auth", "pop_3", "other", "urp_i"]
_FLAGS = ["SF", "S0", "REJ", "RSTR", "RSTO", "SH", "S1"]


def kdd_like_rows(n: int, seed: int, attack_share: float = 0.6):
    """Rows in the 42-column KDD layout with four attack families and a
    normal population that overlaps some of them."""
    rng = np.random.default_rng(seed)
    rows = []
    kinds = rng.choice(["normal", "smurf", "neptune", "probe", "r2l"], size=n,
                       p=[1 - attack_share, attack_share * 0.5, attack_share * 0.3,
                          attack_share * 0.12, attack_share * 0.08])
    for kind in kinds:
        f = dict.fromkeys(KDD_FEATURES, 0.0)
        if kind == "normal":
            f["protocol_type"] = rng.choice(["tcp", "udp", "icmp"], p=[0.8, 0.17, 0.03])
            f["service"] = rng.choice(["http", "smtp", "ftp_data", "domain_u", "other", "ecr_i"])
            f["flag"] = rng.choice(["SF", "SF", "SF", "REJ", "S1"])
            f["src_bytes"] = float(int(rng.lognormal(5.5, 1.2)))
            f["dst_bytes"] = float(int(rng.lognormal(7, 1.5)))
            f["count"] = float(rng.integers(1, 20))
            f["srv_count"] = float(rng.integers(1, 20))
            f["same_srv_rate"] = round(float(rng.uniform(0.7, 1.0)), 2)
            f["dst_host_count"] = float(rng.integers(1, 256))
            f["dst_host_srv_count"] = float(rng.integers(1, 256))
            f["logged_in"] = float(rng.random() < 0.7)
        elif kind == "smurf":
            f["protocol_type"] = "icmp"
            f["service"] = "ecr_i"
            f["flag"] = "SF"
            f["src_bytes"] = float(rng.choice([520, 1032]))
            f["count"] = float(rng.integers(400, 512))
            f["srv_count"] = f["count"]
            f["same_srv_rate"] = 1.0
            f["dst_host_count"] = 255.0
            f["dst_host_srv_count"] = 255.0
        elif kind == "neptune":
            f["protocol_type"] = "tcp"
            f["service"] = rng.choice(["private", "other", "telnet", "finger"])
            f["flag"] = rng.choice(["S0", "S0", "REJ"])
            f["count"] = float(rng.integers(100, 300))
            f["srv_count"] = float(rng.integers(1, 30))
            f["serror_rate"] = 1.0 if f["flag"] == "S0" else 0.0
            f["rerror_rate"] = 1.0 - f["serror_rate"]
            f["same_srv_rate"] = round(float(rng.uniform(0.0, 0.1)), 2)
            f["dst_host_count"] = 255.0
            f["dst_host_srv_count"] = float(rng.integers(1, 30))
        elif kind == "probe":
            f["protocol_type"] = rng.choice(["tcp", "icmp"])
            f["service"] = rng.choice(_SERVICES)
            f["flag"] = rng.choice(["SF", "REJ", "RSTO", "SH"])
            f["src_bytes"] = float(rng.integers(0, 20))
            f["count"] = float(rng.integers(1, 10))
            f["srv_count"] = float(rng.integers(1, 10))
            f["same_srv_rate"] = round(float(rng.uniform(0.0, 1.0)), 2)
            f["dst_host_count"] = float(rng.integers(1, 256))
            f["dst_host_srv_count"] = float(rng.integers(1, 20))
        else:
            # remote-to-local traffic looks like normal sessions
            f["protocol_type"] = "tcp"
            f["service"] = rng.choice(["ftp", "ftp_data", "http", "pop_3"])
            f["flag"] = "SF"
            f["src_bytes"] = float(int(rng.lognormal(6, 1.5)))
            f["dst_bytes"] = float(int(rng.lognormal(6, 1.5)))
            f["count"] = float(rng.integers(1, 5))
            f["srv_count"] = float(rng.integers(1, 5))
            f["same_srv_rate"] = 1.0
            f["dst_host_count"] = float(rng.integers(1, 256))
            f["dst_host_srv_count"] = float(rng.integers(1, 100))
            f["logged_in"] = 1.0
            f["num_failed_logins"] = float(rng.random() < 0.3)
        label = "normal." if kind == "normal" else f"{kind}."
        rows.append([_fmt(f[name]) for name in KDD_FEATURES] + [label])
    # some remote-to-local rows are indistinguishable from a normal session
    normal = [i for i, k in enumerate(kinds) if k == "normal"]
    for i in np.flatnonzero(kinds == "r2l"):
        if normal and rng.random() < 0.25:
            rows[i] = rows[normal[int(rng.integers(len(normal)))]][:-1] + [rows[i][-1]]
    # exact duplicates are common in real captures
    dup = rng.choice(n, size=n // 20, replace=False)
    rows.extend(rows[i] for i in dup)
    return rows


def _fmt(v):
    if isinstance(v, str):
        return v
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def write_kdd(path, rows):
    with open(path, "w") as fh:
        for r in rows:
            fh.write(",".join(r) + "\n")
    return Path(path)
