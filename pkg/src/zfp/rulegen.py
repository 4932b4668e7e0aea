"""Compile a decision tree into default-ALLOW firewall rules.

Every positive leaf becomes one REJECT rule whose conjunction is the
root-to-leaf path, reduced to the tightest lower (``>=``) and upper (``<``)
bound per feature. Leaves partition feature space, so rules never overlap and
their order does not matter.

Machine format::

    # zfp-rules v1
    # digest <sha256 of source tree>
    # default ALLOW
    # features ["x0", "x1"]
    REJECT x0>=1.5&x1<2.0
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .cart import DecisionTree
from .dataset import NEGATIVE, POSITIVE

MAGIC = "# zfp-rules v1"
ALLOW, REJECT = "ALLOW", "REJECT"
_OPS = ("<", ">=")
_FORBIDDEN = re.compile(r"[<>=&\s]")


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class Predicate:
    feature: int
    name: str
    op: str
    threshold: float

    def __post_init__(self):
        if self.op not in _OPS:
            raise RuleError(f"unknown operator {self.op!r}")

    def holds(self, x) -> bool:
        v = x[self.feature]
        return v < self.threshold if self.op == "<" else v >= self.threshold


@dataclass(frozen=True)
class Rule:
    predicates: tuple[Predicate, ...]
    action: str = REJECT

    def matches(self, x) -> bool:
        return all(p.holds(x) for p in self.predicates)

    def bounds(self) -> dict[int, tuple[float, float]]:
        """Per-feature half-open interval ``[lo, hi)``."""
        out: dict[int, list[float]] = {}
        for p in self.predicates:
            lo, hi = out.setdefault(p.feature, [-math.inf, math.inf])
            if p.op == ">=":
                out[p.feature][0] = max(lo, p.threshold)
            else:
                out[p.feature][1] = min(hi, p.threshold)
        return {f: (lo, hi) for f, (lo, hi) in out.items()}


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]
    default: str = ALLOW
    digest: str = ""
    feature_names: tuple[str, ...] = field(default_factory=tuple)

    @property
    def action(self) -> str:
        return REJECT if self.default == ALLOW else ALLOW

    def __len__(self):
        return len(self.rules)


def _simplify(path, names) -> tuple[Predicate, ...]:
    lo: dict[int, float] = {}
    hi: dict[int, float] = {}
    order: list[int] = []
    for f, op, t in path:
        if f not in order:
            order.append(f)
        if op == ">=":
            lo[f] = max(lo.get(f, -math.inf), t)
        else:
            hi[f] = min(hi.get(f, math.inf), t)
    preds = []
    for f in order:
        if f in lo:
            preds.append(Predicate(f, names[f], ">=", lo[f]))
        if f in hi:
            preds.append(Predicate(f, names[f], "<", hi[f]))
    return tuple(preds)


def extract_rules(tree: DecisionTree, inverse: bool = False) -> RuleSet:
    """One rule per positive leaf (REJECT, default ALLOW); with ``inverse``,
    one ACCEPT rule per negative leaf over default DENY."""
    target = NEGATIVE if inverse else POSITIVE
    labels = tree.node_labels
    rules = tuple(Rule(_simplify(tree.path(int(leaf)), tree.feature_names),
                       "ACCEPT" if inverse else REJECT)
                  for leaf in tree.leaves() if labels[leaf] == target)
    return RuleSet(rules, "DENY" if inverse else ALLOW, tree.digest(), tree.feature_names)


def apply(ruleset: RuleSet, x) -> str:
    x = np.asarray(x, dtype=np.float64)
    if ruleset.feature_names and x.shape != (len(ruleset.feature_names),):
        raise RuleError(f"expected {len(ruleset.feature_names)} features, got shape {x.shape}")
    for rule in ruleset.rules:
        if rule.matches(x):
            return rule.action
    return ruleset.default


def apply_batch(ruleset: RuleSet, X) -> np.ndarray:
    """Vectorised :func:`apply`; True where a rule fires."""
    X = np.asarray(X, dtype=np.float64)
    if ruleset.feature_names and (X.ndim != 2 or X.shape[1] != len(ruleset.feature_names)):
        raise RuleError(f"expected {len(ruleset.feature_names)} features, got shape {X.shape}")
    fired = np.zeros(len(X), dtype=bool)
    for rule in ruleset.rules:
        m = np.ones(len(X), dtype=bool)
        for p in rule.predicates:
            col = X[:, p.feature]
            m &= col < p.threshold if p.op == "<" else col >= p.threshold
        fired |= m
    return fired


@dataclass(frozen=True)
class DisjointReport:
    disjoint: bool
    overlapping: tuple[tuple[int, int], ...] = ()


def check_disjoint(ruleset: RuleSet) -> DisjointReport:
    boxes = [r.bounds() for r in ruleset.rules]
    bad = []
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            a, b = boxes[i], boxes[j]
            separated = False
            for f in set(a) & set(b):
                lo = max(a[f][0], b[f][0])
                hi = min(a[f][1], b[f][1])
                if lo >= hi:
                    separated = True
                    break
            if not separated:
                bad.append((i, j))
    return DisjointReport(not bad, tuple(bad))


# -- rendering ----------------------------------------------------------------

def _fmt(t: float) -> str:
    return repr(float(t))


def _clause(p: Predicate) -> str:
    return f"{p.name}{p.op}{_fmt(p.threshold)}"


def render(ruleset: RuleSet, fmt: str = "paper-text") -> str:
    if fmt == "paper-text":
        lines = []
        for r in ruleset.rules:
            cond = " & ".join(_clause(p) for p in r.predicates) or "*"
            lines.append(f"IF {cond} then {r.action}")
        lines.append(f"# otherwise {ruleset.default}")
        return "\n".join(lines) + "\n"
    if fmt == "machine":
        for name in ruleset.feature_names:
            if _FORBIDDEN.search(name) or not name:
                raise RuleError(f"feature name {name!r} cannot appear in machine rules")
        lines = [MAGIC, f"# digest {ruleset.digest}", f"# default {ruleset.default}",
                 f"# features {json.dumps(list(ruleset.feature_names))}"]
        for r in ruleset.rules:
            cond = "&".join(_clause(p) for p in r.predicates) or "*"
            lines.append(f"{r.action} {cond}")
        return "\n".join(lines) + "\n"
    raise RuleError(f"unknown format {fmt!r}")


_CLAUSE = re.compile(r"^(?P<name>[^<>=&\s]+)(?P<op><|>=)(?P<thr>\S+)$")


def parse(text: str) -> RuleSet:
    """Inverse of ``render(..., 'machine')``."""
    lines = text.splitlines()
    if not lines or lines[0] != MAGIC:
        raise RuleError("missing rule file header")
    header = {}
    body = []
    for n, line in enumerate(lines[1:], start=2):
        if line.startswith("# "):
            key, _, value = line[2:].partition(" ")
            header[key] = value
        elif line.strip():
            body.append((n, line))
    try:
        names = tuple(json.loads(header["features"]))
        default = header["default"]
        digest = header["digest"]
    except (KeyError, json.JSONDecodeError) as exc:
        raise RuleError(f"bad rule file header: {exc}") from exc
    index = {name: i for i, name in enumerate(names)}
    rules = []
    for n, line in body:
        action, _, cond = line.partition(" ")
        if action not in (REJECT, "ACCEPT"):
            raise RuleError(f"line {n}: unknown action {action!r}")
        preds = []
        if cond != "*":
            for clause in cond.split("&"):
                m = _CLAUSE.match(clause)
                if m is None or m["name"] not in index:
                    raise RuleError(f"line {n}: bad clause {clause!r}")
                try:
                    thr = float(m["thr"])
                except ValueError:
                    raise RuleError(f"line {n}: bad threshold {m['thr']!r}") from None
                preds.append(Predicate(index[m["name"]], m["name"], m["op"], thr))
        rules.append(Rule(tuple(preds), action))
    return RuleSet(tuple(rules), default, digest, names)
