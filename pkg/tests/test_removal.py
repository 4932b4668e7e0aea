import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zfp import cart, dataset, swarm
from zfp.cart import TrainConfig
from zfp.dataset import from_arrays
from zfp.removal import run_removal
from zfp.swarm import SwarmConfig

from helpers import one_d


def test_separable_stops_immediately():
    ds = one_d([(0, "-"), (1, "-"), (2, "+"), (3, "+")])
    res = run_removal(ds)
    assert len(res.trace) == 0 and res.positive_mask.all()
    assert res.final_confusion.FP == 0
    assert res.trace.to_csv() == "round,J_pre,J_post,removed,r_k,q_k\n"


def test_all_positives_conflicting():
    ds = from_arrays([[0.0], [1.0], [0.0], [1.0]], [-1, -1, 1, 1])
    res = run_removal(ds)
    assert res.retained == 0
    assert res.model.n_nodes == 1 and res.model.predict([0.0]) == -1
    assert res.final_confusion.FP == 0


def test_removal_trace_on_positive_heavy_leaf():
    # one negative under two positives: the leaf predicts + until they are removed
    ds = from_arrays([[0.0], [0.0], [0.0], [5.0], [9.0]], [-1, 1, 1, 1, -1])
    res = run_removal(ds)
    assert len(res.trace) == 1
    r = res.trace.rounds[0]
    assert (r.fp_pre, r.removed, r.r) == (1, 2, 1.0)
    assert math.isnan(r.q)
    assert res.positive_mask.tolist() == [False, False, True]
    assert res.final_confusion.FP == 0


def test_q_ratio_conventions():
    from zfp.removal import _ratio
    assert _ratio(0, 0) == 0.0
    assert _ratio(3, 0) == math.inf
    assert _ratio(1, 4) == 0.25


def test_crafted_twelve_sample_set_respects_oracle():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1], [2, 2], [0, 0],
                  [1, 1], [2, 0], [0, 2], [2, 1], [1, 2], [2, 2]], dtype=float)
    y = np.array([1, 1, 1, 1, 1, 1, -1, -1, -1, -1, -1, -1])
    ds = from_arrays(X, y, [1, 1, 1, 3, 1, 1, 1, 1, 1, 1, 1, 1])
    best, _ = swarm.min_ones_oracle(ds)
    res = run_removal(ds)
    assert res.retained <= best
    assert res.final_confusion.FP == 0


@pytest.mark.parametrize("name", sorted(dataset.PRESETS))
@pytest.mark.parametrize("depth", [None, 3])
def test_swarm_never_worse_on_presets(name, depth):
    ds = dataset.synth_constellation(dataset.preset(name), 0)
    cfg = TrainConfig(max_depth=depth)
    res = run_removal(ds, cfg)
    sw = swarm.run(ds, cfg, SwarmConfig(max_iterations=100))
    assert sw.best.fitness >= res.retained


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(2, 6), st.integers(0, 9999),
       st.sampled_from([None, 1, 2, 4]))
def test_removal_invariants(n_p, n_n, levels, seed, depth):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, levels, size=(n_p + n_n, 2)).astype(float)
    ds = from_arrays(X, [1] * n_p + [-1] * n_n, rng.integers(1, 3, size=n_p + n_n))
    res = run_removal(ds, TrainConfig(max_depth=depth))
    assert len(res.trace) <= n_p + 1
    assert cart.evaluate(res.model, ds).FP == 0
    assert sum(r.removed for r in res.trace.rounds) <= n_p
    for r in res.trace.rounds:
        assert r.removed >= 1
        assert r.r <= 1 and r.J_post <= r.J_pre
        assert min(r.J_pre, r.J_post) >= 0
    # retained positives are the ones the final model still rejects
    hits = res.model.predict(ds.X[ds.y == 1]) == 1
    assert (hits[res.positive_mask]).all()
