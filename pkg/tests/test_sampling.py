import math

import numpy as np
import pytest

from kinfrac import sampling


def test_substream_determinism():
    a = sampling.substream(42, 3).random(10)
    b = sampling.substream(42, 3).random(10)
    assert np.array_equal(a, b)
    c = sampling.substream(42, 4).random(10)
    assert not np.array_equal(a, c)


def test_chunk_layout_covers_samples():
    layout = sampling.chunk_layout(1300, chunk=512)
    assert layout == [(0, 512), (1, 512), (2, 276)]
    assert sum(size for _, size in layout) == 1300


def test_welford_matches_numpy(rng):
    x = rng.standard_normal(1000)
    w = sampling.Welford.from_values(x)
    assert w.mean == pytest.approx(float(np.mean(x)), rel=1e-12)
    assert w.m2 / (w.n - 1) == pytest.approx(float(np.var(x, ddof=1)), rel=1e-10)


def test_welford_merge_equals_pooled(rng):
    x = rng.standard_normal(700)
    w = sampling.Welford.from_values(x[:300]).merge(
        sampling.Welford.from_values(x[300:]))
    pooled = sampling.Welford.from_values(x)
    assert w.n == pooled.n
    assert w.mean == pytest.approx(pooled.mean, rel=1e-12)
    assert w.m2 == pytest.approx(pooled.m2, rel=1e-10)


def test_tree_reduce_bit_stable(rng):
    stats = [sampling.Welford.from_values(rng.standard_normal(100))
             for _ in range(9)]
    assert sampling.tree_reduce(stats) == sampling.tree_reduce(list(stats))


def test_estimate_stderr():
    w = sampling.Welford.from_values(np.array([1.0, 2.0, 3.0, 4.0]))
    est = sampling.Estimate.from_welford(w, seed=1)
    expected = math.sqrt(np.var([1, 2, 3, 4], ddof=1) / 4)
    assert est.std_error == pytest.approx(expected)
    assert est.n_samples == 4


def _chunk_values(ci, size, seed):
    gen = sampling.substream(seed, ci)
    return gen.standard_normal(size)


def test_map_chunks_worker_count_invariance():
    serial = sampling.map_chunks(_chunk_values, 2000, 7, workers=1)
    parallel = sampling.map_chunks(_chunk_values, 2000, 7, workers=2)
    assert all(np.array_equal(a, b) for a, b in zip(serial, parallel))


def test_mc_estimate_bit_identical_across_workers():
    e1 = sampling.mc_estimate(_chunk_values, 3000, 11, workers=1)
    e2 = sampling.mc_estimate(_chunk_values, 3000, 11, workers=2)
    assert e1 == e2
