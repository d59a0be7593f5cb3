"""Reproducible parallel Monte Carlo plumbing.

Sample i belongs to chunk i // CHUNK under a fixed chunking policy, and every
chunk draws from its own counter-based (Philox) substream keyed by
(seed, chunk index).  The sample multiset therefore does not depend on how
chunks are scheduled across workers, and chunk statistics are merged by a
deterministic pairwise tree in chunk order, so means are bit-stable for a
fixed chunking policy regardless of the worker count.
"""

from __future__ import annotations

import dataclasses
import math
import multiprocessing

import numpy as np

CHUNK = 512


def substream(seed, chunk_index):
    """Independent generator for one chunk, keyed by (seed, chunk_index)."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(chunk_index)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def chunk_layout(n_samples, chunk=CHUNK):
    """Fixed (chunk_index, chunk_size) partition of a sample range."""
    out = []
    full, rem = divmod(n_samples, chunk)
    for ci in range(full):
        out.append((ci, chunk))
    if rem:
        out.append((full, rem))
    return out


@dataclasses.dataclass(frozen=True)
class Welford:
    """Mergeable running (count, mean, M2) statistics for one chunk."""

    n: int
    mean: float
    m2: float

    @classmethod
    def from_values(cls, values):
        values = np.asarray(values, dtype=float)
        n = values.size
        if n == 0:
            return cls(0, 0.0, 0.0)
        mean = float(values.mean())
        m2 = float(np.sum((values - mean) ** 2))
        return cls(n, mean, m2)

    def merge(self, other):
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return Welford(n, mean, m2)


def tree_reduce(stats):
    """Pairwise reduction in chunk order; deterministic for a fixed layout."""
    stats = list(stats)
    if not stats:
        return Welford(0, 0.0, 0.0)
    while len(stats) > 1:
        merged = []
        for i in range(0, len(stats) - 1, 2):
            merged.append(stats[i].merge(stats[i + 1]))
        if len(stats) % 2:
            merged.append(stats[-1])
        stats = merged
    return stats[0]


@dataclasses.dataclass(frozen=True)
class Estimate:
    """Monte Carlo estimate with provenance."""

    mean: float
    std_error: float
    n_samples: int
    seed: int

    @classmethod
    def from_welford(cls, w, seed):
        if w.n >= 2:
            se = math.sqrt(w.m2 / (w.n - 1)) / math.sqrt(w.n)
        else:
            se = 0.0 if w.n else float("nan")
        return cls(w.mean, se, w.n, seed)


def map_chunks(worker, n_samples, seed, workers=1, chunk=CHUNK):
    """Run ``worker(chunk_index, chunk_size, seed)`` over the fixed layout.

    Returns the per-chunk results ordered by chunk index.  ``workers > 1``
    fans chunks out over a process pool; results are re-assembled in chunk
    order so the output is independent of scheduling.
    """
    layout = chunk_layout(n_samples, chunk)
    args = [(ci, size, seed) for ci, size in layout]
    if workers <= 1 or len(args) <= 1:
        return [worker(*a) for a in args]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(processes=workers) as pool:
        return pool.starmap(worker, args, chunksize=max(1, len(args) // (4 * workers)))


def mc_estimate(worker, n_samples, seed, workers=1, chunk=CHUNK):
    """Aggregate a value-returning chunk worker into an Estimate.

    ``worker`` must return a 1-D array of per-sample values for its chunk.
    """
    def stats_worker(ci, size, sd):
        return Welford.from_values(worker(ci, size, sd))

    stats = map_chunks(stats_worker, n_samples, seed, workers=1, chunk=chunk) \
        if workers <= 1 else None
    if stats is None:
        # the picklable path: the caller passes a top-level worker
        values = map_chunks(worker, n_samples, seed, workers=workers, chunk=chunk)
        stats = [Welford.from_values(v) for v in values]
    return Estimate.from_welford(tree_reduce(stats), seed)
