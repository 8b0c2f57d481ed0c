"""Negative sampling: epsilon-truncated for KG triples, uniform for class pairs and memberships."""

from __future__ import annotations

import math

import numpy as np

from .kg import KnowledgeGraph

MAX_RETRIES = 10


def truncated_pool_size(n: int, eps_trunc: float) -> int:
    return max(1, min(n, math.ceil((1.0 - eps_trunc) * n - 1e-9)))


def nearest_neighbors(emb: np.ndarray, size: int, chunk: int = 2048) -> np.ndarray:
    """Indices of the ``size`` most cosine-similar rows for every row (itself included)."""
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    u = emb / np.where(norms > 0, norms, 1.0)
    out = np.empty((len(emb), size), dtype=np.int64)
    for start in range(0, len(emb), chunk):
        sims = u[start:start + chunk] @ u.T
        if size < len(emb):
            out[start:start + chunk] = np.argpartition(-sims, size - 1, axis=1)[:, :size]
        else:
            out[start:start + chunk] = np.argsort(-sims, axis=1, kind="stable")
    return out


class TruncatedSampler:
    """Corrupt the head or tail of a triple with one of the replaced entity's nearest neighbours.

    The pool is the ``ceil((1 - eps_trunc) * N)`` most cosine-similar entities
    of the same KG. With ``eps_trunc == 0`` the pool is the whole entity set.
    """

    def __init__(self, kg: KnowledgeGraph, eps_trunc: float, rng: np.random.Generator, max_retries: int = MAX_RETRIES):
        self.kg = kg
        self.rng = rng
        self.max_retries = max_retries
        self.pool_size = truncated_pool_size(kg.n_entities, eps_trunc)
        self.pools: np.ndarray | None = None

    @property
    def uniform(self) -> bool:
        return self.pool_size >= self.kg.n_entities

    def refresh(self, emb: np.ndarray) -> None:
        if not self.uniform:
            self.pools = nearest_neighbors(emb, self.pool_size)

    def _draw(self, replaced: np.ndarray) -> np.ndarray:
        if self.uniform:
            return self.rng.integers(self.kg.n_entities, size=replaced.shape)
        if self.pools is None:
            raise RuntimeError("TruncatedSampler.refresh must run before sampling")
        return self.pools[replaced, self.rng.integers(self.pool_size, size=replaced.shape)]

    def sample(self, pos: np.ndarray, k: int) -> np.ndarray:
        pos = np.asarray(pos, dtype=np.int64).reshape(-1, 3)
        neg = np.repeat(pos[:, None, :], k, axis=1)
        col = np.where(self.rng.random(neg.shape[:2]) < 0.5, 0, 2)
        todo = np.ones(neg.shape[:2], dtype=bool)
        for _ in range(self.max_retries + 1):
            rows, cols = np.nonzero(todo)
            if len(rows) == 0:
                break
            which = col[rows, cols]
            replaced = pos[rows, which]
            neg[rows, cols, which] = self._draw(replaced)
            todo[:] = False
            todo[rows, cols] = self.kg.contains(neg[rows, cols])
        return neg


class PairSet:
    """Sorted int64 keys of (first, second) pairs for vectorised membership tests."""

    def __init__(self, pairs: np.ndarray, n_second: int):
        self.n_second = max(int(n_second), 1)
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        self.keys = np.unique(pairs[:, 0] * self.n_second + pairs[:, 1])

    def contains(self, pairs: np.ndarray) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.int64)
        keys = pairs[..., 0] * self.n_second + pairs[..., 1]
        if len(self.keys) == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.minimum(np.searchsorted(self.keys, keys), len(self.keys) - 1)
        return self.keys[pos] == keys


def sample_neg_uniform(
    pos: np.ndarray,
    n_candidates: int,
    positives: PairSet,
    rng: np.random.Generator,
    k: int = 1,
    replace: str = "either",
    max_retries: int = MAX_RETRIES,
) -> np.ndarray:
    """Uniform corruption of (first, second) pairs.

    ``replace="either"`` swaps a fair-coin choice of either side (subClassOf
    pairs); ``replace="second"`` only swaps the second element (the class of a
    membership link). Collisions with ``positives`` are redrawn.
    """
    pos = np.asarray(pos, dtype=np.int64).reshape(-1, 2)
    neg = np.repeat(pos[:, None, :], k, axis=1)
    if replace == "either":
        col = (rng.random(neg.shape[:2]) < 0.5).astype(np.int64)
    elif replace == "second":
        col = np.ones(neg.shape[:2], dtype=np.int64)
    else:
        raise ValueError(f"replace must be 'either' or 'second', not {replace!r}")
    todo = np.ones(neg.shape[:2], dtype=bool)
    for _ in range(max_retries + 1):
        rows, cols = np.nonzero(todo)
        if len(rows) == 0:
            break
        neg[rows, cols, col[rows, cols]] = rng.integers(n_candidates, size=len(rows))
        todo[:] = False
        todo[rows, cols] = positives.contains(neg[rows, cols])
    return neg
