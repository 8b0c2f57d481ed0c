"""Alignment prediction with CSLS over the mixed entity/class similarity, and evaluation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .ccm import ClassConflictMatrix, is_conflicted
from .kg import AlignmentDataset, MembershipSet
from .model import ModelParams

CHUNK = 2048


@dataclass(frozen=True)
class Metrics:
    hits1: float
    hits5: float
    mrr: float
    count: int = 0

    def as_dict(self) -> dict[str, float]:
        return {"H@1": self.hits1, "H@5": self.hits5, "MRR": self.mrr, "count": self.count}


@dataclass
class RankingResult:
    queries: np.ndarray  # KG1 handles
    gold: np.ndarray  # KG2 handles
    candidates: np.ndarray  # KG2 handles, ascending
    ranks: np.ndarray  # 1-based gold rank per query
    top: np.ndarray  # (Q, t) candidate handles, best first
    top_scores: np.ndarray

    @property
    def metrics(self) -> Metrics:
        return evaluate(self.ranks)

    @property
    def top1(self) -> np.ndarray:
        return self.top[:, 0]


def evaluate(ranks: Sequence[int]) -> Metrics:
    ranks = np.asarray(ranks, dtype=np.float64)
    if len(ranks) == 0:
        return Metrics(0.0, 0.0, 0.0, 0)
    if ranks.min() < 1:
        raise ValueError("ranks are 1-based")
    return Metrics(
        float((ranks <= 1).mean()),
        float((ranks <= 5).mean()),
        float((1.0 / ranks).mean()),
        len(ranks),
    )


def _normalize(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


def _cos(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def class_embedding_of(e: int, m: MembershipSet, cls: np.ndarray) -> np.ndarray:
    """Mean embedding of the entity's declared classes."""
    return cls[list(m.classes_of(e))].mean(axis=0)


def class_embedding_matrix(m: MembershipSet, cls: np.ndarray, entities: np.ndarray | None = None) -> np.ndarray:
    links = m.links
    sums = np.zeros((m.n_entities, cls.shape[1]))
    np.add.at(sums, links[:, 0], cls[links[:, 1]])
    counts = np.bincount(links[:, 0], minlength=m.n_entities)[:, None]
    out = sums / np.maximum(counts, 1)
    return out if entities is None else out[entities]


def pair_similarity(
    e1: int, e2: int, params: ModelParams, memberships: Sequence[MembershipSet], beta: float
) -> float:
    """``beta * cos(e1 W_a, e2) + (1 - beta) * cos(class(e1), class(e2))``."""
    m1, m2 = memberships
    cos_e = _cos(params.ent1[e1] @ params.W_a, params.ent2[e2])
    cos_c = _cos(class_embedding_of(e1, m1, params.cls), class_embedding_of(e2, m2, params.cls))
    return beta * cos_e + (1.0 - beta) * cos_c


class SimilarityProvider:
    """Row chunks of the query x candidate similarity matrix, computed on demand."""

    def __init__(self, params: ModelParams, memberships: Sequence[MembershipSet],
                 queries: np.ndarray, candidates: np.ndarray, beta: float):
        m1, m2 = memberships
        self.beta = beta
        self.q_ent = _normalize(params.ent1[queries] @ params.W_a)
        self.c_ent = _normalize(params.ent2[candidates])
        if beta < 1.0:
            self.q_cls = _normalize(class_embedding_matrix(m1, params.cls, queries))
            self.c_cls = _normalize(class_embedding_matrix(m2, params.cls, candidates))
        self.shape = (len(queries), len(candidates))

    def __call__(self, start: int, stop: int) -> np.ndarray:
        sim = self.q_ent[start:stop] @ self.c_ent.T
        if self.beta < 1.0:
            sim = self.beta * sim + (1.0 - self.beta) * (self.q_cls[start:stop] @ self.c_cls.T)
        return sim


def similarity_matrix(params, memberships, queries, candidates, beta: float) -> np.ndarray:
    provider = SimilarityProvider(params, memberships, np.asarray(queries), np.asarray(candidates), beta)
    return provider(0, provider.shape[0])


def _matrix_provider(sim: np.ndarray) -> Callable[[int, int], np.ndarray]:
    def chunk(start, stop):
        return sim[start:stop]

    chunk.shape = sim.shape
    return chunk


def _topk_mean(x: np.ndarray, k: int, axis: int) -> np.ndarray:
    n = x.shape[axis]
    return np.partition(x, n - k, axis=axis).take(range(n - k, n), axis=axis).mean(axis=axis)


def csls_rank(
    sim,
    k: int,
    gold_cols: np.ndarray,
    candidate_handles: np.ndarray | None = None,
    top: int = 10,
    chunk: int = CHUNK,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rank candidates per query by ``2 sim - r_C(x) - r_Q(y)``.

    ``sim`` is a (Q, C) matrix or a provider returning row chunks.
    ``r_C(x)`` is the mean similarity of query ``x`` to its ``k`` nearest
    candidates and ``r_Q(y)`` the mean similarity of candidate ``y`` to its
    ``k`` nearest queries (``min(k, Q)`` when there are fewer queries). Ties
    go to the smaller candidate handle. Returns (gold ranks, top handles, top
    scores).
    """
    provider = _matrix_provider(sim) if isinstance(sim, np.ndarray) else sim
    n_q, n_c = provider.shape
    if k < 1:
        raise ValueError("CSLS k must be >= 1")
    if k > n_c:
        raise ValueError(f"CSLS k={k} exceeds the {n_c} candidates")
    handles = np.arange(n_c) if candidate_handles is None else np.asarray(candidate_handles)
    gold_cols = np.asarray(gold_cols, dtype=np.int64)
    k_q = min(k, n_q)

    # pass 1: query-side hubness and running top-k_q per candidate column
    r_c = np.empty(n_q)
    col_top = np.full((k_q, n_c), -np.inf)
    for start in range(0, n_q, chunk):
        s = provider(start, min(start + chunk, n_q))
        r_c[start:start + len(s)] = _topk_mean(s, k, axis=1)
        stacked = np.vstack([col_top, s])
        col_top = np.partition(stacked, len(stacked) - k_q, axis=0)[len(stacked) - k_q:]
    r_q = col_top.mean(axis=0)

    # pass 2: CSLS scores, gold ranks and top lists
    top = min(top, n_c)
    ranks = np.empty(n_q, dtype=np.int64)
    top_idx = np.empty((n_q, top), dtype=np.int64)
    top_scores = np.empty((n_q, top))
    for start in range(0, n_q, chunk):
        stop = min(start + chunk, n_q)
        scores = 2.0 * provider(start, stop) - r_c[start:stop, None] - r_q[None, :]
        rows = np.arange(stop - start)
        g = gold_cols[start:stop]
        gs = scores[rows, g][:, None]
        better = (scores > gs) | ((scores == gs) & (handles[None, :] < handles[g][:, None]))
        ranks[start:stop] = 1 + better.sum(axis=1)
        part = np.argpartition(-scores, top - 1, axis=1)[:, :top] if top < n_c else np.tile(np.arange(n_c), (len(rows), 1))
        part_scores = np.take_along_axis(scores, part, axis=1)
        order = np.lexsort((handles[part], -part_scores), axis=1)
        top_idx[start:stop] = np.take_along_axis(part, order, axis=1)
        top_scores[start:stop] = np.take_along_axis(part_scores, order, axis=1)
    return ranks, handles[top_idx], top_scores


def rank_split(
    params: ModelParams,
    dataset: AlignmentDataset,
    split: str = "test",
    beta: float = 0.5,
    csls_k: int = 10,
    candidates: str = "split",
    top: int = 10,
) -> RankingResult:
    """Rank KG2 candidates for every KG1 entity of a seed split.

    ``candidates="split"`` ranks against the KG2 side of the same split,
    ``"all"`` against every KG2 entity.
    """
    pairs = dataset.split(split).pairs
    queries, gold = pairs[:, 0], pairs[:, 1]
    if candidates == "split":
        cand = np.unique(gold)
    elif candidates == "all":
        cand = np.arange(dataset.kg2.n_entities)
    else:
        raise ValueError(f"candidates must be 'split' or 'all', not {candidates!r}")
    gold_cols = np.searchsorted(cand, gold)
    provider = SimilarityProvider(params, dataset.memberships, queries, cand, beta)
    k = min(csls_k, len(cand))
    ranks, top_handles, top_scores = csls_rank(provider, k, gold_cols, cand, top=top)
    return RankingResult(queries, gold, cand, ranks, top_handles, top_scores)


def conflict_ratio(
    predicted_top1: Sequence[int],
    gold: Sequence[tuple[int, int]],
    memberships: Sequence[MembershipSet],
    ccm: ClassConflictMatrix,
    tau: float = 0.9,
) -> float:
    """Share of false-positive top-1 predictions whose classes conflict; 0 without false positives."""
    false_pos = conflicted = 0
    for pred, (e1, e2) in zip(predicted_top1, gold):
        if pred == e2:
            continue
        false_pos += 1
        conflicted += is_conflicted(e1, int(pred), memberships, ccm, tau)
    return conflicted / false_pos if false_pos else 0.0


@dataclass(frozen=True)
class DegreeBin:
    low: int
    high: int
    metrics: Metrics


def degree_binned_eval(ranks: Sequence[int], summed_degrees: Sequence[int], bin_width: int = 10) -> list[DegreeBin]:
    """Metrics per summed-degree interval ``[low, low + bin_width)``; empty bins are skipped."""
    ranks = np.asarray(ranks)
    degrees = np.asarray(summed_degrees)
    bins = degrees // bin_width
    out = []
    for b in np.unique(bins):
        mask = bins == b
        out.append(DegreeBin(int(b * bin_width), int((b + 1) * bin_width), evaluate(ranks[mask])))
    return out


def summed_degrees(dataset: AlignmentDataset, pairs: np.ndarray) -> np.ndarray:
    return dataset.kg1.degrees[pairs[:, 0]] + dataset.kg2.degrees[pairs[:, 1]]


# --- dumps ----------------------------------------------------------------

def write_predictions(path: Path, result: RankingResult, dataset: AlignmentDataset) -> None:
    names1, names2 = dataset.kg1.entities, dataset.kg2.entities
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        for q, row, scores in zip(result.queries.tolist(), result.top.tolist(), result.top_scores.tolist()):
            cells = [f"{names2.resolve(c)}:{s:.6f}" for c, s in zip(row, scores)]
            writer.writerow([names1.resolve(q), *cells])


def write_metrics(path: Path, values: dict[str, float]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in values.items():
            fh.write(f"{key}={value}\n")


def write_degree_bins(path: Path, bins: list[DegreeBin]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["degree_low", "degree_high", "count", "H@1", "H@5", "MRR"])
        for b in bins:
            m = b.metrics
            writer.writerow([b.low, b.high, m.count, f"{m.hits1:.6f}", f"{m.hits5:.6f}", f"{m.mrr:.6f}"])
