"""Class conflict matrix: pairwise conflict degrees between ontology classes.

Per unordered class pair the first matching rule wins:

1. same class                                     -> 0
2. declared disjoint                              -> 1
3. a shared member entity, or a train seed pair
   whose two sides are declared in the two classes -> 0
4. Jaccard distance of the ancestor sets          -> 1 - |S_i & S_j| / |S_i | S_j|
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DataError
from .kg import MappingSet, MembershipSet, Ontology


class ClassConflictMatrix:
    """Symmetric conflict degrees, stored as the strict upper triangle."""

    def __init__(self, n: int, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (n * (n - 1) // 2,):
            raise ValueError(f"expected {n * (n - 1) // 2} packed values for {n} classes, got {values.shape}")
        if len(values) and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("conflict degrees must lie in [0, 1]")
        self.n = n
        self.values = values
        self.values.setflags(write=False)

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "ClassConflictMatrix":
        n = dense.shape[0]
        iu = np.triu_indices(n, k=1)
        return cls(n, dense[iu])

    def _index(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        # offset of row i in the packed strict upper triangle
        return i * (2 * self.n - i - 1) // 2 + (j - i - 1)

    def query(self, i: int, j: int) -> float:
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise IndexError(f"class pair ({i}, {j}) outside a {self.n}-class matrix")
        if i == j:
            return 0.0
        return float(self.values[self._index(i, j)])

    __call__ = query

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        iu = np.triu_indices(self.n, k=1)
        out[iu] = self.values
        out.T[iu] = self.values
        return out

    def dump(self, path: Path, ontology: Ontology | None = None) -> None:
        names = ontology.classes.resolve if ontology is not None else str
        iu, ju = np.triu_indices(self.n, k=1)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            for i, j, v in zip(iu.tolist(), ju.tolist(), self.values.tolist()):
                writer.writerow([names(i), names(j), repr(v)])


def ancestor_set(c: int, o: Ontology) -> set[int]:
    """``c`` plus every class on a path from ``c`` up to the root."""
    return o.ancestors(c)


def ancestor_matrix(o: Ontology) -> np.ndarray:
    """Boolean matrix whose row ``c`` marks the ancestor set of ``c``."""
    n = o.n_classes
    anc = np.zeros((n, n), dtype=bool)
    done = np.zeros(n, dtype=bool)
    for start in range(n):
        stack = [start]
        while stack:
            c = stack[-1]
            if done[c]:
                stack.pop()
                continue
            pending = [p for p in o.parents[c] if not done[p]]
            if pending:
                stack.extend(pending)
                continue
            anc[c, c] = True
            for p in o.parents[c]:
                anc[c] |= anc[p]
            done[c] = True
            stack.pop()
    return anc


def _incidence(m: MembershipSet, n_classes: int, entities: np.ndarray | None = None) -> sp.csr_matrix:
    links = m.links
    if len(links) and links[:, 1].max() >= n_classes:
        raise DataError("membership references a class outside the ontology")
    inc = sp.csr_matrix(
        (np.ones(len(links), dtype=np.int64), (links[:, 0], links[:, 1])),
        shape=(m.n_entities, n_classes),
    )
    return inc if entities is None else inc[entities]


def build_ccm(
    o: Ontology,
    memberships: Sequence[MembershipSet],
    seeds: MappingSet,
) -> ClassConflictMatrix:
    """Conflict matrix from the ontology, both KGs' memberships and the *train* seeds."""
    if len(memberships) != 2:
        raise ValueError("build_ccm expects the (KG1, KG2) membership pair")
    n = o.n_classes
    anc = ancestor_matrix(o).astype(np.int64)
    inter = anc @ anc.T
    sizes = anc.sum(axis=1)
    union = sizes[:, None] + sizes[None, :] - inter
    m = 1.0 - inter / union

    shared = np.zeros((n, n), dtype=bool)
    for ms in memberships:
        inc = _incidence(ms, n)
        shared |= (inc.T @ inc).toarray() > 0
    if len(seeds):
        left = _incidence(memberships[0], n, seeds.left)
        right = _incidence(memberships[1], n, seeds.right)
        linked = (left.T @ right).toarray() > 0
        shared |= linked | linked.T
    m[shared] = 0.0

    if o.disjoint_pairs:
        dis = np.array(sorted(o.disjoint_pairs), dtype=np.int64)
        m[dis[:, 0], dis[:, 1]] = 1.0
        m[dis[:, 1], dis[:, 0]] = 1.0
    np.fill_diagonal(m, 0.0)
    return ClassConflictMatrix.from_dense(m)


def min_conflict(classes1: Sequence[int], classes2: Sequence[int], ccm: ClassConflictMatrix) -> float:
    return min(ccm.query(a, b) for a in classes1 for b in classes2)


def is_conflicted(
    e1: int,
    e2: int,
    memberships: Sequence[MembershipSet],
    ccm: ClassConflictMatrix,
    tau: float = 0.9,
) -> bool:
    """True when every declared class pair of the two entities conflicts at least ``tau``."""
    m1, m2 = memberships
    return min_conflict(m1.classes_of(e1), m2.classes_of(e2), ccm) >= tau
