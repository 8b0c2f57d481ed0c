"""Core domain types: interned KGs, the (merged) ontology, memberships and seed splits."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

ROOT = "owl:Thing"
ROOT_ALIASES = frozenset({ROOT, "http://www.w3.org/2002/07/owl#Thing"})


class Interner:
    """Bijective string <-> dense integer handle table, handles in first-seen order."""

    def __init__(self, names: Iterable[str] = ()):
        self._ids: dict[str, int] = {}
        self._names: list[str] = []
        for name in names:
            self.intern(name)

    def intern(self, name: str) -> int:
        idx = self._ids.get(name)
        if idx is None:
            idx = len(self._names)
            self._ids[name] = idx
            self._names.append(name)
        return idx

    def lookup(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise KeyError(f"unknown name {name!r}") from None

    def get(self, name: str, default=None):
        return self._ids.get(name, default)

    def resolve(self, idx: int) -> str:
        return self._names[idx]

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self):
        return iter(self._names)


@dataclass(frozen=True)
class Triple:
    head: int
    relation: int
    tail: int


class KnowledgeGraph:
    """One side of the alignment task: entities, relations and relation triples."""

    def __init__(self, entities: Interner, relations: Interner, triples: np.ndarray, name: str = ""):
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        if len(triples):
            if triples[:, [0, 2]].max() >= len(entities) or triples.min() < 0:
                raise DataError("triple references an entity outside the entity table")
            if triples[:, 1].max() >= len(relations):
                raise DataError("triple references a relation outside the relation table")
        self.name = name
        self.entities = entities
        self.relations = relations
        self.triples = triples
        self.triples.setflags(write=False)
        self._keys = np.unique(self.triple_keys(triples))
        self.degrees = np.bincount(triples[:, 0], minlength=len(entities)) + np.bincount(
            triples[:, 2], minlength=len(entities)
        )
        self.out_edges: dict[int, list[tuple[int, int]]] = defaultdict(list)
        self.in_edges: dict[int, list[tuple[int, int]]] = defaultdict(list)
        for h, r, t in triples.tolist():
            self.out_edges[h].append((r, t))
            self.in_edges[t].append((r, h))

    @classmethod
    def from_uri_triples(cls, triples: Iterable[tuple[str, str, str]], name: str = "") -> "KnowledgeGraph":
        ents, rels = Interner(), Interner()
        rows = []
        seen = set()
        for h, r, t in triples:
            if (h, r, t) in seen:
                continue
            seen.add((h, r, t))
            rows.append((ents.intern(h), rels.intern(r), ents.intern(t)))
        return cls(ents, rels, np.array(rows, dtype=np.int64).reshape(-1, 3), name=name)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def triple_keys(self, triples: np.ndarray) -> np.ndarray:
        """Encode (h, r, t) rows as unique int64 keys for fast membership tests."""
        triples = np.asarray(triples, dtype=np.int64)
        n_ent = max(len(self.entities), 1)
        n_rel = max(len(self.relations), 1)
        return (triples[..., 0] * n_rel + triples[..., 1]) * n_ent + triples[..., 2]

    def contains(self, triples: np.ndarray) -> np.ndarray:
        keys = self.triple_keys(triples)
        if len(self._keys) == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.minimum(np.searchsorted(self._keys, keys), len(self._keys) - 1)
        return self._keys[pos] == keys

    def degree(self, e: int) -> int:
        if not 0 <= e < self.n_entities:
            raise DataError(f"entity {e} not in KG {self.name or ''}".rstrip())
        return int(self.degrees[e])

    def __repr__(self) -> str:
        return (
            f"KnowledgeGraph({self.name!r}, entities={self.n_entities}, "
            f"relations={self.n_relations}, triples={len(self.triples)})"
        )


class Ontology:
    """Class set with subClassOf pairs and declared disjointness.

    The root class always has handle 0. Classes without a declared parent are
    attached to the root, so every class reaches it; ``n_implicit`` counts
    those added links.
    """

    def __init__(
        self,
        classes: Interner,
        subclass_pairs: Iterable[tuple[int, int]],
        disjoint_pairs: Iterable[tuple[int, int]] = (),
    ):
        if len(classes) == 0 or classes.resolve(0) not in ROOT_ALIASES:
            raise DataError("ontology class table must start with the root class")
        self.classes = classes
        self.root = 0
        n = len(classes)
        pairs: list[tuple[int, int]] = []
        seen = set()
        for child, parent in subclass_pairs:
            if child == parent:
                raise DataError(f"ontology cycle: {classes.resolve(child)} is its own parent")
            if child == self.root:
                raise DataError("ontology root cannot have a parent")
            if (child, parent) not in seen:
                seen.add((child, parent))
                pairs.append((child, parent))
        has_parent = {c for c, _ in pairs}
        self.n_implicit = 0
        for c in range(1, n):
            if c not in has_parent:
                pairs.append((c, self.root))
                self.n_implicit += 1
        self.subclass_pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        self.parents: list[list[int]] = [[] for _ in range(n)]
        self.children: list[list[int]] = [[] for _ in range(n)]
        for c, p in pairs:
            self.parents[c].append(p)
            self.children[p].append(c)
        self._check_acyclic()

        dis = set()
        for a, b in disjoint_pairs:
            if a == b:
                raise DataError(f"class {classes.resolve(a)} declared disjoint with itself")
            dis.add((min(a, b), max(a, b)))
        self.disjoint_pairs: frozenset[tuple[int, int]] = frozenset(dis)

    @classmethod
    def from_uris(
        cls,
        subclass_pairs: Iterable[tuple[str, str]],
        disjoint_pairs: Iterable[tuple[str, str]] = (),
        extra_classes: Iterable[str] = (),
    ) -> "Ontology":
        classes = Interner([ROOT])
        intern = root_aware(classes)
        sub = [(intern(c), intern(p)) for c, p in subclass_pairs]
        dis = [(intern(a), intern(b)) for a, b in disjoint_pairs]
        for name in extra_classes:
            intern(name)
        return cls(classes, sub, dis)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def class_id(self, name: str) -> int:
        if name in ROOT_ALIASES:
            return self.root
        return self.classes.lookup(name)

    def _check_acyclic(self) -> None:
        # Kahn's algorithm on child -> parent edges
        n = self.n_classes
        indeg = [0] * n
        for c in range(n):
            for p in self.parents[c]:
                indeg[p] += 1
        stack = [c for c in range(n) if indeg[c] == 0]
        visited = 0
        while stack:
            c = stack.pop()
            visited += 1
            for p in self.parents[c]:
                indeg[p] -= 1
                if indeg[p] == 0:
                    stack.append(p)
        if visited != n:
            raise DataError("ontology cycle detected in subClassOf pairs")

    def is_disjoint(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.disjoint_pairs

    def ancestors(self, c: int) -> set[int]:
        """All classes reachable from ``c`` over parent links, including ``c``."""
        if not 0 <= c < self.n_classes:
            raise DataError(f"unknown class handle {c}")
        out = {c}
        stack = [c]
        while stack:
            for p in self.parents[stack.pop()]:
                if p not in out:
                    out.add(p)
                    stack.append(p)
        return out

    def depths(self) -> np.ndarray:
        """Longest directed walk from each class up to the root."""
        depth = np.full(self.n_classes, -1, dtype=np.int64)
        depth[self.root] = 0

        def visit(c: int) -> int:
            stack = [c]
            while stack:
                top = stack[-1]
                pending = [p for p in self.parents[top] if depth[p] < 0]
                if pending:
                    stack.extend(pending)
                    continue
                stack.pop()
                if depth[top] < 0:
                    depth[top] = 1 + max(depth[p] for p in self.parents[top])
            return int(depth[c])

        for c in range(self.n_classes):
            if depth[c] < 0:
                visit(c)
        return depth

    def __repr__(self) -> str:
        return (
            f"Ontology(classes={self.n_classes}, subclass_pairs={len(self.subclass_pairs)}, "
            f"disjoint_pairs={len(self.disjoint_pairs)})"
        )


def root_aware(classes: Interner):
    def intern(name: str) -> int:
        if name in ROOT_ALIASES:
            return 0
        return classes.intern(name)

    return intern


class MembershipSet:
    """Entity -> declared classes for one KG. Untyped entities are linked to the root."""

    def __init__(self, n_entities: int, links: Iterable[tuple[int, int]], root: int = 0):
        per_entity: list[set[int]] = [set() for _ in range(n_entities)]
        for e, c in links:
            if not 0 <= e < n_entities:
                raise DataError(f"membership link references unknown entity {e}")
            per_entity[e].add(c)
        self.n_root_default = 0
        for s in per_entity:
            if not s:
                s.add(root)
                self.n_root_default += 1
        self._classes = [tuple(sorted(s)) for s in per_entity]
        rows = [(e, c) for e, cs in enumerate(self._classes) for c in cs]
        self.links = np.array(rows, dtype=np.int64).reshape(-1, 2)
        self.links.setflags(write=False)

    @property
    def n_entities(self) -> int:
        return len(self._classes)

    def classes_of(self, e: int) -> tuple[int, ...]:
        if not 0 <= e < len(self._classes):
            raise DataError("entity not in membership set")
        return self._classes[e]

    def __len__(self) -> int:
        return len(self.links)


def declared_classes(e: int, m: MembershipSet) -> list[int]:
    """Directly declared classes of ``e``, ordered by class handle."""
    return list(m.classes_of(e))


def summed_degree(e1: int, e2: int, kg1: KnowledgeGraph, kg2: KnowledgeGraph) -> int:
    return kg1.degree(e1) + kg2.degree(e2)


class MappingSet:
    """Ordered, duplicate-free list of (KG1 entity, KG2 entity) pairs."""

    def __init__(self, pairs: Iterable[tuple[int, int]] = ()):
        seen = set()
        rows = []
        for a, b in pairs:
            key = (int(a), int(b))
            if key not in seen:
                seen.add(key)
                rows.append(key)
        self.pairs = np.array(rows, dtype=np.int64).reshape(-1, 2)
        self.pairs.setflags(write=False)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(map(tuple, self.pairs.tolist()))

    @property
    def left(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def right(self) -> np.ndarray:
        return self.pairs[:, 1]


def split_counts(n: int, ratio: Sequence[float]) -> tuple[int, int, int]:
    if len(ratio) != 3 or any(r < 0 for r in ratio) or abs(sum(ratio) - 1.0) > 1e-6:
        raise DataError(f"split ratio must be three non-negative numbers summing to 1, got {tuple(ratio)}")
    n_train = int(round(n * ratio[0]))
    n_valid = min(int(round(n * ratio[1])), n - n_train)
    return n_train, n_valid, n - n_train - n_valid


@dataclass
class AlignmentDataset:
    kg1: KnowledgeGraph
    kg2: KnowledgeGraph
    ontology: Ontology
    memberships1: MembershipSet
    memberships2: MembershipSet
    seeds_train: MappingSet
    seeds_valid: MappingSet
    seeds_test: MappingSet
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.memberships1.n_entities != self.kg1.n_entities:
            raise DataError("memberships1 does not cover KG1")
        if self.memberships2.n_entities != self.kg2.n_entities:
            raise DataError("memberships2 does not cover KG2")
        splits = {"train": self.seeds_train, "valid": self.seeds_valid, "test": self.seeds_test}
        for side, n in ((0, self.kg1.n_entities), (1, self.kg2.n_entities)):
            owner: dict[int, str] = {}
            for name, split in splits.items():
                col = split.pairs[:, side].tolist()
                for e in col:
                    if not 0 <= e < n:
                        raise DataError(f"{name} seed references entity {e} outside KG{side + 1}")
                    prev = owner.setdefault(e, name)
                    if prev != name:
                        raise DataError(
                            f"KG{side + 1} entity {e} appears in both {prev} and {name} seed splits"
                        )

    @property
    def memberships(self) -> tuple[MembershipSet, MembershipSet]:
        return self.memberships1, self.memberships2

    def split(self, name: str) -> MappingSet:
        try:
            return {"train": self.seeds_train, "valid": self.seeds_valid, "test": self.seeds_test}[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}; expected train, valid or test") from None
