"""Merge a second ontology into the first by class mappings.

Routing follows subClassOf edges of both ontologies plus directed
equivalence links (ontology 2 -> ontology 1) and maps every class of
ontology 2 to the deepest reachable class of ontology 1. Mappings from an
external system or manual annotation then override the routed ones, and
KG2 memberships are rewritten onto ontology 1.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DataError
from .kg import MembershipSet, Ontology

PROVENANCES = ("routing", "system", "manual")


class ClassMapping:
    """Function from ontology-2 classes to ontology-1 classes, with provenance tags."""

    def __init__(self, pairs: Iterable[tuple[int, int, str]] = ()):
        self._map: dict[int, tuple[int, str]] = {}
        for src, dst, prov in pairs:
            self.add(src, dst, prov)

    def add(self, src: int, dst: int, provenance: str = "system") -> None:
        if provenance not in PROVENANCES:
            raise DataError(f"unknown mapping provenance {provenance!r}")
        if src in self._map:
            raise DataError(f"source class {src} mapped twice")
        self._map[src] = (dst, provenance)

    def get(self, src: int, default=None):
        hit = self._map.get(src)
        return default if hit is None else hit[0]

    def provenance(self, src: int) -> str:
        return self._map[src][1]

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(s, d) for s, (d, _) in self._map.items()]

    def items(self) -> list[tuple[int, int, str]]:
        return [(s, d, p) for s, (d, p) in self._map.items()]

    def __contains__(self, src: int) -> bool:
        return src in self._map

    def __len__(self) -> int:
        return len(self._map)

    def __eq__(self, other) -> bool:
        return isinstance(other, ClassMapping) and self.items() == other.items()

    def __repr__(self) -> str:
        return f"ClassMapping({self.items()!r})"


def route_fine_grained(
    o1: Ontology, o2: Ontology, equiv_pairs: Iterable[tuple[int, int]]
) -> ClassMapping:
    """Map each class of ``o2`` to its most fine-grained reachable class in ``o1``.

    ``equiv_pairs`` holds (o2 class, o1 class) links. Depth is the longest
    walk to the root inside ``o1``; ties go to the smallest handle. Classes
    that reach nothing in ``o1`` map to the root.
    """
    n2 = o2.n_classes
    equiv: list[list[int]] = [[] for _ in range(n2)]
    for c2, c1 in equiv_pairs:
        if not (0 <= c2 < n2 and 0 <= c1 < o1.n_classes):
            raise DataError(f"equivalence pair ({c2}, {c1}) outside the ontologies")
        equiv[c2].append(c1)
    _check_routing_dag(o1, o2, equiv)

    depth = o1.depths()
    mapping = ClassMapping()
    for c in range(n2):
        if c == o2.root:
            mapping.add(c, o1.root, "routing")
            continue
        reached = _reachable_in_o1(o1, o2, equiv, c)
        if not reached:
            mapping.add(c, o1.root, "routing")
            continue
        best = min(reached, key=lambda x: (-depth[x], x))
        mapping.add(c, best, "routing")
    return mapping


def _reachable_in_o1(o1: Ontology, o2: Ontology, equiv: list[list[int]], start: int) -> set[int]:
    seen2 = {start}
    seen1: set[int] = set()
    stack2 = [start]
    stack1: list[int] = []
    while stack2:
        c = stack2.pop()
        for p in o2.parents[c]:
            if p not in seen2:
                seen2.add(p)
                stack2.append(p)
        for c1 in equiv[c]:
            if c1 not in seen1:
                seen1.add(c1)
                stack1.append(c1)
    while stack1:
        c = stack1.pop()
        for p in o1.parents[c]:
            if p not in seen1:
                seen1.add(p)
                stack1.append(p)
    return seen1


def _check_routing_dag(o1: Ontology, o2: Ontology, equiv: list[list[int]]) -> None:
    # nodes 0..n1-1 are o1 classes, n1.. are o2 classes
    n1, n2 = o1.n_classes, o2.n_classes
    succ: list[list[int]] = [list(o1.parents[c]) for c in range(n1)]
    succ += [[n1 + p for p in o2.parents[c]] + list(equiv[c]) for c in range(n2)]
    state = [0] * (n1 + n2)  # 0 new, 1 on stack, 2 done
    for s in range(n1 + n2):
        if state[s]:
            continue
        stack = [(s, iter(succ[s]))]
        state[s] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
            elif state[nxt] == 1:
                raise DataError("ontology cycle in routing graph")
            elif state[nxt] == 0:
                state[nxt] = 1
                stack.append((nxt, iter(succ[nxt])))


def apply_system_mappings(base: ClassMapping, system: ClassMapping) -> ClassMapping:
    """Override routed targets with externally produced ones."""
    out = ClassMapping()
    for src, dst, prov in base.items():
        if src in system and system.get(src) != dst:
            out.add(src, system.get(src), system.provenance(src))
        else:
            out.add(src, dst, prov)
    for src, dst, prov in system.items():
        if src not in out:
            out.add(src, dst, prov)
    return out


def merge(
    o1: Ontology, o2_memberships: MembershipSet, mapping: ClassMapping
) -> tuple[Ontology, MembershipSet]:
    """Rewrite KG2 memberships onto ``o1``; unmapped classes become the root."""
    links = o2_memberships.links
    if len(links):
        targets = np.array([mapping.get(int(c), o1.root) for c in links[:, 1]], dtype=np.int64)
        rewritten = np.column_stack([links[:, 0], targets])
    else:
        rewritten = links
    bad = rewritten[:, 1][(rewritten[:, 1] < 0) | (rewritten[:, 1] >= o1.n_classes)]
    if len(bad):
        raise DataError(f"class mapping targets unknown ontology-1 class {int(bad[0])}")
    return o1, MembershipSet(o2_memberships.n_entities, rewritten.tolist(), root=o1.root)


def read_class_mappings(path: Path, o1: Ontology, o2: Ontology, default_provenance: str = "system") -> ClassMapping:
    """Read ``class2<TAB>class1[<TAB>provenance]`` lines."""
    mapping = ClassMapping()
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) not in (2, 3):
                raise DataError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields, got {len(fields)}")
            try:
                src, dst = o2.class_id(fields[0]), o1.class_id(fields[1])
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: {exc.args[0]}") from None
            mapping.add(src, dst, fields[2] if len(fields) == 3 else default_provenance)
    return mapping


def write_class_mappings(path: Path, mapping: ClassMapping, o1: Ontology, o2: Ontology) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        for src, dst, prov in mapping.items():
            writer.writerow([o2.classes.resolve(src), o1.classes.resolve(dst), prov])
