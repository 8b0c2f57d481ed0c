"""Read a benchmark directory into an AlignmentDataset, plus word vectors for SI init.

Layout (UTF-8, tab separated)::

    rel_triples_1.tsv, rel_triples_2.tsv    head, relation, tail
    onto_subclass_1.tsv                     child class, parent class
    onto_subclass_2.tsv                     only when the KGs have separate ontologies
    onto_equivalent.tsv                     class2, class1 (optional, routing input)
    onto_disjoint.tsv                       class, class (optional)
    memberships_1.tsv, memberships_2.tsv    entity, class
    ent_links.tsv                           entity1, entity2
    ent_links_{train,valid,test}.tsv        optional fixed split
    class_mappings.tsv                      class2, class1[, provenance] (optional)
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .kg import (
    AlignmentDataset,
    Interner,
    KnowledgeGraph,
    MappingSet,
    MembershipSet,
    Ontology,
    root_aware,
    split_counts,
)
from .merge import ClassMapping, apply_system_mappings, merge, read_class_mappings, route_fine_grained

log = logging.getLogger(__name__)

DEFAULT_SPLIT = (0.2, 0.1, 0.7)
SPLIT_NAMES = ("train", "valid", "test")


def read_tsv(path: Path, n_fields: int) -> list[tuple[str, ...]]:
    """Read non-empty lines with exactly ``n_fields`` tab-separated fields."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise DataError(
                    f"{path}:{lineno}: expected {n_fields} tab-separated fields, got {len(fields)}"
                )
            rows.append(tuple(f.strip() for f in fields))
    return rows


def parse_triples_file(path: Path) -> list[tuple[str, str, str]]:
    """URI triples in file order, duplicates dropped."""
    seen = set()
    out = []
    for row in read_tsv(path, 3):
        if row not in seen:
            seen.add(row)
            out.append(row)
    return out


def _optional(path: Path, n_fields: int) -> list[tuple[str, ...]]:
    return read_tsv(path, n_fields) if path.is_file() else []


def _memberships(path: Path, kg: KnowledgeGraph, intern, stats: dict, key: str) -> list[tuple[int, int]]:
    links = []
    dropped = 0
    for ent, cls in read_tsv(path, 2):
        e = kg.entities.get(ent)
        if e is None:
            dropped += 1
            continue
        links.append((e, intern(cls)))
    if dropped:
        log.warning("%s: %d membership links reference entities outside the KG; dropped", path.name, dropped)
    stats[key] = dropped
    return links


def _links(path: Path, kg1: KnowledgeGraph, kg2: KnowledgeGraph) -> list[tuple[int, int]]:
    pairs = []
    for lineno, (a, b) in enumerate(read_tsv(path, 2), 1):
        e1, e2 = kg1.entities.get(a), kg2.entities.get(b)
        if e1 is None:
            raise DataError(f"{path}: entity {a!r} (link {lineno}) is absent from KG1")
        if e2 is None:
            raise DataError(f"{path}: entity {b!r} (link {lineno}) is absent from KG2")
        pairs.append((e1, e2))
    return pairs


def _ontology(classes: Interner, sub, disjoint=()) -> Ontology:
    intern = root_aware(classes)
    return Ontology(classes, [(intern(a), intern(b)) for a, b in sub], [(intern(a), intern(b)) for a, b in disjoint])


def load_dataset(
    data_dir: str | Path,
    split_ratio: Sequence[float] = DEFAULT_SPLIT,
    rng_seed: int = 0,
    shared_ontology: bool | None = None,
) -> AlignmentDataset:
    """Load and index a benchmark directory.

    ``shared_ontology=None`` detects the mode from the presence of
    ``onto_subclass_2.tsv``. With separate ontologies the second one is merged
    into the first in memory (see :mod:`ontoea.merge`).
    """
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"missing dataset directory: {data_dir}")
    split_counts(0, split_ratio)  # validates the ratio
    if shared_ontology is None:
        shared_ontology = not (data_dir / "onto_subclass_2.tsv").is_file()
    for name in ("rel_triples_1.tsv", "rel_triples_2.tsv", "onto_subclass_1.tsv", "memberships_1.tsv", "memberships_2.tsv"):
        if not (data_dir / name).is_file():
            raise DataError(f"missing file: {data_dir / name}")
    if not shared_ontology and not (data_dir / "onto_subclass_2.tsv").is_file():
        raise DataError(f"missing file: {data_dir / 'onto_subclass_2.tsv'} (separate ontologies requested)")

    stats: dict = {}
    kg1 = KnowledgeGraph.from_uri_triples(parse_triples_file(data_dir / "rel_triples_1.tsv"), name="KG1")
    kg2 = KnowledgeGraph.from_uri_triples(parse_triples_file(data_dir / "rel_triples_2.tsv"), name="KG2")

    # interning order: root, subclass file, disjoint file, then membership-only classes
    classes1 = Interner(["owl:Thing"])
    intern1 = root_aware(classes1)
    sub1 = read_tsv(data_dir / "onto_subclass_1.tsv", 2)
    disjoint = _optional(data_dir / "onto_disjoint.tsv", 2)
    for a, b in sub1 + disjoint:
        intern1(a), intern1(b)
    links1 = _memberships(data_dir / "memberships_1.tsv", kg1, intern1, stats, "memberships1_dropped")
    if shared_ontology:
        links2 = _memberships(data_dir / "memberships_2.tsv", kg2, intern1, stats, "memberships2_dropped")
        onto = _ontology(classes1, sub1, disjoint)
        m2 = MembershipSet(kg2.n_entities, links2)
    else:
        classes2 = Interner(["owl:Thing"])
        intern2 = root_aware(classes2)
        sub2 = read_tsv(data_dir / "onto_subclass_2.tsv", 2)
        for a, b in sub2:
            intern2(a), intern2(b)
        links2 = _memberships(data_dir / "memberships_2.tsv", kg2, intern2, stats, "memberships2_dropped")
        onto = _ontology(classes1, sub1, disjoint)
        o2 = _ontology(classes2, sub2)
        mapping = class_mapping_for(data_dir, onto, o2)
        onto, m2 = merge(onto, MembershipSet(kg2.n_entities, links2), mapping)
        stats["class_mappings"] = len(mapping)
    m1 = MembershipSet(kg1.n_entities, links1)

    fixed = [data_dir / f"ent_links_{s}.tsv" for s in SPLIT_NAMES]
    if all(p.is_file() for p in fixed):
        train, valid, test = (_links(p, kg1, kg2) for p in fixed)
        n_links = len(train) + len(valid) + len(test)
    else:
        pairs = _links(data_dir / "ent_links.tsv", kg1, kg2)
        pairs = list(dict.fromkeys(pairs))
        n_links = len(pairs)
        n_train, n_valid, _ = split_counts(n_links, split_ratio)
        order = np.random.default_rng(rng_seed).permutation(n_links)
        shuffled = [pairs[i] for i in order]
        train = shuffled[:n_train]
        valid = shuffled[n_train:n_train + n_valid]
        test = shuffled[n_train + n_valid:]

    stats.update(
        links=n_links,
        roots1=m1.n_root_default,
        roots2=m2.n_root_default,
        classes=onto.n_classes,
        subclass_pairs=len(onto.subclass_pairs),
        disjoint_pairs=len(onto.disjoint_pairs),
        shared_ontology=shared_ontology,
    )
    return AlignmentDataset(
        kg1, kg2, onto, m1, m2, MappingSet(train), MappingSet(valid), MappingSet(test), stats=stats
    )


def class_mapping_for(data_dir: Path, o1: Ontology, o2: Ontology) -> ClassMapping:
    """Routing over ``onto_equivalent.tsv`` overridden by ``class_mappings.tsv``."""
    equiv_path = data_dir / "onto_equivalent.tsv"
    system_path = data_dir / "class_mappings.tsv"
    if not equiv_path.is_file() and not system_path.is_file():
        raise DataError(
            f"separate ontologies need {equiv_path.name} and/or {system_path.name} in {data_dir}"
        )
    equiv = []
    for lineno, (c2, c1) in enumerate(_optional(equiv_path, 2), 1):
        try:
            equiv.append((o2.class_id(c2), o1.class_id(c1)))
        except KeyError as exc:
            raise DataError(f"{equiv_path}:{lineno}: {exc.args[0]}") from None
    mapping = route_fine_grained(o1, o2, equiv)
    if system_path.is_file():
        mapping = apply_system_mappings(mapping, read_class_mappings(system_path, o1, o2))
    return mapping


def merged_memberships(data_dir: str | Path) -> tuple[list[tuple[str, str]], ClassMapping, Ontology, Ontology]:
    """KG2 membership rows rewritten onto ontology 1, with the mapping used.

    Rows keep their file order; classes without a mapping become the root.
    """
    data_dir = Path(data_dir)
    classes1 = Interner(["owl:Thing"])
    intern1 = root_aware(classes1)
    sub1 = read_tsv(data_dir / "onto_subclass_1.tsv", 2)
    disjoint = _optional(data_dir / "onto_disjoint.tsv", 2)
    for a, b in sub1 + disjoint:
        intern1(a), intern1(b)
    o1 = _ontology(classes1, sub1, disjoint)

    classes2 = Interner(["owl:Thing"])
    intern2 = root_aware(classes2)
    sub2 = read_tsv(data_dir / "onto_subclass_2.tsv", 2)
    rows = read_tsv(data_dir / "memberships_2.tsv", 2)
    for a, b in sub2:
        intern2(a), intern2(b)
    for _, c in rows:
        intern2(c)
    o2 = _ontology(classes2, sub2)

    mapping = class_mapping_for(data_dir, o1, o2)
    out = [(e, o1.classes.resolve(mapping.get(o2.class_id(c), o1.root))) for e, c in rows]
    return out, mapping, o1, o2


# --- surface information -------------------------------------------------

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


@dataclass
class WordVectorTable:
    vectors: dict[str, np.ndarray]
    dim: int

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass
class NameEmbeddings:
    matrix: np.ndarray  # one L2-normalised row per name; zero where nothing was found
    found: np.ndarray  # bool mask

    @property
    def n_missing(self) -> int:
        return int((~self.found).sum())


def read_word_vectors(path: str | Path) -> WordVectorTable:
    """Text vectors, ``token v1 ... vd`` per line, optional ``count dim`` header."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if not parts or parts == [""]:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric vector component") from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise DataError(f"{path}:{lineno}: vector width {len(vec)} differs from {dim}")
            token = parts[0].lower()
            if token not in vectors:
                vectors[token] = vec
    if dim is None:
        raise DataError(f"{path}: no vectors")
    return WordVectorTable(vectors, dim)


def local_name(uri: str) -> str:
    for sep in ("/", "#", ":"):
        if sep in uri:
            uri = uri.rsplit(sep, 1)[1]
    return uri


def tokenize(name: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(name.lower()) if t]


def name_embeddings(table: WordVectorTable, names: Sequence[str]) -> NameEmbeddings:
    matrix = np.zeros((len(names), table.dim))
    found = np.zeros(len(names), dtype=bool)
    for i, name in enumerate(names):
        vecs = [table.vectors[t] for t in tokenize(local_name(name)) if t in table.vectors]
        if not vecs:
            continue
        v = np.mean(vecs, axis=0)
        norm = np.linalg.norm(v)
        if norm > 0:
            matrix[i] = v / norm
            found[i] = True
    return NameEmbeddings(matrix, found)


def load_word_vectors(path: str | Path, names: Sequence[str]) -> NameEmbeddings:
    """Averaged, normalised word vectors for each name; misses are flagged in ``found``."""
    return name_embeddings(read_word_vectors(path), names)

