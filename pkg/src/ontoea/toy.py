"""Synthetic desk-scale benchmark in the ingest layout.

Two noisy copies of one random graph with renamed entities and relations, a
class tree with two top branches, declared-disjoint siblings (with the
disjointness inherited by subclasses) and per-KG memberships that are
sometimes coarser (branch class) or missing.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

BRANCHES = ("Person", "Organisation")


@dataclass(frozen=True)
class ToySpec:
    n_entities: int = 200
    n_relations: int = 8
    triples_per_entity: float = 3.0
    leaves_per_branch: int = 3
    disjoint_fraction: float = 1.0
    noise: float = 0.15
    coarse_fraction: float = 0.1
    untyped_fraction: float = 0.05


def _write(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerows(rows)


def _class_tree(spec: ToySpec):
    leaves = {b: [f"onto:{b}_{k + 1}" for k in range(spec.leaves_per_branch)] for b in BRANCHES}
    subclass = [(f"onto:{b}", "owl:Thing") for b in BRANCHES]
    for b in BRANCHES:
        subclass += [(leaf, f"onto:{b}") for leaf in leaves[b]]
    return leaves, subclass


def _disjoint_pairs(spec: ToySpec, leaves: dict, rng: np.random.Generator) -> list[tuple[str, str]]:
    below = {f"onto:{b}": [f"onto:{b}"] + leaves[b] for b in BRANCHES}
    for b in BRANCHES:
        for leaf in leaves[b]:
            below[leaf] = [leaf]
    sibling_groups = [[f"onto:{b}" for b in BRANCHES]] + [leaves[b] for b in BRANCHES]
    out = set()
    for group in sibling_groups:
        for a, b in itertools.combinations(group, 2):
            if rng.random() < spec.disjoint_fraction:
                for x in below[a]:
                    for y in below[b]:
                        out.add((min(x, y), max(x, y)))
    return sorted(out)


def _master_graph(spec: ToySpec, branch_of: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = spec.n_entities
    by_branch = [np.flatnonzero(branch_of == b) for b in range(len(BRANCHES))]
    # each relation has a head branch and a tail branch (a domain and a range)
    dom = rng.integers(len(BRANCHES), size=spec.n_relations)
    rng_ = rng.integers(len(BRANCHES), size=spec.n_relations)
    target = int(round(n * spec.triples_per_entity))
    triples = set()

    def add_from(h: int | None):
        r = int(rng.integers(spec.n_relations))
        if h is None:
            h = int(rng.choice(by_branch[dom[r]]))
        else:
            candidates = np.flatnonzero(dom == branch_of[h])
            r = int(rng.choice(candidates)) if len(candidates) else r
        t = int(rng.choice(by_branch[rng_[r]]))
        if t != h:
            triples.add((h, r, t))

    for e in range(n):  # every entity gets at least one outgoing triple
        while not any(tr[0] == e for tr in triples):
            add_from(e)
    guard = 0
    while len(triples) < target and guard < 50 * target:
        add_from(None)
        guard += 1
    return np.array(sorted(triples), dtype=np.int64)


def _noisy_copy(master: np.ndarray, n: int, noise: float, rng: np.random.Generator) -> np.ndarray:
    keep = rng.random(len(master)) >= noise
    kept = master[keep]
    present = np.zeros(n, dtype=bool)
    present[kept[:, 0]] = present[kept[:, 2]] = True
    restore = [i for i, (h, _, t) in enumerate(master.tolist()) if not keep[i] and (not present[h] or not present[t])]
    for i in restore:
        h, _, t = master[i]
        if not (present[h] and present[t]):
            keep[i] = True
            present[h] = present[t] = True
    return master[keep]


def _memberships(leaf_of, branch_of, leaves, spec: ToySpec, rng: np.random.Generator):
    rows = []
    for e in range(spec.n_entities):
        u = rng.random()
        branch = BRANCHES[branch_of[e]]
        if u < spec.untyped_fraction:
            continue
        if u < spec.untyped_fraction + spec.coarse_fraction:
            rows.append((e, f"onto:{branch}"))
        else:
            rows.append((e, leaves[branch][leaf_of[e]]))
    return rows


def generate_toy(out_dir: str | Path, seed: int = 0, spec: ToySpec | None = None) -> Path:
    """Write a synthetic benchmark; identical ``seed`` and ``spec`` give byte-identical files."""
    spec = spec or ToySpec()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n = spec.n_entities

    leaves, subclass = _class_tree(spec)
    branch_of = rng.permutation(np.arange(n) % len(BRANCHES))
    leaf_of = rng.integers(spec.leaves_per_branch, size=n)
    master = _master_graph(spec, branch_of, rng)

    perm_e = rng.permutation(n)
    perm_r = rng.permutation(spec.n_relations)
    name1 = [f"kg1:e{i:04d}" for i in range(n)]
    name2 = [f"kg2:x{perm_e[i]:04d}" for i in range(n)]
    rel1 = [f"kg1:r{j}" for j in range(spec.n_relations)]
    rel2 = [f"kg2:p{perm_r[j]}" for j in range(spec.n_relations)]

    for side, names, rels in ((1, name1, rel1), (2, name2, rel2)):
        kg = _noisy_copy(master, n, spec.noise, rng)
        kg = kg[rng.permutation(len(kg))]
        _write(out / f"rel_triples_{side}.tsv", [(names[h], rels[r], names[t]) for h, r, t in kg.tolist()])
        members = _memberships(leaf_of, branch_of, leaves, spec, rng)
        _write(out / f"memberships_{side}.tsv", [(names[e], c) for e, c in members])

    _write(out / "onto_subclass_1.tsv", subclass)
    _write(out / "onto_disjoint.tsv", _disjoint_pairs(spec, leaves, rng))
    links = rng.permutation(n)
    _write(out / "ent_links.tsv", [(name1[i], name2[i]) for i in links.tolist()])
    with open(out / "toy_spec.txt", "w", encoding="utf-8") as fh:
        fh.write(f"seed={seed}\n")
        for key, value in asdict(spec).items():
            fh.write(f"{key}={value}\n")
    return out
