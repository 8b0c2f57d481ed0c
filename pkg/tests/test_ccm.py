import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_memberships, random_ontology
from ontoea.ccm import ClassConflictMatrix, ancestor_set, build_ccm, is_conflicted
from ontoea.kg import MappingSet, MembershipSet, Ontology


def oracle_ancestors(o: Ontology, c: int) -> set[int]:
    """Every class on some path from c upwards, by breadth-first search over parent links."""
    seen, frontier = {c}, [c]
    while frontier:
        frontier = [p for x in frontier for p in o.parents[x] if p not in seen]
        seen.update(frontier)
    return seen


def path_ancestors(o: Ontology, c: int) -> set[int]:
    """Same set by enumerating the paths themselves (small ontologies only)."""
    def paths(x):
        if not o.parents[x]:
            return [[x]]
        return [[x] + p for parent in o.parents[x] for p in paths(parent)]

    return set(itertools.chain.from_iterable(paths(c)))


def oracle_ccm(o: Ontology, m1: MembershipSet, m2: MembershipSet, seeds: MappingSet) -> np.ndarray:
    """Apply the four rules to each pair independently, first match wins."""
    n = o.n_classes
    members = [set() for _ in range(n)]
    for side, m in (("1", m1), ("2", m2)):
        for e in range(m.n_entities):
            for c in m.classes_of(e):
                members[c].add((side, e))
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                out[i, j] = 0.0
            elif (min(i, j), max(i, j)) in o.disjoint_pairs:
                out[i, j] = 1.0
            elif members[i] & members[j] or any(
                (i in m1.classes_of(a) and j in m2.classes_of(b)) or (j in m1.classes_of(a) and i in m2.classes_of(b))
                for a, b in seeds
            ):
                out[i, j] = 0.0
            else:
                si, sj = oracle_ancestors(o, i), oracle_ancestors(o, j)
                out[i, j] = 1.0 - len(si & sj) / len(si | sj)
    return out


def random_instance(seed: int):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 51))
    o = random_ontology(rng, n, p_parent=float(rng.uniform(0.02, 0.3)), p_disjoint=float(rng.uniform(0, 0.2)))
    n1, n2 = int(rng.integers(1, 30)), int(rng.integers(1, 30))
    m1 = random_memberships(rng, n1, n)
    m2 = random_memberships(rng, n2, n)
    k = int(rng.integers(0, min(n1, n2) + 1))
    seeds = MappingSet(zip(rng.permutation(n1)[:k].tolist(), rng.permutation(n2)[:k].tolist()))
    return o, m1, m2, seeds


def four_class():
    # C -> B -> root, D -> root
    return Ontology.from_uris([("B", "owl:Thing"), ("C", "B"), ("D", "owl:Thing")])


def test_ancestor_set_examples():
    o = four_class()
    assert ancestor_set(o.root, o) == {o.root}
    assert ancestor_set(o.class_id("C"), o) == {o.class_id(x) for x in ("C", "B", "owl:Thing")}
    d = Ontology.from_uris([("A", "owl:Thing"), ("B", "A"), ("C", "A"), ("D", "B"), ("D", "C")])
    assert ancestor_set(d.class_id("D"), d) == {d.class_id(x) for x in "DBCA"} | {d.root}
    assert ancestor_set(d.class_id("D"), d) == path_ancestors(d, d.class_id("D"))


def test_jaccard_example_and_threshold():
    o = four_class()
    m = MembershipSet(2, [(0, o.class_id("C")), (1, o.class_id("D"))])
    ccm = build_ccm(o, (m, m), MappingSet())
    assert ccm(o.class_id("C"), o.class_id("D")) == 0.75
    # e1 typed C in KG1, e2 typed D in KG2
    m1 = MembershipSet(1, [(0, o.class_id("C"))])
    m2 = MembershipSet(1, [(0, o.class_id("D"))])
    ccm = build_ccm(o, (m1, m2), MappingSet())
    assert not is_conflicted(0, 0, (m1, m2), ccm, tau=0.9)
    assert is_conflicted(0, 0, (m1, m2), ccm, tau=0.7)


def test_rule_examples():
    o = Ontology.from_uris([("Person", "owl:Thing"), ("Organization", "owl:Thing")], [("Person", "Organization")])
    p, org = o.class_id("Person"), o.class_id("Organization")
    # entity 0 is typed with both classes: rule 2 still wins over rule 3
    m = MembershipSet(1, [(0, p), (0, org)])
    ccm = build_ccm(o, (m, m), MappingSet())
    assert ccm(p, org) == 1.0 and ccm(p, p) == 0.0
    m1, m2 = MembershipSet(1, [(0, p)]), MembershipSet(1, [(0, org)])
    assert is_conflicted(0, 0, (m1, m2), build_ccm(o, (m1, m2), MappingSet()), tau=0.9)
    shared = MembershipSet(1, [(0, p)])
    assert not is_conflicted(0, 0, (shared, shared), ccm, tau=1e-9)


def test_seed_links_zero_in_either_orientation():
    o = Ontology.from_uris([("X", "owl:Thing"), ("Y", "owl:Thing")])
    x, y = o.class_id("X"), o.class_id("Y")
    m1 = MembershipSet(2, [(0, y), (1, x)])
    m2 = MembershipSet(2, [(0, x), (1, y)])
    assert build_ccm(o, (m1, m2), MappingSet())(x, y) > 0
    assert build_ccm(o, (m1, m2), MappingSet([(0, 0)]))(x, y) == 0.0
    assert build_ccm(o, (m1, m2), MappingSet([(1, 1)]))(x, y) == 0.0


def test_chain_monotonicity():
    names = [f"c{i}" for i in range(1, 8)]
    sub = [(names[0], "owl:Thing")] + [(names[i], names[i - 1]) for i in range(1, len(names))]
    o = Ontology.from_uris(sub)
    empty = MembershipSet(0, [])
    ccm = build_ccm(o, (empty, empty), MappingSet())
    ids = [o.class_id(n) for n in names]
    for i in range(len(ids)):
        row = [ccm(ids[i], ids[j]) for j in range(i, len(ids))]
        assert all(a <= b for a, b in zip(row, row[1:]))


def test_packed_storage():
    dense = np.array([[0, 0.2, 0.3], [0.2, 0, 0.4], [0.3, 0.4, 0]])
    ccm = ClassConflictMatrix.from_dense(dense)
    assert ccm.values.tolist() == [0.2, 0.3, 0.4]
    assert ccm(2, 1) == ccm(1, 2) == 0.4
    np.testing.assert_array_equal(ccm.dense(), dense)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ccm_matches_oracle_and_invariants(seed):
    o, m1, m2, seeds = random_instance(seed)
    ccm = build_ccm(o, (m1, m2), seeds)
    dense = ccm.dense()
    expected = oracle_ccm(o, m1, m2, seeds)
    assert np.array_equal(dense, expected)
    assert np.array_equal(dense, dense.T)
    assert (np.diag(dense) == 0).all()
    assert dense.min() >= 0 and dense.max() <= 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_jaccard_rule_below_one(seed):
    rng = np.random.default_rng(seed)
    o = random_ontology(rng, int(rng.integers(2, 30)), p_disjoint=0.0)
    empty = MembershipSet(0, [])
    dense = build_ccm(o, (empty, empty), MappingSet()).dense()
    anc = [o.ancestors(c) for c in range(o.n_classes)]
    for i in range(o.n_classes):
        for j in range(o.n_classes):
            assert 0 <= dense[i, j] < 1
            assert (dense[i, j] == 0) == (anc[i] == anc[j])


def test_dump(tmp_path):
    o = four_class()
    empty = MembershipSet(0, [])
    ccm = build_ccm(o, (empty, empty), MappingSet())
    ccm.dump(tmp_path / "ccm.tsv", o)
    lines = (tmp_path / "ccm.tsv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 6
    assert "C\tD\t0.75" in lines


def test_query_out_of_range():
    with pytest.raises(IndexError):
        ClassConflictMatrix(2, np.array([0.5]))(0, 2)
