from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_ontology
from ontoea.errors import DataError
from ontoea.ingest import class_mapping_for, load_dataset, merged_memberships, read_tsv
from ontoea.kg import MembershipSet, Ontology
from ontoea.merge import (
    ClassMapping,
    apply_system_mappings,
    merge,
    read_class_mappings,
    route_fine_grained,
    write_class_mappings,
)

FIXTURES = Path(__file__).parent / "fixtures"


def load_pair(d: Path):
    o1 = Ontology.from_uris(read_tsv(d / "onto_subclass_1.tsv", 2))
    o2 = Ontology.from_uris(read_tsv(d / "onto_subclass_2.tsv", 2))
    return o1, o2


def expected_table(d: Path):
    rows = []
    for line in (d / "expected_mapping.tsv").read_text(encoding="utf-8").splitlines():
        if line.startswith("#") or not line.strip():
            continue
        src, dst, prov, _ = line.split("\t")
        rows.append((src, dst, prov))
    return rows


def brute_force_route(o1: Ontology, o2: Ontology, equiv):
    """Enumerate every walk in the joined graph; depth is the longest o1 path to the root."""
    n1 = o1.n_classes
    nodes = [("1", c) for c in range(n1)] + [("2", c) for c in range(o2.n_classes)]
    succ = {node: set() for node in nodes}
    for c in range(n1):
        succ[("1", c)] |= {("1", p) for p in o1.parents[c]}
    for c in range(o2.n_classes):
        succ[("2", c)] |= {("2", p) for p in o2.parents[c]}
    for c2, c1 in equiv:
        succ[("2", c2)].add(("1", c1))
    # transitive closure by repeated relaxation
    reach = {node: set(succ[node]) for node in nodes}
    changed = True
    while changed:
        changed = False
        for node in nodes:
            extra = set().union(*(reach[s] for s in reach[node])) - reach[node] if reach[node] else set()
            if extra:
                reach[node] |= extra
                changed = True

    def all_paths_len(c):
        if c == o1.root:
            return [0]
        return [1 + x for p in o1.parents[c] for x in all_paths_len(p)]

    depth = {c: max(all_paths_len(c)) for c in range(n1)}
    out = {}
    for c in range(o2.n_classes):
        if c == o2.root:
            out[c] = o1.root
            continue
        hits = sorted(x for side, x in reach[("2", c)] if side == "1")
        if not hits:
            out[c] = o1.root
            continue
        best = max(depth[h] for h in hits)
        out[c] = min(h for h in hits if depth[h] == best)
    return out


def test_routing_fixture_matches_hand_table():
    d = FIXTURES / "routing"
    o1, o2 = load_pair(d)
    assert o1.n_classes == 10 and o2.n_classes == 10
    equiv = [(o2.class_id(a), o1.class_id(b)) for a, b in read_tsv(d / "onto_equivalent.tsv", 2)]
    assert len(equiv) == 3
    routed = route_fine_grained(o1, o2, equiv)
    system = read_class_mappings(d / "class_mappings.tsv", o1, o2)
    final = apply_system_mappings(routed, system)
    got = [(o2.classes.resolve(s), o1.classes.resolve(t), p) for s, t, p in final.items()]
    assert sorted(got) == sorted(expected_table(d))


def test_routing_fixture_matches_brute_force():
    d = FIXTURES / "routing"
    o1, o2 = load_pair(d)
    equiv = [(o2.class_id(a), o1.class_id(b)) for a, b in read_tsv(d / "onto_equivalent.tsv", 2)]
    routed = route_fine_grained(o1, o2, equiv)
    assert dict(routed.pairs) == brute_force_route(o1, o2, equiv)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_routing_random_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    o1 = random_ontology(rng, int(rng.integers(2, 9)), p_disjoint=0.0)
    o2 = random_ontology(rng, int(rng.integers(2, 9)), p_disjoint=0.0)
    equiv = [
        (int(rng.integers(o2.n_classes)), int(rng.integers(o1.n_classes)))
        for _ in range(int(rng.integers(0, 5)))
    ]
    routed = route_fine_grained(o1, o2, equiv)
    assert len(routed) == o2.n_classes  # total over ontology 2
    assert dict(routed.pairs) == brute_force_route(o1, o2, equiv)
    assert routed == route_fine_grained(o1, o2, equiv)  # deterministic


def test_agent_person_prefers_deeper():
    o1 = Ontology.from_uris([("Agent", "owl:Thing"), ("Person", "Agent"), ("Place", "owl:Thing")])
    o2 = Ontology.from_uris([("Being", "owl:Thing"), ("Human", "Being")])
    equiv = [(o2.class_id("Being"), o1.class_id("Agent")), (o2.class_id("Human"), o1.class_id("Person"))]
    routed = route_fine_grained(o1, o2, equiv)
    assert routed.get(o2.class_id("Human")) == o1.class_id("Person")
    assert routed.get(o2.class_id("Being")) == o1.class_id("Agent")


def test_single_reachable_class_and_unreachable_root():
    o1 = Ontology.from_uris([("A1", "owl:Thing"), ("B1", "A1")])
    o2 = Ontology.from_uris([("A2", "owl:Thing"), ("Z2", "owl:Thing")])
    routed = route_fine_grained(o1, o2, [(o2.class_id("A2"), o1.class_id("A1"))])
    assert routed.get(o2.class_id("A2")) == o1.class_id("A1")
    assert routed.get(o2.class_id("Z2")) == o1.root


def test_depth_tie_breaks_on_smallest_handle():
    o1 = Ontology.from_uris([("X", "owl:Thing"), ("Y", "owl:Thing")])
    o2 = Ontology.from_uris([("C", "owl:Thing")])
    c = o2.class_id("C")
    routed = route_fine_grained(o1, o2, [(c, o1.class_id("Y")), (c, o1.class_id("X"))])
    assert routed.get(c) == min(o1.class_id("X"), o1.class_id("Y"))


def test_apply_system_examples():
    base = ClassMapping([(1, 5, "routing")])
    assert apply_system_mappings(base, ClassMapping([(1, 6, "system")])).items() == [(1, 6, "system")]
    assert apply_system_mappings(base, ClassMapping()).items() == [(1, 5, "routing")]
    assert apply_system_mappings(ClassMapping(), ClassMapping([(2, 3, "manual")])).items() == [(2, 3, "manual")]


def test_mapping_is_a_function():
    m = ClassMapping([(1, 2, "routing")])
    with pytest.raises(DataError):
        m.add(1, 3)


def test_merge_rewrites_memberships():
    o1 = Ontology.from_uris([("Person", "owl:Thing")])
    person = o1.class_id("Person")
    m2 = MembershipSet(3, [(0, 1), (1, 2)])
    _, merged = merge(o1, m2, ClassMapping([(1, person, "routing")]))
    assert merged.classes_of(0) == (person,)
    assert merged.classes_of(1) == (o1.root,)
    assert merged.classes_of(2) == (o1.root,)
    _, empty = merge(o1, m2, ClassMapping())
    assert all(empty.classes_of(e) == (o1.root,) for e in range(3))
    assert set(empty.links[:, 1].tolist()) <= set(range(o1.n_classes))


def test_merged_memberships_match_hand_merge():
    d = FIXTURES / "merge6"
    rows, mapping, o1, o2 = merged_memberships(d)
    assert o1.n_classes == 6
    assert rows == read_tsv(d / "expected_memberships_2.tsv", 2)
    assert mapping.provenance(o2.class_id("x:Spot")) == "system"


def test_load_dataset_merges_in_memory():
    ds = load_dataset(FIXTURES / "merge6")
    assert not ds.stats["shared_ontology"]
    onto = ds.ontology
    expect = dict(read_tsv(FIXTURES / "merge6" / "expected_memberships_2.tsv", 2))
    for name, cls in expect.items():
        e = ds.kg2.entities.lookup(name)
        assert ds.memberships2.classes_of(e) == (onto.class_id(cls),)


def test_class_mapping_needs_inputs(tmp_path):
    o1, o2 = load_pair(FIXTURES / "routing")
    with pytest.raises(DataError, match="onto_equivalent.tsv"):
        class_mapping_for(tmp_path, o1, o2)


def test_class_mapping_file_round_trip(tmp_path):
    d = FIXTURES / "routing"
    o1, o2 = load_pair(d)
    mapping = class_mapping_for(d, o1, o2)
    write_class_mappings(tmp_path / "m.tsv", mapping, o1, o2)
    assert read_class_mappings(tmp_path / "m.tsv", o1, o2) == mapping
