import numpy as np
import pytest

from ontoea.ccm import build_ccm
from ontoea.ingest import load_dataset
from ontoea.kg import Interner, MembershipSet, Ontology
from ontoea.model import HyperParams
from ontoea.toy import ToySpec, generate_toy

# settings used for every training run on generated toy data
DESK_HP = dict(
    dim_entity=32,
    dim_onto=32,
    learning_rate=0.1,
    max_iterations=200,
    eval_every=10,
    patience=5,
)


def desk_hp(**changes) -> HyperParams:
    return HyperParams(**{**DESK_HP, **changes})


def write_tsv(path, rows):
    path.write_text("".join("\t".join(r) + "\n" for r in rows), encoding="utf-8")


def random_ontology(rng: np.random.Generator, n_classes: int, p_parent=0.3, p_disjoint=0.1) -> Ontology:
    """Random DAG over handles 1..n-1 (parents always have smaller handles) plus random disjointness."""
    names = Interner(["owl:Thing"] + [f"c{i}" for i in range(1, n_classes)])
    sub = []
    for c in range(1, n_classes):
        for p in range(1, c):
            if rng.random() < p_parent:
                sub.append((c, p))
    dis = [
        (a, b)
        for a in range(n_classes)
        for b in range(a + 1, n_classes)
        if rng.random() < p_disjoint
    ]
    return Ontology(names, sub, dis)


def random_memberships(rng, n_entities: int, n_classes: int, max_per=2) -> MembershipSet:
    links = []
    for e in range(n_entities):
        k = int(rng.integers(0, min(max_per, n_classes) + 1))
        links += [(e, int(c)) for c in rng.choice(n_classes, size=k, replace=False)] if k else []
    return MembershipSet(n_entities, links)


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory):
    return generate_toy(tmp_path_factory.mktemp("toy") / "data", seed=0)


@pytest.fixture(scope="session")
def small_toy_dir(tmp_path_factory):
    spec = ToySpec(n_entities=60, n_relations=4)
    return generate_toy(tmp_path_factory.mktemp("small") / "data", seed=3, spec=spec)


@pytest.fixture(scope="session")
def toy_dataset(toy_dir):
    return load_dataset(toy_dir)


@pytest.fixture(scope="session")
def small_dataset(small_toy_dir):
    return load_dataset(small_toy_dir)


@pytest.fixture(scope="session")
def small_ccm(small_dataset):
    ds = small_dataset
    return build_ccm(ds.ontology, ds.memberships, ds.seeds_train)
