import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ontoea import losses
from ontoea.model import HyperParams, ModelParams

H = 1e-5
REL_TOL = 1e-4
DIM = 8


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def numeric_grad(f, params: ModelParams, name: str) -> np.ndarray:
    """Central differences of the scalar f(params) over every entry of one parameter array."""
    theta = getattr(params, name)
    grad = np.zeros_like(theta)
    it = np.nditer(theta, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = theta[idx]
        theta[idx] = old + H
        up = f(params)
        theta[idx] = old - H
        down = f(params)
        theta[idx] = old
        grad[idx] = (up - down) / (2 * H)
    return grad


def random_params(rng, n_ent=6, n_rel=3, n_cls=5, d=DIM) -> ModelParams:
    def mat(*shape, scale=1.0):
        return rng.normal(scale=scale, size=shape)

    return ModelParams(
        ent1=mat(n_ent, d, scale=0.5), ent2=mat(n_ent, d, scale=0.5),
        rel1=mat(n_rel, d, scale=0.5), rel2=mat(n_rel, d, scale=0.5),
        cls=mat(n_cls, d, scale=0.5),
        W_o=mat(d, d, scale=0.4), b_o=mat(d, scale=0.1),
        W_m=mat(d, d, scale=0.4), b_m=mat(d, scale=0.1),
        W_a=mat(d, d, scale=0.4),
    )


def random_hp(rng) -> HyperParams:
    # smaller limits than the defaults so the limit hinge is active in some draws
    g2 = float(rng.uniform(0.5, 2.0))
    return HyperParams(
        dim_entity=DIM, dim_onto=DIM,
        gamma1_e=0.3, gamma2_e=g2, alpha_e=0.2,
        gamma1_o=0.3, gamma2_o=g2, alpha_o=0.3,
        gamma1_m=0.3, gamma2_m=g2, alpha_m=0.1,
    )


def check(term, params, names):
    loss, grads = term(params)
    assert math.isfinite(loss)
    for name in names:
        fd = numeric_grad(lambda p: term(p)[0], params, name)
        err = rel_error(grads[name], fd)
        assert err < REL_TOL, f"{name}: relative error {err:.2e}"


# --- examples ---------------------------------------------------------------

def test_score_triple_examples():
    assert losses.score_triple([0.5, 0.5], [0.1, -0.2], [0.6, 0.3]) == pytest.approx(0.0, abs=1e-12)
    assert losses.score_triple(np.zeros(3), np.zeros(3), np.zeros(3)) == 0.0
    assert losses.score_triple([1, 0], [0, 1], [0, 0]) == pytest.approx(math.sqrt(2))


HP = HyperParams()


@pytest.mark.parametrize("fn", [losses.loss_entity, losses.loss_ontology, losses.loss_membership])
def test_hinge_examples(fn):
    assert fn([0.0], [[5.0]], HP) == 0.0
    assert fn([1.0], [[1.0]], HP) == pytest.approx(0.01)


def test_hinge_limit_examples():
    assert losses.loss_entity([3.0], [[3.0]], HP) == pytest.approx(0.21)
    assert losses.loss_ontology([2.5], [[2.5]], HP) == pytest.approx(0.11)
    assert losses.loss_membership([2.5], [[2.5]], HP) == pytest.approx(0.11)


@given(
    st.lists(st.floats(0, 5), min_size=1, max_size=5),
    st.floats(0, 5),
    st.floats(-1, 1),
)
def test_hinges_non_negative_and_shift_property(f_pos, f_neg0, shift):
    f_pos = np.array(f_pos)
    f_neg = np.full((len(f_pos), 2), f_neg0)
    loss, _, _ = losses.margin_limit(f_pos, f_neg, 0.01, 2.0, 0.2)
    assert loss >= 0
    # the margin part depends only on the difference of the two scores
    margin = lambda fp, fn: losses.margin_limit(fp, fn, 0.01, 2.0, 0.0)[0]
    assert margin(f_pos + shift, f_neg + shift) == pytest.approx(margin(f_pos, f_neg), abs=1e-9)


def test_score_subclass_examples():
    d = 4
    zero = np.zeros((d, d))
    assert losses.score_subclass(np.ones(d), np.zeros(d), zero, np.zeros(d)) == 0.0
    c_t = np.eye(d)[0]
    assert losses.score_subclass(np.zeros(d), c_t, np.eye(d), np.zeros(d)) == pytest.approx(1.0)


def test_tanh_stage_range():
    rng = np.random.default_rng(0)
    x = rng.normal(scale=10, size=(50, 4))
    z = np.tanh(x @ rng.normal(size=(4, 4)) + rng.normal(size=4))
    assert np.all(np.abs(z) <= 1)


def test_score_membership_examples():
    assert losses.score_membership(np.ones(3), np.zeros(2), np.zeros((3, 2)), np.zeros(2)) == 0.0
    assert losses.score_membership(np.ones(3), np.array([0.6, 0.8]), np.zeros((3, 2)), np.zeros(2)) == pytest.approx(1.0)
    f = losses.score_membership(np.array([10.0, 0.0]), np.array([1.0, 0.0]), np.eye(2), np.zeros(2))
    assert f <= 1e-4


def test_confliction_examples():
    cls = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert losses.loss_confliction(np.zeros((2, 2)), cls) == 0.0
    m = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert losses.loss_confliction(m, cls) == pytest.approx(-math.log(2))
    same = np.array([[1.0, 2.0], [1.0, 2.0]])
    assert losses.loss_confliction(m, same) == pytest.approx(-math.log(1e-8))
    assert math.isfinite(losses.conflict_term_dense(m, same)[1].sum())


def test_alignment_examples():
    p = random_params(np.random.default_rng(0), d=2)
    p.W_a = np.eye(2)
    p.ent2[:] = p.ent1
    assert losses.loss_alignment(np.array([[0, 0], [1, 1]]), p) == 0.0
    p.ent1[0] = [1.0, 0.0]
    p.ent2[0] = [0.0, 0.0]
    assert losses.loss_alignment(np.array([[0, 0]]), p) == pytest.approx(1.0)
    p.ent1[1] = [0.0, 0.0]
    p.ent2[1] = [0.0, 2.0]
    assert losses.loss_alignment(np.array([[0, 0], [1, 1]]), p) == pytest.approx(3.0)


# --- gradients --------------------------------------------------------------

SEEDS = range(10)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("side", [1, 2])
def test_entity_gradient(seed, side):
    rng = np.random.default_rng(seed)
    params, hp = random_params(rng), random_hp(rng)
    pos = np.column_stack([rng.integers(6, size=4), rng.integers(3, size=4), rng.integers(6, size=4)])
    neg = np.stack([pos] * 3, axis=1).copy()
    neg[..., 0] = rng.integers(6, size=(4, 3))
    neg[:, 1:, 2] = rng.integers(6, size=(4, 2))
    check(lambda p: losses.entity_term(p, side, pos, neg, hp), params, [f"ent{side}", f"rel{side}"])


@pytest.mark.parametrize("seed", SEEDS)
def test_ontology_gradient(seed):
    rng = np.random.default_rng(100 + seed)
    params, hp = random_params(rng), random_hp(rng)
    pos = rng.integers(5, size=(4, 2))
    neg = rng.integers(5, size=(4, 2, 2))
    check(lambda p: losses.ontology_term(p, pos, neg, hp), params, ["cls", "W_o", "b_o"])


@pytest.mark.parametrize("seed", SEEDS)
def test_membership_gradient(seed):
    rng = np.random.default_rng(200 + seed)
    params, hp = random_params(rng), random_hp(rng)
    pos = np.column_stack([rng.integers(6, size=5), rng.integers(5, size=5)])
    neg = np.stack([pos] * 2, axis=1).copy()
    neg[..., 1] = rng.integers(5, size=(5, 2))
    check(lambda p: losses.membership_term(p, 2, pos, neg, hp), params, ["ent2", "cls", "W_m", "b_m"])


@pytest.mark.parametrize("seed", SEEDS)
def test_confliction_gradient(seed):
    rng = np.random.default_rng(300 + seed)
    params = random_params(rng)
    n = params.cls.shape[0]
    m = np.triu(rng.uniform(size=(n, n)) * (rng.random((n, n)) < 0.7), k=1)
    m = m + m.T
    check(lambda p: losses.conflict_term(p, m), params, ["cls"])


@pytest.mark.parametrize("seed", SEEDS)
def test_alignment_gradient(seed):
    rng = np.random.default_rng(400 + seed)
    params = random_params(rng)
    seeds = np.column_stack([rng.permutation(6)[:4], rng.permutation(6)[:4]])
    check(lambda p: losses.alignment_term(p, seeds), params, ["ent1", "ent2", "W_a"])


def test_confliction_gradient_pushes_conflicting_classes_apart():
    cls = np.array([[1.0, 0.2], [0.9, 0.3]])
    m = np.array([[0.0, 1.0], [1.0, 0.0]])
    loss, grad = losses.conflict_term_dense(m, cls)
    cos_before = losses.cosine_matrix(cls)[0][0, 1]
    cos_after = losses.cosine_matrix(cls - 0.01 * grad)[0][0, 1]
    assert cos_after < cos_before
