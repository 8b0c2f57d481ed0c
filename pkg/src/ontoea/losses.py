"""Scoring functions and the five training losses with analytic gradients.

Every ``*_term`` function returns ``(loss, grads)`` where ``grads`` maps a
:class:`~ontoea.model.ModelParams` field name to a dense gradient array of the
same shape. Subgradients are taken as 0 at hinge kinks and at the origin of
the L2 norm.
"""

from __future__ import annotations

import numpy as np

from .model import HyperParams, ModelParams

LOG_CLAMP = 1e-8


def relu(x):
    return np.maximum(x, 0.0)


def _unit(v: np.ndarray, norm: np.ndarray) -> np.ndarray:
    safe = np.where(norm > 0, norm, 1.0)
    return np.where(norm[..., None] > 0, v / safe[..., None], 0.0)


def score_triple(h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """TransE distance ``||h + r - t||``."""
    return np.linalg.norm(np.asarray(h) + np.asarray(r) - np.asarray(t), axis=-1)


def score_subclass(c_h, c_t, W_o, b_o) -> np.ndarray:
    """``||tanh(c_h W_o + b_o) - c_t||``."""
    return np.linalg.norm(np.tanh(np.asarray(c_h) @ W_o + b_o) - np.asarray(c_t), axis=-1)


def score_membership(e, c, W_m, b_m) -> np.ndarray:
    """``||tanh(e W_m + b_m) - c||`` with the entity mapped into class space."""
    return np.linalg.norm(np.tanh(np.asarray(e) @ W_m + b_m) - np.asarray(c), axis=-1)


def score_alignment(e1, e2, W_a) -> np.ndarray:
    return np.linalg.norm(np.asarray(e1) @ W_a - np.asarray(e2), axis=-1)


def margin_limit(f_pos, f_neg, gamma1: float, gamma2: float, alpha: float):
    """Sum over (positive, negative) pairs of the margin hinge plus the limit hinge.

    ``f_pos`` has shape (B,), ``f_neg`` (B, k). Returns the loss and its
    derivatives with respect to ``f_pos`` and ``f_neg``.
    """
    f_pos = np.asarray(f_pos, dtype=np.float64).reshape(-1)
    f_neg = np.asarray(f_neg, dtype=np.float64).reshape(len(f_pos), -1)
    k = f_neg.shape[1]
    margin = gamma1 + f_pos[:, None] - f_neg
    limit = f_pos - gamma2
    loss = relu(margin).sum() + alpha * k * relu(limit).sum()
    active = (margin > 0).astype(np.float64)
    d_pos = active.sum(axis=1) + alpha * k * (limit > 0)
    d_neg = -active
    return float(loss), d_pos, d_neg


def loss_entity(f_pos, f_neg, hp: HyperParams) -> float:
    return margin_limit(f_pos, f_neg, hp.gamma1_e, hp.gamma2_e, hp.alpha_e)[0]


def loss_ontology(f_pos, f_neg, hp: HyperParams) -> float:
    return margin_limit(f_pos, f_neg, hp.gamma1_o, hp.gamma2_o, hp.alpha_o)[0]


def loss_membership(f_pos, f_neg, hp: HyperParams) -> float:
    return margin_limit(f_pos, f_neg, hp.gamma1_m, hp.gamma2_m, hp.alpha_m)[0]


# --- entity embedding -----------------------------------------------------

def entity_term(params: ModelParams, side: int, pos: np.ndarray, neg: np.ndarray, hp: HyperParams):
    """Translational loss over one KG. ``pos`` is (B, 3), ``neg`` is (B, k, 3)."""
    ent = params.ent(side)
    rel = params.rel1 if side == 1 else params.rel2
    v_pos = ent[pos[:, 0]] + rel[pos[:, 1]] - ent[pos[:, 2]]
    v_neg = ent[neg[..., 0]] + rel[neg[..., 1]] - ent[neg[..., 2]]
    f_pos = np.linalg.norm(v_pos, axis=-1)
    f_neg = np.linalg.norm(v_neg, axis=-1)
    loss, d_pos, d_neg = margin_limit(f_pos, f_neg, hp.gamma1_e, hp.gamma2_e, hp.alpha_e)

    g_pos = d_pos[:, None] * _unit(v_pos, f_pos)
    g_neg = (d_neg[..., None] * _unit(v_neg, f_neg)).reshape(-1, ent.shape[1])
    neg_flat = neg.reshape(-1, 3)
    g_ent = np.zeros_like(ent)
    g_rel = np.zeros_like(rel)
    np.add.at(g_ent, pos[:, 0], g_pos)
    np.add.at(g_ent, pos[:, 2], -g_pos)
    np.add.at(g_rel, pos[:, 1], g_pos)
    np.add.at(g_ent, neg_flat[:, 0], g_neg)
    np.add.at(g_ent, neg_flat[:, 2], -g_neg)
    np.add.at(g_rel, neg_flat[:, 1], g_neg)
    suffix = str(side)
    return loss, {"ent" + suffix: g_ent, "rel" + suffix: g_rel}


# --- tanh-transform scores (ontology and membership) ------------------------

def _tanh_forward(x, W, b, c):
    z = np.tanh(x @ W + b)
    v = z - c
    f = np.linalg.norm(v, axis=-1)
    return z, v, f


def _tanh_backward(x, W, z, v, f, d_f):
    g_v = d_f[:, None] * _unit(v, f)
    g_u = g_v * (1.0 - z * z)
    return g_u @ W.T, x.T @ g_u, g_u.sum(axis=0), -g_v  # d_x, d_W, d_b, d_c


def ontology_term(params: ModelParams, pos: np.ndarray, neg: np.ndarray, hp: HyperParams):
    """subClassOf loss. ``pos`` is (B, 2) of (child, parent); ``neg`` is (B, k, 2)."""
    cls, W, b = params.cls, params.W_o, params.b_o
    neg_flat = neg.reshape(-1, 2)
    pairs = np.concatenate([pos, neg_flat])
    x, c = cls[pairs[:, 0]], cls[pairs[:, 1]]
    z, v, f = _tanh_forward(x, W, b, c)
    n_pos = len(pos)
    loss, d_pos, d_neg = margin_limit(f[:n_pos], f[n_pos:].reshape(n_pos, -1), hp.gamma1_o, hp.gamma2_o, hp.alpha_o)
    d_f = np.concatenate([d_pos, d_neg.reshape(-1)])
    d_x, d_W, d_b, d_c = _tanh_backward(x, W, z, v, f, d_f)
    g_cls = np.zeros_like(cls)
    np.add.at(g_cls, pairs[:, 0], d_x)
    np.add.at(g_cls, pairs[:, 1], d_c)
    return loss, {"cls": g_cls, "W_o": d_W, "b_o": d_b}


def membership_term(params: ModelParams, side: int, pos: np.ndarray, neg: np.ndarray, hp: HyperParams):
    """Membership loss for one KG. ``pos`` is (B, 2) of (entity, class); ``neg`` is (B, k, 2)."""
    ent, cls, W, b = params.ent(side), params.cls, params.W_m, params.b_m
    pairs = np.concatenate([pos, neg.reshape(-1, 2)])
    x, c = ent[pairs[:, 0]], cls[pairs[:, 1]]
    z, v, f = _tanh_forward(x, W, b, c)
    n_pos = len(pos)
    loss, d_pos, d_neg = margin_limit(f[:n_pos], f[n_pos:].reshape(n_pos, -1), hp.gamma1_m, hp.gamma2_m, hp.alpha_m)
    d_f = np.concatenate([d_pos, d_neg.reshape(-1)])
    d_x, d_W, d_b, d_c = _tanh_backward(x, W, z, v, f, d_f)
    g_ent = np.zeros_like(ent)
    g_cls = np.zeros_like(cls)
    np.add.at(g_ent, pairs[:, 0], d_x)
    np.add.at(g_cls, pairs[:, 1], d_c)
    return loss, {f"ent{side}": g_ent, "cls": g_cls, "W_m": d_W, "b_m": d_b}


# --- confliction ----------------------------------------------------------

def cosine_matrix(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    u = x / np.where(norms > 0, norms, 1.0)[:, None]
    return u @ u.T, u, norms


def loss_confliction(conflict: np.ndarray, cls: np.ndarray) -> float:
    """``-sum_{i<j, m_ij>0} m_ij log(max(1 - cos(c_i, c_j), 1e-8))``."""
    return conflict_term_dense(conflict, cls)[0]


def conflict_term_dense(conflict: np.ndarray, cls: np.ndarray):
    """Value and class-embedding gradient of the confliction loss.

    ``conflict`` is the symmetric dense matrix; each unordered pair counts once.
    """
    n = len(cls)
    cos, u, norms = cosine_matrix(cls)
    iu = np.triu_indices(n, k=1)
    m = conflict[iu]
    support = m > 0
    d = 1.0 - cos[iu]
    clamped = d <= LOG_CLAMP
    loss = float(-(m[support] * np.log(np.maximum(d[support], LOG_CLAMP))).sum())

    # dL/dcos_ij for the unordered pair, zero where clamped or unsupported
    g = np.where(support & ~clamped, m / np.where(clamped, 1.0, d), 0.0)
    G = np.zeros((n, n))
    G[iu] = g
    G = G + G.T
    safe = np.where(norms > 0, norms, 1.0)[:, None]
    grad = (G @ u - (G * cos).sum(axis=1, keepdims=True) * u) / safe
    grad[norms == 0] = 0.0
    return loss, grad


def conflict_term(params: ModelParams, conflict: np.ndarray):
    loss, grad = conflict_term_dense(conflict, params.cls)
    return loss, {"cls": grad}


# --- alignment ------------------------------------------------------------

def loss_alignment(seeds: np.ndarray, params: ModelParams) -> float:
    """Sum of ``||e1 W_a - e2||`` over seed pairs."""
    seeds = np.asarray(seeds, dtype=np.int64).reshape(-1, 2)
    return float(score_alignment(params.ent1[seeds[:, 0]], params.ent2[seeds[:, 1]], params.W_a).sum())


def alignment_term(params: ModelParams, seeds: np.ndarray):
    seeds = np.asarray(seeds, dtype=np.int64).reshape(-1, 2)
    x = params.ent1[seeds[:, 0]]
    v = x @ params.W_a - params.ent2[seeds[:, 1]]
    f = np.linalg.norm(v, axis=-1)
    g_v = _unit(v, f)
    g1 = np.zeros_like(params.ent1)
    g2 = np.zeros_like(params.ent2)
    np.add.at(g1, seeds[:, 0], g_v @ params.W_a.T)
    np.add.at(g2, seeds[:, 1], -g_v)
    return float(f.sum()), {"ent1": g1, "ent2": g2, "W_a": x.T @ g_v}
