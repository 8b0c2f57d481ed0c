"""Dense AdaGrad with per-parameter squared-gradient accumulators."""

from __future__ import annotations

import numpy as np

from .model import ModelParams

EPS = 1e-8


def adagrad_step(theta: np.ndarray, grad: np.ndarray, acc: np.ndarray, lr: float, eps: float = EPS) -> None:
    """In place: ``acc += g**2; theta -= lr * g / (sqrt(acc) + eps)``."""
    acc += grad * grad
    theta -= lr * grad / (np.sqrt(acc) + eps)


class AdaGrad:
    def __init__(self, lr: float, eps: float = EPS):
        self.lr = lr
        self.eps = eps
        self.state: dict[str, np.ndarray] = {}

    def accumulator(self, name: str, like: np.ndarray) -> np.ndarray:
        acc = self.state.get(name)
        if acc is None:
            acc = self.state[name] = np.zeros_like(like)
        return acc

    def step(self, params: ModelParams, grads: dict[str, np.ndarray], scale: float = 1.0) -> dict[str, np.ndarray]:
        """Apply ``scale * grads``. Returns, for embedding tables, the rows that moved."""
        touched = {}
        for name, g in grads.items():
            theta = getattr(params, name)
            acc = self.accumulator(name, theta)
            if scale != 1.0:
                g = g * scale
            if theta.ndim == 2 and name in ("ent1", "ent2", "rel1", "rel2", "cls"):
                rows = np.flatnonzero(np.any(g != 0, axis=1))
                if len(rows) == 0:
                    continue
                sub_theta, sub_acc = theta[rows], acc[rows]
                adagrad_step(sub_theta, g[rows], sub_acc, self.lr, self.eps)
                theta[rows], acc[rows] = sub_theta, sub_acc
                touched[name] = rows
            else:
                adagrad_step(theta, g, acc, self.lr, self.eps)
        return touched
