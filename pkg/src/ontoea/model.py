"""Hyperparameters, learnable parameters, initialisation and checkpoints."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class HyperParams:
    dim_entity: int = 300
    dim_onto: int = 300
    gamma1_e: float = 0.01
    gamma2_e: float = 2.0
    alpha_e: float = 0.2
    gamma1_o: float = 0.01
    gamma2_o: float = 2.0
    alpha_o: float = 0.2
    gamma1_m: float = 0.01
    gamma2_m: float = 2.0
    alpha_m: float = 0.2
    lambda1: float = 1.0  # confliction loss weight
    lambda2: float = 1.0  # membership loss weight
    lambda3: float = 5.0  # alignment loss weight
    beta: float = 0.5
    learning_rate: float = 0.01
    batch_entity: int = 4500
    batch_onto: int = 64
    eps_trunc: float = 0.9
    neg_per_pos: int = 10
    neg_per_pos_onto: int = 1
    neighbor_refresh: int = 5
    max_iterations: int = 1000
    patience: int = 3
    eval_every: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        for name in ("gamma1_e", "gamma2_e", "gamma1_o", "gamma2_o", "gamma1_m", "gamma2_m"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be > 0")
        for name in ("alpha_e", "alpha_o", "alpha_m", "beta"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                out.append(f"{name} must lie in [0, 1]")
        for name in ("dim_entity", "dim_onto", "batch_entity", "batch_onto", "neg_per_pos",
                     "neg_per_pos_onto", "neighbor_refresh", "eval_every", "patience"):
            if getattr(self, name) <= 0:
                out.append(f"{name} must be > 0")
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                out.append(f"{name} must be >= 0")
        if not 0.0 <= self.eps_trunc < 1.0:
            out.append("eps_trunc must lie in [0, 1)")
        if not self.learning_rate > 0:
            out.append("learning_rate must be > 0")
        if self.max_iterations < 0:
            out.append("max_iterations must be >= 0")
        return out

    def replace(self, **changes) -> "HyperParams":
        return replace(self, **changes)

    @classmethod
    def field_types(cls) -> dict[str, type]:
        return {f.name: type(f.default) for f in fields(cls)}


PARAM_NAMES = ("ent1", "ent2", "rel1", "rel2", "cls", "W_o", "b_o", "W_m", "b_m", "W_a")


@dataclass
class ModelParams:
    """All learnable tensors. Row-vector convention: a transform applies as ``x @ W``."""

    ent1: np.ndarray
    ent2: np.ndarray
    rel1: np.ndarray
    rel2: np.ndarray
    cls: np.ndarray
    W_o: np.ndarray
    b_o: np.ndarray
    W_m: np.ndarray
    b_m: np.ndarray
    W_a: np.ndarray

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.arrays().items()})

    def ent(self, side: int) -> np.ndarray:
        return self.ent1 if side == 1 else self.ent2

    def is_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.arrays().values())


def normalize_rows(x: np.ndarray, rows: np.ndarray | None = None) -> None:
    """In-place L2 row normalisation; zero rows stay zero."""
    view = x if rows is None else x[rows]
    norms = np.linalg.norm(view, axis=1, keepdims=True)
    view = view / np.where(norms > 0, norms, 1.0)
    if rows is None:
        x[...] = view
    else:
        x[rows] = view


def _uniform_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    bound = 6.0 / np.sqrt(d)
    x = rng.uniform(-bound, bound, size=(n, d))
    normalize_rows(x)
    return x


def init_params(
    n_ent1: int,
    n_ent2: int,
    n_rel1: int,
    n_rel2: int,
    n_cls: int,
    hp: HyperParams,
    rng: np.random.Generator,
) -> ModelParams:
    de, do = hp.dim_entity, hp.dim_onto
    return ModelParams(
        ent1=_uniform_rows(rng, n_ent1, de),
        ent2=_uniform_rows(rng, n_ent2, de),
        rel1=_uniform_rows(rng, n_rel1, de),
        rel2=_uniform_rows(rng, n_rel2, de),
        cls=_uniform_rows(rng, n_cls, do),
        W_o=np.eye(do),
        b_o=np.zeros(do),
        W_m=np.eye(de, do),
        b_m=np.zeros(do),
        W_a=np.eye(de),
    )


def init_for_dataset(dataset, hp: HyperParams, rng: np.random.Generator, names_init=None) -> ModelParams:
    """Random init for a dataset; ``names_init`` maps param name -> NameEmbeddings for SI."""
    params = init_params(
        dataset.kg1.n_entities,
        dataset.kg2.n_entities,
        dataset.kg1.n_relations,
        dataset.kg2.n_relations,
        dataset.ontology.n_classes,
        hp,
        rng,
    )
    for name, emb in (names_init or {}).items():
        table = getattr(params, name)
        if emb.matrix.shape[1] != table.shape[1]:
            raise ConfigError(
                f"word-vector width {emb.matrix.shape[1]} != embedding width {table.shape[1]} for {name}"
            )
        table[emb.found] = emb.matrix[emb.found]
    return params


def save_checkpoint(path: str | Path, params: ModelParams, hp: HyperParams, rng_state: dict | None = None,
                    extra: dict | None = None) -> None:
    meta = {
        "format": "ontoea-checkpoint",
        "version": CHECKPOINT_VERSION,
        "hyperparams": asdict(hp),
        "rng_state": rng_state,
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8), **params.arrays())


def load_checkpoint(path: str | Path) -> tuple[ModelParams, HyperParams, dict]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta.get("format") != "ontoea-checkpoint":
            raise DataError(f"{path} is not an ontoea checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        params = ModelParams(**{name: data[name].copy() for name in PARAM_NAMES})
    return params, HyperParams(**meta["hyperparams"]), meta
