"""Iterative co-training of the five losses with validation-based early stopping.

One outer iteration runs, in order: an epoch of the entity loss on KG1 then
KG2, an epoch of the ontology loss, one full-batch step of the confliction
loss, an epoch of the membership loss (KG1 then KG2) and an epoch of the
alignment loss. Loss weights scale the gradients handed to AdaGrad.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import losses
from .ccm import ClassConflictMatrix
from .errors import NumericalError
from .kg import AlignmentDataset
from .model import HyperParams, ModelParams, init_for_dataset, normalize_rows
from .optim import AdaGrad
from .predictor import rank_split
from .sampling import PairSet, TruncatedSampler, sample_neg_uniform

log = logging.getLogger(__name__)

LOSS_NAMES = ("L_E1", "L_E2", "L_O", "L_C", "L_M", "L_A")


class EarlyStopper:
    """Track the best validation score; stop after ``patience`` evaluations without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -math.inf
        self.best_iteration: int | None = None
        self.bad = 0
        self.checkpoint = None

    def update(self, score: float, iteration: int, snapshot: Callable[[], object]) -> bool:
        """Record a score; returns True when training should stop."""
        if score > self.best:
            self.best = score
            self.best_iteration = iteration
            self.bad = 0
            self.checkpoint = snapshot()
        else:
            self.bad += 1
        return self.bad >= self.patience


@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)  # one per evaluation
    history: list[dict] = field(default_factory=list)  # one per iteration
    best_iteration: int | None = None
    best_mrr: float = float("nan")
    stopped_early: bool = False

    def write_csv(self, path: Path) -> None:
        columns = ["iteration", *LOSS_NAMES, "valid_mrr"]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: (repr(row[k]) if isinstance(row[k], float) else row[k]) for k in columns})


def _batches(n: int, size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, size):
        yield order[start:start + size]


class CoTrainer:
    """Holds the samplers, optimiser state and RNG for one training run."""

    def __init__(self, dataset: AlignmentDataset, ccm: ClassConflictMatrix, hp: HyperParams,
                 params: ModelParams | None = None, csls_k: int = 10):
        self.dataset = dataset
        self.hp = hp
        self.csls_k = csls_k
        self.rng = np.random.default_rng(hp.rng_seed)
        self.params = params if params is not None else init_for_dataset(dataset, hp, self.rng)
        self.conflict = ccm.dense()
        self.optimizer = AdaGrad(hp.learning_rate)
        self.samplers = {
            1: TruncatedSampler(dataset.kg1, hp.eps_trunc, self.rng),
            2: TruncatedSampler(dataset.kg2, hp.eps_trunc, self.rng),
        }
        onto = dataset.ontology
        self.subclass_pairs = onto.subclass_pairs
        self.subclass_set = PairSet(onto.subclass_pairs, onto.n_classes)
        self.member_links = {1: dataset.memberships1.links, 2: dataset.memberships2.links}
        self.member_sets = {s: PairSet(l, onto.n_classes) for s, l in self.member_links.items()}
        self.seeds = dataset.seeds_train.pairs

    # --- single steps -------------------------------------------------------

    def _apply(self, name: str, iteration: int, loss: float, grads: dict, weight: float = 1.0) -> float:
        if not math.isfinite(loss):
            raise NumericalError(f"non-finite {name} loss ({loss}) at iteration {iteration}")
        touched = self.optimizer.step(self.params, grads, scale=weight)
        for table in ("ent1", "ent2"):
            if table in touched:
                normalize_rows(getattr(self.params, table), touched[table])
        return weight * loss

    def entity_epoch(self, side: int, iteration: int) -> float:
        triples = (self.dataset.kg1 if side == 1 else self.dataset.kg2).triples
        total = 0.0
        for idx in _batches(len(triples), self.hp.batch_entity, self.rng):
            pos = triples[idx]
            neg = self.samplers[side].sample(pos, self.hp.neg_per_pos)
            loss, grads = losses.entity_term(self.params, side, pos, neg, self.hp)
            total += self._apply(f"L_E (KG{side})", iteration, loss, grads)
        return total

    def ontology_epoch(self, iteration: int) -> float:
        total = 0.0
        n_cls = self.dataset.ontology.n_classes
        if n_cls < 2:
            return total
        for idx in _batches(len(self.subclass_pairs), self.hp.batch_onto, self.rng):
            pos = self.subclass_pairs[idx]
            neg = sample_neg_uniform(pos, n_cls, self.subclass_set, self.rng, self.hp.neg_per_pos_onto, "either")
            loss, grads = losses.ontology_term(self.params, pos, neg, self.hp)
            total += self._apply("L_O", iteration, loss, grads)
        return total

    def conflict_step(self, iteration: int) -> float:
        if self.hp.lambda1 == 0:
            return 0.0
        loss, grads = losses.conflict_term(self.params, self.conflict)
        return self._apply("L_C", iteration, loss, grads, self.hp.lambda1)

    def membership_epoch(self, iteration: int) -> float:
        if self.hp.lambda2 == 0:
            return 0.0
        total = 0.0
        n_cls = self.dataset.ontology.n_classes
        for side in (1, 2):
            links = self.member_links[side]
            for idx in _batches(len(links), self.hp.batch_entity, self.rng):
                pos = links[idx]
                neg = sample_neg_uniform(pos, n_cls, self.member_sets[side], self.rng, self.hp.neg_per_pos_onto, "second")
                loss, grads = losses.membership_term(self.params, side, pos, neg, self.hp)
                total += self._apply("L_M", iteration, loss, grads, self.hp.lambda2)
        return total

    def alignment_epoch(self, iteration: int) -> float:
        if self.hp.lambda3 == 0 or len(self.seeds) == 0:
            return 0.0
        total = 0.0
        for idx in _batches(len(self.seeds), self.hp.batch_entity, self.rng):
            loss, grads = losses.alignment_term(self.params, self.seeds[idx])
            total += self._apply("L_A", iteration, loss, grads, self.hp.lambda3)
        return total

    def iteration(self, it: int) -> dict:
        if (it - 1) % self.hp.neighbor_refresh == 0:
            for side, sampler in self.samplers.items():
                sampler.refresh(self.params.ent(side))
        row = {"iteration": it}
        row["L_E1"] = self.entity_epoch(1, it)
        row["L_E2"] = self.entity_epoch(2, it)
        row["L_O"] = self.ontology_epoch(it)
        row["L_C"] = self.conflict_step(it)
        row["L_M"] = self.membership_epoch(it)
        row["L_A"] = self.alignment_epoch(it)
        if not self.params.is_finite():
            raise NumericalError(f"non-finite parameters after iteration {it}")
        return row

    def validation_mrr(self) -> float:
        if len(self.dataset.seeds_valid) == 0:
            return float("nan")
        return rank_split(self.params, self.dataset, "valid", self.hp.beta, self.csls_k).metrics.mrr

    def run(self, on_eval: Callable[[dict], None] | None = None) -> tuple[ModelParams, TrainingLog]:
        hp = self.hp
        log_ = TrainingLog()
        stopper = EarlyStopper(hp.patience)
        for it in range(1, hp.max_iterations + 1):
            row = self.iteration(it)
            row["valid_mrr"] = float("nan")
            log_.history.append(row)
            if it % hp.eval_every == 0 or it == hp.max_iterations:
                mrr = self.validation_mrr()
                row["valid_mrr"] = mrr
                log_.rows.append(row)
                log.info("iteration %d: valid MRR %.4f", it, mrr)
                if on_eval is not None:
                    on_eval(row)
                if math.isnan(mrr):
                    continue
                if stopper.update(mrr, it, self.params.copy):
                    log_.stopped_early = True
                    break
        if stopper.checkpoint is not None:
            self.params = stopper.checkpoint
            log_.best_iteration = stopper.best_iteration
            log_.best_mrr = stopper.best
        return self.params, log_


def cotrain(
    dataset: AlignmentDataset,
    ccm: ClassConflictMatrix,
    hp: HyperParams,
    init: ModelParams | None = None,
    csls_k: int = 10,
    on_eval: Callable[[dict], None] | None = None,
) -> tuple[ModelParams, TrainingLog]:
    """Train from ``init`` (random when None); returns the best-validation parameters and the log."""
    return CoTrainer(dataset, ccm, hp, params=init, csls_k=csls_k).run(on_eval)
