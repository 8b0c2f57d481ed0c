"""Command-line entry point: ``ontoea {gen-toy,prepare,train,evaluate}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical abort. ``ONTOEA_THREADS`` caps the BLAS thread pool.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import os
import shutil
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .ccm import build_ccm
from .config import RunConfig, build_config, dump_config, load_config, parse_lines, read_config_lines
from .errors import ConfigError, DataError, OntoEAError
from .ingest import SPLIT_NAMES, load_dataset, load_word_vectors, merged_memberships
from .merge import write_class_mappings
from .model import init_for_dataset, load_checkpoint, save_checkpoint
from .predictor import (
    conflict_ratio,
    degree_binned_eval,
    rank_split,
    summed_degrees,
    write_degree_bins,
    write_metrics,
    write_predictions,
)
from .toy import ToySpec, generate_toy
from .trainer import CoTrainer

log = logging.getLogger("ontoea")

CHECKPOINT = "checkpoint.npz"
DESK_CONFIG = """\
# desk-scale settings for generated toy data
data = .
dim_entity = 32
dim_onto = 32
learning_rate = 0.1
max_iterations = 200
eval_every = 10
patience = 5
"""

# copied verbatim by ``prepare``; memberships_2.tsv is rewritten
PASSTHROUGH = (
    "rel_triples_1.tsv", "rel_triples_2.tsv", "onto_subclass_1.tsv", "onto_disjoint.tsv",
    "memberships_1.tsv", "ent_links.tsv", *(f"ent_links_{s}.tsv" for s in SPLIT_NAMES),
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value run configuration")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="training RNG seed")
    p.add_argument("--beta", type=float, help="entity/class similarity mix")
    p.add_argument("--tau", type=float, help="class-conflict threshold")
    p.add_argument("--csls-k", type=int, dest="csls_k", help="CSLS neighbourhood size")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ontoea", description="Ontology-guided entity alignment.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-toy", help="write a synthetic benchmark directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--entities", type=int, default=ToySpec.n_entities)
    p.add_argument("--relations", type=int, default=ToySpec.n_relations)
    p.add_argument("--density", type=float, default=ToySpec.triples_per_entity, help="triples per entity")
    p.add_argument("--leaves", type=int, default=ToySpec.leaves_per_branch, help="leaf classes per branch")
    p.add_argument("--disjoint-fraction", type=float, default=ToySpec.disjoint_fraction)
    p.add_argument("--noise", type=float, default=ToySpec.noise, help="per-KG triple drop rate")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("prepare", help="merge a second ontology into the first")
    _common(p)
    p.add_argument("--separate", action="store_true", help="require two ontologies")

    p = sub.add_parser("train", help="train and keep the best-validation checkpoint")
    _common(p)
    p.add_argument("--si", action="store_true", help="initialise from word vectors")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--grid", action="append", default=[], metavar="KEY[=v1,v2,...]",
                   help="grid-search a hyperparameter (published space when no values given)")

    p = sub.add_parser("evaluate", help="rank a split with a trained checkpoint")
    _common(p)
    p.add_argument("--checkpoint", type=Path, help=f"default: OUT/{CHECKPOINT}")
    p.add_argument("--split", choices=SPLIT_NAMES, help="default: test")
    return parser


def _overrides(args) -> dict[str, str]:
    mapping = {
        "data": "data", "out": "out", "seed": "rng_seed", "beta": "beta", "tau": "tau",
        "csls_k": "csls_k", "max_iters": "max_iterations", "split": "eval_split",
    }
    out = {}
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = str(value)
    if getattr(args, "si", False):
        out["si_init"] = "true"
    if getattr(args, "separate", False):
        out["shared_ontology"] = "false"
    for item in getattr(args, "grid", []):
        key, _, values = item.partition("=")
        out[f"grid.{key.strip()}"] = values
    return out


def _config(args, need=("data",)) -> RunConfig:
    cfg = load_config(args.config, _overrides(args))
    missing = [k for k in need if not getattr(cfg, k)]
    if missing:
        raise ConfigError("missing required setting(s): " + ", ".join(missing))
    return cfg


def _thread_limit() -> int | None:
    raw = os.environ.get("ONTOEA_THREADS")
    if raw is None or raw.strip() == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigError(f"ONTOEA_THREADS must be a positive integer, not {raw!r}")
    return n


# --- commands ---------------------------------------------------------------

def cmd_gen_toy(args) -> int:
    spec = ToySpec(
        n_entities=args.entities,
        n_relations=args.relations,
        triples_per_entity=args.density,
        leaves_per_branch=args.leaves,
        disjoint_fraction=args.disjoint_fraction,
        noise=args.noise,
    )
    problems = []
    if spec.n_entities < 2:
        problems.append("--entities must be >= 2")
    if spec.n_relations < 1:
        problems.append("--relations must be >= 1")
    if spec.triples_per_entity <= 0:
        problems.append("--density must be > 0")
    if spec.leaves_per_branch < 1:
        problems.append("--leaves must be >= 1")
    if not 0.0 <= spec.disjoint_fraction <= 1.0:
        problems.append("--disjoint-fraction must lie in [0, 1]")
    if not 0.0 <= spec.noise < 1.0:
        problems.append("--noise must lie in [0, 1)")
    if problems:
        raise ConfigError("invalid toy settings:\n  " + "\n  ".join(problems))
    out = generate_toy(args.out, args.seed, spec)
    (out / "desk.conf").write_text(DESK_CONFIG, encoding="utf-8")
    print(f"wrote toy benchmark with {spec.n_entities} links to {out}")
    return 0


def cmd_prepare(args) -> int:
    cfg = _config(args, need=("data", "out"))
    data, out = Path(cfg.data), Path(cfg.out)
    if not data.is_dir():
        raise DataError(f"missing dataset directory: {data}")
    separate_files = (data / "onto_subclass_2.tsv").is_file()
    shared = cfg.shared_ontology if cfg.shared_ontology is not None else not separate_files
    if shared:
        print(f"{data}: the KGs share one ontology; nothing to merge")
        return 0
    if not separate_files:
        raise DataError(f"missing file: {data / 'onto_subclass_2.tsv'} (separate ontologies requested)")
    rows, mapping, o1, o2 = merged_memberships(data)
    out.mkdir(parents=True, exist_ok=True)
    for name in PASSTHROUGH:
        if (data / name).is_file():
            shutil.copyfile(data / name, out / name)
    with open(out / "memberships_2.tsv", "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, delimiter="\t", lineterminator="\n").writerows(rows)
    write_class_mappings(out / "class_mappings.tsv", mapping, o1, o2)
    n_root = sum(1 for _, c in rows if c == o1.classes.resolve(o1.root))
    print(f"merged {o2.n_classes} classes ({len(mapping)} mappings); {n_root} memberships fell back to the root")
    print(f"wrote merged dataset to {out}")
    return 0


def _load(cfg: RunConfig):
    dataset = load_dataset(cfg.data, cfg.split, cfg.split_seed, cfg.shared_ontology)
    ccm = build_ccm(dataset.ontology, dataset.memberships, dataset.seeds_train)
    return dataset, ccm


def _si_init(cfg: RunConfig, dataset):
    if not cfg.si_init:
        return None
    if not cfg.word_vectors:
        raise ConfigError("si_init needs word_vectors")
    tables = {
        "ent1": dataset.kg1.entities, "ent2": dataset.kg2.entities,
        "rel1": dataset.kg1.relations, "rel2": dataset.kg2.relations,
    }
    out = {name: load_word_vectors(cfg.word_vectors, interner.names) for name, interner in tables.items()}
    for name, emb in out.items():
        log.info("SI %s: %d names without in-vocabulary tokens", name, emb.n_missing)
    return out


def _train_one(cfg, hp, dataset, ccm, log_path: Path):
    names_init = _si_init(cfg, dataset)
    trainer = CoTrainer(dataset, ccm, hp, csls_k=cfg.csls_k)
    if names_init:
        trainer.params = init_for_dataset(dataset, hp, np.random.default_rng(hp.rng_seed), names_init)
    params, train_log = trainer.run()
    train_log.write_csv(log_path)
    return params, train_log


def cmd_train(args) -> int:
    cfg = _config(args, need=("data", "out"))
    out = Path(cfg.out)
    points = cfg.grid_points()
    dataset, ccm = _load(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.used").write_text(dump_config(cfg), encoding="utf-8")
    log.info("dataset: %s", dataset.stats)

    best = None
    results = []
    for i, hp in enumerate(points):
        started = time.time()
        log_path = out / ("train_log.csv" if len(points) == 1 else f"train_log_{i:03d}.csv")
        params, train_log = _train_one(cfg, hp, dataset, ccm, log_path)
        results.append((i, hp, train_log))
        if len(points) > 1:
            changed = {k: getattr(hp, k) for k in sorted(cfg.grid)}
            print(f"grid point {i}: {changed} valid MRR {train_log.best_mrr:.4f} ({time.time() - started:.1f}s)")
        if best is None or train_log.best_mrr > best[2].best_mrr:
            best = (params, hp, train_log)

    params, hp, train_log = best
    extra = {"config": dump_config(replace(cfg, hp=hp, grid={})),
             "best_iteration": train_log.best_iteration}
    save_checkpoint(out / CHECKPOINT, params, hp, extra=extra)
    if len(points) > 1:
        with open(out / "grid_results.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            keys = sorted(cfg.grid)
            writer.writerow(["point", *keys, "valid_mrr", "best_iteration"])
            for i, point, lg in results:
                writer.writerow([i, *(getattr(point, k) for k in keys), repr(lg.best_mrr), lg.best_iteration])
        print("best grid point: " + ", ".join(f"{k}={getattr(hp, k)}" for k in sorted(cfg.grid)))

    metrics = rank_split(params, dataset, "valid", hp.beta, cfg.csls_k, cfg.candidates).metrics
    values = {**metrics.as_dict(), "best_iteration": train_log.best_iteration}
    write_metrics(out / "valid_metrics.txt", values)
    print(f"valid H@1={metrics.hits1:.4f} H@5={metrics.hits5:.4f} MRR={metrics.mrr:.4f}")
    print(f"wrote {out / CHECKPOINT}")
    return 0


def cmd_evaluate(args) -> int:
    ckpt_path = args.checkpoint
    if ckpt_path is None:
        probe = load_config(args.config, _overrides(args))
        if not probe.out:
            raise ConfigError("evaluate needs --checkpoint or an output directory")
        ckpt_path = Path(probe.out) / CHECKPOINT
    params, hp, meta = load_checkpoint(ckpt_path)
    # the training configuration is the base; file and flags override it
    base, _ = parse_lines(meta.get("extra", {}).get("config", "").splitlines())
    overrides = read_config_lines(args.config) if args.config is not None else {}
    overrides.update(_overrides(args))
    cfg = build_config({**base, **overrides})
    if not cfg.data:
        raise ConfigError("missing required setting(s): data")
    out = Path(cfg.out) if cfg.out else ckpt_path.parent
    out.mkdir(parents=True, exist_ok=True)

    dataset, ccm = _load(cfg)
    if params.ent1.shape[0] != dataset.kg1.n_entities or params.ent2.shape[0] != dataset.kg2.n_entities:
        raise DataError("checkpoint does not match the dataset's entity tables")
    split = cfg.eval_split
    result = rank_split(params, dataset, split, cfg.hp.beta, cfg.csls_k, cfg.candidates)
    metrics = result.metrics
    pairs = dataset.split(split).pairs
    ratio = conflict_ratio(result.top1, pairs.tolist(), dataset.memberships, ccm, cfg.tau)
    bins = degree_binned_eval(result.ranks, summed_degrees(dataset, pairs))

    write_predictions(out / f"predictions_{split}.tsv", result, dataset)
    write_degree_bins(out / f"degree_bins_{split}.csv", bins)
    write_metrics(out / f"metrics_{split}.txt",
                  {**metrics.as_dict(), "conflict_ratio": ratio, "tau": cfg.tau, "beta": cfg.hp.beta})
    print(f"{split}: H@1={metrics.hits1:.4f} H@5={metrics.hits5:.4f} MRR={metrics.mrr:.4f} "
          f"(n={metrics.count}) conflict_ratio={ratio:.4f} at tau={cfg.tau}")
    return 0


COMMANDS = {"gen-toy": cmd_gen_toy, "prepare": cmd_prepare, "train": cmd_train, "evaluate": cmd_evaluate}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        threads = _thread_limit()
        limit = threadpool_limits(threads) if threads else contextlib.nullcontext()
        with limit:
            return COMMANDS[args.command](args)
    except OntoEAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
