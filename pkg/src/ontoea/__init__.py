"""Ontology-guided entity alignment: joint KG and class embeddings with class-conflict awareness."""

from .ccm import ClassConflictMatrix, build_ccm
from .errors import ConfigError, DataError, NumericalError, OntoEAError
from .ingest import load_dataset
from .kg import AlignmentDataset, KnowledgeGraph, MembershipSet, Ontology
from .model import HyperParams, ModelParams
from .predictor import conflict_ratio, csls_rank, evaluate, rank_split
from .trainer import cotrain

__version__ = "0.1.0"
