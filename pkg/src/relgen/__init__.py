"""Synthetic relational databases and the in-context classification tasks derived from them."""

from .config import GeneratorConfig
from .content import DatabaseInstance, generate_database
from .dataset_io import load_database, read_task, save_database, stream_corpus, write_task
from .dfs import FeaturePath, LinearizedTask, aggregate, dfs_linearize, enumerate_paths
from .diagnostics import CorrelationReport, correlation_report, corpus_stats, validate_path
from .evaluate import EvalResult, evaluate_stream, fit_logistic, roc_auc
from .rng import Rng
from .schema import SchemaGraph, sample_schema
from .structure import InstanceGraph, generate_structure, gini
from .tasks import IclTask, generate_tasks, single_table_mode

__version__ = "0.1.0"
