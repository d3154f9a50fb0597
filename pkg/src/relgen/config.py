"""Generator configuration: one JSON document, fully defaulted."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields

from .errors import ConfigError

CONFIG_VERSION = 1
AGGREGATORS = ("mean", "max", "min", "count", "mode")
LINK_VARIANTS = ("attention", "fixed", "concat_mlp")
TASK_KINDS = ("single", "dfs1", "dfs2")


@dataclass
class GeneratorConfig:
    version: int = CONFIG_VERSION
    seed: int = 0

    # schema
    min_layers: int = 2
    max_layers: int = 4
    min_tables_per_layer: int = 1
    max_tables_per_layer: int = 2
    max_tables: int = 6
    min_parents: int = 1
    max_parents: int = 2
    min_feature_cols: int = 2
    max_feature_cols: int = 6
    categorical_prob: float = 0.4
    timestamp_prob: float = 0.5
    min_cardinality: int = 2
    max_cardinality: int = 6

    # rows and latent sizes
    min_rows: int = 600
    max_rows: int = 1200
    latent_dim: int = 8
    noise_dim: int = 4
    embed_dim: int = 8
    attn_dim: int = 8
    hidden_dim: int = 16

    # structural generation
    n_candidates: int = 16
    attn_temperature: float = 4.0
    mode_mix: tuple = (0.0, 1.0)
    feedback_scale: float = 0.2
    feedback_batch: int = 32
    embed_norm_cap: float = 50.0
    link_variant: str = "attention"
    temporal: bool = True
    temporal_probs: dict = field(default_factory=lambda: {"trend": 0.6, "seasonality": 0.5, "spike": 0.3})
    time_horizon: float = 1.0
    timestamp_gap: float = 0.02

    # content
    rounds: int = 2
    neighbor_aggregation: str = "sum"

    # linearization
    dfs_depth: int = 2
    aggregators: tuple = AGGREGATORS
    overgen_width: int | None = None
    standard_width: int = 30

    # task shaping
    task_rows: int = 600
    min_task_rows: int = 32
    targets_per_schema: int = 6
    n_ctx: int | None = None
    ctx_ratio: tuple = (0.1, 0.9)
    min_ctx_for_both_classes: int = 8

    # single-table stage
    single_table_width: int = 18
    single_table_min_cols: int = 19
    single_table_max_cols: int = 24

    # corpus mix (single-table : 1-hop : 2-hop), normalized on use
    corpus_mix: dict = field(default_factory=lambda: {"single": 600.0, "dfs1": 1000.0, "dfs2": 200.0})

    def __post_init__(self):
        self.mode_mix = _pair(self.mode_mix, "mode_mix")
        self.ctx_ratio = _pair(self.ctx_ratio, "ctx_ratio")
        self.aggregators = tuple(self.aggregators)
        self.validate()

    @property
    def effective_overgen_width(self) -> int:
        if self.overgen_width is not None:
            return self.overgen_width
        return 60 if self.dfs_depth == 1 else 90

    def validate(self):
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(msg, name)

        need(self.version == CONFIG_VERSION, "version", f"unsupported config version {self.version}")
        for name in (
            "min_layers", "min_tables_per_layer", "max_tables", "min_parents", "min_feature_cols",
            "latent_dim", "noise_dim", "embed_dim", "attn_dim", "hidden_dim", "n_candidates",
            "feedback_batch", "standard_width", "task_rows", "min_task_rows", "targets_per_schema",
            "single_table_width", "min_rows",
        ):
            v = getattr(self, name)
            need(isinstance(v, int) and not isinstance(v, bool) and v >= 1, name, f"must be an integer >= 1, got {v!r}")
        need(self.max_layers >= self.min_layers, "max_layers", "must be >= min_layers")
        need(self.max_tables_per_layer >= self.min_tables_per_layer, "max_tables_per_layer", "must be >= min_tables_per_layer")
        need(self.max_parents >= self.min_parents, "max_parents", "must be >= min_parents")
        need(self.max_feature_cols >= self.min_feature_cols, "max_feature_cols", "must be >= min_feature_cols")
        need(self.min_cardinality >= 2, "min_cardinality", "categorical columns need cardinality >= 2")
        need(self.max_cardinality >= self.min_cardinality, "max_cardinality", "must be >= min_cardinality")
        need(self.max_rows >= self.min_rows, "max_rows", "must be >= min_rows")
        need(self.max_tables >= self.min_layers, "max_tables", "cannot hold min_layers layers")
        if self.min_layers >= 2:
            # a dependent table needs min_parents distinct earlier tables
            need(self.max_tables >= self.min_parents + 1, "min_parents",
                 f"{self.max_tables} tables cannot satisfy min_parents={self.min_parents}")
        need(0.0 <= self.categorical_prob <= 1.0, "categorical_prob", "must lie in [0, 1]")
        need(0.0 <= self.timestamp_prob <= 1.0, "timestamp_prob", "must lie in [0, 1]")
        need(0.0 <= self.mode_mix[0] <= self.mode_mix[1] <= 1.0, "mode_mix", "must be 0 <= lo <= hi <= 1")
        need(0.0 < self.ctx_ratio[0] <= self.ctx_ratio[1] < 1.0, "ctx_ratio", "must be 0 < lo <= hi < 1")
        need(self.feedback_scale >= 0.0, "feedback_scale", "must be >= 0")
        need(self.attn_temperature > 0.0, "attn_temperature", "must be > 0")
        need(self.embed_norm_cap > 0.0, "embed_norm_cap", "must be > 0")
        need(self.link_variant in LINK_VARIANTS, "link_variant", f"must be one of {LINK_VARIANTS}")
        need(isinstance(self.temporal_probs, dict) and set(self.temporal_probs) <= {"trend", "seasonality", "spike"},
             "temporal_probs", "keys must be trend/seasonality/spike")
        need(all(0.0 <= p <= 1.0 for p in self.temporal_probs.values()) and any(p > 0 for p in self.temporal_probs.values()),
             "temporal_probs", "probabilities must lie in [0, 1] with at least one positive")
        need(self.time_horizon > 0, "time_horizon", "must be > 0")
        need(self.timestamp_gap >= 0, "timestamp_gap", "must be >= 0")
        need(isinstance(self.rounds, int) and self.rounds >= 0, "rounds", "must be an integer >= 0")
        need(self.neighbor_aggregation in ("sum", "mean"), "neighbor_aggregation", "must be 'sum' or 'mean'")
        need(self.dfs_depth in (1, 2), "dfs_depth", "must be 1 or 2")
        need(len(self.aggregators) > 0 and set(self.aggregators) <= set(AGGREGATORS), "aggregators",
             f"must be a non-empty subset of {AGGREGATORS}")
        need(self.effective_overgen_width >= self.standard_width, "overgen_width", "must be >= standard_width")
        need(self.n_ctx is None or (isinstance(self.n_ctx, int) and self.n_ctx >= 1), "n_ctx", "must be null or >= 1")
        need(self.single_table_max_cols >= self.single_table_min_cols >= 2, "single_table_max_cols",
             "must be >= single_table_min_cols >= 2")
        need(isinstance(self.corpus_mix, dict) and set(self.corpus_mix) <= set(TASK_KINDS), "corpus_mix",
             f"keys must be among {TASK_KINDS}")
        need(all(v >= 0 for v in self.corpus_mix.values()) and sum(self.corpus_mix.values()) > 0, "corpus_mix",
             "weights must be >= 0 and not all zero")

    def replace(self, **changes) -> "GeneratorConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError("unknown config field", key)
        kwargs = {}
        for key, value in data.items():
            default = known[key].default
            if isinstance(default, bool) and not isinstance(value, bool):
                raise ConfigError(f"expected a boolean, got {value!r}", key)
            if isinstance(default, int) and not isinstance(default, bool) and not (
                isinstance(value, int) and not isinstance(value, bool)
            ):
                raise ConfigError(f"expected an integer, got {value!r}", key)
            if isinstance(default, float) and not isinstance(value, (int, float)):
                raise ConfigError(f"expected a number, got {value!r}", key)
            if isinstance(default, str) and not isinstance(value, str):
                raise ConfigError(f"expected a string, got {value!r}", key)
            kwargs[key] = value
        try:
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "GeneratorConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed JSON: {exc}") from exc
        return cls.from_dict(data)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _pair(value, name):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return (float(value), float(value))
    try:
        lo, hi = value
        return (float(lo), float(hi))
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number or a [lo, hi] pair, got {value!r}", name) from None
