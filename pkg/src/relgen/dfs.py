"""Deep Feature Synthesis: flatten a database around a target table.

A feature path walks from the target table along FK relations. A forward
hop (child -> parent) copies the parent's value onto the child; a backward
hop (parent -> children) summarizes the child set with an aggregator. The
walk never immediately reverses the relation it arrived on.

Aggregator compatibility: numeric sources (continuous, timestamp, and the
output of mean/max/min/count) take mean, max, min and mode; categorical
sources take mode only. ``count`` needs no source column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import AGGREGATORS, GeneratorConfig
from .errors import ConfigError, ContractError, GenerationError
from .rng import Rng
from .schema import CATEGORICAL, SchemaGraph

FORWARD = "forward_inherit"
BACKWARD = "backward_aggregate"
IDENTITY = "identity"
NUMERIC_AGGS = ("mean", "max", "min", "mode")
CATEGORICAL_AGGS = ("mode",)
_DIR_ORDER = {FORWARD: 0, BACKWARD: 1}
_AGG_ORDER = {a: i for i, a in enumerate((IDENTITY,) + AGGREGATORS)}


@dataclass(frozen=True)
class Hop:
    relation: int
    direction: str
    aggregator: str = IDENTITY

    def __post_init__(self):
        if (self.direction == FORWARD) != (self.aggregator == IDENTITY):
            raise ContractError("forward hops carry identity, backward hops carry an aggregator")


@dataclass(frozen=True)
class FeaturePath:
    target_table: int
    hops: tuple
    source_table: int
    source_column: str | None  # None only for count

    @property
    def depth(self) -> int:
        return len(self.hops)

    @property
    def aggregator(self) -> str:
        return self.hops[0].aggregator if self.hops else IDENTITY

    @property
    def family(self) -> str:
        """Relational family: the first hop, or ``self`` for the target's own columns."""
        if not self.hops:
            return "self"
        h = self.hops[0]
        return f"r{h.relation}:{'fwd' if h.direction == FORWARD else 'bwd'}"

    @property
    def is_identity(self) -> bool:
        return not self.hops

    def name(self, schema: SchemaGraph | None = None) -> str:
        tname = (lambda t: schema.tables[t].name) if schema is not None else (lambda t: f"t{t}")
        inner = f"{tname(self.source_table)}.{self.source_column}" if self.source_column else tname(self.source_table)
        for h in reversed(self.hops):
            if h.direction == FORWARD:
                inner = f"{inner}@r{h.relation}"
            else:
                inner = f"{h.aggregator.upper()}({inner} by r{h.relation})"
        return inner

    def to_dict(self) -> dict:
        return {
            "target_table": self.target_table,
            "hops": [[h.relation, h.direction, h.aggregator] for h in self.hops],
            "source_table": self.source_table,
            "source_column": self.source_column,
            "family": self.family,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeaturePath":
        return cls(d["target_table"], tuple(Hop(*h) for h in d["hops"]), d["source_table"], d["source_column"])

    def sort_key(self, schema: SchemaGraph):
        cols = [c.name for c in schema.tables[self.source_table].columns]
        col_idx = cols.index(self.source_column) if self.source_column is not None else -1
        return (
            len(self.hops),
            tuple((h.relation, _DIR_ORDER[h.direction], _AGG_ORDER[h.aggregator]) for h in self.hops),
            self.source_table,
            col_idx,
        )


@dataclass
class LinearizedTask:
    X: np.ndarray  # (n_rows, width) float32, 0.0 where missing
    provenance: list  # FeaturePath, or None for padding columns
    missing_mask: np.ndarray  # (n_rows, width) bool
    target_table_id: int
    row_ids: np.ndarray

    @property
    def width(self) -> int:
        return self.X.shape[1]


def _check_numeric(values):
    try:
        return np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError):
        raise ContractError("mean/max/min need numeric input") from None


def group_aggregate(values, groups, n_groups: int, agg: str) -> np.ndarray:
    """Aggregate ``values`` by integer ``groups``; NaN marks missing in and out.

    Missing inputs are ignored except by ``count``, which counts every member.
    Sums run over value-sorted members so the result is independent of row order.
    """
    groups = np.asarray(groups, dtype=np.int64)
    if agg == "count":
        return np.bincount(groups, minlength=n_groups).astype(np.float64)
    if agg not in AGGREGATORS:
        raise ConfigError(f"unknown aggregator {agg!r}", "aggregators")
    values = _check_numeric(values)
    out = np.full(n_groups, np.nan)
    ok = ~np.isnan(values)
    v, g = values[ok], groups[ok]
    if v.size == 0:
        return out
    order = np.lexsort((v, g))
    v, g = v[order], g[order]
    starts = np.flatnonzero(np.concatenate([[True], g[1:] != g[:-1]]))
    gid = g[starts]
    if agg == "mean":
        counts = np.diff(np.concatenate([starts, [len(g)]]))
        out[gid] = np.add.reduceat(v, starts) / counts
    elif agg == "max":
        out[gid] = np.maximum.reduceat(v, starts)
    elif agg == "min":
        out[gid] = np.minimum.reduceat(v, starts)
    else:  # mode, ties to the smallest value
        run_start = np.flatnonzero(np.concatenate([[True], (g[1:] != g[:-1]) | (v[1:] != v[:-1])]))
        run_len = np.diff(np.concatenate([run_start, [len(v)]]))
        run_g = g[run_start]
        first_run = np.flatnonzero(np.concatenate([[True], run_g[1:] != run_g[:-1]]))
        best = np.maximum.reduceat(run_len, first_run)
        gpos = np.cumsum(np.concatenate([[True], run_g[1:] != run_g[:-1]])) - 1
        hit = run_len == best[gpos]
        hit_g, first_hit = np.unique(run_g[hit], return_index=True)
        out[hit_g] = v[run_start[hit]][first_hit]
    return out


def aggregate(values, agg: str):
    """Aggregate a flat list; returns a float, or None when the result is missing."""
    if agg not in AGGREGATORS:
        raise ConfigError(f"unknown aggregator {agg!r}", "aggregators")
    vals = list(values)
    if agg == "count":
        return float(len(vals))
    arr = _check_numeric(vals) if vals else np.zeros(0)
    r = group_aggregate(arr, np.zeros(len(arr), dtype=np.int64), 1, agg)[0]
    return None if np.isnan(r) else float(r)


def _walk(schema, table, depth, aggs, no_fwd=None, no_bwd=None):
    """(hops, source_table, column, is_categorical) for every path of <= depth hops from ``table``."""
    out = [((), table, c.name, c.kind == CATEGORICAL) for c in schema.tables[table].features]
    if depth == 0:
        return out
    for r in schema.parent_edges(table):
        if r == no_fwd:
            continue
        for hops, st, col, cat in _walk(schema, schema.edges[r].parent, depth - 1, aggs, no_bwd=r):
            out.append(((Hop(r, FORWARD),) + hops, st, col, cat))
    for r in schema.child_edges(table):
        if r == no_bwd:
            continue
        child = schema.edges[r].child
        if "count" in aggs:
            out.append(((Hop(r, BACKWARD, "count"),), child, None, False))
        for hops, st, col, cat in _walk(schema, child, depth - 1, aggs, no_fwd=r):
            for agg in CATEGORICAL_AGGS if cat else NUMERIC_AGGS:
                if agg in aggs:
                    out.append(((Hop(r, BACKWARD, agg),) + hops, st, col, cat and agg == "mode"))
    return out


def enumerate_paths(schema: SchemaGraph, target_table: int, depth: int, aggregators=AGGREGATORS) -> list:
    """All feature paths of length <= depth, in canonical order (shorter paths first)."""
    if depth not in (1, 2):
        raise ConfigError(f"DFS depth must be 1 or 2, got {depth}", "dfs_depth")
    aggs = tuple(aggregators)
    paths = {FeaturePath(target_table, hops, st, col) for hops, st, col, _ in _walk(schema, target_table, depth, aggs)}
    return sorted(paths, key=lambda p: p.sort_key(schema))


def path_values(db, path: FeaturePath, cache: dict | None = None) -> np.ndarray:
    """Feature values for every row of the target table (NaN where missing)."""
    if cache is not None and path in cache:
        return cache[path]
    schema = db.schema
    tables = [path.target_table]
    for h in path.hops:
        e = schema.edges[h.relation]
        tables.append(e.parent if h.direction == FORWARD else e.child)
    vals = None if path.source_column is None else np.asarray(db.column(path.source_table, path.source_column), np.float64)
    for i in range(len(path.hops) - 1, -1, -1):
        h = path.hops[i]
        e = schema.edges[h.relation]
        if h.direction == FORWARD:
            vals = vals[db.graph.rows(e.child).fks[e.fk_column]]
        else:
            fk = db.graph.rows(e.child).fks[e.fk_column]
            src = vals if vals is not None else np.zeros(len(fk))
            vals = group_aggregate(src, fk, db.n_rows(e.parent), h.aggregator)
    if cache is not None:
        cache[path] = vals
    return vals


def dfs_linearize(db, target_table: int, config: GeneratorConfig, rng: Rng, exclude=(), cache=None,
                  width: int | None = None, depth: int | None = None) -> LinearizedTask:
    """Over-generate paths in canonical order, subsample uniformly to the standard width, pad if short.

    ``exclude`` names target-table columns whose identity path is dropped
    (the task's label column).
    """
    width = config.standard_width if width is None else width
    depth = config.dfs_depth if depth is None else depth
    n = db.n_rows(target_table)
    if n == 0:
        raise GenerationError(f"target table {db.schema.tables[target_table].name} is empty", "dfs")
    excluded = set(exclude)
    paths = [p for p in enumerate_paths(db.schema, target_table, depth, config.aggregators)
             if not (p.is_identity and p.source_column in excluded)]
    overgen = config.overgen_width if config.overgen_width is not None else (60 if depth == 1 else 90)
    pool = paths[: max(overgen, width)]
    if len(pool) > width:
        keep = np.sort(rng.choice(len(pool), size=width, replace=False))
        pool = [pool[i] for i in keep]
    X = np.zeros((n, width), dtype=np.float32)
    mask = np.ones((n, width), dtype=bool)
    for j, p in enumerate(pool):
        v = path_values(db, p, cache)
        miss = np.isnan(v)
        X[:, j] = np.where(miss, 0.0, v)
        mask[:, j] = miss
    provenance = list(pool) + [None] * (width - len(pool))
    return LinearizedTask(X, provenance, mask, target_table, np.arange(n, dtype=np.int64))
