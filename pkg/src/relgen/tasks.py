"""Turn generated databases into binary in-context classification tasks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import GeneratorConfig
from .content import DatabaseInstance, generate_database
from .dfs import LinearizedTask, dfs_linearize
from .errors import ContractError, DegenerateTaskError, GenerationError
from .rng import Rng
from .schema import CATEGORICAL

KIND_DEPTH = {"dfs1": 1, "dfs2": 2}
MAX_SPLIT_TRIES = 10


@dataclass
class IclTask:
    X_ctx: np.ndarray
    y_ctx: np.ndarray
    X_query: np.ndarray
    y_query: np.ndarray
    mask_ctx: np.ndarray | None = None
    mask_query: np.ndarray | None = None
    provenance: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_ctx(self) -> int:
        return self.X_ctx.shape[0]

    @property
    def n_query(self) -> int:
        return self.X_query.shape[0]

    @property
    def width(self) -> int:
        return self.X_ctx.shape[1]

    @property
    def X(self) -> np.ndarray:
        return np.vstack([self.X_ctx, self.X_query])

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([self.y_ctx, self.y_query])

    @property
    def mask(self) -> np.ndarray | None:
        if self.mask_ctx is None:
            return None
        return np.vstack([self.mask_ctx, self.mask_query])

    def check(self, min_ctx_for_both_classes: int = 8):
        """Raise ContractError if the task breaks a shape, label or split invariant."""
        if self.X_query.shape[1] != self.width or self.n_query < 1:
            raise ContractError("query must be non-empty and as wide as the context")
        if self.y_ctx.shape != (self.n_ctx,) or self.y_query.shape != (self.n_query,):
            raise ContractError("label vectors do not match row counts")
        for y in (self.y_ctx, self.y_query):
            if not np.isin(y, (0, 1)).all():
                raise ContractError("labels must be 0/1")
        if self.n_ctx >= min_ctx_for_both_classes and len(np.unique(self.y_ctx)) < 2:
            raise ContractError("context holds a single class")
        ids_c, ids_q = self.meta.get("ctx_row_ids"), self.meta.get("query_row_ids")
        if ids_c is not None and ids_q is not None and set(ids_c) & set(ids_q):
            raise ContractError("a row appears in both context and query")


@dataclass
class ShapedTask:
    X: np.ndarray
    mask: np.ndarray
    y: np.ndarray
    row_ids: np.ndarray
    provenance: list
    meta: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]


def sample_targets(db: DatabaseInstance, target_table: int, k: int, rng: Rng) -> list:
    """Up to ``k`` distinct decoded columns of the target table, uniformly chosen."""
    if k < 1:
        raise ContractError("k must be >= 1")
    table = db.schema.tables[target_table]
    cols = [c.name for c in table.decoded] or [c.name for c in table.features]
    if not cols:
        raise GenerationError(f"table {table.name} has no feature columns", "tasks")
    pick = rng.choice(len(cols), size=min(k, len(cols)), replace=False)
    return [cols[i] for i in pick]


def binarize(values, kind: str, rng: Rng):
    """Binary labels from one column; returns (labels uint8, description dict).

    Categorical: one class against the rest, the class drawn uniformly from
    those present. Anything else: strictly above the median.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise ContractError("binarize needs a fully populated column")
    if np.all(v == v[0]):
        raise DegenerateTaskError("constant target column")
    if kind == CATEGORICAL:
        classes = np.unique(v)
        positive = float(classes[int(rng.integers(0, len(classes)))])
        return (v == positive).astype(np.uint8), {"rule": "one_vs_rest", "positive_class": positive}
    med = float(np.median(v))
    y = (v > med).astype(np.uint8)
    if y.min() == y.max():
        raise DegenerateTaskError("median split leaves one class")
    return y, {"rule": "above_median", "threshold": med}


def shape_task(linearized: LinearizedTask, y, config: GeneratorConfig, rng: Rng) -> ShapedTask:
    """Uniformly subsample rows down to ``task_rows``; smaller tables keep every row."""
    y = np.asarray(y, dtype=np.uint8)
    n = linearized.X.shape[0]
    if y.shape != (n,):
        raise ContractError(f"{y.shape[0]} labels for {n} rows")
    if n < config.min_task_rows:
        raise DegenerateTaskError(f"{n} rows is below min_task_rows={config.min_task_rows}")
    if min(int(y.sum()), n - int(y.sum())) < 2:
        raise DegenerateTaskError("fewer than 2 rows in a class")
    keep = np.sort(rng.choice(n, size=config.task_rows, replace=False)) if n > config.task_rows else np.arange(n)
    return ShapedTask(
        linearized.X[keep], linearized.missing_mask[keep], y[keep], linearized.row_ids[keep],
        list(linearized.provenance), {"target_table": linearized.target_table_id},
    )


def split_context_query(shaped: ShapedTask, rng: Rng, n_ctx: int | None = None, ratio: float | None = None,
                        config: GeneratorConfig | None = None) -> IclTask:
    """Disjoint uniform context/query split by a fixed context size or a ratio."""
    config = config or GeneratorConfig()
    n = shaped.n_rows
    if n_ctx is None:
        if ratio is None:
            ratio = float(rng.uniform(*config.ctx_ratio))
        n_ctx = int(round(ratio * n))
    n_ctx = int(n_ctx)
    if not 1 <= n_ctx < n:
        raise ContractError(f"n_ctx={n_ctx} must lie in [1, {n - 1}]")
    for attempt in range(MAX_SPLIT_TRIES):
        perm = rng.permutation(n)
        ctx, qry = perm[:n_ctx], perm[n_ctx:]
        if n_ctx < config.min_ctx_for_both_classes or len(np.unique(shaped.y[ctx])) == 2:
            break
    else:
        raise DegenerateTaskError(f"single-class context after {MAX_SPLIT_TRIES} draws")
    meta = dict(shaped.meta)
    meta.update({
        "n_ctx": n_ctx,
        "split_ratio": n_ctx / n,
        "split_attempts": attempt + 1,
        "ctx_row_ids": shaped.row_ids[ctx].tolist(),
        "query_row_ids": shaped.row_ids[qry].tolist(),
    })
    return IclTask(shaped.X[ctx], shaped.y[ctx], shaped.X[qry], shaped.y[qry],
                   shaped.mask[ctx], shaped.mask[qry], list(shaped.provenance), meta)


@dataclass
class TaskBatch:
    tasks: list
    discarded: int
    reasons: list
    db: DatabaseInstance | None = None


def eligible_target_tables(db: DatabaseInstance, config: GeneratorConfig, relational: bool = True) -> list:
    schema = db.schema
    out = []
    for t in schema.tables:
        if db.n_rows(t.table_id) < config.min_task_rows or not t.features:
            continue
        if relational and not (schema.parent_edges(t.table_id) or schema.child_edges(t.table_id)):
            continue
        out.append(t.table_id)
    return out


def tasks_from_database(db: DatabaseInstance, config: GeneratorConfig, rng: Rng, kind: str = "dfs2",
                        target_table: int | None = None) -> TaskBatch:
    """Pick a target table, then emit one task per sampled target column.

    All targets of one database share the DFS value cache; each task drops
    only its own target's identity column from the candidate paths.
    """
    single = kind == "single"
    depth = 1 if single else KIND_DEPTH[kind]
    width = config.single_table_width if single else config.standard_width
    if target_table is None:
        tables = eligible_target_tables(db, config, relational=not single) or eligible_target_tables(db, config, False)
        if not tables:
            return TaskBatch([], 1, ["no eligible target table"], db)
        target_table = tables[int(rng.child("target_table").integers(0, len(tables)))]
    table = db.schema.tables[target_table]
    cache = {}
    tasks, reasons = [], []
    for j, col in enumerate(sample_targets(db, target_table, config.targets_per_schema, rng.child("targets"))):
        trng = rng.child("task", j)
        try:
            spec = table.column(col)
            y, rule = binarize(db.column(target_table, col), spec.kind, trng.child("binarize"))
            lin = dfs_linearize(db, target_table, config, trng.child("dfs"), exclude=(col,), cache=cache,
                                width=width, depth=depth)
            shaped = shape_task(lin, y, config, trng.child("rows"))
            if config.n_ctx is not None and config.n_ctx >= shaped.n_rows:
                raise DegenerateTaskError(f"n_ctx={config.n_ctx} leaves no query rows out of {shaped.n_rows}")
            shaped.meta.update({
                "kind": kind,
                "depth": depth,
                "db_seed": db.meta.get("seed"),
                "db_stream": db.meta.get("stream"),
                "target_table_name": table.name,
                "target_column": col,
                "target_kind": spec.kind,
                "label_rule": rule,
            })
            task = split_context_query(shaped, trng.child("split"), n_ctx=config.n_ctx, config=config)
        except DegenerateTaskError as exc:
            reasons.append(f"{table.name}.{col}: {exc}")
            continue
        tasks.append(task)
    return TaskBatch(tasks, len(reasons), reasons, db)


def generate_tasks(config: GeneratorConfig, rng: Rng, kind: str = "dfs2") -> TaskBatch:
    """One database and the tasks it yields."""
    if kind not in ("single",) + tuple(KIND_DEPTH):
        raise ContractError(f"unknown task kind {kind!r}")
    db = generate_database(config, rng.child("db"), single_table=kind == "single")
    return tasks_from_database(db, config, rng.child("tasks"), kind)


def single_table_mode(config: GeneratorConfig, rng: Rng) -> TaskBatch:
    """Tasks from a one-table database: no relations, ``single_table_width`` features."""
    return generate_tasks(config, rng, "single")
