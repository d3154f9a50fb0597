"""Schema graphs: tables, typed columns and parent->child foreign-key edges."""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Protocol

from .config import GeneratorConfig
from .errors import ConfigError, IntegrityError
from .rng import Rng

PRIMARY_KEY = "primary_key"
FOREIGN_KEY = "foreign_key"
CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
TIMESTAMP = "timestamp"
COLUMN_KINDS = (PRIMARY_KEY, FOREIGN_KEY, CONTINUOUS, CATEGORICAL, TIMESTAMP)
FEATURE_KINDS = (CONTINUOUS, CATEGORICAL, TIMESTAMP)
DECODED_KINDS = (CONTINUOUS, CATEGORICAL)


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    ref_table: int | None = None
    cardinality: int | None = None

    @property
    def is_feature(self) -> bool:
        return self.kind in FEATURE_KINDS

    @property
    def is_numeric(self) -> bool:
        return self.kind in (CONTINUOUS, TIMESTAMP)

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.ref_table is not None:
            d["ref_table"] = self.ref_table
        if self.cardinality is not None:
            d["cardinality"] = self.cardinality
        return d


@dataclass
class TableSpec:
    table_id: int
    name: str
    columns: list

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(f"table {self.name!r} has no column {name!r}")

    @property
    def pk(self) -> ColumnSpec | None:
        pks = [c for c in self.columns if c.kind == PRIMARY_KEY]
        return pks[0] if len(pks) == 1 else None

    @property
    def foreign_keys(self) -> list:
        return [c for c in self.columns if c.kind == FOREIGN_KEY]

    @property
    def features(self) -> list:
        return [c for c in self.columns if c.is_feature]

    @property
    def decoded(self) -> list:
        """Feature columns filled by the content decoder."""
        return [c for c in self.columns if c.kind in DECODED_KINDS]

    @property
    def timestamp_column(self) -> ColumnSpec | None:
        ts = [c for c in self.columns if c.kind == TIMESTAMP]
        return ts[0] if ts else None


@dataclass(frozen=True)
class Edge:
    """FK relation type: rows of ``child`` reference rows of ``parent`` via ``fk_column``."""

    parent: int
    child: int
    fk_column: str


@dataclass
class SchemaGraph:
    tables: list
    edges: list = field(default_factory=list)

    @property
    def n_tables(self) -> int:
        return len(self.tables)

    def table(self, table_id: int) -> TableSpec:
        return self.tables[table_id]

    def parent_edges(self, table_id: int) -> list:
        """Indices of relations where ``table_id`` is the child, in FK column order."""
        return [i for i, e in enumerate(self.edges) if e.child == table_id]

    def child_edges(self, table_id: int) -> list:
        return [i for i, e in enumerate(self.edges) if e.parent == table_id]

    def is_source(self, table_id: int) -> bool:
        return not self.tables[table_id].foreign_keys

    def to_dict(self) -> dict:
        return {
            "tables": [
                {"table_id": t.table_id, "name": t.name, "columns": [c.to_dict() for c in t.columns]}
                for t in self.tables
            ],
            "edges": [{"parent": e.parent, "child": e.child, "fk_column": e.fk_column} for e in self.edges],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "SchemaGraph":
        tables = [
            TableSpec(
                int(t["table_id"]),
                t["name"],
                [ColumnSpec(c["name"], c["kind"], c.get("ref_table"), c.get("cardinality")) for c in t["columns"]],
            )
            for t in d["tables"]
        ]
        edges = [Edge(int(e["parent"]), int(e["child"]), e["fk_column"]) for e in d["edges"]]
        return cls(tables, edges)

    @classmethod
    def from_json(cls, text: str) -> "SchemaGraph":
        return cls.from_dict(json.loads(text))


class SchemaSource(Protocol):
    """Anything that can propose a schema graph; the layered sampler is the built-in one."""

    def __call__(self, config: GeneratorConfig, rng: Rng) -> SchemaGraph: ...


def _feature_columns(config, rng, n_cols, start=0):
    cols = []
    for j in range(n_cols):
        if rng.random() < config.categorical_prob:
            card = int(rng.integers(config.min_cardinality, config.max_cardinality, endpoint=True))
            cols.append(ColumnSpec(f"c{start + j}", CATEGORICAL, cardinality=card))
        else:
            cols.append(ColumnSpec(f"x{start + j}", CONTINUOUS))
    return cols


def sample_schema(config: GeneratorConfig, rng: Rng) -> SchemaGraph:
    """Layered DAG sampler.

    Draws a layer count, a table count per layer (capped by ``max_tables``),
    and links each table outside the first layer to one parent in the
    previous layer plus up to ``max_parents - 1`` more from any earlier layer.
    Tables are numbered in generation order, which is a topological order.
    """
    n_layers = int(rng.integers(config.min_layers, config.max_layers, endpoint=True))
    n_layers = min(n_layers, config.max_tables)
    layer_sizes = []
    remaining = config.max_tables
    for layer in range(n_layers):
        left_after = n_layers - layer - 1
        lo = config.min_tables_per_layer
        if layer == 0 and n_layers > 1:
            lo = max(lo, min(config.min_parents, config.max_tables_per_layer))
        hi = min(config.max_tables_per_layer, remaining - left_after)
        lo = min(lo, hi)
        if hi < 1:
            raise ConfigError("max_tables too small for the sampled layer count", "max_tables")
        size = int(rng.integers(lo, hi, endpoint=True))
        layer_sizes.append(size)
        remaining -= size

    tables, edges, layer_of = [], [], []
    for layer, size in enumerate(layer_sizes):
        for _ in range(size):
            tid = len(tables)
            cols = [ColumnSpec("id", PRIMARY_KEY)]
            if layer > 0:
                prev = [t for t in range(tid) if layer_of[t] == layer - 1]
                earlier = [t for t in range(tid) if layer_of[t] < layer]
                if len(earlier) < config.min_parents:
                    raise ConfigError(
                        f"table {tid} has {len(earlier)} earlier tables, fewer than min_parents", "min_parents"
                    )
                n_par = int(rng.integers(config.min_parents, min(config.max_parents, len(earlier)), endpoint=True))
                first = int(prev[rng.integers(len(prev))])
                rest = [t for t in earlier if t != first]
                others = sorted(int(t) for t in rng.choice(rest, size=n_par - 1, replace=False)) if n_par > 1 else []
                for k, parent in enumerate([first] + others):
                    fk = f"fk{k}_t{parent}"
                    cols.append(ColumnSpec(fk, FOREIGN_KEY, ref_table=parent))
                    edges.append(Edge(parent, tid, fk))
            n_feat = int(rng.integers(config.min_feature_cols, config.max_feature_cols, endpoint=True))
            cols.extend(_feature_columns(config, rng, n_feat))
            if config.temporal and rng.random() < config.timestamp_prob:
                cols.append(ColumnSpec("ts", TIMESTAMP))
            tables.append(TableSpec(tid, f"t{tid}", cols))
            layer_of.append(layer)
    return SchemaGraph(tables, edges)


def single_table_schema(config: GeneratorConfig, rng: Rng) -> SchemaGraph:
    n_feat = int(rng.integers(config.single_table_min_cols, config.single_table_max_cols, endpoint=True))
    cols = [ColumnSpec("id", PRIMARY_KEY)] + _feature_columns(config, rng, n_feat)
    return SchemaGraph([TableSpec(0, "t0", cols)], [])


def topological_order(schema: SchemaGraph) -> list:
    """Kahn's algorithm, smallest table id first among ready tables."""
    n = schema.n_tables
    indeg = [0] * n
    children = [[] for _ in range(n)]
    for e in schema.edges:
        if not (0 <= e.parent < n and 0 <= e.child < n):
            raise IntegrityError(f"edge {e} references a missing table")
        indeg[e.child] += 1
        children[e.parent].append(e.child)
    ready = [t for t in range(n) if indeg[t] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        t = heapq.heappop(ready)
        order.append(t)
        for c in children[t]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != n:
        raise IntegrityError("schema graph contains a cycle")
    return order


@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    where: str = ""

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "where": self.where}


@dataclass
class ValidationReport:
    findings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, code, message, where=""):
        self.findings.append(Finding(code, message, where))

    def extend(self, other: "ValidationReport"):
        self.findings.extend(other.findings)

    def codes(self) -> list:
        return [f.code for f in self.findings]

    def __str__(self):
        return "ok" if self.ok else "\n".join(f"{f.code}: {f.message} ({f.where})" for f in self.findings)


def validate_schema(schema: SchemaGraph) -> ValidationReport:
    report = ValidationReport()
    n = schema.n_tables
    for i, t in enumerate(schema.tables):
        where = f"table {t.name}"
        if t.table_id != i:
            report.add("BAD_TABLE_ID", f"table_id {t.table_id} at position {i}", where)
        pks = [c for c in t.columns if c.kind == PRIMARY_KEY]
        if len(pks) == 0:
            report.add("MISSING_PK", "no primary key column", where)
        elif len(pks) > 1:
            report.add("MULTIPLE_PK", f"{len(pks)} primary key columns", where)
        names = [c.name for c in t.columns]
        if len(set(names)) != len(names):
            report.add("DUPLICATE_COLUMN", "column names are not unique", where)
        for c in t.columns:
            if c.kind not in COLUMN_KINDS:
                report.add("BAD_KIND", f"column {c.name!r} has kind {c.kind!r}", where)
            if c.kind == CATEGORICAL and (c.cardinality is None or c.cardinality < 2):
                report.add("BAD_CARDINALITY", f"column {c.name!r} cardinality {c.cardinality}", where)
            if c.kind == FOREIGN_KEY and (c.ref_table is None or not 0 <= c.ref_table < n):
                report.add("DANGLING_REF", f"column {c.name!r} references table {c.ref_table}", where)
    fk_edges = set()
    for t in schema.tables:
        for c in t.foreign_keys:
            fk_edges.add((c.ref_table, t.table_id, c.name))
    edge_set = set()
    for e in schema.edges:
        where = f"edge {e.parent}->{e.child} via {e.fk_column}"
        if not (0 <= e.parent < n and 0 <= e.child < n):
            report.add("DANGLING_REF", "edge endpoint does not exist", where)
            continue
        if e.parent == e.child:
            report.add("CYCLE", "self-loop edge", where)
        edge_set.add((e.parent, e.child, e.fk_column))
    if edge_set != {x for x in fk_edges if x[0] is not None and 0 <= x[0] < n}:
        report.add("EDGE_MISMATCH", "edges do not match the foreign-key columns")
    if "CYCLE" not in report.codes():
        valid = [e for e in schema.edges if 0 <= e.parent < n and 0 <= e.child < n]
        try:
            topological_order(SchemaGraph(schema.tables, valid))
        except IntegrityError:
            report.add("CYCLE", "foreign-key edges contain a directed cycle")
    return report
