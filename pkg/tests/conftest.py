import copy
from collections import deque

import numpy as np
import pytest

from relgen.config import GeneratorConfig
from relgen.content import generate_database
from relgen.rng import Rng
from relgen.schema import FOREIGN_KEY, PRIMARY_KEY, ColumnSpec, Edge, SchemaGraph, TableSpec
from relgen.structure import InstanceGraph, TableRows


def chain_instance(n_tables=6, rows_per_table=3, seed=0, latent_dim=8):
    """Chain schema t0 -> t1 -> ... with random FK links and random latents."""
    rng = Rng(seed).child("chain")
    tables, edges = [], []
    for t in range(n_tables):
        cols = [ColumnSpec("id", PRIMARY_KEY)]
        if t > 0:
            cols.append(ColumnSpec(f"fk0_t{t - 1}", FOREIGN_KEY, ref_table=t - 1))
            edges.append(Edge(t - 1, t, f"fk0_t{t - 1}"))
        cols += [ColumnSpec("x0", "continuous"), ColumnSpec("c1", "categorical", cardinality=3)]
        tables.append(TableSpec(t, f"t{t}", cols))
    schema = SchemaGraph(tables, edges)
    rows = []
    for t in range(n_tables):
        fks = {}
        if t > 0:
            fks[f"fk0_t{t - 1}"] = rng.integers(0, rows_per_table, rows_per_table).astype(np.int64)
        lat = rng.normal(size=(rows_per_table, latent_dim)).astype(np.float32)
        rows.append(TableRows(t, lat, lat.copy(), np.zeros(rows_per_table), fks))
    return InstanceGraph(schema, rows)


def hop_distances(graph, table, row):
    """BFS distance in the instance graph from (table, row) to every row node."""
    schema = graph.schema
    dist = {(table, row): 0}
    queue = deque([(table, row)])
    links = [graph.relation(r) for r in range(len(schema.edges))]
    while queue:
        t, i = queue.popleft()
        for r, e in enumerate(schema.edges):
            par, chi = links[r]
            nbrs = []
            if e.child == t:
                nbrs.append((e.parent, int(par[i])))
            if e.parent == t:
                nbrs.extend((e.child, int(c)) for c in chi[par == i])
            for n in nbrs:
                if n not in dist:
                    dist[n] = dist[(t, i)] + 1
                    queue.append(n)
    return dist


@pytest.fixture(scope="session")
def small_config():
    return GeneratorConfig(min_rows=60, max_rows=120, min_task_rows=20, task_rows=50)


@pytest.fixture(scope="session")
def default_db():
    return generate_database(GeneratorConfig(), Rng(11).child("db"))


def build_db(columns, fks, features, sizes=None):
    """Hand-built database.

    columns: per table, list of (name, kind[, cardinality]) feature columns
    fks: {(parent, child): int array of parent rows for each child row}
    features: per table, name -> values
    """
    from relgen.content import DatabaseInstance

    n_tables = len(columns)
    tables, edges = [], []
    for t in range(n_tables):
        cols = [ColumnSpec("id", PRIMARY_KEY)]
        for (p, c) in fks:
            if c == t:
                cols.append(ColumnSpec(f"fk0_t{p}", FOREIGN_KEY, ref_table=p))
                edges.append(Edge(p, c, f"fk0_t{p}"))
        for spec in columns[t]:
            cols.append(ColumnSpec(spec[0], spec[1], cardinality=spec[2] if len(spec) > 2 else None))
        tables.append(TableSpec(t, f"t{t}", cols))
    schema = SchemaGraph(tables, edges)
    rows = []
    for t in range(n_tables):
        n = sizes[t] if sizes is not None else len(next(iter(features[t].values())))
        tfk = {f"fk0_t{p}": np.asarray(v, np.int64) for (p, c), v in fks.items() if c == t}
        z = np.zeros((n, 2), np.float32)
        rows.append(TableRows(t, z, z, np.zeros(n), tfk))
    feats = [{k: np.asarray(v, np.float64) for k, v in f.items()} for f in features]
    return DatabaseInstance(schema, InstanceGraph(schema, rows), feats)


def relabel_rows(db, table, perm):
    """Permute the rows of ``table`` (new row i = old row perm[i]) and remap FKs that point at it."""
    g = copy.deepcopy(db.graph)
    rows = g.tables[table]
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    rows.latent, rows.embedding, rows.timestamps = rows.latent[perm], rows.embedding[perm], rows.timestamps[perm]
    rows.fks = {k: v[perm] for k, v in rows.fks.items()}
    for e in db.schema.edges:
        if e.parent == table:
            child = g.tables[e.child]
            child.fks[e.fk_column] = inv[child.fks[e.fk_column]]
    return g
