import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relgen.config import GeneratorConfig
from relgen.errors import ConfigError, IntegrityError
from relgen.rng import Rng
from relgen.schema import (
    CATEGORICAL,
    FOREIGN_KEY,
    PRIMARY_KEY,
    ColumnSpec,
    Edge,
    SchemaGraph,
    TableSpec,
    sample_schema,
    single_table_schema,
    topological_order,
    validate_schema,
)


def _table(tid, fks=(), feats=1):
    cols = [ColumnSpec("id", PRIMARY_KEY)]
    cols += [ColumnSpec(f"fk_{p}", FOREIGN_KEY, ref_table=p) for p in fks]
    cols += [ColumnSpec(f"x{j}", "continuous") for j in range(feats)]
    return TableSpec(tid, f"t{tid}", cols)


def _graph(parents_of: dict, n: int):
    tables = [_table(t, parents_of.get(t, ())) for t in range(n)]
    edges = [Edge(p, c, f"fk_{p}") for c in range(n) for p in parents_of.get(c, ())]
    return SchemaGraph(tables, edges)


def test_single_source_table_config():
    cfg = GeneratorConfig(min_layers=1, max_layers=1, max_tables_per_layer=1, max_tables=1)
    s = sample_schema(cfg, Rng(0))
    assert s.n_tables == 1 and s.edges == [] and s.is_source(0)


def test_three_table_star_is_reachable():
    cfg = GeneratorConfig(min_layers=2, max_layers=2, max_tables=3, min_parents=1, max_parents=1)
    stars = []
    for seed in range(50):
        s = sample_schema(cfg, Rng(seed))
        assert validate_schema(s).ok
        if [len(s.child_edges(t)) for t in range(s.n_tables)] == [2, 0, 0]:
            stars.append(s)
    assert stars, "no 1-parent/2-child star among 50 draws"
    assert all(s.n_tables == 3 and len(s.edges) == 2 for s in stars)


def test_ten_thousand_schemas_are_acyclic():
    cfg = GeneratorConfig(max_layers=4)
    for seed in range(10_000):
        s = sample_schema(cfg, Rng(seed))
        order = topological_order(s)
        pos = {t: i for i, t in enumerate(order)}
        assert all(pos[e.parent] < pos[e.child] for e in s.edges)


@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 3), st.integers(2, 8), st.integers(1, 3))
@settings(max_examples=150, deadline=None)
def test_sampled_schema_respects_config(seed, layers, per_layer, max_tables, max_parents):
    max_tables = max(max_tables, layers)
    cfg = GeneratorConfig(min_layers=1, max_layers=layers, max_tables_per_layer=per_layer, max_tables=max_tables,
                          max_parents=max_parents, min_feature_cols=1, max_feature_cols=4)
    s = sample_schema(cfg, Rng(seed))
    assert validate_schema(s).ok
    assert 1 <= s.n_tables <= max_tables
    for t in s.tables:
        assert t.pk is not None and t.pk.kind == PRIMARY_KEY
        n_fk = len(t.foreign_keys)
        assert n_fk == 0 or cfg.min_parents <= n_fk <= max_parents
        assert all(c.ref_table < t.table_id for c in t.foreign_keys)  # parents strictly earlier
        n_feat = len([c for c in t.features if c.kind != "timestamp"])
        assert cfg.min_feature_cols <= n_feat <= cfg.max_feature_cols
        for c in t.features:
            if c.kind == CATEGORICAL:
                assert cfg.min_cardinality <= c.cardinality <= cfg.max_cardinality
    # every dependent table is reachable from a source
    reach = {t for t in range(s.n_tables) if s.is_source(t)}
    for t in topological_order(s):
        if any(s.edges[r].parent in reach for r in s.parent_edges(t)):
            reach.add(t)
    assert reach == set(range(s.n_tables))
    assert s.is_source(0)


def test_unsatisfiable_config_names_field():
    with pytest.raises(ConfigError) as exc:
        GeneratorConfig(max_tables=3, min_parents=5, max_parents=5)
    assert exc.value.field == "min_parents"


def test_topological_chain_and_diamond():
    chain = _graph({1: [0], 2: [1]}, 3)
    assert topological_order(chain) == [0, 1, 2]
    diamond = _graph({1: [0], 2: [0], 3: [1, 2]}, 4)
    order = topological_order(diamond)
    assert order[0] == 0 and order[-1] == 3


def test_topological_order_on_shuffled_tables():
    cfg = GeneratorConfig()
    for seed in range(1000):
        s = sample_schema(cfg, Rng(seed))
        perm = Rng(seed).child("perm").permutation(s.n_tables)
        relabel = {int(old): new for new, old in enumerate(perm)}
        tables = []
        for new, old in enumerate(perm):
            cols = [ColumnSpec(c.name, c.kind, relabel.get(c.ref_table) if c.ref_table is not None else None,
                               c.cardinality) for c in s.tables[old].columns]
            tables.append(TableSpec(new, f"t{new}", cols))
        edges = [Edge(relabel[e.parent], relabel[e.child], e.fk_column) for e in s.edges]
        shuffled = SchemaGraph(tables, edges)
        pos = {t: i for i, t in enumerate(topological_order(shuffled))}
        assert all(pos[e.parent] < pos[e.child] for e in edges)


def test_cycle_raises_integrity_error():
    cyc = _graph({0: [1], 1: [0]}, 2)
    with pytest.raises(IntegrityError):
        topological_order(cyc)
    assert "CYCLE" in validate_schema(cyc).codes()


def test_validate_findings():
    star = _graph({1: [0], 2: [0]}, 3)
    assert validate_schema(star).ok
    dangling = SchemaGraph([_table(0), _table(1, fks=(7,))], [])
    rep = validate_schema(dangling)
    assert rep.codes().count("DANGLING_REF") == 1
    loop = SchemaGraph([_table(0, fks=(0,))], [Edge(0, 0, "fk_0")])
    assert "CYCLE" in validate_schema(loop).codes()
    no_pk = SchemaGraph([TableSpec(0, "t0", [ColumnSpec("x0", "continuous")])], [])
    assert "MISSING_PK" in validate_schema(no_pk).codes()


def test_schema_json_round_trip():
    s = sample_schema(GeneratorConfig(), Rng(3))
    again = SchemaGraph.from_json(s.to_json())
    assert again.to_dict() == s.to_dict()


def test_single_table_schema_shape():
    cfg = GeneratorConfig()
    for seed in range(30):
        s = single_table_schema(cfg, Rng(seed))
        assert s.n_tables == 1 and not s.edges
        assert cfg.single_table_min_cols <= len(s.tables[0].features) <= cfg.single_table_max_cols


def test_columns_are_unique_and_kinds_valid():
    for seed in range(200):
        s = sample_schema(GeneratorConfig(), Rng(seed))
        for t in s.tables:
            names = [c.name for c in t.columns]
            assert len(names) == len(set(names))
        assert np.all([validate_schema(s).ok])
