import numpy as np
import pytest

from conftest import build_db
from relgen.config import GeneratorConfig
from relgen.dfs import LinearizedTask
from relgen.errors import ContractError, DegenerateTaskError, GenerationError
from relgen.rng import Rng
from relgen.tasks import (
    IclTask,
    ShapedTask,
    binarize,
    generate_tasks,
    sample_targets,
    shape_task,
    single_table_mode,
    split_context_query,
    tasks_from_database,
)

CFG = GeneratorConfig()


@pytest.fixture(scope="module")
def thousand_tasks():
    tasks, seed = [], 0
    while len(tasks) < 1000:
        kind = ("dfs1", "dfs2")[seed % 2]
        tasks += generate_tasks(CFG, Rng(seed).child("tasks-test"), kind).tasks
        seed += 1
    return tasks[:1000]


def _lin(n, width=4, seed=0):
    X = Rng(seed).normal(size=(n, width)).astype(np.float32)
    return LinearizedTask(X, [None] * width, np.zeros((n, width), bool), 0, np.arange(n, dtype=np.int64))


def _shaped(n=600, seed=0):
    y = (Rng(seed).random(n) < 0.4).astype(np.uint8)
    lin = _lin(n, seed=seed)
    return ShapedTask(lin.X, lin.missing_mask, y, lin.row_ids, lin.provenance, {})


def test_default_targets_per_schema():
    assert CFG.targets_per_schema == 6


def test_sample_targets_caps_at_available():
    db = build_db([[("x0", "continuous")]], {}, [{"x0": np.arange(5.0)}])
    assert sample_targets(db, 0, 6, Rng(0)) == ["x0"]
    wide = build_db([[(f"x{j}", "continuous") for j in range(9)]], {}, [{f"x{j}": np.arange(5.0) for j in range(9)}])
    pick = sample_targets(wide, 0, 6, Rng(1))
    assert len(pick) == len(set(pick)) == 6


def test_sample_targets_errors():
    db = build_db([[]], {}, [{}], sizes=[3])
    with pytest.raises(GenerationError):
        sample_targets(db, 0, 2, Rng(0))
    with pytest.raises(ContractError):
        sample_targets(db, 0, 0, Rng(0))


def test_binarize_examples():
    y, rule = binarize([1, 2, 3, 4], "continuous", Rng(0))
    assert y.tolist() == [0, 0, 1, 1] and rule["threshold"] == 2.5
    vals = np.array([0, 1, 2, 2, 1, 0, 2])
    for seed in range(20):
        y, rule = binarize(vals, "categorical", Rng(seed))
        assert np.array_equal(y, (vals == rule["positive_class"]).astype(np.uint8))
        if rule["positive_class"] == 2:
            assert y.tolist() == [0, 0, 1, 1, 0, 0, 1]
    with pytest.raises(DegenerateTaskError):
        binarize([3.0] * 10, "continuous", Rng(0))


def test_target_never_in_provenance(thousand_tasks):
    for task in thousand_tasks:
        col = task.meta["target_column"]
        t = task.meta["target_table"]
        assert not any(p is not None and p.is_identity and p.target_table == t and p.source_column == col
                       for p in task.provenance)


def test_continuous_target_prevalence(thousand_tasks):
    prev = [t.y.mean() for t in thousand_tasks if t.meta["target_kind"] != "categorical"]
    assert len(prev) > 100
    assert abs(np.mean(prev) - 0.5) <= 0.05


def test_split_disjoint_and_labels_valid(thousand_tasks):
    for task in thousand_tasks:
        ctx, qry = set(task.meta["ctx_row_ids"]), set(task.meta["query_row_ids"])
        assert not ctx & qry
        assert len(ctx) + len(qry) == task.X.shape[0] <= CFG.task_rows
        assert set(np.unique(task.y)) <= {0, 1}
        task.check(CFG.min_ctx_for_both_classes)


def test_shape_keeps_small_tables_whole():
    y = np.tile([0, 1], 300).astype(np.uint8)
    s = shape_task(_lin(600), y, CFG, Rng(0))
    assert np.array_equal(s.row_ids, np.arange(600))


def test_shape_downsamples_and_keeps_prevalence():
    n = 10_000
    y = (Rng(3).random(n) < 0.3).astype(np.uint8)
    s = shape_task(_lin(n), y, CFG, Rng(4))
    assert s.n_rows == 600 and len(set(s.row_ids.tolist())) == 600
    assert abs(s.y.mean() - y.mean()) <= 0.05
    again = shape_task(_lin(n), y, CFG, Rng(4))
    assert np.array_equal(s.row_ids, again.row_ids)


def test_shape_discards_too_few_rows():
    with pytest.raises(DegenerateTaskError):
        shape_task(_lin(20), np.tile([0, 1], 10).astype(np.uint8), CFG, Rng(0))
    with pytest.raises(DegenerateTaskError):
        shape_task(_lin(100), np.r_[np.ones(1), np.zeros(99)].astype(np.uint8), CFG, Rng(0))


def test_split_sizes():
    task = split_context_query(_shaped(), Rng(0), n_ctx=64)
    assert (task.n_ctx, task.n_query) == (64, 536)
    last = split_context_query(_shaped(), Rng(0), n_ctx=599)
    assert last.n_query == 1
    with pytest.raises(ContractError):
        split_context_query(_shaped(), Rng(0), n_ctx=600)


def test_split_by_ratio():
    task = split_context_query(_shaped(), Rng(0), ratio=0.25)
    assert task.n_ctx == 150 and task.meta["split_ratio"] == 0.25


def test_single_class_context_is_discarded():
    shaped = _shaped()
    shaped.y[:] = 0
    shaped.y[0] = 1
    with pytest.raises(DegenerateTaskError):
        split_context_query(shaped, Rng(0), n_ctx=10)
    # below the threshold a single-class context is allowed
    assert split_context_query(shaped, Rng(0), n_ctx=4).n_ctx == 4


def test_task_check_flags_overlap():
    task = split_context_query(_shaped(), Rng(0), n_ctx=64)
    task.meta["query_row_ids"][0] = task.meta["ctx_row_ids"][0]
    with pytest.raises(ContractError):
        task.check()


def test_single_table_mode_shape():
    for seed in range(15):
        batch = single_table_mode(CFG, Rng(seed))
        assert not batch.db.schema.edges and batch.db.schema.n_tables == 1
        for t in batch.tasks:
            assert t.X.shape == (600, 18)
            assert isinstance(t, IclTask)
            t.check(CFG.min_ctx_for_both_classes)


def test_pipeline_deterministic():
    a = generate_tasks(CFG, Rng(77), "dfs2")
    b = generate_tasks(CFG, Rng(77), "dfs2")
    assert len(a.tasks) == len(b.tasks) > 0
    for x, y in zip(a.tasks, b.tasks):
        assert x.X.tobytes() == y.X.tobytes() and x.y.tobytes() == y.y.tobytes()
        assert x.meta == y.meta


def test_fixed_n_ctx_from_config():
    cfg = CFG.replace(n_ctx=128)
    batch = generate_tasks(cfg, Rng(5), "dfs1")
    assert batch.tasks and all(t.n_ctx == 128 for t in batch.tasks if t.X.shape[0] > 128)


def test_explicit_target_table():
    batch = generate_tasks(CFG, Rng(6), "dfs2")
    again = tasks_from_database(batch.db, CFG, Rng(1), "dfs2", target_table=0)
    assert all(t.meta["target_table"] == 0 for t in again.tasks)
