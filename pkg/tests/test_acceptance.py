"""Acceptance criteria, one test each. Every test prints a single PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v`` (lines are printed
even when output capture is on), or ``python3 tests/test_acceptance.py``.
"""

import copy
import time

import numpy as np
import pytest
from scipy import stats

from conftest import chain_instance, hop_distances, relabel_rows
from relgen.cli import main
from relgen.config import GeneratorConfig
from relgen.content import decode_columns, generate_database, message_passing, sample_content_params, validate_database
from relgen.dataset_io import directory_digest, stream_corpus
from relgen.diagnostics import correlation_report, random_partition_families
from relgen.evaluate import evaluate_task, logistic_loss_grad, roc_auc
from relgen.rng import Rng
from relgen.schema import FOREIGN_KEY, PRIMARY_KEY, ColumnSpec, Edge, SchemaGraph, TableSpec, topological_order
from relgen.structure import (
    InstanceGraph,
    degree_histogram,
    gen_dependent_table,
    gen_source_table,
    gini,
    sample_struct_params,
)
from relgen.tasks import generate_tasks, tasks_from_database
from relgen.temporal import sample_temporal_signature

CFG = GeneratorConfig()


@pytest.fixture
def report(capsys):
    def _report(n, ok, text):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'}: {text}")
        return ok
    return _report


def random_config(rng):
    layers = int(rng.integers(1, 5))
    per_layer = int(rng.integers(1, 4))
    min_rows = int(rng.integers(10, 400))
    lo_mix = float(rng.uniform(0, 1))
    return GeneratorConfig(
        min_layers=1, max_layers=layers, max_tables_per_layer=per_layer,
        max_tables=int(rng.integers(layers, layers * per_layer + 1)),
        max_parents=int(rng.integers(1, 4)), min_feature_cols=1, max_feature_cols=int(rng.integers(1, 8)),
        categorical_prob=float(rng.uniform(0, 1)), timestamp_prob=float(rng.uniform(0, 1)),
        min_rows=min_rows, max_rows=min_rows + int(rng.integers(0, 400)),
        mode_mix=(lo_mix, float(rng.uniform(lo_mix, 1))), rounds=int(rng.integers(0, 4)),
        n_candidates=int(rng.integers(1, 32)), temporal=bool(rng.integers(0, 2)),
        neighbor_aggregation=("sum", "mean")[int(rng.integers(0, 2))],
    )


def test_01_structural_validity_fuzz(report):
    ref = cyc = bad = 0
    start = time.perf_counter()
    for i in range(1000):
        rng = Rng(2024).child("fuzz", i)
        db = generate_database(random_config(rng.child("config")), rng.child("db"))
        try:
            topological_order(db.schema)
        except Exception:
            cyc += 1
        codes = validate_database(db).codes()
        ref += codes.count("REF_INTEGRITY")
        cyc += codes.count("CYCLE")
        bad += sum(int(not np.all(np.isfinite(v))) for f in db.features for v in f.values())
        bad += sum(int(not np.all(np.isfinite(db.graph.rows(t).latent))) for t in range(db.schema.n_tables))
    secs = time.perf_counter() - start
    ok = ref == cyc == bad == 0 and secs < 300
    assert report(1, ok, f"1000 random-config databases: {ref} FK violations, {cyc} cycles, "
                         f"{bad} non-finite columns, {secs:.0f}s (limit 300s)")


def test_02_k_hop_locality(report):
    K = CFG.rounds
    far_changed = near_total = near_changed = 0
    for draw in range(20):
        g = chain_instance(n_tables=8, rows_per_table=3, seed=draw)
        p = sample_content_params(Rng(draw).child("params"), g.schema, CFG)
        target = (4, 0)
        base = message_passing(g, p)[target[0]][target[1]]
        for (t, i), d in hop_distances(g, *target).items():
            if d == 0:
                continue
            g2 = copy.deepcopy(g)
            g2.tables[t].latent[i] += Rng(draw).child("kick", t, i).normal(size=g.tables[t].latent.shape[1])
            changed = not np.array_equal(message_passing(g2, p)[target[0]][target[1]], base)
            if d > K:
                far_changed += changed
            else:
                near_total += 1
                near_changed += changed
    frac = near_changed / near_total
    ok = far_changed == 0 and frac >= 0.95
    assert report(2, ok, f"K={K}: {far_changed} far perturbations leaked; "
                         f"{near_changed}/{near_total} = {frac:.3f} near perturbations visible (need >= 0.95)")


def _two_tables():
    parent = TableSpec(0, "t0", [ColumnSpec("id", PRIMARY_KEY), ColumnSpec("x0", "continuous")])
    child = TableSpec(1, "t1", [ColumnSpec("id", PRIMARY_KEY), ColumnSpec("fk0_t0", FOREIGN_KEY, ref_table=0),
                                ColumnSpec("x0", "continuous")])
    return SchemaGraph([parent, child], [Edge(0, 1, "fk0_t0")])


def _attach(n_par, n_child, seed, mode_mix, rows_seed=None, order=None, zero_attention=False):
    schema = _two_tables()
    rng = Rng(seed)
    graph = InstanceGraph(schema)
    sig = sample_temporal_signature(rng.child("sig"), CFG)
    graph.tables[0] = gen_source_table(schema, 0, n_par, sig, sample_struct_params(rng.child("p0"), CFG),
                                       rng.child("rows0"))
    params = sample_struct_params(rng.child("p1"), CFG, n_parents=1, mode_mix=mode_mix)
    if zero_attention:
        params = params.with_attention(np.zeros_like(params.w_q), np.zeros_like(params.w_k))
    rows_rng = Rng(seed if rows_seed is None else rows_seed).child("rows1")
    gen_dependent_table(graph, schema, 1, n_child, params, rows_rng, sig=sig, order=order)
    return degree_histogram(graph, 0)


def test_03_exchangeability(report):
    mismatches = 0
    for seed in range(5):
        db = generate_database(CFG, Rng(seed).child("exch"))
        p = sample_content_params(Rng(seed).child("exch-content"), db.schema, CFG)
        base = decode_columns(message_passing(db.graph, p), p, db.schema)
        for t in range(db.schema.n_tables):
            g = relabel_rows(db, t, Rng(seed).child("perm", t).permutation(db.n_rows(t)))
            out = decode_columns(message_passing(g, p), p, db.schema)
            mismatches += sum(not np.array_equal(np.sort(out[u][c]), np.sort(base[u][c]))
                              for u in range(db.schema.n_tables) for c in base[u])
    n = 10_000
    same_draws = np.array_equal(_attach(50, n, 1, 0.0), _attach(50, n, 1, 0.0, order=Rng(2).permutation(n)))
    a = _attach(50, n, 1, 0.0, rows_seed=11)
    b = _attach(50, n, 1, 0.0, rows_seed=12, order=Rng(3).permutation(n))
    pval = stats.chi2_contingency(np.vstack([a, b])).pvalue
    ok = mismatches == 0 and same_draws and pval > 0.001
    assert report(3, ok, f"relabeling: {mismatches} multiset mismatches; Mode A reorder with same draws "
                         f"{'identical' if same_draws else 'DIFFERENT'}; chi-square p={pval:.3g} (need > 0.001)")


def test_04_attachment_interpolation(report):
    wins = 0
    for s in range(200):
        ga = gini(_attach(200, 1000, s, 0.0))
        gb = gini(_attach(200, 1000, s, 1.0))
        wins += gb > ga
    n_par, n_child = 50, 10_000
    deg = _attach(n_par, n_child, 7, 0.5, zero_attention=True)
    lo, hi = stats.binom.interval(1 - 0.001 / n_par, n_child, 1.0 / n_par)
    inside = int(np.sum((deg >= lo) & (deg <= hi)))
    ok = wins >= 190 and inside == n_par
    assert report(4, ok, f"Gini B > A in {wins}/200 pairs (need >= 190); zero attention: {inside}/{n_par} "
                         f"parents inside the binomial interval [{lo:.0f}, {hi:.0f}]")


def test_05_block_correlation(report):
    rel, single, control = [], [], []
    seed = 0
    while len(rel) < 100:
        for task in generate_tasks(CFG, Rng(seed).child("blocks"), ("dfs1", "dfs2")[seed % 2]).tasks:
            if len(rel) < 100:
                r = correlation_report(task.X, task.provenance)
                rel.append(r.block_signature)
                fam = random_partition_families(r.families, Rng(seed).child("ctrl", len(rel)))
                control.append(correlation_report(task.X, families=fam).block_signature)
        seed += 1
    seed = 0
    while len(single) < 100:
        for task in generate_tasks(CFG, Rng(seed).child("blocks-single"), "single").tasks:
            if len(single) < 100:
                single.append(correlation_report(task.X, task.provenance).block_signature)
        seed += 1
    r_rate, s_rate, c_rate = np.mean(rel), np.mean(single), np.mean(control)
    ok = r_rate >= 0.8 and s_rate <= 0.3
    assert report(5, ok, f"within > cross on {r_rate:.0%} of relational tasks (need >= 80%), "
                         f"{s_rate:.0%} of single-table tasks (need <= 30%); "
                         f"shuffled-family control on relational tasks {c_rate:.0%}")


def _shuffled(task, rng):
    t = copy.copy(task)
    t.y_ctx = rng.permutation(task.y_ctx)
    t.y_query = rng.permutation(task.y_query)
    return t


def test_06_learnability_gap(report):
    cfg = CFG.replace(n_ctx=512)
    aucs, shuffled = [], []
    seed = 0
    while len(aucs) < 200:
        for task in generate_tasks(cfg, Rng(seed).child("learn"), ("dfs1", "dfs2")[seed % 2]).tasks:
            try:
                a = evaluate_task(task).auc
                s = evaluate_task(_shuffled(task, Rng(seed).child("shuffle", len(aucs)))).auc
            except Exception:
                continue
            aucs.append(a)
            shuffled.append(s)
        seed += 1
    med, med_s = float(np.median(aucs)), float(np.median(shuffled))

    pairs = wins = 0
    for s in range(100):
        rng = Rng(s).child("depth-pair")
        db = generate_database(cfg, rng.child("db"))
        meds = []
        for kind in ("dfs1", "dfs2"):
            got = []
            for task in tasks_from_database(db, cfg, rng.child("tasks"), kind).tasks:
                try:
                    got.append(evaluate_task(task).auc)
                except Exception:
                    pass
            meds.append(np.median(got) if got else None)
        if None in meds:
            continue
        pairs += 1
        wins += meds[1] >= meds[0]
    win_rate = wins / pairs
    ok_gap = med - med_s >= 0.05 and abs(med_s - 0.5) <= 0.03
    ok_depth = win_rate >= 0.6
    assert report(6, ok_gap and ok_depth,
                  f"median AUC {med:.3f} vs shuffled {med_s:.3f} over {len(aucs)} tasks "
                  f"(gap {med - med_s:.3f}, need >= 0.05, control within 0.5 +/- 0.03): "
                  f"{'ok' if ok_gap else 'NOT MET'}; depth-2 median >= depth-1 in {wins}/{pairs} = {win_rate:.0%} "
                  f"of paired databases (need >= 60%): {'ok' if ok_depth else 'NOT MET'}")


def test_07_shape_contracts(report):
    rel_shapes, single_shapes = set(), set()
    for s in range(20):
        for kind in ("dfs1", "dfs2"):
            rel_shapes |= {t.X.shape for t in generate_tasks(CFG, Rng(s).child("shape"), kind).tasks}
        single_shapes |= {t.X.shape for t in generate_tasks(CFG, Rng(s).child("shape"), "single").tasks}
    ok = rel_shapes == {(600, 30)} and single_shapes == {(600, 18)}
    assert report(7, ok, f"relational shapes {sorted(rel_shapes)}, single-table shapes {sorted(single_shapes)}")


def test_08_determinism(report, tmp_path, capsys):
    digests = []
    for name, workers in (("a", 1), ("b", 1), ("c", 2)):
        code = main(["generate", "-n", "24", "-o", str(tmp_path / name), "--seed", "13", "--workers", str(workers)])
        assert code == 0
        digests.append(directory_digest(tmp_path / name))
    capsys.readouterr()
    ok = len(set(digests)) == 1
    assert report(8, ok, f"three runs (workers 1, 1, 2) -> {len(set(digests))} distinct directory hash(es)")


def test_09_metric_oracle(report):
    rng = Rng(99)
    exact = 0
    for i in range(500):
        n = int(rng.integers(2, 51))
        s = rng.integers(-5, 6, n).astype(float) if i % 2 else rng.normal(size=n)
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        pos, neg = s[y == 1], s[y == 0]
        brute = ((pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()) / (len(pos) * len(neg))
        exact += roc_auc(s, y) == brute
    worst = 0.0
    for i in range(10):
        r = Rng(i).child("fd")
        X, y, w = r.normal(size=(40, 6)), r.integers(0, 2, 40).astype(float), r.normal(size=7)
        _, g = logistic_loss_grad(w, X, y, 0.05)
        eps = 1e-6
        num = np.array([(logistic_loss_grad(w + eps * e, X, y, 0.05)[0] - logistic_loss_grad(w - eps * e, X, y, 0.05)[0])
                        / (2 * eps) for e in np.eye(7)])
        worst = max(worst, float(np.max(np.abs(num - g) / np.maximum(np.abs(g), 1e-8))))
    ok = exact == 500 and worst < 1e-4
    assert report(9, ok, f"AUC equals the pair-count oracle on {exact}/500 instances; "
                         f"max gradient relative error {worst:.2e} (need < 1e-4)")


def test_10_throughput(report, tmp_path):
    cfg = CFG.replace(corpus_mix={"dfs1": 1, "dfs2": 1})
    st = stream_corpus(cfg, 200, tmp_path, seed=5)
    rate = st.tasks_per_minute
    ok = rate >= 100
    assert report(10, ok, f"{st.n_tasks} relational tasks written in {st.seconds:.1f}s = {rate:.0f} tasks/min "
                          f"(need >= 100)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
