"""
From tables to in-context tasks
===============================

"""

import numpy as np
from relgen import GeneratorConfig, Rng, generate_database
from relgen.dfs import dfs_linearize, enumerate_paths
from relgen.evaluate import evaluate_task
from relgen.tasks import tasks_from_database

cfg = GeneratorConfig(seed=5, n_ctx=512)
db = generate_database(cfg, Rng(cfg.seed).child("db"))

# candidate feature paths around the most connected table
target = max(range(db.schema.n_tables),
             key=lambda t: len(db.schema.parent_edges(t)) + len(db.schema.child_edges(t)))
for depth in (1, 2):
    print(f"depth {depth}: {len(enumerate_paths(db.schema, target, depth))} candidate paths")

# the flattened table keeps provenance for every column
lin = dfs_linearize(db, target, cfg, Rng(0))
for p in lin.provenance[:8]:
    print("  ", p.name(db.schema) if p is not None else "<pad>")

# several binary targets per database, each with its own context/query split
for kind in ("dfs1", "dfs2"):
    batch = tasks_from_database(db, cfg, Rng(1), kind, target_table=target)
    aucs = [evaluate_task(t).auc for t in batch.tasks]
    print(kind, "tasks:", len(aucs), "median logistic AUC:", np.round(np.median(aucs), 3) if aucs else None)

# shuffling labels removes the signal
task = batch.tasks[0]
task.y_ctx = Rng(9).permutation(task.y_ctx)
print("shuffled-label AUC:", round(evaluate_task(task).auc, 3))
