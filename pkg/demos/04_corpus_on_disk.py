"""
Writing, checking and summarizing a small corpus
================================================

"""

import json
import tempfile
from pathlib import Path

from relgen import GeneratorConfig
from relgen.dataset_io import directory_digest, read_task, stream_corpus
from relgen.diagnostics import corpus_stats, validate_path

out = Path(tempfile.mkdtemp()) / "corpus"
stats = stream_corpus(GeneratorConfig(seed=11), 30, out)
print(f"{stats.n_tasks} tasks from {stats.databases} databases, {stats.tasks_per_minute:.0f} tasks/min")
print("mix:", {k: round(v, 2) for k, v in stats.mix.items()})
print("digest:", directory_digest(out)[:16])

# binary payload plus a JSON sidecar per task
first = sorted(out.glob("*.bin"))[0]
task = read_task(first)
print(first.name, task.X.shape, "n_ctx", task.n_ctx, "target", task.meta["target_column"])

print("valid:", validate_path(out).ok)
s = corpus_stats(out)
print(json.dumps({k: s[k] for k in ("by_kind", "degree_gini", "correlation_blocks")}, indent=1))
