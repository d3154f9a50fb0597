"""On-disk formats: binary task files with JSON sidecars, database JSON, and the corpus writer.

Task file layout (all little-endian)::

    header   64 bytes  struct "<8sIIIIIQQQQI"
             magic "RDBPFN01", version, n_rows, width, n_ctx, flags,
             x_off, y_off, mask_off, end_off, crc32
    X        n_rows * width float32, column-major, context rows first
    y        n_rows uint8
    mask     ceil(n_rows * width / 8) bytes, column-major bitset (flag bit 0)

The CRC32 covers the header with the crc field zeroed plus the payload.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TASK_KINDS, GeneratorConfig
from .content import DatabaseInstance
from .dfs import FeaturePath
from .errors import ConfigError, ContractError, CorruptFileError, GenerationError, IncompatibleFormatError
from .rng import Rng
from .schema import SchemaGraph
from .structure import InstanceGraph, TableRows, degree_histogram, gini
from .tasks import IclTask, generate_tasks

MAGIC = b"RDBPFN01"
FORMAT_VERSION = 1
SIDECAR_VERSION = 1
DB_FORMAT = "relgen-db"
HEADER = struct.Struct("<8sIIIIIQQQQI")
FLAG_MASK = 1


def _payload_layout(n_rows: int, width: int, has_mask: bool):
    x_off = HEADER.size
    y_off = x_off + 4 * n_rows * width
    mask_off = y_off + n_rows
    end = mask_off + (math.ceil(n_rows * width / 8) if has_mask else 0)
    return x_off, y_off, mask_off, end


def encode_task(task: IclTask) -> bytes:
    """Serialize the numeric part of a task to bytes."""
    X = task.X
    n_rows, width = X.shape
    if task.n_query < 1:
        raise ContractError("refusing to write a task with an empty query set")
    if task.X_query.shape[1] != task.width:
        raise ContractError("context and query widths differ")
    has_mask = task.mask_ctx is not None
    x_off, y_off, mask_off, end = _payload_layout(n_rows, width, has_mask)
    parts = [
        np.asarray(X, dtype="<f4").tobytes(order="F"),
        np.asarray(task.y, dtype=np.uint8).tobytes(),
    ]
    if has_mask:
        parts.append(np.packbits(np.asarray(task.mask, bool).ravel(order="F"), bitorder="little").tobytes())
    payload = b"".join(parts)
    fields = (MAGIC, FORMAT_VERSION, n_rows, width, task.n_ctx, FLAG_MASK if has_mask else 0, x_off, y_off, mask_off, end)
    crc = zlib.crc32(HEADER.pack(*fields, 0) + payload)
    return HEADER.pack(*fields, crc) + payload


def decode_task(blob: bytes, where: str = "<bytes>") -> IclTask:
    """Inverse of ``encode_task``; any inconsistency raises instead of returning a partial task."""
    if len(blob) < HEADER.size:
        raise CorruptFileError(f"{where}: {len(blob)} bytes is shorter than the header")
    magic, version, n_rows, width, n_ctx, flags, x_off, y_off, mask_off, end, crc = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise IncompatibleFormatError(f"{where}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise IncompatibleFormatError(f"{where}: format version {version}, reader supports {FORMAT_VERSION}")
    has_mask = bool(flags & FLAG_MASK)
    if flags & ~FLAG_MASK:
        raise CorruptFileError(f"{where}: unknown flag bits {flags:#x}")
    if (x_off, y_off, mask_off, end) != _payload_layout(n_rows, width, has_mask):
        raise CorruptFileError(f"{where}: header offsets disagree with dims {n_rows}x{width}")
    if end != len(blob):
        raise CorruptFileError(f"{where}: file has {len(blob)} bytes, header says {end}")
    if zlib.crc32(blob[: HEADER.size - 4] + b"\0\0\0\0" + blob[HEADER.size:]) != crc:
        raise CorruptFileError(f"{where}: checksum mismatch")
    if not 1 <= n_ctx < n_rows:
        raise CorruptFileError(f"{where}: n_ctx={n_ctx} leaves no query rows out of {n_rows}")
    X = np.frombuffer(blob, dtype="<f4", count=n_rows * width, offset=x_off).reshape((n_rows, width), order="F")
    X = X.astype(np.float32)
    y = np.frombuffer(blob, dtype=np.uint8, count=n_rows, offset=y_off).copy()
    mask = None
    if has_mask:
        bits = np.unpackbits(np.frombuffer(blob, dtype=np.uint8, offset=mask_off), bitorder="little")
        mask = bits[: n_rows * width].astype(bool).reshape((n_rows, width), order="F")
    return IclTask(
        X[:n_ctx], y[:n_ctx], X[n_ctx:], y[n_ctx:],
        None if mask is None else mask[:n_ctx], None if mask is None else mask[n_ctx:],
    )


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def task_sidecar(task: IclTask, config: GeneratorConfig | None = None, extra: dict | None = None) -> dict:
    doc = {
        "sidecar_version": SIDECAR_VERSION,
        "meta": task.meta,
        "provenance": [p.to_dict() if isinstance(p, FeaturePath) else p for p in task.provenance],
    }
    if config is not None:
        doc["config_digest"] = config.digest()
        doc["config"] = config.to_dict()
    if extra:
        doc.update(extra)
    return doc


def _dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_task(task: IclTask, path, config: GeneratorConfig | None = None, extra: dict | None = None) -> Path:
    """Write ``path`` (binary) and its ``.json`` sidecar; returns the binary path."""
    path = Path(path)
    blob = encode_task(task)
    side = _dump_json(task_sidecar(task, config, extra))
    try:
        path.write_bytes(blob)
        sidecar_path(path).write_text(side + "\n")
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    return path


def read_task(path, with_sidecar: bool = True) -> IclTask:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    task = decode_task(blob, str(path))
    side = sidecar_path(path)
    if with_sidecar and side.exists():
        doc = read_sidecar(side)
        task.meta = doc.get("meta", {})
        task.provenance = [FeaturePath.from_dict(p) if p is not None else None for p in doc.get("provenance", [])]
    return task


def read_sidecar(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"{path}: malformed sidecar JSON: {exc}") from exc
    if doc.get("sidecar_version") != SIDECAR_VERSION:
        raise IncompatibleFormatError(f"{path}: sidecar version {doc.get('sidecar_version')!r}")
    return doc


# databases ------------------------------------------------------------------


def database_to_dict(db: DatabaseInstance) -> dict:
    tables = []
    for t in db.schema.tables:
        rows = db.graph.rows(t.table_id)
        tables.append({
            "table_id": t.table_id,
            "latent": rows.latent.tolist(),
            "embedding": rows.embedding.tolist(),
            "timestamps": rows.timestamps.tolist(),
            "fks": {k: v.tolist() for k, v in sorted(rows.fks.items())},
            "mode_mix": rows.mode_mix,
            "features": {k: v.tolist() for k, v in sorted(db.features[t.table_id].items())},
        })
    return {"format": DB_FORMAT, "version": FORMAT_VERSION, "schema": db.schema.to_dict(), "meta": db.meta, "tables": tables}


def database_from_dict(doc: dict, where: str = "<dict>") -> DatabaseInstance:
    """Rebuild a database; structural damage raises, semantic damage is left for validation."""
    if doc.get("format") != DB_FORMAT:
        raise IncompatibleFormatError(f"{where}: not a {DB_FORMAT} document")
    if doc.get("version") != FORMAT_VERSION:
        raise IncompatibleFormatError(f"{where}: database format version {doc.get('version')!r}")
    try:
        schema = SchemaGraph.from_dict(doc["schema"])
        rows, features = [], []
        for t in doc["tables"]:
            rows.append(TableRows(
                int(t["table_id"]),
                np.asarray(t["latent"], dtype=np.float32).reshape(len(t["latent"]), -1),
                np.asarray(t["embedding"], dtype=np.float32).reshape(len(t["embedding"]), -1),
                np.asarray(t["timestamps"], dtype=np.float64),
                {k: np.asarray(v, dtype=np.int64) for k, v in t["fks"].items()},
                float(t.get("mode_mix", 0.0)),
            ))
            features.append({k: np.asarray(v, dtype=np.float64) for k, v in t["features"].items()})
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(f"{where}: malformed database document ({exc})") from exc
    if len(rows) != schema.n_tables:
        raise CorruptFileError(f"{where}: {len(rows)} tables stored, schema declares {schema.n_tables}")
    return DatabaseInstance(schema, InstanceGraph(schema, rows), features, doc.get("meta", {}))


def save_database(db: DatabaseInstance, path) -> Path:
    path = Path(path)
    path.write_text(_dump_json(database_to_dict(db)) + "\n")
    return path


def load_database(path) -> DatabaseInstance:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"{path}: malformed JSON: {exc}") from exc
    return database_from_dict(doc, str(path))


def structure_stats(db: DatabaseInstance) -> list:
    """Per relation: the child table's Mode-B share and the parent degree Gini."""
    out = []
    for r, e in enumerate(db.schema.edges):
        out.append({
            "relation": r,
            "parent": e.parent,
            "child": e.child,
            "mode_mix": float(db.graph.rows(e.child).mode_mix),
            "gini": gini(degree_histogram(db.graph, r)),
        })
    return out


# corpus ---------------------------------------------------------------------


def mix_quotas(n_tasks: int, mix: dict) -> dict:
    """Largest-remainder split of ``n_tasks`` over the kinds in ``mix`` (ties by kind order)."""
    kinds = [k for k in TASK_KINDS if mix.get(k, 0) > 0]
    total = float(sum(mix[k] for k in kinds))
    exact = {k: n_tasks * mix[k] / total for k in kinds}
    quotas = {k: int(math.floor(v)) for k, v in exact.items()}
    left = n_tasks - sum(quotas.values())
    for k in sorted(kinds, key=lambda k: (-(exact[k] - quotas[k]), TASK_KINDS.index(k)))[:left]:
        quotas[k] += 1
    return {k: quotas.get(k, 0) for k in TASK_KINDS}


def global_indices(quotas: dict) -> dict:
    """Interleave kinds by fractional position so any prefix of the corpus keeps the mix."""
    keyed = []
    for k in TASK_KINDS:
        q = quotas.get(k, 0)
        keyed.extend(((i + 0.5) / q, TASK_KINDS.index(k), k, i) for i in range(q))
    keyed.sort()
    out = {k: [0] * quotas.get(k, 0) for k in TASK_KINDS}
    for g, (_, _, k, i) in enumerate(keyed):
        out[k][i] = g
    return out


def task_filename(seed: int, index: int) -> str:
    return f"task_{seed}_{index:07d}.bin"


def _run_slot(args):
    cfg_dict, seed, kind, slot = args
    cfg = GeneratorConfig.from_dict(cfg_dict)
    batch = generate_tasks(cfg, Rng(seed).child("corpus", kind, slot), kind)
    return batch.tasks, batch.discarded, structure_stats(batch.db)


@dataclass
class CorpusStats:
    n_tasks: int = 0
    discarded: int = 0
    databases: int = 0
    by_kind: dict = field(default_factory=dict)
    seconds: float = 0.0
    manifest: str = ""
    aborted: bool = False

    @property
    def tasks_per_minute(self) -> float:
        return 60.0 * self.n_tasks / self.seconds if self.seconds > 0 else float("inf")

    @property
    def mix(self) -> dict:
        return {k: (v / self.n_tasks if self.n_tasks else 0.0) for k, v in self.by_kind.items()}

    def to_dict(self) -> dict:
        return {
            "n_tasks": self.n_tasks, "discarded": self.discarded, "databases": self.databases,
            "by_kind": self.by_kind, "mix": self.mix, "seconds": self.seconds,
            "tasks_per_minute": self.tasks_per_minute, "manifest": self.manifest, "aborted": self.aborted,
        }


def stream_corpus(config: GeneratorConfig, n_tasks: int, out_dir, workers: int = 1, seed: int | None = None) -> CorpusStats:
    """Generate ``n_tasks`` task files plus ``manifest.jsonl`` in ``out_dir``.

    Each kind draws databases from its own slot stream (seed, kind, slot), and
    slots are consumed in slot order, so the files depend only on the seed and
    config, never on ``workers``. Throughput is returned, not written, so
    repeated runs produce byte-identical directories.
    """
    if n_tasks < 0:
        raise ConfigError("n_tasks must be >= 0", "n_tasks")
    if workers < 1:
        raise ConfigError("workers must be >= 1", "workers")
    seed = config.seed if seed is None else int(seed)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{out}: {exc.strerror or exc}") from exc
    quotas = mix_quotas(n_tasks, config.corpus_mix)
    index = global_indices(quotas)
    cfg_dict = config.to_dict()
    stats = CorpusStats(by_kind={k: 0 for k in TASK_KINDS})
    entries = []
    start = time.perf_counter()
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    per_db = max(1, config.targets_per_schema)
    try:
        for kind in TASK_KINDS:
            quota, slot = quotas[kind], 0
            while stats.by_kind[kind] < quota:
                if slot > 20 * quota + 20:
                    raise GenerationError(f"{kind}: too many degenerate databases", "corpus")
                need = quota - stats.by_kind[kind]
                n_slots = max(workers, math.ceil(need / per_db) + 1)
                jobs = [(cfg_dict, seed, kind, j) for j in range(slot, slot + n_slots)]
                results = pool.map(_run_slot, jobs) if pool is not None else map(_run_slot, jobs)
                for j, (tasks, discarded, struct_stats) in zip(range(slot, slot + n_slots), results):
                    if stats.by_kind[kind] >= quota:
                        break
                    stats.databases += 1
                    stats.discarded += discarded
                    for t_i, task in enumerate(tasks):
                        i = stats.by_kind[kind]
                        if i >= quota:
                            break
                        g = index[kind][i]
                        path = out / task_filename(seed, g)
                        write_task(task, path, config, {"index": g, "seed": seed, "kind": kind, "slot": j,
                                                        "slot_task": t_i, "structure": struct_stats})
                        entries.append({
                            "index": g, "file": path.name, "kind": kind,
                            "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
                            "n_rows": task.X.shape[0], "width": task.width, "n_ctx": task.n_ctx,
                        })
                        stats.by_kind[kind] += 1
                        stats.n_tasks += 1
                slot += n_slots
    except Exception as exc:
        stats.aborted = True
        _write_manifest(out, entries, error=f"{type(exc).__name__}: {exc}")
        raise GenerationError(f"corpus generation aborted after {stats.n_tasks} tasks: {exc}", "corpus") from exc
    finally:
        if pool is not None:
            pool.shutdown()
    stats.manifest = str(_write_manifest(out, entries))
    stats.seconds = time.perf_counter() - start
    return stats


def _write_manifest(out: Path, entries: list, error: str | None = None) -> Path:
    path = out / "manifest.jsonl"
    lines = [_dump_json(e) for e in sorted(entries, key=lambda e: e["index"])]
    if error is not None:
        lines.append(_dump_json({"aborted": True, "error": error}))
    path.write_text("".join(line + "\n" for line in lines))
    return path


def read_manifest(out_dir) -> list:
    path = Path(out_dir) / "manifest.jsonl"
    if not path.exists():
        return []
    rows = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise CorruptFileError(f"{path}:{n}: {exc}") from exc
    return rows


def directory_digest(out_dir) -> str:
    """sha256 over (name, content) of every file, in name order."""
    h = hashlib.sha256()
    for p in sorted(Path(out_dir).iterdir()):
        if p.is_file():
            h.update(p.name.encode() + b"\0" + hashlib.sha256(p.read_bytes()).digest())
    return h.hexdigest()


def iter_tasks(out_dir):
    """Yield (manifest entry, task) for every task listed in the manifest, in index order."""
    out = Path(out_dir)
    for e in read_manifest(out):
        if "file" in e:
            yield e, read_task(out / e["file"])

