"""Command-line entry point.

Exit codes: 0 success, 1 validation findings, 2 configuration error, 3 I/O
or format error. Errors and findings go to stderr as JSON lines.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import GeneratorConfig
from .content import generate_database
from .dataset_io import iter_tasks, load_database, save_database, stream_corpus, task_filename, write_task
from .diagnostics import corpus_stats, validate_path
from .errors import ConfigError, CorruptFileError, GenerationError, IncompatibleFormatError
from .evaluate import BASELINES, evaluate_stream
from .rng import Rng
from .tasks import tasks_from_database

EXIT_OK, EXIT_FINDINGS, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
SEED_ENV = "RELGEN_SEED"


def _emit_error(kind: str, message: str, **extra):
    doc = {"error": kind, "message": message}
    doc.update({k: v for k, v in extra.items() if v is not None})
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)


def _print(doc):
    print(json.dumps(doc, sort_keys=True, indent=2, default=float))


def _load_config(path, seed=None) -> GeneratorConfig:
    cfg = GeneratorConfig.from_json(path) if path else GeneratorConfig()
    if seed is None and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer", "seed") from None
    return cfg.replace(seed=int(seed)) if seed is not None else cfg


def cmd_generate(args) -> int:
    cfg = _load_config(args.config, args.seed)
    if args.db_only:
        db = generate_database(cfg, Rng(cfg.seed).child("db"), single_table=args.db_only == "single")
        path = save_database(db, args.out)
        _print({"database": str(path), "tables": db.schema.n_tables, "relations": len(db.schema.edges),
                "rows": [db.n_rows(t) for t in range(db.schema.n_tables)]})
        return EXIT_OK
    stats = stream_corpus(cfg, args.count, args.out, workers=args.workers)
    _print(stats.to_dict())
    return EXIT_OK


def cmd_validate(args) -> int:
    report = validate_path(args.path)
    for f in report.findings:
        print(json.dumps(f.to_dict(), sort_keys=True), file=sys.stderr)
    _print({"path": args.path, "ok": report.ok, "n_findings": len(report.findings),
            "codes": sorted(set(report.codes()))})
    return EXIT_OK if report.ok else EXIT_FINDINGS


def cmd_stats(args) -> int:
    path = Path(args.path)
    if not path.is_dir():
        raise FileNotFoundError(f"{path}: not a directory")
    _print(corpus_stats(path))
    return EXIT_OK


def _resolve_table(db, ref: str) -> int:
    for t in db.schema.tables:
        if t.name == ref or str(t.table_id) == ref:
            return t.table_id
    raise ConfigError(f"no table {ref!r} in database", "target")


def cmd_dfs(args) -> int:
    cfg = _load_config(args.config, args.seed)
    if args.depth is not None:
        cfg = cfg.replace(dfs_depth=args.depth)
    db = load_database(args.database)
    target = _resolve_table(db, args.target) if args.target is not None else None
    kind = f"dfs{cfg.dfs_depth}" if db.schema.edges else "single"
    batch = tasks_from_database(db, cfg, Rng(cfg.seed).child("dfs-cli"), kind, target_table=target)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, task in enumerate(batch.tasks):
        files.append(str(write_task(task, out / task_filename(cfg.seed, i), cfg, {"index": i, "kind": kind})))
    _print({"tasks": len(files), "discarded": batch.discarded, "reasons": batch.reasons, "files": files})
    return EXIT_OK


def _shuffled(tasks, seed):
    for i, (_, task) in enumerate(tasks):
        rng = Rng(seed).child("shuffle", i)
        task.y_ctx = rng.permutation(task.y_ctx)
        task.y_query = rng.permutation(task.y_query)
        yield task


def cmd_eval(args) -> int:
    seed = args.seed if args.seed is not None else int(os.environ.get(SEED_ENV, 0))
    tasks = iter_tasks(args.path)
    stream = _shuffled(tasks, seed) if args.shuffle_labels else (t for _, t in tasks)
    stats = evaluate_stream(stream, args.baseline, report_path=args.report)
    stats["shuffle_labels"] = bool(args.shuffle_labels)
    _print(stats)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors become ConfigError so they reach stderr as JSON."""

    def error(self, message):
        raise ConfigError(message, "argv")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="relgen", description="Synthetic relational databases and in-context tasks.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a corpus of task files")
    g.add_argument("-c", "--config", help="JSON config (defaults for missing fields)")
    g.add_argument("-n", "--count", type=int, default=10)
    g.add_argument("-o", "--out", required=True, help="output directory (or file with --db-only)")
    g.add_argument("--seed", type=int, help=f"overrides the config seed; falls back to ${SEED_ENV}")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--db-only", nargs="?", const="relational", choices=("relational", "single"),
                   help="write one database as JSON instead of a corpus")
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("validate", help="check a task file, database file or corpus directory")
    v.add_argument("path")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("stats", help="corpus-level statistics")
    s.add_argument("path")
    s.set_defaults(func=cmd_stats)

    d = sub.add_parser("dfs", help="linearize a saved database into task files")
    d.add_argument("database")
    d.add_argument("-o", "--out", required=True)
    d.add_argument("-c", "--config")
    d.add_argument("--target", help="target table name or id (default: sampled)")
    d.add_argument("--depth", type=int, choices=(1, 2))
    d.add_argument("--seed", type=int)
    d.set_defaults(func=cmd_dfs)

    e = sub.add_parser("eval", help="score a corpus with an in-context baseline")
    e.add_argument("path")
    e.add_argument("--baseline", choices=BASELINES, default="logistic")
    e.add_argument("--report", help="JSON-lines per-task report")
    e.add_argument("--shuffle-labels", action="store_true", help="label-shuffle control")
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        _emit_error("config", str(exc), field=exc.field)
        return EXIT_CONFIG
    except (CorruptFileError, IncompatibleFormatError) as exc:
        _emit_error("format", str(exc))
        return EXIT_IO
    except OSError as exc:
        _emit_error("io", str(exc))
        return EXIT_IO
    except GenerationError as exc:
        _emit_error("generation", str(exc), stage=exc.stage)
        return EXIT_FINDINGS


if __name__ == "__main__":
    sys.exit(main())
