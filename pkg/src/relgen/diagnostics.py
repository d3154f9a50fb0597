"""Corpus diagnostics: feature-correlation block scores, corpus statistics and validation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import TASK_KINDS, GeneratorConfig
from .dataset_io import database_from_dict, read_manifest, read_sidecar, read_task, sidecar_path
from .content import validate_database
from .errors import ConfigError, ContractError, CorruptFileError, DegenerateTaskError, IncompatibleFormatError
from .rng import Rng
from .schema import ValidationReport

PAD_FAMILY = "pad"


@dataclass
class CorrelationReport:
    corr: np.ndarray  # width x width, NaN rows/cols for constant columns
    families: list
    within_mean_abs: float
    cross_mean_abs: float
    n_within: int
    n_cross: int

    @property
    def block_signature(self) -> bool:
        """True when same-family pairs correlate more strongly than cross-family pairs."""
        return self.n_within > 0 and self.n_cross > 0 and self.within_mean_abs > self.cross_mean_abs

    def to_dict(self) -> dict:
        return {
            "within_mean_abs": self.within_mean_abs, "cross_mean_abs": self.cross_mean_abs,
            "n_within": self.n_within, "n_cross": self.n_cross, "block_signature": self.block_signature,
        }


def families_from_provenance(provenance) -> list:
    return [PAD_FAMILY if p is None else p.family for p in provenance]


def correlation_report(X, provenance=None, families=None) -> CorrelationReport:
    """Pearson correlations of the columns of ``X`` and within/cross family mean |rho|.

    Families come from ``families`` or from the first hop of each column's
    provenance. Constant columns are excluded from every pair.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ContractError("correlation_report expects a 2-D matrix")
    width = X.shape[1]
    if families is None:
        families = families_from_provenance(provenance) if provenance is not None else ["self"] * width
    families = list(families)
    if len(families) != width:
        raise ContractError(f"{len(families)} family labels for {width} columns")
    live = np.flatnonzero(X.std(axis=0) > 0)
    if live.size < 2:
        raise DegenerateTaskError("fewer than 2 non-constant columns")
    corr = np.full((width, width), np.nan)
    corr[np.ix_(live, live)] = np.corrcoef(X[:, live], rowvar=False)
    corr[live, live] = 1.0
    fam = np.array(families, dtype=object)[live]
    iu, ju = np.triu_indices(live.size, k=1)
    vals = np.abs(corr[live[iu], live[ju]])
    same = fam[iu] == fam[ju]
    within = float(vals[same].mean()) if same.any() else float("nan")
    cross = float(vals[~same].mean()) if (~same).any() else float("nan")
    return CorrelationReport(corr, families, within, cross, int(same.sum()), int((~same).sum()))


def random_partition_families(families, rng: Rng) -> list:
    """Shuffle family labels across columns: a control with the same block sizes but no structure."""
    fam = list(families)
    return [fam[i] for i in rng.permutation(len(fam))]


def chunk_families(width: int, n_blocks: int) -> list:
    """Contiguous equal-size pseudo-families, for matrices without relational provenance."""
    return [f"block{min(j * n_blocks // width, n_blocks - 1)}" for j in range(width)]


# corpus statistics -----------------------------------------------------------


def corpus_stats(out_dir) -> dict:
    """Aggregate statistics over a generated corpus directory (empty dict body for an empty dir)."""
    entries = [e for e in read_manifest(out_dir) if "file" in e]
    report = {"n_tasks": len(entries), "by_kind": {k: 0 for k in TASK_KINDS}}
    if not entries:
        return report
    out = Path(out_dir)
    prevalence, blocks, seen_db = [], {k: [] for k in TASK_KINDS}, set()
    gini_by_mode = {"mode_a": [], "mode_b": []}
    for e in entries:
        kind = e["kind"]
        report["by_kind"][kind] = report["by_kind"].get(kind, 0) + 1
        task = read_task(out / e["file"])
        side = read_sidecar(sidecar_path(out / e["file"]))
        prevalence.append(float(task.y.mean()))
        try:
            blocks[kind].append(correlation_report(task.X, task.provenance))
        except DegenerateTaskError:
            pass
        db_key = (kind, side.get("slot"))
        if db_key not in seen_db:
            seen_db.add(db_key)
            for rel in side.get("structure", []):
                gini_by_mode["mode_b" if rel["mode_mix"] >= 0.5 else "mode_a"].append(rel["gini"])
    hist, edges = np.histogram(prevalence, bins=10, range=(0.0, 1.0))
    report["label_prevalence"] = {"mean": float(np.mean(prevalence)), "hist": hist.tolist(), "edges": edges.tolist()}
    report["degree_gini"] = {
        k: {"n_relations": len(v), "mean": float(np.mean(v)) if v else None} for k, v in gini_by_mode.items()
    }
    report["correlation_blocks"] = {}
    for k, reps in blocks.items():
        if not reps:
            continue
        defined = [r for r in reps if r.n_within and r.n_cross]
        report["correlation_blocks"][k] = {
            "n_tasks": len(reps),
            "n_defined": len(defined),
            "block_signature_rate": float(np.mean([r.block_signature for r in reps])),
            "mean_within_abs": float(np.mean([r.within_mean_abs for r in defined])) if defined else None,
            "mean_cross_abs": float(np.mean([r.cross_mean_abs for r in defined])) if defined else None,
        }
    # throughput is not recorded in the corpus (keeps directories byte-reproducible)
    report["throughput"] = None
    return report


# validation ------------------------------------------------------------------


def validate_task_file(path, report: ValidationReport):
    path = Path(path)
    try:
        task = read_task(path)
    except (CorruptFileError, OSError) as exc:
        if isinstance(exc, IncompatibleFormatError):
            report.add("FORMAT", str(exc), str(path))
        else:
            report.add("CORRUPT", str(exc), str(path))
        return
    side = sidecar_path(path)
    cfg = None
    if side.exists():
        try:
            doc = read_sidecar(side)
            if "config" in doc:
                cfg = GeneratorConfig.from_dict(doc["config"])
        except (CorruptFileError, IncompatibleFormatError, ConfigError) as exc:
            report.add("SIDECAR", str(exc), str(side))
    else:
        report.add("SIDECAR", "missing sidecar", str(side))
    try:
        task.check(cfg.min_ctx_for_both_classes if cfg else 8)
    except ContractError as exc:
        report.add("TASK_INVARIANT", str(exc), str(path))
    if task.provenance and len(task.provenance) != task.width:
        report.add("PROVENANCE", f"{len(task.provenance)} provenance entries for width {task.width}", str(path))
    live = ~task.mask if task.mask is not None else np.ones(task.X.shape, bool)
    if not np.all(np.isfinite(task.X[live])):
        report.add("NAN", "non-finite unmasked cell", str(path))
    tcol, ttab = task.meta.get("target_column"), task.meta.get("target_table")
    for p in task.provenance:
        if p is not None and p.is_identity and p.source_column == tcol and p.source_table == ttab:
            report.add("LEAKAGE", f"target column {tcol} appears as a feature", str(path))
    kind = task.meta.get("kind")
    if cfg is not None and kind in TASK_KINDS:
        want = cfg.single_table_width if kind == "single" else cfg.standard_width
        if task.width != want or task.X.shape[0] > cfg.task_rows:
            report.add("SHAPE", f"{task.X.shape} does not fit width {want}, rows <= {cfg.task_rows}", str(path))


def validate_database_file(path, report: ValidationReport):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        db = database_from_dict(doc, str(path))
    except json.JSONDecodeError as exc:
        report.add("CORRUPT", f"malformed JSON: {exc}", str(path))
        return
    except IncompatibleFormatError as exc:
        report.add("FORMAT", str(exc), str(path))
        return
    except CorruptFileError as exc:
        report.add("CORRUPT", str(exc), str(path))
        return
    for f in validate_database(db).findings:
        report.add(f.code, f.message, f"{path}:{f.where}")


def validate_path(path) -> ValidationReport:
    """Run every applicable invariant suite over a task file, database file or corpus directory."""
    path = Path(path)
    report = ValidationReport()
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file or directory")
    if path.is_file():
        if path.suffix == ".bin":
            validate_task_file(path, report)
        else:
            validate_database_file(path, report)
        return report
    try:
        entries = read_manifest(path)
    except CorruptFileError as exc:
        report.add("CORRUPT", str(exc), str(path / "manifest.jsonl"))
        entries = []
    for e in entries:
        if "aborted" in e:
            report.add("ABORTED", e.get("error", "generation aborted"), str(path / "manifest.jsonl"))
            continue
        f = path / e["file"]
        if not f.exists():
            report.add("MISSING", "manifest entry has no file", str(f))
        elif hashlib.sha256(f.read_bytes()).hexdigest() != e.get("sha256"):
            report.add("CORRUPT", "content hash differs from manifest", str(f))
    for f in sorted(path.iterdir()):
        if f.suffix == ".bin":
            validate_task_file(f, report)
        elif f.suffix == ".json" and not f.with_suffix(".bin").exists():
            validate_database_file(f, report)
    return report
