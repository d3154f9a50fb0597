"""Structural generation: rows, foreign keys, timestamps and latent row states.

Source tables draw timestamps from their temporal signature and latents from
``MLP_init(noise ++ temporal features)``. Dependent tables use the selective
SCM: every child samples M candidate parent tuples, scores them against its
initial latent with query/key projections, picks one from the softmax, and
forms its final latent from the chosen tuple embedding. Feedback on parent
embeddings is what separates Mode A (one frozen batch, feedback deferred to
the end) from Mode B (mini-batches with feedback after each batch).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .config import GeneratorConfig
from .errors import ConfigError, ContractError, GenerationError
from .numeric import MlpParams, categorical_from_uniform, dense, mlp_forward, mlp_init, mlp_vjp, softmax
from .rng import Rng
from .schema import SchemaGraph, ValidationReport, topological_order
from .temporal import TEMPORAL_DIM, TemporalSignature, eval_temporal, sample_temporal_signature, sample_timestamps

LINK_VARIANTS = ("attention", "fixed", "concat_mlp")


class RowNode(NamedTuple):
    table_id: int
    row_index: int
    latent: np.ndarray
    parent_embedding: np.ndarray
    timestamp: float | None


@dataclass
class TableRows:
    """Columnar rows of one table; the PK of row i is i."""

    table_id: int
    latent: np.ndarray  # (n, latent_dim) float32
    embedding: np.ndarray  # (n, embed_dim) float32, e_u after generation
    timestamps: np.ndarray  # (n,) float64
    fks: dict = field(default_factory=dict)  # fk column -> parent row index (int64)
    mode_mix: float = 0.0

    @property
    def n_rows(self) -> int:
        return self.latent.shape[0]


@dataclass
class StructParams:
    mlp_init: MlpParams
    w_embed: np.ndarray  # latent -> parent embedding
    mlp_comb: MlpParams | None = None
    mlp_child: MlpParams | None = None
    mlp_fb: MlpParams | None = None
    w_q: np.ndarray | None = None
    w_k: np.ndarray | None = None
    mlp_score: MlpParams | None = None
    n_candidates: int = 16
    mode_mix: float = 0.0
    feedback_scale: float = 0.2
    feedback_batch: int = 32
    embed_norm_cap: float = 50.0
    score_scale: float = 1.0
    feedback_drift: float = 0.1
    use_temporal: bool = True

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ConfigError("candidate count M must be >= 1", "n_candidates")
        if not 0.0 <= self.mode_mix <= 1.0:
            raise ConfigError("mode_mix must lie in [0, 1]", "mode_mix")

    def with_attention(self, w_q=None, w_k=None) -> "StructParams":
        """Copy with replaced query/key projections (e.g. zeros for uniform attachment)."""
        from dataclasses import replace

        return replace(
            self,
            w_q=self.w_q if w_q is None else np.asarray(w_q, np.float32),
            w_k=self.w_k if w_k is None else np.asarray(w_k, np.float32),
        )


def sample_struct_params(rng: Rng, config: GeneratorConfig, n_parents: int = 0, mode_mix=None) -> StructParams:
    d, e, a, hid = config.latent_dim, config.embed_dim, config.attn_dim, config.hidden_dim
    if mode_mix is None:
        lo, hi = config.mode_mix
        mode_mix = float(rng.child("mode_mix").uniform(lo, hi)) if hi > lo else lo
    kw = dict(
        mlp_init=mlp_init(rng.child("init"), [config.noise_dim + TEMPORAL_DIM, hid, d], "relu"),
        w_embed=mlp_init(rng.child("embed"), [d, e]).weights[0],
        n_candidates=config.n_candidates,
        mode_mix=float(mode_mix),
        feedback_scale=config.feedback_scale,
        feedback_batch=config.feedback_batch,
        embed_norm_cap=config.embed_norm_cap,
        score_scale=1.0 / (np.sqrt(a) * config.attn_temperature),
        use_temporal=config.temporal,
    )
    if n_parents > 0:
        kw.update(
            mlp_comb=mlp_init(rng.child("comb"), [n_parents * e, hid, e], "relu"),
            mlp_child=mlp_init(rng.child("child"), [d + e, hid, d], "relu"),
            mlp_fb=mlp_init(rng.child("fb"), [e + d, hid, e], "tanh"),
            w_q=mlp_init(rng.child("wq"), [d, a]).weights[0],
            w_k=mlp_init(rng.child("wk"), [e, a]).weights[0],
            mlp_score=mlp_init(rng.child("score"), [d + e, hid, 1], "relu"),
        )
    return StructParams(**kw)


class InstanceGraph:
    """Row-level graph: per-table rows plus FK links, oriented parent row -> child row.

    Relation ``r`` is ``schema.edges[r]``; its forward adjacency maps each child
    row to its parent row and the reverse adjacency is the exact transpose.
    """

    def __init__(self, schema: SchemaGraph, tables=None):
        self.schema = schema
        self.tables = list(tables) if tables is not None else [None] * schema.n_tables
        self.signatures = [None] * schema.n_tables
        self.params = [None] * schema.n_tables

    def rows(self, table_id: int) -> TableRows:
        t = self.tables[table_id]
        if t is None:
            raise GenerationError(f"table {self.schema.tables[table_id].name} is not populated", "structure")
        return t

    def n_rows(self, table_id: int) -> int:
        return self.rows(table_id).n_rows

    def row(self, table_id: int, i: int) -> RowNode:
        t = self.rows(table_id)
        has_ts = self.schema.tables[table_id].timestamp_column is not None
        return RowNode(table_id, i, t.latent[i], t.embedding[i], float(t.timestamps[i]) if has_ts else None)

    def relation(self, rel: int):
        """(parent_rows, child_rows) index arrays for relation ``rel``."""
        if not 0 <= rel < len(self.schema.edges):
            raise KeyError(f"unknown relation {rel}")
        e = self.schema.edges[rel]
        par = self.rows(e.child).fks[e.fk_column]
        return par, np.arange(par.shape[0], dtype=np.int64)

    def adjacency(self, rel: int, reverse: bool = False):
        """CSR neighbor lists: forward gives each child its parent, reverse gives each parent its children."""
        par, chi = self.relation(rel)
        e = self.schema.edges[rel]
        if not reverse:
            dst, src, n_dst = chi, par, self.n_rows(e.child)
        else:
            dst, src, n_dst = par, chi, self.n_rows(e.parent)
        order = np.lexsort((src, dst))
        indptr = np.concatenate([[0], np.cumsum(np.bincount(dst, minlength=n_dst))]).astype(np.int64)
        return indptr, src[order]

    def edges(self):
        """Iterate (parent RowNode index, child RowNode index, fk_column) over all relations."""
        for rel, e in enumerate(self.schema.edges):
            par, chi = self.relation(rel)
            for p, c in zip(par.tolist(), chi.tolist()):
                yield (e.parent, p), (e.child, c), e.fk_column


def sample_temporal(rng: Rng, config: GeneratorConfig) -> TemporalSignature:
    return sample_temporal_signature(rng, config)


def _temporal_features(sig, t, use_temporal):
    if not use_temporal or sig is None:
        return np.zeros((len(t), TEMPORAL_DIM))
    return eval_temporal(sig, t)


def gen_source_table(schema: SchemaGraph, table_id: int, n_rows: int, sig: TemporalSignature,
                     params: StructParams, rng: Rng) -> TableRows:
    if not schema.is_source(table_id):
        raise ContractError(f"table {schema.tables[table_id].name} is dependent, not a source table")
    if n_rows < 0:
        raise ContractError("n_rows must be >= 0")
    ts = np.sort(sample_timestamps(sig, n_rows, rng.child("ts")))
    eps = rng.child("noise").normal(size=(n_rows, params.mlp_init.fan_in - TEMPORAL_DIM))
    z = mlp_forward(params.mlp_init, np.hstack([eps, _temporal_features(sig, ts, params.use_temporal)]))
    emb = dense(z, params.w_embed.astype(np.float64))
    return TableRows(table_id, z.astype(np.float32), emb.astype(np.float32), ts, {}, params.mode_mix)


def _score_grad(params, variant, z0, x_sel):
    """Gradient of each child's score for its chosen tuple w.r.t. the tuple's parent embeddings."""
    if variant == "fixed":
        return np.zeros_like(x_sel)
    h = mlp_forward(params.mlp_comb, x_sel)
    if variant == "attention":
        q = dense(z0, params.w_q.astype(np.float64)) * params.score_scale
        grad_h = dense(q, params.w_k.astype(np.float64).T)
    else:
        ones = np.full((z0.shape[0], 1), params.score_scale)
        grad_in = mlp_vjp(params.mlp_score, np.hstack([z0, h]), ones)
        grad_h = grad_in[:, z0.shape[1]:]
    return mlp_vjp(params.mlp_comb, x_sel, grad_h)


def _feedback(params: StructParams, e: np.ndarray, z: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Parent-embedding update after a batch; realizes MLP_fb(e ++ z_v).

    ``grad`` is the mean gradient, over the children that picked this parent,
    of their selection score w.r.t. the parent's embedding. The update steps
    along it with length ``feedback_scale * |e|`` so a chosen parent becomes
    more compatible with the children that chose it (and, on average, with
    the population of future queries), plus a small child-dependent drift
    from the random MLP. The result is norm-capped.
    """
    lam = params.feedback_scale
    if lam == 0.0 or e.shape[0] == 0:
        return e
    e_norm = np.sqrt((e * e).sum(axis=1, keepdims=True))
    g_norm = np.sqrt((grad * grad).sum(axis=1, keepdims=True))
    step = grad / np.maximum(g_norm, 1e-12) * e_norm
    drift = params.feedback_drift * mlp_forward(params.mlp_fb, np.hstack([e, z]))
    new = e + lam * (step + drift)
    norms = np.sqrt((new * new).sum(axis=1, keepdims=True))
    return new * np.minimum(1.0, params.embed_norm_cap / np.maximum(norms, 1e-12))


def _score(params, variant, z0, h):
    """Scores (b, M) of candidate tuple embeddings ``h`` (b, M, e) for queries ``z0`` (b, d)."""
    b, m, e = h.shape
    if variant == "fixed":
        return np.zeros((b, m))
    if variant == "attention":
        q = dense(z0, params.w_q.astype(np.float64))
        k = dense(h.reshape(b * m, e), params.w_k.astype(np.float64)).reshape(b, m, -1)
        return params.score_scale * (q[:, None, :] * k).sum(axis=-1)
    x = np.concatenate([np.repeat(z0[:, None, :], m, axis=1), h], axis=-1).reshape(b * m, -1)
    return params.score_scale * mlp_forward(params.mlp_score, x).reshape(b, m)


def gen_dependent_table(graph: InstanceGraph, schema: SchemaGraph, table_id: int, n_rows: int,
                        params: StructParams, rng: Rng, sig: TemporalSignature | None = None,
                        order=None, variant: str = "attention", timestamp_gap: float = 0.02) -> InstanceGraph:
    """Populate dependent table ``table_id`` in place and return the graph.

    Candidate tuples are drawn uniformly with replacement from the parent
    cross product. All per-row draws are taken in processing order, so
    ``order`` (a permutation of row indices) only changes which row receives
    which draws. Rows ``order[:n_A]`` form the frozen Mode A batch, the rest
    are processed in Mode B mini-batches of ``feedback_batch``.
    """
    if variant not in LINK_VARIANTS:
        raise ConfigError(f"unknown link variant {variant!r}", "link_variant")
    rels = schema.parent_edges(table_id)
    if not rels:
        raise ContractError(f"table {schema.tables[table_id].name} has no foreign keys")
    parents = [schema.edges[r].parent for r in rels]
    for p in parents:
        if graph.tables[p] is None or graph.tables[p].n_rows == 0:
            raise GenerationError(f"parent table {schema.tables[p].name} is empty or unpopulated", "structure")
    if params.mlp_comb is None or params.mlp_comb.fan_in != len(parents) * graph.tables[parents[0]].embedding.shape[1]:
        raise ConfigError("structural params do not match the table's parent count")

    n = int(n_rows)
    order = np.arange(n) if order is None else np.asarray(order, dtype=np.int64)
    if sorted(order.tolist()) != list(range(n)):
        raise ContractError("order must be a permutation of the row indices")
    M = params.n_candidates
    p = len(parents)
    n_par = np.array([graph.tables[t].n_rows for t in parents])

    # per-position draws
    t_nom = np.sort(sample_timestamps(sig, n, rng.child("ts"))) if sig is not None else np.zeros(n)
    eps = rng.child("noise").normal(size=(n, params.mlp_init.fan_in - TEMPORAL_DIM))
    u_cand = rng.child("cand").random((n, M, p))
    cand = np.minimum((u_cand * n_par).astype(np.int64), n_par - 1)
    u_sel = rng.child("select").random(n)
    gaps = rng.child("gap").exponential(1.0, n) * timestamp_gap

    z0 = mlp_forward(params.mlp_init, np.hstack([eps, _temporal_features(sig, t_nom, params.use_temporal)]))
    emb = [graph.tables[t].embedding.astype(np.float64) for t in parents]
    chosen = np.zeros((n, p), dtype=np.int64)
    z_pos = np.zeros((n, params.mlp_child.fan_out))

    n_b = int(round(params.mode_mix * n))
    n_a = n - n_b
    batches = ([(0, n_a)] if n_a else []) + [
        (s, min(s + params.feedback_batch, n)) for s in range(n_a, n, params.feedback_batch)
    ]
    for lo, hi in batches:
        cb = cand[lo:hi]
        b = hi - lo
        parts = [emb[t][cb[:, :, t]] for t in range(p)]
        h = mlp_forward(params.mlp_comb, np.concatenate(parts, axis=-1).reshape(b * M, -1)).reshape(b, M, -1)
        probs = softmax(_score(params, variant, z0[lo:hi], h), axis=1)
        j = categorical_from_uniform(probs, u_sel[lo:hi])
        chosen[lo:hi] = cb[np.arange(b), j]
        z = mlp_forward(params.mlp_child, np.hstack([z0[lo:hi], h[np.arange(b), j]]))
        z_pos[lo:hi] = z
        if params.feedback_scale == 0.0:
            continue
        # one update per selected parent, averaging over the children it received
        x_sel = np.concatenate([emb[t][chosen[lo:hi, t]] for t in range(p)], axis=1)
        grad = _score_grad(params, variant, z0[lo:hi], x_sel)
        e_dim = emb[0].shape[1]
        for t in range(p):
            uniq, inv = np.unique(chosen[lo:hi, t], return_inverse=True)
            cnt = np.bincount(inv)[:, None]
            zsum = np.zeros((len(uniq), z.shape[1]))
            gsum = np.zeros((len(uniq), e_dim))
            np.add.at(zsum, inv, z)
            np.add.at(gsum, inv, grad[:, t * e_dim:(t + 1) * e_dim])
            emb[t][uniq] = _feedback(params, emb[t][uniq], zsum / cnt, gsum / cnt)

    for t, tid in enumerate(parents):
        graph.tables[tid].embedding = emb[t].astype(np.float32)

    inv_order = np.empty(n, dtype=np.int64)
    inv_order[order] = np.arange(n)
    z_rows = z_pos[inv_order]
    chosen_rows = chosen[inv_order]
    parent_ts = np.zeros(n)
    for t, tid in enumerate(parents):
        parent_ts = np.maximum(parent_ts, graph.tables[tid].timestamps[chosen_rows[:, t]])
    ts = np.maximum(t_nom[inv_order], parent_ts) + gaps[inv_order]

    fks = {schema.edges[r].fk_column: chosen_rows[:, t].copy() for t, r in enumerate(rels)}
    own_emb = dense(z_rows, params.w_embed.astype(np.float64))
    graph.tables[table_id] = TableRows(
        table_id, z_rows.astype(np.float32), own_emb.astype(np.float32), ts, fks, params.mode_mix
    )
    return graph


def simple_edge_variant(graph: InstanceGraph, schema: SchemaGraph, table_id: int, n_rows: int, variant: str,
                        rng: Rng, params: StructParams, sig: TemporalSignature | None = None) -> InstanceGraph:
    """Ablation link generators: ``fixed`` (uniform) or ``concat_mlp`` scoring."""
    if variant not in ("fixed", "concat_mlp"):
        raise ConfigError(f"unknown edge variant {variant!r}", "variant")
    return gen_dependent_table(graph, schema, table_id, n_rows, params, rng, sig=sig, variant=variant)


def degree_histogram(graph: InstanceGraph, relation: int) -> np.ndarray:
    """Children per parent row for ``relation``; sums to the child row count."""
    par, _ = graph.relation(relation)
    return np.bincount(par, minlength=graph.n_rows(graph.schema.edges[relation].parent))


def gini(values) -> float:
    """Gini coefficient of a non-negative vector (0 for all-equal or empty)."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    if n == 0 or x.sum() == 0:
        return 0.0
    ranks = np.arange(1, n + 1)
    return float((2.0 * (ranks * x).sum()) / (n * x.sum()) - (n + 1.0) / n)


def generate_structure(schema: SchemaGraph, config: GeneratorConfig, rng: Rng) -> InstanceGraph:
    """Populate every table in topological order."""
    graph = InstanceGraph(schema)
    for tid in topological_order(schema):
        trng = rng.child("table", tid)
        n_rows = int(trng.child("size").integers(config.min_rows, config.max_rows, endpoint=True))
        sig = sample_temporal(trng.child("temporal"), config)
        n_par = len(schema.parent_edges(tid))
        params = sample_struct_params(trng.child("params"), config, n_par)
        graph.signatures[tid] = sig
        graph.params[tid] = params
        if n_par == 0:
            graph.tables[tid] = gen_source_table(schema, tid, n_rows, sig, params, trng.child("rows"))
        else:
            gen_dependent_table(graph, schema, tid, n_rows, params, trng.child("rows"), sig=sig,
                                variant=config.link_variant, timestamp_gap=config.timestamp_gap * config.time_horizon)
    return graph


def validate_instance(graph: InstanceGraph) -> ValidationReport:
    report = ValidationReport()
    schema = graph.schema
    for tid, t in enumerate(graph.tables):
        name = schema.tables[tid].name
        if t is None:
            report.add("UNPOPULATED", "table has no rows object", name)
            continue
        if not np.all(np.isfinite(t.latent)) or not np.all(np.isfinite(t.embedding)):
            report.add("NAN", "non-finite latent or embedding", name)
        if t.timestamps.shape != (t.n_rows,) or not np.all(np.isfinite(t.timestamps)):
            report.add("NAN", "missing or non-finite timestamps", name)
        expected = {schema.edges[r].fk_column for r in schema.parent_edges(tid)}
        if set(t.fks) != expected:
            report.add("REF_INTEGRITY", f"FK columns {sorted(t.fks)} != schema {sorted(expected)}", name)
    for rel, e in enumerate(schema.edges):
        child, parent = graph.tables[e.child], graph.tables[e.parent]
        if child is None or parent is None or e.fk_column not in child.fks:
            continue
        fk = np.asarray(child.fks[e.fk_column])
        if fk.shape != (child.n_rows,):
            report.add("REF_INTEGRITY", f"FK column length {fk.shape} != rows {child.n_rows}",
                       f"{schema.tables[e.child].name}.{e.fk_column}")
            continue
        bad = int(np.sum((fk < 0) | (fk >= parent.n_rows)))
        if bad:
            report.add("REF_INTEGRITY", f"{bad} FK values do not resolve to a parent PK",
                       f"{schema.tables[e.child].name}.{e.fk_column}")
    return report
