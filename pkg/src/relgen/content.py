"""Content completion: bidirectional message passing over the instance graph and decoding.

Each relation ``r`` carries two message maps: ``(r, "fwd")`` sends parent
state to children and ``(r, "bwd")`` sends child state to parents. A row's
incoming messages for one relation direction are summed (or averaged); the
sums for all relation directions are concatenated in canonical order, with
zeros for relations not incident to the row's table, and fed with the row's
state to a single update MLP.

Neighbor messages are accumulated in order of their values, never their row
ids, so relabeling rows leaves every embedding bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import GeneratorConfig
from .errors import ConfigError, GenerationError, IntegrityError, RelgenError
from .numeric import MlpParams, mlp_forward, mlp_init
from .rng import Rng
from .schema import CATEGORICAL, CONTINUOUS, SchemaGraph, ValidationReport, sample_schema, single_table_schema, validate_schema
from .structure import InstanceGraph, generate_structure, validate_instance

DIRECTIONS = ("fwd", "bwd")


@dataclass(frozen=True)
class ColumnDecode:
    name: str
    kind: str
    channel: int
    clip: tuple = (-3.0, 3.0)
    levels: tuple = ()  # cumulative class proportions, len == cardinality - 1


@dataclass
class ContentParams:
    messages: dict  # (relation, direction) -> MlpParams
    update: MlpParams
    rounds: int
    trunk: MlpParams
    heads: dict  # table_id -> MlpParams
    decode: dict  # table_id -> list[ColumnDecode]
    n_relations: int
    aggregation: str = "sum"
    directions: tuple = DIRECTIONS

    def __post_init__(self):
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0", "rounds")


def sample_content_params(rng: Rng, schema: SchemaGraph, config: GeneratorConfig) -> ContentParams:
    d, hid = config.latent_dim, config.hidden_dim
    R = len(schema.edges)
    messages = {
        (r, dr): mlp_init(rng.child("msg", r, dr), [d, hid, d], "relu") for r in range(R) for dr in DIRECTIONS
    }
    update = mlp_init(rng.child("update"), [d * (1 + 2 * R), hid, d], "tanh")
    trunk = mlp_init(rng.child("trunk"), [d, hid, hid], "tanh")
    heads, decode = {}, {}
    for t in schema.tables:
        cols = t.decoded
        trng = rng.child("decode", t.table_id)
        heads[t.table_id] = mlp_init(trng.child("head"), [hid, max(1, len(cols))], "identity")
        specs = []
        for ch, c in enumerate(cols):
            crng = trng.child("col", ch)
            if c.kind == CONTINUOUS:
                specs.append(ColumnDecode(c.name, CONTINUOUS, ch,
                                          clip=(-float(crng.uniform(1.5, 4.0)), float(crng.uniform(1.5, 4.0)))))
            else:
                props = crng.dirichlet(np.full(c.cardinality, 2.0))
                levels = tuple(float(x) for x in np.clip(np.cumsum(props)[:-1], 0.0, 1.0))
                specs.append(ColumnDecode(c.name, CATEGORICAL, ch, levels=levels))
        decode[t.table_id] = specs
    return ContentParams(messages, update, config.rounds, trunk, heads, decode, R, config.neighbor_aggregation)


def _aggregate_sorted(msgs: np.ndarray, dst: np.ndarray, n_dst: int, mean: bool) -> np.ndarray:
    """Per-destination sum (or mean) of message rows, accumulated in value order."""
    out = np.zeros((n_dst, msgs.shape[1]))
    if msgs.shape[0] == 0:
        return out
    keys = tuple(msgs[:, j] for j in range(msgs.shape[1] - 1, -1, -1)) + (dst,)
    order = np.lexsort(keys)
    m, dd = msgs[order], dst[order]
    starts = np.flatnonzero(np.concatenate([[True], dd[1:] != dd[:-1]]))
    sums = np.add.reduceat(m, starts, axis=0)
    if mean:
        sums = sums / np.diff(np.concatenate([starts, [len(dd)]]))[:, None]
    out[dd[starts]] = sums
    return out


def message_passing(graph: InstanceGraph, params: ContentParams) -> list:
    """Run ``params.rounds`` rounds; returns per-table arrays of final row embeddings (float64)."""
    schema = graph.schema
    R = len(schema.edges)
    if params.n_relations != R:
        raise ConfigError(f"content params cover {params.n_relations} relations, schema has {R}")
    for r in range(R):
        for dr in params.directions:
            if (r, dr) not in params.messages:
                raise ConfigError(f"missing message MLP for relation {r} direction {dr}", "messages")
    h = [graph.rows(t).latent.astype(np.float64) for t in range(schema.n_tables)]
    d = h[0].shape[1] if h else 0
    links = [graph.relation(r) for r in range(R)]
    mean = params.aggregation == "mean"
    for _ in range(params.rounds):
        inbox = [np.zeros((h[t].shape[0], d * 2 * R)) for t in range(schema.n_tables)]
        for r, e in enumerate(schema.edges):
            par, chi = links[r]
            if "fwd" in params.directions:
                msg = mlp_forward(params.messages[(r, "fwd")], h[e.parent][par]) if len(par) else np.zeros((0, d))
                # one parent per child: no accumulation needed
                inbox[e.child][:, (2 * r) * d:(2 * r + 1) * d] = msg
            if "bwd" in params.directions:
                msg = mlp_forward(params.messages[(r, "bwd")], h[e.child]) if len(chi) else np.zeros((0, d))
                agg = _aggregate_sorted(msg, par, h[e.parent].shape[0], mean)
                inbox[e.parent][:, (2 * r + 1) * d:(2 * r + 2) * d] = agg
        h = [
            mlp_forward(params.update, np.hstack([h[t], inbox[t]])) if h[t].shape[0] else np.zeros((0, d))
            for t in range(schema.n_tables)
        ]
    return h


def _sorted_mean_std(x: np.ndarray):
    s = np.sort(x)
    mu = s.sum() / len(s)
    dev = np.sort((x - mu) ** 2)
    return mu, np.sqrt(dev.sum() / len(s))


def clip_normalize(raw: np.ndarray, clip) -> np.ndarray:
    """Clip to ``clip`` then z-score over the column (zeros if constant)."""
    v = np.clip(raw, clip[0], clip[1])
    if v.size == 0:
        return v
    mu, sd = _sorted_mean_std(v)
    return (v - mu) / sd if sd > 0 else np.zeros_like(v)


def bucketize(raw: np.ndarray, levels) -> np.ndarray:
    """Class index per row from quantile edges of ``raw`` at cumulative ``levels``."""
    if raw.size == 0:
        return raw.astype(np.float64)
    edges = np.quantile(raw, np.asarray(levels, dtype=np.float64)) if len(levels) else np.array([])
    return np.searchsorted(edges, raw, side="right").astype(np.float64)


def decode_columns(embeddings: list, params: ContentParams, schema: SchemaGraph) -> list:
    """Decoded feature values per table: dict column -> float64 array (categorical as class index)."""
    out = []
    for t in schema.tables:
        hk = embeddings[t.table_id]
        specs = params.decode[t.table_id]
        head = params.heads[t.table_id]
        if head.fan_out < len(specs):
            raise ConfigError(f"decoder for {t.name} has {head.fan_out} channels, needs {len(specs)}")
        raw = mlp_forward(head, mlp_forward(params.trunk, hk)) if hk.shape[0] else np.zeros((0, head.fan_out))
        cols = {}
        for spec in specs:
            v = raw[:, spec.channel]
            cols[spec.name] = clip_normalize(v, spec.clip) if spec.kind == CONTINUOUS else bucketize(v, spec.levels)
        out.append(cols)
    return out


@dataclass
class DatabaseInstance:
    schema: SchemaGraph
    graph: InstanceGraph
    features: list  # per table: column name -> float64 array
    meta: dict = field(default_factory=dict)

    def n_rows(self, table_id: int) -> int:
        return self.graph.n_rows(table_id)

    def column(self, table_id: int, name: str) -> np.ndarray:
        """Values of any column; PK is the row index, FK the parent row index."""
        spec = self.schema.tables[table_id].column(name)
        rows = self.graph.rows(table_id)
        if spec.kind == "primary_key":
            return np.arange(rows.n_rows, dtype=np.int64)
        if spec.kind == "foreign_key":
            return rows.fks[name]
        if spec.kind == "timestamp":
            return rows.timestamps
        return self.features[table_id][name]


def attach_timestamps(graph: InstanceGraph, features: list):
    for t in graph.schema.tables:
        ts = t.timestamp_column
        if ts is not None:
            features[t.table_id][ts.name] = graph.rows(t.table_id).timestamps.astype(np.float64)


def generate_database(config: GeneratorConfig, rng: Rng, single_table: bool = False, schema=None) -> DatabaseInstance:
    """Schema -> structure -> content, validated."""
    try:
        if schema is None:
            srng = rng.child("schema")
            schema = single_table_schema(config, srng) if single_table else sample_schema(config, srng)
    except RelgenError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise GenerationError(str(exc), "schema") from exc
    try:
        graph = generate_structure(schema, config, rng.child("structure"))
    except ConfigError:
        raise
    except RelgenError as exc:
        raise GenerationError(str(exc), "structure") from exc
    try:
        cparams = sample_content_params(rng.child("content"), schema, config)
        h = message_passing(graph, cparams)
        features = decode_columns(h, cparams, schema)
    except ConfigError:
        raise
    except RelgenError as exc:
        raise GenerationError(str(exc), "content") from exc
    attach_timestamps(graph, features)
    db = DatabaseInstance(schema, graph, features, {"seed": rng.seed, "stream": list(rng.path)})
    report = validate_database(db)
    if not report.ok:
        raise IntegrityError(f"generated database failed validation: {report}")
    return db


def validate_database(db: DatabaseInstance) -> ValidationReport:
    report = validate_schema(db.schema)
    if not report.ok:
        return report
    report.extend(validate_instance(db.graph))
    for t in db.schema.tables:
        rows = db.graph.tables[t.table_id]
        if rows is None:
            continue
        feats = db.features[t.table_id] if t.table_id < len(db.features) else {}
        for c in t.features:
            where = f"{t.name}.{c.name}"
            if c.name not in feats:
                report.add("MISSING_COLUMN", "feature column has no values", where)
                continue
            v = np.asarray(feats[c.name])
            if v.shape != (rows.n_rows,):
                report.add("SHAPE", f"{v.shape} values for {rows.n_rows} rows", where)
            elif not np.all(np.isfinite(v)):
                report.add("NAN", "non-finite cell", where)
            elif c.kind == CATEGORICAL and (np.any(v < 0) or np.any(v >= c.cardinality) or np.any(v != np.round(v))):
                report.add("BAD_CLASS", f"class index outside [0, {c.cardinality})", where)
    return report
