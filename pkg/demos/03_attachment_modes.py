"""
Uniform-like versus rich-get-richer attachment
==============================================

"""

# the same parent table, children attached with increasing Mode B share
import numpy as np
from relgen import GeneratorConfig, Rng
from relgen.schema import FOREIGN_KEY, PRIMARY_KEY, ColumnSpec, Edge, SchemaGraph, TableSpec
from relgen.structure import (InstanceGraph, degree_histogram, gen_dependent_table, gen_source_table, gini,
                              sample_struct_params)
from relgen.temporal import sample_temporal_signature

cfg = GeneratorConfig()
schema = SchemaGraph(
    [TableSpec(0, "users", [ColumnSpec("id", PRIMARY_KEY), ColumnSpec("x0", "continuous")]),
     TableSpec(1, "orders", [ColumnSpec("id", PRIMARY_KEY), ColumnSpec("fk0_t0", FOREIGN_KEY, ref_table=0),
                             ColumnSpec("x0", "continuous")])],
    [Edge(0, 1, "fk0_t0")],
)


def run(seed, mix):
    rng = Rng(seed)
    g = InstanceGraph(schema)
    sig = sample_temporal_signature(rng.child("sig"), cfg)
    g.tables[0] = gen_source_table(schema, 0, 200, sig, sample_struct_params(rng.child("p0"), cfg), rng.child("r0"))
    params = sample_struct_params(rng.child("p1"), cfg, n_parents=1, mode_mix=mix)
    gen_dependent_table(g, schema, 1, 2000, params, rng.child("r1"), sig=sig)
    return degree_histogram(g, 0)


for mix in (0.0, 0.25, 0.5, 0.75, 1.0):
    g = [gini(run(s, mix)) for s in range(10)]
    deg = run(0, mix)
    print(f"mode_mix={mix:.2f}  mean gini={np.mean(g):.3f}  max degree={deg.max():4d}")
