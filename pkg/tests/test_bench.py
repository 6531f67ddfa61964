import json
from dataclasses import replace

import numpy as np
import pytest

from homcomp.bench import (
    BenchSpec,
    bench_codec,
    format_table,
    make_synthetic_weights,
    profile_from_stats,
    stats_to_json,
)
from homcomp.codec import DeflateCodec, IdentityCodec, QuantCodec

MIB = 1 << 20


def test_identity_ratio_one():
    spec = BenchSpec(MIB, "gaussian")
    stats = bench_codec(IdentityCodec(), spec)
    assert stats.ratio == pytest.approx(1.0, abs=1e-4)
    assert stats.max_abs_err == 0


def test_synthetic_blobs_are_seeded():
    a = make_synthetic_weights(BenchSpec(MIB, "structured", seed=4))
    b = make_synthetic_weights(BenchSpec(MIB, "structured", seed=4))
    assert a == b
    assert a.count == MIB // 4


def test_structured_compresses_better_than_gaussian():
    g = bench_codec(DeflateCodec(), BenchSpec(MIB, "gaussian"))
    s = bench_codec(DeflateCodec(), BenchSpec(MIB, "structured"))
    z = bench_codec(DeflateCodec(), BenchSpec(MIB, "zeros"))
    assert z.ratio < s.ratio < g.ratio < 1
    assert s.meta["level"] == 6


def test_quant_error_reported():
    stats = bench_codec(QuantCodec(8), BenchSpec(MIB, "gaussian"))
    assert 0 < stats.max_abs_err
    assert stats.ratio < 0.26


@pytest.mark.parametrize("kwargs", [dict(repeats=2), dict(repeats=1), dict(blob_bytes=0)])
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        BenchSpec(**{"blob_bytes": MIB, "distribution": "gaussian", **kwargs})


def test_profile_clamps_expansion():
    stats = replace(bench_codec(DeflateCodec(), BenchSpec(4096, "gaussian")), ratio=1.01)
    with pytest.warns(RuntimeWarning):
        prof = profile_from_stats(stats, h=1.2)
    assert prof.rho == 1.0 and prof.h == 1.2


def test_table_and_json():
    rows = [bench_codec(c, BenchSpec(MIB, "structured")) for c in (IdentityCodec(), DeflateCodec())]
    table = format_table(rows)
    assert "Compression ratio" in table and "deflate" in table
    assert "1.000" in table.splitlines()[2]
    data = json.loads(stats_to_json(rows))
    assert [d["codec"] for d in data] == ["identity", "deflate"]
