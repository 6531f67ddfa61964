"""Desk-scale codec benchmarks on synthetic weight blobs."""

from __future__ import annotations

import enum
import json
import logging
import statistics
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .codec import Codec, DeflateCodec, ParamBlob, QuantizedBlob
from .cost_model import CodecProfile

log = logging.getLogger(__name__)

DEFAULT_BLOB_BYTES = 23 * 1024 * 1024

# structured blobs: share of elements overwritten by runs of a repeated value
RUN_FRACTION = 0.12
RUN_LENGTH = (4, 48)


class Distribution(str, enum.Enum):
    GAUSSIAN = "gaussian"
    STRUCTURED = "structured"
    ZEROS = "zeros"


@dataclass(frozen=True)
class BenchSpec:
    blob_bytes: int = DEFAULT_BLOB_BYTES
    distribution: Distribution = Distribution.STRUCTURED
    seed: int = 0
    repeats: int = 3

    def __post_init__(self):
        object.__setattr__(self, "distribution", Distribution(self.distribution))
        if self.blob_bytes < 4:
            raise ValueError("blob_bytes must be >= 4")
        if self.repeats < 3 or self.repeats % 2 == 0:
            raise ValueError("repeats must be an odd integer >= 3")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class CodecStats:
    codec: str
    ratio: float
    compress_s: float
    decompress_s: float
    max_abs_err: float
    original_bytes: int = 0
    encoded_bytes: int = 0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def make_synthetic_weights(spec: BenchSpec) -> ParamBlob:
    n = spec.blob_bytes // 4
    if spec.distribution is Distribution.ZEROS:
        return ParamBlob(np.zeros(n, dtype=np.float32))
    rng = np.random.default_rng(spec.seed)
    values = (rng.standard_normal(n, dtype=np.float32) * np.float32(0.01)).astype(np.float32)
    if spec.distribution is Distribution.STRUCTURED:
        # runs of repeated weights (dead units, tied filters) make the blob
        # mildly compressible, as trained checkpoints are
        target = int(n * RUN_FRACTION)
        covered = 0
        while covered < target:
            batch = (target - covered) // RUN_LENGTH[1] + 1
            lengths = rng.integers(RUN_LENGTH[0], RUN_LENGTH[1] + 1, size=batch)
            starts = rng.integers(0, max(1, n - RUN_LENGTH[1]), size=batch)
            fill = values[starts]
            for s, ln, v in zip(starts, lengths, fill):
                values[s:s + ln] = v
            covered += int(lengths.sum())
    return ParamBlob(values)


def _median_time(fn, repeats: int):
    times, result = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), result


def bench_codec(codec: Codec, spec: BenchSpec, blob: Optional[ParamBlob] = None) -> CodecStats:
    """Median-of-repeats encode/decode wall time, byte ratio and roundtrip error."""
    blob = make_synthetic_weights(spec) if blob is None else blob
    compress_s, enc = _median_time(lambda: codec.encode(blob), spec.repeats)
    decompress_s, out = _median_time(lambda: codec.decode(enc), spec.repeats)
    err = float(np.max(np.abs(out.values.astype(np.float64) - blob.values.astype(np.float64))))
    if codec.lossless and err != 0.0:
        raise AssertionError(f"{codec.name} roundtrip is not bit-exact")
    meta = {"distribution": spec.distribution.value, "seed": spec.seed, "repeats": spec.repeats}
    if isinstance(codec, DeflateCodec):
        meta["level"] = codec.level
    if hasattr(codec, "bits"):
        meta["bits"] = codec.bits
        q = QuantizedBlob.from_payload(enc.payload, enc.original_count)
        meta["scale"] = q.scale
    stats = CodecStats(
        codec=codec.name,
        ratio=enc.ratio,
        compress_s=compress_s,
        decompress_s=decompress_s,
        max_abs_err=err,
        original_bytes=blob.byte_len,
        encoded_bytes=len(enc.payload),
        meta=meta,
    )
    log.debug("bench %s: %s", codec.name, stats)
    return stats


def profile_from_stats(stats: CodecStats, h: float = 1.0) -> CodecProfile:
    """Cost-model profile from measured stats; h must come from the caller."""
    rho = stats.ratio
    if rho > 1.0:
        warnings.warn(
            f"{stats.codec} expanded the data (ratio {rho:.4f}); clamping rho to 1.0",
            RuntimeWarning,
            stacklevel=2,
        )
        rho = 1.0
    return CodecProfile(rho=rho, h=h, compress_s=stats.compress_s,
                        decompress_s=stats.decompress_s)


def _size_label(n: int) -> str:
    for unit, k in (("GiB", 1 << 30), ("MiB", 1 << 20), ("KiB", 1 << 10)):
        if n >= k:
            return f"{n / k:.3g}{unit}"
    return f"{n}B"


def format_table(rows: list[CodecStats]) -> str:
    """Aligned text table: size, ratio (original/compressed), codec times."""
    header = ("Codec", "Size", "Compression ratio", "Compression time", "Decompression time",
              "Max abs err")
    body = [
        (s.codec, _size_label(s.original_bytes),
         f"{1.0 / s.ratio:.3f}" if s.ratio > 0 else "inf",
         f"{s.compress_s:.3f}s", f"{s.decompress_s:.3f}s", f"{s.max_abs_err:.3g}")
        for s in rows
    ]
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                       for i, (c, w) in enumerate(zip(r, widths)))
             for r in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def stats_to_json(rows: list[CodecStats]) -> str:
    return json.dumps([s.to_dict() for s in rows], indent=2, sort_keys=True) + "\n"
