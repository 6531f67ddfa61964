"""Parameter codecs and compressed-domain aggregation.

Three codecs share one wire envelope::

    [u8 codec_id][u32 LE original_count][u32 LE payload_len][payload]

``identity`` carries raw little-endian float32, ``deflate`` a zlib stream and
``quant`` an affine fixed-point blob::

    [f32 LE scale][f32 LE zero_point][u8 bits][codes, LE uint8/uint16]

Quantized blobs support add, scale and average directly on their integer
codes, which is all a parameter server needs to aggregate without decoding.
"""

from __future__ import annotations

import enum
import math
import struct
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

ENVELOPE = struct.Struct("<BII")
QUANT_HEADER = struct.Struct("<ffB")
DEFLATE_LEVEL = 6


class CodecError(ValueError):
    pass


class DecodeError(CodecError):
    """Malformed payload; ``offset`` is the byte position where decoding failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class CodecMismatchError(CodecError):
    pass


class CodecId(enum.IntEnum):
    IDENTITY = 0
    DEFLATE = 1
    QUANT = 2


@dataclass(frozen=True, eq=False)
class ParamBlob:
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype="<f4").reshape(-1)
        if v.size < 1:
            raise ValueError("a parameter blob needs at least one value")
        if not np.isfinite(v).all():
            raise ValueError("parameter blob contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ParamBlob":
        if len(raw) % 4:
            raise DecodeError("float32 buffer length is not a multiple of 4", len(raw) - len(raw) % 4)
        return cls(np.frombuffer(raw, dtype="<f4"))

    @property
    def count(self) -> int:
        return int(self.values.size)

    @property
    def byte_len(self) -> int:
        return 4 * self.count

    def to_bytes(self) -> bytes:
        return self.values.tobytes()

    def __eq__(self, other):
        if not isinstance(other, ParamBlob):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    def __len__(self):
        return self.count


@dataclass(frozen=True)
class EncodedBlob:
    codec_id: CodecId
    payload: bytes
    original_count: int

    @property
    def ratio(self) -> float:
        return len(self.payload) / (4 * self.original_count)

    def to_bytes(self) -> bytes:
        return ENVELOPE.pack(int(self.codec_id), self.original_count, len(self.payload)) + self.payload

    @classmethod
    def from_bytes(cls, raw: bytes) -> "EncodedBlob":
        raw = bytes(raw)
        if len(raw) < ENVELOPE.size:
            raise DecodeError("truncated envelope header", len(raw))
        cid, count, plen = ENVELOPE.unpack_from(raw)
        try:
            codec_id = CodecId(cid)
        except ValueError:
            raise DecodeError(f"unknown codec id {cid}", 0) from None
        end = ENVELOPE.size + plen
        if len(raw) < end:
            raise DecodeError("payload shorter than declared length", len(raw))
        if len(raw) > end:
            raise DecodeError("trailing bytes after payload", end)
        if count < 1:
            raise DecodeError("original_count must be >= 1", 1)
        return cls(codec_id, raw[ENVELOPE.size:end], count)


# -- affine fixed-point representation --

@dataclass(frozen=True, eq=False)
class QuantizedBlob:
    """Codes q in [0, 2^bits - 1] standing for zero_point + scale * q.

    ``scale == 0`` marks a constant blob (all codes 0).
    """

    scale: float
    zero_point: float
    bits: int
    codes: np.ndarray

    def __post_init__(self):
        if self.bits not in (8, 16):
            raise ValueError(f"bits must be 8 or 16, got {self.bits}")
        if not (np.isfinite(self.scale) and np.isfinite(self.zero_point)) or self.scale < 0:
            raise ValueError("scale must be finite and >= 0, zero_point finite")
        codes = np.ascontiguousarray(self.codes).reshape(-1)
        if codes.size < 1:
            raise ValueError("quantized blob needs at least one code")
        dtype = np.dtype("<u1" if self.bits == 8 else "<u2")
        if codes.dtype != dtype:
            if codes.size and (codes.min() < 0 or codes.max() > self.levels):
                raise ValueError("codes out of range for bit width")
            codes = codes.astype(dtype)
        if self.scale == 0 and codes.any():
            raise ValueError("constant blob (scale 0) must have all-zero codes")
        codes.setflags(write=False)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "zero_point", float(self.zero_point))
        object.__setattr__(self, "codes", codes)

    @property
    def levels(self) -> int:
        return (1 << self.bits) - 1

    @property
    def count(self) -> int:
        return int(self.codes.size)

    def dequantize(self) -> np.ndarray:
        return self.zero_point + self.scale * self.codes.astype(np.float64)

    def to_param_blob(self) -> ParamBlob:
        return ParamBlob(self.dequantize().astype(np.float32))

    def to_payload(self) -> bytes:
        scale32 = np.float32(self.scale)
        zero32 = np.float32(self.zero_point)
        if not (np.isfinite(scale32) and np.isfinite(zero32)):
            raise CodecError("quantization metadata overflows float32")
        return QUANT_HEADER.pack(scale32, zero32, self.bits) + self.codes.tobytes()

    @classmethod
    def from_payload(cls, payload: bytes, count: int) -> "QuantizedBlob":
        if len(payload) < QUANT_HEADER.size:
            raise DecodeError("truncated quantization header", len(payload))
        scale, zero, bits = QUANT_HEADER.unpack_from(payload)
        if bits not in (8, 16):
            raise DecodeError(f"unsupported bit width {bits}", 8)
        width = bits // 8
        body = payload[QUANT_HEADER.size:]
        if len(body) != count * width:
            raise DecodeError(
                f"expected {count * width} code bytes, found {len(body)}",
                QUANT_HEADER.size + min(len(body), count * width),
            )
        if not (np.isfinite(scale) and np.isfinite(zero)) or scale < 0:
            raise DecodeError("invalid scale/zero_point", 0)
        codes = np.frombuffer(body, dtype="<u1" if bits == 8 else "<u2")
        if scale == 0 and codes.any():
            raise DecodeError("constant blob with non-zero codes", QUANT_HEADER.size)
        return cls(scale, zero, bits, codes)


def quantize(blob: ParamBlob, bits: int = 8) -> QuantizedBlob:
    """Affine min/max quantization with round-half-to-even.

    Codes are computed against the exact step (hi - lo) / levels; the wire
    format narrows scale and zero point to float32 (zero point is already a
    float32 value, the scale loses at most half a float32 ulp).
    """
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    levels = (1 << bits) - 1
    x = blob.values.astype(np.float64)
    lo, hi = float(x.min()), float(x.max())
    dtype = np.uint8 if bits == 8 else np.uint16
    if lo == hi:
        return QuantizedBlob(0.0, lo, bits, np.zeros(x.size, dtype=dtype))
    t = (x - lo) * levels / (hi - lo)
    codes = np.clip(np.rint(t), 0, levels).astype(dtype)
    return QuantizedBlob((hi - lo) / levels, lo, bits, codes)


def _requantize(wide: np.ndarray, scale: float, zero: float, bits: int,
                min_k: int = 1) -> QuantizedBlob:
    """Bring int64 codes on grid (zero, scale) back to ``bits`` wide codes.

    The span is shifted to start at 0, then divided by the smallest integer
    step k >= min_k that fits; integer division rounds half to even.
    """
    levels = (1 << bits) - 1
    dtype = np.uint8 if bits == 8 else np.uint16
    qmin = int(wide.min())
    span = int(wide.max()) - qmin
    zero = zero + scale * qmin
    if scale == 0:
        return QuantizedBlob(0.0, zero, bits, np.zeros(wide.size, dtype=dtype))
    k = max(min_k, -(-span // levels))
    shifted = wide - qmin
    if k == 1:
        return QuantizedBlob(scale, zero, bits, shifted.astype(dtype))
    q, rem = np.divmod(shifted, k)
    twice = 2 * rem
    up = (twice > k) | ((twice == k) & (q % 2 == 1))
    q = q + up
    return QuantizedBlob(scale * k, zero, bits, np.minimum(q, levels).astype(dtype))


_EXACT_INT = 2 ** 53


def _accumulate(blobs: Sequence[QuantizedBlob]) -> tuple[np.ndarray, float, float, int]:
    """Sum blobs as int64 codes on the first non-constant operand's grid."""
    if not blobs:
        raise ValueError("need at least one blob")
    count, bits = blobs[0].count, blobs[0].bits
    for b in blobs:
        if b.count != count:
            raise ValueError(f"count mismatch: {b.count} != {count}")
    bits = max(b.bits for b in blobs)
    grid = next((b.scale for b in blobs if b.scale > 0), 0.0)
    coarsest = max(b.scale for b in blobs)
    if grid and coarsest / grid * ((1 << bits) - 1) * len(blobs) > _EXACT_INT:
        # the first grid is so fine that re-gridded codes would not stay exact
        grid = coarsest
    zero = 0.0
    wide = np.zeros(count, dtype=np.int64)
    for b in blobs:
        zero += b.zero_point
        if b.scale == 0:
            continue
        if b.scale == grid:
            wide += b.codes
        else:
            wide += np.rint(b.codes * (b.scale / grid)).astype(np.int64)
    return wide, grid, zero, bits


def h_add(a: QuantizedBlob, b: QuantizedBlob) -> QuantizedBlob:
    """Compressed-domain sum; b is re-gridded onto a's step when they differ."""
    wide, grid, zero, bits = _accumulate([a, b])
    return _requantize(wide, grid, zero, bits)


def h_scale(a: QuantizedBlob, alpha: float) -> QuantizedBlob:
    alpha = float(alpha)
    if not np.isfinite(alpha):
        raise ValueError("alpha must be finite")
    if alpha == 0:
        return QuantizedBlob(0.0, 0.0, a.bits, np.zeros_like(a.codes))
    if alpha > 0 or a.scale == 0:
        return QuantizedBlob(a.scale * alpha, a.zero_point * alpha, a.bits, a.codes)
    # negative factor: mirror the codes so the step stays positive
    flipped = (a.levels - a.codes.astype(np.int64)).astype(a.codes.dtype)
    top = a.zero_point + a.scale * a.levels
    return QuantizedBlob(a.scale * -alpha, top * alpha, a.bits, flipped)


def h_average(blobs: Sequence[QuantizedBlob]) -> QuantizedBlob:
    """Elementwise mean of M quantized blobs without leaving the code domain.

    Equivalent to ``h_scale(fold(h_add, blobs), 1 / M)`` except that the fold
    accumulates in int64 and requantizes once, and the output step is never
    finer than the coarsest input step.  Against the float mean of the
    original values the result is within ``average_error_bound(M)`` output
    steps per element.
    """
    blobs = list(blobs)
    wide, grid, zero, bits = _accumulate(blobs)
    m = len(blobs)
    # quantization error already in the inputs is up to half the coarsest
    # step; a finer output step could not honour the bound once sums cancel
    min_k = math.ceil(m * max(b.scale for b in blobs) / grid * (1 - 1e-12)) if grid else 1
    return h_scale(_requantize(wide, grid, zero, bits, max(1, min_k)), 1.0 / m)


def average_error_bound(m: int) -> float:
    """Documented h_average error, in output quantization steps."""
    return (m + 1) / 2


# -- codecs --

class Codec:
    codec_id: CodecId
    name: str
    lossless = True

    def encode(self, blob: ParamBlob) -> EncodedBlob:
        raise NotImplementedError

    def decode(self, enc: EncodedBlob) -> ParamBlob:
        raise NotImplementedError

    def _check(self, enc: EncodedBlob) -> None:
        if enc.codec_id != self.codec_id:
            raise CodecMismatchError(
                f"{self.name} codec cannot decode a {CodecId(enc.codec_id).name.lower()} blob"
            )

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class IdentityCodec(Codec):
    codec_id = CodecId.IDENTITY
    name = "identity"

    def encode(self, blob: ParamBlob) -> EncodedBlob:
        return EncodedBlob(self.codec_id, blob.to_bytes(), blob.count)

    def decode(self, enc: EncodedBlob) -> ParamBlob:
        self._check(enc)
        if len(enc.payload) != 4 * enc.original_count:
            raise DecodeError("identity payload length mismatch",
                              min(len(enc.payload), 4 * enc.original_count))
        return ParamBlob.from_bytes(enc.payload)


class DeflateCodec(Codec):
    codec_id = CodecId.DEFLATE
    name = "deflate"
    chunk = 1 << 16

    def __init__(self, level: int = DEFLATE_LEVEL):
        self.level = level

    def encode(self, blob: ParamBlob) -> EncodedBlob:
        return EncodedBlob(self.codec_id, zlib.compress(blob.to_bytes(), self.level), blob.count)

    def decode(self, enc: EncodedBlob) -> ParamBlob:
        self._check(enc)
        raw = _inflate(enc.payload, self.chunk)
        if len(raw) != 4 * enc.original_count:
            raise DecodeError(
                f"inflated {len(raw)} bytes, expected {4 * enc.original_count}", len(enc.payload)
            )
        return ParamBlob.from_bytes(raw)


def _inflate(payload: bytes, chunk: int) -> bytes:
    """zlib-inflate, locating the failing byte when the stream is corrupt."""
    d = zlib.decompressobj()
    out = []
    pos = 0
    while pos < len(payload):
        saved = d.copy()
        piece = payload[pos:pos + chunk]
        try:
            out.append(d.decompress(piece))
        except zlib.error as exc:
            # replay the chunk bytewise from the saved state to find the offset
            d = saved
            for j in range(len(piece)):
                try:
                    d.decompress(piece[j:j + 1])
                except zlib.error:
                    raise DecodeError(f"corrupt deflate stream: {exc}", pos + j) from None
            raise DecodeError(f"corrupt deflate stream: {exc}", pos + len(piece)) from None
        if d.eof:
            if d.unused_data:
                raise DecodeError("trailing bytes after deflate stream",
                                  len(payload) - len(d.unused_data))
            break
        pos += len(piece)
    if not d.eof:
        raise DecodeError("truncated deflate stream", len(payload))
    out.append(d.flush())
    return b"".join(out)


class QuantCodec(Codec):
    codec_id = CodecId.QUANT
    lossless = False

    def __init__(self, bits: int = 8):
        if bits not in (8, 16):
            raise ValueError("bits must be 8 or 16")
        self.bits = bits
        self.name = f"quant{bits}"

    def quantize(self, blob: ParamBlob) -> QuantizedBlob:
        return quantize(blob, self.bits)

    def encode(self, blob: ParamBlob) -> EncodedBlob:
        return self.wrap(self.quantize(blob))

    def wrap(self, q: QuantizedBlob) -> EncodedBlob:
        return EncodedBlob(self.codec_id, q.to_payload(), q.count)

    def unwrap(self, enc: EncodedBlob) -> QuantizedBlob:
        self._check(enc)
        return QuantizedBlob.from_payload(enc.payload, enc.original_count)

    def decode(self, enc: EncodedBlob) -> ParamBlob:
        return self.unwrap(enc).to_param_blob()


CODEC_NAMES = ("identity", "deflate", "quant8", "quant16")


def get_codec(name: str) -> Codec:
    if name == "identity":
        return IdentityCodec()
    if name == "deflate":
        return DeflateCodec()
    if name in ("quant", "quant8"):
        return QuantCodec(8)
    if name == "quant16":
        return QuantCodec(16)
    raise ValueError(f"unknown codec {name!r}; choose from {', '.join(CODEC_NAMES)}")


def encode(codec: Codec, blob: ParamBlob) -> EncodedBlob:
    return codec.encode(blob)


def decode(codec: Codec, enc: EncodedBlob) -> ParamBlob:
    return codec.decode(enc)
