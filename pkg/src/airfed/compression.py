"""Gradient compression codecs: sparsification, quantization, error feedback,
and a deep-gradient-compression style pipeline, with exact bit accounting.

Payload cost model: a sparse payload of n entries over a length-d vector costs
n * (ceil(log2 d) + bits_per_symbol) + 64 header bits. A dense payload
(no sparsifier) needs no index bits: d * bits_per_symbol + 64.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ProtocolError

HEADER_BITS = 64
FLOAT_BITS = 64
_MAGIC = b"AIRF"

SPARSIFIER_NONE = "none"
SPARSIFIER_THRESHOLD = "threshold"
SPARSIFIER_TOPK = "topk"

QUANTIZER_NONE = "none"
QUANTIZER_BINARY = "binary"
QUANTIZER_THREE = "three-level"
QUANTIZER_FOUR = "four-level"

_SYMBOL_BITS = {
    QUANTIZER_NONE: FLOAT_BITS,
    QUANTIZER_BINARY: 1,
    QUANTIZER_THREE: 2,
    QUANTIZER_FOUR: 2,
}


def index_bits(d: int) -> int:
    """Bits needed to address one coordinate of a length-d vector."""
    return math.ceil(math.log2(d)) if d > 1 else 0


@dataclass
class CompressedGradient:
    """Sparse encoded gradient plus everything needed to decode it."""

    indices: np.ndarray  # sorted unique int64 positions, all < d
    values: np.ndarray  # decoded real values aligned with indices
    codec_id: str
    d: int
    payload_bits: int
    scales: tuple[float, ...] = ()
    symbols: np.ndarray | None = None  # quantizer symbols, aligned with indices
    dense_support: bool = False  # True when indices are implicit (no sparsifier)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.indices.size and (
            np.any(np.diff(self.indices) <= 0)
            or self.indices[0] < 0
            or self.indices[-1] >= self.d
        ):
            raise ConfigurationError("indices must be strictly increasing and < d")

    def decode(self) -> np.ndarray:
        dense = np.zeros(self.d)
        dense[self.indices] = self.values
        return dense


@dataclass
class CodecSpec:
    sparsifier: str = SPARSIFIER_NONE
    threshold: float = 0.0  # threshold sparsifier
    keep_fraction: float = 1.0  # top-k sparsifier
    quantizer: str = QUANTIZER_NONE
    error_feedback: bool = False
    momentum: float = 0.0  # momentum-correction factor, [0, 1)
    clip_norm: float | None = None  # L2 clipping bound, > 0
    warmup: tuple[float, ...] | None = None  # per-epoch keep fractions

    def __post_init__(self):
        if self.sparsifier not in (SPARSIFIER_NONE, SPARSIFIER_THRESHOLD, SPARSIFIER_TOPK):
            raise ConfigurationError(f"unknown sparsifier {self.sparsifier!r}")
        if self.quantizer not in _SYMBOL_BITS:
            raise ConfigurationError(f"unknown quantizer {self.quantizer!r}")
        if self.sparsifier == SPARSIFIER_THRESHOLD and self.threshold < 0:
            raise ConfigurationError("threshold must be >= 0")
        if self.sparsifier == SPARSIFIER_TOPK and not (0 < self.keep_fraction <= 1):
            raise ConfigurationError("keep_fraction must be in (0, 1]")
        if not (0 <= self.momentum < 1):
            raise ConfigurationError("momentum must be in [0, 1)")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigurationError("clip_norm must be > 0")
        if self.warmup is not None and (
            not self.warmup or any(not (0 < r <= 1) for r in self.warmup)
        ):
            raise ConfigurationError("warmup fractions must be in (0, 1]")

    @property
    def codec_id(self) -> str:
        parts = []
        if self.sparsifier == SPARSIFIER_THRESHOLD:
            parts.append(f"thr{self.threshold:g}")
        elif self.sparsifier == SPARSIFIER_TOPK:
            parts.append(f"topk{self.keep_fraction:g}")
        else:
            parts.append("dense")
        parts.append(self.quantizer)
        if self.error_feedback:
            parts.append("ef")
        if self.momentum:
            parts.append(f"m{self.momentum:g}")
        if self.clip_norm is not None:
            parts.append(f"clip{self.clip_norm:g}")
        if self.warmup:
            parts.append("warmup")
        return "|".join(parts)

    @property
    def is_noop(self) -> bool:
        return self.sparsifier == SPARSIFIER_NONE and self.quantizer == QUANTIZER_NONE


@dataclass
class EncoderState:
    """Per-client accumulators owned by that client's encoder."""

    momentum: np.ndarray  # u: momentum-corrected gradient accumulator
    residual: np.ndarray  # v: not-yet-transmitted mass

    @classmethod
    def zeros(cls, d: int) -> "EncoderState":
        return cls(np.zeros(d), np.zeros(d))


def _payload_bits(d: int, n_kept: int, quantizer: str, dense_support: bool) -> int:
    sym = _SYMBOL_BITS[quantizer]
    if dense_support:
        return d * sym + HEADER_BITS
    return n_kept * (index_bits(d) + sym) + HEADER_BITS


def sparsify_threshold(g: np.ndarray, tau: float) -> CompressedGradient:
    """Keep exactly the entries with |g_i| > tau, values exact."""
    if tau < 0:
        raise ConfigurationError("threshold must be >= 0")
    g = np.asarray(g, dtype=np.float64)
    idx = np.flatnonzero(np.abs(g) > tau)
    return CompressedGradient(
        indices=idx,
        values=g[idx],
        codec_id=f"thr{tau:g}|none",
        d=g.size,
        payload_bits=_payload_bits(g.size, idx.size, QUANTIZER_NONE, False),
    )


def topk_indices(g: np.ndarray, rho: float) -> np.ndarray:
    """Indices of the k = max(1, ceil(rho*d)) largest-|g| entries, ties to
    the lower index, returned sorted ascending."""
    if not (0 < rho <= 1):
        raise ConfigurationError("keep fraction must be in (0, 1]")
    d = g.size
    k = max(1, math.ceil(rho * d))
    # stable order: descending |g|, ascending index on ties
    order = np.lexsort((np.arange(d), -np.abs(g)))
    return np.sort(order[:k])


def sparsify_topk(g: np.ndarray, rho: float) -> CompressedGradient:
    g = np.asarray(g, dtype=np.float64)
    idx = topk_indices(g, rho)
    return CompressedGradient(
        indices=idx,
        values=g[idx],
        codec_id=f"topk{rho:g}|none",
        d=g.size,
        payload_bits=_payload_bits(g.size, idx.size, QUANTIZER_NONE, False),
    )


def quantize(values: np.ndarray, levels: int) -> tuple[np.ndarray, tuple[float, ...]]:
    """Quantize values to the given level count; returns (symbols, scales).

    binary (2):  symbol = sign, scale = mean|v|, decode = scale * symbol.
    three (3):   symbol 0 when |v| <= s/2 with s the mean |v| over the entries
                 mapped to nonzero symbols (two-pass: provisional mean first).
    four (4):    magnitude split at mean|v|; inner/outer groups get their own
                 mean-|v| scales; symbols {-2, -1, +1, +2}.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ConfigurationError("quantize requires nonempty values")
    sign = np.where(v >= 0, 1, -1).astype(np.int8)
    mag = np.abs(v)
    if levels == 2:
        return sign, (float(np.mean(mag)),)
    if levels == 3:
        s0 = float(np.mean(mag))
        symbols = np.where(mag <= s0 / 2, 0, sign).astype(np.int8)
        nz = symbols != 0
        s = float(np.mean(mag[nz])) if np.any(nz) else 0.0
        return symbols, (s,)
    if levels == 4:
        s0 = float(np.mean(mag))
        inner = mag <= s0
        symbols = np.where(inner, sign, 2 * sign).astype(np.int8)
        s_lo = float(np.mean(mag[inner])) if np.any(inner) else 0.0
        s_hi = float(np.mean(mag[~inner])) if np.any(~inner) else 0.0
        return symbols, (s_lo, s_hi)
    raise ConfigurationError("levels must be one of 2, 3, 4")


def dequantize(symbols: np.ndarray, scales: tuple[float, ...], quantizer: str) -> np.ndarray:
    symbols = np.asarray(symbols)
    if quantizer == QUANTIZER_BINARY or quantizer == QUANTIZER_THREE:
        return scales[0] * symbols.astype(np.float64)
    if quantizer == QUANTIZER_FOUR:
        s_lo, s_hi = scales
        mag = np.where(np.abs(symbols) == 1, s_lo, s_hi)
        return np.sign(symbols) * mag
    raise ConfigurationError(f"cannot dequantize with quantizer {quantizer!r}")


_QUANT_LEVELS = {QUANTIZER_BINARY: 2, QUANTIZER_THREE: 3, QUANTIZER_FOUR: 4}


def encode(
    g: np.ndarray,
    spec: CodecSpec,
    state: EncoderState | None = None,
    epoch: int = 0,
) -> CompressedGradient:
    """Full codec pipeline: clip, momentum-corrected accumulation, sparsify,
    mask the accumulators at transmitted coordinates, quantize."""
    g = np.asarray(g, dtype=np.float64)
    d = g.size
    if spec.error_feedback:
        if state is None:
            raise ConfigurationError("error feedback requires encoder state")
        if state.residual.size != d or state.momentum.size != d:
            raise ConfigurationError("encoder state length must match gradient")

    work = g
    if spec.clip_norm is not None:
        nrm = float(np.linalg.norm(work))
        if nrm > spec.clip_norm:
            work = work * (spec.clip_norm / nrm)

    if spec.error_feedback:
        state.momentum *= spec.momentum
        state.momentum += work
        state.residual += state.momentum
        v = state.residual
    else:
        v = work

    if spec.sparsifier == SPARSIFIER_THRESHOLD:
        idx = np.flatnonzero(np.abs(v) > spec.threshold)
        dense_support = False
    elif spec.sparsifier == SPARSIFIER_TOPK:
        rho = spec.keep_fraction
        if spec.warmup is not None:
            rho = spec.warmup[min(epoch, len(spec.warmup) - 1)]
        idx = topk_indices(v, rho)
        dense_support = False
    else:
        idx = np.arange(d)
        dense_support = True

    kept = v[idx].copy()
    if spec.error_feedback:
        state.momentum[idx] = 0.0
        state.residual[idx] = 0.0

    symbols = None
    scales: tuple[float, ...] = ()
    if spec.quantizer != QUANTIZER_NONE and kept.size:
        symbols, scales = quantize(kept, _QUANT_LEVELS[spec.quantizer])
        values = dequantize(symbols, scales, spec.quantizer)
    else:
        values = kept

    return CompressedGradient(
        indices=idx,
        values=values,
        codec_id=spec.codec_id,
        d=d,
        payload_bits=_payload_bits(d, idx.size, spec.quantizer, dense_support),
        scales=scales,
        symbols=symbols,
        dense_support=dense_support,
    )


def decode_and_accumulate(
    payloads: list[CompressedGradient], sizes: list[int]
) -> np.ndarray:
    """Size-weighted mean of the decoded dense vectors."""
    if not payloads:
        raise ProtocolError("no payloads to accumulate")
    if len(payloads) != len(sizes):
        raise ConfigurationError("payloads and sizes must align")
    codec_ids = {p.codec_id for p in payloads}
    if len(codec_ids) > 1:
        raise ProtocolError(f"codec mismatch across clients: {sorted(codec_ids)}")
    dims = {p.d for p in payloads}
    if len(dims) > 1:
        raise ConfigurationError("payload dimensions differ")
    total = sum(sizes)
    out = np.zeros(payloads[0].d)
    for p, s in zip(payloads, sizes):
        out[p.indices] += (s / total) * p.values
    return out


def compression_ratio(c: CompressedGradient) -> float:
    """Payload bits over the uncompressed full-precision payload bits."""
    return c.payload_bits / (FLOAT_BITS * c.d)


def _pack_symbols(symbols: np.ndarray, quantizer: str) -> bytes:
    if quantizer == QUANTIZER_BINARY:
        codes = ((symbols + 1) // 2).astype(np.uint8)  # -1 -> 0, +1 -> 1
        width = 1
    elif quantizer == QUANTIZER_THREE:
        codes = (symbols + 1).astype(np.uint8)  # -1,0,+1 -> 0,1,2
        width = 2
    else:
        lut = {-2: 0, -1: 1, 1: 2, 2: 3}
        codes = np.array([lut[int(s)] for s in symbols], dtype=np.uint8)
        width = 2
    out = bytearray()
    acc = 0
    nbits = 0
    for c in codes:
        acc |= int(c) << nbits
        nbits += width
        while nbits >= 8:
            out.append(acc & 0xFF)
            acc >>= 8
            nbits -= 8
    if nbits:
        out.append(acc & 0xFF)
    return bytes(out)


def _unpack_symbols(data: bytes, count: int, quantizer: str) -> np.ndarray:
    width = 1 if quantizer == QUANTIZER_BINARY else 2
    codes = np.empty(count, dtype=np.uint8)
    acc = 0
    nbits = 0
    pos = 0
    for i in range(count):
        while nbits < width:
            acc |= data[pos] << nbits
            pos += 1
            nbits += 8
        codes[i] = acc & ((1 << width) - 1)
        acc >>= width
        nbits -= width
    if quantizer == QUANTIZER_BINARY:
        return (2 * codes.astype(np.int8) - 1).astype(np.int8)
    if quantizer == QUANTIZER_THREE:
        return (codes.astype(np.int8) - 1).astype(np.int8)
    lut = np.array([-2, -1, 1, 2], dtype=np.int8)
    return lut[codes]


def to_bytes(c: CompressedGradient) -> bytes:
    """Canonical little-endian wire layout for golden-file tests."""
    quantized = c.symbols is not None
    quantizer = _quantizer_of(c.codec_id)
    buf = bytearray()
    buf += _MAGIC + struct.pack("<I", c.d)  # 64-bit header
    buf += struct.pack("<I", c.indices.size)
    buf += struct.pack("<BB", int(c.dense_support), int(quantized))
    cid = c.codec_id.encode()
    buf += struct.pack("<H", len(cid)) + cid
    if not c.dense_support:
        buf += c.indices.astype("<u4").tobytes()
    buf += struct.pack("<B", len(c.scales))
    for s in c.scales:
        buf += struct.pack("<d", s)
    if quantized:
        buf += _pack_symbols(c.symbols, quantizer)
    else:
        buf += c.values.astype("<f8").tobytes()
    return bytes(buf)


def _quantizer_of(codec_id: str) -> str:
    for q in (QUANTIZER_BINARY, QUANTIZER_THREE, QUANTIZER_FOUR):
        if q in codec_id.split("|"):
            return q
    return QUANTIZER_NONE


def from_bytes(data: bytes) -> CompressedGradient:
    if data[:4] != _MAGIC:
        raise ConfigurationError("bad payload magic")
    d = struct.unpack_from("<I", data, 4)[0]
    count = struct.unpack_from("<I", data, 8)[0]
    dense_support, quantized = struct.unpack_from("<BB", data, 12)
    (cid_len,) = struct.unpack_from("<H", data, 14)
    pos = 16
    codec_id = data[pos : pos + cid_len].decode()
    pos += cid_len
    if dense_support:
        indices = np.arange(d, dtype=np.int64)
    else:
        indices = np.frombuffer(data, dtype="<u4", count=count, offset=pos).astype(np.int64)
        pos += 4 * count
    (n_scales,) = struct.unpack_from("<B", data, pos)
    pos += 1
    scales = tuple(struct.unpack_from(f"<{n_scales}d", data, pos)) if n_scales else ()
    pos += 8 * n_scales
    quantizer = _quantizer_of(codec_id)
    if quantized:
        symbols = _unpack_symbols(data[pos:], count, quantizer)
        values = dequantize(symbols, scales, quantizer)
    else:
        symbols = None
        values = np.frombuffer(data, dtype="<f8", count=count, offset=pos).copy()
    return CompressedGradient(
        indices=indices,
        values=values,
        codec_id=codec_id,
        d=d,
        payload_bits=_payload_bits(d, count, quantizer, bool(dense_support)),
        scales=scales,
        symbols=symbols,
        dense_support=bool(dense_support),
    )
