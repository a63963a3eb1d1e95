"""Bit-exact range coder, distribution quantizer, and bitstream container.

The coder is a 64-bit-register range coder with explicit carry propagation:
the encoder buffers output bytes and walks a carry back through them, the
decoder tracks only the offset (code - low) so it never needs carry logic.
Frequencies are 16-bit totals with every symbol floored at count 1, which
keeps quantization redundancy below 0.001 bpp for the block sizes used here.

Bitstream layout (little-endian), fixed 48-byte header then payload:

    magic   "RCMI" (4 bytes)
    version u8
    scheme  u8
    M       u32   image height
    W       u32   image width
    N_b     u8    block rows (RCC: line rows)
    c       u8    context size (RCC: strip rows)
    theta   f64   source model parameter
    theta*  f64 x 3   scheme parameters (per-scheme slot use, see README)
    payload u32 byte length, then that many bytes

For the embedded-table empirical scheme the payload starts with the
serialized context table, followed by the range-coder bytes.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

QUANT_TOTAL = 1 << 16

_MASK64 = (1 << 64) - 1
_TOP = 1 << 56

MAGIC = b"RCMI"
VERSION = 1

_HEADER = struct.Struct("<4sBBIIBBdddd")
HEADER_SIZE = _HEADER.size


class CorruptStreamError(ValueError):
    """Bitstream is malformed, truncated, or decodes outside the coded range."""


class ZeroProbabilityError(ValueError):
    """A realized symbol has probability zero under its coding distribution."""


@dataclass
class QuantizedDistribution:
    """Cumulative integer frequencies: cum[0] = 0, cum[K] = total <= 2^16,
    strictly increasing so every symbol has frequency >= 1."""

    cum: np.ndarray
    total: int


def quantize(probs):
    """Round a probability vector to integer frequencies summing to 2^16.

    Proportional rounding with largest-remainder correction; every symbol is
    floored at frequency 1, the excess taken from the largest entries.
    """
    p = np.asarray(probs, dtype=np.float64)
    k = p.size
    if k < 2:
        raise ValueError("need at least two symbols")
    if k > QUANT_TOTAL // 2:
        raise ValueError(f"too many symbols ({k}) for 16-bit totals")
    s = p.sum()
    if not np.isfinite(s) or abs(s - 1.0) > 1e-9 or np.any(p < 0):
        raise ValueError("input must be a probability vector summing to 1 within 1e-9")

    raw = p * (QUANT_TOTAL / s)
    f = np.floor(raw).astype(np.int64)
    deficit = QUANT_TOTAL - int(f.sum())
    if deficit > 0:
        order = np.argsort(raw - f, kind="stable")[::-1]
        f[order[:deficit]] += 1

    lifted = int(np.sum(f == 0))
    if lifted:
        f[f == 0] = 1
        order = np.argsort(f, kind="stable")[::-1]
        i = 0
        while lifted > 0:
            take = min(lifted, int(f[order[i]]) - 1)
            f[order[i]] -= take
            lifted -= take
            i += 1

    cum = np.zeros(k + 1, dtype=np.int64)
    np.cumsum(f, out=cum[1:])
    return QuantizedDistribution(cum, QUANT_TOTAL)


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.rng = _MASK64
        self.buf = bytearray()
        self._finished = False

    def _carry(self):
        i = len(self.buf) - 1
        while self.buf[i] == 0xFF:
            self.buf[i] = 0
            i -= 1
        self.buf[i] += 1

    def encode(self, dist, symbol):
        cum = dist.cum
        r = self.rng // dist.total
        self.low += r * int(cum[symbol])
        if self.low > _MASK64:
            self.low &= _MASK64
            self._carry()
        self.rng = r * int(cum[symbol + 1] - cum[symbol])
        while self.rng < _TOP:
            self.buf.append((self.low >> 56) & 0xFF)
            self.low = (self.low << 8) & _MASK64
            self.rng <<= 8

    def finish(self):
        """Terminate with 32 bits: the smallest 2^32-aligned value in range."""
        if self._finished:
            raise RuntimeError("finish() called twice")
        self._finished = True
        val = self.low + ((1 << 32) - 1)
        if val > _MASK64:
            val &= _MASK64
            self._carry()
        val &= ~((1 << 32) - 1)
        for shift in (56, 48, 40, 32):
            self.buf.append((val >> shift) & 0xFF)
        return bytes(self.buf)


class RangeDecoder:
    def __init__(self, data):
        self.data = data
        self.pos = 0
        self.rng = _MASK64
        self.off = 0
        for _ in range(8):
            self.off = (self.off << 8) | self._next_byte()

    def _next_byte(self):
        # Reads past the end return 0: the encoder's termination guarantees
        # the zero-extended code stays inside the final interval.
        if self.pos < len(self.data):
            b = self.data[self.pos]
            self.pos += 1
            return b
        return 0

    def decode(self, dist):
        cum = dist.cum
        r = self.rng // dist.total
        dv = self.off // r
        if dv >= dist.total:
            raise CorruptStreamError("decoder range violation")
        symbol = int(np.searchsorted(cum, dv, side="right")) - 1
        self.off -= r * int(cum[symbol])
        self.rng = r * int(cum[symbol + 1] - cum[symbol])
        while self.rng < _TOP:
            self.off = (self.off << 8) | self._next_byte()
            self.rng <<= 8
        return symbol


def measure_ideal_bits(symbols, dists):
    """Sum of -log2 p(symbol) over aligned (symbol, distribution) pairs.

    This is the rate statistic the experiments report; coder output length is
    tracked separately and always exceeds it slightly.
    """
    total = 0.0
    n = 0
    for sym, p in zip(symbols, dists):
        v = float(np.asarray(p)[sym])
        if v <= 0.0:
            raise ZeroProbabilityError(f"symbol {sym} has zero coding probability")
        total -= math.log2(v)
        n += 1
    if n != len(symbols):
        raise ValueError("symbols and dists must have equal length")
    return total


@dataclass
class StreamHeader:
    scheme: int
    height: int
    width: int
    n_rows: int
    context_size: int
    theta: float
    theta_star: tuple

    def pack(self):
        t = tuple(self.theta_star) + (0.0,) * (3 - len(self.theta_star))
        return _HEADER.pack(MAGIC, VERSION, self.scheme, self.height, self.width,
                            self.n_rows, self.context_size, self.theta, *t)


def assemble_stream(header, payload):
    return header.pack() + struct.pack("<I", len(payload)) + payload


def parse_stream(data):
    """Split a bitstream into (StreamHeader, payload bytes), validating framing."""
    if len(data) < HEADER_SIZE + 4:
        raise CorruptStreamError("stream shorter than header")
    magic, version, scheme, height, width, n_rows, csize, theta, t0, t1, t2 = \
        _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptStreamError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptStreamError(f"unsupported version {version}")
    (plen,) = struct.unpack_from("<I", data, HEADER_SIZE)
    payload = data[HEADER_SIZE + 4:]
    if len(payload) != plen:
        raise CorruptStreamError(f"payload length {len(payload)} != declared {plen}")
    hdr = StreamHeader(scheme, height, width, n_rows, csize, theta, (t0, t1, t2))
    return hdr, payload
