"""End-to-end row-centric coding schemes over whole images.

Implemented schemes, all lossless and decodable from the bitstream header
(plus, for the external-table empirical variant, the shared context table):

* 0-sided model coding: rows split into blocks, each block coded
  independently by column-chain BP at a moment-matched parameter.
* 1-sided model coding: each block additionally conditioned on the decoded
  row directly above it, absorbed as a self-correlation field.
* 0/2-sided coding: alternating "lines" (0-sided) and "strips" (2-sided,
  conditioned on the decoded rows above and below); all lines are coded
  before any strip.
* 1-sided empirical coding: per-pixel coding from a trained frequency table
  whose context is the left pixel plus c-1 pixels of the previous row.

Tail rule: when the image height is not divisible by the block size, the
final block takes the remaining rows and uses the parameter calibrated for
its own height.  In the 0/2-sided layout a trailing strip that would touch
the bottom edge is coded as a line instead, since it has no row below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import chain
from .chain import BlockModel, backward_pass, build_block_model
from .coder import (CorruptStreamError, QuantizedDistribution, RangeDecoder,
                    RangeEncoder, StreamHeader, assemble_stream, parse_stream,
                    quantize)
from .grid import validate_image

SCHEME_MODEL0 = 0
SCHEME_MODEL1 = 1
SCHEME_RCC = 2
SCHEME_EMPIRICAL = 3
SCHEME_EMPIRICAL_EMBED = 4

SCHEME_NAMES = {
    SCHEME_MODEL0: "model0",
    SCHEME_MODEL1: "model1",
    SCHEME_RCC: "rcc02",
    SCHEME_EMPIRICAL: "empirical1",
    SCHEME_EMPIRICAL_EMBED: "empirical1",
}

MAX_CONTEXT_SIZE = 16

# Decode buffers start from this sentinel; reading it as context would mean a
# forward reference, which the decoders assert against.
_UNSET = 0


@dataclass
class EncodeResult:
    data: bytes
    ideal_bits: float
    n_symbols: int
    symbol_bits: np.ndarray

    @property
    def payload_bits(self):
        """Range-coder output length in bits (header and framing excluded)."""
        hdr, payload = parse_stream(self.data)
        if hdr.scheme == SCHEME_EMPIRICAL_EMBED:
            payload = payload[_table_blob_size(hdr.context_size):]
        return 8 * len(payload)


def block_spans(height, n_rows):
    """[(start_row, n_rows)] partition; the final block absorbs the remainder."""
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    spans = []
    pos = 0
    while pos < height:
        h = min(n_rows, height - pos)
        spans.append((pos, h))
        pos += h
    return spans


def rcc_layout(height, n_lines, n_strips):
    """Alternating (start, height, kind) spans, kind "line" or "strip".

    Starts with a line; a trailing strip that would touch the bottom edge is
    emitted as a line since 2-sided coding needs a row below.
    """
    if n_lines < 1 or n_strips < 1:
        raise ValueError("line and strip heights must be >= 1")
    spans = []
    pos = 0
    want_line = True
    while pos < height:
        if want_line:
            h = min(n_lines, height - pos)
            spans.append((pos, h, "line"))
        else:
            h = min(n_strips, height - pos)
            kind = "line" if pos + h == height else "strip"
            spans.append((pos, h, kind))
        want_line = not want_line
        pos += h
    return spans


def _column_states(block):
    """Column super-pixel states of an (h, W) block; bit k = row k, 1 means +1."""
    h = block.shape[0]
    weights = (1 << np.arange(h, dtype=np.int64))[:, None]
    return ((block > 0).astype(np.int64) * weights).sum(axis=0)


def _states_to_block(states, n_rows):
    bits = (np.asarray(states, dtype=np.int64)[None, :] >> np.arange(n_rows)[:, None]) & 1
    return (bits.astype(np.int8) * 2 - 1)


class _BlockCoder:
    """One block model with its messages pre-pulled, exposing per-column
    conditional distributions as the encoder/decoder walks left to right."""

    def __init__(self, model):
        self.model = model
        self.msgs = backward_pass(model)
        self.gm = model.unaries() * self.msgs
        self.agree = model.agreement_weights()
        _, _, self.pop = chain._state_tables(model.n_rows)
        self.states = np.arange(model.n_states, dtype=np.uint32)

    def dist(self, col, prev_state):
        if col == 0:
            p = self.gm[0]
        else:
            p = self.agree[self.pop[self.states ^ np.uint32(prev_state)]] * self.gm[col]
        return p / p.sum()


def _code_block(coder, enc, states, bits_out):
    prev = None
    for i in range(coder.model.width):
        p = coder.dist(i, prev)
        s = int(states[i])
        bits_out.append(-math.log2(p[s]))
        enc.encode(quantize(p), s)
        prev = s


def _decode_block(coder, dec):
    states = np.empty(coder.model.width, dtype=np.int64)
    prev = None
    for i in range(coder.model.width):
        p = coder.dist(i, prev)
        s = dec.decode(quantize(p))
        states[i] = s
        prev = s
    return _states_to_block(states, coder.model.n_rows)


def _tail_param(n_rows, spans, theta_star, tail_theta_star):
    heights = {h for _, h in spans}
    if heights == {n_rows}:
        return theta_star
    if tail_theta_star is None:
        tail_h = (heights - {n_rows}).pop()
        raise ValueError(
            f"tail block of {tail_h} rows requires tail_theta_star calibrated for that height")
    return float(tail_theta_star)


def encode_model_0sided(pixels, n_rows, theta_star, tail_theta_star=None, theta=0.0):
    """0-sided model coding: every block coded independently, zero fields."""
    pixels = validate_image(pixels)
    height, width = pixels.shape
    spans = block_spans(height, n_rows)
    tail_ts = _tail_param(n_rows, spans, theta_star, tail_theta_star)

    coders = {}
    enc = RangeEncoder()
    bits = []
    for start, h in spans:
        if h not in coders:
            ts = theta_star if h == n_rows else tail_ts
            coders[h] = _BlockCoder(build_block_model(h, ts, width=width))
        _code_block(coders[h], enc, _column_states(pixels[start:start + h]), bits)

    hdr = StreamHeader(SCHEME_MODEL0, height, width, n_rows, 0, theta,
                       (theta_star, tail_ts, 0.0))
    sb = np.asarray(bits)
    return EncodeResult(assemble_stream(hdr, enc.finish()), float(sb.sum()), sb.size, sb)


def _decode_model_0sided(hdr, payload):
    dec = RangeDecoder(payload)
    out = np.zeros((hdr.height, hdr.width), dtype=np.int8)
    coders = {}
    for start, h in block_spans(hdr.height, hdr.n_rows):
        if h not in coders:
            ts = hdr.theta_star[0] if h == hdr.n_rows else hdr.theta_star[1]
            coders[h] = _BlockCoder(build_block_model(h, ts, width=hdr.width))
        out[start:start + h] = _decode_block(coders[h], dec)
    return out


def encode_model_1sided(pixels, n_rows, theta_star, tail_theta_star=None, theta=0.0):
    """1-sided model coding: each block conditioned on the row directly above
    it (zero top field for the first block)."""
    pixels = validate_image(pixels)
    height, width = pixels.shape
    spans = block_spans(height, n_rows)
    tail_ts = _tail_param(n_rows, spans, theta_star, tail_theta_star)

    enc = RangeEncoder()
    bits = []
    for start, h in spans:
        ts = theta_star if h == n_rows else tail_ts
        top = pixels[start - 1] if start > 0 else None
        coder = _BlockCoder(build_block_model(h, ts, width=width, top_row=top))
        _code_block(coder, enc, _column_states(pixels[start:start + h]), bits)

    hdr = StreamHeader(SCHEME_MODEL1, height, width, n_rows, 0, theta,
                       (theta_star, tail_ts, 0.0))
    sb = np.asarray(bits)
    return EncodeResult(assemble_stream(hdr, enc.finish()), float(sb.sum()), sb.size, sb)


def _decode_model_1sided(hdr, payload):
    dec = RangeDecoder(payload)
    out = np.zeros((hdr.height, hdr.width), dtype=np.int8)
    for start, h in block_spans(hdr.height, hdr.n_rows):
        ts = hdr.theta_star[0] if h == hdr.n_rows else hdr.theta_star[1]
        if start > 0:
            top = out[start - 1]
            assert np.all(top != _UNSET), "forward reference: row above not yet decoded"
        else:
            top = None
        coder = _BlockCoder(build_block_model(h, ts, width=hdr.width, top_row=top))
        out[start:start + h] = _decode_block(coder, dec)
    return out


def encode_rcc(pixels, n_lines, n_strips, theta, theta_star_line,
               tail_theta_star_line=None, theta_star_strip=None):
    """0/2-sided coding: all lines 0-sided first, then strips 2-sided given
    the rows immediately above and below.  Strips default to the source
    parameter theta, which makes their coding distributions exact."""
    pixels = validate_image(pixels)
    height, width = pixels.shape
    spans = rcc_layout(height, n_lines, n_strips)
    line_heights = {h for _, h, k in spans if k == "line"}
    if line_heights != {n_lines} and tail_theta_star_line is None:
        tail_h = (line_heights - {n_lines}).pop()
        raise ValueError(
            f"tail line of {tail_h} rows requires tail_theta_star_line for that height")
    tail_ts = theta_star_line if tail_theta_star_line is None else float(tail_theta_star_line)
    ts_strip = theta if theta_star_strip is None else float(theta_star_strip)

    enc = RangeEncoder()
    bits = []
    line_coders = {}
    for start, h, kind in spans:
        if kind != "line":
            continue
        if h not in line_coders:
            ts = theta_star_line if h == n_lines else tail_ts
            line_coders[h] = _BlockCoder(build_block_model(h, ts, width=width))
        _code_block(line_coders[h], enc, _column_states(pixels[start:start + h]), bits)
    for start, h, kind in spans:
        if kind != "strip":
            continue
        model = build_block_model(h, ts_strip, width=width,
                                  top_row=pixels[start - 1], bottom_row=pixels[start + h])
        _code_block(_BlockCoder(model), enc, _column_states(pixels[start:start + h]), bits)

    hdr = StreamHeader(SCHEME_RCC, height, width, n_lines, n_strips, theta,
                       (theta_star_line, ts_strip, tail_ts))
    sb = np.asarray(bits)
    return EncodeResult(assemble_stream(hdr, enc.finish()), float(sb.sum()), sb.size, sb)


def _decode_rcc(hdr, payload):
    dec = RangeDecoder(payload)
    out = np.zeros((hdr.height, hdr.width), dtype=np.int8)
    spans = rcc_layout(hdr.height, hdr.n_rows, hdr.context_size)
    line_coders = {}
    for start, h, kind in spans:
        if kind != "line":
            continue
        if h not in line_coders:
            ts = hdr.theta_star[0] if h == hdr.n_rows else hdr.theta_star[2]
            line_coders[h] = _BlockCoder(build_block_model(h, ts, width=hdr.width))
        out[start:start + h] = _decode_block(line_coders[h], dec)
    for start, h, kind in spans:
        if kind != "strip":
            continue
        top, bottom = out[start - 1], out[start + h]
        assert np.all(top != _UNSET) and np.all(bottom != _UNSET), \
            "forward reference: strip boundary rows not yet decoded"
        model = build_block_model(h, hdr.theta_star[1], width=hdr.width,
                                  top_row=top, bottom_row=bottom)
        out[start:start + h] = _decode_block(_BlockCoder(model), dec)
    return out


class ContextTable:
    """Frequency table for 1-sided empirical coding.

    The context index packs c bits: bit 0 is the pixel to the left, bits
    1..c-1 are the previous-row pixels at the current column and extending
    rightward.  Out-of-image positions take the pad value -1.  Conditionals
    use additive (Laplace) smoothing with alpha = 1, so coding probabilities
    are always strictly positive.
    """

    def __init__(self, context_size, counts=None):
        if not 1 <= context_size <= MAX_CONTEXT_SIZE:
            raise ValueError(f"context size must be in [1, {MAX_CONTEXT_SIZE}]")
        self.context_size = int(context_size)
        n = 1 << self.context_size
        if counts is None:
            counts = np.zeros((n, 2), dtype=np.uint64)
        else:
            counts = np.asarray(counts, dtype=np.uint64)
            if counts.shape != (n, 2):
                raise ValueError(f"counts must have shape {(n, 2)}")
        self.counts = counts
        self._quantized = None

    def observe_image(self, pixels):
        pixels = validate_image(pixels)
        ctx = context_indices(pixels, self.context_size)
        bit = (pixels > 0).astype(np.int64)
        np.add.at(self.counts, (ctx.ravel(), bit.ravel()), 1)
        self._quantized = None

    def prob_plus(self):
        """Smoothed P(pixel = +1 | context) for every context index."""
        c = self.counts.astype(np.float64)
        return (c[:, 1] + 1.0) / (c.sum(axis=1) + 2.0)

    def quantized(self):
        if self._quantized is None:
            p = self.prob_plus()
            f_plus = np.clip(np.rint(p * 65536).astype(np.int64), 1, 65535)
            cum = np.zeros((p.size, 3), dtype=np.int64)
            cum[:, 1] = 65536 - f_plus  # symbol 0 is spin -1
            cum[:, 2] = 65536
            self._quantized = cum
        return self._quantized

    def to_bytes(self):
        return bytes([self.context_size]) + self.counts.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, blob):
        if len(blob) < 1:
            raise CorruptStreamError("empty context-table blob")
        c = blob[0]
        need = _table_blob_size(c)
        if len(blob) < need:
            raise CorruptStreamError("context-table blob truncated")
        counts = np.frombuffer(blob[1:need], dtype="<u8").reshape(1 << c, 2)
        return cls(c, counts.copy())


def _table_blob_size(context_size):
    return 1 + (1 << context_size) * 16


def context_indices(pixels, context_size):
    """(M, W) packed context index for every pixel (pad value -1 outside)."""
    pixels = validate_image(pixels)
    height, width = pixels.shape
    left = np.full((height, width), -1, dtype=np.int8)
    left[:, 1:] = pixels[:, :-1]
    idx = (left > 0).astype(np.int64)
    for j in range(1, context_size):
        above = np.full((height, width), -1, dtype=np.int8)
        off = j - 1  # previous-row column offset: current column, extending right
        if off < width:
            above[1:, :width - off] = pixels[:-1, off:]
        idx |= (above > 0).astype(np.int64) << j
    return idx


def train_context_table(corpus, context_size):
    """Collect (context, pixel) frequencies over a list of training images."""
    if not corpus:
        raise ValueError("training corpus is empty")
    table = ContextTable(context_size)
    for img in corpus:
        table.observe_image(img)
    return table


def encode_empirical_1sided(pixels, table, embed_table=False, theta=0.0):
    """Per-pixel raster coding from a trained context table (2-pass scheme).

    The decoder needs the identical table: either shipped out-of-band (the
    default; training data shared by convention) or embedded in the stream
    with ``embed_table=True``.  Embedded-table bytes are excluded from the
    coder's payload-rate accounting.
    """
    pixels = validate_image(pixels)
    height, width = pixels.shape
    c = table.context_size
    ctx = context_indices(pixels, c)
    p_plus = table.prob_plus()
    cums = table.quantized()
    total = 65536

    enc = RangeEncoder()
    bits = []
    for r in range(height):
        for i in range(width):
            k = ctx[r, i]
            bit = 1 if pixels[r, i] > 0 else 0
            p = p_plus[k] if bit else 1.0 - p_plus[k]
            bits.append(-math.log2(p))
            enc.encode(QuantizedDistribution(cums[k], total), bit)

    scheme = SCHEME_EMPIRICAL_EMBED if embed_table else SCHEME_EMPIRICAL
    payload = (table.to_bytes() if embed_table else b"") + enc.finish()
    hdr = StreamHeader(scheme, height, width, 1, c, theta, (0.0, 0.0, 0.0))
    sb = np.asarray(bits)
    return EncodeResult(assemble_stream(hdr, payload), float(sb.sum()), sb.size, sb)


def _decode_empirical(hdr, payload, table):
    if hdr.scheme == SCHEME_EMPIRICAL_EMBED:
        table = ContextTable.from_bytes(payload)
        payload = payload[_table_blob_size(table.context_size):]
    if table is None:
        raise ValueError("external-table empirical stream needs the training table")
    if table.context_size != hdr.context_size:
        raise CorruptStreamError(
            f"table context size {table.context_size} != stream's {hdr.context_size}")
    c = hdr.context_size
    cums = table.quantized()
    total = 65536
    dec = RangeDecoder(payload)
    out = np.zeros((hdr.height, hdr.width), dtype=np.int8)
    width = hdr.width
    for r in range(hdr.height):
        for i in range(width):
            k = 0
            if i > 0:
                assert out[r, i - 1] != _UNSET, "forward reference: left pixel"
                k = 1 if out[r, i - 1] > 0 else 0
            for j in range(1, c):
                col = i + j - 1
                if r > 0 and col < width:
                    assert out[r - 1, col] != _UNSET, "forward reference: previous row"
                    if out[r - 1, col] > 0:
                        k |= 1 << j
            bit = dec.decode(QuantizedDistribution(cums[k], total))
            out[r, i] = 1 if bit else -1
    return out


def decode(data, table=None):
    """Decode any scheme's bitstream back to the exact source image."""
    hdr, payload = parse_stream(data)
    if hdr.scheme == SCHEME_MODEL0:
        return _decode_model_0sided(hdr, payload)
    if hdr.scheme == SCHEME_MODEL1:
        return _decode_model_1sided(hdr, payload)
    if hdr.scheme == SCHEME_RCC:
        return _decode_rcc(hdr, payload)
    if hdr.scheme in (SCHEME_EMPIRICAL, SCHEME_EMPIRICAL_EMBED):
        return _decode_empirical(hdr, payload, table)
    raise CorruptStreamError(f"unknown scheme id {hdr.scheme}")
