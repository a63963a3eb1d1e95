"""PBM "P4" binary bitmap reader/writer.

Convention used throughout this repo: bit 1 maps to spin +1 and bit 0 to
spin -1, rows packed most-significant-bit first, each row padded to a whole
byte (the standard P4 row packing).
"""

from __future__ import annotations

import numpy as np

from .grid import validate_image


def write_pbm(path, pixels):
    arr = validate_image(pixels)
    height, width = arr.shape
    packed = np.packbits((arr > 0).astype(np.uint8), axis=1)
    with open(path, "wb") as fh:
        fh.write(b"P4\n%d %d\n" % (width, height))
        fh.write(packed.tobytes())


def read_pbm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 3:
        if pos >= len(data):
            raise ValueError(f"{path}: truncated PBM header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if tokens[0] != b"P4":
        raise ValueError(f"{path}: not a P4 bitmap (magic {tokens[0]!r})")
    width, height = int(tokens[1]), int(tokens[2])
    pos += 1  # single whitespace byte separates header from raster data
    row_bytes = (width + 7) // 8
    raster = np.frombuffer(data, dtype=np.uint8, count=height * row_bytes, offset=pos)
    bits = np.unpackbits(raster.reshape(height, row_bytes), axis=1)[:, :width]
    return (bits.astype(np.int8) * 2 - 1)
