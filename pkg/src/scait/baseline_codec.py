"""Block-DCT grayscale codec used as the conventional-transmission baseline.

Per 8x8 block: level shift, orthonormal DCT-II, quality-scaled quantization,
zigzag scan, then (zero-run, level) pairs coded with order-0 Exp-Golomb.
Each block carries its own bit length so a corrupted block never
desynchronizes its neighbours; undecodable blocks are painted mid-gray.

Stream layout (little-endian)::

    "SCIM" | width u16 | height u16 | quality u8 | block count u16
    per block: bit length u16 | ceil(bits / 8) bytes, zero padded
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .semantic_codec import round_half_away

# Conventional 8x8 luminance quantization table.
QBASE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=float)

_STREAM_HEADER = struct.Struct("<4sHHBH")
_MAGIC = b"SCIM"
EOB_RUN = 63
MID_GRAY = 0.5


class CodecError(ValueError):
    pass


class EntropyError(CodecError):
    pass


def quant_matrix(quality):
    if not 1 <= quality <= 100:
        raise ValueError(f"quality {quality} outside [1, 100]")
    scale = (5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality) / 100.0
    return np.clip(round_half_away(QBASE * scale), 1, 255)


def _dct_matrix(n=8):
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    d = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    d[0] /= np.sqrt(2.0)
    return d


_D = _dct_matrix()


def dct8x8(block):
    return _D @ np.asarray(block, dtype=float) @ _D.T


def idct8x8(coeffs):
    return _D.T @ np.asarray(coeffs, dtype=float) @ _D


def _zigzag_order(n=8):
    order = []
    for s in range(2 * n - 1):
        diag = [(i, s - i) for i in range(n) if 0 <= s - i < n]
        # even anti-diagonals run bottom-left to top-right
        order.extend(reversed(diag) if s % 2 == 0 else diag)
    return order


ZIGZAG = _zigzag_order()
_ZZ_ROWS = np.array([r for r, _ in ZIGZAG])
_ZZ_COLS = np.array([c for _, c in ZIGZAG])


def zigzag(coeffs):
    return np.asarray(coeffs)[_ZZ_ROWS, _ZZ_COLS]


def inverse_zigzag(seq):
    seq = np.asarray(seq)
    out = np.zeros((8, 8), dtype=seq.dtype)
    out[_ZZ_ROWS, _ZZ_COLS] = seq
    return out


# --------------------------------------------------------------------------
# Exp-Golomb


def exp_golomb(n):
    """Order-0 unsigned Exp-Golomb code of ``n`` as a bit string."""
    if n < 0:
        raise ValueError("unsigned Exp-Golomb needs n >= 0")
    body = bin(n + 1)[2:]
    return "0" * (len(body) - 1) + body


def signed_to_unsigned(v):
    return -2 * v if v <= 0 else 2 * v - 1


def unsigned_to_signed(u):
    return -(u // 2) if u % 2 == 0 else (u + 1) // 2


def entropy_encode(levels):
    """Code 64 zigzag levels as (zero run, level) pairs plus end-of-block."""
    out = []
    run = 0
    for v in levels:
        v = int(v)
        if v == 0:
            run += 1
            continue
        out.append(exp_golomb(run))
        out.append(exp_golomb(signed_to_unsigned(v)))
        run = 0
    out.append(exp_golomb(EOB_RUN))
    out.append(exp_golomb(0))
    return "".join(out)


class _BitReader:
    def __init__(self, bits, limit):
        self.bits = bits
        self.limit = limit
        self.pos = 0

    def read_ue(self):
        zeros = 0
        while True:
            if self.pos >= self.limit:
                raise EntropyError("code overruns block")
            bit = self.bits[self.pos]
            self.pos += 1
            if bit:
                break
            zeros += 1
            if zeros > 16:
                raise EntropyError("malformed Exp-Golomb prefix")
        if self.pos + zeros > self.limit:
            raise EntropyError("code overruns block")
        value = 1
        for _ in range(zeros):
            value = (value << 1) | int(self.bits[self.pos])
            self.pos += 1
        return value - 1


def entropy_decode(bits, limit=None):
    """Inverse of :func:`entropy_encode`; ``bits`` is a str or 0/1 sequence.

    Raises ``EntropyError`` when the data cannot be a valid block.
    """
    if isinstance(bits, str):
        bits = [c == "1" for c in bits]
    reader = _BitReader(bits, len(bits) if limit is None else limit)
    levels = [0] * 64
    pos = 0
    while True:
        run = reader.read_ue()
        level = unsigned_to_signed(reader.read_ue())
        if level == 0:
            if run != EOB_RUN:
                raise EntropyError("zero level outside end-of-block")
            return levels
        pos += run
        if pos >= 64:
            raise EntropyError("run past end of block")
        levels[pos] = level
        pos += 1


# --------------------------------------------------------------------------
# images


@dataclass
class BlockStream:
    width: int
    height: int
    quality: int
    blocks: list  # per block: str of '0'/'1'

    def to_bytes(self):
        parts = [_STREAM_HEADER.pack(_MAGIC, self.width, self.height, self.quality, len(self.blocks))]
        for bits in self.blocks:
            if len(bits) > 0xFFFF:
                raise CodecError("block longer than 65535 bits")
            parts.append(struct.pack("<H", len(bits)))
            parts.append(_bits_to_bytes(bits))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _STREAM_HEADER.size:
            raise CodecError("stream shorter than its header")
        magic, w, h, q, count = _STREAM_HEADER.unpack_from(data)
        if magic != _MAGIC:
            raise CodecError(f"bad stream magic {magic!r}")
        if count != _block_count(w, h):
            raise CodecError(f"block count {count} does not match {w}x{h}")
        offset = _STREAM_HEADER.size
        blocks = []
        for _ in range(count):
            if offset + 2 > len(data):
                raise CodecError("truncated block length")
            (nbits,) = struct.unpack_from("<H", data, offset)
            offset += 2
            nbytes = (nbits + 7) // 8
            if offset + nbytes > len(data):
                raise CodecError("truncated block payload")
            blocks.append(_bytes_to_bits(data[offset:offset + nbytes])[:nbits])
            offset += nbytes
        if offset != len(data):
            raise CodecError("trailing bytes after last block")
        return cls(w, h, q, blocks)

    @property
    def nbytes(self):
        return _STREAM_HEADER.size + sum(2 + (len(b) + 7) // 8 for b in self.blocks)

    # Header and per-block lengths travel protected; only block payloads are
    # exposed to channel errors.
    def payload_bytes(self):
        return b"".join(_bits_to_bytes(b) for b in self.blocks)

    def with_payload_bytes(self, data):
        blocks, offset = [], 0
        for b in self.blocks:
            n = (len(b) + 7) // 8
            blocks.append(_bytes_to_bits(data[offset:offset + n])[:len(b)])
            offset += n
        if offset != len(data):
            raise CodecError("payload size mismatch")
        return BlockStream(self.width, self.height, self.quality, blocks)


def _bits_to_bytes(bits):
    arr = np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")
    return np.packbits(arr).tobytes()


def _bytes_to_bits(data):
    return "".join(map(str, np.unpackbits(np.frombuffer(data, dtype=np.uint8)).tolist()))


def _block_count(w, h):
    return ((w + 7) // 8) * ((h + 7) // 8)


def _blocks(image):
    h, w = image.shape
    ph, pw = (-h) % 8, (-w) % 8
    padded = np.pad(image, ((0, ph), (0, pw)), mode="edge")
    rows, cols = padded.shape[0] // 8, padded.shape[1] // 8
    return padded.reshape(rows, 8, cols, 8).transpose(0, 2, 1, 3), (rows, cols)


def encode_image(image, quality=75, qmatrix=None):
    """Compress a 2-D image in [0, 1]. ``qmatrix`` overrides the quality table."""
    img = np.asarray(image, dtype=float)
    q = quant_matrix(quality) if qmatrix is None else np.asarray(qmatrix, dtype=float)
    blocks, (rows, cols) = _blocks(img)
    shifted = (blocks - 0.5) * 255.0
    coeffs = np.einsum("ij,rcjk,lk->rcil", _D, shifted, _D)
    levels = round_half_away(coeffs / q).astype(np.int64)
    coded = [entropy_encode(zigzag(levels[r, c])) for r in range(rows) for c in range(cols)]
    h, w = img.shape
    return BlockStream(w, h, int(quality), coded)


def decode_image(stream, qmatrix=None):
    """Reconstruct an image; blocks that fail to decode are filled with mid-gray."""
    q = quant_matrix(stream.quality) if qmatrix is None else np.asarray(qmatrix, dtype=float)
    rows, cols = (stream.height + 7) // 8, (stream.width + 7) // 8
    out = np.empty((rows * 8, cols * 8))
    for n, bits in enumerate(stream.blocks):
        r, c = divmod(n, cols)
        try:
            levels = entropy_decode(bits)
        except EntropyError:
            out[r * 8:(r + 1) * 8, c * 8:(c + 1) * 8] = MID_GRAY
            continue
        pixels = idct8x8(inverse_zigzag(np.array(levels, dtype=float)) * q) / 255.0 + 0.5
        out[r * 8:(r + 1) * 8, c * 8:(c + 1) * 8] = np.round(np.clip(pixels, 0.0, 1.0) * 255.0) / 255.0
    return out[:stream.height, :stream.width]


def bits_per_pixel(stream):
    return 8.0 * stream.nbytes / (stream.width * stream.height)


def psnr(a, b):
    """Peak SNR in dB for images in [0, 1]; identical images give ``inf``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)
