"""Semantic encoder/decoder: map selection, 8-bit quantization, frame layout.

Frame layout (little-endian)::

    K u16 | n_keep u16 | map_h u8 | map_w u8 | pad u16 = 0
    per map: index u16 | vmin f32 | vmax f32 | map_h*map_w code bytes
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

FRAME_HEADER = struct.Struct("<HHBBH")
MAP_HEADER = struct.Struct("<Hff")


class FrameError(ValueError):
    pass


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def num_keep(cr, num_maps):
    """Number of maps kept at compression ratio ``cr`` (fraction discarded)."""
    if not 0.0 <= cr < 1.0:
        raise ValueError(f"compression ratio {cr} outside [0, 1)")
    return max(1, int(round_half_away((1.0 - cr) * num_maps)))


def select_maps(ranking, cr, num_maps=None):
    """Top ``num_keep`` maps of ``ranking`` (most important first), sorted ascending."""
    order = np.asarray(ranking, dtype=np.int64)
    k = len(order) if num_maps is None else num_maps
    if sorted(order.tolist()) != list(range(k)):
        raise ValueError("ranking is not a permutation of the map indices")
    return np.sort(order[:num_keep(cr, k)])


def random_select(num_maps, cr, seed):
    """Task-agnostic baseline: a uniform random subset of ``num_keep`` maps."""
    n = num_keep(cr, num_maps)
    rng = np.random.default_rng([int(seed), 0x5E1EC7])
    return np.sort(rng.choice(num_maps, size=n, replace=False))


@dataclass
class QuantizedMap:
    index: int
    vmin: float
    vmax: float
    codes: np.ndarray  # (h, w) uint8

    def dequantize(self):
        return dequantize_map(self)


def quantize_map(values, index=0, bounds=None):
    """Affine 8-bit quantization of one map over ``[vmin, vmax]``.

    ``bounds`` overrides the min/max of the data; codes are clipped to the range.
    """
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot quantize non-finite values")
    vmin, vmax = (float(v.min()), float(v.max())) if bounds is None else bounds
    if vmax == vmin:
        codes = np.zeros(v.shape, dtype=np.uint8)
    else:
        scaled = 255.0 * (v - vmin) / (vmax - vmin)
        codes = np.clip(round_half_away(scaled), 0, 255).astype(np.uint8)
    return QuantizedMap(int(index), vmin, vmax, codes)


def dequantize_map(qmap):
    if qmap.vmax == qmap.vmin:
        return np.full(qmap.codes.shape, qmap.vmin, dtype=float)
    step = (qmap.vmax - qmap.vmin) / 255.0
    return qmap.vmin + qmap.codes.astype(float) * step


def _f32_enclosing(lo, hi):
    """Smallest float32 interval containing [lo, hi]."""
    lo32, hi32 = np.float32(lo), np.float32(hi)
    if lo32 > lo:
        lo32 = np.nextafter(lo32, np.float32(-np.inf))
    if hi32 < hi:
        hi32 = np.nextafter(hi32, np.float32(np.inf))
    if lo == hi:
        hi32 = lo32
    return float(lo32), float(hi32)


@dataclass
class SemanticFrame:
    num_maps: int
    map_h: int
    map_w: int
    maps: list

    @property
    def n_keep(self):
        return len(self.maps)

    @property
    def indices(self):
        return [m.index for m in self.maps]

    def to_bytes(self):
        parts = [FRAME_HEADER.pack(self.num_maps, self.n_keep, self.map_h, self.map_w, 0)]
        for m in self.maps:
            parts.append(MAP_HEADER.pack(m.index, m.vmin, m.vmax))
            parts.append(m.codes.tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data):
        if len(data) < FRAME_HEADER.size:
            raise FrameError("frame shorter than its header")
        k, n_keep, h, w, pad = FRAME_HEADER.unpack_from(data)
        if pad != 0:
            raise FrameError("non-zero header padding")
        per_map = MAP_HEADER.size + h * w
        if len(data) != FRAME_HEADER.size + n_keep * per_map:
            raise FrameError(f"frame length {len(data)} does not match {n_keep} maps of {h}x{w}")
        maps = []
        offset = FRAME_HEADER.size
        for _ in range(n_keep):
            index, vmin, vmax = MAP_HEADER.unpack_from(data, offset)
            offset += MAP_HEADER.size
            codes = np.frombuffer(data, dtype=np.uint8, count=h * w, offset=offset).reshape(h, w).copy()
            offset += h * w
            maps.append(QuantizedMap(index, vmin, vmax, codes))
        frame = cls(k, h, w, maps)
        frame.validate()
        return frame

    def validate(self):
        idx = self.indices
        if not idx:
            raise FrameError("frame carries no maps")
        if any(i >= self.num_maps for i in idx):
            raise FrameError(f"map index out of range for K={self.num_maps}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise FrameError("map indices are not strictly increasing")
        for m in self.maps:
            if not m.vmin <= m.vmax:
                raise FrameError(f"map {m.index} has vmin > vmax")

    # Structure (header, per-map index and range) travels protected; only the
    # code bytes are exposed to channel errors.
    def code_bytes(self):
        return b"".join(m.codes.tobytes() for m in self.maps)

    def with_code_bytes(self, data):
        size = self.map_h * self.map_w
        if len(data) != size * self.n_keep:
            raise FrameError("code payload size mismatch")
        maps = []
        for i, m in enumerate(self.maps):
            codes = np.frombuffer(data, dtype=np.uint8, count=size, offset=i * size).reshape(self.map_h, self.map_w)
            maps.append(QuantizedMap(m.index, m.vmin, m.vmax, codes.copy()))
        return SemanticFrame(self.num_maps, self.map_h, self.map_w, maps)


def frame_size(n_keep, map_h, map_w):
    """Serialized byte size of a frame carrying ``n_keep`` maps."""
    return FRAME_HEADER.size + n_keep * (MAP_HEADER.size + map_h * map_w)


def encode_frame(feature_maps, indices):
    """Quantize the selected maps of a (K, h, w) tensor into a frame.

    Ranges are widened to the enclosing float32 interval so the serialized
    frame dequantizes to exactly the same values as the in-memory one.
    """
    a = np.asarray(feature_maps, dtype=float)
    k, h, w = a.shape
    idx = [int(i) for i in indices]
    if not idx or any(not 0 <= i < k for i in idx) or any(b <= a_ for a_, b in zip(idx, idx[1:])):
        raise FrameError(f"indices must be sorted, unique and within [0, {k}): {idx}")
    maps = []
    for i in idx:
        m = a[i]
        if not np.all(np.isfinite(m)):
            raise ValueError("cannot quantize non-finite values")
        bounds = _f32_enclosing(float(m.min()), float(m.max()))
        maps.append(quantize_map(m, i, bounds))
    return SemanticFrame(k, h, w, maps)


def decode_frame(frame, num_maps=None):
    """Dequantize a frame into a (K, h, w) tensor, zero-filling dropped maps."""
    k = frame.num_maps if num_maps is None else num_maps
    if k != frame.num_maps:
        raise FrameError(f"frame is for K={frame.num_maps}, decoder expects K={k}")
    frame.validate()
    out = np.zeros((k, frame.map_h, frame.map_w))
    for m in frame.maps:
        out[m.index] = dequantize_map(m)
    return out


def analog_perturb(feature_maps, snr_db, seed):
    """Add white Gaussian noise at ``snr_db`` relative to the tensor's mean power.

    ``seed`` may be an int or a ``numpy.random.Generator``. An all-zero input
    is returned unchanged.
    """
    a = np.asarray(feature_maps, dtype=float)
    power = float(np.mean(a * a)) if a.size else 0.0
    if power == 0.0:
        return a.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(int(seed))
    sigma = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    return a + rng.normal(0.0, sigma, size=a.shape)
