"""Synthetic surface-defect textures and PGM folder ingestion.

Six procedural generators stand in for the NEU hot-rolled steel classes.
Images are 2-D float arrays in [0, 1] that sit on the 8-bit grid
(``k / 255``), so they survive a PGM round trip exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

CLASS_NAMES = (
    "rolled-in_scale",
    "patches",
    "crazing",
    "pitted_surface",
    "inclusion",
    "scratches",
)
NUM_CLASSES = len(CLASS_NAMES)


class DatasetError(ValueError):
    pass


class PGMError(DatasetError):
    pass


@dataclass
class DatasetSplit:
    train_x: np.ndarray  # (N, H, W) float64
    train_y: np.ndarray  # (N,) int64
    test_x: np.ndarray
    test_y: np.ndarray
    class_names: tuple = CLASS_NAMES
    seed: int = 0

    @property
    def image_shape(self):
        return self.train_x.shape[1:]

    @property
    def num_classes(self):
        return len(self.class_names)


@dataclass
class DatasetConfig:
    per_class: int = 300
    size: int = 32
    test_fraction: float = 0.2
    seed: int = 0
    class_names: tuple = field(default=CLASS_NAMES)


# --------------------------------------------------------------------------
# drawing primitives


def _grid(h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    return yy.astype(float), xx.astype(float)


def _segment_distance(yy, xx, p0, p1):
    """Distance from every pixel centre to the segment p0-p1 (row, col)."""
    d = np.subtract(p1, p0, dtype=float)
    length2 = float(d @ d)
    py, px = yy - p0[0], xx - p0[1]
    if length2 == 0.0:
        return np.hypot(py, px)
    t = np.clip((py * d[0] + px * d[1]) / length2, 0.0, 1.0)
    return np.hypot(py - t * d[0], px - t * d[1])


def _stroke(yy, xx, rng, h, w, length, width):
    angle = rng.uniform(0, np.pi)
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    dy, dx = 0.5 * length * np.sin(angle), 0.5 * length * np.cos(angle)
    dist = _segment_distance(yy, xx, (cy - dy, cx - dx), (cy + dy, cx + dx))
    return np.exp(-0.5 * (dist / width) ** 2)


def _rolled_in_scale(rng, h, w, yy, xx):
    # low-frequency mottling
    coarse = ndimage.gaussian_filter(rng.standard_normal((h, w)), sigma=max(h, w) / 10, mode="wrap")
    coarse /= coarse.std() + 1e-12
    return 0.12 * coarse


def _patches(rng, h, w, yy, xx):
    out = np.zeros((h, w))
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(0.08, 0.2) * h, rng.uniform(0.08, 0.2) * w
        out -= 0.3 * np.exp(-0.5 * (((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2))
    return out


def _crazing(rng, h, w, yy, xx):
    # dark contour lines along zero crossings of band-pass noise
    noise = rng.standard_normal((h, w))
    band = ndimage.gaussian_filter(noise, 1.5, mode="wrap") - ndimage.gaussian_filter(noise, 3.0, mode="wrap")
    band /= band.std() + 1e-12
    return -0.3 * np.exp(-0.5 * (band / 0.35) ** 2)


def _pitted_surface(rng, h, w, yy, xx):
    n = int(rng.integers(12, 30) * h * w / 1024) + 1
    out = np.zeros((h, w))
    ys = rng.integers(0, h, n)
    xs = rng.integers(0, w, n)
    np.add.at(out, (ys, xs), -0.45)
    return ndimage.gaussian_filter(out, 0.6, mode="wrap")


def _inclusion(rng, h, w, yy, xx):
    out = np.zeros((h, w))
    base = rng.uniform(0, np.pi)
    for _ in range(rng.integers(1, 4)):
        angle = base + rng.normal(0, 0.15)
        length = rng.uniform(0.25, 0.5) * max(h, w)
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        dy, dx = 0.5 * length * np.sin(angle), 0.5 * length * np.cos(angle)
        dist = _segment_distance(yy, xx, (cy - dy, cx - dx), (cy + dy, cx + dx))
        out -= 0.3 * np.exp(-0.5 * (dist / 1.3) ** 2)
    return out


def _scratches(rng, h, w, yy, xx):
    out = np.zeros((h, w))
    for _ in range(rng.integers(1, 4)):
        out += 0.3 * _stroke(yy, xx, rng, h, w, length=rng.uniform(0.6, 1.2) * max(h, w), width=0.5)
    return out


_GENERATORS = (_rolled_in_scale, _patches, _crazing, _pitted_surface, _inclusion, _scratches)


def generate_texture(class_id, width, height, seed):
    """Render one image of ``class_id`` as an (height, width) array on the 8-bit grid."""
    if not 0 <= class_id < NUM_CLASSES:
        raise DatasetError(f"invalid class id {class_id}; expected 0..{NUM_CLASSES - 1}")
    if width < 8 or height < 8:
        raise DatasetError(f"image must be at least 8x8, got {width}x{height}")
    rng = np.random.default_rng([int(seed), int(class_id), int(width), int(height)])
    yy, xx = _grid(height, width)
    background = rng.uniform(0.4, 0.6)
    img = background + _GENERATORS[class_id](rng, height, width, yy, xx)
    img += rng.normal(0.0, 0.04, size=(height, width))
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def _split_indices(n, test_fraction, rng):
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test >= n:
        raise DatasetError(f"test_fraction {test_fraction} leaves an empty split for {n} samples")
    perm = rng.permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def build_dataset(per_class=300, size=32, test_fraction=0.2, seed=0):
    """Generate ``per_class`` images for each of the six classes and split them.

    The split is stratified: every class contributes ``round(per_class *
    test_fraction)`` test images.
    """
    if per_class < 10:
        raise DatasetError("per_class must be at least 10")
    if not 0.0 < test_fraction < 1.0:
        raise DatasetError("test_fraction must lie in (0, 1)")
    images = np.empty((NUM_CLASSES, per_class, size, size))
    for c in range(NUM_CLASSES):
        for i in range(per_class):
            sample_seed = int(seed) * 1_000_003 + c * per_class + i
            images[c, i] = generate_texture(c, size, size, sample_seed)
    labels = np.repeat(np.arange(NUM_CLASSES), per_class).reshape(NUM_CLASSES, per_class)
    return _stratified_split(images, labels, test_fraction, seed, CLASS_NAMES)


def _stratified_split(images, labels, test_fraction, seed, class_names):
    rng = np.random.default_rng([int(seed), 0x5E1])
    tr_x, tr_y, te_x, te_y = [], [], [], []
    for c in range(len(class_names)):
        train_idx, test_idx = _split_indices(len(images[c]), test_fraction, rng)
        tr_x.append(images[c][train_idx])
        te_x.append(images[c][test_idx])
        tr_y.append(np.full(len(train_idx), labels[c][0], dtype=np.int64))
        te_y.append(np.full(len(test_idx), labels[c][0], dtype=np.int64))
    return DatasetSplit(
        np.concatenate(tr_x), np.concatenate(tr_y), np.concatenate(te_x), np.concatenate(te_y),
        tuple(class_names), int(seed),
    )


# --------------------------------------------------------------------------
# PGM I/O


def _pgm_tokens(data, count, path):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PGMError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PGMError(f"{path}: malformed PGM header")
    return tokens, pos + 1


def parse_pgm(data, path="<bytes>"):
    """Decode binary PGM (P5, maxval 255) bytes into a float image in [0, 1]."""
    tokens, offset = _pgm_tokens(data, 4, path)
    if tokens[0] != b"P5":
        raise PGMError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise PGMError(f"{path}: non-numeric PGM header field") from None
    if width <= 0 or height <= 0:
        raise PGMError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise PGMError(f"{path}: unsupported maxval {maxval} (only 255)")
    raster = data[offset:offset + width * height]
    if len(raster) != width * height:
        raise PGMError(f"{path}: expected {width * height} pixel bytes, found {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width) / 255.0


def read_pgm(path):
    with open(path, "rb") as fh:
        return parse_pgm(fh.read(), path)


def write_pgm(path, image):
    image = np.asarray(image)
    codes = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = codes.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(codes.tobytes())


def load_pgm_dir(path, class_names=CLASS_NAMES, test_fraction=0.2, seed=0):
    """Load ``path/<class_name>/*.pgm`` into a stratified split.

    Files are read in lexicographic order, and every image must share one size.
    """
    per_class = []
    for name in class_names:
        cdir = os.path.join(path, name)
        if not os.path.isdir(cdir):
            raise DatasetError(f"missing class directory {cdir}")
        files = sorted(f for f in os.listdir(cdir) if f.lower().endswith(".pgm"))
        if not files:
            raise DatasetError(f"class directory {cdir} holds no PGM files")
        per_class.append(np.stack([read_pgm(os.path.join(cdir, f)) for f in files]))
    shapes = {imgs.shape[1:] for imgs in per_class}
    if len(shapes) != 1:
        raise DatasetError(f"images differ in size: {sorted(shapes)}")
    labels = [np.full(len(imgs), c) for c, imgs in enumerate(per_class)]
    return _stratified_split(per_class, labels, test_fraction, seed, class_names)


def save_pgm_dir(split, path):
    """Write every image of ``split`` (train then test) under ``path/<class>/``."""
    xs = np.concatenate([split.train_x, split.test_x])
    ys = np.concatenate([split.train_y, split.test_y])
    counters = {}
    for img, label in zip(xs, ys):
        name = split.class_names[label]
        os.makedirs(os.path.join(path, name), exist_ok=True)
        idx = counters.get(name, 0)
        counters[name] = idx + 1
        write_pgm(os.path.join(path, name, f"{idx:05d}.pgm"), img)
    return sum(counters.values())
