"""Split CNN classifier with hand-written forward and backward passes.

The network is cut after the third convolution: everything before the cut
is the transmitter-side feature extractor, everything after it is the
receiver-side fully-connected semantic decoder.

    conv(8) relu pool | conv(16) relu pool | conv(K) relu  <cut>  fc(hidden) relu | fc(C)

Arrays are float64 throughout; images are (H, W) or (N, H, W).
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CONV_LAYERS = ("conv1", "conv2", "conv3")
FC_LAYERS = ("fc1", "fc2")


class ShapeError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    input_shape: tuple = (32, 32)
    channels: tuple = (8, 16, 32)
    hidden: int = 128
    num_classes: int = 6

    def __post_init__(self):
        h, w = self.input_shape
        if h % 4 or w % 4:
            raise ShapeError(f"input size {h}x{w} must be divisible by 4")

    @property
    def num_maps(self):
        return self.channels[-1]

    @property
    def map_shape(self):
        return (self.input_shape[0] // 4, self.input_shape[1] // 4)

    @property
    def feature_shape(self):
        return (self.num_maps,) + self.map_shape

    @property
    def feature_size(self):
        return int(np.prod(self.feature_shape))

    def param_shapes(self):
        shapes = {}
        c_in = 1
        for name, c_out in zip(CONV_LAYERS, self.channels):
            shapes[f"{name}.weight"] = (c_out, c_in, 3, 3)
            shapes[f"{name}.bias"] = (c_out,)
            c_in = c_out
        shapes["fc1.weight"] = (self.feature_size, self.hidden)
        shapes["fc1.bias"] = (self.hidden,)
        shapes["fc2.weight"] = (self.hidden, self.num_classes)
        shapes["fc2.bias"] = (self.num_classes,)
        return shapes


@dataclass
class Model:
    spec: ModelSpec
    params: dict = field(default_factory=dict)

    @classmethod
    def init(cls, spec=ModelSpec(), seed=0):
        """He-normal weights, zero biases."""
        rng = np.random.default_rng([int(seed), 0xC0FFEE])
        params = {}
        for name, shape in spec.param_shapes().items():
            if name.endswith(".bias"):
                params[name] = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
                params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        return cls(spec, params)

    def copy(self):
        return Model(self.spec, {k: v.copy() for k, v in self.params.items()})

    def extract(self, images):
        """Feature maps at the cut point, (N, K, h, w)."""
        return _extract(self.params, self._as_batch(images))[0]

    def decode(self, feature_maps):
        """Logits from (possibly zero-filled) feature maps, (N, C)."""
        a = np.asarray(feature_maps, dtype=float)
        if a.shape[1:] != self.spec.feature_shape:
            raise ShapeError(f"feature maps {a.shape[1:]} do not match {self.spec.feature_shape}")
        return _decode(self.params, a)[0]

    def _as_batch(self, images):
        x = np.asarray(images, dtype=float)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != tuple(self.spec.input_shape):
            raise ShapeError(f"expected images of shape {self.spec.input_shape}, got {x.shape}")
        return x[:, None]


# --------------------------------------------------------------------------
# layers


def _conv_forward(x, w, b):
    n, c, h, wd = x.shape
    f = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))  # n c h w 3 3
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, c * 9)
    out = cols @ w.reshape(f, -1).T + b
    return out.reshape(n, h, wd, f).transpose(0, 3, 1, 2), (x.shape, cols, w)


def _conv_backward(dout, cache):
    (n, c, h, wd), cols, w = cache
    f = w.shape[0]
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(f, -1)).reshape(n, h, wd, c, 3, 3)
    dxp = np.zeros((n, c, h + 2, wd + 2))
    for i in range(3):
        for j in range(3):
            dxp[:, :, i:i + h, j:j + wd] += dcols[..., i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1], dw, db


def _pool_forward(x):
    n, c, h, w = x.shape
    windows = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = windows.argmax(axis=-1)[..., None]
    return np.take_along_axis(windows, idx, axis=-1)[..., 0], (x.shape, idx)


def _pool_backward(dout, cache):
    (n, c, h, w), idx = cache
    dwin = np.zeros((n, c, h // 2, w // 2, 4))
    np.put_along_axis(dwin, idx, dout[..., None], axis=-1)
    return dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


def max_pool2(x):
    """2x2 / stride-2 max pooling of an (N, C, H, W) array."""
    return _pool_forward(np.asarray(x, dtype=float))[0]


def relu(x):
    return np.maximum(x, 0.0)


def _extract(params, x):
    caches = []
    h = x - 0.5  # centre [0, 1] intensities
    for i, name in enumerate(CONV_LAYERS):
        z, conv_cache = _conv_forward(h, params[f"{name}.weight"], params[f"{name}.bias"])
        h = relu(z)
        pool_cache = None
        if i < len(CONV_LAYERS) - 1:
            h, pool_cache = _pool_forward(h)
        caches.append((conv_cache, z > 0, pool_cache))
    return h, caches


def _extract_backward(da, caches, grads):
    for name, (conv_cache, mask, pool_cache) in zip(reversed(CONV_LAYERS), reversed(caches)):
        if pool_cache is not None:
            da = _pool_backward(da, pool_cache)
        da, grads[f"{name}.weight"], grads[f"{name}.bias"] = _conv_backward(da * mask, conv_cache)
    return da


def _decode(params, a):
    flat = a.reshape(len(a), -1)
    z1 = flat @ params["fc1.weight"] + params["fc1.bias"]
    h1 = relu(z1)
    logits = h1 @ params["fc2.weight"] + params["fc2.bias"]
    return logits, (flat, z1 > 0, h1)


def _decode_backward(dlogits, cache, params, grads):
    flat, mask, h1 = cache
    grads["fc2.weight"] = h1.T @ dlogits
    grads["fc2.bias"] = dlogits.sum(axis=0)
    dz1 = (dlogits @ params["fc2.weight"].T) * mask
    grads["fc1.weight"] = flat.T @ dz1
    grads["fc1.bias"] = dz1.sum(axis=0)
    return dz1 @ params["fc1.weight"].T


# --------------------------------------------------------------------------
# public operations


def forward(model, images):
    """Return ``(feature_maps, logits)`` for one image or a batch.

    A single (H, W) image yields (K, h, w) maps and (C,) logits.
    """
    single = np.ndim(images) == 2
    a = model.extract(images)
    logits = model.decode(a)
    if single:
        return a[0], logits[0]
    return a, logits


def softmax(logits):
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict(logits):
    """Arg-max class; ties resolve to the smallest index. Works row-wise on 2-D input."""
    z = np.asarray(logits)
    if z.size == 0:
        raise ValueError("cannot predict from an empty logit vector")
    if z.ndim == 1:
        return int(np.argmax(z))
    return np.argmax(z, axis=-1)


def _loss_and_grads(model, x, labels, transform=None):
    labels = np.asarray(labels)
    a, ext_caches = _extract(model.params, x)
    mask = None
    if transform is not None:
        a, mask = transform(a)
    logits, dec_cache = _decode(model.params, a)
    n = len(labels)
    p = softmax(logits)
    loss = float(-np.mean(np.log(p[np.arange(n), labels] + 1e-300)))
    dlogits = p
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grads = {}
    da = _decode_backward(dlogits, dec_cache, model.params, grads).reshape(a.shape)
    if mask is not None:
        da = da * mask
    _extract_backward(da, ext_caches, grads)
    return loss, grads, logits


def loss_and_grads(model, images, labels):
    """Mean softmax cross-entropy over the batch and its parameter gradients."""
    if len(labels) == 0:
        raise ValueError("empty batch")
    loss, grads, _ = _loss_and_grads(model, model._as_batch(images), labels)
    return loss, grads


def grad_wrt_feature_maps(model, images, class_id):
    """d logit[class_id] / d feature maps at the cut, same shape as the maps.

    Accepts one image (returns (K, h, w)) or a batch (returns (N, K, h, w)).
    ``class_id`` may be an int or a per-image array.
    """
    c = model.spec.num_classes
    cls = np.asarray(class_id)
    if np.any(cls < 0) or np.any(cls >= c):
        raise ValueError(f"invalid class id {class_id}; expected 0..{c - 1}")
    single = np.ndim(images) == 2
    a = model.extract(images)
    flat = a.reshape(len(a), -1)
    z1 = flat @ model.params["fc1.weight"] + model.params["fc1.bias"]
    w2 = model.params["fc2.weight"][:, cls].T  # (N or 1, hidden)
    dz1 = (z1 > 0) * w2
    g = (dz1 @ model.params["fc1.weight"].T).reshape(a.shape)
    return g[0] if single else g


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    lr_schedule: str = "constant"  # "constant" | "cosine"
    seed: int = 0
    channel_mode: str = "clean"  # "clean" | "analog_awgn"
    snr_lo_db: float = 0.0
    snr_hi_db: float = 20.0
    prune_aware: bool = False
    keep_lo: float = 0.03
    keep_hi: float = 1.0
    # None drops a uniform random subset; otherwise the first n maps of this
    # priority list are kept (nested-dropout style)
    prune_priority: tuple | None = None
    keep_sampling: str = "uniform"  # "uniform" | "log" over [keep_lo, keep_hi]
    # chance that a batch keeps only the keep_lo fraction, on top of the sampled range
    keep_min_prob: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.channel_mode not in ("clean", "analog_awgn"):
            raise ValueError(f"unknown channel_mode {self.channel_mode!r}")
        if self.snr_lo_db > self.snr_hi_db:
            raise ValueError("snr_lo_db exceeds snr_hi_db")
        if not 0 < self.keep_lo <= self.keep_hi <= 1:
            raise ValueError("keep fraction range must satisfy 0 < lo <= hi <= 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.keep_sampling not in ("uniform", "log"):
            raise ValueError(f"unknown keep_sampling {self.keep_sampling!r}")
        if not 0 <= self.keep_min_prob <= 1:
            raise ValueError("keep_min_prob must lie in [0, 1]")


def _batch_transform(config, num_maps, rng):
    """Per-batch cut-point perturbation used by noise- and prune-aware training."""
    from .semantic_codec import analog_perturb

    snr = rng.uniform(config.snr_lo_db, config.snr_hi_db) if config.channel_mode == "analog_awgn" else None
    keep = None
    if config.prune_aware:
        if config.keep_sampling == "log":
            frac = np.exp(rng.uniform(np.log(config.keep_lo), np.log(config.keep_hi)))
        else:
            frac = rng.uniform(config.keep_lo, config.keep_hi)
        if config.keep_min_prob > 0 and rng.random() < config.keep_min_prob:
            frac = config.keep_lo
        n_keep = max(1, int(np.floor(frac * num_maps + 0.5)))
        if config.prune_priority is None:
            keep = rng.choice(num_maps, size=n_keep, replace=False)
        else:
            keep = np.sort(np.asarray(config.prune_priority[:n_keep], dtype=np.int64))
    noise_seed = int(rng.integers(2**63))

    def transform(a):
        if keep is None:
            mask = np.ones((1, num_maps, 1, 1))
            return (a if snr is None else analog_perturb(a, snr, noise_seed)), mask
        mask = np.zeros((1, num_maps, 1, 1))
        mask[0, keep] = 1.0
        out = np.zeros_like(a)
        # noise power is measured over the transmitted maps only
        out[:, keep] = a[:, keep] if snr is None else analog_perturb(a[:, keep], snr, noise_seed)
        return out, mask

    return transform


def accuracy(model, images, labels, batch_size=256):
    preds = np.concatenate([
        predict(model.decode(model.extract(images[i:i + batch_size])))
        for i in range(0, len(images), batch_size)
    ])
    return float(np.mean(preds == np.asarray(labels)))


def train(model, split, config=TrainConfig(), log=None):
    """SGD with momentum on ``split.train_x``; updates ``model`` in place.

    Returns ``(model, history)`` where history holds one dict per epoch.
    """
    rng = np.random.default_rng([int(config.seed), 0x7A1])
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    x_all = split.train_x
    y_all = np.asarray(split.train_y)
    n = len(x_all)
    history = []
    steps_per_epoch = -(-n // config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            transform = None
            if config.channel_mode != "clean" or config.prune_aware:
                transform = _batch_transform(config, model.spec.num_maps, rng)
            loss, grads, _ = _loss_and_grads(model, x_all[idx][:, None], y_all[idx], transform)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss in epoch {epoch}")
            total += loss * len(idx)
            lr = config.learning_rate
            if config.lr_schedule == "cosine":
                lr *= 0.5 * (1.0 + np.cos(np.pi * step / total_steps))
            step += 1
            for name, g in grads.items():
                velocity[name] = config.momentum * velocity[name] - lr * g
                model.params[name] += velocity[name]
        row = {"epoch": epoch, "loss": total / n, "test_accuracy": accuracy(model, split.test_x, split.test_y)}
        history.append(row)
        if log is not None:
            log(row)
    return model, history


# --------------------------------------------------------------------------
# checkpoints

_MAGIC = b"SCNN"
_VERSION = 1


def checkpoint_bytes(model):
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<BH", _VERSION, len(model.params)))
    for name, value in model.params.items():
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", value.ndim))
        buf.write(struct.pack(f"<{value.ndim}I", *value.shape))
        buf.write(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return buf.getvalue()


def model_fingerprint(model):
    """SHA-256 hex digest of the model's checkpoint encoding."""
    return hashlib.sha256(checkpoint_bytes(model)).hexdigest()


def save_checkpoint(model, path):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint at offset {self.pos} reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def parse_checkpoint(data):
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != _MAGIC:
        raise CheckpointError(f"bad magic {magic!r} at offset 0")
    (version, count) = r.unpack("<BH", "version")
    if version != _VERSION:
        raise CheckpointError(f"unsupported version {version} at offset 4")
    params = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "name length")
        name = r.take(name_len, "name").decode("utf-8")
        (rank,) = r.unpack("<B", "rank")
        shape = r.unpack(f"<{rank}I", "shape")
        size = int(np.prod(shape)) if rank else 1
        raw = r.take(4 * size, f"values of {name}")
        params[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
    if r.pos != len(data):
        raise CheckpointError(f"trailing bytes at offset {r.pos}")
    spec = _infer_spec(params)
    expected = spec.param_shapes()
    if list(expected) != list(params) or any(expected[k] != params[k].shape for k in params):
        raise CheckpointError("parameter records do not match the model layout")
    return Model(spec, params)


def _infer_spec(params):
    try:
        channels = tuple(params[f"{n}.weight"].shape[0] for n in CONV_LAYERS)
        feat, hidden = params["fc1.weight"].shape
        num_classes = params["fc2.weight"].shape[1]
    except (KeyError, ValueError):
        raise CheckpointError("checkpoint lacks required layer records") from None
    side = int(round(4 * np.sqrt(feat / channels[-1])))
    return ModelSpec((side, side), channels, hidden, num_classes)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read())
