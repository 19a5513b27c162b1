"""Knowledge base: per-class importance of each cut-point feature map.

``weights[k, c]`` is the gradient of logit ``c`` with respect to map ``k``,
averaged over the map's spatial positions and over every correctly
classified training image of class ``c``. ``scores[k]`` is the mean of
``|weights[k, :]|`` and drives the transmission ranking.

Text format (LF line endings)::

    SCKB 1 K C
    fingerprint <64 hex digits>
    K lines of C weights ("%.9e")
    1 line of K scores ("%.9e")
"""

from __future__ import annotations

import os
import tempfile
import warnings
from dataclasses import dataclass

import numpy as np

from .nn import grad_wrt_feature_maps, model_fingerprint, predict

_HEADER = "SCKB"
_VERSION = 1


class KBError(ValueError):
    pass


class KBBuildError(KBError):
    pass


class KBFormatError(KBError):
    pass


class FingerprintWarning(UserWarning):
    pass


@dataclass
class KnowledgeBase:
    weights: np.ndarray  # (K, C)
    scores: np.ndarray  # (K,)
    fingerprint: str

    @property
    def num_maps(self):
        return self.weights.shape[0]

    @property
    def num_classes(self):
        return self.weights.shape[1]

    @classmethod
    def from_weights(cls, weights, fingerprint="0" * 64):
        w = np.asarray(weights, dtype=float)
        return cls(w, np.abs(w).mean(axis=1), fingerprint)

    def ranking(self):
        return rank_maps(self)


def build_kb(model, images, labels, batch_size=128, fingerprint=None):
    """Build the KB from a trained model and its training images.

    Misclassified images are excluded. Raises ``KBBuildError`` if a class has
    no correctly classified image.
    """
    images = np.asarray(images, dtype=float)
    labels = np.asarray(labels)
    c = model.spec.num_classes
    k = model.spec.num_maps
    sums = np.zeros((k, c))
    counts = np.zeros(c, dtype=np.int64)
    for start in range(0, len(images), batch_size):
        x = images[start:start + batch_size]
        y = labels[start:start + batch_size]
        correct = predict(model.decode(model.extract(x))) == y
        if not np.any(correct):
            continue
        g = grad_wrt_feature_maps(model, x[correct], y[correct])  # (n, K, h, w)
        spatial = g.mean(axis=(2, 3))  # (n, K)
        # fixed reduction order: batch by batch, class by class
        for cls in range(c):
            sel = y[correct] == cls
            if np.any(sel):
                sums[:, cls] += spatial[sel].sum(axis=0)
                counts[cls] += int(sel.sum())
    for cls in range(c):
        if counts[cls] == 0:
            raise KBBuildError(f"class {cls} has no correctly classified training image")
    fp = model_fingerprint(model) if fingerprint is None else fingerprint
    return KnowledgeBase.from_weights(sums / counts, fp)


def rank_maps(kb_or_scores):
    """Map indices by descending score, ascending index on ties."""
    scores = kb_or_scores.scores if isinstance(kb_or_scores, KnowledgeBase) else kb_or_scores
    scores = np.asarray(scores, dtype=float)
    return np.lexsort((np.arange(len(scores)), -scores))


def kb_bytes(kb):
    lines = [f"{_HEADER} {_VERSION} {kb.num_maps} {kb.num_classes}", f"fingerprint {kb.fingerprint}"]
    for row in kb.weights:
        lines.append(" ".join("%.9e" % v for v in row))
    lines.append(" ".join("%.9e" % v for v in kb.scores))
    return ("\n".join(lines) + "\n").encode("ascii")


def parse_kb(data):
    text = data.decode("ascii") if isinstance(data, (bytes, bytearray)) else data
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise KBFormatError("line 1: empty KB file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != _HEADER:
        raise KBFormatError(f"line 1: expected '{_HEADER} 1 K C'")
    try:
        version, k, c = (int(t) for t in head[1:])
    except ValueError:
        raise KBFormatError("line 1: non-numeric header field") from None
    if version != _VERSION:
        raise KBFormatError(f"line 1: unsupported version {version}")
    if k <= 0 or c <= 0:
        raise KBFormatError("line 1: K and C must be positive")
    fp = lines[1].split() if len(lines) > 1 else []
    if len(fp) != 2 or fp[0] != "fingerprint" or len(fp[1]) != 64:
        raise KBFormatError("line 2: expected 'fingerprint <64 hex digits>'")
    try:
        int(fp[1], 16)
    except ValueError:
        raise KBFormatError("line 2: fingerprint is not hexadecimal") from None

    def row(lineno, width, what):
        if lineno > len(lines):
            raise KBFormatError(f"line {lineno}: missing {what}")
        fields = lines[lineno - 1].split()
        if len(fields) != width:
            raise KBFormatError(f"line {lineno}: expected {width} values in {what}, found {len(fields)}")
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise KBFormatError(f"line {lineno}: non-numeric value in {what}") from None
        if not all(np.isfinite(values)):
            raise KBFormatError(f"line {lineno}: non-finite value in {what}")
        return values

    weights = np.array([row(3 + i, c, f"weight row {i}") for i in range(k)])
    scores = np.array(row(3 + k, k, "scores"))
    if len(lines) > 3 + k:
        raise KBFormatError(f"line {4 + k}: unexpected trailing content")
    if np.any(scores < 0):
        raise KBFormatError(f"line {3 + k}: negative score")
    return KnowledgeBase(weights, scores, fp[1])


def save_kb(kb, path):
    with open(path, "wb") as fh:
        fh.write(kb_bytes(kb))


def load_kb(path, model=None, expected_fingerprint=None):
    """Read a KB file. A fingerprint mismatch against ``model`` (or an explicit
    fingerprint) issues a ``FingerprintWarning``.
    """
    with open(path, "rb") as fh:
        kb = parse_kb(fh.read())
    if model is not None:
        expected_fingerprint = model_fingerprint(model)
    if expected_fingerprint is not None and kb.fingerprint != expected_fingerprint:
        warnings.warn(
            f"KB {path} was built for model {kb.fingerprint[:12]}..., not {expected_fingerprint[:12]}...",
            FingerprintWarning,
            stacklevel=2,
        )
    return kb


def sync_kb(source, dest_path):
    """Make ``dest_path`` byte-identical to ``source`` (a KB or its file bytes).

    Returns ``"already-identical"`` without writing, or ``"updated"`` after an
    atomic replace. On failure the destination is left untouched.
    """
    data = kb_bytes(source) if isinstance(source, KnowledgeBase) else bytes(source)
    parse_kb(data)
    try:
        with open(dest_path, "rb") as fh:
            if fh.read() == data:
                return "already-identical"
    except FileNotFoundError:
        pass
    directory = os.path.dirname(os.path.abspath(dest_path))
    fd, tmp = tempfile.mkstemp(prefix=".kb-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, dest_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return "updated"
