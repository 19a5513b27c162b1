"""Per-image transmit/receive steps shared by the sweep harness and the UDP link.

Keeping both paths on these functions (and on :func:`derive_seed`) is what
makes link-delivered results identical to the offline simulation.
"""

from __future__ import annotations

import hashlib

import numpy as np

from . import baseline_codec as codec
from .channel import ChannelConfig, transmit
from .nn import predict
from .semantic_codec import decode_frame, encode_frame, random_select, select_maps

SCHEMES = ("sc_ait", "sc_random", "baseline_codec")


def derive_seed(*parts):
    """Stable 63-bit seed from any tuple of printable parts."""
    digest = hashlib.sha256(repr(tuple(parts)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def image_channel(channel, index):
    """Channel for the ``index``-th image of a run whose base config is ``channel``."""
    if channel is None:
        return None
    return ChannelConfig(channel.snr_db, channel.fec, derive_seed(channel.seed, "image", index))


def semantic_indices(scheme, ranking, cr, num_maps, seed, index):
    if scheme == "sc_ait":
        return select_maps(ranking, cr, num_maps)
    if scheme == "sc_random":
        return random_select(num_maps, cr, derive_seed(seed, "select", index))
    raise ValueError(f"not a semantic scheme: {scheme!r}")


def impair_frame(frame, channel):
    """Pass a frame's code bytes through the channel; returns ``(frame, ber)``."""
    if channel is None:
        return frame, 0.0
    received, ber = transmit(frame.code_bytes(), channel)
    return frame.with_code_bytes(received), ber


def impair_stream(stream, channel):
    if channel is None:
        return stream, 0.0
    received, ber = transmit(stream.payload_bytes(), channel)
    return stream.with_payload_bytes(received), ber


def extract_features(model, images):
    """Cut-point maps computed one image at a time.

    Both the sweep and the transmitter go through here so their values agree
    bit for bit regardless of how many images are processed together.
    """
    return np.stack([model.extract(img)[0] for img in images])


def semantic_encode(feature_maps, indices):
    return encode_frame(feature_maps, indices)


def semantic_receive(model, frame):
    """Receiver side: zero-fill, FC decoder, arg-max."""
    return int(predict(model.decode(decode_frame(frame, model.spec.num_maps)[None])[0]))


def baseline_receive(model, stream):
    image = codec.decode_image(stream)
    return int(predict(model.decode(model.extract(image))[0]))

