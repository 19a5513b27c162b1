"""Bandwidth and delay accounting."""

from __future__ import annotations

FEC_EXPANSION = {"none": 1.0, "hamming74": 7 / 4}


def compute_bpp(payload_bytes, width, height, fec="none"):
    """``(bpp_source, bpp_air)`` for a serialized payload of ``payload_bytes``.

    Source bits exclude link framing; air bits include the FEC expansion.
    """
    source = 8.0 * payload_bytes / (width * height)
    return source, source * FEC_EXPANSION[fec]


def delay_model(process_ms, payload_bits, link_rate_bps=1e6):
    """Delay components in milliseconds; transmission time is bits / rate."""
    if link_rate_bps <= 0:
        raise ValueError("link rate must be positive")
    transmission = 1000.0 * payload_bits / link_rate_bps
    return {
        "process_delay_ms": process_ms,
        "transmission_delay_ms": transmission,
        "total_delay_ms": process_ms + transmission,
    }
