"""Technical level: bit packing, Hamming(7,4), BPSK over AWGN.

SNR is Es/N0 per BPSK symbol with unit symbol energy, so the real-valued
noise has variance N0/2 = 1 / (2 * 10**(snr_db / 10)) and uncoded BER is
Q(sqrt(2 * Es/N0)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

FEC_CHOICES = ("none", "hamming74")


class FramingError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: float
    fec: str = "none"
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.fec not in FEC_CHOICES:
            raise ValueError(f"fec must be one of {FEC_CHOICES}")

    @property
    def expansion(self):
        return 7 / 4 if self.fec == "hamming74" else 1.0


def pack_bits(data):
    """Bytes to a uint8 bit array, most significant bit first."""
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


def unpack_bits(bits):
    bits = np.asarray(bits, dtype=np.uint8)
    if len(bits) % 8:
        raise FramingError(f"bit count {len(bits)} is not a multiple of 8")
    return np.packbits(bits).tobytes()


# Generator columns for codeword positions [p1 p2 d1 p3 d2 d3 d4].
_G = np.array([
    [1, 1, 1, 0, 0, 0, 0],  # d1
    [1, 0, 0, 1, 1, 0, 0],  # d2
    [0, 1, 0, 1, 0, 1, 0],  # d3
    [1, 1, 0, 1, 0, 0, 1],  # d4
], dtype=np.uint8)
# Parity checks; row i tests positions whose 1-based index has bit i set.
_H = np.array([[(pos >> i) & 1 for pos in range(1, 8)] for i in range(3)], dtype=np.uint8)
_DATA_POS = [2, 4, 5, 6]


def hamming74_encode(bits):
    """Encode bits in groups of four, zero-padding the tail."""
    bits = np.asarray(bits, dtype=np.uint8)
    pad = (-len(bits)) % 4
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    return ((bits.reshape(-1, 4) @ _G) % 2).astype(np.uint8).ravel()


def hamming74_decode(bits):
    """Syndrome-decode 7-bit codewords, correcting one error per block."""
    bits = np.asarray(bits, dtype=np.uint8)
    if len(bits) % 7:
        raise FramingError(f"coded length {len(bits)} is not a multiple of 7")
    blocks = bits.reshape(-1, 7).copy()
    syndrome = ((blocks @ _H.T) % 2) @ np.array([1, 2, 4])
    rows = np.nonzero(syndrome)[0]
    blocks[rows, syndrome[rows] - 1] ^= 1
    return blocks[:, _DATA_POS].ravel()


def bpsk_modulate(bits):
    return 1.0 - 2.0 * np.asarray(bits, dtype=float)


def bpsk_demodulate(symbols):
    """Hard decision; a symbol of exactly 0 decodes to bit 0."""
    return (np.asarray(symbols) < 0).astype(np.uint8)


def noise_std(snr_db):
    return np.sqrt(1.0 / (2.0 * 10.0 ** (snr_db / 10.0)))


def awgn(symbols, snr_db, seed):
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(int(seed))
    s = np.asarray(symbols, dtype=float)
    return s + rng.normal(0.0, noise_std(snr_db), size=s.shape)


def q_function(x):
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


def bpsk_theoretical_ber(snr_db):
    return q_function(np.sqrt(2.0 * 10.0 ** (np.asarray(snr_db) / 10.0)))


def transmit(data, config):
    """Send ``data`` through the simulated chain.

    Returns ``(received_bytes, measured_ber)``; the BER is counted on the
    coded bits before FEC decoding.
    """
    data = bytes(data)
    bits = pack_bits(data)
    coded = hamming74_encode(bits) if config.fec == "hamming74" else bits
    received = bpsk_demodulate(awgn(bpsk_modulate(coded), config.snr_db, config.seed))
    ber = float(np.mean(received != coded)) if len(coded) else 0.0
    decoded = hamming74_decode(received)[:len(bits)] if config.fec == "hamming74" else received
    return unpack_bits(decoded), ber
