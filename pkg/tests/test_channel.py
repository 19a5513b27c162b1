import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scait.channel import (
    ChannelConfig,
    FramingError,
    awgn,
    bpsk_demodulate,
    bpsk_modulate,
    bpsk_theoretical_ber,
    hamming74_decode,
    hamming74_encode,
    pack_bits,
    transmit,
    unpack_bits,
)


def q_oracle(x):
    return 0.5 * math.erfc(x / math.sqrt(2))


def test_pack_msb_first():
    np.testing.assert_array_equal(pack_bits(b"\xa5"), [1, 0, 1, 0, 0, 1, 0, 1])


def test_pack_empty():
    assert len(pack_bits(b"")) == 0
    assert unpack_bits([]) == b""


def test_pack_roundtrip_random():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        data = rng.bytes(int(rng.integers(0, 64)))
        assert unpack_bits(pack_bits(data)) == data


def test_unpack_rejects_partial_byte():
    with pytest.raises(FramingError):
        unpack_bits([1, 0, 1])


def test_hamming_all_zero_and_one():
    np.testing.assert_array_equal(hamming74_encode([0, 0, 0, 0]), [0] * 7)
    np.testing.assert_array_equal(hamming74_encode([1, 1, 1, 1]), [1] * 7)


def _parity_oracle(d):
    """Codeword [p1 p2 d1 p3 d2 d3 d4] from the textbook parity equations."""
    d1, d2, d3, d4 = d
    return [d1 ^ d2 ^ d4, d1 ^ d3 ^ d4, d1, d2 ^ d3 ^ d4, d2, d3, d4]


def test_hamming_exhaustive_single_errors():
    corrected = 0
    for d in itertools.product([0, 1], repeat=4):
        code = hamming74_encode(d)
        np.testing.assert_array_equal(code, _parity_oracle(d))
        for pos in range(7):
            bad = code.copy()
            bad[pos] ^= 1
            np.testing.assert_array_equal(hamming74_decode(bad), d)
            corrected += 1
    assert corrected == 112


def test_hamming_rate():
    assert len(hamming74_encode(np.zeros(1000, dtype=np.uint8))) == 1750


@given(st.lists(st.integers(0, 1), max_size=200))
def test_hamming_roundtrip(bits):
    out = hamming74_decode(hamming74_encode(bits))
    np.testing.assert_array_equal(out[:len(bits)], bits)
    assert not np.any(out[len(bits):])


def test_bpsk_mapping():
    np.testing.assert_array_equal(bpsk_modulate([0, 1, 1]), [1, -1, -1])
    assert bpsk_demodulate([0.0])[0] == 0


@given(st.lists(st.integers(0, 1), max_size=100))
def test_bpsk_roundtrip(bits):
    np.testing.assert_array_equal(bpsk_demodulate(bpsk_modulate(bits)), bits)


def test_awgn_variance_at_3db():
    # noise variance N0/2 = 1/(2*SNR) for unit-energy symbols, matching Q(sqrt(2 SNR))
    noise = awgn(np.zeros(10**6), 3.0, 11)
    expected = 1 / (2 * 10**0.3)
    assert abs(noise.var() / expected - 1) < 0.02


def test_awgn_high_snr_error_free():
    bits = np.random.default_rng(2).integers(0, 2, 10**5).astype(np.uint8)
    np.testing.assert_array_equal(bpsk_demodulate(awgn(bpsk_modulate(bits), 100, 3)), bits)


def test_ber_at_6db():
    bits = np.random.default_rng(4).integers(0, 2, 10**6).astype(np.uint8)
    ber = np.mean(bpsk_demodulate(awgn(bpsk_modulate(bits), 6.0, 5)) != bits)
    expected = q_oracle(math.sqrt(2 * 10**0.6))
    assert expected == pytest.approx(2.39e-3, rel=0.01)
    assert abs(ber / expected - 1) < 0.10


def test_theoretical_ber_matches_oracle():
    for snr in (0, 2, 4, 6, 8):
        assert bpsk_theoretical_ber(snr) == pytest.approx(q_oracle(math.sqrt(2 * 10 ** (snr / 10))), rel=1e-12)


def test_transmit_clean():
    data = bytes(range(256))
    out, ber = transmit(data, ChannelConfig(100.0, "none", 1))
    assert out == data and ber == 0.0


def test_transmit_deterministic():
    data = np.random.default_rng(0).bytes(500)
    cfg = ChannelConfig(3.0, "hamming74", 9)
    assert transmit(data, cfg) == transmit(data, cfg)


def test_hamming_reduces_byte_errors_at_4db():
    data = np.random.default_rng(1).bytes(10**5)
    sent = np.frombuffer(data, dtype=np.uint8)
    rates = {}
    for fec in ("none", "hamming74"):
        out, _ = transmit(data, ChannelConfig(4.0, fec, 17))
        rates[fec] = np.mean(np.frombuffer(out, dtype=np.uint8) != sent)
    assert rates["hamming74"] < rates["none"]


def test_channel_config_validation():
    with pytest.raises(ValueError):
        ChannelConfig(5.0, "turbo")
    with pytest.raises(ValueError):
        ChannelConfig(float("nan"))
