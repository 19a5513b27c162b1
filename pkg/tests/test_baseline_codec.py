import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.fft import dctn

from scait.baseline_codec import (
    ZIGZAG,
    BlockStream,
    CodecError,
    EntropyError,
    bits_per_pixel,
    dct8x8,
    decode_image,
    encode_image,
    entropy_decode,
    entropy_encode,
    exp_golomb,
    idct8x8,
    inverse_zigzag,
    psnr,
    quant_matrix,
    signed_to_unsigned,
    unsigned_to_signed,
    zigzag,
)


def test_dct_constant_block():
    c = dct8x8(np.full((8, 8), 3.0))
    assert c[0, 0] == pytest.approx(24.0, abs=1e-9)
    c[0, 0] = 0
    assert np.abs(c).max() < 1e-9


def test_dct_matches_scipy_and_inverts(rng):
    for _ in range(1000):
        b = rng.uniform(-128, 128, (8, 8))
        c = dct8x8(b)
        np.testing.assert_allclose(c, dctn(b, norm="ortho"), atol=1e-9)
        np.testing.assert_allclose(idct8x8(c), b, atol=1e-9)
        assert np.sum(c**2) == pytest.approx(np.sum(b**2), abs=1e-9 * np.sum(b**2) + 1e-9)


def test_zigzag_endpoints():
    assert ZIGZAG[0] == (0, 0)
    assert ZIGZAG[1] == (0, 1)
    assert ZIGZAG[2] == (1, 0)
    assert ZIGZAG[63] == (7, 7)


def test_zigzag_is_antidiagonal_walk():
    # consecutive entries move along anti-diagonals in non-decreasing order
    diag = [r + c for r, c in ZIGZAG]
    assert diag == sorted(diag)
    assert sorted(ZIGZAG) == [(r, c) for r in range(8) for c in range(8)]


def test_zigzag_inverse(rng):
    b = rng.normal(size=(8, 8))
    np.testing.assert_array_equal(inverse_zigzag(zigzag(b)), b)


def test_exp_golomb_examples():
    assert [exp_golomb(n) for n in range(3)] == ["1", "010", "011"]
    assert [signed_to_unsigned(v) for v in (0, 1, -1, 2)] == [0, 1, 2, 3]


@given(st.integers(-10**6, 10**6))
def test_signed_mapping_inverse(v):
    assert unsigned_to_signed(signed_to_unsigned(v)) == v


def test_entropy_roundtrip_random_blocks():
    rng = np.random.default_rng(3)
    for _ in range(10_000):
        levels = np.zeros(64, dtype=np.int64)
        nz = rng.choice(64, int(rng.integers(0, 65)), replace=False)
        levels[nz] = rng.integers(-500, 501, len(nz))
        assert entropy_decode(entropy_encode(levels)) == levels.tolist()


@pytest.mark.parametrize("bits", ["", "1", "0" * 40, "11"])
def test_entropy_rejects_garbage(bits):
    with pytest.raises(EntropyError):
        entropy_decode(bits)


def test_quality_100_psnr(split):
    values = [psnr(img, decode_image(encode_image(img, 100))) for img in split.test_x]
    assert min(values) >= 35.0


def test_constant_image_decodes_constant():
    for level in (0.5, 128 / 255, 0.2):
        img = np.full((32, 32), level)
        for q in (1, 10, 50, 75, 100):
            out = decode_image(encode_image(img, q))
            assert np.all(out == out[0, 0])


def test_bpp_non_increasing_with_quality(split):
    qualities = range(90, 0, -10)
    for img in split.test_x:
        bpp = [bits_per_pixel(encode_image(img, q)) for q in qualities]
        assert all(b >= a for a, b in zip(bpp[1:], bpp))


def test_psnr_examples(rng):
    a = rng.uniform(0, 0.9, (16, 16))
    assert psnr(a, a) == float("inf")
    assert psnr(a, a + 0.1) == pytest.approx(20.0)
    b = rng.uniform(0, 1, (16, 16))
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(ValueError):
        psnr(a, a[:8])


def test_quant_matrix_range():
    for q in (1, 50, 100):
        m = quant_matrix(q)
        assert m.shape == (8, 8) and m.min() >= 1


def test_block_stream_fuzz_roundtrip():
    rng = np.random.default_rng(5)
    for _ in range(10_000):
        h, w = (int(v) for v in rng.integers(1, 20, 2))
        img = np.round(rng.uniform(0, 1, (h, w)) * 255) / 255
        stream = encode_image(img, int(rng.integers(1, 101)))
        data = stream.to_bytes()
        back = BlockStream.from_bytes(data)
        assert back == stream
        assert back.to_bytes() == data
        assert len(data) == stream.nbytes


def test_block_stream_rejects_truncation(rng):
    data = encode_image(rng.uniform(0, 1, (16, 16)), 75).to_bytes()
    for cut in (0, 5, len(data) - 1):
        with pytest.raises(CodecError):
            BlockStream.from_bytes(data[:cut])


def test_corrupted_block_becomes_mid_gray(rng):
    stream = encode_image(rng.uniform(0, 1, (16, 16)), 75)
    stream.blocks[1] = "0" * 40  # prefix too long to be a valid code
    out = decode_image(stream)
    np.testing.assert_array_equal(out[0:8, 8:16], 0.5)


def test_payload_swap_roundtrip(rng):
    stream = encode_image(rng.uniform(0, 1, (24, 16)), 60)
    assert stream.with_payload_bytes(stream.payload_bytes()) == stream
