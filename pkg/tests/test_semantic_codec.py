import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scait.semantic_codec import (
    FrameError,
    SemanticFrame,
    analog_perturb,
    decode_frame,
    dequantize_map,
    encode_frame,
    frame_size,
    num_keep,
    quantize_map,
    random_select,
    select_maps,
)


def test_select_examples():
    np.testing.assert_array_equal(select_maps(np.arange(32)[::-1], 0.0, 32), np.arange(32))
    assert len(select_maps(np.arange(100), 0.30, 100)) == 70
    ranking = np.roll(np.arange(32), -5)  # map 5 ranked first
    np.testing.assert_array_equal(select_maps(ranking, 0.98, 32), [5])


def test_num_keep_rounds_half_away():
    assert num_keep(0.5, 3) == 2  # 1.5 -> 2
    assert num_keep(0.875, 32) == 4
    assert num_keep(0.97, 32) == 1
    with pytest.raises(ValueError):
        num_keep(1.0, 32)


@given(st.integers(1, 64), st.floats(0, 0.999), st.integers(0, 2**32))
def test_select_is_sorted_prefix_of_ranking(k, cr, seed):
    ranking = np.random.default_rng(seed).permutation(k)
    sel = select_maps(ranking, cr, k)
    n = num_keep(cr, k)
    assert 1 <= len(sel) == n <= k
    assert np.all(np.diff(sel) > 0)
    assert set(sel.tolist()) == set(ranking[:n].tolist())


@given(st.integers(1, 64), st.floats(0, 0.999))
def test_select_monotone_in_cr(k, cr):
    ranking = np.arange(k)
    assert len(select_maps(ranking, cr, k)) >= len(select_maps(ranking, min(cr + 0.1, 0.999), k))


def test_random_select_determinism():
    assert len(random_select(32, 0.0, 3)) == 32
    a, b = random_select(32, 0.875, 1), random_select(32, 0.875, 2)
    assert len(a) == 4
    np.testing.assert_array_equal(a, random_select(32, 0.875, 1))
    assert not np.array_equal(a, b)


def test_random_select_uniform():
    counts = np.zeros(32)
    for seed in range(10_000):
        counts[random_select(32, 0.98, seed)] += 1
    assert np.all(np.abs(counts / 10_000 - 1 / 32) <= 0.01)


def test_quantize_constant_map():
    q = quantize_map(np.full((4, 4), 0.7))
    assert q.vmin == q.vmax == 0.7
    assert np.all(q.codes == 0)
    np.testing.assert_array_equal(dequantize_map(q), 0.7)


def test_quantize_midpoint():
    q = quantize_map(np.array([[0.0, 0.5, 1.0]]))
    assert q.codes[0, 1] == 128
    assert dequantize_map(q)[0, 1] == pytest.approx(128 / 255)


@given(arrays(np.float64, (6, 5), elements=st.floats(-1e4, 1e4)))
def test_quantize_error_bound(v):
    q = quantize_map(v)
    err = np.abs(dequantize_map(q) - v).max()
    assert err <= (q.vmax - q.vmin) / 510 + 1e-12 * max(1.0, np.abs(v).max())


def test_frame_roundtrip_all_maps(rng):
    a = rng.uniform(0, 3, (32, 8, 8))
    frame = encode_frame(a, range(32))
    out = decode_frame(SemanticFrame.from_bytes(frame.to_bytes()), 32)
    for k in range(32):
        span = a[k].max() - a[k].min()
        assert np.abs(out[k] - a[k]).max() <= span / 510 * (1 + 1e-6) + 1e-7
        assert np.any(out[k] != 0)


def test_frame_zero_fill(rng):
    a = rng.uniform(0.1, 1, (32, 8, 8))
    out = decode_frame(encode_frame(a, [7]), 32)
    zero = [k for k in range(32) if not np.any(out[k])]
    assert zero == [k for k in range(32) if k != 7]


@pytest.mark.parametrize("n", [1, 4, 16, 32])
def test_frame_size(n, rng):
    frame = encode_frame(rng.uniform(0, 1, (32, 8, 8)), range(n))
    assert len(frame.to_bytes()) == 8 + n * (2 + 4 + 4 + 64) == frame_size(n, 8, 8)


def test_serialized_frame_decodes_like_in_memory(rng):
    a = rng.normal(size=(32, 8, 8)) * 1e3
    frame = encode_frame(a, [0, 3, 31])
    np.testing.assert_array_equal(decode_frame(frame), decode_frame(SemanticFrame.from_bytes(frame.to_bytes())))


def test_frame_fuzz_roundtrip():
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        k = int(rng.integers(1, 40))
        h, w = (int(v) for v in rng.integers(1, 10, 2))
        n = int(rng.integers(1, k + 1))
        idx = np.sort(rng.choice(k, n, replace=False))
        a = rng.normal(size=(k, h, w)) * 10.0 ** rng.integers(-5, 5)
        data = encode_frame(a, idx).to_bytes()
        back = SemanticFrame.from_bytes(data)
        assert back.to_bytes() == data


@pytest.mark.parametrize("mutate", [
    lambda d: d[:-1],
    lambda d: d + b"\0",
    lambda d: d[:4],
    lambda d: d[:6] + b"\x01" + d[7:],  # non-zero padding
    lambda d: d[:8] + b"\xff\x00" + d[10:],  # index out of range
])
def test_frame_rejects_malformed(mutate, rng):
    data = encode_frame(rng.uniform(0, 1, (4, 2, 2)), [0, 2]).to_bytes()
    with pytest.raises(FrameError):
        SemanticFrame.from_bytes(mutate(data))


def test_encode_rejects_unsorted(rng):
    with pytest.raises(FrameError):
        encode_frame(rng.uniform(0, 1, (4, 2, 2)), [2, 1])


def test_analog_high_snr(rng):
    a = rng.normal(size=(32, 8, 8))
    for trial in range(100):
        out = analog_perturb(a, 60, trial)
        assert np.linalg.norm(out - a) / np.linalg.norm(a) < 0.01


def test_analog_0db_power_ratio():
    a = np.random.default_rng(1).normal(size=10**6)
    noise = analog_perturb(a, 0.0, 5) - a
    ratio = np.mean(noise**2) / np.mean(a**2)
    assert 0.95 <= ratio <= 1.05


def test_analog_zero_input():
    np.testing.assert_array_equal(analog_perturb(np.zeros((3, 4, 4)), 0.0, 1), 0.0)
