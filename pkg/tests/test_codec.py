import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchvsr.codec import haar_decode, haar_encode
from patchvsr.errors import CodecError


def _hand_block():
    video = np.zeros((1, 2, 2, 3))
    video[0, :, :, 0] = [[1, 2], [3, 4]]
    return video


def test_hand_block_encode():
    lat = haar_encode(_hand_block())
    assert lat.shape == (1, 1, 1, 12)
    # red channel of LL, LH, HL, HH
    assert lat[0, 0, 0, [0, 3, 6, 9]].tolist() == [5.0, -1.0, -2.0, 0.0]


def test_hand_block_decode():
    lat = np.zeros((1, 1, 1, 12))
    lat[0, 0, 0, [0, 3, 6, 9]] = [5, -1, -2, 0]
    out = haar_decode(lat, clamp=False)
    assert out[0, :, :, 0].tolist() == [[1, 2], [3, 4]]


def test_constant_and_zero():
    lat = haar_encode(np.full((2, 4, 6, 3), 0.3))
    assert np.allclose(lat[..., :3], 0.6, atol=1e-15) and np.all(lat[..., 3:] == 0)
    assert np.all(haar_encode(np.zeros((1, 4, 4, 3))) == 0)
    assert np.all(haar_decode(np.zeros((1, 2, 2, 12))) == 0)


def test_errors():
    with pytest.raises(CodecError):
        haar_encode(np.zeros((1, 3, 4, 3)))
    with pytest.raises(CodecError):
        haar_decode(np.zeros((1, 2, 2, 11)))


def test_decode_clamps():
    lat = np.zeros((1, 1, 1, 12))
    lat[..., 0] = 10.0
    assert np.all(haar_decode(lat) <= 1.0)
    assert np.all(haar_decode(-lat) >= 0.0)


videos = st.tuples(st.integers(1, 3), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))


@settings(max_examples=60, deadline=None)
@given(videos)
def test_roundtrip_and_energy(args):
    f, h, w, seed = args
    x = np.random.default_rng(seed).random((f, 2 * h, 2 * w, 3))
    lat = haar_encode(x)
    assert np.abs(haar_decode(lat, clamp=False) - x).max() <= 1e-12
    e_in, e_out = np.sum(x * x), np.sum(lat * lat)
    assert abs(e_out - e_in) <= 1e-9 * e_in


@settings(max_examples=60, deadline=None)
@given(videos, st.floats(-5, 5), st.floats(-5, 5))
def test_linearity(args, alpha, beta):
    f, h, w, seed = args
    rng = np.random.default_rng(seed)
    x, y = rng.random((2, f, 2 * h, 2 * w, 3))
    lhs = haar_encode(alpha * x + beta * y)
    rhs = alpha * haar_encode(x) + beta * haar_encode(y)
    assert np.abs(lhs - rhs).max() <= 1e-12
