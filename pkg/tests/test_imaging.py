import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image
from scipy import ndimage

from choixgrade.data import imaging
from choixgrade.errors import PgmFormatError, WrongInputSize


def scipy_bilinear(img, side=64):
    """Corner-aligned bilinear sampling via scipy's order-1 spline."""
    h, w = img.shape
    yy, xx = np.meshgrid(np.linspace(0, h - 1, side), np.linspace(0, w - 1, side), indexing="ij")
    return ndimage.map_coordinates(img.astype(np.float64), [yy, xx], order=1, mode="nearest")


def test_constant_stays_constant():
    out = imaging.resize_to_64(np.full((28, 28), 128, np.uint8))
    assert out.shape == (64, 64)
    assert np.all(out == np.float32(128) / np.float32(255))


def test_wrong_size_rejected():
    with pytest.raises(WrongInputSize):
        imaging.resize_to_64(np.zeros((28, 27), np.uint8))


@given(arrays(np.uint8, (28, 28)))
def test_corners_and_range(img):
    out = imaging.resize_to_64(img)
    assert out.dtype == np.float32
    assert 0 <= out.min() and out.max() <= 1
    for (i, j), (p, q) in zip([(0, 0), (0, -1), (-1, 0), (-1, -1)], [(0, 0), (0, -1), (-1, 0), (-1, -1)]):
        assert out[i, j] == np.float32(img[p, q]) / np.float32(255)


@given(arrays(np.uint8, st.tuples(st.integers(2, 30), st.integers(2, 30))))
def test_bilinear_matches_scipy(img):
    ours = imaging.resize_bilinear(img[None])[0]
    np.testing.assert_allclose(ours, scipy_bilinear(img), atol=1e-9)


@given(arrays(np.uint8, st.tuples(st.integers(1, 20), st.integers(1, 20))))
def test_pgm_round_trip_and_pillow_agrees(img):
    data = imaging.serialize_pgm(img)
    back, maxval = imaging.parse_pgm(data)
    assert maxval == 255 and np.array_equal(back, img)
    assert np.array_equal(np.asarray(Image.open(io.BytesIO(data))), img)


def test_pillow_written_pgm_parses():
    img = np.arange(35, dtype=np.uint8).reshape(5, 7)
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PPM")
    back, _ = imaging.parse_pgm(buf.getvalue())
    assert np.array_equal(back, img)


def test_pgm_comments_and_16bit():
    data = b"P5\n# made by hand\n2 1\n# another\n65535\n" + np.array([0, 65535], ">u2").tobytes()
    px, maxval = imaging.parse_pgm(data)
    assert maxval == 65535 and px.tolist() == [[0, 65535]]
    pre = imaging.preprocess_any(np.full((10, 10), 1000), maxval=1000)
    assert pre.shape == (64, 64) and np.all(pre == 1.0)


@pytest.mark.parametrize("data", [b"P2\n1 1\n255\n\x00", b"P5\n2 2\n255\n\x00", b"P5\n0 2\n255\n",
                                  b"P5\n1 1\n", b"P5 1 1 255"])
def test_pgm_errors(data):
    with pytest.raises(PgmFormatError):
        imaging.parse_pgm(data)


def test_unit_to_u8_inverts_to_unit():
    g = np.arange(256, dtype=np.uint8)
    assert np.array_equal(imaging.unit_to_u8(imaging.to_unit(g)), g)


def test_preprocess_any_on_64_is_lossless():
    img = np.random.default_rng(0).integers(0, 256, (64, 64)).astype(np.uint8)
    assert np.array_equal(imaging.preprocess_any(img), imaging.to_unit(img))
