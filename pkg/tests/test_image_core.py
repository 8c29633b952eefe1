import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from oracles import central_diff_loops, conv2d_loops
from succinct.image_core import (
    ImageFormatError,
    box_filter,
    convolve2d,
    gaussian_blur,
    gaussian_kernel1d,
    gaussian_pyramid,
    gradients,
    load_image,
    save_png16,
)

small = arrays(np.float64, st.tuples(st.integers(3, 9), st.integers(3, 9)),
               elements=st.floats(0, 1, allow_nan=False, width=32))


def test_pgm_normalization(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    img = load_image(p)
    assert img.dtype == np.float32
    np.testing.assert_allclose(img.ravel(), [0.0, 1.0, 128 / 255, 64 / 255], rtol=1e-6)


def test_pgm_16bit_big_endian(tmp_path):
    p = tmp_path / "b.pgm"
    p.write_bytes(b"P5\n# comment\n2 1\n65535\n" + np.array([65535, 1], dtype=">u2").tobytes())
    np.testing.assert_allclose(load_image(p).ravel(), [1.0, 1 / 65535], rtol=1e-6)


def test_png16_max_is_one(tmp_path):
    p = tmp_path / "c.png"
    save_png16(p, np.array([[65535, 0]]))
    np.testing.assert_array_equal(load_image(p), [[1.0, 0.0]])


def test_png8(tmp_path):
    p = tmp_path / "d.png"
    Image.fromarray(np.array([[255, 51]], dtype=np.uint8)).save(p)
    np.testing.assert_allclose(load_image(p), [[1.0, 0.2]], rtol=1e-6)


def test_rgb_png_rejected(tmp_path):
    p = tmp_path / "rgb.png"
    Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(p)
    with pytest.raises(ImageFormatError):
        load_image(p)


def test_missing_and_unsupported(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "nope.png")
    bad = tmp_path / "x.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(ImageFormatError):
        load_image(bad)


def test_identity_kernel(rng):
    img = rng.uniform(size=(7, 5))
    np.testing.assert_array_equal(convolve2d(img, [[1.0]]), img)


def test_constant_valid_box():
    out = convolve2d(np.full((5, 5), 0.3), np.full((3, 3), 1 / 9), mode="valid")
    assert out.shape == (3, 3)
    np.testing.assert_allclose(out, 0.3, rtol=1e-12)


@pytest.mark.parametrize("mode", ["same", "valid"])
def test_convolve_matches_loops(rng, mode):
    img = rng.uniform(size=(8, 8))
    k = rng.normal(size=(3, 3))
    np.testing.assert_allclose(convolve2d(img, k, mode), conv2d_loops(img, k, mode), atol=1e-12)


def test_convolve_asymmetric_kernel_is_flipped():
    img = np.zeros((5, 5))
    img[2, 2] = 1.0
    k = np.arange(9, dtype=float).reshape(3, 3)
    # convolving an impulse reproduces the kernel itself
    np.testing.assert_array_equal(convolve2d(img, k)[1:4, 1:4], k)


def test_convolve_errors():
    with pytest.raises(ValueError):
        convolve2d(np.zeros((5, 5)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        convolve2d(np.zeros((2, 2)), np.ones((3, 3)), mode="valid")


@given(small, small, st.floats(-2, 2), st.floats(-2, 2))
def test_convolution_linearity(a, b, s, t):
    h, w = min(a.shape[0], b.shape[0]), min(a.shape[1], b.shape[1])
    a, b = a[:h, :w], b[:h, :w]
    k = np.array([[0.1, -0.2, 0.3], [0.0, 0.5, 0.1], [-0.3, 0.2, 0.05]])
    lhs = convolve2d(s * a + t * b, k)
    rhs = s * convolve2d(a, k) + t * convolve2d(b, k)
    np.testing.assert_allclose(lhs, rhs, atol=1e-6)


def test_gradient_ramp():
    w = 10
    img = np.tile(np.arange(w) / w, (6, 1))
    ix, iy = gradients(img)
    np.testing.assert_allclose(ix[:, 1:-1], 1 / w, rtol=1e-12)
    np.testing.assert_array_equal(iy, 0.0)


@given(small)
def test_gradient_constant_zero(a):
    ix, iy = gradients(np.full_like(a, a[0, 0]))
    assert not ix.any() and not iy.any()


def test_gradients_match_loops(rng):
    img = rng.uniform(size=(6, 6))
    gx, gy = gradients(img)
    ox, oy = central_diff_loops(img)
    np.testing.assert_allclose(gx, ox, atol=1e-15)
    np.testing.assert_allclose(gy, oy, atol=1e-15)


def test_gradients_too_small():
    with pytest.raises(ValueError):
        gradients(np.zeros((2, 5)))


def test_gaussian_kernel_support_and_sum():
    g = gaussian_kernel1d(1.2)
    assert len(g) == 2 * 4 + 1
    assert abs(g.sum() - 1) < 1e-12


def test_blur_matches_2d_kernel(rng):
    img = rng.uniform(size=(9, 11))
    g = gaussian_kernel1d(0.8)
    np.testing.assert_allclose(gaussian_blur(img, 0.8), conv2d_loops(img, np.outer(g, g)), atol=1e-12)


def test_box_filter_mean(rng):
    img = rng.uniform(size=(7, 7))
    np.testing.assert_allclose(box_filter(img, 1)[3, 3], img[2:5, 2:5].mean(), rtol=1e-12)


def test_pyramid_shapes_and_constants():
    assert len(gaussian_pyramid(np.zeros((10, 10)), 1)) == 1
    pyr = gaussian_pyramid(np.full((64, 64), 0.25, dtype=np.float32), 3)
    assert [p.shape for p in pyr] == [(64, 64), (32, 32), (16, 16)]
    for p in pyr:
        np.testing.assert_allclose(p, 0.25, rtol=1e-6)


@given(st.integers(16, 70), st.integers(16, 70))
def test_pyramid_dimension_rule(h, w):
    pyr = gaussian_pyramid(np.zeros((h, w), dtype=np.float32), 2)
    assert pyr[1].shape == (-(-h // 2), -(-w // 2))


def test_pyramid_too_deep():
    with pytest.raises(ValueError):
        gaussian_pyramid(np.zeros((32, 32)), 4)
