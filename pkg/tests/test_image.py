from fractions import Fraction

import cv2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rawrestore.image import ImageIOError, RgbImage, load_image, read_pfm, save_image, write_pfm
from rawrestore.metrics import PSNR_CAP, psnr, ssim


def _write_png(path, arr):
    if arr.ndim == 3:
        arr = arr[..., ::-1]
    assert cv2.imwrite(str(path), np.ascontiguousarray(arr))


class TestLoad:
    def test_8bit_endpoints(self, tmp_path):
        arr = np.zeros((2, 3, 3), np.uint8)
        arr[0, 0] = 255
        _write_png(tmp_path / "a.png", arr)
        img = load_image(tmp_path / "a.png")
        assert img.colorspace == "sRGB"
        assert img.data[0, 0, 0] == 1.0
        assert img.data[1, 2, 1] == 0.0

    def test_16bit_normalization(self, tmp_path):
        arr = np.full((2, 2), 32768, np.uint16)
        _write_png(tmp_path / "g.png", arr)
        plane = load_image(tmp_path / "g.png")
        assert plane.ndim == 2
        expected = Fraction(32768, 65535)
        assert plane[0, 0] == pytest.approx(float(expected), abs=1e-15)
        assert plane[0, 0] == pytest.approx(0.50001, abs=1e-5)

    def test_channel_order_is_rgb(self, tmp_path):
        arr = np.zeros((2, 2, 3), np.uint8)
        arr[..., 0] = 10
        arr[..., 2] = 200
        _write_png(tmp_path / "c.png", arr)
        img = load_image(tmp_path / "c.png")
        assert img.data[0, 0, 0] == pytest.approx(10 / 255)
        assert img.data[0, 0, 2] == pytest.approx(200 / 255)

    def test_colorspace_hint(self, tmp_path):
        write_pfm(tmp_path / "x.pfm", np.zeros((2, 2, 3)))
        assert load_image(tmp_path / "x.pfm").colorspace == "linRGB"
        assert load_image(tmp_path / "x.pfm", colorspace="sRGB").colorspace == "sRGB"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ImageIOError):
            load_image(tmp_path / "nope.png")

    def test_garbage_file(self, tmp_path):
        (tmp_path / "bad.png").write_bytes(b"not a png")
        with pytest.raises(ImageIOError):
            load_image(tmp_path / "bad.png")
        (tmp_path / "bad.pfm").write_bytes(b"P6\n1 1\n255\n")
        with pytest.raises(ImageIOError):
            load_image(tmp_path / "bad.pfm")

    def test_truncated_pfm(self, tmp_path):
        (tmp_path / "t.pfm").write_bytes(b"Pf\n4 4\n-1.0\n" + b"\0" * 12)
        with pytest.raises(ImageIOError, match="expected 16"):
            read_pfm(tmp_path / "t.pfm")


class TestSave:
    def test_quantization_round_to_nearest(self, tmp_path):
        img = RgbImage(np.full((2, 2, 3), 0.5), "sRGB")
        save_image(img, tmp_path / "h.png")
        raw = cv2.imread(str(tmp_path / "h.png"), cv2.IMREAD_UNCHANGED)
        assert np.all(raw == 128)
        back = load_image(tmp_path / "h.png")
        assert back.data[0, 0, 0] == pytest.approx(128 / 255)
        assert back.data[0, 0, 0] == pytest.approx(0.50196, abs=1e-5)

    def test_clamp(self, tmp_path):
        save_image(np.array([[1.7, -0.3]]), tmp_path / "c.png")
        raw = cv2.imread(str(tmp_path / "c.png"), cv2.IMREAD_UNCHANGED)
        assert raw.tolist() == [[255, 0]]

    def test_png_round_trip_within_step(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.random((5, 7, 3))
        for bits in (8, 16):
            save_image(RgbImage(data, "sRGB"), tmp_path / f"r{bits}.png", bits=bits)
            back = load_image(tmp_path / f"r{bits}.png").data
            assert np.max(np.abs(back - data)) <= 0.5 / (2**bits - 1) + 1e-12

    def test_pfm_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        plane = rng.standard_normal((9, 4)).astype(np.float32)
        save_image(plane, tmp_path / "p.pfm")
        assert np.array_equal(read_pfm(tmp_path / "p.pfm"), plane)
        color = rng.random((3, 5, 3)).astype(np.float32)
        save_image(RgbImage(color), tmp_path / "c.pfm")
        assert np.array_equal(read_pfm(tmp_path / "c.pfm"), color)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                  elements=st.floats(allow_nan=False, allow_infinity=False, width=32)))
    def test_pfm_identity_on_finite_floats(self, tmp_path_factory, plane):
        path = tmp_path_factory.mktemp("pfm") / "x.pfm"
        write_pfm(path, plane)
        assert np.array_equal(read_pfm(path), plane)

    def test_unsupported_format(self, tmp_path):
        with pytest.raises(ImageIOError):
            save_image(np.zeros((2, 2)), tmp_path / "x.tif")


def test_rgbimage_is_immutable():
    img = RgbImage(np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1.0
    with pytest.raises(ValueError):
        RgbImage(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        RgbImage(np.zeros((2, 2, 3)), "XYZ")


class TestPsnr:
    def test_identical_is_capped(self):
        a = np.random.default_rng(0).random((8, 8, 3))
        assert psnr(a, a, crop=0) == PSNR_CAP == 99.0

    def test_constant_offset(self):
        a = np.full((8, 8, 3), 0.3)
        assert psnr(a, a + 0.1, crop=0) == pytest.approx(20.0, abs=1e-9)

    def test_crop_matches_brute_force(self):
        rng = np.random.default_rng(3)
        a, b = rng.random((120, 130, 3)), rng.random((120, 130, 3))
        total, n = 0.0, 0
        for i in range(50, 70):
            for j in range(50, 80):
                for c in range(3):
                    total += (a[i, j, c] - b[i, j, c]) ** 2
                    n += 1
        expected = 10 * np.log10(1 / (total / n))
        assert psnr(a, b, crop=50) == pytest.approx(expected, abs=1e-9)

    def test_symmetric(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((20, 20, 3)), rng.random((20, 20, 3))
        assert psnr(a, b, 2) == psnr(b, a, 2)

    def test_decreases_with_noise(self):
        rng = np.random.default_rng(5)
        a = rng.random((64, 64, 3))
        base = rng.standard_normal(a.shape)
        values = [psnr(a, a + s * base, 4) for s in (0.01, 0.03, 0.1, 0.3)]
        assert all(x > y for x, y in zip(values, values[1:]))

    def test_errors(self):
        a = np.zeros((10, 10, 3))
        with pytest.raises(ValueError):
            psnr(a, np.zeros((10, 12, 3)), 0)
        with pytest.raises(ValueError):
            psnr(a, a, 5)
        with pytest.raises(ValueError):
            psnr(RgbImage(a, "sRGB"), RgbImage(a, "linRGB"), 0)


class TestSsim:
    def test_self_similarity(self):
        a = np.random.default_rng(0).random((40, 40, 3))
        assert ssim(a, a, 0) == pytest.approx(1.0, abs=1e-12)

    def test_identical_constants(self):
        a = np.full((20, 20, 3), 0.5)
        assert ssim(a, a, 0) == pytest.approx(1.0, abs=1e-12)

    def test_constant_luminance_term(self):
        a = np.full((20, 20, 3), 0.2)
        b = np.full((20, 20, 3), 0.8)
        expected = (2 * 0.2 * 0.8 + 1e-4) / (0.04 + 0.64 + 1e-4)
        assert expected == pytest.approx(0.4707, abs=1e-4)
        assert ssim(a, b, 0) == pytest.approx(expected, abs=1e-12)

    def test_matches_scikit_image(self):
        skm = pytest.importorskip("skimage.metrics")
        rng = np.random.default_rng(7)
        a = rng.random((64, 70, 3))
        b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
        ref = skm.structural_similarity(a, b, channel_axis=2, data_range=1.0,
                                        gaussian_weights=True, sigma=1.5,
                                        use_sample_covariance=False)
        assert ssim(a, b, 0) == pytest.approx(ref, abs=1e-10)

    def test_range(self):
        rng = np.random.default_rng(8)
        a, b = rng.random((30, 30, 3)), rng.random((30, 30, 3))
        assert -1 <= ssim(a, b, 0) <= 1
