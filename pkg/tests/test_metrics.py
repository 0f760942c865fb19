import numpy as np
import pytest

from sasr import (
    DimensionError,
    ImageTensor,
    MetricReport,
    PreconditionError,
    edge_region_mae,
    evaluate_pair,
    psnr,
    ssim,
)


def rand_img(rng, shape):
    return ImageTensor(rng.random(shape))


class TestPsnr:
    def test_identical_capped(self):
        rng = np.random.default_rng(0)
        a = rand_img(rng, (1, 8, 8))
        assert psnr(a, a) == 100.0

    def test_uniform_difference(self):
        a = ImageTensor.full(1, 12, 12, 0.6)
        b = ImageTensor.full(1, 12, 12, 0.5)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(1)
        a = rand_img(rng, (3, 6, 6))
        b = rand_img(rng, (3, 6, 6))
        mse = 0.0
        for c in range(3):
            for i in range(6):
                for j in range(6):
                    mse += (a.data[c, i, j] - b.data[c, i, j]) ** 2
        mse /= 3 * 6 * 6
        assert psnr(a, b) == pytest.approx(10 * np.log10(1 / mse), abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a = rand_img(rng, (1, 5, 5))
        b = rand_img(rng, (1, 5, 5))
        assert psnr(a, b) == psnr(b, a)

    def test_monotone_in_uniform_error(self):
        a = ImageTensor.full(1, 8, 8, 0.5)
        values = [
            psnr(a, ImageTensor.full(1, 8, 8, 0.5 + d)) for d in (0.05, 0.1, 0.2, 0.4)
        ]
        assert all(x > y for x, y in zip(values, values[1:]))

    def test_tiny_error_still_capped(self):
        a = ImageTensor.full(1, 8, 8, 0.5)
        b = ImageTensor(np.full((1, 8, 8), 0.5) + 1e-9)
        assert psnr(a, b) == 100.0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            psnr(ImageTensor.zeros(1, 8, 8), ImageTensor.zeros(1, 8, 9))


class TestSsim:
    def test_identical_is_one(self):
        rng = np.random.default_rng(3)
        for shape in ((1, 11, 11), (1, 16, 20), (3, 12, 12)):
            a = rand_img(rng, shape)
            assert ssim(a, a) == pytest.approx(1.0, abs=1e-15)

    def test_constant_pair_closed_form(self):
        a = ImageTensor.full(1, 16, 16, 0.3)
        b = ImageTensor.full(1, 16, 16, 0.5)
        c1 = 1e-4
        expected = (2 * 0.3 * 0.5 + c1) / (0.3**2 + 0.5**2 + c1)
        assert ssim(a, b) == pytest.approx(expected, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        a = rand_img(rng, (1, 14, 14))
        b = rand_img(rng, (1, 14, 14))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)

    def test_bounded(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            a = rand_img(rng, (1, 12, 12))
            b = rand_img(rng, (1, 12, 12))
            assert -1.0 <= ssim(a, b) <= 1.0

    def test_too_small_rejected(self):
        with pytest.raises(PreconditionError):
            ssim(ImageTensor.zeros(1, 10, 12), ImageTensor.zeros(1, 10, 12))

    def test_color_converts_to_luminance(self):
        rng = np.random.default_rng(6)
        plane = rng.random((12, 12))
        color = ImageTensor(np.stack([plane, plane, plane]))
        gray = ImageTensor(plane)
        ref = rand_img(rng, (1, 12, 12))
        color_ref = ImageTensor(np.stack([ref.data[0]] * 3))
        assert ssim(color, color_ref) == pytest.approx(ssim(gray, ref), abs=1e-12)


class TestEdgeRegionMae:
    def test_identical_zero(self):
        rng = np.random.default_rng(7)
        hr = rand_img(rng, (1, 6, 6))
        w = rand_img(rng, (1, 6, 6))
        assert edge_region_mae(hr, hr, w, 0.5) == (0.0, 0.0)

    def test_all_edge_degenerate(self):
        rng = np.random.default_rng(8)
        hr = rand_img(rng, (1, 6, 6))
        sr = rand_img(rng, (1, 6, 6))
        ones = ImageTensor.full(1, 6, 6, 1.0)
        edge, flat = edge_region_mae(hr, sr, ones, 0.5)
        assert flat == -1.0
        assert edge == pytest.approx(float(np.abs(hr.data - sr.data).mean()), rel=1e-12)

    def test_two_bucket_oracle(self):
        rng = np.random.default_rng(9)
        hr = rand_img(rng, (2, 5, 5))
        sr = rand_img(rng, (2, 5, 5))
        w = ImageTensor((rng.random((2, 5, 5)) > 0.4).astype(float))
        edge, flat = edge_region_mae(hr, sr, w, 0.5)
        err = np.abs(hr.data - sr.data)
        assert edge == pytest.approx(err[w.data >= 0.5].mean(), rel=1e-12)
        assert flat == pytest.approx(err[w.data < 0.5].mean(), rel=1e-12)

    def test_buckets_partition(self):
        rng = np.random.default_rng(10)
        hr = rand_img(rng, (2, 5, 5))
        w = rand_img(rng, (2, 5, 5))
        tau = 0.37
        n_edge = int((w.data >= tau).sum())
        n_flat = int((w.data < tau).sum())
        assert n_edge + n_flat == 2 * 5 * 5

    def test_tau_out_of_range(self):
        hr = ImageTensor.zeros(1, 4, 4)
        with pytest.raises(PreconditionError):
            edge_region_mae(hr, hr, hr, 1.5)


def test_evaluate_pair_builds_report():
    rng = np.random.default_rng(11)
    hr = rand_img(rng, (1, 16, 16))
    sr = ImageTensor(np.clip(hr.data + rng.normal(0, 0.02, hr.shape), 0, 1))
    w = ImageTensor((rng.random((1, 16, 16)) > 0.5).astype(float))
    report = evaluate_pair(hr, sr, w, 0.5)
    assert isinstance(report, MetricReport)
    assert 0 < report.psnr_db <= 100
    assert -1 <= report.ssim <= 1
    assert report.edge_mae >= 0 and report.flat_mae >= 0
    d = report.as_dict()
    assert set(d) == {"psnr_db", "ssim", "edge_mae", "flat_mae"}
