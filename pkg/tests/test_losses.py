import math

import numpy as np
import pytest

from sasr import (
    DimensionError,
    EdgeMapConfig,
    FeatureExtractor,
    ImageTensor,
    LossCoefficients,
    PreconditionError,
    extract_edge_map,
    gan_discriminator_loss,
    gan_generator_loss,
    grad_weighted_loss,
    perceptual_loss,
    sa_pixel_loss,
    total_loss,
    weighted_charbonnier,
    weighted_l1,
)


def rand_tensor(rng, shape):
    return ImageTensor(rng.random(shape))


def scalar_loop_l1(u, v, h):
    total = 0.0
    k, hi, wj = u.shape
    for c in range(k):
        for i in range(hi):
            for j in range(wj):
                total += h.data[c, i, j] * abs(u.data[c, i, j] - v.data[c, i, j])
    return total


def scalar_loop_charbonnier(u, v, h, eps):
    total = 0.0
    k, hi, wj = u.shape
    for c in range(k):
        for i in range(hi):
            for j in range(wj):
                d = u.data[c, i, j] - v.data[c, i, j]
                total += h.data[c, i, j] * math.sqrt(d * d + eps * eps)
    return total


class TestWeightedDistances:
    def test_identity_zero(self):
        rng = np.random.default_rng(0)
        u = rand_tensor(rng, (2, 3, 3))
        h = rand_tensor(rng, (2, 3, 3))
        assert weighted_l1(u, u, h) == 0.0

    def test_single_element(self):
        u = ImageTensor.full(1, 1, 1, 0.5)
        v = ImageTensor.zeros(1, 1, 1)
        h = ImageTensor.full(1, 1, 1, 2.0)
        assert weighted_l1(u, v, h) == pytest.approx(1.0, abs=1e-15)

    def test_l1_matches_scalar_loop(self):
        rng = np.random.default_rng(1)
        u = rand_tensor(rng, (2, 4, 4))
        v = rand_tensor(rng, (2, 4, 4))
        w = extract_edge_map(u, EdgeMapConfig())
        assert weighted_l1(u, v, w) == pytest.approx(scalar_loop_l1(u, v, w), abs=1e-12)

    def test_charbonnier_at_zero_difference(self):
        u = ImageTensor.full(1, 2, 2, 0.3)
        ones = ImageTensor.full(1, 2, 2, 1.0)
        # the published Charbonnier constant example: eps = 0.001
        assert weighted_charbonnier(u, u, ones, 0.001) == pytest.approx(0.004, abs=1e-15)

    def test_charbonnier_single_element(self):
        u = ImageTensor.full(1, 1, 1, 0.003)
        v = ImageTensor.zeros(1, 1, 1)
        ones = ImageTensor.full(1, 1, 1, 1.0)
        assert weighted_charbonnier(u, v, ones, 0.001) == pytest.approx(
            math.sqrt(1e-5), rel=1e-12
        )

    def test_zero_weights_annihilate(self):
        rng = np.random.default_rng(2)
        u = rand_tensor(rng, (1, 3, 3))
        v = rand_tensor(rng, (1, 3, 3))
        zeros = ImageTensor.zeros(1, 3, 3)
        assert weighted_charbonnier(u, v, zeros, 0.001) == 0.0

    def test_charbonnier_matches_scalar_loop(self):
        rng = np.random.default_rng(3)
        u = rand_tensor(rng, (2, 4, 4))
        v = rand_tensor(rng, (2, 4, 4))
        h = rand_tensor(rng, (2, 4, 4))
        assert weighted_charbonnier(u, v, h, 0.01) == pytest.approx(
            scalar_loop_charbonnier(u, v, h, 0.01), abs=1e-12
        )

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            weighted_l1(ImageTensor.zeros(1, 2, 2), ImageTensor.zeros(1, 2, 3),
                        ImageTensor.zeros(1, 2, 2))

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            u = rand_tensor(rng, (1, 4, 4))
            v = rand_tensor(rng, (1, 4, 4))
            h = rand_tensor(rng, (1, 4, 4))
            assert weighted_l1(u, v, h) == weighted_l1(v, u, h)
            assert weighted_charbonnier(u, v, h, 0.001) == weighted_charbonnier(v, u, h, 0.001)

    def test_linearity_in_weights(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            u = rand_tensor(rng, (1, 4, 4))
            v = rand_tensor(rng, (1, 4, 4))
            h1 = rand_tensor(rng, (1, 4, 4))
            h2 = rand_tensor(rng, (1, 4, 4))
            a, b = rng.uniform(0, 3, 2)
            combined = ImageTensor(a * h1.data + b * h2.data)
            for fn in (weighted_l1, lambda x, y, h: weighted_charbonnier(x, y, h, 0.001)):
                lhs = fn(u, v, combined)
                rhs = a * fn(u, v, h1) + b * fn(u, v, h2)
                assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_charbonnier_lower_bounds(self):
        rng = np.random.default_rng(6)
        eps = 0.001
        for _ in range(20):
            u = rand_tensor(rng, (2, 3, 3))
            v = rand_tensor(rng, (2, 3, 3))
            h = rand_tensor(rng, (2, 3, 3))
            charb = weighted_charbonnier(u, v, h, eps)
            assert charb >= weighted_l1(u, v, h) - 1e-12
            assert charb >= eps * float(np.sum(h.data)) - 1e-12


class TestGradWeightedLoss:
    def test_zero_at_equal_charbonnier(self):
        rng = np.random.default_rng(7)
        u = rand_tensor(rng, (1, 3, 3))
        h = rand_tensor(rng, (1, 3, 3))
        coeffs = LossCoefficients(norm="charbonnier")
        g = grad_weighted_loss(u, u, h, coeffs)
        assert np.all(g.data == 0.0)

    def test_charbonnier_scalar_value(self):
        u = ImageTensor.full(1, 1, 1, 0.003)
        v = ImageTensor.zeros(1, 1, 1)
        h = ImageTensor.full(1, 1, 1, 1.0)
        coeffs = LossCoefficients(norm="charbonnier", epsilon=0.001)
        g = grad_weighted_loss(u, v, h, coeffs)
        assert g.data[0, 0, 0] == pytest.approx(-0.003 / math.sqrt(1e-5), rel=1e-9)

    def test_l1_subgradient_sign(self):
        u = ImageTensor.full(1, 1, 1, 0.4)
        v = ImageTensor.zeros(1, 1, 1)
        h = ImageTensor.full(1, 1, 1, 3.0)
        g = grad_weighted_loss(u, v, h, LossCoefficients(norm="l1"))
        assert g.data[0, 0, 0] == -3.0

    def test_l1_sign_zero_convention(self):
        u = ImageTensor.full(1, 1, 1, 0.5)
        g = grad_weighted_loss(u, u, ImageTensor.full(1, 1, 1, 2.0), LossCoefficients(norm="l1"))
        assert g.data[0, 0, 0] == 0.0

    @pytest.mark.parametrize("norm", ["l1", "charbonnier"])
    def test_matches_central_differences(self, norm):
        rng = np.random.default_rng(8)
        coeffs = LossCoefficients(norm=norm, epsilon=0.001)
        step = 1e-6
        checked = 0
        for _ in range(50):
            u = rand_tensor(rng, (1, 3, 3))
            v = rand_tensor(rng, (1, 3, 3))
            if norm == "l1":  # keep away from the kink
                mask = np.abs(u.data - v.data) < 1e-4
                v = ImageTensor(np.where(mask, v.data + 3e-4, v.data))
            h = rand_tensor(rng, (1, 3, 3))
            analytic = grad_weighted_loss(u, v, h, coeffs).data
            fn = weighted_l1 if norm == "l1" else (
                lambda a, b, c: weighted_charbonnier(a, b, c, coeffs.epsilon)
            )
            for c, i, j in [(0, 0, 0), (0, 1, 2), (0, 2, 1)]:
                bumped = v.data.copy()
                bumped[c, i, j] += step
                up = fn(u, ImageTensor(bumped), h)
                bumped[c, i, j] -= 2 * step
                down = fn(u, ImageTensor(bumped), h)
                numeric = (up - down) / (2 * step)
                denom = max(abs(analytic[c, i, j]), abs(numeric), 1e-3)
                assert abs(analytic[c, i, j] - numeric) / denom < 1e-5
                checked += 1
        assert checked == 150


class TestSaPixelLoss:
    def test_beta2_zero_degenerates(self):
        rng = np.random.default_rng(9)
        hr = rand_tensor(rng, (1, 4, 4))
        sr = rand_tensor(rng, (1, 4, 4))
        w = rand_tensor(rng, (1, 4, 4))
        ones = ImageTensor.full(1, 4, 4, 1.0)
        coeffs = LossCoefficients(beta1=0.7, beta2=0.0, norm="l1")
        assert sa_pixel_loss(hr, sr, w, coeffs) == pytest.approx(
            0.7 * weighted_l1(hr, sr, ones), abs=1e-14
        )

    def test_identical_inputs_l1(self):
        rng = np.random.default_rng(10)
        hr = rand_tensor(rng, (1, 4, 4))
        w = rand_tensor(rng, (1, 4, 4))
        assert sa_pixel_loss(hr, hr, w, LossCoefficients(norm="l1")) == 0.0

    def test_split_sum_oracle_binary_weights(self):
        rng = np.random.default_rng(11)
        hr = rand_tensor(rng, (1, 5, 5))
        sr = rand_tensor(rng, (1, 5, 5))
        w = ImageTensor((rng.random((1, 5, 5)) > 0.5).astype(float))
        coeffs = LossCoefficients(beta1=0.01, beta2=2.5, norm="l1")
        diff = np.abs(hr.data - sr.data)
        expected = 0.01 * diff.sum() + 2.5 * diff[w.data == 1.0].sum()
        assert sa_pixel_loss(hr, sr, w, coeffs) == pytest.approx(expected, abs=1e-12)

    def test_exact_decomposition(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            hr = rand_tensor(rng, (2, 4, 4))
            sr = rand_tensor(rng, (2, 4, 4))
            w = rand_tensor(rng, (2, 4, 4))
            ones = ImageTensor(np.ones(hr.shape))
            coeffs = LossCoefficients(
                beta1=rng.uniform(0, 1), beta2=rng.uniform(0, 25), norm="charbonnier"
            )
            lhs = sa_pixel_loss(hr, sr, w, coeffs)
            rhs = coeffs.beta1 * weighted_charbonnier(hr, sr, ones, coeffs.epsilon) + (
                coeffs.beta2 * weighted_charbonnier(hr, sr, w, coeffs.epsilon)
            )
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_monotone_in_beta2(self):
        rng = np.random.default_rng(13)
        hr = rand_tensor(rng, (1, 4, 4))
        sr = rand_tensor(rng, (1, 4, 4))
        w = rand_tensor(rng, (1, 4, 4))
        values = [
            sa_pixel_loss(hr, sr, w, LossCoefficients(beta1=0.01, beta2=b2, norm="l1"))
            for b2 in (0.0, 0.5, 1.5, 5.0, 20.0)
        ]
        assert all(a <= b + 1e-15 for a, b in zip(values, values[1:]))

    def test_edge_flat_gradient_ratio(self):
        # equal residuals: |gradient| at w=1 exceeds w=0 by exactly
        # (beta1 + beta2) / beta1, by linearity of the gradient in h
        from sasr import build_weight_matrix

        beta1, beta2 = 0.01, 20.0
        hr = ImageTensor(np.array([[[0.8, 0.8]]]))
        sr = ImageTensor(np.array([[[0.5, 0.5]]]))
        w = ImageTensor(np.array([[[1.0, 0.0]]]))
        for norm in ("l1", "charbonnier"):
            coeffs = LossCoefficients(beta1=beta1, beta2=beta2, norm=norm)
            h = build_weight_matrix(w, beta1, beta2)
            g = grad_weighted_loss(hr, sr, h, coeffs).data[0, 0]
            assert abs(g[0]) / abs(g[1]) == pytest.approx((beta1 + beta2) / beta1, rel=1e-12)


class ZeroExtractor:
    def __call__(self, img):
        return ImageTensor.zeros(4, 2, 2)


class TestPerceptualLoss:
    def test_identical_inputs(self):
        rng = np.random.default_rng(14)
        hr = rand_tensor(rng, (1, 8, 8))
        extractor = FeatureExtractor(1, seed=3)
        count = extractor(hr).data.size
        assert perceptual_loss(hr, hr, extractor, 0.001) == pytest.approx(
            0.001 * count, rel=1e-12
        )

    def test_zero_extractor(self):
        rng = np.random.default_rng(15)
        hr = rand_tensor(rng, (1, 8, 8))
        sr = rand_tensor(rng, (1, 8, 8))
        assert perceptual_loss(hr, sr, ZeroExtractor(), 0.001) == pytest.approx(
            0.001 * 16, rel=1e-12
        )

    def test_duplicate_forward_oracle(self):
        rng = np.random.default_rng(16)
        hr = rand_tensor(rng, (1, 8, 8))
        sr = rand_tensor(rng, (1, 8, 8))
        extractor = FeatureExtractor(1, seed=42)

        def straight_line(img):
            def conv_s2(x, kern, bias):
                c_out, c_in, kh, kw = kern.shape
                h, w = x.shape[1], x.shape[2]
                oh, ow = (h + 1) // 2, (w + 1) // 2
                out = np.zeros((c_out, oh, ow))
                xp = np.zeros((c_in, h + 2, w + 2))
                xp[:, 1 : h + 1, 1 : w + 1] = x
                for o in range(c_out):
                    for p in range(oh):
                        for q in range(ow):
                            acc = bias[o]
                            for c in range(c_in):
                                for a in range(kh):
                                    for b in range(kw):
                                        acc += kern[o, c, a, b] * xp[c, 2 * p + a, 2 * q + b]
                            out[o, p, q] = acc
                return out

            def leaky(x):
                return np.where(x > 0, x, 0.2 * x)

            h1 = leaky(conv_s2(img.data, extractor.k0, extractor.b0))
            return leaky(conv_s2(h1, extractor.k1, extractor.b1))

        expect_hr = straight_line(hr)
        expect_sr = straight_line(sr)
        d = expect_hr - expect_sr
        eps = 0.001
        expected = np.sqrt(d * d + eps * eps).sum()
        assert perceptual_loss(hr, sr, extractor, eps) == pytest.approx(expected, rel=1e-12)


class TestGanLosses:
    def test_indifference_point(self):
        assert gan_discriminator_loss([0.5], [0.5]) == pytest.approx(2 * math.log(2), rel=1e-12)

    def test_perfect_discriminator_clamped(self):
        loss = gan_discriminator_loss([1.0], [0.0])
        assert 0.0 <= loss < 3e-7

    def test_batch_oracle(self):
        expected = -(math.log(0.9) + math.log(0.8)) / 2 - math.log(0.9)
        assert gan_discriminator_loss([0.9, 0.8], [0.1]) == pytest.approx(expected, rel=1e-12)

    def test_generator_indifference(self):
        assert gan_generator_loss([0.5]) == pytest.approx(math.log(2), rel=1e-12)

    def test_generator_wins(self):
        assert gan_generator_loss([1.0]) == pytest.approx(-math.log(1 - 1e-7), rel=1e-6)

    def test_generator_batch_oracle(self):
        expected = -(math.log(0.25) + math.log(0.75)) / 2
        assert gan_generator_loss([0.25, 0.75]) == pytest.approx(expected, rel=1e-12)

    def test_empty_batch_rejected(self):
        with pytest.raises(PreconditionError):
            gan_discriminator_loss([], [0.5])
        with pytest.raises(PreconditionError):
            gan_generator_loss([])

    def test_disc_gradient_wrt_real_at_half(self):
        # d/dd of -mean log d at d = 0.5 is -1/(n * 0.5) = -2/n per entry
        step = 1e-7
        for n in (1, 4):
            base = [0.5] * n
            up = [0.5 + step] + [0.5] * (n - 1)
            down = [0.5 - step] + [0.5] * (n - 1)
            numeric = (
                gan_discriminator_loss(up, [0.5]) - gan_discriminator_loss(down, [0.5])
            ) / (2 * step)
            assert numeric == pytest.approx(-2.0 / n, rel=1e-6)


class TestTotalLoss:
    def test_esr_plain_published_coefficients(self):
        rng = np.random.default_rng(17)
        hr = rand_tensor(rng, (1, 8, 8))
        extractor = FeatureExtractor(1, seed=0)
        coeffs = LossCoefficients.image_sr_defaults()
        assert coeffs.alpha == 0.005 and coeffs.beta1 == 0.01
        br = total_loss(hr, hr, None, [0.5], extractor, coeffs, "esr_plain")
        assert br.gan_term == pytest.approx(0.005 * math.log(2), rel=1e-12)
        assert br.perceptual_term == pytest.approx(
            perceptual_loss(hr, hr, extractor, coeffs.epsilon), rel=1e-12
        )
        assert br.pixel_uniform_term == 0.0
        assert br.pixel_sa_term == 0.0
        assert br.total == pytest.approx(br.gan_term + br.perceptual_term, abs=1e-15)

    def test_vsr_sa_breakdown_sums(self):
        rng = np.random.default_rng(18)
        hr = rand_tensor(rng, (1, 8, 8))
        sr = rand_tensor(rng, (1, 8, 8))
        w = extract_edge_map(hr, EdgeMapConfig())
        coeffs = LossCoefficients.video_sr_defaults()
        assert (coeffs.alpha1, coeffs.alpha2, coeffs.beta1) == (0.001, 0.998, 0.001)
        assert coeffs.beta2 == 5.0
        extractor = FeatureExtractor(1, seed=1)
        br = total_loss(hr, sr, w, [0.3, 0.6], extractor, coeffs, "vsr_sa")
        parts = br.gan_term + br.perceptual_term + br.pixel_uniform_term + br.pixel_sa_term
        assert br.total == pytest.approx(parts, abs=1e-12)

    def test_canny_video_beta2(self):
        assert LossCoefficients.video_sr_defaults("canny").beta2 == 1.5

    def test_sa_with_zero_beta2_equals_plain(self):
        rng = np.random.default_rng(19)
        hr = rand_tensor(rng, (1, 8, 8))
        sr = rand_tensor(rng, (1, 8, 8))
        w = rand_tensor(rng, (1, 8, 8))
        extractor = FeatureExtractor(1, seed=2)
        for base_mode in ("esr", "vsr"):
            coeffs = LossCoefficients(beta2=0.0)
            sa = total_loss(hr, sr, w, [0.4], extractor, coeffs, f"{base_mode}_sa")
            plain = total_loss(hr, sr, w, [0.4], extractor, coeffs, f"{base_mode}_plain")
            assert sa == plain

    def test_unknown_mode_rejected(self):
        with pytest.raises(PreconditionError):
            total_loss(
                ImageTensor.zeros(1, 8, 8), ImageTensor.zeros(1, 8, 8), None, [0.5],
                FeatureExtractor(1, 0), LossCoefficients(), "bad_mode",
            )
