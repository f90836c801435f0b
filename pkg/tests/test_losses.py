"""Region losses against analytic values and the brute-force oracle."""

import numpy as np
import pytest
import torch
from helpers import (
    brute_force_gradient_smooth,
    central_difference_grad,
    max_rel_error,
)

from ranlen.losses import (
    LossWeights,
    gradient_smooth_loss,
    loss_area_a,
    loss_area_c,
    luminance,
    smoothness_weights,
    total_loss,
)
from ranlen.masks import partition, sample_circle

# frozen from the quadratic ramp case: each interior pixel contributes
# w_xx * (d_xx)^2 = (1/1e-4) * 2^2 = 4e4, and the band holds 9 pixels
QUADRATIC_CASE_TOTAL = 360000.0


def quadratic_case():
    """5x5 target = x^2 (unit spacing), constant input, band = interior 3x3."""
    xs = np.arange(5, dtype=np.float64)
    target = np.tile(xs**2, (5, 1))[None]
    image = np.full((3, 5, 5), 0.5, dtype=np.float64)
    area_b = np.zeros((5, 5), dtype=bool)
    area_b[1:4, 1:4] = True
    return target, image, area_b


class TestGradientSmoothLoss:
    def test_constant_target_is_zero(self):
        target = torch.full((1, 3, 8, 8), 0.3, dtype=torch.float64)
        image = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        area_b = torch.ones(1, 8, 8, dtype=torch.bool)
        assert float(gradient_smooth_loss(target, image, area_b)) == 0.0

    def test_affine_target_is_zero_even_at_borders(self):
        yy, xx = np.mgrid[0:9, 0:7].astype(np.float64)
        target = np.stack([0.3 * xx + 0.1 * yy + 0.05] * 3)[None]
        image = np.random.default_rng(0).uniform(0.05, 1.0, size=(1, 3, 9, 7))
        area_b = torch.ones(1, 9, 7, dtype=torch.bool)  # band covers the border
        loss = gradient_smooth_loss(
            torch.from_numpy(target), torch.from_numpy(image), area_b
        )
        assert float(loss) == 0.0

    def test_quadratic_case_matches_oracle_and_frozen_value(self):
        target, image, area_b = quadratic_case()
        oracle = brute_force_gradient_smooth(target, image, area_b)
        loss = gradient_smooth_loss(
            torch.from_numpy(target)[None],
            torch.from_numpy(image)[None],
            torch.from_numpy(area_b)[None],
        )
        assert float(loss) == pytest.approx(oracle, rel=1e-9)
        assert float(loss) == pytest.approx(QUADRATIC_CASE_TOTAL, rel=1e-6)

    def test_random_case_matches_oracle(self):
        rng = np.random.default_rng(7)
        target = rng.normal(size=(3, 9, 11))
        image = rng.uniform(0.01, 1.0, size=(3, 9, 11))
        mask, _ = sample_circle(9, 11, rng=rng)
        area_b = partition(mask).area_b
        oracle = brute_force_gradient_smooth(target, image, area_b)
        loss = gradient_smooth_loss(
            torch.from_numpy(target)[None],
            torch.from_numpy(image)[None],
            torch.from_numpy(area_b)[None],
        )
        assert float(loss) == pytest.approx(oracle, rel=1e-9)

    def test_invariant_to_changes_outside_stencil_support(self):
        # every stencil of a band pixel reads at most one step away, so edits
        # beyond Chebyshev distance 1 from the band cannot move the loss
        rng = np.random.default_rng(3)
        target = torch.from_numpy(rng.normal(size=(1, 3, 10, 10)))
        image = torch.from_numpy(rng.uniform(0.05, 1.0, size=(1, 3, 10, 10)))
        area_b = torch.zeros(1, 10, 10, dtype=torch.bool)
        area_b[0, 4:6, 4:6] = True
        base = float(gradient_smooth_loss(target, image, area_b))
        edited = target.clone()
        edited[..., 0:3, :] += 100.0
        edited[..., 7:, :] -= 55.0
        edited[..., 0:3] += 9.0
        edited[..., 7:] += 1.0
        assert float(gradient_smooth_loss(edited, image, area_b)) == base

    def test_empty_band_is_zero(self):
        target = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        image = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        area_b = torch.zeros(1, 8, 8, dtype=torch.bool)
        assert float(gradient_smooth_loss(target, image, area_b)) == 0.0

    def test_nonnegative(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            target = torch.from_numpy(rng.normal(size=(1, 3, 8, 8)))
            image = torch.from_numpy(rng.uniform(0, 1, size=(1, 3, 8, 8)))
            area_b = torch.from_numpy(rng.integers(0, 2, size=(1, 8, 8)).astype(bool))
            assert float(gradient_smooth_loss(target, image, area_b)) >= 0.0


class TestSmoothnessWeights:
    def test_sharper_input_contrast_lowers_weights(self):
        # gray image so luminance(I**2) == luminance(I)**2 and squaring
        # exactly doubles the log-luminance contrast
        rng = np.random.default_rng(5)
        gray = rng.uniform(0.1, 0.9, size=(1, 1, 8, 8))
        image = torch.from_numpy(np.repeat(gray, 3, axis=1))
        w_flat = smoothness_weights(image)
        w_sharp = smoothness_weights(image**2)
        log_lum = torch.log(torch.clamp(luminance(image), 1 / 255, 1.0))
        from ranlen.losses import second_diff_xx

        active = second_diff_xx(log_lum).abs() > 1e-6
        assert (w_sharp[0][active] < w_flat[0][active]).all()

    def test_weight_formula_on_flat_input(self):
        image = torch.full((1, 3, 6, 6), 0.5, dtype=torch.float64)
        w_xx, w_xy, w_yy = smoothness_weights(image, s_exponent=1.2, eps_w=1e-4)
        for w in (w_xx, w_xy, w_yy):
            assert torch.allclose(w, torch.full_like(w, 1e4))


class TestLossAreaA:
    def test_zero_on_match(self):
        y = torch.rand(1, 3, 8, 8, dtype=torch.float64) * 0.5 + 0.2
        area = torch.ones(1, 8, 8, dtype=torch.bool)
        image = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        assert float(loss_area_a(y, y, image, area)) == 0.0

    def test_uniform_offset_gives_squared_error(self):
        w = LossWeights(color_w=0.0)
        y = torch.rand(1, 3, 8, 8, dtype=torch.float64) * 0.5 + 0.2
        area = torch.ones(1, 8, 8, dtype=torch.bool)
        image = torch.zeros_like(y)
        loss = loss_area_a(y + 0.1, y, image, area, weights=w)
        assert float(loss) == pytest.approx(0.01, rel=1e-9)

    def test_parallel_colors_have_zero_color_term(self):
        w = LossWeights(recon_w=0.0, color_w=1.0)
        y = torch.rand(1, 3, 8, 8, dtype=torch.float64) * 0.4 + 0.1
        area = torch.ones(1, 8, 8, dtype=torch.bool)
        image = torch.zeros_like(y)
        loss = loss_area_a(2.0 * y, y, image, area, weights=w)
        assert float(loss) == pytest.approx(0.0, abs=1e-9)
        recon = loss_area_a(2.0 * y, y, image, area, weights=LossWeights(color_w=0.0))
        assert float(recon) > 0.0

    def test_restricted_to_area(self):
        y = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        area = torch.zeros(1, 8, 8, dtype=torch.bool)
        area[0, :4] = True
        y_hat = y.clone()
        y_hat[..., 4:, :] += 0.3  # outside A
        assert float(loss_area_a(y_hat, y, torch.zeros_like(y), area)) == 0.0

    def test_illumination_smoothness_only_for_retinex(self):
        rng = np.random.default_rng(9)
        y = torch.from_numpy(rng.uniform(0.2, 0.8, size=(1, 3, 8, 8)))
        illum = torch.from_numpy(rng.uniform(0.1, 1.0, size=(1, 3, 8, 8)))
        image = torch.from_numpy(rng.uniform(0.05, 0.5, size=(1, 3, 8, 8)))
        area = torch.ones(1, 8, 8, dtype=torch.bool)
        without = loss_area_a(y, y, image, area)
        with_illum = loss_area_a(y, y, image, area, illumination=illum)
        assert float(without) == 0.0
        assert float(with_illum) > 0.0


class TestLossAreaC:
    def test_zero_on_match(self):
        image = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        area = torch.ones(1, 8, 8, dtype=torch.bool)
        assert float(loss_area_c(image, image, area)) == 0.0

    def test_uniform_offset(self):
        image = torch.rand(1, 3, 8, 8, dtype=torch.float64) * 0.5
        area = torch.ones(1, 8, 8, dtype=torch.bool)
        assert float(loss_area_c(image + 0.1, image, area)) == pytest.approx(0.01, rel=1e-9)

    def test_changes_confined_to_other_areas_ignored(self):
        mask, _ = sample_circle(16, 16, rng=1)
        part = partition(mask)
        image = torch.rand(1, 3, 16, 16, dtype=torch.float64)
        y_hat = image.clone()
        inside = torch.from_numpy(part.area_a | part.area_b)
        y_hat[0, :, inside] = 0.99
        area_c = torch.from_numpy(part.area_c)[None]
        assert float(loss_area_c(y_hat, image, area_c)) == 0.0


class TestTotalLoss:
    def _setup(self, seed=0, h=16, w=16):
        rng = np.random.default_rng(seed)
        mask, _ = sample_circle(h, w, rng=rng)
        part = partition(mask)
        image = torch.from_numpy(rng.uniform(0.02, 0.4, size=(1, 3, h, w)))
        reference = torch.from_numpy(rng.uniform(0.3, 0.9, size=(1, 3, h, w)))
        enhanced = torch.from_numpy(rng.uniform(0.0, 1.0, size=(1, 3, h, w)))
        areas = tuple(
            torch.from_numpy(a)[None] for a in (part.area_a, part.area_b, part.area_c)
        )
        return enhanced, reference, image, areas, part

    def test_weighted_combination_invariant(self):
        enhanced, reference, image, (a, b, c), part = self._setup()
        weights = LossWeights()  # alpha, beta, gamma = 1, 1e-4, 1
        bd = total_loss(enhanced, reference, image, a, b, c, weights=weights)
        expected = (
            weights.alpha_w * float(bd.l_a) / part.r_a
            + weights.beta_w * float(bd.l_b) / part.r_b
            + weights.gamma_w * float(bd.l_c) / part.r_c
        )
        assert float(bd.total) == pytest.approx(expected, rel=1e-9)
        assert bd.coverages[0].tolist() == pytest.approx([part.r_a, part.r_b, part.r_c])

    def test_zero_beta_drops_band_term(self):
        enhanced, reference, image, (a, b, c), part = self._setup(seed=2)
        bd = total_loss(
            enhanced, reference, image, a, b, c, weights=LossWeights(beta_w=0.0)
        )
        expected = float(bd.l_a) / part.r_a + float(bd.l_c) / part.r_c
        assert float(bd.total) == pytest.approx(expected, rel=1e-9)

    def test_empty_area_dropped_not_nan(self):
        enhanced = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        reference = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        image = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        a = torch.zeros(1, 8, 8, dtype=torch.bool)  # empty enhance area
        b = torch.zeros(1, 8, 8, dtype=torch.bool)
        c = torch.ones(1, 8, 8, dtype=torch.bool)
        bd = total_loss(enhanced, reference, image, a, b, c)
        assert torch.isfinite(bd.total)
        assert float(bd.l_a) == 0.0

    def test_paper_default_weights(self):
        w = LossWeights()
        assert (w.alpha_w, w.beta_w, w.gamma_w) == (1.0, 1e-4, 1.0)
        assert w.s_exponent == 1.2
        assert w.eps_w == 1e-4

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(alpha_w=-1.0)
        with pytest.raises(ValueError):
            LossWeights(eps_w=0.0)

    def test_batch_mean_of_per_sample_totals(self):
        e1, r1, i1, (a1, b1, c1), _ = self._setup(seed=3)
        e2, r2, i2, (a2, b2, c2), _ = self._setup(seed=4)
        bd1 = total_loss(e1, r1, i1, a1, b1, c1)
        bd2 = total_loss(e2, r2, i2, a2, b2, c2)
        both = total_loss(
            torch.cat([e1, e2]),
            torch.cat([r1, r2]),
            torch.cat([i1, i2]),
            torch.cat([a1, a2]),
            torch.cat([b1, b2]),
            torch.cat([c1, c2]),
        )
        assert float(both.total) == pytest.approx(
            (float(bd1.total) + float(bd2.total)) / 2, rel=1e-9
        )


class TestLossGradients:
    def _masked_setup(self, seed=0):
        rng = np.random.default_rng(seed)
        mask, _ = sample_circle(8, 8, rng=rng)
        part = partition(mask)
        image = torch.from_numpy(rng.uniform(0.02, 0.6, size=(1, 3, 8, 8)))
        reference = torch.from_numpy(rng.uniform(0.3, 0.9, size=(1, 3, 8, 8)))
        return image, reference, part

    def test_area_a_gradient(self):
        image, reference, part = self._masked_setup(seed=1)
        area = torch.from_numpy(part.area_a)[None]
        enhanced = torch.rand(1, 3, 8, 8, dtype=torch.float64, requires_grad=True)

        def value():
            with torch.no_grad():
                return float(loss_area_a(enhanced, reference, image, area))

        (analytic,) = torch.autograd.grad(
            loss_area_a(enhanced, reference, image, area), enhanced
        )
        numeric = central_difference_grad(value, enhanced.detach())
        assert max_rel_error(analytic, numeric) <= 1e-4

    def test_area_a_illumination_gradient(self):
        image, reference, part = self._masked_setup(seed=2)
        area = torch.from_numpy(part.area_a)[None]
        enhanced = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        illum = (torch.rand(1, 3, 8, 8, dtype=torch.float64) * 0.9 + 0.05).requires_grad_()

        def value():
            with torch.no_grad():
                return float(
                    loss_area_a(enhanced, reference, image, area, illumination=illum)
                )

        (analytic,) = torch.autograd.grad(
            loss_area_a(enhanced, reference, image, area, illumination=illum), illum
        )
        numeric = central_difference_grad(value, illum.detach())
        assert max_rel_error(analytic, numeric) <= 1e-4

    def test_gradient_smooth_gradient(self):
        image, _, part = self._masked_setup(seed=3)
        area_b = torch.from_numpy(part.area_b)[None]
        target = torch.randn(1, 3, 8, 8, dtype=torch.float64, requires_grad=True)

        def value():
            with torch.no_grad():
                return float(gradient_smooth_loss(target, image, area_b))

        (analytic,) = torch.autograd.grad(
            gradient_smooth_loss(target, image, area_b), target
        )
        numeric = central_difference_grad(value, target.detach())
        assert max_rel_error(analytic, numeric) <= 1e-4

    def test_area_c_gradient(self):
        image, _, part = self._masked_setup(seed=4)
        area_c = torch.from_numpy(part.area_c)[None]
        enhanced = torch.rand(1, 3, 8, 8, dtype=torch.float64, requires_grad=True)

        def value():
            with torch.no_grad():
                return float(loss_area_c(enhanced, image, area_c))

        (analytic,) = torch.autograd.grad(loss_area_c(enhanced, image, area_c), enhanced)
        numeric = central_difference_grad(value, enhanced.detach())
        assert max_rel_error(analytic, numeric) <= 1e-4
