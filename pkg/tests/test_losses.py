"""Loss functions against brute-force oracles and hand-computed cases."""

from __future__ import annotations

import numpy as np
import pytest

import oracles
from kenburns3d.core import ImageBuffer, ValidationError
from kenburns3d.losses import (
    GRAD_SCALES,
    IdentityFeatureExtractor,
    ORD_WEIGHT,
    PyramidFeatureExtractor,
    ZeroFeatureExtractor,
    grad_loss_depth,
    loss_color,
    loss_depth,
    loss_grad,
    loss_inpaint,
    loss_ord,
    loss_percep,
    scale_invariant_gradient,
)


def scaled_integer_map(rng: np.random.Generator, shape, unit: float = 10.0) -> np.ndarray:
    """Positive map whose values are unit * small integers.

    Multiplying by 0.1, 1, or 7 then yields pixel values with exactly
    proportional floating-point representations, turning the mathematical
    scale invariance of the normalized gradient into a bitwise identity.
    """
    return unit * rng.integers(1, 100, size=shape).astype(np.float64)


class TestScaleInvariantGradient:
    def test_constant_map_gives_zero(self):
        f = np.ones((5, 5))
        g = scale_invariant_gradient(f, 1)
        np.testing.assert_array_equal(g.gx, 0.0)
        np.testing.assert_array_equal(g.gy, 0.0)

    def test_two_pixel_row_matches_hand_value(self):
        # f = [1, 2] along x: gx = (2 - 1) / (2 + 1) = 1/3 at the left pixel.
        f = np.array([[1.0, 2.0]])
        g = scale_invariant_gradient(f, 1)
        assert g.valid_x[0, 0] and not g.valid_x[0, 1]
        assert g.gx[0, 0] == pytest.approx(1.0 / 3.0, abs=1e-15)
        assert not g.valid_y.any()  # no row h=1 below in a 1-row map

    def test_zero_map_hits_denominator_guard(self):
        f = np.zeros((4, 4))
        g = scale_invariant_gradient(f, 1)
        np.testing.assert_array_equal(g.gx, 0.0)
        np.testing.assert_array_equal(g.gy, 0.0)
        assert g.valid_x[:, :-1].all()

    def test_components_bounded_by_one(self):
        rng = np.random.default_rng(3)
        f = rng.uniform(-5, 5, size=(16, 16))
        for h in (1, 2, 4):
            g = scale_invariant_gradient(f, h)
            assert np.abs(g.gx).max() <= 1.0
            assert np.abs(g.gy).max() <= 1.0

    def test_validity_pattern(self):
        g = scale_invariant_gradient(np.ones((6, 9)), 4)
        assert g.valid_x[:, :5].all() and not g.valid_x[:, 5:].any()
        assert g.valid_y[:2, :].all() and not g.valid_y[2:, :].any()

    def test_spacing_below_one_rejected(self):
        with pytest.raises(ValidationError):
            scale_invariant_gradient(np.ones((4, 4)), 0)


class TestLossOrd:
    def test_identity_is_zero(self):
        rng = np.random.default_rng(0)
        xi = rng.random((6, 6))
        assert loss_ord(xi, xi) == 0.0

    def test_constant_offset_on_4x4(self):
        xi_hat = np.full((4, 4), 0.5)
        xi = xi_hat + 0.1
        assert loss_ord(xi, xi_hat) == pytest.approx(1.6, abs=1e-12)

    def test_matches_loop_oracle_exactly(self):
        rng = np.random.default_rng(11)
        a = rng.random((8, 8))
        b = rng.random((8, 8))
        assert loss_ord(a, b) == oracles.naive_loss_ord(a, b)

    def test_symmetry(self):
        rng = np.random.default_rng(12)
        a, b = rng.random((7, 5)), rng.random((7, 5))
        assert loss_ord(a, b) == loss_ord(b, a)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            loss_ord(np.ones((4, 4)), np.ones((4, 5)))


class TestLossGrad:
    def test_identity_is_zero(self):
        rng = np.random.default_rng(1)
        xi = rng.uniform(0.1, 2.0, (20, 20))
        assert loss_grad(xi, xi) == 0.0

    @pytest.mark.parametrize("c", [0.1, 1.0, 7.0])
    def test_scale_invariance_exact(self, c):
        rng = np.random.default_rng(2)
        xi = scaled_integer_map(rng, (20, 20))
        assert loss_grad(xi, c * xi) == 0.0

    def test_dyadic_scale_invariance_any_map(self):
        rng = np.random.default_rng(9)
        xi = rng.uniform(0.05, 3.0, (15, 17))
        for c in (0.5, 2.0, 4.0):
            assert loss_grad(xi, c * xi) == 0.0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(21)
        a = rng.uniform(0.1, 3.0, (20, 20))
        b = rng.uniform(0.1, 3.0, (20, 20))
        assert loss_grad(a, b) == pytest.approx(oracles.naive_loss_grad(a, b), abs=1e-9)

    def test_scales_beyond_map_size_contribute_nothing(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((8, 8)), rng.random((8, 8))
        assert loss_grad(a, b) == pytest.approx(
            oracles.naive_loss_grad(a, b, scales=GRAD_SCALES), abs=1e-12)


class TestLossDepth:
    def test_identity_is_zero(self):
        xi = np.linspace(0.1, 2.0, 36).reshape(6, 6)
        assert loss_depth(xi, xi) == 0.0

    def test_weight_identity_holds_exactly(self):
        # The combined loss is exactly the composition 0.0001 * ord + grad.
        rng = np.random.default_rng(31)
        a = rng.uniform(0.1, 2.0, (12, 12))
        b = rng.uniform(0.1, 2.0, (12, 12))
        assert loss_depth(a, b) == ORD_WEIGHT * loss_ord(a, b) + loss_grad(a, b)
        assert loss_depth(a, b) - loss_grad(a, b) == pytest.approx(
            ORD_WEIGHT * loss_ord(a, b), rel=1e-12)

    def test_constant_offset_on_matched_gradient_maps(self):
        # On a linear ramp, adding a constant changes loss_ord but the
        # normalized gradients differ only slightly; verify against the oracle.
        ramp = np.tile(np.linspace(1.0, 2.0, 16), (16, 1))
        shifted = ramp + 0.125
        expected = oracles.naive_loss_depth(ramp, shifted)
        assert loss_depth(ramp, shifted) == pytest.approx(expected, abs=1e-9)


class TestGradLossDepth:
    def test_gradient_at_equal_maps_is_ord_subgradient(self):
        xi = np.linspace(0.2, 3.0, 144).reshape(12, 12)
        g = grad_loss_depth(xi, xi.copy())
        # |x|' at 0 is defined as 0, and the norm term vanishes at a tie.
        np.testing.assert_array_equal(g, 0.0)

    def test_offset_maps_gradient_matches_central_differences(self):
        # A constant offset keeps every normalized-gradient difference tiny, so
        # the norm terms sit near their kink; a smaller FD step keeps the
        # comparison inside the smooth region.
        xi_hat = np.linspace(0.2, 3.0, 144).reshape(12, 12)
        xi = xi_hat + 0.01
        analytic = grad_loss_depth(xi, xi_hat)
        numeric = oracles.fd_gradient(lambda z: loss_depth(z, xi_hat), xi, step=1e-7)
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-3)
        assert rel.max() < 1e-4

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        xi = rng.uniform(0.1, 2.0, (12, 12))
        xi_hat = rng.uniform(0.1, 2.0, (12, 12))
        analytic = grad_loss_depth(xi, xi_hat)
        numeric = oracles.fd_gradient(lambda z: loss_depth(z, xi_hat), xi)
        denom = np.maximum(np.abs(numeric), 1e-3)
        rel = np.abs(analytic - numeric) / denom
        assert rel.max() < 1e-4

    def test_single_pixel_perturbation_first_order(self):
        rng = np.random.default_rng(77)
        xi = rng.uniform(0.5, 2.0, (10, 10))
        xi_hat = rng.uniform(0.5, 2.0, (10, 10))
        g = grad_loss_depth(xi, xi_hat)
        base = loss_depth(xi, xi_hat)
        delta = 1e-6
        bumped = xi.copy()
        bumped[4, 7] += delta
        change = loss_depth(bumped, xi_hat) - base
        assert change == pytest.approx(g[4, 7] * delta, abs=5 * delta * delta + 1e-14)


class TestColorAndPerceptual:
    def test_color_identity_zero(self):
        rng = np.random.default_rng(5)
        img = ImageBuffer(rng.random((4, 4, 3)))
        assert loss_color(img, img) == 0.0

    def test_black_vs_white_2x2(self):
        black = ImageBuffer(np.zeros((2, 2, 3)))
        white = ImageBuffer(np.ones((2, 2, 3)))
        assert loss_color(black, white) == 12.0

    def test_color_matches_loop_oracle_exactly(self):
        rng = np.random.default_rng(6)
        a = ImageBuffer(rng.random((5, 7, 3)))
        b = ImageBuffer(rng.random((5, 7, 3)))
        assert loss_color(a, b) == oracles.naive_loss_color(a.values, b.values)

    def test_percep_identity_zero_for_default_extractor(self):
        rng = np.random.default_rng(7)
        img = ImageBuffer(rng.random((16, 16, 3)))
        assert loss_percep(img, img, PyramidFeatureExtractor()) == 0.0

    def test_percep_identity_features_equals_squared_l2(self):
        rng = np.random.default_rng(8)
        a = ImageBuffer(rng.random((6, 6, 3)))
        b = ImageBuffer(rng.random((6, 6, 3)))
        expected = float(((a.values - b.values) ** 2).sum())
        assert loss_percep(a, b, IdentityFeatureExtractor()) == pytest.approx(expected, rel=1e-12)

    def test_percep_single_pixel_difference_positive(self):
        base = np.full((16, 16, 3), 0.5)
        changed = base.copy()
        changed[8, 8] = (0.9, 0.1, 0.4)
        value = loss_percep(ImageBuffer(base), ImageBuffer(changed), PyramidFeatureExtractor())
        assert value > 0.0

    def test_pyramid_extractor_is_deterministic_and_shaped(self):
        rng = np.random.default_rng(9)
        img = ImageBuffer(rng.random((24, 17, 3)))
        phi = PyramidFeatureExtractor()
        f1, f2 = phi.extract(img), phi.extract(img)
        assert f1.shape == (24, 17, 15)
        np.testing.assert_array_equal(f1, f2)


class TestLossInpaint:
    def test_all_identical_inputs_give_zero(self):
        rng = np.random.default_rng(10)
        img = ImageBuffer(rng.random((8, 8, 3)))
        xi = rng.uniform(0.2, 2.0, (8, 8))
        assert loss_inpaint(img, img, xi, xi, PyramidFeatureExtractor()) == 0.0

    def test_zero_features_drop_perceptual_term(self):
        rng = np.random.default_rng(11)
        a = ImageBuffer(rng.random((8, 8, 3)))
        b = ImageBuffer(rng.random((8, 8, 3)))
        xi = rng.uniform(0.2, 2.0, (8, 8))
        xi_hat = rng.uniform(0.2, 2.0, (8, 8))
        total = loss_inpaint(a, b, xi, xi_hat, ZeroFeatureExtractor())
        expected = loss_color(a, b) + ORD_WEIGHT * loss_ord(xi, xi_hat) + loss_grad(xi, xi_hat)
        assert total == pytest.approx(expected, rel=1e-15)

    def test_compositional_sum_is_exact(self):
        rng = np.random.default_rng(12)
        a = ImageBuffer(rng.random((10, 10, 3)))
        b = ImageBuffer(rng.random((10, 10, 3)))
        xi = rng.uniform(0.2, 2.0, (10, 10))
        xi_hat = rng.uniform(0.2, 2.0, (10, 10))
        phi = PyramidFeatureExtractor()
        total = loss_inpaint(a, b, xi, xi_hat, phi)
        parts = (loss_color(a, b) + loss_percep(a, b, phi)
                 + ORD_WEIGHT * loss_ord(xi, xi_hat) + loss_grad(xi, xi_hat))
        assert total == parts


class TestLossProperties:
    def test_ord_and_color_symmetry_and_nonnegativity(self):
        rng = np.random.default_rng(40)
        for _ in range(5):
            a = rng.uniform(0.0, 3.0, (9, 7))
            b = rng.uniform(0.0, 3.0, (9, 7))
            assert loss_ord(a, b) == loss_ord(b, a) >= 0.0
            ia = ImageBuffer(rng.random((6, 6, 3)))
            ib = ImageBuffer(rng.random((6, 6, 3)))
            assert loss_color(ia, ib) == loss_color(ib, ia) >= 0.0

    def test_losses_zero_iff_equal(self):
        rng = np.random.default_rng(41)
        a = rng.uniform(0.1, 2.0, (8, 8))
        assert loss_ord(a, a.copy()) == 0.0
        assert loss_depth(a, a.copy()) == 0.0
        b = a.copy()
        b[3, 3] += 1e-6
        assert loss_ord(a, b) > 0.0
        assert loss_depth(a, b) > 0.0
