"""Supervision losses on inverse depth and inpainted color, with analytic gradients.

All reductions are raw sums over contributing pixels, not means; the
multi-scale gradient loss in particular does NOT normalize by pixel count.
Callers that want per-pixel averages must divide themselves.  Sums are
accumulated with compensated (correctly rounded) summation, so results are
independent of pixel traversal order and bit-stable across thread counts.

Gradient-field border handling: a component of the normalized gradient at
spacing h is only defined where the stepped neighbor (col + h for gx,
row + h for gy) is in bounds and both endpoint pixels are valid; undefined
components are skipped, never zero-padded.  Where the denominator
|f(p)| + |f(q)| falls below EPS_DENOM the component is defined as 0 and its
derivative as 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .core import ImageBuffer, InverseDepthMap, ValidationError, resize_bilinear

EPS_DENOM = 1e-12
GRAD_SCALES = (1, 2, 4, 8, 16)
ORD_WEIGHT = 1e-4


class InverseDepthMapView:
    """Array + mask pair quacking like InverseDepthMap without re-validation."""

    __slots__ = ("values", "mask")

    def __init__(self, values: np.ndarray, mask: np.ndarray):
        self.values = values
        self.mask = mask


def _values_mask(f) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(f, (InverseDepthMap, InverseDepthMapView)):
        return f.values, f.mask
    arr = np.asarray(f, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2D raster, got shape {arr.shape}")
    return arr, np.ones(arr.shape, dtype=bool)


def _paired(a, b) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    av, am = _values_mask(a)
    bv, bm = _values_mask(b)
    if av.shape != bv.shape:
        raise ValidationError(f"dimension mismatch: {av.shape} vs {bv.shape}")
    return av, bv, am & bm


def luma(rgb: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of an (H, W, 3) array."""
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


@dataclass(frozen=True)
class GradientField:
    """Normalized finite-difference field at spacing h.

    gx steps columns (+h in j), gy steps rows (+h in i).  Components hold 0
    where their validity mask is False.
    """

    gx: np.ndarray
    gy: np.ndarray
    valid_x: np.ndarray
    valid_y: np.ndarray
    spacing: int

    @property
    def valid(self) -> np.ndarray:
        return self.valid_x & self.valid_y


def _component(values: np.ndarray, mask: np.ndarray, h: int, axis: int
               ) -> tuple[np.ndarray, np.ndarray]:
    """One normalized-gradient component over the full raster (0 where undefined)."""
    g = np.zeros(values.shape, dtype=np.float64)
    valid = np.zeros(values.shape, dtype=bool)
    if values.shape[axis] <= h:
        return g, valid
    src = tuple(slice(None, -h) if ax == axis else slice(None) for ax in range(2))
    dst = tuple(slice(h, None) if ax == axis else slice(None) for ax in range(2))
    a, b = values[src], values[dst]
    denom = np.abs(a) + np.abs(b)
    ok = mask[src] & mask[dst]
    safe = denom >= EPS_DENOM
    g[src] = np.where(ok & safe, (b - a) / np.where(safe, denom, 1.0), 0.0)
    valid[src] = ok
    return g, valid


def scale_invariant_gradient(f, h: int) -> GradientField:
    """Normalized discrete gradient: (f(q) - f(p)) / (|f(q)| + |f(p)|) at spacing h."""
    if h < 1:
        raise ValidationError(f"spacing must be >= 1, got {h}")
    values, mask = _values_mask(f)
    gx, vx = _component(values, mask, h, axis=1)
    gy, vy = _component(values, mask, h, axis=0)
    return GradientField(gx=gx, gy=gy, valid_x=vx, valid_y=vy, spacing=h)


def loss_ord(xi, xi_hat) -> float:
    """Pixel-wise L1 on inverse depth, summed over jointly valid pixels."""
    a, b, mask = _paired(xi, xi_hat)
    return math.fsum(np.abs(a - b)[mask])


def loss_grad(xi, xi_hat, scales: Sequence[int] = GRAD_SCALES) -> float:
    """Multi-scale normalized-gradient loss (L2 norm of per-pixel difference vectors)."""
    a, b, mask = _paired(xi, xi_hat)
    terms: list[np.ndarray] = []
    for h in scales:
        fa = scale_invariant_gradient(InverseDepthMapView(a, mask), h)
        fb = scale_invariant_gradient(InverseDepthMapView(b, mask), h)
        dx = np.where(fa.valid_x, fa.gx - fb.gx, 0.0)
        dy = np.where(fa.valid_y, fa.gy - fb.gy, 0.0)
        norm = np.sqrt(dx * dx + dy * dy)
        terms.append(norm[fa.valid_x | fa.valid_y])
    return math.fsum(np.concatenate(terms)) if terms else 0.0


def loss_depth(xi, xi_hat) -> float:
    """Combined depth loss: ORD_WEIGHT * loss_ord + loss_grad."""
    return ORD_WEIGHT * loss_ord(xi, xi_hat) + loss_grad(xi, xi_hat)


def grad_loss_depth(xi, xi_hat, scales: Sequence[int] = GRAD_SCALES) -> np.ndarray:
    """Analytic per-pixel derivative of loss_depth with respect to the first argument.

    Subgradient conventions: d|x|/dx = 0 at x = 0, the norm term contributes 0
    where the difference vector vanishes, and components inside the EPS_DENOM
    guard contribute 0.
    """
    a, b, mask = _paired(xi, xi_hat)
    grad = np.zeros(a.shape, dtype=np.float64)

    sign = np.sign(a - b)
    grad += ORD_WEIGHT * np.where(mask, sign, 0.0)

    for h in scales:
        comps = []
        for axis in (1, 0):
            if a.shape[axis] <= h:
                comps.append(None)
                continue
            src = tuple(slice(None, -h) if ax == axis else slice(None) for ax in range(2))
            dst = tuple(slice(h, None) if ax == axis else slice(None) for ax in range(2))
            pa, pb = a[src], a[dst]
            denom = np.abs(pa) + np.abs(pb)
            ok = mask[src] & mask[dst]
            safe = denom >= EPS_DENOM
            ga = np.where(ok & safe, (pb - pa) / np.where(safe, denom, 1.0), 0.0)
            qa, qb = b[src], b[dst]
            denom_h = np.abs(qa) + np.abs(qb)
            safe_h = denom_h >= EPS_DENOM
            gh = np.where(ok & safe_h, (qb - qa) / np.where(safe_h, denom_h, 1.0), 0.0)
            d = np.where(ok, ga - gh, 0.0)
            comps.append((axis, src, dst, pa, pb, denom, ok, safe, d))

        # Per-pixel difference norm couples the two components.
        norm_sq = np.zeros(a.shape, dtype=np.float64)
        any_valid = np.zeros(a.shape, dtype=bool)
        for comp in comps:
            if comp is None:
                continue
            axis, src, dst, pa, pb, denom, ok, safe, d = comp
            pad = np.zeros(a.shape, dtype=np.float64)
            pad[src] = d * d
            norm_sq += pad
            vmask = np.zeros(a.shape, dtype=bool)
            vmask[src] = ok
            any_valid |= vmask
        norm = np.sqrt(norm_sq)

        for comp in comps:
            if comp is None:
                continue
            axis, src, dst, pa, pb, denom, ok, safe, d = comp
            n = norm[src]
            w = np.where(ok & (n > 0), d / np.where(n > 0, n, 1.0), 0.0)
            denom_sq = np.where(safe, denom * denom, 1.0)
            diff = pb - pa
            dga = np.where(safe, (-denom - diff * np.sign(pa)) / denom_sq, 0.0)
            dgb = np.where(safe, (denom - diff * np.sign(pb)) / denom_sq, 0.0)
            grad[src] += w * dga
            grad[dst] += w * dgb

    return grad


# ---------------------------------------------------------------------------
# Color / perceptual losses
# ---------------------------------------------------------------------------

def loss_color(img: ImageBuffer, img_gt: ImageBuffer) -> float:
    """Sum of per-channel absolute color differences."""
    if img.values.shape != img_gt.values.shape:
        raise ValidationError(
            f"dimension mismatch: {img.values.shape} vs {img_gt.values.shape}")
    return math.fsum(np.abs(img.values - img_gt.values).ravel())


class FeatureExtractor(Protocol):
    """Deterministic mapping from an image to a multi-channel feature raster."""

    def extract(self, img: ImageBuffer) -> np.ndarray: ...


class IdentityFeatureExtractor:
    """Features = the image itself; makes the perceptual loss the squared L2."""

    def extract(self, img: ImageBuffer) -> np.ndarray:
        return img.values.copy()


class ZeroFeatureExtractor:
    """Features identically zero; drops the perceptual term."""

    def extract(self, img: ImageBuffer) -> np.ndarray:
        return np.zeros((img.height, img.width, 1), dtype=np.float64)


class PyramidFeatureExtractor:
    """Default feature stand-in: per-level (RGB, luma gradient) over an image pyramid.

    Each of the `levels` pyramid levels is downsampled by 2**level, its five
    channels (R, G, B, central-difference luma gradients along x and y) are
    computed, then upsampled back to the input size and concatenated, giving
    5 * levels channels at the input resolution.
    """

    def __init__(self, levels: int = 3):
        if levels < 1:
            raise ValidationError("levels must be >= 1")
        self.levels = levels

    def extract(self, img: ImageBuffer) -> np.ndarray:
        h, w = img.height, img.width
        chunks = []
        for level in range(self.levels):
            lh = max(1, h // (2 ** level))
            lw = max(1, w // (2 ** level))
            rgb = resize_bilinear(img.values, lh, lw)
            y = luma(rgb)
            if lw > 1:
                gx = np.gradient(y, axis=1)
            else:
                gx = np.zeros_like(y)
            if lh > 1:
                gy = np.gradient(y, axis=0)
            else:
                gy = np.zeros_like(y)
            feats = np.concatenate([rgb, gx[..., None], gy[..., None]], axis=2)
            chunks.append(resize_bilinear(feats, h, w))
        return np.concatenate(chunks, axis=2)


def loss_percep(img: ImageBuffer, img_gt: ImageBuffer, phi: FeatureExtractor) -> float:
    """Squared L2 distance between feature rasters."""
    fa = phi.extract(img)
    fb = phi.extract(img_gt)
    if fa.shape != fb.shape:
        raise ValidationError(f"extractor output shape mismatch: {fa.shape} vs {fb.shape}")
    d = fa - fb
    return math.fsum((d * d).ravel())


def loss_inpaint(img: ImageBuffer, img_gt: ImageBuffer, xi, xi_hat,
                 phi: FeatureExtractor) -> float:
    """Joint color+depth inpainting loss: color + perceptual + weighted depth terms."""
    return (loss_color(img, img_gt)
            + loss_percep(img, img_gt, phi)
            + ORD_WEIGHT * loss_ord(xi, xi_hat)
            + loss_grad(xi, xi_hat))
