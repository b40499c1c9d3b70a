"""Depth ingestion, segmentation-driven adjustment, and boundary-aware refinement.

Depth estimation itself is a pluggable provider: the built-ins either read a
precomputed depth file or synthesize a simple scene (planar ground plus a
fronto-parallel band) so the full pipeline runs end-to-end with zero external
model files.  The neural refiner is likewise replaced by a deterministic
image-guided upsampler behind the same interface.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy import ndimage

from .core import (
    DepthMap,
    ImageBuffer,
    SegMaskSet,
    ValidationError,
    max_dim_size,
    resize_bilinear,
    resize_nearest,
)
from . import fileio

PROVIDER_MAX_DIM = 512
REFINED_MAX_DIM = 1024
BOTTOM_STRIP_FRACTION = 0.1
REFINE_RADIUS = 4
REFINE_JUMP = 0.05          # relative depth jump that counts as a discontinuity


class DepthProvider(Protocol):
    """Maps an image to a strictly positive depth map at max dimension 512."""

    def estimate(self, img: ImageBuffer) -> DepthMap: ...


class DepthRefiner(Protocol):
    """Maps (full-res image, max-dim-512 depth) to a max-dim-1024 depth map."""

    def refine(self, img: ImageBuffer, coarse: DepthMap) -> DepthMap: ...


@dataclass(frozen=True)
class FileDepthProvider:
    """Reads depth from disk, resized to the provider's working resolution."""

    path: str | Path
    max_dim: int = PROVIDER_MAX_DIM

    def estimate(self, img: ImageBuffer) -> DepthMap:
        depth = load_depth(self.path)
        if max(depth.width, depth.height) == self.max_dim:
            return depth
        if not depth.all_valid:
            raise ValidationError(
                f"{self.path}: sparse depth cannot be resized to the working resolution")
        w, h = max_dim_size(depth.width, depth.height, self.max_dim)
        return DepthMap(resize_bilinear(depth.values, h, w))


@dataclass(frozen=True)
class SyntheticDepthProvider:
    """Deterministic stand-in scene: a ground ramp plus a fronto-parallel band.

    Depth runs from `near` at the bottom row to `far` at the top, with a
    constant-depth band occupying the central strip, mimicking a salient
    object standing on the ground.
    """

    near: float = 2.0
    far: float = 10.0
    band_depth: float = 3.0
    max_dim: int = PROVIDER_MAX_DIM

    def estimate(self, img: ImageBuffer) -> DepthMap:
        w, h = max_dim_size(img.width, img.height, self.max_dim)
        rows = np.linspace(self.far, self.near, h)[:, None]
        values = np.broadcast_to(rows, (h, w)).copy()
        r0, r1 = int(h * 0.35), int(h * 0.85)
        c0, c1 = int(w * 0.40), int(w * 0.65)
        values[r0:r1, c0:c1] = self.band_depth
        return DepthMap(values)


# ---------------------------------------------------------------------------
# Depth adjustment from instance masks
# ---------------------------------------------------------------------------

def adjust_depth(depth: DepthMap, masks: SegMaskSet) -> DepthMap:
    """Flatten each salient instance to the smallest depth found near its bottom.

    The bottom strip is the lowest 10% of the instance's bounding-box height
    (at least one row); the strip's minimum depth is assigned to the whole
    mask, approximating an upright frontal plane standing on the ground.
    Instances are processed farthest-first so that, were masks ever to
    overlap, nearer objects win.  Background and non-salient pixels are
    untouched.
    """
    if (depth.height, depth.width) != (masks.height, masks.width):
        raise ValidationError(
            f"depth {depth.height}x{depth.width} and masks "
            f"{masks.height}x{masks.width} disagree")

    assignments: list[tuple[float, int, np.ndarray]] = []
    for instance in sorted(masks.salient):
        mask = masks.labels == instance
        pixel_rows = np.nonzero(mask.any(axis=1))[0]
        if pixel_rows.size == 0:
            warnings.warn(f"salient instance {instance} has no pixels; skipped",
                          RuntimeWarning, stacklevel=2)
            continue
        r0, r1 = int(pixel_rows[0]), int(pixel_rows[-1])
        strip_rows = max(1, int(np.ceil((r1 - r0 + 1) * BOTTOM_STRIP_FRACTION)))
        strip = mask.copy()
        strip[: r1 - strip_rows + 1, :] = False
        strip &= depth.mask
        candidates = depth.values[strip]
        if candidates.size == 0:
            candidates = depth.values[mask & depth.mask]
        if candidates.size == 0:
            warnings.warn(f"salient instance {instance} has no valid depth; skipped",
                          RuntimeWarning, stacklevel=2)
            continue
        assignments.append((float(candidates.min()), instance, mask))

    out = depth.values.copy()
    for value, _, mask in sorted(assignments, key=lambda a: -a[0]):
        out[mask] = value
    return DepthMap(out, depth.mask)


# ---------------------------------------------------------------------------
# Default refinement: bilinear upsample + color-guided boundary snap
# ---------------------------------------------------------------------------

def refine_default(img: ImageBuffer, coarse: DepthMap,
                   target_max_dim: int = REFINED_MAX_DIM,
                   radius: int = REFINE_RADIUS,
                   jump: float = REFINE_JUMP) -> DepthMap:
    """Upsample depth to target_max_dim and snap boundary pixels to color sides.

    Within `radius` pixels of a depth discontinuity (relative jump > `jump`),
    each pixel adopts the mean depth of whichever local depth side (near/far
    split at the window mid-depth) has the closer mean color (L2 in RGB).
    Pixels farther from any discontinuity keep the plain bilinear upsample.
    """
    if not coarse.all_valid:
        raise ValidationError("refinement requires a dense coarse depth map")
    if max(img.width, img.height) < target_max_dim:
        raise ValidationError(
            f"guidance image max dimension {max(img.width, img.height)} "
            f"is below the target {target_max_dim}")
    out_w, out_h = max_dim_size(img.width, img.height, target_max_dim)
    depth_up = resize_bilinear(coarse.values, out_h, out_w)
    guide = resize_bilinear(img.values, out_h, out_w)

    dx = np.abs(np.diff(depth_up, axis=1))
    dy = np.abs(np.diff(depth_up, axis=0))
    edge = np.zeros(depth_up.shape, dtype=bool)
    jump_x = dx > jump * np.minimum(depth_up[:, 1:], depth_up[:, :-1])
    jump_y = dy > jump * np.minimum(depth_up[1:, :], depth_up[:-1, :])
    edge[:, 1:] |= jump_x
    edge[:, :-1] |= jump_x
    edge[1:, :] |= jump_y
    edge[:-1, :] |= jump_y
    if not edge.any():
        return DepthMap(depth_up)
    near_edge = ndimage.distance_transform_edt(~edge) <= radius

    size = 2 * radius + 1
    d_lo = ndimage.minimum_filter(depth_up, size=size, mode="nearest")
    d_hi = ndimage.maximum_filter(depth_up, size=size, mode="nearest")
    mid = 0.5 * (d_lo + d_hi)
    near_side = depth_up <= mid

    def side_means(side: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        count = ndimage.uniform_filter(side.astype(np.float64), size=size, mode="nearest")
        safe = np.maximum(count, 1e-12)
        depth_mean = ndimage.uniform_filter(depth_up * side, size=size, mode="nearest") / safe
        color_mean = np.stack([
            ndimage.uniform_filter(guide[..., c] * side, size=size, mode="nearest") / safe
            for c in range(3)
        ], axis=2)
        return depth_mean, color_mean, count

    def side_stats(side: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        # Interpolated transition pixels sit ON the discontinuity; excluding
        # them keeps each side's statistics at its surface's values.  Fall back
        # to the unrestricted side where the window holds nothing else.
        clean_depth, clean_color, clean_count = side_means(side & ~edge)
        any_depth, any_color, any_count = side_means(side)
        has_clean = (clean_count * size * size) > 0.5
        depth_mean = np.where(has_clean, clean_depth, any_depth)
        color_mean = np.where(has_clean[..., None], clean_color, any_color)
        return depth_mean, color_mean, any_count

    near_depth, near_color, near_count = side_stats(near_side)
    far_depth, far_color, far_count = side_stats(~near_side)
    dist_near = ((guide - near_color) ** 2).sum(axis=2)
    dist_far = ((guide - far_color) ** 2).sum(axis=2)
    dist_near[near_count * size * size < 0.5] = np.inf
    dist_far[far_count * size * size < 0.5] = np.inf
    snapped = np.where(dist_near <= dist_far, near_depth, far_depth)

    refined = np.where(near_edge, snapped, depth_up)
    # Range invariant: never invent values outside the coarse depth's range.
    refined = np.clip(refined, coarse.values.min(), coarse.values.max())
    return DepthMap(refined)


@dataclass(frozen=True)
class DefaultRefiner:
    target_max_dim: int = REFINED_MAX_DIM

    def refine(self, img: ImageBuffer, coarse: DepthMap) -> DepthMap:
        return refine_default(img, coarse, self.target_max_dim)


@dataclass(frozen=True)
class FileDepthRefiner:
    """Serves an externally refined depth map from disk."""

    path: str | Path

    def refine(self, img: ImageBuffer, coarse: DepthMap) -> DepthMap:
        return load_depth(self.path)


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------

def load_depth(path: str | Path) -> DepthMap:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"depth file not found: {path}")
    return fileio.read_depth(path)


def load_masks(path: str | Path) -> SegMaskSet:
    """Read a label-map PNG and its {"salient": [ids]} sidecar.

    A missing sidecar marks every instance salient (the upstream selection of
    semantically important classes is assumed already applied).  Non-contiguous
    labels are compacted, remapping the sidecar ids along the way.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mask file not found: {path}")
    labels = fileio.read_label_png(path)
    meta_path = fileio.sidecar_path(path)
    present = np.unique(labels)
    if meta_path.exists():
        doc = json.loads(meta_path.read_text())
        salient = [int(s) for s in doc.get("salient", [])]
    else:
        salient = [int(v) for v in present if v != 0]
    labels, salient = compact_labels(labels, salient)
    return SegMaskSet(labels, salient)


def compact_labels(labels: np.ndarray, salient: list[int]) -> tuple[np.ndarray, list[int]]:
    """Relabel to a contiguous 0..K range, dropping salient ids that vanished."""
    present = np.unique(labels)
    if 0 not in present:
        present = np.concatenate([[0], present])
    mapping = {int(old): new for new, old in enumerate(present)}
    lut = np.zeros(int(present.max()) + 1, dtype=np.int32)
    for old, new in mapping.items():
        lut[old] = new
    return lut[labels], sorted(mapping[s] for s in salient if s in mapping and mapping[s] != 0)


def resize_masks(masks: SegMaskSet, height: int, width: int) -> SegMaskSet:
    """Nearest-neighbor label resize; instances that disappear lose salience."""
    if (masks.height, masks.width) == (height, width):
        return masks
    labels = resize_nearest(masks.labels, height, width)
    labels, salient = compact_labels(labels, sorted(masks.salient))
    return SegMaskSet(labels, salient)
