"""Disocclusion handling: context features, joint color+depth inpainting, and
point-cloud extension at extreme views.

The default inpainter is deterministic and works in two stages.  Pinhole
cracks (holes flanked by opposing neighbors on one continuous surface, the
residue of z-buffer filtering) are first closed at that surface's depth.
Every remaining connected hole is a disocclusion and is filled by solving the
discrete Laplace equation with Dirichlet values taken only from the
*background* side of its boundary: boundary pixels are split into background
(farther) and foreground (nearer) by 1D 2-means on their depths, and
foreground boundary pixels act as no-flux (Neumann) walls so the fill always
continues the background, never the occluder.  Laplace-inpainted depth
therefore obeys the discrete maximum principle over the background boundary
values.

Learned inpainting can be slotted in through the Inpainter interface, either
programmatically or by loading precomputed rasters from files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import splu

from .core import CameraPath, CameraPose, DepthMap, ImageBuffer, Intrinsics, KenBurnsError
from .losses import luma
from .render import PointCloud, RenderConfig, RenderFrame, render
from . import fileio

CONTEXT_CHANNELS = 8
EDGE_INDICATOR_THRESHOLD = 0.05
BG_SPLIT_MIN_SPREAD = 0.05   # relative depth spread below which a boundary is all background
FG_CONSISTENCY_SLACK = 1e-6

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class InpaintConsistencyError(KenBurnsError):
    """The inpainted depth failed the background-consistency check."""


class ContextExtractor(Protocol):
    """Deterministic per-pixel feature extractor; output spatial dims equal input."""

    channels: int

    def extract(self, img: ImageBuffer) -> np.ndarray: ...


class DefaultContextExtractor:
    """Eight hand-built channels describing each pixel's neighborhood.

    Channels: R, G, B, |dx luma|, |dy luma|, 3x3 mean luma, 3x3 std luma, and
    a binary edge indicator (gradient magnitude above a fixed threshold).
    """

    channels = CONTEXT_CHANNELS

    def extract(self, img: ImageBuffer) -> np.ndarray:
        rgb = img.values
        y = luma(rgb)
        gx = np.gradient(y, axis=1) if img.width > 1 else np.zeros_like(y)
        gy = np.gradient(y, axis=0) if img.height > 1 else np.zeros_like(y)
        mean = ndimage.uniform_filter(y, size=3, mode="nearest")
        sq_mean = ndimage.uniform_filter(y * y, size=3, mode="nearest")
        std = np.sqrt(np.maximum(sq_mean - mean * mean, 0.0))
        edge = (np.hypot(gx, gy) > EDGE_INDICATOR_THRESHOLD).astype(np.float64)
        stack = np.stack([rgb[..., 0], rgb[..., 1], rgb[..., 2],
                          np.abs(gx), np.abs(gy), mean, std, edge], axis=2)
        return stack.astype(np.float32)


def extract_context_default(img: ImageBuffer) -> np.ndarray:
    return DefaultContextExtractor().extract(img)


# ---------------------------------------------------------------------------
# Inpainting
# ---------------------------------------------------------------------------

@dataclass
class HoleDiagnostics:
    pixels: int
    background_boundary: int
    foreground_boundary: int
    fallback_all_boundary: bool = False


@dataclass
class InpaintResult:
    color: ImageBuffer
    depth: DepthMap              # dense: every pixel valid after inpainting
    diagnostics: list[HoleDiagnostics] = field(default_factory=list)
    crack_pixels: int = 0        # holes closed by the same-surface crack rule


class Inpainter(Protocol):
    def inpaint(self, frame: RenderFrame) -> InpaintResult: ...


_CRACK_PAIRS = (((0, -1), (0, 1)), ((-1, 0), (1, 0)),
                ((-1, -1), (1, 1)), ((-1, 1), (1, -1)))


def _fill_pinhole_cracks(holes: np.ndarray, depth: np.ndarray, color: np.ndarray,
                         rel_tol: float = 0.05, max_passes: int = 4) -> int:
    """Close hole pixels that puncture a single surface, in place.

    A hole pixel flanked by an opposing pair of valid neighbors whose depths
    agree within rel_tol lies on one continuous surface (a z-filter crack, not
    a disocclusion); it takes that pair's mean depth and color.  When several
    pairs qualify, the nearest surface wins, since it would occlude the others.
    Multi-pixel-wide cracks close over successive synchronous passes.
    """
    h, w = holes.shape
    filled_total = 0
    valid = ~holes
    for _ in range(max_passes):
        if not holes.any():
            break
        padded_d = np.full((h + 2, w + 2), np.inf)
        padded_d[1:-1, 1:-1] = np.where(valid, depth, np.inf)
        padded_c = np.zeros((h + 2, w + 2, 3))
        padded_c[1:-1, 1:-1] = color
        best_depth = np.full((h, w), np.inf)
        best_color = np.zeros((h, w, 3))
        for (da, db) in _CRACK_PAIRS:
            d1 = padded_d[1 + da[0]:h + 1 + da[0], 1 + da[1]:w + 1 + da[1]]
            d2 = padded_d[1 + db[0]:h + 1 + db[0], 1 + db[1]:w + 1 + db[1]]
            c1 = padded_c[1 + da[0]:h + 1 + da[0], 1 + da[1]:w + 1 + da[1]]
            c2 = padded_c[1 + db[0]:h + 1 + db[0], 1 + db[1]:w + 1 + db[1]]
            both = holes & np.isfinite(d1) & np.isfinite(d2)
            gap = np.where(both, np.abs(np.where(both, d1, 0.0) - np.where(both, d2, 0.0)),
                           np.inf)
            same_surface = both & (gap <= rel_tol * np.minimum(d1, d2))
            pair_depth = 0.5 * (d1 + d2)
            better = same_surface & (pair_depth < best_depth)
            best_depth = np.where(better, pair_depth, best_depth)
            best_color = np.where(better[..., None], 0.5 * (c1 + c2), best_color)
        hit = np.isfinite(best_depth) & holes
        if not hit.any():
            break
        depth[hit] = best_depth[hit]
        color[hit] = best_color[hit]
        holes[hit] = False
        valid[hit] = True
        filled_total += int(hit.sum())
    return filled_total


def _split_boundary_depths(depths: np.ndarray) -> np.ndarray:
    """Background mask over boundary depths: the farther of two 1D 2-means clusters.

    A boundary whose relative depth spread is below BG_SPLIT_MIN_SPREAD is a
    single surface and counts entirely as background.
    """
    lo, hi = float(depths.min()), float(depths.max())
    if hi - lo < BG_SPLIT_MIN_SPREAD * hi:
        return np.ones(depths.shape, dtype=bool)
    c_lo, c_hi = lo, hi
    assign = depths >= 0.5 * (c_lo + c_hi)
    for _ in range(100):
        if assign.all() or not assign.any():
            break
        n_lo, n_hi = float(depths[~assign].mean()), float(depths[assign].mean())
        new_assign = np.abs(depths - n_hi) < np.abs(depths - n_lo)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    if assign.all() or not assign.any():
        return np.ones(depths.shape, dtype=bool)
    return assign


def _fill_hole(hole: np.ndarray, dirichlet_mask: np.ndarray, depth: np.ndarray,
               color: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve the 5-point Laplace equation on `hole` pixels for depth and color.

    Neighbors inside the hole couple normally; neighbors under dirichlet_mask
    contribute boundary values to the right-hand side; all other neighbors are
    no-flux walls.  One factorization serves all four channels.
    """
    h, w = hole.shape
    idx = -np.ones((h, w), dtype=np.int64)
    rows, cols = np.nonzero(hole)
    n = rows.size
    idx[rows, cols] = np.arange(n)

    diag = np.zeros(n)
    off_i: list[np.ndarray] = []
    off_j: list[np.ndarray] = []
    rhs = np.zeros((n, 4))
    stacked = np.concatenate([depth[..., None], color], axis=2)

    for di, dj in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        ni, nj = rows + di, cols + dj
        inside = (ni >= 0) & (ni < h) & (nj >= 0) & (nj < w)
        ni_c, nj_c = np.clip(ni, 0, h - 1), np.clip(nj, 0, w - 1)
        is_hole = inside & hole[ni_c, nj_c]
        is_dirichlet = inside & dirichlet_mask[ni_c, nj_c]
        diag += (is_hole | is_dirichlet).astype(np.float64)
        off_i.append(np.arange(n)[is_hole])
        off_j.append(idx[ni_c[is_hole], nj_c[is_hole]])
        rhs[is_dirichlet] += stacked[ni_c[is_dirichlet], nj_c[is_dirichlet]]

    # A hole pixel always has at least one hole or Dirichlet neighbor (singleton
    # holes classify part of their boundary as background), so diag >= 1; the
    # floor is insurance against degenerate 1-pixel rasters.
    diag = np.maximum(diag, 1e-12)
    a = sparse.coo_matrix(
        (np.concatenate([diag, -np.ones(sum(x.size for x in off_i))]),
         (np.concatenate([np.arange(n)] + off_i),
          np.concatenate([np.arange(n)] + off_j))),
        shape=(n, n)).tocsc()
    solution = splu(a).solve(rhs)
    return solution[:, 0], solution[:, 1:]


@dataclass
class LaplaceInpainter:
    """Deterministic joint color+depth inpainter (see module docstring)."""

    check_consistency: bool = True

    def inpaint(self, frame: RenderFrame) -> InpaintResult:
        holes = frame.hole_mask.copy()
        color = frame.color.values.copy()
        depth = frame.depth.values.copy()
        if not holes.any():
            return InpaintResult(color=ImageBuffer(color),
                                 depth=DepthMap(depth, None), diagnostics=[])

        crack_pixels = _fill_pinhole_cracks(holes, depth, color)
        if not holes.any():
            return InpaintResult(color=ImageBuffer(np.clip(color, 0.0, 1.0)),
                                 depth=DepthMap(depth, None), diagnostics=[],
                                 crack_pixels=crack_pixels)

        valid = ~holes
        labels, count = ndimage.label(holes, structure=_FOUR_CONNECTED)
        diagnostics = []
        for comp in range(1, count + 1):
            hole = labels == comp
            boundary = ndimage.binary_dilation(hole, structure=_FOUR_CONNECTED) & valid
            b_rows, b_cols = np.nonzero(boundary)
            if b_rows.size == 0:
                # No valid neighbors at all: fall back to global constants.
                fallback_depth = float(depth[valid].mean()) if valid.any() else 1.0
                fallback_color = (color[valid].mean(axis=0) if valid.any()
                                  else np.array([0.5, 0.5, 0.5]))
                depth[hole] = fallback_depth
                color[hole] = fallback_color
                diagnostics.append(HoleDiagnostics(
                    pixels=int(hole.sum()), background_boundary=0,
                    foreground_boundary=0, fallback_all_boundary=True))
                continue

            b_depths = depth[b_rows, b_cols]
            bg = _split_boundary_depths(b_depths)
            fallback = not bg.any()
            if fallback:
                bg = np.ones(b_depths.shape, dtype=bool)
            dirichlet = np.zeros(holes.shape, dtype=bool)
            dirichlet[b_rows[bg], b_cols[bg]] = True

            filled_depth, filled_color = _fill_hole(hole, dirichlet, depth, color)
            depth[hole] = filled_depth
            color[hole] = filled_color

            n_bg = int(bg.sum())
            n_fg = int(b_depths.size - n_bg)
            diagnostics.append(HoleDiagnostics(
                pixels=int(hole.sum()), background_boundary=n_bg,
                foreground_boundary=n_fg, fallback_all_boundary=fallback))

            if self.check_consistency and n_fg > 0:
                fg_max = float(b_depths[~bg].max())
                if filled_depth.min() <= fg_max - FG_CONSISTENCY_SLACK:
                    raise InpaintConsistencyError(
                        f"inpainted depth {filled_depth.min()} does not stay behind "
                        f"the foreground boundary at {fg_max}")

        color = np.clip(color, 0.0, 1.0)
        return InpaintResult(color=ImageBuffer(color), depth=DepthMap(depth, None),
                             diagnostics=diagnostics, crack_pixels=crack_pixels)


@dataclass(frozen=True)
class FileInpainter:
    """Serves precomputed inpainting rasters (color PNG + depth PFM) from disk.

    Non-hole pixels still pass through from the rendered frame untouched; only
    hole pixels take the file contents.
    """

    color_path: str | Path
    depth_path: str | Path

    def inpaint(self, frame: RenderFrame) -> InpaintResult:
        ext_color = fileio.read_png(self.color_path)
        ext_depth = fileio.read_depth(self.depth_path)
        if (ext_color.height, ext_color.width) != frame.hole_mask.shape:
            raise KenBurnsError(
                f"{self.color_path}: inpainting raster does not match the frame size")
        if (ext_depth.height, ext_depth.width) != frame.hole_mask.shape:
            raise KenBurnsError(
                f"{self.depth_path}: inpainting raster does not match the frame size")
        holes = frame.hole_mask
        color = np.where(holes[..., None], ext_color.values, frame.color.values)
        depth = np.where(holes, ext_depth.values, frame.depth.values)
        return InpaintResult(color=ImageBuffer(color), depth=DepthMap(depth, None),
                             diagnostics=[])


# ---------------------------------------------------------------------------
# Point-cloud extension
# ---------------------------------------------------------------------------

def complete_frame_color(frame: RenderFrame, inpainter: Inpainter | None = None) -> ImageBuffer:
    """Display-ready color for a frame: residual holes closed by the inpainter.

    Rendering an extended cloud can still leave pinhole cracks at poses between
    the extension views (a 1-pixel splat cannot cover every magnification
    phase); output paths close them deterministically here.  Hole-free frames
    pass through bit-exactly.
    """
    if frame.hole_count == 0:
        return frame.color
    inpainter = inpainter or LaplaceInpainter()
    return inpainter.inpaint(frame).color


def extend_cloud(cloud: PointCloud, pose: CameraPose, intrinsics: Intrinsics,
                 out_size: tuple[int, int],
                 inpainter: Inpainter | None = None,
                 context_extractor: ContextExtractor | None = None,
                 config: RenderConfig = RenderConfig(),
                 threads: int = 1) -> PointCloud:
    """Render at `pose`, inpaint the holes, and append the new scene points.

    Original points are untouched; the new point count equals the hole pixel
    count of the render.  A hole-free render returns the cloud unchanged.
    """
    inpainter = inpainter or LaplaceInpainter()
    context_extractor = context_extractor or DefaultContextExtractor()
    frame = render(cloud, pose, intrinsics, out_size, config, threads)
    if frame.hole_count == 0:
        return cloud
    result = inpainter.inpaint(frame)

    rows, cols = np.nonzero(frame.hole_mask)
    if cloud.context_channels > 0:
        context = context_extractor.extract(result.color)
        if context.shape[2] != cloud.context_channels:
            raise KenBurnsError(
                f"context extractor yields {context.shape[2]} channels but the "
                f"cloud carries {cloud.context_channels}")
        ctx = context[rows, cols]
    else:
        ctx = np.zeros((rows.size, 0), dtype=np.float32)

    z = result.depth.values[rows, cols]
    x = z * ((cols + 0.5) - intrinsics.cx) / intrinsics.fx
    y = z * ((rows + 0.5) - intrinsics.cy) / intrinsics.fy
    positions = np.stack([x, y, z], axis=1) + pose.as_array()
    colors = result.color.values[rows, cols]
    return cloud.appended(positions, colors, ctx)


def extend_for_path(cloud: PointCloud, path: CameraPath, intrinsics: Intrinsics,
                    out_size: tuple[int, int],
                    inpainter: Inpainter | None = None,
                    context_extractor: ContextExtractor | None = None,
                    config: RenderConfig = RenderConfig(),
                    threads: int = 1) -> PointCloud:
    """Extend at the path's extreme views (start first, then end)."""
    for pose in (path.start, path.end):
        cloud = extend_cloud(cloud, pose, intrinsics, out_size,
                             inpainter, context_extractor, config, threads)
    return cloud


def extend_for_interactive(cloud: PointCloud, bounds: Sequence[CameraPose],
                           intrinsics: Intrinsics, out_size: tuple[int, int],
                           inpainter: Inpainter | None = None,
                           context_extractor: ContextExtractor | None = None,
                           config: RenderConfig = RenderConfig(),
                           threads: int = 1,
                           sweeps: int = 1) -> PointCloud:
    """Extend at each extreme pose in order (left, right, top, bottom).

    `sweeps` repeats the whole sequence; one pass per extreme view is the
    default, additional sweeps close residual cracks on scenes that need them.
    """
    for _ in range(max(1, sweeps)):
        for pose in bounds:
            cloud = extend_cloud(cloud, pose, intrinsics, out_size,
                                 inpainter, context_extractor, config, threads)
    return cloud
