"""Point-cloud construction and z-buffered novel-view rasterization.

Geometry conventions (see core): pixel (i, j) unprojects through its center
(j + 0.5, i + 0.5); the camera is translation-only, so a point p seen from
pose t projects to

    u = fx * (p.x - tx) / (p.z - tz) + cx,   v = fy * (p.y - ty) / (p.z - tz) + cy

with camera-space depth p.z - tz.  Every point rasterizes to the single pixel
containing its projection (floor of u, v).  Visibility is nearest-depth with
ties broken by the smaller source index, which makes rendering bit-identical
across runs and thread counts.

Shine-through cracks (background leaking between sparse foreground points
under forward motion) are removed by filtering the z-buffer between the depth
pass and the resolve pass: crack pixels take the mean depth of their closer
opposing neighbors, and points far behind the filtered value are culled.
Culled-away pixels become holes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import (
    CameraPath,
    CameraPose,
    DepthMap,
    ImageBuffer,
    Intrinsics,
    ValidationError,
)

ORIGIN_ORIGINAL = 0
ORIGIN_INPAINTED = 1

_MIN_CAMERA_DEPTH = 1e-9


@dataclass(frozen=True)
class RenderConfig:
    """Tunables for crack handling; the defaults are the package-wide contract."""

    rho_crack: float = 0.03   # neighbors this much (relatively) closer flag a crack
    rho_cull: float = 0.01    # points this far (relatively) behind the z-buffer are culled
    crack_pairs: int = 4      # opposing neighbor pairs tested: 2 = axis-aligned, 4 = +diagonals
    filter_cracks: bool = True  # False renders the raw z-buffer (regression comparisons)


@dataclass(frozen=True)
class ScenePoint:
    position: np.ndarray
    color: np.ndarray
    context: np.ndarray
    origin: int
    source_index: int


class PointCloud:
    """Struct-of-arrays point cloud with stable integer ids.

    Original points (one per valid source pixel) come first in source-index
    order; extension only ever appends, so ids never change.
    """

    def __init__(self, positions: np.ndarray, colors: np.ndarray, context: np.ndarray,
                 origin: np.ndarray, source_index: np.ndarray,
                 intrinsics: Intrinsics, source_size: tuple[int, int],
                 omitted_count: int = 0):
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        n = positions.shape[0]
        colors = np.asarray(colors, dtype=np.float64).reshape(n, 3)
        context = np.asarray(context, dtype=np.float32).reshape(n, -1)
        origin = np.asarray(origin, dtype=np.uint8).reshape(n)
        source_index = np.asarray(source_index, dtype=np.int64).reshape(n)
        if not np.all(np.isfinite(positions)):
            raise ValidationError("point positions must be finite")
        # Strictly increasing ids keep storage order equal to id order, which
        # the z-buffer tie rule (smaller source index wins) relies on.
        if n > 1 and np.any(np.diff(source_index) <= 0):
            raise ValidationError("source indices must be unique and strictly increasing")
        w, h = source_size
        n_original = int(np.count_nonzero(origin == ORIGIN_ORIGINAL))
        if n_original + omitted_count != w * h:
            raise ValidationError(
                f"original point count {n_original} + omitted {omitted_count} "
                f"!= source pixel count {w * h}")
        self.positions = positions
        self.colors = colors
        self.context = context
        self.origin = origin
        self.source_index = source_index
        self.intrinsics = intrinsics
        self.source_size = source_size
        self.omitted_count = omitted_count

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def context_channels(self) -> int:
        return self.context.shape[1]

    def point(self, i: int) -> ScenePoint:
        return ScenePoint(position=self.positions[i], color=self.colors[i],
                          context=self.context[i], origin=int(self.origin[i]),
                          source_index=int(self.source_index[i]))

    def appended(self, positions: np.ndarray, colors: np.ndarray,
                 context: np.ndarray) -> "PointCloud":
        """New cloud with extra inpainted points appended after the existing ids."""
        k = positions.shape[0]
        next_id = int(self.source_index.max()) + 1 if len(self) else 0
        new_ids = np.arange(next_id, next_id + k, dtype=np.int64)
        return PointCloud(
            positions=np.concatenate([self.positions, positions]),
            colors=np.concatenate([self.colors, colors]),
            context=np.concatenate([self.context, np.asarray(context, dtype=np.float32)]),
            origin=np.concatenate([self.origin, np.full(k, ORIGIN_INPAINTED, dtype=np.uint8)]),
            source_index=np.concatenate([self.source_index, new_ids]),
            intrinsics=self.intrinsics,
            source_size=self.source_size,
            omitted_count=self.omitted_count,
        )


@dataclass
class RenderFrame:
    """A rasterized novel view; hole pixels carry no color, depth, or winner."""

    color: ImageBuffer
    depth: DepthMap
    context: np.ndarray
    hole_mask: np.ndarray
    winner_index: np.ndarray

    def __post_init__(self):
        holes = self.hole_mask
        if not np.array_equal(holes, self.winner_index < 0):
            raise ValidationError("hole mask must match missing winners")
        if not np.array_equal(holes, ~self.depth.mask):
            raise ValidationError("hole mask must match invalid depth")

    @property
    def hole_count(self) -> int:
        return int(np.count_nonzero(self.hole_mask))


def build_point_cloud(img: ImageBuffer, depth: DepthMap, intrinsics: Intrinsics,
                      context: np.ndarray | None = None) -> PointCloud:
    """Unproject one point per valid pixel; invalid-depth pixels are omitted."""
    if (img.height, img.width) != (depth.height, depth.width):
        raise ValidationError(
            f"image {img.height}x{img.width} and depth {depth.height}x{depth.width} disagree")
    h, w = depth.height, depth.width
    if context is None:
        context = np.zeros((h, w, 0), dtype=np.float32)
    if context.shape[:2] != (h, w):
        raise ValidationError("context raster dimensions must match the image")

    ii, jj = np.mgrid[0:h, 0:w]
    valid = depth.mask.ravel()
    ii = ii.ravel()[valid]
    jj = jj.ravel()[valid]
    d = depth.values.ravel()[valid]
    x = d * ((jj + 0.5) - intrinsics.cx) / intrinsics.fx
    y = d * ((ii + 0.5) - intrinsics.cy) / intrinsics.fy
    positions = np.stack([x, y, d], axis=1)
    colors = img.values.reshape(-1, 3)[valid]
    ctx = context.reshape(h * w, -1)[valid]
    source_index = np.flatnonzero(valid).astype(np.int64)
    omitted = h * w - int(valid.sum())
    return PointCloud(positions=positions, colors=colors, context=ctx,
                      origin=np.zeros(len(d), dtype=np.uint8),
                      source_index=source_index, intrinsics=intrinsics,
                      source_size=(w, h), omitted_count=omitted)


# ---------------------------------------------------------------------------
# Z-buffer crack filtering
# ---------------------------------------------------------------------------

_PAIR_OFFSETS = (
    ((0, -1), (0, 1)),    # W / E
    ((-1, 0), (1, 0)),    # N / S
    ((-1, -1), (1, 1)),   # NW / SE
    ((-1, 1), (1, -1)),   # NE / SW
)


def zfilter(zbuf: np.ndarray, rho_crack: float = 0.03, crack_pairs: int = 4) -> np.ndarray:
    """Fill shine-through cracks in a z-buffer (invalid pixels encoded as +inf).

    A pixel is a crack when, for any tested opposing neighbor pair, both
    neighbors are valid and both are closer than (1 - rho_crack) times the
    pixel's own depth.  Cracks take the mean depth of all such closer
    neighbors; everything else (including invalid pixels) passes through.
    """
    z = np.asarray(zbuf, dtype=np.float64)
    if z.ndim != 2:
        raise ValidationError(f"z-buffer must be 2D, got shape {z.shape}")
    h, w = z.shape
    padded = np.full((h + 2, w + 2), np.inf)
    padded[1:-1, 1:-1] = z
    center_valid = np.isfinite(z)
    threshold = (1.0 - rho_crack) * z

    neighbor_sum = np.zeros((h, w))
    neighbor_count = np.zeros((h, w))
    for (da, db) in _PAIR_OFFSETS[:crack_pairs]:
        n1 = padded[1 + da[0]:h + 1 + da[0], 1 + da[1]:w + 1 + da[1]]
        n2 = padded[1 + db[0]:h + 1 + db[0], 1 + db[1]:w + 1 + db[1]]
        pair_hit = (center_valid
                    & np.isfinite(n1) & np.isfinite(n2)
                    & (n1 < threshold) & (n2 < threshold))
        neighbor_sum += np.where(pair_hit, n1 + n2, 0.0)
        neighbor_count += np.where(pair_hit, 2.0, 0.0)

    crack = neighbor_count > 0
    out = z.copy()
    out[crack] = neighbor_sum[crack] / neighbor_count[crack]
    return out


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _project(cloud: PointCloud, pose: CameraPose, intrinsics: Intrinsics,
             out_size: tuple[int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-point pixel index (-1 if off-raster/behind camera) and camera depth."""
    w, h = out_size
    rel = cloud.positions - pose.as_array()
    zc = rel[:, 2]
    front = zc > _MIN_CAMERA_DEPTH
    safe_z = np.where(front, zc, 1.0)
    u = intrinsics.fx * rel[:, 0] / safe_z + intrinsics.cx
    v = intrinsics.fy * rel[:, 1] / safe_z + intrinsics.cy
    inside = front & (u >= 0) & (u < w) & (v >= 0) & (v < h)
    px = np.floor(np.where(inside, u, 0.0)).astype(np.int64)
    py = np.floor(np.where(inside, v, 0.0)).astype(np.int64)
    ok = inside & (px >= 0) & (px < w) & (py >= 0) & (py < h)
    pix = np.where(ok, py * w + px, -1)
    return pix, zc, ok


def _shard_slices(n: int, shards: int) -> list[slice]:
    bounds = np.linspace(0, n, shards + 1).astype(np.int64)
    return [slice(int(bounds[k]), int(bounds[k + 1])) for k in range(shards)
            if bounds[k + 1] > bounds[k]]


def _shard_zbuffer(pix: np.ndarray, zc: np.ndarray, ok: np.ndarray, base: int,
                   n_pixels: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel (min depth, min index) for one contiguous shard of points."""
    zbuf = np.full(n_pixels, np.inf)
    ibuf = np.full(n_pixels, np.iinfo(np.int64).max, dtype=np.int64)
    sel = np.flatnonzero(ok)
    if sel.size == 0:
        return zbuf, ibuf
    p = pix[sel]
    z = zc[sel]
    # Stable sort by (pixel, depth) keeps ascending point index on ties, which
    # is exactly the smaller-source-index tie rule within a shard.
    order = np.lexsort((z, p))
    p_sorted = p[order]
    first = np.ones(p_sorted.size, dtype=bool)
    first[1:] = p_sorted[1:] != p_sorted[:-1]
    winners = sel[order[first]]
    zbuf[p_sorted[first]] = zc[winners]
    ibuf[p_sorted[first]] = winners + base
    return zbuf, ibuf


def _merge_buffers(buffers: list[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Lexicographic (depth, index) minimum across shards; order independent."""
    zbuf, ibuf = buffers[0]
    for z2, i2 in buffers[1:]:
        take = (z2 < zbuf) | ((z2 == zbuf) & (i2 < ibuf))
        zbuf = np.where(take, z2, zbuf)
        ibuf = np.where(take, i2, ibuf)
    return zbuf, ibuf


def _zbuffer(pix: np.ndarray, zc: np.ndarray, ok: np.ndarray, n_pixels: int,
             threads: int) -> tuple[np.ndarray, np.ndarray]:
    n = pix.size
    if threads <= 1 or n < 4096:
        zbuf, ibuf = _shard_zbuffer(pix, zc, ok, 0, n_pixels)
        return zbuf, ibuf
    slices = _shard_slices(n, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_shard_zbuffer, pix[sl], zc[sl], ok[sl], sl.start, n_pixels)
                   for sl in slices]
        buffers = [f.result() for f in futures]
    return _merge_buffers(buffers)


def render(cloud: PointCloud, pose: CameraPose, intrinsics: Intrinsics,
           out_size: tuple[int, int], config: RenderConfig = RenderConfig(),
           threads: int = 1) -> RenderFrame:
    """Rasterize the cloud from a pose: depth pass, crack filter, cull, resolve."""
    w, h = out_size
    if w < 1 or h < 1:
        raise ValidationError(f"output size must be >= 1x1, got {out_size}")
    pix, zc, ok = _project(cloud, pose, intrinsics, out_size)

    zbuf, _ = _zbuffer(pix, zc, ok, w * h, threads)
    if config.filter_cracks:
        zfiltered = zfilter(zbuf.reshape(h, w), config.rho_crack, config.crack_pairs).ravel()
    else:
        zfiltered = zbuf

    keep = ok & (zc <= zfiltered[np.maximum(pix, 0)] * (1.0 + config.rho_cull))
    _, winner = _zbuffer(pix, zc, ok & keep, w * h, threads)

    hole = winner == np.iinfo(np.int64).max
    idx = np.where(hole, 0, winner)
    color = np.where(hole[:, None], 0.0, cloud.colors[idx]).reshape(h, w, 3)
    depth_values = np.where(hole, 1.0, zc[idx]).reshape(h, w)
    context = np.where(hole[:, None], np.float32(0.0),
                       cloud.context[idx]).reshape(h, w, cloud.context_channels)
    winner_index = np.where(hole, -1, cloud.source_index[idx]).reshape(h, w)
    hole_mask = hole.reshape(h, w)
    return RenderFrame(
        color=ImageBuffer(color),
        depth=DepthMap(depth_values, ~hole_mask),
        context=context,
        hole_mask=hole_mask,
        winner_index=winner_index,
    )


def iter_path_frames(cloud: PointCloud, path: CameraPath, intrinsics: Intrinsics,
                     out_size: tuple[int, int], config: RenderConfig = RenderConfig(),
                     threads: int = 1) -> Iterator[RenderFrame]:
    for pose in path.poses():
        yield render(cloud, pose, intrinsics, out_size, config, threads)


def render_path(cloud: PointCloud, path: CameraPath, intrinsics: Intrinsics,
                out_size: tuple[int, int], config: RenderConfig = RenderConfig(),
                threads: int = 1) -> list[RenderFrame]:
    """Uniformly sample the linear path and render each pose; no state mutates."""
    return list(iter_path_frames(cloud, path, intrinsics, out_size, config, threads))
