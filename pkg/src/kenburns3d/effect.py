"""Crop-window parametrization of the virtual camera and full-effect synthesis.

A camera position is specified as a crop rectangle on the source image: the
crop size (relative to the image) sets the forward Z motion, and the crop
center offset sets the lateral XY motion such that a scene point at the
foreground depth moves by exactly the crop-center offset, in output pixels.
So two crops 100 pixels apart move the foreground by 100 pixels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import (
    CameraPath,
    CameraPose,
    CropWindow,
    DegenerateInputError,
    DepthMap,
    ImageBuffer,
    Intrinsics,
    SegMaskSet,
    ValidationError,
    resize_bilinear,
)
from .extend import (
    ContextExtractor,
    DefaultContextExtractor,
    Inpainter,
    extend_for_path,
)
from .pipeline import DepthRefiner, adjust_depth, resize_masks
from .render import (
    PointCloud,
    RenderConfig,
    RenderFrame,
    _project,
    _zbuffer,
    build_point_cloud,
    render,
    zfilter,
)

DEFAULT_FRAME_COUNT = 45
AUTO_SCALES = tuple(round(0.95 - 0.05 * k, 2) for k in range(8))  # 0.95 .. 0.60
AUTO_POSITIONS = 8
FOREGROUND_PERCENTILE = 25.0


@dataclass(frozen=True)
class EffectSpec:
    """Start/end crops plus frame count and output raster size."""

    start_crop: CropWindow
    end_crop: CropWindow
    frame_count: int = DEFAULT_FRAME_COUNT
    out_size: tuple[int, int] | None = None  # None = source image size

    def __post_init__(self):
        if self.frame_count < 1:
            raise ValidationError(f"frame_count must be >= 1, got {self.frame_count}")

    def to_dict(self) -> dict:
        doc = {
            "v": 1,
            "start": {"x": self.start_crop.x, "y": self.start_crop.y,
                      "w": self.start_crop.w, "h": self.start_crop.h},
            "end": {"x": self.end_crop.x, "y": self.end_crop.y,
                    "w": self.end_crop.w, "h": self.end_crop.h},
            "frames": self.frame_count,
        }
        if self.out_size is not None:
            doc["out"] = {"w": self.out_size[0], "h": self.out_size[1]}
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict, image_width: int, image_height: int) -> "EffectSpec":
        def crop(entry: dict) -> CropWindow:
            return CropWindow.create(float(entry["x"]), float(entry["y"]),
                                     float(entry["w"]), float(entry["h"]),
                                     image_width, image_height)

        out = None
        if "out" in doc and doc["out"] is not None:
            out = (int(doc["out"]["w"]), int(doc["out"]["h"]))
        return cls(start_crop=crop(doc["start"]), end_crop=crop(doc["end"]),
                   frame_count=int(doc.get("frames", DEFAULT_FRAME_COUNT)),
                   out_size=out)


def _crop_pixel_selection(crop: CropWindow, height: int, width: int
                          ) -> tuple[np.ndarray, np.ndarray]:
    rows = np.arange(height)
    cols = np.arange(width)
    row_in = (rows + 0.5 >= crop.y) & (rows + 0.5 < crop.y + crop.h)
    col_in = (cols + 0.5 >= crop.x) & (cols + 0.5 < crop.x + crop.w)
    return row_in, col_in


def foreground_depth(depth: DepthMap, crop: CropWindow,
                     masks: SegMaskSet | None = None) -> float:
    """Representative foreground depth inside a crop.

    With a salient mask intersecting the crop, the median depth of the largest
    such intersection; otherwise the 25th percentile of depth within the crop
    (biased near, since the foreground is what the camera motion anchors to).
    """
    row_in, col_in = _crop_pixel_selection(crop, depth.height, depth.width)
    box = row_in[:, None] & col_in[None, :]
    if not box.any():
        raise DegenerateInputError("crop selects no pixel centers")
    if masks is not None and masks.salient:
        best: tuple[int, int] | None = None
        for instance in sorted(masks.salient):
            overlap = int(np.count_nonzero((masks.labels == instance) & box & depth.mask))
            if overlap > 0 and (best is None or overlap > best[0]):
                best = (overlap, instance)
        if best is not None:
            region = (masks.labels == best[1]) & box & depth.mask
            return float(np.median(depth.values[region]))
    vals = depth.values[box & depth.mask]
    if vals.size == 0:
        raise DegenerateInputError("crop contains no valid depth")
    return float(np.percentile(vals, FOREGROUND_PERCENTILE))


def crop_to_pose(crop: CropWindow, image_size: tuple[int, int],
                 intrinsics: Intrinsics, foreground: float) -> CameraPose:
    """Camera pose realizing a crop: zoom from crop size, XY from center offset.

    The zoom ratio z = crop.w / image_w sets tz = foreground * (1 - z), which
    magnifies the plane at the foreground depth by 1/z.  The XY translation
    makes a point at the foreground depth shift by exactly the crop-center
    offset in output pixels.
    """
    if foreground <= 0:
        raise ValidationError(f"foreground depth must be positive, got {foreground}")
    img_w, img_h = image_size
    z = crop.w / img_w
    tz = foreground * (1.0 - z)
    dcx = (crop.x + crop.w / 2.0) - img_w / 2.0
    dcy = (crop.y + crop.h / 2.0) - img_h / 2.0
    tx = dcx * (foreground - tz) / intrinsics.fx
    ty = dcy * (foreground - tz) / intrinsics.fy
    return CameraPose(tx, ty, tz)


# ---------------------------------------------------------------------------
# Automatic end-view selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CandidateGrid:
    scales: tuple[float, ...] = AUTO_SCALES
    positions: int = AUTO_POSITIONS

    def crops(self, image_width: int, image_height: int) -> list[CropWindow]:
        out = []
        for scale in self.scales:
            w = image_width * scale
            h = image_height * scale
            span_x = image_width - w
            span_y = image_height - h
            steps = self.positions
            for iy in range(steps):
                for ix in range(steps):
                    x = span_x * ix / (steps - 1) if steps > 1 else span_x / 2.0
                    y = span_y * iy / (steps - 1) if steps > 1 else span_y / 2.0
                    out.append(CropWindow.create(x, y, w, h, image_width, image_height))
        return out


def _render_hole_count(cloud: PointCloud, pose: CameraPose, intrinsics: Intrinsics,
                       out_size: tuple[int, int], config: RenderConfig) -> int:
    """Hole count of render() without materializing color/context rasters."""
    w, h = out_size
    pix, zc, ok = _project(cloud, pose, intrinsics, out_size)
    zbuf, _ = _zbuffer(pix, zc, ok, w * h, threads=1)
    zf = zfilter(zbuf.reshape(h, w), config.rho_crack, config.crack_pairs).ravel()
    keep = ok & (zc <= zf[np.maximum(pix, 0)] * (1.0 + config.rho_cull))
    _, winner = _zbuffer(pix, zc, ok & keep, w * h, threads=1)
    return int(np.count_nonzero(winner == np.iinfo(np.int64).max))


def auto_end_view(img: ImageBuffer, depth: DepthMap, cloud: PointCloud,
                  intrinsics: Intrinsics,
                  grid: CandidateGrid = CandidateGrid(),
                  masks: SegMaskSet | None = None,
                  out_size: tuple[int, int] | None = None,
                  config: RenderConfig = RenderConfig()) -> CropWindow:
    """End crop minimizing disocclusion: render every candidate, count holes.

    Ties prefer (in order) the smaller scale, the crop center closest to the
    image center, then candidate enumeration order.
    """
    candidates = grid.crops(img.width, img.height)
    if not candidates:
        raise ValidationError("candidate grid is empty")
    if out_size is None:
        out_size = (img.width, img.height)
    img_cx, img_cy = img.width / 2.0, img.height / 2.0
    best_key = None
    best_crop = None
    for order, crop in enumerate(candidates):
        fg = foreground_depth(depth, crop, masks)
        pose = crop_to_pose(crop, (img.width, img.height), intrinsics, fg)
        holes = _render_hole_count(cloud, pose, intrinsics, out_size, config)
        cx, cy = crop.center
        center_dist = float(np.hypot(cx - img_cx, cy - img_cy))
        key = (holes, crop.w / img.width, center_dist, order)
        if best_key is None or key < best_key:
            best_key = key
            best_crop = crop
    return best_crop


# ---------------------------------------------------------------------------
# Full synthesis
# ---------------------------------------------------------------------------

@dataclass
class PreparedScene:
    """Everything synthesis needs downstream of depth preparation."""

    image: ImageBuffer
    depth: DepthMap
    intrinsics: Intrinsics
    cloud: PointCloud
    masks: SegMaskSet | None


def prepare_scene(img: ImageBuffer, depth: DepthMap,
                  masks: SegMaskSet | None = None,
                  intrinsics: Intrinsics | None = None,
                  refiner: DepthRefiner | None = None,
                  context_extractor: ContextExtractor | None = None) -> PreparedScene:
    """Adjust + refine depth to image resolution and build the scene point cloud."""
    if masks is not None:
        masks_at_depth = resize_masks(masks, depth.height, depth.width)
        depth = adjust_depth(depth, masks_at_depth)
    if (depth.height, depth.width) != (img.height, img.width):
        if refiner is not None and max(img.width, img.height) >= 2 * max(depth.width, depth.height):
            depth = refiner.refine(img, depth)
        if (depth.height, depth.width) != (img.height, img.width):
            if not depth.all_valid:
                raise ValidationError("sparse depth cannot be resampled to the image size")
            depth = DepthMap(resize_bilinear(depth.values, img.height, img.width))
    if intrinsics is None:
        intrinsics = Intrinsics.default_for(img.width, img.height)
    extractor = context_extractor or DefaultContextExtractor()
    context = extractor.extract(img)
    cloud = build_point_cloud(img, depth, intrinsics, context)
    return PreparedScene(image=img, depth=depth, intrinsics=intrinsics,
                         cloud=cloud, masks=masks)


def spec_path(scene: PreparedScene, spec: EffectSpec) -> CameraPath:
    """Derive the camera path for an effect spec from the prepared scene."""
    size = (scene.image.width, scene.image.height)
    fg_start = foreground_depth(scene.depth, spec.start_crop, scene.masks)
    fg_end = foreground_depth(scene.depth, spec.end_crop, scene.masks)
    start = crop_to_pose(spec.start_crop, size, scene.intrinsics, fg_start)
    end = crop_to_pose(spec.end_crop, size, scene.intrinsics, fg_end)
    return CameraPath(start=start, end=end, frame_count=spec.frame_count)


def output_intrinsics(scene: PreparedScene, out_size: tuple[int, int]) -> Intrinsics:
    """Scale intrinsics from source raster units to the output raster."""
    src_w, src_h = scene.image.width, scene.image.height
    out_w, out_h = out_size
    if abs(out_w / out_h - src_w / src_h) > 1e-3:
        raise ValidationError(
            f"output size {out_size} does not preserve the source aspect ratio")
    sx, sy = out_w / src_w, out_h / src_h
    k = scene.intrinsics
    return Intrinsics(fx=k.fx * sx, fy=k.fy * sy, cx=k.cx * sx, cy=k.cy * sy)


def extend_scene_for_spec(scene: PreparedScene, spec: EffectSpec,
                          inpainter: Inpainter | None = None,
                          context_extractor: ContextExtractor | None = None,
                          config: RenderConfig = RenderConfig(),
                          threads: int = 1) -> tuple[PointCloud, CameraPath, Intrinsics, tuple[int, int]]:
    out_size = spec.out_size or (scene.image.width, scene.image.height)
    k_out = output_intrinsics(scene, out_size)
    path = spec_path(scene, spec)
    cloud = extend_for_path(scene.cloud, path, k_out, out_size,
                            inpainter, context_extractor, config, threads)
    return cloud, path, k_out, out_size


def iter_synthesize(img: ImageBuffer, depth: DepthMap,
                    masks: SegMaskSet | None, spec: EffectSpec,
                    intrinsics: Intrinsics | None = None,
                    refiner: DepthRefiner | None = None,
                    inpainter: Inpainter | None = None,
                    context_extractor: ContextExtractor | None = None,
                    config: RenderConfig = RenderConfig(),
                    threads: int = 1) -> Iterator[RenderFrame]:
    """Streaming variant of synthesize (frames are produced one at a time)."""
    scene = prepare_scene(img, depth, masks, intrinsics, refiner, context_extractor)
    cloud, path, k_out, out_size = extend_scene_for_spec(
        scene, spec, inpainter, context_extractor, config, threads)
    for pose in path.poses():
        yield render(cloud, pose, k_out, out_size, config, threads)


def synthesize(img: ImageBuffer, depth: DepthMap,
               masks: SegMaskSet | None, spec: EffectSpec,
               intrinsics: Intrinsics | None = None,
               refiner: DepthRefiner | None = None,
               inpainter: Inpainter | None = None,
               context_extractor: ContextExtractor | None = None,
               config: RenderConfig = RenderConfig(),
               threads: int = 1) -> list[RenderFrame]:
    """Full 3D Ken Burns synthesis: prepare, build, extend at extremes, render.

    The first frame corresponds to the start crop's pose and the last to the
    end crop's; every frame is rendered from the same extended cloud, which is
    what makes the sequence temporally consistent.
    """
    return list(iter_synthesize(img, depth, masks, spec, intrinsics, refiner,
                                inpainter, context_extractor, config, threads))


def interactive_bounds(scene: PreparedScene, max_zoom: float = 0.6
                       ) -> list[CameraPose]:
    """Extreme poses (left, right, top, bottom) reachable by crops down to max_zoom."""
    w, h = scene.image.width, scene.image.height
    cw, ch = w * max_zoom, h * max_zoom
    crops = [
        CropWindow.create(0.0, (h - ch) / 2.0, cw, ch, w, h),          # left
        CropWindow.create(w - cw, (h - ch) / 2.0, cw, ch, w, h),       # right
        CropWindow.create((w - cw) / 2.0, 0.0, cw, ch, w, h),          # top
        CropWindow.create((w - cw) / 2.0, h - ch, cw, ch, w, h),       # bottom
    ]
    return [crop_to_pose(c, (w, h), scene.intrinsics,
                         foreground_depth(scene.depth, c, scene.masks))
            for c in crops]
