"""Shared scene fixtures.

The canonical "two-plane" scene used across the renderer, inpainting, and
synthesis tests: a fronto-parallel foreground square over a fronto-parallel
background plane, both axis-aligned to the pixel grid so every expected
quantity is computable by integer set arithmetic.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kenburns3d.core import DepthMap, ImageBuffer, Intrinsics
from kenburns3d.render import PointCloud, build_point_cloud

FG_COLOR = (0.9, 0.2, 0.1)
BG_COLOR = (0.1, 0.3, 0.9)


@dataclass
class TwoPlaneScene:
    img: ImageBuffer
    depth: DepthMap
    intrinsics: Intrinsics
    cloud: PointCloud
    size: int
    fg_depth: float
    bg_depth: float
    fg_box: tuple[int, int, int, int]  # (row0, row1, col0, col1), half-open

    @property
    def fg_mask(self) -> np.ndarray:
        r0, r1, c0, c1 = self.fg_box
        mask = np.zeros((self.size, self.size), dtype=bool)
        mask[r0:r1, c0:c1] = True
        return mask


def make_two_plane_scene(size: int = 64, fg_depth: float = 1.0, bg_depth: float = 4.0,
                         fg_box: tuple[int, int, int, int] | None = None,
                         context: np.ndarray | None = None) -> TwoPlaneScene:
    if fg_box is None:
        q = size // 4
        fg_box = (q, 3 * q, q, 3 * q)
    r0, r1, c0, c1 = fg_box
    depth_values = np.full((size, size), bg_depth)
    depth_values[r0:r1, c0:c1] = fg_depth
    colors = np.empty((size, size, 3))
    colors[:] = BG_COLOR
    colors[r0:r1, c0:c1] = FG_COLOR
    img = ImageBuffer(colors)
    depth = DepthMap(depth_values)
    intrinsics = Intrinsics.default_for(size, size)
    cloud = build_point_cloud(img, depth, intrinsics, context)
    return TwoPlaneScene(img=img, depth=depth, intrinsics=intrinsics, cloud=cloud,
                         size=size, fg_depth=fg_depth, bg_depth=bg_depth, fg_box=fg_box)


@pytest.fixture
def two_plane() -> TwoPlaneScene:
    return make_two_plane_scene()


def random_image(rng: np.random.Generator, h: int, w: int) -> ImageBuffer:
    return ImageBuffer(rng.random((h, w, 3)))


def random_depth(rng: np.random.Generator, h: int, w: int,
                 lo: float = 0.5, hi: float = 8.0) -> DepthMap:
    return DepthMap(rng.uniform(lo, hi, size=(h, w)))
