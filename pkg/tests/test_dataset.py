"""Training-data directory reader and crop-augmentation preview."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from kenburns3d import fileio
from kenburns3d.core import ImageBuffer
from kenburns3d.dataset import VIEW_RESOLUTION, crop_preview, inspect_scene


def write_scene(root: Path, views: int = 4, resolution: int = VIEW_RESOLUTION,
                skip_files: tuple[tuple[int, str], ...] = ()) -> Path:
    rng = np.random.default_rng(0)
    scene = root / "scene"
    for k in range(views):
        view = scene / f"view{k}"
        view.mkdir(parents=True)
        if (k, "color.png") not in skip_files:
            img = ImageBuffer(rng.random((resolution, resolution, 3)))
            fileio.write_png(view / "color.png", img)
        if (k, "depth.pfm") not in skip_files:
            fileio.write_pfm(view / "depth.pfm",
                             rng.uniform(1, 9, (resolution, resolution)))
        if (k, "normal.pfm") not in skip_files:
            normals = np.zeros((resolution, resolution, 3), dtype=np.float32)
            normals[..., 2] = 1.0
            fileio.write_pfm(view / "normal.pfm", normals)
    (scene / "camera.json").write_text(json.dumps(
        {"v": 1, "fx": 256.0, "fy": 256.0, "cx": 256.0, "cy": 256.0}))
    return scene


class TestInspectScene:
    def test_well_formed_scene_passes(self, tmp_path):
        scene = write_scene(tmp_path, resolution=VIEW_RESOLUTION)
        report = inspect_scene(scene)
        assert report.ok, report.problems
        assert len(report.views) == 4
        assert report.camera["fx"] == 256.0

    def test_missing_view_named(self, tmp_path):
        scene = write_scene(tmp_path, views=3)
        report = inspect_scene(scene)
        assert not report.ok
        assert any("view3" in p for p in report.problems)

    def test_wrong_resolution_flagged(self, tmp_path):
        scene = write_scene(tmp_path, resolution=256)
        report = inspect_scene(scene)
        assert not report.ok
        assert any("256" in p and "512" in p for p in report.problems)

    def test_missing_raster_flagged(self, tmp_path):
        scene = write_scene(tmp_path, skip_files=((2, "depth.pfm"),))
        report = inspect_scene(scene)
        assert not report.ok
        assert any("view2" in p and "depth.pfm" in p for p in report.problems)


class TestCropPreview:
    def test_same_seed_same_rectangle(self):
        a = crop_preview(512, 512, seed=7)
        b = crop_preview(512, 512, seed=7)
        assert a == b

    def test_axis_is_top_bottom_or_left_right(self):
        seen = set()
        for seed in range(30):
            p = crop_preview(512, 512, seed)
            seen.add(p.axis)
            if p.axis == "top-bottom":
                assert p.x == 0 and p.w == 512 and p.h < 512
            else:
                assert p.y == 0 and p.h == 512 and p.w < 512
        assert seen == {"top-bottom", "left-right"}

    def test_rectangle_stays_inside_image(self):
        for seed in range(50):
            p = crop_preview(640, 480, seed)
            assert 0 <= p.x and 0 <= p.y
            assert p.x + p.w <= 640 and p.y + p.h <= 480
            assert p.w > 0 and p.h > 0
