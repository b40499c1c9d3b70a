"""Reader and validator for the 4-view training-data directory layout.

A scene directory contains exactly four views::

    scene/
      camera.json          (optional metadata)
      view0/ color.png  depth.pfm  normal.pfm
      ...
      view3/ color.png  depth.pfm  normal.pfm

with every raster at 512x512.  The inspector also previews the aspect-ratio
augmentation used when training on such data: a seeded random crop of either
the top and bottom or the left and right of a view.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fileio

VIEW_COUNT = 4
VIEW_RESOLUTION = 512


@dataclass
class ViewStats:
    name: str
    color_mean: tuple[float, float, float]
    depth_min: float
    depth_max: float
    depth_mean: float
    normal_mean_length: float


@dataclass
class SceneReport:
    path: Path
    ok: bool
    problems: list[str] = field(default_factory=list)
    views: list[ViewStats] = field(default_factory=list)
    camera: dict | None = None


@dataclass(frozen=True)
class CropPreview:
    axis: str            # "top-bottom" or "left-right"
    x: int
    y: int
    w: int
    h: int


def crop_preview(width: int, height: int, seed: int) -> CropPreview:
    """Seeded preview of the random aspect-ratio crop augmentation.

    Either the top and bottom or the left and right of the view are cropped
    away; each side loses an independent 5-25% of the axis.
    """
    rng = np.random.default_rng(seed)
    axis = "top-bottom" if rng.random() < 0.5 else "left-right"
    lo = rng.uniform(0.05, 0.25)
    hi = rng.uniform(0.05, 0.25)
    if axis == "top-bottom":
        top = int(round(lo * height))
        bottom = int(round(hi * height))
        return CropPreview(axis=axis, x=0, y=top, w=width, h=height - top - bottom)
    left = int(round(lo * width))
    right = int(round(hi * width))
    return CropPreview(axis=axis, x=left, y=0, w=width - left - right, h=height)


def inspect_scene(path: str | Path) -> SceneReport:
    """Validate the 4-view, 512x512 layout and gather per-view statistics."""
    path = Path(path)
    report = SceneReport(path=path, ok=True)
    if not path.is_dir():
        report.ok = False
        report.problems.append(f"scene directory not found: {path}")
        return report

    camera_path = path / "camera.json"
    if camera_path.exists():
        try:
            report.camera = json.loads(camera_path.read_text())
        except json.JSONDecodeError as exc:
            report.ok = False
            report.problems.append(f"camera.json is not valid JSON: {exc}")

    for k in range(VIEW_COUNT):
        view = path / f"view{k}"
        if not view.is_dir():
            report.ok = False
            report.problems.append(f"missing view directory: view{k}")
            continue
        entries = {}
        for name in ("color.png", "depth.pfm", "normal.pfm"):
            target = view / name
            if not target.exists():
                report.ok = False
                report.problems.append(f"view{k}: missing {name}")
            else:
                entries[name] = target
        if len(entries) != 3:
            continue
        try:
            color = fileio.read_png(entries["color.png"])
            depth = fileio.read_pfm(entries["depth.pfm"])
            normal = fileio.read_pfm(entries["normal.pfm"])
        except Exception as exc:  # report, do not crash the inspector
            report.ok = False
            report.problems.append(f"view{k}: unreadable raster ({exc})")
            continue
        for name, shape in (("color.png", (color.height, color.width)),
                            ("depth.pfm", depth.shape[:2]),
                            ("normal.pfm", normal.shape[:2])):
            if shape != (VIEW_RESOLUTION, VIEW_RESOLUTION):
                report.ok = False
                report.problems.append(
                    f"view{k}: {name} is {shape[1]}x{shape[0]}, "
                    f"expected {VIEW_RESOLUTION}x{VIEW_RESOLUTION}")
        if normal.ndim != 3 or normal.shape[2] != 3:
            report.ok = False
            report.problems.append(f"view{k}: normal.pfm must have 3 channels")
            continue
        lengths = np.linalg.norm(normal.astype(np.float64), axis=2)
        report.views.append(ViewStats(
            name=f"view{k}",
            color_mean=tuple(float(c) for c in color.values.mean(axis=(0, 1))),
            depth_min=float(depth.min()),
            depth_max=float(depth.max()),
            depth_mean=float(depth.mean()),
            normal_mean_length=float(lengths.mean()),
        ))
    return report
