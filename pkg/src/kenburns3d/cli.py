"""Command-line interface: batch synthesis, depth evaluation, dataset tools, service.

Exit codes: 0 success, 2 missing input file (the message names the path),
1 any other failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .benchmark import run_render_benchmark
from .core import CropWindow, DepthMap, ImageBuffer, KenBurnsError, SegMaskSet
from .dataset import crop_preview, inspect_scene
from .effect import (
    AUTO_POSITIONS,
    AUTO_SCALES,
    CandidateGrid,
    EffectSpec,
    auto_end_view,
    extend_scene_for_spec,
    prepare_scene,
)
from .evaluation import compute_metric_report, load_plane_annotations
from .extend import complete_frame_color
from .pipeline import SyntheticDepthProvider, load_depth, load_masks
from .render import RenderConfig, render

DEFAULT_PORT = 8571


class MissingInputError(KenBurnsError):
    pass


def _require(path: str | None, kind: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"{kind} file not found: {p}")
    return p


def _load_inputs(args) -> tuple[ImageBuffer, DepthMap, SegMaskSet | None]:
    image_path = _require(args.image, "image")
    img = fileio.read_png(image_path)
    depth_path = _require(args.depth, "depth")
    if depth_path is not None:
        depth = load_depth(depth_path)
    else:
        depth = SyntheticDepthProvider().estimate(img)
    masks = None
    masks_path = _require(getattr(args, "masks", None), "masks")
    if masks_path is not None:
        masks = load_masks(masks_path)
    return img, depth, masks


def _write_effect(scene, spec: EffectSpec, out_dir: Path, threads: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "crops.json").write_text(spec.to_json() + "\n")
    cloud, path, k_out, out_size = extend_scene_for_spec(scene, spec, threads=threads)
    config = RenderConfig()
    for index, pose in enumerate(path.poses()):
        frame = render(cloud, pose, k_out, out_size, config, threads)
        fileio.write_frame(out_dir, index, complete_frame_color(frame))
    print(f"wrote {path.frame_count} frames to {out_dir}")


def cmd_autozoom(args) -> int:
    img, depth, masks = _load_inputs(args)
    scene = prepare_scene(img, depth, masks)
    grid = CandidateGrid(scales=tuple(args.scales) if args.scales else AUTO_SCALES,
                         positions=args.positions)
    end = auto_end_view(scene.image, scene.depth, scene.cloud, scene.intrinsics,
                        grid, scene.masks)
    spec = EffectSpec(start_crop=CropWindow.full(img.width, img.height),
                      end_crop=end, frame_count=args.frames)
    _write_effect(scene, spec, Path(args.out), args.threads)
    return 0


def cmd_render(args) -> int:
    img, depth, masks = _load_inputs(args)
    spec_path = _require(args.spec, "spec")
    doc = json.loads(spec_path.read_text())
    spec = EffectSpec.from_dict(doc, img.width, img.height)
    scene = prepare_scene(img, depth, masks)
    _write_effect(scene, spec, Path(args.out), args.threads)
    return 0


def cmd_evaluate(args) -> int:
    pred = load_depth(_require(args.pred, "prediction"))
    gt = load_depth(_require(args.gt, "ground truth"))
    planes = None
    if args.planes:
        planes = load_plane_annotations(_require(args.planes, "plane annotations"))
    edges = None
    if args.edges:
        edges = fileio.read_label_png(_require(args.edges, "edge map")) > 0
    report = compute_metric_report(pred, gt, planes=planes, gt_edges=edges,
                                   method="l2" if args.l2 else "l1")
    base = Path(args.report)
    if base.suffix == ".json":
        base = base.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    Path(str(base) + ".json").write_text(report.to_json() + "\n")
    Path(str(base) + ".csv").write_text(report.to_csv())
    print(f"rel={report.rel:.4f} rms={report.rms:.4f} sigma1={report.sigma1:.4f} "
          f"dde0={report.dde0:.2f}")
    print(f"wrote {base}.json and {base}.csv")
    return 0


def cmd_dataset_inspect(args) -> int:
    report = inspect_scene(args.scene)
    for view in report.views:
        print(f"{view.name}: color mean rgb=({view.color_mean[0]:.3f}, "
              f"{view.color_mean[1]:.3f}, {view.color_mean[2]:.3f}) "
              f"depth [{view.depth_min:.3f}, {view.depth_max:.3f}] "
              f"mean {view.depth_mean:.3f} |n|~{view.normal_mean_length:.3f}")
    if args.crop_seed is not None:
        preview = crop_preview(512, 512, args.crop_seed)
        print(f"crop preview (seed {args.crop_seed}): {preview.axis} "
              f"x={preview.x} y={preview.y} w={preview.w} h={preview.h}")
    if not report.ok:
        for problem in report.problems:
            print(f"FAIL: {problem}", file=sys.stderr)
        return 1
    print("scene ok: 4 views at 512x512")
    return 0


def cmd_serve(args) -> int:
    from aiohttp import web

    from .service import create_app

    port = args.port or int(os.environ.get("KENBURNS_PORT", DEFAULT_PORT))
    web.run_app(create_app(), host=args.host, port=port)
    return 0


def cmd_benchmark(args) -> int:
    report = run_render_benchmark(size=args.size, frames=args.frames,
                                  threads=args.threads)
    print(report.summary())
    if args.json:
        Path(args.json).write_text(report.to_json() + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kenburns",
        description="3D Ken Burns synthesis from a single image plus depth.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("autozoom", help="pick the end view automatically and render")
    p.add_argument("--image", required=True)
    p.add_argument("--depth", default=None,
                   help="PFM or 16-bit PNG (+ sidecar); omitted = synthetic stub depth")
    p.add_argument("--masks", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=45)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--scales", type=float, nargs="*", default=None)
    p.add_argument("--positions", type=int, default=AUTO_POSITIONS)
    p.set_defaults(func=cmd_autozoom)

    p = sub.add_parser("render", help="render frames for an explicit effect spec")
    p.add_argument("--image", required=True)
    p.add_argument("--depth", default=None)
    p.add_argument("--masks", default=None)
    p.add_argument("--spec", required=True, help="EffectSpec JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("evaluate", help="score a depth prediction against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--planes", default=None)
    p.add_argument("--edges", default=None)
    p.add_argument("--l2", action="store_true", help="least-squares alignment")
    p.add_argument("--report", required=True, help="output base path (json + csv)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("dataset-inspect", help="validate a 4-view scene directory")
    p.add_argument("--scene", required=True)
    p.add_argument("--crop-seed", type=int, default=None)
    p.set_defaults(func=cmd_dataset_inspect)

    p = sub.add_parser("serve", help="run the interactive preview service")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("benchmark", help="measure rendering throughput")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MissingInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KenBurnsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
