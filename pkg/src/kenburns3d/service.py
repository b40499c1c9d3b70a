"""Local HTTP/WebSocket service for the interactive authoring UI.

Protocol (all JSON documents carry "v": 1):

* ``POST /session`` -- multipart upload: ``image`` (PNG/JPEG, required),
  ``depth`` (PFM or 16-bit PNG, optional; ``depth_meta`` sidecar JSON part),
  ``masks`` (label PNG, optional; ``masks_meta`` sidecar) -> ``{sessionId}``.
  The preparation pipeline (depth, adjustment, context, cloud, interactive
  extension) runs in the background; progress shows up under /status.
* ``GET /session/{id}/status``, ``GET /session/{id}/depth.png``,
  ``GET /session/{id}/autocrop``.
* ``PUT /session/{id}/crops`` -- EffectSpec JSON; 204 on success, 422 with
  field-level reasons when a rectangle violates the crop invariants.  Every
  accepted update bumps the session revision.
* ``WS /session/{id}/preview`` -- binary frames ``[revision u32][frameIndex
  u32]`` (big-endian) followed by a PNG payload, looping over the current
  spec; a crops update restarts the stream at frame 0 with the new revision.
  Before the session is ready the stream carries placeholder status frames.
* ``GET /session/{id}/export?frames=N`` -- ZIP of PNG frames, rendered through
  the same code path as ``kenburns render`` so the bytes match it exactly.

Sessions are independent; within a session one background preparation task
and one render worker run, and preview renders are coalesced latest-wins by
revision checks.
"""

from __future__ import annotations

import asyncio
import io
import json
import os
import struct
import tempfile
import uuid
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from aiohttp import web

from . import fileio
from .core import CropWindow, DepthMap, ImageBuffer, SegMaskSet
from .effect import (
    CandidateGrid,
    EffectSpec,
    PreparedScene,
    auto_end_view,
    extend_scene_for_spec,
    interactive_bounds,
    prepare_scene,
    spec_path,
)
from .extend import complete_frame_color, extend_for_interactive
from .pipeline import SyntheticDepthProvider, load_masks
from .render import PointCloud, RenderConfig, render

DEFAULT_PREVIEW_FPS = 15.0
DEFAULT_MAX_ZOOM = 0.6
AUTOCROP_GRID = CandidateGrid(scales=(0.9, 0.8, 0.7, 0.6), positions=4)
STATUS_FRAME_SIZE = 96
HEADER = struct.Struct(">II")

CONFIG_KEY = web.AppKey("config", "ServiceConfig")
SESSIONS_KEY = web.AppKey("sessions", dict)
TASKS_KEY = web.AppKey("tasks", set)
WEBSOCKETS_KEY = web.AppKey("websockets", set)


@dataclass
class ServiceConfig:
    preview_fps: float = DEFAULT_PREVIEW_FPS
    max_zoom: float = DEFAULT_MAX_ZOOM
    jpeg_preview: bool = False      # lossless PNG by default; JPEG q90 for throughput
    interactive_sweeps: int = 1
    autocrop: bool = True

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        return cls(
            preview_fps=float(os.environ.get("KENBURNS_PREVIEW_FPS", DEFAULT_PREVIEW_FPS)),
            max_zoom=float(os.environ.get("KENBURNS_MAX_ZOOM", DEFAULT_MAX_ZOOM)),
            jpeg_preview=os.environ.get("KENBURNS_PREVIEW_JPEG", "0") == "1",
        )


@dataclass
class Session:
    id: str
    image: ImageBuffer
    spec: EffectSpec
    state: str = "processing"
    error: str | None = None
    revision: int = 1
    progress: list[dict] = field(default_factory=list)
    scene: PreparedScene | None = None
    cloud_preview: PointCloud | None = None
    autocrop_state: str = "pending"
    autocrop: CropWindow | None = None
    executor: ThreadPoolExecutor = field(
        default_factory=lambda: ThreadPoolExecutor(max_workers=1))
    poses_revision: int = -1
    poses: list = field(default_factory=list)
    frame_cache: dict = field(default_factory=dict)

    def bump(self, spec: EffectSpec) -> None:
        self.spec = spec
        self.revision += 1
        self.frame_cache.clear()

    def mark(self, stage: str) -> None:
        self.progress.append({"stage": stage})


def _default_spec(img: ImageBuffer) -> EffectSpec:
    return EffectSpec(start_crop=CropWindow.full(img.width, img.height),
                      end_crop=CropWindow.centered(0.8, img.width, img.height))


async def _read_upload(request: web.Request) -> dict[str, bytes | str]:
    parts: dict[str, bytes | str] = {}
    reader = await request.multipart()
    async for part in reader:
        if part.name is None:
            continue
        payload = await part.read(decode=False)
        if part.name.endswith("_meta"):
            parts[part.name] = payload.decode("utf-8")
        else:
            parts[part.name] = bytes(payload)
            if part.filename:
                parts[part.name + "_filename"] = part.filename
    return parts


def _decode_depth(payload: bytes, filename: str, meta: str | None) -> DepthMap:
    suffix = Path(filename).suffix.lower() or ".pfm"
    with tempfile.TemporaryDirectory() as tmp:
        target = Path(tmp) / f"depth{suffix}"
        target.write_bytes(payload)
        if meta:
            fileio.sidecar_path(target).write_text(meta)
        return fileio.read_depth(target)


def _decode_masks(payload: bytes, meta: str | None) -> SegMaskSet:
    with tempfile.TemporaryDirectory() as tmp:
        target = Path(tmp) / "masks.png"
        target.write_bytes(payload)
        if meta:
            fileio.sidecar_path(target).write_text(meta)
        return load_masks(target)


def _prepare_session(session: Session, depth: DepthMap | None,
                     masks: SegMaskSet | None, config: ServiceConfig) -> None:
    """CPU-heavy pipeline; runs on the session's worker thread."""
    img = session.image
    if depth is None:
        session.mark("depth-estimate")
        depth = SyntheticDepthProvider().estimate(img)
    session.mark("prepare")
    scene = prepare_scene(img, depth, masks)
    session.scene = scene
    session.mark("extend-interactive")
    bounds = interactive_bounds(scene, max_zoom=config.max_zoom)
    session.cloud_preview = extend_for_interactive(
        scene.cloud, bounds, scene.intrinsics,
        (img.width, img.height), sweeps=config.interactive_sweeps)
    session.mark("ready")


def _compute_autocrop(session: Session) -> None:
    scene = session.scene
    session.autocrop = auto_end_view(scene.image, scene.depth, scene.cloud,
                                     scene.intrinsics, AUTOCROP_GRID, scene.masks)
    session.autocrop_state = "ready"


def _status_image(progress_stages: int) -> ImageBuffer:
    values = np.full((STATUS_FRAME_SIZE, STATUS_FRAME_SIZE, 3), 0.25)
    bar = min(STATUS_FRAME_SIZE, 16 + 16 * progress_stages)
    values[44:52, 8:8 + max(8, bar - 16)] = 0.9
    return ImageBuffer(values)


def _render_preview_frame(session: Session, revision: int, index: int,
                          config: ServiceConfig) -> bytes | None:
    """Render+encode one preview frame on the session worker; None when stale."""
    if session.revision != revision:
        return None
    if session.poses_revision != revision:
        session.poses = spec_path(session.scene, session.spec).poses()
        session.poses_revision = revision
    if index >= len(session.poses):
        return None
    scene = session.scene
    frame = render(session.cloud_preview, session.poses[index], scene.intrinsics,
                   (scene.image.width, scene.image.height), RenderConfig())
    color = complete_frame_color(frame)
    if session.revision != revision:
        return None
    encoded = (fileio.encode_jpeg(color) if config.jpeg_preview
               else fileio.encode_png(color))
    session.frame_cache[(revision, index)] = encoded
    return encoded


def _render_export(session: Session, frames: int) -> bytes:
    """ZIP of frames through the same path as the CLI render command."""
    scene = session.scene
    spec = EffectSpec(start_crop=session.spec.start_crop,
                      end_crop=session.spec.end_crop,
                      frame_count=frames, out_size=session.spec.out_size)
    cloud, path, k_out, out_size = extend_scene_for_spec(scene, spec)
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", zipfile.ZIP_STORED) as archive:
        for index, pose in enumerate(path.poses()):
            frame = render(cloud, pose, k_out, out_size)
            payload = fileio.encode_png(complete_frame_color(frame))
            info = zipfile.ZipInfo(fileio.frame_name(index),
                                   date_time=(1980, 1, 1, 0, 0, 0))
            archive.writestr(info, payload)
    return buffer.getvalue()


# ---------------------------------------------------------------------------
# Handlers
# ---------------------------------------------------------------------------

def _sessions(app: web.Application) -> dict[str, Session]:
    return app[SESSIONS_KEY]


def _get_session(request: web.Request) -> Session:
    session = _sessions(request.app).get(request.match_info["id"])
    if session is None:
        raise web.HTTPNotFound(text=json.dumps({"v": 1, "error": "unknown session"}),
                               content_type="application/json")
    return session


async def handle_create_session(request: web.Request) -> web.Response:
    config: ServiceConfig = request.app[CONFIG_KEY]
    parts = await _read_upload(request)
    if "image" not in parts:
        raise web.HTTPBadRequest(text=json.dumps({"v": 1, "error": "image part required"}),
                                 content_type="application/json")
    with tempfile.TemporaryDirectory() as tmp:
        img_path = Path(tmp) / "image.png"
        img_path.write_bytes(parts["image"])
        img = fileio.read_png(img_path)

    depth = None
    if "depth" in parts:
        depth = _decode_depth(parts["depth"], str(parts.get("depth_filename", "depth.pfm")),
                              parts.get("depth_meta"))
    masks = None
    if "masks" in parts:
        masks = _decode_masks(parts["masks"], parts.get("masks_meta"))

    session = Session(id=uuid.uuid4().hex[:12], image=img, spec=_default_spec(img))
    _sessions(request.app)[session.id] = session

    loop = asyncio.get_running_loop()

    async def pipeline() -> None:
        try:
            await loop.run_in_executor(session.executor, _prepare_session,
                                       session, depth, masks, config)
            session.state = "ready"
            if config.autocrop:
                await loop.run_in_executor(session.executor, _compute_autocrop, session)
            else:
                session.autocrop_state = "skipped"
        except Exception as exc:  # surfaced through /status
            session.state = "error"
            session.error = str(exc)

    session_task = asyncio.create_task(pipeline())
    request.app[TASKS_KEY].add(session_task)
    session_task.add_done_callback(request.app[TASKS_KEY].discard)
    return web.json_response({"v": 1, "sessionId": session.id}, status=201)


async def handle_status(request: web.Request) -> web.Response:
    session = _get_session(request)
    body = {
        "v": 1,
        "state": session.state,
        "revision": session.revision,
        "progress": session.progress,
        "spec": session.spec.to_dict(),
        "autocropState": session.autocrop_state,
        "imageSize": {"w": session.image.width, "h": session.image.height},
    }
    if session.error:
        body["error"] = session.error
    return web.json_response(body)


async def handle_depth_png(request: web.Request) -> web.Response:
    session = _get_session(request)
    if session.scene is None:
        return web.json_response({"v": 1, "state": session.state}, status=409)
    colored = fileio.colorize_depth(session.scene.depth)
    return web.Response(body=fileio.encode_png(colored), content_type="image/png")


async def handle_autocrop(request: web.Request) -> web.Response:
    session = _get_session(request)
    if session.autocrop is None:
        return web.json_response({"v": 1, "state": session.autocrop_state})
    crop = session.autocrop
    return web.json_response({"v": 1, "state": "ready",
                              "crop": {"x": crop.x, "y": crop.y,
                                       "w": crop.w, "h": crop.h}})


async def handle_put_crops(request: web.Request) -> web.Response:
    session = _get_session(request)
    try:
        doc = await request.json()
    except json.JSONDecodeError:
        raise web.HTTPBadRequest(text=json.dumps({"v": 1, "error": "invalid JSON"}),
                                 content_type="application/json")
    errors = []
    crops = {}
    for key in ("start", "end"):
        entry = doc.get(key)
        if not isinstance(entry, dict):
            errors.append({"field": key, "reason": "size", "detail": f"{key} missing"})
            continue
        try:
            x, y = float(entry["x"]), float(entry["y"])
            w, h = float(entry["w"]), float(entry["h"])
        except (KeyError, TypeError, ValueError):
            errors.append({"field": key, "reason": "size", "detail": f"{key} malformed"})
            continue
        for violation in CropWindow.violations(x, y, w, h,
                                               session.image.width, session.image.height):
            errors.append({"field": f"{key}.{violation.field}",
                           "reason": violation.reason, "detail": violation.detail})
        if not errors:
            crops[key] = CropWindow(x, y, w, h)
    try:
        frames = int(doc.get("frames", session.spec.frame_count))
    except (TypeError, ValueError):
        frames = 0
    if frames < 1:
        errors.append({"field": "frames", "reason": "size", "detail": "frames must be >= 1"})
    if errors:
        return web.json_response({"v": 1, "errors": errors}, status=422)
    session.bump(EffectSpec(start_crop=crops["start"], end_crop=crops["end"],
                            frame_count=frames, out_size=session.spec.out_size))
    return web.Response(status=204)


async def handle_export(request: web.Request) -> web.Response:
    session = _get_session(request)
    if session.state != "ready":
        return web.json_response({"v": 1, "state": session.state}, status=409)
    frames = int(request.query.get("frames", session.spec.frame_count))
    frames = max(1, min(frames, 600))
    loop = asyncio.get_running_loop()
    payload = await loop.run_in_executor(session.executor, _render_export,
                                         session, frames)
    return web.Response(
        body=payload, content_type="application/zip",
        headers={"Content-Disposition":
                 f'attachment; filename="kenburns-{session.id}-{frames}f.zip"'})


async def handle_preview_ws(request: web.Request) -> web.WebSocketResponse:
    session = _get_session(request)
    config: ServiceConfig = request.app[CONFIG_KEY]
    ws = web.WebSocketResponse()
    await ws.prepare(request)
    request.app[WEBSOCKETS_KEY].add(ws)
    loop = asyncio.get_running_loop()
    interval = 1.0 / config.preview_fps

    async def drain() -> None:
        # A send-only stream still has to read so close frames are processed.
        async for _ in ws:
            pass

    drain_task = asyncio.create_task(drain())

    def live() -> bool:
        return not ws.closed and not drain_task.done()

    try:
        while live():
            if session.state == "error":
                await ws.close(message=(session.error or "pipeline failed").encode())
                break
            if session.state != "ready":
                placeholder = _status_image(len(session.progress))
                await ws.send_bytes(HEADER.pack(session.revision, 0)
                                    + fileio.encode_png(placeholder))
                await asyncio.sleep(0.25)
                continue
            revision = session.revision
            count = session.spec.frame_count
            for index in range(count):
                if not live() or session.revision != revision:
                    break
                cached = session.frame_cache.get((revision, index))
                if cached is None:
                    cached = await loop.run_in_executor(
                        session.executor, _render_preview_frame,
                        session, revision, index, config)
                if cached is None:  # revision moved on mid-render
                    break
                if not live():
                    break
                await ws.send_bytes(HEADER.pack(revision, index) + cached)
                await asyncio.sleep(interval)
    except (ConnectionResetError, asyncio.CancelledError):
        pass
    finally:
        drain_task.cancel()
        request.app[WEBSOCKETS_KEY].discard(ws)
    return ws


async def _close_websockets(app: web.Application) -> None:
    for ws in list(app[WEBSOCKETS_KEY]):
        await ws.close()
    for session in app[SESSIONS_KEY].values():
        session.executor.shutdown(wait=False, cancel_futures=True)


def create_app(config: ServiceConfig | None = None) -> web.Application:
    app = web.Application(client_max_size=64 * 1024 * 1024)
    app[CONFIG_KEY] = config or ServiceConfig.from_env()
    app[SESSIONS_KEY] = {}
    app[TASKS_KEY] = set()
    app[WEBSOCKETS_KEY] = set()
    app.on_shutdown.append(_close_websockets)
    app.router.add_post("/session", handle_create_session)
    app.router.add_get("/session/{id}/status", handle_status)
    app.router.add_get("/session/{id}/depth.png", handle_depth_png)
    app.router.add_get("/session/{id}/autocrop", handle_autocrop)
    app.router.add_put("/session/{id}/crops", handle_put_crops)
    app.router.add_get("/session/{id}/export", handle_export)
    app.router.add_get("/session/{id}/preview", handle_preview_ws)

    ui_dir = os.environ.get("KENBURNS_UI_DIR")
    if ui_dir and Path(ui_dir).is_dir():
        async def index(_request: web.Request) -> web.Response:
            raise web.HTTPFound("/ui/index.html")

        app.router.add_get("/", index)
        app.router.add_static("/ui", ui_dir)
    return app
