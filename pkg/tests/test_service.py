"""Preview service: session lifecycle, validation, streaming, export parity."""

from __future__ import annotations

import asyncio
import io
import json
import struct
import time
import zipfile
from pathlib import Path

import aiohttp
import numpy as np
import pytest
from aiohttp.test_utils import TestClient, TestServer

from conftest import make_two_plane_scene
from kenburns3d import fileio
from kenburns3d.cli import main as cli_main
from kenburns3d.service import ServiceConfig, create_app

HEADER = struct.Struct(">II")


def run(coro):
    return asyncio.run(coro)


async def start_client(config: ServiceConfig | None = None) -> TestClient:
    app = create_app(config or ServiceConfig(autocrop=False, preview_fps=30.0))
    client = TestClient(TestServer(app))
    await client.start_server()
    return client


def fixture_png_bytes(size: int = 64) -> tuple[bytes, bytes, "np.ndarray"]:
    scene = make_two_plane_scene(size=size, fg_depth=1.0, bg_depth=4.0)
    png = fileio.encode_png(scene.img)
    buf = io.BytesIO()
    fileio.write_pfm("/tmp/_svc_depth.pfm", np.where(scene.depth.mask,
                                                     scene.depth.values, 0.0))
    depth_bytes = Path("/tmp/_svc_depth.pfm").read_bytes()
    return png, depth_bytes, scene.img.values


async def create_session(client: TestClient, png: bytes, depth: bytes) -> str:
    form = aiohttp.FormData()
    form.add_field("image", png, filename="image.png", content_type="image/png")
    form.add_field("depth", depth, filename="depth.pfm",
                   content_type="application/octet-stream")
    resp = await client.post("/session", data=form)
    assert resp.status == 201, await resp.text()
    doc = await resp.json()
    assert doc["v"] == 1
    return doc["sessionId"]


async def wait_ready(client: TestClient, session_id: str, timeout: float = 30.0) -> dict:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        resp = await client.get(f"/session/{session_id}/status")
        doc = await resp.json()
        if doc["state"] == "ready":
            return doc
        if doc["state"] == "error":
            raise AssertionError(f"pipeline failed: {doc.get('error')}")
        await asyncio.sleep(0.05)
    raise AssertionError("session never became ready")


class TestSessionLifecycle:
    def test_upload_reaches_ready_with_progress(self):
        async def scenario():
            client = await start_client()
            try:
                png, depth, _ = fixture_png_bytes()
                sid = await create_session(client, png, depth)
                doc = await wait_ready(client, sid)
                stages = [p["stage"] for p in doc["progress"]]
                assert "prepare" in stages and "ready" in stages
                assert doc["spec"]["start"]["w"] == 64.0
            finally:
                await client.close()
        run(scenario())

    def test_unknown_session_is_404(self):
        async def scenario():
            client = await start_client()
            try:
                resp = await client.get("/session/doesnotexist/status")
                assert resp.status == 404
            finally:
                await client.close()
        run(scenario())

    def test_depth_png_served_when_ready(self):
        async def scenario():
            client = await start_client()
            try:
                png, depth, _ = fixture_png_bytes()
                sid = await create_session(client, png, depth)
                await wait_ready(client, sid)
                resp = await client.get(f"/session/{sid}/depth.png")
                assert resp.status == 200
                assert resp.content_type == "image/png"
                body = await resp.read()
                assert body[:8] == b"\x89PNG\r\n\x1a\n"
            finally:
                await client.close()
        run(scenario())


class TestCropsValidation:
    def test_aspect_violation_is_422_naming_aspect(self):
        async def scenario():
            client = await start_client()
            try:
                png, depth, _ = fixture_png_bytes()
                sid = await create_session(client, png, depth)
                bad = {"v": 1,
                       "start": {"x": 0, "y": 0, "w": 64, "h": 64},
                       "end": {"x": 0, "y": 0, "w": 40, "h": 64}}
                resp = await client.put(f"/session/{sid}/crops", json=bad)
                assert resp.status == 422
                doc = await resp.json()
                assert any(e["reason"] == "aspect" for e in doc["errors"])
                assert any(e["field"].startswith("end") for e in doc["errors"])
            finally:
                await client.close()
        run(scenario())

    def test_valid_crops_bump_revision(self):
        async def scenario():
            client = await start_client()
            try:
                png, depth, _ = fixture_png_bytes()
                sid = await create_session(client, png, depth)
                status = await (await client.get(f"/session/{sid}/status")).json()
                first_rev = status["revision"]
                good = {"v": 1,
                        "start": {"x": 0, "y": 0, "w": 64, "h": 64},
                        "end": {"x": 8, "y": 8, "w": 48, "h": 48},
                        "frames": 9}
                resp = await client.put(f"/session/{sid}/crops", json=good)
                assert resp.status == 204
                status = await (await client.get(f"/session/{sid}/status")).json()
                assert status["revision"] == first_rev + 1
                assert status["spec"]["frames"] == 9
            finally:
                await client.close()
        run(scenario())

    def test_out_of_bounds_is_422(self):
        async def scenario():
            client = await start_client()
            try:
                png, depth, _ = fixture_png_bytes()
                sid = await create_session(client, png, depth)
                bad = {"v": 1,
                       "start": {"x": 0, "y": 0, "w": 64, "h": 64},
                       "end": {"x": 40, "y": 0, "w": 48, "h": 48}}
                resp = await client.put(f"/session/{sid}/crops", json=bad)
                assert resp.status == 422
                doc = await resp.json()
                assert any(e["reason"] == "bounds" for e in doc["errors"])
            finally:
                await client.close()
        run(scenario())


class TestPreviewStream:
    def test_first_frame_is_input_image_for_default_crops(self):
        async def scenario():
            client = await start_client()
            try:
                png, depth, values = fixture_png_bytes()
                sid = await create_session(client, png, depth)
                await wait_ready(client, sid)
                ws = await client.ws_connect(f"/session/{sid}/preview")
                msg = await ws.receive_bytes(timeout=10)
                revision, index = HEADER.unpack(msg[:8])
                assert index == 0
                # identity start view: the PNG payload decodes to the uploaded
                # image (8-bit quantized at upload time)
                with open("/tmp/_svc_frame0.png", "wb") as f:
                    f.write(msg[8:])
                decoded = fileio.read_png("/tmp/_svc_frame0.png")
                expected = np.round(values * 255.0) / 255.0
                np.testing.assert_array_equal(decoded.values, expected)
                await ws.close()
            finally:
                await client.close()
        run(scenario())

    def test_revision_ordering_across_crop_update(self):
        async def scenario():
            client = await start_client()
            try:
                png, depth, _ = fixture_png_bytes()
                sid = await create_session(client, png, depth)
                await wait_ready(client, sid)
                ws = await client.ws_connect(f"/session/{sid}/preview")
                frames: list[tuple[int, int]] = []
                # read a few frames at revision 1
                for _ in range(3):
                    msg = await ws.receive_bytes(timeout=10)
                    frames.append(HEADER.unpack(msg[:8]))
                update = {"v": 1,
                          "start": {"x": 0, "y": 0, "w": 64, "h": 64},
                          "end": {"x": 0, "y": 0, "w": 48, "h": 48},
                          "frames": 5}
                resp = await client.put(f"/session/{sid}/crops", json=update)
                assert resp.status == 204
                for _ in range(12):
                    msg = await ws.receive_bytes(timeout=10)
                    frames.append(HEADER.unpack(msg[:8]))
                await ws.close()

                revisions = [r for (r, _) in frames]
                assert revisions == sorted(revisions)  # never a stale revision
                assert max(revisions) == min(revisions) + 1
                first_new = next(i for i, (r, _) in enumerate(frames)
                                 if r == max(revisions))
                assert frames[first_new][1] == 0  # restart from frame 0
                # within a revision the stream cycles 0, 1, 2, ...
                old = [idx for (r, idx) in frames if r == min(revisions)]
                assert old == list(range(len(old)))
            finally:
                await client.close()
        run(scenario())


class TestExport:
    def test_export_zip_matches_cli_render_byte_for_byte(self, tmp_path):
        async def scenario() -> tuple[bytes, dict]:
            client = await start_client()
            try:
                png, depth, _ = fixture_png_bytes()
                sid = await create_session(client, png, depth)
                await wait_ready(client, sid)
                update = {"v": 1,
                          "start": {"x": 0, "y": 0, "w": 64, "h": 64},
                          "end": {"x": 0, "y": 8, "w": 48, "h": 48},
                          "frames": 3}
                resp = await client.put(f"/session/{sid}/crops", json=update)
                assert resp.status == 204
                resp = await client.get(f"/session/{sid}/export?frames=3")
                assert resp.status == 200
                status = await (await client.get(f"/session/{sid}/status")).json()
                return await resp.read(), status["spec"]
            finally:
                await client.close()

        payload, spec_doc = run(scenario())
        archive = zipfile.ZipFile(io.BytesIO(payload))
        names = sorted(archive.namelist())
        assert names == ["00000.png", "00001.png", "00002.png"]

        # Re-render the identical spec through the CLI and compare bytes.
        scene = make_two_plane_scene(size=64, fg_depth=1.0, bg_depth=4.0)
        image = tmp_path / "image.png"
        depth_path = tmp_path / "depth.pfm"
        fileio.write_png(image, scene.img)
        fileio.write_depth(depth_path, scene.depth)
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec_doc))
        out = tmp_path / "cli_frames"
        assert cli_main(["render", "--image", str(image), "--depth", str(depth_path),
                         "--spec", str(spec_path), "--out", str(out)]) == 0
        for name in names:
            assert archive.read(name) == (out / name).read_bytes(), name

    def test_export_before_ready_is_409_or_ready(self):
        async def scenario():
            client = await start_client()
            try:
                png, depth, _ = fixture_png_bytes()
                sid = await create_session(client, png, depth)
                resp = await client.get(f"/session/{sid}/export?frames=2")
                assert resp.status in (200, 409)  # upload is fast on tiny fixtures
            finally:
                await client.close()
        run(scenario())


class TestLoopbackThroughput:
    def test_preview_sustains_at_least_5_fps(self):
        async def scenario():
            client = await start_client(ServiceConfig(autocrop=False, preview_fps=30.0))
            try:
                scene = make_two_plane_scene(size=256, fg_depth=1.0, bg_depth=4.0)
                png = fileio.encode_png(scene.img)
                fileio.write_depth("/tmp/_svc_b.pfm", scene.depth)
                depth = Path("/tmp/_svc_b.pfm").read_bytes()
                sid = await create_session(client, png, depth)
                await wait_ready(client, sid, timeout=60)
                ws = await client.ws_connect(f"/session/{sid}/preview")
                start = time.monotonic()
                frames = 0
                while time.monotonic() - start < 10.0:
                    await ws.receive_bytes(timeout=10)
                    frames += 1
                elapsed = time.monotonic() - start
                await ws.close()
                fps = frames / elapsed
                print(f"loopback preview: {frames} frames in {elapsed:.1f}s = {fps:.1f} fps")
                assert fps >= 5.0
            finally:
                await client.close()
        run(scenario())


class TestConcurrentSessions:
    def test_two_sessions_stream_independently(self):
        async def scenario():
            client = await start_client()
            try:
                png_a, depth_a, _ = fixture_png_bytes(48)
                png_b, depth_b, _ = fixture_png_bytes(64)
                sid_a = await create_session(client, png_a, depth_a)
                sid_b = await create_session(client, png_b, depth_b)
                await asyncio.gather(wait_ready(client, sid_a),
                                     wait_ready(client, sid_b))

                # mutate only session A; B's revision must not move
                update = {"v": 1,
                          "start": {"x": 0, "y": 0, "w": 48, "h": 48},
                          "end": {"x": 4, "y": 4, "w": 40, "h": 40},
                          "frames": 4}
                resp = await client.put(f"/session/{sid_a}/crops", json=update)
                assert resp.status == 204

                async def read_frames(sid: str, n: int):
                    ws = await client.ws_connect(f"/session/{sid}/preview")
                    out = []
                    for _ in range(n):
                        msg = await ws.receive_bytes(timeout=15)
                        out.append(HEADER.unpack(msg[:8]))
                    await ws.close()
                    return out

                frames_a, frames_b = await asyncio.gather(
                    read_frames(sid_a, 4), read_frames(sid_b, 4))
                assert all(rev == 2 for rev, _ in frames_a)
                assert all(rev == 1 for rev, _ in frames_b)
                status_b = await (await client.get(f"/session/{sid_b}/status")).json()
                assert status_b["revision"] == 1
            finally:
                await client.close()
        run(scenario())
