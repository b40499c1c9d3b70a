"""File formats: PFM rasters, 8/16-bit PNG, sidecar JSON, label maps, frame export.

Depth travels either as PFM (single-channel float, negative scale header =
little-endian) or as 16-bit PNG plus a JSON sidecar
``{"v": 1, "scale": s, "offset": b, "convention": "depth" | "inverse"}``
where ``physical = raw / 65535 * scale + offset``.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .core import DepthMap, ImageBuffer, KenBurnsError, ValidationError, depth_to_inverse, inverse_to_depth


class ParseError(KenBurnsError):
    """A file could not be decoded; the message includes the failing byte offset."""


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------

def write_pfm(path: str | Path, values: np.ndarray) -> None:
    """Write a float32 PFM (little-endian, bottom-to-top rows).

    (H, W) arrays become grayscale "Pf" files, (H, W, 3) arrays color "PF".
    """
    values = np.asarray(values, dtype=np.float32)
    if values.ndim == 2:
        magic = b"Pf\n"
    elif values.ndim == 3 and values.shape[2] == 3:
        magic = b"PF\n"
    else:
        raise ValidationError(f"PFM writer expects (H, W) or (H, W, 3), got {values.shape}")
    h, w = values.shape[:2]
    with open(path, "wb") as f:
        f.write(magic)
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(values).tobytes())


def _read_pfm_token(buf: bytes, offset: int) -> tuple[bytes, int]:
    while offset < len(buf) and buf[offset : offset + 1].isspace():
        offset += 1
    start = offset
    while offset < len(buf) and not buf[offset : offset + 1].isspace():
        offset += 1
    if start == offset:
        raise ParseError(f"unexpected end of PFM header at byte offset {start}")
    return buf[start:offset], offset


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a PFM raster; color PFMs return (H, W, 3), grayscale (H, W)."""
    buf = Path(path).read_bytes()
    magic, offset = _read_pfm_token(buf, 0)
    if magic not in (b"Pf", b"PF"):
        raise ParseError(f"not a PFM file (bad magic {magic!r} at byte offset 0)")
    channels = 3 if magic == b"PF" else 1
    try:
        wtok, offset = _read_pfm_token(buf, offset)
        htok, offset = _read_pfm_token(buf, offset)
        stok, offset = _read_pfm_token(buf, offset)
        w, h, scale = int(wtok), int(htok), float(stok)
    except ValueError as exc:
        raise ParseError(f"malformed PFM header near byte offset {offset}: {exc}") from exc
    if w < 1 or h < 1:
        raise ParseError(f"invalid PFM dimensions {w}x{h} (header ends at byte offset {offset})")
    offset += 1  # single whitespace byte terminates the header
    count = w * h * channels
    expected = count * 4
    data = buf[offset : offset + expected]
    if len(data) != expected:
        raise ParseError(
            f"truncated PFM payload: expected {expected} bytes at byte offset {offset}, "
            f"found {len(data)}"
        )
    endian = "<" if scale < 0 else ">"
    values = np.frombuffer(data, dtype=np.dtype(endian + "f4"), count=count)
    values = values.reshape(h, w, channels) if channels == 3 else values.reshape(h, w)
    return np.flipud(values).astype(np.float32).copy()


# ---------------------------------------------------------------------------
# PNG
# ---------------------------------------------------------------------------

def encode_png(img: ImageBuffer) -> bytes:
    """Deterministically encode an image as 8-bit RGB PNG."""
    out = io.BytesIO()
    Image.fromarray(img.to_uint8(), mode="RGB").save(out, format="PNG")
    return out.getvalue()


def write_png(path: str | Path, img: ImageBuffer) -> None:
    Path(path).write_bytes(encode_png(img))


def read_png(path: str | Path) -> ImageBuffer:
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        return ImageBuffer.from_uint8(np.asarray(rgb, dtype=np.uint8))


def encode_jpeg(img: ImageBuffer, quality: int = 90) -> bytes:
    out = io.BytesIO()
    Image.fromarray(img.to_uint8(), mode="RGB").save(out, format="JPEG", quality=quality)
    return out.getvalue()


def write_png16(path: str | Path, raw: np.ndarray) -> None:
    raw = np.asarray(raw)
    if raw.dtype != np.uint16 or raw.ndim != 2:
        raise ValidationError("16-bit PNG writer expects a (H, W) uint16 array")
    Image.fromarray(raw).save(path, format="PNG")


def read_png16(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise ParseError(f"{path}: expected single-channel 16-bit PNG, got shape {arr.shape}")
    return arr.astype(np.uint16)


def read_label_png(path: str | Path) -> np.ndarray:
    """Read an instance label map stored as 8- or 16-bit single-channel PNG."""
    with Image.open(path) as im:
        if im.mode == "P":
            im = im.convert("L")
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise ParseError(f"{path}: label map must be single-channel, got shape {arr.shape}")
    return arr.astype(np.int32)


def write_label_png(path: str | Path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.max(initial=0) > 65535 or labels.min(initial=0) < 0:
        raise ValidationError("label values must fit in uint16")
    if labels.max(initial=0) <= 255:
        Image.fromarray(labels.astype(np.uint8), mode="L").save(path, format="PNG")
    else:
        write_png16(path, labels.astype(np.uint16))


# ---------------------------------------------------------------------------
# Depth I/O (PFM or 16-bit PNG + sidecar)
# ---------------------------------------------------------------------------

def sidecar_path(depth_path: str | Path) -> Path:
    return Path(str(depth_path) + ".json")


def write_depth(path: str | Path, depth: DepthMap) -> None:
    """Write depth as PFM (invalid pixels stored as 0) or PNG16 + sidecar."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        values = np.where(depth.mask, depth.values, 0.0)
        write_pfm(path, values)
        return
    if path.suffix.lower() == ".png":
        valid = depth.values[depth.mask]
        if valid.size == 0:
            raise ValidationError("cannot write a depth map with no valid pixels")
        offset = float(valid.min())
        scale = float(valid.max() - valid.min())
        if scale == 0.0:
            scale = 1.0
        norm = (depth.values - offset) / scale
        raw = np.round(np.clip(norm, 0.0, 1.0) * 65534.0).astype(np.uint16) + 1
        raw = np.where(depth.mask, raw, 0).astype(np.uint16)
        write_png16(path, raw)
        meta = {
            "v": 1,
            "scale": scale * 65535.0 / 65534.0,
            "offset": offset - scale / 65534.0,
            "convention": "depth",
            "invalid_raw": 0,
        }
        sidecar_path(path).write_text(json.dumps(meta, indent=2))
        return
    raise ValidationError(f"unsupported depth format: {path.suffix}")


def read_depth(path: str | Path) -> DepthMap:
    """Read depth from PFM or 16-bit PNG (+ sidecar); see module docstring."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        values = read_pfm(path).astype(np.float64)
        if values.ndim == 3:
            raise ParseError(f"{path}: depth PFM must be grayscale")
        mask = np.isfinite(values) & (values > 0)
        return DepthMap(np.where(mask, values, 1.0), mask)
    if path.suffix.lower() == ".png":
        raw = read_png16(path)
        meta_path = sidecar_path(path)
        meta = {"scale": 1.0, "offset": 0.0, "convention": "depth"}
        if meta_path.exists():
            meta.update(json.loads(meta_path.read_text()))
        scale = float(meta.get("scale", 1.0))
        offset = float(meta.get("offset", 0.0))
        convention = meta.get("convention", "depth")
        mask = np.ones(raw.shape, dtype=bool)
        if "invalid_raw" in meta and meta["invalid_raw"] is not None:
            mask = raw != int(meta["invalid_raw"])
        physical = raw.astype(np.float64) / 65535.0 * scale + offset
        if convention == "inverse":
            from .core import InverseDepthMap

            mask = mask & (physical > 0)
            return inverse_to_depth(InverseDepthMap(np.where(mask, physical, 0.0), mask))
        if convention != "depth":
            raise ParseError(f"{meta_path}: unknown convention {convention!r}")
        mask = mask & (physical > 0) & np.isfinite(physical)
        return DepthMap(np.where(mask, physical, 1.0), mask)
    raise ValidationError(f"unsupported depth format: {path.suffix}")


# ---------------------------------------------------------------------------
# Depth colorization (for the preview UI; small built-in ramp, far = dark)
# ---------------------------------------------------------------------------

_RAMP = np.array(
    [
        (0.267, 0.005, 0.329),
        (0.283, 0.141, 0.458),
        (0.254, 0.265, 0.530),
        (0.207, 0.372, 0.553),
        (0.164, 0.471, 0.558),
        (0.128, 0.567, 0.551),
        (0.135, 0.659, 0.518),
        (0.267, 0.749, 0.441),
        (0.478, 0.821, 0.318),
        (0.741, 0.873, 0.150),
        (0.993, 0.906, 0.144),
    ],
    dtype=np.float64,
)


def colorize_depth(depth: DepthMap) -> ImageBuffer:
    """Map depth to a color ramp (near = bright); invalid pixels become black."""
    valid = depth.values[depth.mask]
    if valid.size == 0:
        return ImageBuffer(np.zeros((depth.height, depth.width, 3)))
    lo, hi = float(valid.min()), float(valid.max())
    span = hi - lo if hi > lo else 1.0
    t = np.clip(1.0 - (depth.values - lo) / span, 0.0, 1.0)
    pos = t * (len(_RAMP) - 1)
    k = np.minimum(pos.astype(np.int64), len(_RAMP) - 2)
    frac = (pos - k)[..., None]
    rgb = _RAMP[k] * (1.0 - frac) + _RAMP[k + 1] * frac
    rgb = np.where(depth.mask[..., None], rgb, 0.0)
    return ImageBuffer(np.clip(rgb, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Frame export
# ---------------------------------------------------------------------------

def frame_name(index: int) -> str:
    return f"{index:05d}.png"


def write_frame(directory: str | Path, index: int, img: ImageBuffer) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = directory / frame_name(index)
    out.write_bytes(encode_png(img))
    return out
