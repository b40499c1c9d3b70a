"""Domain types, coordinate conventions, and conversions shared by all modules.

Conventions used throughout the package:

* Rasters are numpy arrays indexed ``[row, col]`` = ``[i, j]``; ``i`` grows
  downward (y), ``j`` grows rightward (x).
* The center of pixel ``(i, j)`` sits at image coordinates ``(j + 0.5, i + 0.5)``.
* Depth maps store metric depth ``d > 0``; inverse depth is ``1 / d``.
* The virtual camera is a translation-only pinhole camera (identity rotation);
  camera-space depth of a scene point ``p`` seen from pose ``t`` is ``p.z - t.z``.
* When no calibration is supplied, intrinsics default to
  ``fx = fy = max(width, height)``, ``cx = width / 2``, ``cy = height / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

ASPECT_TOL = 1e-6


class KenBurnsError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(KenBurnsError):
    """Input violates a documented precondition or type invariant."""


class DegenerateInputError(KenBurnsError):
    """Input is well-formed but makes the requested quantity unidentifiable."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.flags.writeable = False
    return out


class ImageBuffer:
    """RGB raster with values normalized to [0, 1] (8-bit sources divided by 255)."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3 or values.shape[2] != 3:
            raise ValidationError(f"image must be (H, W, 3), got {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValidationError("image must be at least 1x1")
        if not np.all(np.isfinite(values)):
            raise ValidationError("image contains non-finite values")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValidationError(
                f"image values outside [0, 1]: min={values.min()}, max={values.max()}"
            )
        self.values = _readonly(values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_uint8(cls, raw: np.ndarray) -> "ImageBuffer":
        return cls(np.asarray(raw, dtype=np.float64) / 255.0)

    def to_uint8(self) -> np.ndarray:
        return np.round(self.values * 255.0).astype(np.uint8)


class DepthMap:
    """Per-pixel metric depth with an optional validity mask for sparse ground truth.

    Every valid value must be finite and strictly positive.  Invalid pixels may
    hold any placeholder value; they are ignored by all consumers.
    """

    def __init__(self, values: np.ndarray, mask: np.ndarray | None = None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValidationError(f"depth must be (H, W), got {values.shape}")
        if mask is None:
            mask = np.ones(values.shape, dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != values.shape:
                raise ValidationError("depth mask shape mismatch")
        bad = mask & ~(np.isfinite(values) & (values > 0))
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValidationError(
                f"depth has non-positive or non-finite value {values[i, j]!r} "
                f"at valid pixel (row={i}, col={j})"
            )
        self.values = _readonly(values)
        self.mask = _readonly(mask)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def all_valid(self) -> bool:
        return bool(self.mask.all())


class InverseDepthMap:
    """Per-pixel inverse depth (1 / d); non-negative, zero meaning depth at infinity."""

    def __init__(self, values: np.ndarray, mask: np.ndarray | None = None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValidationError(f"inverse depth must be (H, W), got {values.shape}")
        if mask is None:
            mask = np.ones(values.shape, dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != values.shape:
                raise ValidationError("inverse depth mask shape mismatch")
        bad = mask & ~(np.isfinite(values) & (values >= 0))
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValidationError(
                f"inverse depth has negative or non-finite value {values[i, j]!r} "
                f"at valid pixel (row={i}, col={j})"
            )
        self.values = _readonly(values)
        self.mask = _readonly(mask)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(f"focal lengths must be positive: fx={self.fx}, fy={self.fy}")

    @classmethod
    def default_for(cls, width: int, height: int) -> "Intrinsics":
        # Documented default used when no calibration accompanies an image.
        f = float(max(width, height))
        return cls(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0)

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class CameraPose:
    """Translation-only camera pose (rotation fixed to identity).

    Scene units are those of the depth map.  Camera-space depth of a point p
    is ``p.z - tz``, so positive tz moves the camera forward into the scene.
    """

    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def __post_init__(self):
        for name in ("tx", "ty", "tz"):
            if not np.isfinite(getattr(self, name)):
                raise ValidationError(f"pose component {name} is not finite")

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(0.0, 0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz], dtype=np.float64)

    def lerp(self, other: "CameraPose", t: float) -> "CameraPose":
        a, b = self.as_array(), other.as_array()
        v = a + (b - a) * t
        return CameraPose(float(v[0]), float(v[1]), float(v[2]))


@dataclass(frozen=True)
class CropViolation:
    field: str
    reason: str  # one of: "size", "aspect", "bounds"
    detail: str


@dataclass(frozen=True)
class CropWindow:
    """Axis-aligned crop rectangle in source-image pixels (real-valued).

    A window is only meaningful relative to a source image: its aspect ratio
    must match the image's within ASPECT_TOL and it must lie fully inside the
    image.  Use :meth:`create` to construct a validated window.
    """

    x: float
    y: float
    w: float
    h: float

    @staticmethod
    def violations(x: float, y: float, w: float, h: float,
                   image_width: int, image_height: int) -> list[CropViolation]:
        out: list[CropViolation] = []
        for name, v in (("x", x), ("y", y), ("w", w), ("h", h)):
            if not np.isfinite(v):
                out.append(CropViolation(name, "size", f"{name} is not finite"))
        if out:
            return out
        if w <= 0:
            out.append(CropViolation("w", "size", f"w must be positive, got {w}"))
        if h <= 0:
            out.append(CropViolation("h", "size", f"h must be positive, got {h}"))
        if out:
            return out
        aspect = image_width / image_height
        if abs(w / h - aspect) > ASPECT_TOL:
            out.append(CropViolation(
                "w", "aspect",
                f"w/h = {w / h:.9f} does not match image aspect {aspect:.9f}"))
        if x < 0:
            out.append(CropViolation("x", "bounds", f"x = {x} < 0"))
        if y < 0:
            out.append(CropViolation("y", "bounds", f"y = {y} < 0"))
        if x + w > image_width:
            out.append(CropViolation("w", "bounds", f"x + w = {x + w} > {image_width}"))
        if y + h > image_height:
            out.append(CropViolation("h", "bounds", f"y + h = {y + h} > {image_height}"))
        return out

    @classmethod
    def create(cls, x: float, y: float, w: float, h: float,
               image_width: int, image_height: int) -> "CropWindow":
        bad = cls.violations(x, y, w, h, image_width, image_height)
        if bad:
            raise ValidationError(
                "invalid crop window: " + "; ".join(f"{v.field}: {v.detail} ({v.reason})" for v in bad)
            )
        return cls(float(x), float(y), float(w), float(h))

    @classmethod
    def full(cls, image_width: int, image_height: int) -> "CropWindow":
        return cls(0.0, 0.0, float(image_width), float(image_height))

    @classmethod
    def centered(cls, scale: float, image_width: int, image_height: int) -> "CropWindow":
        w, h = image_width * scale, image_height * scale
        return cls.create((image_width - w) / 2.0, (image_height - h) / 2.0,
                          w, h, image_width, image_height)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class CameraPath:
    """Linear camera path sampled uniformly into frame_count poses."""

    start: CameraPose
    end: CameraPose
    frame_count: int

    def __post_init__(self):
        if self.frame_count < 1:
            raise ValidationError(f"frame_count must be >= 1, got {self.frame_count}")

    def poses(self) -> list[CameraPose]:
        if self.frame_count == 1:
            return [self.start]
        return [self.start.lerp(self.end, k / (self.frame_count - 1))
                for k in range(self.frame_count)]


class SegMaskSet:
    """Instance label map (0 = background, k >= 1 = instance k) plus salience flags.

    Labels must be contiguous from 0; instances are disjoint by construction
    since each pixel carries exactly one label.
    """

    def __init__(self, labels: np.ndarray, salient: Sequence[int] = ()):
        labels = np.asarray(labels)
        if labels.ndim != 2:
            raise ValidationError(f"label map must be (H, W), got {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValidationError("label map must be integer-typed")
        labels = labels.astype(np.int32)
        if labels.min() < 0:
            raise ValidationError("labels must be non-negative")
        present = np.unique(labels)
        expected = np.arange(present[-1] + 1) if present.size else np.array([0])
        if present.size != expected.size or not np.array_equal(present, expected):
            raise ValidationError(
                f"labels must be contiguous from 0, found {present.tolist()}"
            )
        bad_salient = [s for s in salient if s < 1 or s > int(present[-1])]
        if bad_salient:
            raise ValidationError(f"salient ids not present as instances: {bad_salient}")
        self.labels = _readonly(labels)
        self.salient = frozenset(int(s) for s in salient)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def instance_count(self) -> int:
        return int(self.labels.max())

    def instance_mask(self, instance_id: int) -> np.ndarray:
        return self.labels == instance_id


# ---------------------------------------------------------------------------
# Conversions
# ---------------------------------------------------------------------------

def depth_to_inverse(depth: DepthMap) -> InverseDepthMap:
    """Convert metric depth to inverse depth; validity is preserved."""
    values = np.where(depth.mask, 1.0 / np.where(depth.mask, depth.values, 1.0), 0.0)
    return InverseDepthMap(values, depth.mask)


def inverse_to_depth(inv: InverseDepthMap) -> DepthMap:
    """Convert inverse depth back to metric depth.

    Pixels with inverse depth 0 (depth at infinity) become invalid in the result.
    """
    finite = inv.mask & (inv.values > 0)
    values = np.where(finite, 1.0 / np.where(finite, inv.values, 1.0), 1.0)
    return DepthMap(values, finite)


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def _resize_axis_coords(out_size: int, in_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Pixel-center mapping: dst center (k + 0.5) lands at src (k + 0.5) * in/out.
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1.0)
    lo = np.floor(src).astype(np.int64)
    lo = np.minimum(lo, in_size - 1)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of a (H, W) or (H, W, C) array with pixel-center alignment."""
    in_h, in_w = arr.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return arr.copy()
    ylo, yhi, fy = _resize_axis_coords(out_h, in_h)
    xlo, xhi, fx = _resize_axis_coords(out_w, in_w)
    if arr.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    a = arr[np.ix_(ylo, xlo)]
    b = arr[np.ix_(ylo, xhi)]
    c = arr[np.ix_(yhi, xlo)]
    d = arr[np.ix_(yhi, xhi)]
    top = a * (1.0 - fx) + b * fx
    bot = c * (1.0 - fx) + d * fx
    return top * (1.0 - fy) + bot * fy


def resize_nearest(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resample; the right choice for label maps."""
    in_h, in_w = arr.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return arr.copy()
    ys = np.minimum((np.floor((np.arange(out_h) + 0.5) * (in_h / out_h))).astype(np.int64), in_h - 1)
    xs = np.minimum((np.floor((np.arange(out_w) + 0.5) * (in_w / out_w))).astype(np.int64), in_w - 1)
    return arr[np.ix_(ys, xs)]


def max_dim_size(width: int, height: int, max_dim: int) -> tuple[int, int]:
    """Target (width, height) whose largest dimension is max_dim, aspect preserved."""
    if width >= height:
        return max_dim, max(1, round(height * max_dim / width))
    return max(1, round(width * max_dim / height)), max_dim


def resize_max_dim(img: ImageBuffer, max_dim: int) -> ImageBuffer:
    """Resize so the largest dimension equals max_dim (bilinear, aspect preserved)."""
    if max_dim < 1:
        raise ValidationError(f"max_dim must be >= 1, got {max_dim}")
    out_w, out_h = max_dim_size(img.width, img.height, max_dim)
    if (out_w, out_h) == (img.width, img.height):
        return img
    resized = resize_bilinear(img.values, out_h, out_w)
    return ImageBuffer(np.clip(resized, 0.0, 1.0))


def resize_depth_max_dim(depth: DepthMap, max_dim: int) -> DepthMap:
    """Bilinear depth resize; only defined for dense (all-valid) maps."""
    if not depth.all_valid:
        raise ValidationError("cannot bilinearly resize a sparse depth map")
    out_w, out_h = max_dim_size(depth.width, depth.height, max_dim)
    if (out_w, out_h) == (depth.width, depth.height):
        return depth
    return DepthMap(resize_bilinear(depth.values, out_h, out_w))
