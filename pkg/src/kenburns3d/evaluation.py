"""Depth-prediction evaluation: scale/shift alignment and depth quality metrics.

Monocular predictions are scale/shift ambiguous, so every metric is computed
after fitting ``gt ~ s * pred + b``.  The default fit minimizes the sum of
absolute errors (least absolute deviations), taking "minimize the absolute
error" literally; least squares is available behind ``method="l2"`` for
comparison.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy import ndimage, sparse
from scipy.optimize import linprog

from .core import DegenerateInputError, DepthMap, Intrinsics, KenBurnsError, ValidationError

DEPTH_FLOOR = 1e-8
DBE_TRUNCATION = 10.0
DBE_EDGE_FRACTION = 0.1  # threshold = fraction * (p95 - p5) of valid depth
DDE_DISTANCE = 3.0
ALIGN_MAX_SAMPLES = 2000
ALIGN_SEED = 0


@dataclass(frozen=True)
class MetricReport:
    """All metric columns for one prediction/ground-truth pair after alignment.

    PE and DBE columns are None when no plane annotations / edge maps were
    supplied; every other column is always present.
    """

    rel: float
    log10: float
    rms: float
    sigma1: float
    sigma2: float
    sigma3: float
    dde0: float
    ddePlus: float
    ddeMinus: float
    pe_plan: float | None = None
    pe_orie: float | None = None
    dbe_acc: float | None = None
    dbe_comp: float | None = None

    def __post_init__(self):
        if not (self.sigma1 <= self.sigma2 <= self.sigma3):
            raise ValidationError(
                f"sigma columns must be monotone: {self.sigma1}, {self.sigma2}, {self.sigma3}")
        total = self.dde0 + self.ddePlus + self.ddeMinus
        if abs(total - 100.0) > 1e-9:
            raise ValidationError(f"DDE columns must sum to 100, got {total!r}")

    COLUMNS = ("rel", "log10", "rms", "sigma1", "sigma2", "sigma3",
               "pe_plan", "pe_orie", "dbe_acc", "dbe_comp",
               "dde0", "ddePlus", "ddeMinus")

    def to_json(self) -> str:
        payload = {"v": 1}
        payload.update({k: asdict(self)[k] for k in self.COLUMNS})
        return json.dumps(payload, indent=2)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        row = [asdict(self)[k] for k in self.COLUMNS]
        writer.writerow(["" if v is None else repr(v) for v in row])
        return out.getvalue()


@dataclass(frozen=True)
class AlignResult:
    scale: float
    shift: float
    aligned: np.ndarray  # s * pred + b over the full raster (may be non-positive)
    mask: np.ndarray     # joint validity used for the fit
    objective: float     # sum of absolute residuals over the joint mask


def _joint_valid(pred: DepthMap, gt: DepthMap) -> np.ndarray:
    if pred.values.shape != gt.values.shape:
        raise ValidationError(
            f"dimension mismatch: pred {pred.values.shape} vs gt {gt.values.shape}")
    return pred.mask & gt.mask


def _lad_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Exact LAD line fit via the LP  min sum t  s.t.  |s*x + b - y| <= t."""
    n = x.size
    ones = np.ones(n)
    rows = np.arange(n)
    # Constraint matrix: [ x  1 -I ; -x -1 -I ] (s, b, t_1..t_n).
    data = np.concatenate([x, ones, -ones, -x, -ones, -ones])
    row_idx = np.concatenate([rows, rows, rows, rows + n, rows + n, rows + n])
    col_idx = np.concatenate([np.zeros(n), ones, rows + 2,
                              np.zeros(n), ones, rows + 2]).astype(np.int64)
    a_ub = sparse.csr_matrix((data, (row_idx, col_idx)), shape=(2 * n, n + 2))
    b_ub = np.concatenate([y, -y])
    c = np.concatenate([[0.0, 0.0], np.ones(n)])
    bounds = [(None, None), (None, None)] + [(0.0, None)] * n
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success:
        raise KenBurnsError(f"LAD alignment LP failed: {res.message}")
    return float(res.x[0]), float(res.x[1])


def _irls_lad(x: np.ndarray, y: np.ndarray, s: float, b: float,
              iters: int = 15, delta: float = 1e-9) -> tuple[float, float]:
    """Polish an LAD fit by iteratively reweighted least squares."""
    for _ in range(iters):
        r = np.abs(s * x + b - y)
        w = 1.0 / np.maximum(r, delta)
        sw = w.sum()
        sx = (w * x).sum()
        sy = (w * y).sum()
        sxx = (w * x * x).sum()
        sxy = (w * x * y).sum()
        det = sw * sxx - sx * sx
        if det <= 0:
            break
        s_new = (sw * sxy - sx * sy) / det
        b_new = (sxx * sy - sx * sxy) / det
        if not (np.isfinite(s_new) and np.isfinite(b_new)):
            break
        s, b = float(s_new), float(b_new)
    return s, b


def align_scale_shift(pred: DepthMap, gt: DepthMap, method: str = "l1",
                      max_samples: int = ALIGN_MAX_SAMPLES,
                      seed: int = ALIGN_SEED) -> AlignResult:
    """Fit (s, b) minimizing the chosen error of s*pred + b against gt.

    For ``method="l1"`` the fit is solved exactly on up to max_samples valid
    pixels (uniform fixed-seed subsample above that) and then polished by IRLS
    on all valid pixels; the better of the two candidates under the full-data
    objective wins.
    """
    valid = _joint_valid(pred, gt)
    x_all = pred.values[valid]
    y_all = gt.values[valid]
    if x_all.size < 2:
        raise DegenerateInputError(
            f"alignment needs >= 2 valid overlapping pixels, found {x_all.size}")
    if np.ptp(x_all) == 0.0:
        raise DegenerateInputError("prediction is constant; scale is unidentifiable")

    if method == "l2":
        a = np.stack([x_all, np.ones_like(x_all)], axis=1)
        (s, b), *_ = np.linalg.lstsq(a, y_all, rcond=None)
        s, b = float(s), float(b)
    elif method == "l1":
        if x_all.size > max_samples:
            rng = np.random.default_rng(seed)
            pick = np.sort(rng.choice(x_all.size, size=max_samples, replace=False))
            x, y = x_all[pick], y_all[pick]
        else:
            x, y = x_all, y_all
        s, b = _lad_fit(x, y)
        s2, b2 = _irls_lad(x_all, y_all, s, b)
        if np.abs(s2 * x_all + b2 - y_all).sum() < np.abs(s * x_all + b - y_all).sum():
            s, b = s2, b2
    else:
        raise ValidationError(f"unknown alignment method {method!r}")

    aligned = s * pred.values + b
    objective = float(np.abs(aligned[valid] - y_all).sum())
    return AlignResult(scale=s, shift=b, aligned=aligned, mask=valid, objective=objective)


# ---------------------------------------------------------------------------
# Standard metrics
# ---------------------------------------------------------------------------

def standard_metrics(aligned: np.ndarray, gt: DepthMap,
                     mask: np.ndarray | None = None
                     ) -> tuple[float, float, float, float, float, float]:
    """(rel, log10, rms, sigma1, sigma2, sigma3) over the valid overlap.

    The aligned prediction is clamped to DEPTH_FLOOR before the ratio/log
    metrics (rel, log10, sigma); rms uses the unclamped values.
    """
    aligned = np.asarray(aligned, dtype=np.float64)
    valid = gt.mask if mask is None else (gt.mask & mask)
    if not valid.any():
        raise DegenerateInputError("empty valid overlap")
    d_raw = aligned[valid]
    d_hat = gt.values[valid]
    d = np.maximum(d_raw, DEPTH_FLOOR)
    n = d.size

    # Correctly rounded means keep results independent of reduction order.
    rel = math.fsum(np.abs(d - d_hat) / d_hat) / n
    log10 = math.fsum(np.abs(np.log10(d) - np.log10(d_hat))) / n
    rms = math.sqrt(math.fsum((d_raw - d_hat) ** 2) / n)
    ratio = np.maximum(d / d_hat, d_hat / d)
    sigmas = tuple(int(np.count_nonzero(ratio < 1.25 ** i)) / n for i in (1, 2, 3))
    return (rel, log10, rms) + sigmas


# ---------------------------------------------------------------------------
# Planarity error
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlaneRegion:
    """Annotated planar region: pixel mask plus ground-truth plane n . p = offset."""

    mask: np.ndarray
    normal: np.ndarray
    offset: float

    def unit(self) -> tuple[np.ndarray, float]:
        n = np.asarray(self.normal, dtype=np.float64)
        length = float(np.linalg.norm(n))
        if length == 0:
            raise ValidationError("plane normal must be non-zero")
        return n / length, self.offset / length


def unproject_pixels(depth_values: np.ndarray, rows: np.ndarray, cols: np.ndarray,
                     intrinsics: Intrinsics) -> np.ndarray:
    """Pinhole unprojection of pixel centers (col + 0.5, row + 0.5) at given depths."""
    d = depth_values[rows, cols]
    u = cols + 0.5
    v = rows + 0.5
    x = d * (u - intrinsics.cx) / intrinsics.fx
    y = d * (v - intrinsics.cy) / intrinsics.fy
    return np.stack([x, y, d], axis=1)


def _fit_plane(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Total-least-squares plane through points; returns (unit normal, offset)."""
    centroid = points.mean(axis=0)
    centered = points - centroid
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    if svals.size < 3 or svals[1] < 1e-12 * max(svals[0], 1.0):
        raise DegenerateInputError("plane region is collinear (or nearly so)")
    normal = vt[2]
    return normal, float(normal @ centroid)


def planarity_error(aligned: np.ndarray, regions: list[PlaneRegion],
                    intrinsics: Intrinsics) -> tuple[float, float]:
    """(mean point-to-gt-plane distance in cm, fitted-vs-gt normal angle in deg)."""
    if not regions:
        raise ValidationError("planarity_error needs at least one region")
    aligned = np.asarray(aligned, dtype=np.float64)
    plan_cm = []
    orie_deg = []
    for region in regions:
        rows, cols = np.nonzero(region.mask)
        if rows.size < 3:
            raise DegenerateInputError(f"plane region has only {rows.size} pixels")
        pts = unproject_pixels(aligned, rows, cols, intrinsics)
        n_gt, off_gt = region.unit()
        plan_cm.append(float(np.mean(np.abs(pts @ n_gt - off_gt))) * 100.0)
        n_fit, _ = _fit_plane(pts)
        cosang = min(1.0, abs(float(n_fit @ n_gt)))
        orie_deg.append(math.degrees(math.acos(cosang)))
    return float(np.mean(plan_cm)), float(np.mean(orie_deg))


def load_plane_annotations(path: str | Path) -> list[PlaneRegion]:
    """Read {regions: [{mask_png, normal: [3], offset}]} with masks beside the JSON."""
    from .fileio import read_label_png

    path = Path(path)
    doc = json.loads(path.read_text())
    regions = []
    for entry in doc.get("regions", []):
        mask = read_label_png(path.parent / entry["mask_png"]) > 0
        regions.append(PlaneRegion(mask=mask,
                                   normal=np.asarray(entry["normal"], dtype=np.float64),
                                   offset=float(entry["offset"])))
    return regions


# ---------------------------------------------------------------------------
# Depth boundary error
# ---------------------------------------------------------------------------

def detect_depth_edges(aligned: np.ndarray, mask: np.ndarray | None = None,
                       fraction: float = DBE_EDGE_FRACTION) -> np.ndarray:
    """Binary edge raster: forward-difference gradient magnitude above threshold.

    The threshold adapts per image: fraction * (p95 - p5) of the valid depths.
    """
    d = np.asarray(aligned, dtype=np.float64)
    valid = np.ones(d.shape, dtype=bool) if mask is None else mask
    vals = d[valid]
    if vals.size == 0:
        return np.zeros(d.shape, dtype=bool)
    p5, p95 = np.percentile(vals, [5, 95])
    threshold = fraction * (p95 - p5)
    gx = np.zeros(d.shape)
    gy = np.zeros(d.shape)
    gx[:, :-1] = d[:, 1:] - d[:, :-1]
    gy[:-1, :] = d[1:, :] - d[:-1, :]
    magnitude = np.hypot(gx, gy)
    return (magnitude > threshold) & valid


def truncated_chamfer(from_edges: np.ndarray, to_edges: np.ndarray,
                      cap: float = DBE_TRUNCATION) -> float:
    """Mean truncated Euclidean distance from each from-pixel to the nearest to-pixel."""
    if not from_edges.any():
        return 0.0
    if not to_edges.any():
        return cap
    dist = ndimage.distance_transform_edt(~to_edges)
    return float(np.minimum(dist[from_edges], cap).mean())


def depth_boundary_error(aligned: np.ndarray, gt_edges: np.ndarray,
                         mask: np.ndarray | None = None,
                         cap: float = DBE_TRUNCATION) -> tuple[float, float]:
    """(accuracy, completeness) truncated chamfer distances in pixels."""
    gt_edges = np.asarray(gt_edges, dtype=bool)
    aligned = np.asarray(aligned, dtype=np.float64)
    if aligned.shape != gt_edges.shape:
        raise ValidationError(
            f"dimension mismatch: depth {aligned.shape} vs edges {gt_edges.shape}")
    pred_edges = detect_depth_edges(aligned, mask)
    acc = truncated_chamfer(pred_edges, gt_edges, cap)
    comp = truncated_chamfer(gt_edges, pred_edges, cap)
    return acc, comp


# ---------------------------------------------------------------------------
# Depth directed error
# ---------------------------------------------------------------------------

def depth_directed_error(aligned: np.ndarray, gt: DepthMap,
                         distance: float = DDE_DISTANCE,
                         mask: np.ndarray | None = None
                         ) -> tuple[float, float, float]:
    """Front/behind classification agreement at a reference distance, in percent.

    A pixel is "front" when its depth is strictly below `distance`.  Returns
    (correctly classified, predicted-front-but-behind, predicted-behind-but-front).
    """
    aligned = np.asarray(aligned, dtype=np.float64)
    valid = gt.mask if mask is None else (gt.mask & mask)
    if not valid.any():
        raise DegenerateInputError("empty valid overlap")
    pred_front = aligned[valid] < distance
    gt_front = gt.values[valid] < distance
    n = pred_front.size
    e0 = float(np.count_nonzero(pred_front == gt_front)) / n * 100.0
    eplus = float(np.count_nonzero(pred_front & ~gt_front)) / n * 100.0
    eminus = float(np.count_nonzero(~pred_front & gt_front)) / n * 100.0
    return e0, eplus, eminus


# ---------------------------------------------------------------------------
# Full report
# ---------------------------------------------------------------------------

def compute_metric_report(pred: DepthMap, gt: DepthMap,
                          planes: list[PlaneRegion] | None = None,
                          gt_edges: np.ndarray | None = None,
                          intrinsics: Intrinsics | None = None,
                          method: str = "l1") -> MetricReport:
    """Align the prediction, then evaluate every applicable metric column."""
    result = align_scale_shift(pred, gt, method=method)
    rel, log10, rms, s1, s2, s3 = standard_metrics(result.aligned, gt, result.mask)
    dde0, dplus, dminus = depth_directed_error(result.aligned, gt, mask=result.mask)
    pe_plan = pe_orie = dbe_acc = dbe_comp = None
    if planes:
        if intrinsics is None:
            intrinsics = Intrinsics.default_for(gt.width, gt.height)
        pe_plan, pe_orie = planarity_error(result.aligned, planes, intrinsics)
    if gt_edges is not None:
        dbe_acc, dbe_comp = depth_boundary_error(result.aligned, gt_edges, result.mask)
    return MetricReport(rel=rel, log10=log10, rms=rms,
                        sigma1=s1, sigma2=s2, sigma3=s3,
                        dde0=dde0, ddePlus=dplus, ddeMinus=dminus,
                        pe_plan=pe_plan, pe_orie=pe_orie,
                        dbe_acc=dbe_acc, dbe_comp=dbe_comp)
