"""Overlap, surface-distance and uncertainty-filtration metrics.

All masks are boolean (or 0/1) arrays of one shape. Undefined ratios are
reported as ``nan``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ShapeMismatch
from .volume import REGIONS, LabelMask, UncertaintyMapSet, labels_to_regions

BRATS_MISSING_HD95 = 373.1287


@dataclass(frozen=True)
class MetricsConfig:
    hd_percentile: float = 95.0
    hd_empty_sentinel: float = BRATS_MISSING_HD95
    filtration_thresholds: tuple[int, ...] = tuple(range(0, 101, 5))


def _pair(u, v):
    u = np.asarray(u, dtype=bool)
    v = np.asarray(v, dtype=bool)
    if u.shape != v.shape:
        raise ShapeMismatch(f"{u.shape} vs {v.shape}")
    return u, v


def dsc(u, v) -> float:
    """Dice similarity; 1 when both masks are empty."""
    u, v = _pair(u, v)
    total = int(u.sum()) + int(v.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(u & v)) / total


def confusion(pred, truth) -> tuple[int, int, int, int]:
    """``(tp, fp, fn, tn)`` voxel counts."""
    pred, truth = _pair(pred, truth)
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    return tp, fp, fn, pred.size - tp - fp - fn


def sensitivity_specificity(pred, truth) -> tuple[float, float]:
    tp, fp, fn, tn = confusion(pred, truth)
    sens = tp / (tp + fn) if tp + fn else math.nan
    spec = tn / (tn + fp) if tn + fp else math.nan
    return sens, spec


def boundary(mask) -> np.ndarray:
    """Foreground voxels with at least one unset 6-neighbor (outside counts as unset)."""
    mask = np.asarray(mask, dtype=bool)
    inner = ndimage.binary_erosion(mask, ndimage.generate_binary_structure(3, 1), border_value=0)
    return mask & ~inner


def directed_surface_distances(u, v, spacing=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Distance from every boundary voxel of ``u`` to the nearest boundary voxel of ``v``."""
    bu, bv = boundary(u), boundary(v)
    dist = ndimage.distance_transform_edt(~bv, sampling=tuple(float(s) for s in spacing))
    return dist[bu]


def _hd(u, v, spacing, reduce, sentinel):
    u, v = _pair(u, v)
    nu, nv = u.any(), v.any()
    if not nu and not nv:
        return 0.0
    if not nu or not nv:
        return float(sentinel)
    return float(max(reduce(directed_surface_distances(u, v, spacing)),
                     reduce(directed_surface_distances(v, u, spacing))))


def hd95(u, v, spacing=(1.0, 1.0, 1.0), percentile: float = 95.0,
         empty_sentinel: float = BRATS_MISSING_HD95) -> float:
    """Symmetric percentile Hausdorff distance between mask boundaries, in mm.

    Each directed distance list is reduced with a linearly interpolated
    percentile before taking the maximum of the two directions.
    """
    return _hd(u, v, spacing, lambda d: np.percentile(d, percentile), empty_sentinel)


def hausdorff(u, v, spacing=(1.0, 1.0, 1.0), empty_sentinel: float = BRATS_MISSING_HD95) -> float:
    return _hd(u, v, spacing, np.max, empty_sentinel)


@dataclass
class FiltrationCurve:
    thresholds: list[int]
    dice_at_tau: list[float] = field(default_factory=list)
    ftp_ratio_at_tau: list[float] = field(default_factory=list)
    ftn_ratio_at_tau: list[float] = field(default_factory=list)


def filtration_curve(pred, truth, unc, thresholds=tuple(range(0, 101, 5))) -> FiltrationCurve:
    """Score the prediction after discarding voxels more uncertain than each threshold.

    At threshold ``tau`` only voxels with ``unc <= tau`` are kept. The
    filtered-TP ratio is ``1 - TP_tau / TP_all`` (likewise for TN), taken
    as 0 when the unfiltered count is 0.
    """
    pred, truth = _pair(pred, truth)
    unc = np.asarray(unc)
    if unc.shape != pred.shape:
        raise ShapeMismatch(f"uncertainty {unc.shape} vs masks {pred.shape}")
    tp_mask = pred & truth
    tn_mask = ~pred & ~truth
    tp0, tn0 = int(tp_mask.sum()), int(tn_mask.sum())
    curve = FiltrationCurve(list(thresholds))
    for tau in curve.thresholds:
        keep = unc <= tau
        curve.dice_at_tau.append(dsc(pred & keep, truth & keep))
        tp, tn = int((tp_mask & keep).sum()), int((tn_mask & keep).sum())
        curve.ftp_ratio_at_tau.append(1.0 - tp / tp0 if tp0 else 0.0)
        curve.ftn_ratio_at_tau.append(1.0 - tn / tn0 if tn0 else 0.0)
    return curve


def dauc_rftp_rftn(curve: FiltrationCurve) -> tuple[float, float, float]:
    """Mean filtered Dice, filtered-TP ratio and filtered-TN ratio, in percent."""
    return (100.0 * float(np.mean(curve.dice_at_tau)),
            100.0 * float(np.mean(curve.ftp_ratio_at_tau)),
            100.0 * float(np.mean(curve.ftn_ratio_at_tau)))


# ---------------------------------------------------------------------------
# Per-case evaluation and CSV reports

COLUMNS = ("case", "region", "dsc", "sens", "spec", "hd95", "dauc", "rftp", "rftn")


def evaluate_case(case: str, pred: LabelMask, truth: LabelMask,
                  unc: UncertaintyMapSet | None = None,
                  config: MetricsConfig | None = None) -> list[dict]:
    """One row per region with segmentation and (optionally) uncertainty metrics."""
    config = config or MetricsConfig()
    pr, tr = labels_to_regions(pred), labels_to_regions(truth)
    rows = []
    for region in REGIONS:
        u, v = pr[region], tr[region]
        sens, spec = sensitivity_specificity(u, v)
        row = {
            "case": case, "region": region, "dsc": dsc(u, v), "sens": sens, "spec": spec,
            "hd95": hd95(u, v, truth.spacing, config.hd_percentile, config.hd_empty_sentinel),
            "dauc": math.nan, "rftp": math.nan, "rftn": math.nan,
        }
        if unc is not None:
            curve = filtration_curve(u, v, unc[region], config.filtration_thresholds)
            row["dauc"], row["rftp"], row["rftn"] = dauc_rftp_rftn(curve)
        rows.append(row)
    return rows


def summarize(rows: list[dict]) -> list[dict]:
    """Per-region mean and standard error rows (``case`` = "mean" / "se")."""
    out = []
    for region in REGIONS:
        sub = [r for r in rows if r["region"] == region]
        mean_row = {"case": "mean", "region": region}
        se_row = {"case": "se", "region": region}
        for col in COLUMNS[2:]:
            vals = np.array([r[col] for r in sub], dtype=float)
            vals = vals[np.isfinite(vals)]
            mean_row[col] = float(vals.mean()) if vals.size else math.nan
            se_row[col] = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
        out += [mean_row, se_row]
    return out


def write_metrics_csv(rows: list[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS)
        writer.writeheader()
        for row in list(rows) + summarize(rows):
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
