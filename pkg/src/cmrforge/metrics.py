"""Segmentation evaluation: Dice, Jaccard, mean surface and Hausdorff distance.

Distances are Euclidean in millimetres with anisotropic voxel spacing,
computed in 3D by default (``mode="2d"`` evaluates per slice and averages).
Surface voxels are labeled voxels with at least one differently-labeled
6-neighbor; voxels outside the array count as background. Nearest-surface
queries use an exact Euclidean distance-transform sweep; the brute-force
all-pairs scan lives in the test suite as the oracle.

Hausdorff is the true maximum by default; a percentile variant is available
but off by default.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from cmrforge.errors import InvalidArgumentError, UndefinedMetricError
from cmrforge.image import LABEL_LV, LABEL_MYO, LABEL_RV, STRUCTURE_NAMES, LabelMap

log = logging.getLogger(__name__)

EVAL_LABELS = (LABEL_LV, LABEL_MYO, LABEL_RV)

METRIC_ROWS = [
    ("dice", "Dice score"),
    ("jaccard", "Jaccard index"),
    ("msd_mm", "Surface distance (mm)"),
    ("hausdorff_mm", "Hausdorff distance (mm)"),
]


def _masks(pred, gt, label):
    a = np.asarray(pred.data if isinstance(pred, LabelMap) else pred)
    b = np.asarray(gt.data if isinstance(gt, LabelMap) else gt)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"mask dimensions differ: {a.shape} vs {b.shape}")
    return a == label, b == label


def dice(pred, gt, label: int) -> float:
    """2|A n B| / (|A| + |B|); 1.0 when both masks are empty, 0.0 if only one is."""
    a, b = _masks(pred, gt, label)
    na, nb = int(a.sum()), int(b.sum())
    if na == 0 and nb == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / (na + nb)


def jaccard(pred, gt, label: int) -> float:
    """|A n B| / |A u B|; conventions as dice."""
    a, b = _masks(pred, gt, label)
    union = int((a | b).sum())
    if union == 0:
        return 1.0
    return int((a & b).sum()) / union


def surface_mask(mask: np.ndarray) -> np.ndarray:
    """Voxels of the mask with a background 6-neighbor (array border counts)."""
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    interior = np.ones_like(mask, dtype=bool)
    for axis in range(3):
        for shift in (1, -1):
            interior &= np.roll(padded, shift, axis=axis)[1:-1, 1:-1, 1:-1]
    return mask & ~interior


def surface_distances(pred, gt, label: int, spacing) -> tuple[float, float]:
    """(mean symmetric surface distance, Hausdorff distance) in millimetres."""
    a, b = _masks(pred, gt, label)
    if not a.any() or not b.any():
        raise UndefinedMetricError(f"surface distance undefined: empty mask for label {label}")
    surf_a, surf_b = surface_mask(a), surface_mask(b)

    dt_to_b = ndimage.distance_transform_edt(~surf_b, sampling=spacing)
    dt_to_a = ndimage.distance_transform_edt(~surf_a, sampling=spacing)
    d_ab = dt_to_b[surf_a]
    d_ba = dt_to_a[surf_b]
    msd = (float(d_ab.mean()) + float(d_ba.mean())) / 2.0
    hausdorff = max(float(d_ab.max()), float(d_ba.max()))
    return msd, hausdorff


def surface_distances_percentile(pred, gt, label: int, spacing, percentile: float) -> float:
    """Percentile variant of the Hausdorff distance (e.g. 95)."""
    a, b = _masks(pred, gt, label)
    if not a.any() or not b.any():
        raise UndefinedMetricError(f"surface distance undefined: empty mask for label {label}")
    surf_a, surf_b = surface_mask(a), surface_mask(b)
    d_ab = ndimage.distance_transform_edt(~surf_b, sampling=spacing)[surf_a]
    d_ba = ndimage.distance_transform_edt(~surf_a, sampling=spacing)[surf_b]
    return max(float(np.percentile(d_ab, percentile)), float(np.percentile(d_ba, percentile)))


def _surface_distances_2d(a3, b3, label, spacing):
    """Per-slice distances averaged over slices where both masks are present."""
    msds, hds = [], []
    for z in range(a3.shape[2] if hasattr(a3, "shape") else 0):
        a = a3[:, :, z : z + 1]
        b = b3[:, :, z : z + 1]
        if not (a == label).any() or not (b == label).any():
            continue
        msd, hd = surface_distances(a, b, label, (spacing[0], spacing[1], 1.0))
        msds.append(msd)
        hds.append(hd)
    if not msds:
        raise UndefinedMetricError(f"surface distance undefined in 2d mode for label {label}")
    return float(np.mean(msds)), float(np.mean(hds))


@dataclass(frozen=True)
class StructureMetrics:
    dice: float
    jaccard: float
    msd_mm: float | None
    hausdorff_mm: float | None

    def get(self, key):
        return getattr(self, key)


@dataclass
class EvalReport:
    case_id: str
    spacing: tuple[float, float, float]
    structures: dict = field(default_factory=dict)  # name -> StructureMetrics

    def to_json_payload(self):
        return {
            "case_id": self.case_id,
            "spacing": list(self.spacing),
            "structures": {
                name: {
                    "dice": m.dice, "jaccard": m.jaccard,
                    "msd_mm": m.msd_mm, "hausdorff_mm": m.hausdorff_mm,
                }
                for name, m in self.structures.items()
            },
        }


def evaluate_case(pred: LabelMap, gt: LabelMap, spacing=None, *, case_id="",
                  mode: str = "3d", hausdorff_percentile: float | None = None) -> EvalReport:
    """All four metrics for LV, MYO and RV on one prediction/ground-truth pair.

    Surface metrics are recorded as None ("undefined") when either mask is
    empty for a structure; overlap metrics always evaluate.
    """
    if pred.shape != gt.shape:
        raise InvalidArgumentError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if mode not in ("3d", "2d"):
        raise InvalidArgumentError(f"mode must be '3d' or '2d', got {mode!r}")
    spacing = tuple(spacing) if spacing is not None else gt.spacing

    report = EvalReport(case_id, spacing)
    for label in EVAL_LABELS:
        d = dice(pred, gt, label)
        j = jaccard(pred, gt, label)
        try:
            if mode == "2d":
                msd, hd = _surface_distances_2d(pred.data, gt.data, label, spacing)
            else:
                msd, hd = surface_distances(pred, gt, label, spacing)
            if hausdorff_percentile is not None:
                hd = surface_distances_percentile(pred, gt, label, spacing, hausdorff_percentile)
        except UndefinedMetricError as e:
            log.warning("case %s: %s", case_id or "<unnamed>", e)
            msd = hd = None
        report.structures[STRUCTURE_NAMES[label]] = StructureMetrics(d, j, msd, hd)
    return report


@dataclass
class AggregateReport:
    n_cases: int
    structures: dict = field(default_factory=dict)
    # name -> {metric: {"avg": float|None, "std": float|None, "n": int, "undefined": int}}

    def to_json_payload(self):
        return {"n_cases": self.n_cases, "structures": self.structures}


def aggregate(reports) -> AggregateReport:
    """Arithmetic mean and population std per structure/metric.

    Undefined surface metrics are excluded, with the exclusion count noted.
    """
    reports = list(reports)
    if not reports:
        raise InvalidArgumentError("nothing to aggregate")
    out = AggregateReport(n_cases=len(reports))
    names = sorted({name for r in reports for name in r.structures},
                   key=lambda n: list(STRUCTURE_NAMES.values()).index(n))
    for name in names:
        metrics = {}
        for key, _ in METRIC_ROWS:
            values = [r.structures[name].get(key) for r in reports if name in r.structures]
            defined = np.array([v for v in values if v is not None], dtype=np.float64)
            undefined = sum(1 for v in values if v is None)
            if defined.size:
                metrics[key] = {"avg": float(defined.mean()), "std": float(defined.std()),
                                "n": int(defined.size), "undefined": undefined}
            else:
                metrics[key] = {"avg": None, "std": None, "n": 0, "undefined": undefined}
        out.structures[name] = metrics
    return out


def format_table(agg: AggregateReport) -> str:
    """Aligned text table, metric rows by structure avg/std columns."""
    names = list(agg.structures)
    header = ["Metric".ljust(26)]
    for name in names:
        header.append(f"{name} avg".rjust(10))
        header.append(f"{name} std".rjust(10))
    lines = ["".join(header)]
    for key, title in METRIC_ROWS:
        row = [title.ljust(26)]
        for name in names:
            cell = agg.structures[name][key]
            row.append("     --   " if cell["avg"] is None else f"{cell['avg']:10.3f}")
            row.append("     --   " if cell["std"] is None else f"{cell['std']:10.3f}")
        lines.append("".join(row))
    return "\n".join(lines)


def save_report(agg: AggregateReport, cases, out_dir):
    """Write report.json (aggregate + per-case) and report.txt (table)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "aggregate": agg.to_json_payload(),
        "cases": [c.to_json_payload() for c in cases],
    }
    with open(out_dir / "report.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    (out_dir / "report.txt").write_text(format_table(agg) + "\n", encoding="utf-8")
