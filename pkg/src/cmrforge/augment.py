"""Scar-location augmentation: landmark extraction and myocardial rotation.

The augmentation rotates the LV blood pool + myocardium region about the LV
centroid while the rest of the slice stays fixed, moving the scar texture
around the myocardial wall without touching the ground-truth labels. A 3x3
Gaussian blend of the epicardial mask smooths the seam, so only pixels
within one pixel of the epicardial boundary mix rotated and fixed content;
everything outside that band is bit-identical to the input.

The default schedule is twenty 7.2-degree clockwise steps (to 144 degrees),
plus the unrotated original: 21 outputs per slice. Landmarks (50 evenly
spaced points per contour) are derived for audit/visualization; the rotation
itself is a function of (slice, labels, angle) only.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from cmrforge.errors import DegenerateContourError, InvalidArgumentError, MissingStructureError
from cmrforge.image import (
    LABEL_LV,
    LABEL_MYO,
    LabelMap,
    Slice2D,
    blur_3x3_array,
    rotate_array,
)

log = logging.getLogger(__name__)

ROTATION_STEP_DEG = 7.2
ROTATION_COUNT = 20
GLOBAL_ROTATION_MAX_DEG = 15.0

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])

# Moore neighborhood in clockwise screen order (x right, y down), from W
_MOORE_ORDER = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)]


@dataclass(frozen=True)
class Contour:
    """Ordered closed polyline of pixel coordinates on one slice."""

    points: np.ndarray  # (n, 2) float, columns (x, y)
    kind: str  # "epicardial" | "endocardial"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidArgumentError("contour points must be an (n, 2) array")
        if pts.shape[0] < 8:
            raise DegenerateContourError(f"{self.kind} contour has only {pts.shape[0]} points")
        object.__setattr__(self, "points", pts)

    def perimeter(self) -> float:
        closed = np.vstack([self.points, self.points[:1]])
        return float(np.sum(np.hypot(*np.diff(closed, axis=0).T)))


@dataclass(frozen=True)
class RotationAugmentation:
    """Schedule of the myocardial rotation sweep."""

    angle_step_deg: float = ROTATION_STEP_DEG
    count: int = ROTATION_COUNT

    def __post_init__(self):
        if abs(self.angle_step_deg * self.count - 144.0) > 1e-9:
            raise InvalidArgumentError("rotation sweep must span 144 degrees")

    def angles(self):
        return [k * self.angle_step_deg for k in range(self.count + 1)]


def moore_trace(mask: np.ndarray) -> np.ndarray:
    """Moore-neighbor boundary trace of a 4-connected region.

    Returns boundary pixels in closed walking order (each visited pixel
    emitted once). The walk covers exactly the region pixels that touch
    background through a 4-neighbor.
    """
    xs, ys = np.nonzero(mask)
    if xs.size == 0:
        raise MissingStructureError("cannot trace an empty mask")

    nx, ny = mask.shape

    def inside(px, py):
        return 0 <= px < nx and 0 <= py < ny and mask[px, py]

    # first region pixel in row-major scan (y rows, x within row): entered from W
    order = np.lexsort((xs, ys))
    start = (int(xs[order[0]]), int(ys[order[0]]))
    start_backtrack = (start[0] - 1, start[1])

    points = [start]
    visited_from = {(start, start_backtrack)}
    current, backtrack = start, start_backtrack
    max_steps = 4 * mask.size
    for _ in range(max_steps):
        rel = (backtrack[0] - current[0], backtrack[1] - current[1])
        try:
            k0 = _MOORE_ORDER.index(rel)
        except ValueError:  # diagonal backtrack cannot happen, but stay safe
            k0 = 0
        nxt = None
        prev = backtrack
        for step in range(1, 9):
            dx, dy = _MOORE_ORDER[(k0 + step) % 8]
            cand = (current[0] + dx, current[1] + dy)
            if inside(*cand):
                nxt = cand
                break
            prev = cand
        if nxt is None:
            break  # isolated pixel
        current, backtrack = nxt, prev
        if (current, backtrack) in visited_from and current == start:
            break
        visited_from.add((current, backtrack))
        points.append(current)
    else:
        raise MissingStructureError("boundary trace did not close")

    seen, ordered = set(), []
    for p in points:
        if p not in seen:
            seen.add(p)
            ordered.append(p)
    return np.asarray(ordered, dtype=np.float64)


def _largest_component(mask: np.ndarray, what: str) -> np.ndarray:
    labeled, n = ndimage.label(mask, structure=_FOUR_CONNECTED)
    if n == 0:
        raise MissingStructureError(f"no {what} pixels on slice")
    if n > 1:
        log.warning("%s splits into %d components; keeping the largest", what, n)
        sizes = ndimage.sum_labels(mask, labeled, index=np.arange(1, n + 1))
        return labeled == (1 + int(np.argmax(sizes)))
    return labeled == 1


def extract_contours(labels: LabelMap, z: int) -> tuple[Contour, Contour]:
    """Trace the epicardial (LV+MYO) and endocardial (LV) boundaries at slice z."""
    plane = labels.slice_at(z)
    lv = plane == LABEL_LV
    myo = plane == LABEL_MYO
    if not lv.any() or not myo.any():
        missing = "LV" if not lv.any() else "MYO"
        raise MissingStructureError(f"slice {z} has no {missing} labels")

    heart = _largest_component(lv | myo, "LV+MYO region")
    epicardial = Contour(moore_trace(heart), "epicardial")
    endocardial = Contour(moore_trace(_largest_component(lv & heart, "LV region")), "endocardial")
    return epicardial, endocardial


def place_landmarks(c: Contour, n: int = 50) -> np.ndarray:
    """n points at equal arc-length spacing along the closed contour polyline."""
    if n < 1:
        raise InvalidArgumentError("need at least one landmark")
    closed = np.vstack([c.points, c.points[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    perimeter = cum[-1]
    if perimeter <= 0:
        raise DegenerateContourError("contour has zero perimeter")

    targets = np.arange(n, dtype=np.float64) * perimeter / n
    idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(seg) - 1)
    frac = (targets - cum[idx]) / np.where(seg[idx] > 0, seg[idx], 1.0)
    return closed[idx] + frac[:, None] * (closed[idx + 1] - closed[idx])


def orient_ccw_from_max_x(points: np.ndarray) -> np.ndarray:
    """Order a closed contour counter-clockwise (y-up sense), from max-x point."""
    closed = np.vstack([points, points[:1]])
    shoelace = 0.5 * float(np.sum(closed[:-1, 0] * closed[1:, 1] - closed[1:, 0] * closed[:-1, 1]))
    pts = points[::-1] if shoelace > 0 else points  # positive in y-down coords = clockwise walk
    start = int(np.argmax(pts[:, 0]))
    return np.roll(pts, -start, axis=0)


@dataclass
class LandmarkSet:
    """Per-slice landmark arrays: 50 epicardial + 50 endocardial points."""

    n_points: int = 50
    slices: dict = field(default_factory=dict)  # z -> {"epicardial": (n,2), "endocardial": (n,2)}
    skipped: list = field(default_factory=list)

    def to_json_payload(self):
        return {
            "n_points": self.n_points,
            "slices": {
                str(z): {kind: pts.tolist() for kind, pts in entry.items()}
                for z, entry in sorted(self.slices.items())
            },
            "skipped": self.skipped,
        }


def build_landmark_set(labels: LabelMap, n: int = 50) -> LandmarkSet:
    """Landmarks for every slice that carries both LV and MYO; others skipped."""
    out = LandmarkSet(n_points=n)
    for z in range(labels.shape[2]):
        try:
            epi, endo = extract_contours(labels, z)
        except (MissingStructureError, DegenerateContourError) as e:
            log.warning("slice %d skipped for landmarks: %s", z, e)
            out.skipped.append(z)
            continue
        out.slices[z] = {
            "epicardial": place_landmarks(Contour(orient_ccw_from_max_x(epi.points), "epicardial"), n),
            "endocardial": place_landmarks(Contour(orient_ccw_from_max_x(endo.points), "endocardial"), n),
        }
    return out


def save_landmarks(ls: LandmarkSet, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(ls.to_json_payload(), f, indent=2)
        f.write("\n")


def _heart_mask_and_center(label_plane: np.ndarray):
    lv = label_plane == LABEL_LV
    myo = label_plane == LABEL_MYO
    if not lv.any() or not myo.any():
        missing = "LV" if not lv.any() else "MYO"
        raise MissingStructureError(f"slice has no {missing} labels")
    heart = _largest_component(lv | myo, "LV+MYO region")
    xs, ys = np.nonzero(lv)
    return heart, (float(xs.mean()), float(ys.mean()))


def rotate_myocardium(s: Slice2D, label_plane: np.ndarray, angle_deg: float) -> Slice2D:
    """Rotate the LV+MYO content about the LV centroid, blending the seam.

    The blend weight is the 3x3-blurred epicardial mask, so pixels farther
    than one pixel from the boundary are untouched (weight exactly 0) or
    fully rotated (weight exactly 1). Ground-truth labels are not modified:
    the rotation moves scar texture, not anatomy.
    """
    if label_plane.shape != s.data.shape:
        raise InvalidArgumentError("label plane and slice dimensions differ")
    heart, center = _heart_mask_and_center(label_plane)
    rotated = rotate_array(s.data, angle_deg, center, interp="bilinear")
    weight = blur_3x3_array(heart.astype(np.float64))
    out = weight * rotated.astype(np.float64) + (1.0 - weight) * s.data.astype(np.float64)
    return Slice2D(out.astype(np.float32), s.spacing)


def generate_rotation_set(s: Slice2D, label_plane: np.ndarray,
                          schedule: RotationAugmentation = RotationAugmentation()) -> list[Slice2D]:
    """The original slice plus one myocardial rotation per schedule step (21 total)."""
    outputs = [Slice2D(s.data.copy(), s.spacing)]
    for k in range(1, schedule.count + 1):
        outputs.append(rotate_myocardium(s, label_plane, k * schedule.angle_step_deg))
    return outputs


def draw_global_angle(rng: np.random.Generator, max_deg: float = GLOBAL_ROTATION_MAX_DEG) -> float:
    return float(rng.uniform(-max_deg, max_deg))


def global_rotation(s: Slice2D, label_plane: np.ndarray, rng) -> tuple[Slice2D, np.ndarray]:
    """Small random rotation of image (bilinear) and labels (nearest) together.

    ``rng`` is a seed or numpy Generator; the angle is uniform on [-15, 15]
    degrees and the rotation center is the image center.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    angle = draw_global_angle(rng)
    center = ((s.data.shape[0] - 1) / 2.0, (s.data.shape[1] - 1) / 2.0)
    image = rotate_array(s.data, angle, center, interp="bilinear")
    labels = rotate_array(label_plane, angle, center, interp="nearest")
    return Slice2D(image, s.spacing), labels
