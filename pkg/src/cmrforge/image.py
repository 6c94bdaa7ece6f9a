"""Image containers and per-slice geometric primitives.

Conventions used everywhere in this package:

* Volume/label arrays are indexed ``[x, y, z]`` with x the in-plane column
  axis (screen right), y the row axis (screen down) and z the slice axis.
* Angles are in degrees and positive angles rotate clockwise on screen
  (x right, y down), i.e. +x turns toward +y in array coordinates.
* Intensities are interpolated bilinearly, labels nearest-neighbor.
* Rotation fills pixels sampled outside the source with 0; resampling
  clamps sample coordinates to the grid so constants survive round trips.

All operations are pure: inputs are never mutated, new instances are
returned.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from cmrforge.errors import InvalidArgumentError

LABEL_BACKGROUND = 0
LABEL_LV = 1
LABEL_MYO = 2
LABEL_RV = 3
ALL_LABELS = (LABEL_BACKGROUND, LABEL_LV, LABEL_MYO, LABEL_RV)

STRUCTURE_NAMES = {LABEL_LV: "LV", LABEL_MYO: "MYO", LABEL_RV: "RV"}


class SequenceKind(Enum):
    """MRI sequence of a volume; synthetic kinds only come out of the trainer."""

    BSSFP = "bSSFP"
    LGE = "LGE"
    T2 = "T2"
    SYNTHETIC_LGE = "SyntheticLGE"
    SYNTHETIC_BSSFP = "SyntheticBSSFP"

    @classmethod
    def from_name(cls, name: str) -> "SequenceKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise InvalidArgumentError(f"unknown sequence kind {name!r}")


def _check_spacing(spacing, n):
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != n:
        raise InvalidArgumentError(f"spacing must have {n} components, got {spacing}")
    if not all(np.isfinite(s) and s > 0 for s in spacing):
        raise InvalidArgumentError(f"spacing components must be finite and > 0, got {spacing}")
    return spacing


@dataclass(frozen=True)
class Volume:
    """A 3D scalar image with physical spacing, indexed (x, y, z)."""

    data: np.ndarray
    spacing: tuple[float, float, float]
    sequence: SequenceKind
    patient_id: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3 or min(data.shape) < 1:
            raise InvalidArgumentError(f"volume data must be 3D with all dims >= 1, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidArgumentError("volume contains non-finite voxels")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing, 3))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def slice_at(self, z: int) -> "Slice2D":
        """In-plane view at slice index z."""
        return Slice2D(self.data[:, :, z], self.spacing[:2])

    def with_data(self, data: np.ndarray) -> "Volume":
        return replace(self, data=data)


@dataclass(frozen=True)
class LabelMap:
    """Integer segmentation aligned to a Volume: 0=bg, 1=LV, 2=MYO, 3=RV."""

    data: np.ndarray
    spacing: tuple[float, float, float]

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise InvalidArgumentError(f"label data must be 3D with all dims >= 1, got shape {data.shape}")
        data = data.astype(np.uint8, copy=False)
        bad = np.setdiff1d(np.unique(data), np.asarray(ALL_LABELS, dtype=np.uint8))
        if bad.size:
            raise InvalidArgumentError(f"label values outside {{0,1,2,3}}: {bad.tolist()}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing, 3))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def slice_at(self, z: int) -> np.ndarray:
        return self.data[:, :, z]


@dataclass(frozen=True)
class Slice2D:
    """A single short-axis slice, indexed (x, y)."""

    data: np.ndarray
    spacing: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise InvalidArgumentError(f"slice data must be 2D, got shape {data.shape}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing, 2))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def _rotation_source_coords(shape, angle_deg, center):
    """Source-grid coordinates for inverse-mapped rotation of each output pixel."""
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    cx, cy = center
    xs = np.arange(shape[0], dtype=np.float64)
    ys = np.arange(shape[1], dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    dx, dy = gx - cx, gy - cy
    # inverse of the clockwise-on-screen rotation matrix [[c,-s],[s,c]]
    src_x = cx + cos_t * dx + sin_t * dy
    src_y = cy - sin_t * dx + cos_t * dy
    return src_x, src_y


def _sample_bilinear_zero(data, src_x, src_y):
    """Bilinear sample at float coords; neighbors off the grid contribute 0."""
    nx, ny = data.shape
    x0 = np.floor(src_x).astype(np.int64)
    y0 = np.floor(src_y).astype(np.int64)
    fx = src_x - x0
    fy = src_y - y0

    out = np.zeros(src_x.shape, dtype=np.float64)
    values = data.astype(np.float64, copy=False)
    for ix, wx in ((x0, 1.0 - fx), (x0 + 1, fx)):
        for iy, wy in ((y0, 1.0 - fy), (y0 + 1, fy)):
            inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
            w = wx * wy
            contrib = np.zeros_like(out)
            contrib[inside] = values[ix[inside], iy[inside]] * w[inside]
            out += contrib
    return out


def _sample_nearest_fill(data, src_x, src_y, fill=0):
    nx, ny = data.shape
    ix = np.rint(src_x).astype(np.int64)
    iy = np.rint(src_y).astype(np.int64)
    inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
    out = np.full(src_x.shape, fill, dtype=data.dtype)
    out[inside] = data[ix[inside], iy[inside]]
    return out


def rotate_array(data: np.ndarray, angle_deg: float, center: tuple[float, float], interp: str = "bilinear") -> np.ndarray:
    """Rotate a 2D array clockwise (on screen) about ``center``.

    Output pixels sampling outside the source are filled with 0. ``interp``
    is "bilinear" for intensities or "nearest" for label arrays.
    """
    if not np.isfinite(angle_deg):
        raise InvalidArgumentError(f"rotation angle must be finite, got {angle_deg}")
    cx, cy = float(center[0]), float(center[1])
    if not (np.isfinite(cx) and np.isfinite(cy)):
        raise InvalidArgumentError(f"rotation center must be finite, got {center}")
    nx, ny = data.shape
    if not (0 <= cx <= nx - 1 and 0 <= cy <= ny - 1):
        raise InvalidArgumentError(f"rotation center {center} outside image bounds {data.shape}")
    if interp not in ("bilinear", "nearest"):
        raise InvalidArgumentError(f"interp must be 'bilinear' or 'nearest', got {interp!r}")

    src_x, src_y = _rotation_source_coords(data.shape, angle_deg, (cx, cy))
    if interp == "bilinear":
        return _sample_bilinear_zero(data, src_x, src_y).astype(data.dtype, copy=False)
    return _sample_nearest_fill(data, src_x, src_y, fill=0)


def rotate_slice(s: Slice2D, angle_deg: float, center: tuple[float, float], interp: str = "bilinear") -> Slice2D:
    """Rotate a slice about an arbitrary pixel-coordinate center.

    angle=0 reproduces the input bit-exactly; see module docstring for the
    direction convention.
    """
    return Slice2D(rotate_array(s.data, angle_deg, center, interp), s.spacing)


_BLUR_OFFSETS = [(-1, -1, 1), (-1, 0, 2), (-1, 1, 1),
                 (0, -1, 2), (0, 0, 4), (0, 1, 2),
                 (1, -1, 1), (1, 0, 2), (1, 1, 1)]


def blur_3x3_array(data: np.ndarray) -> np.ndarray:
    """3x3 binomial blur ([[1,2,1],[2,4,2],[1,2,1]]/16) with edge replication."""
    if data.shape[0] < 3 or data.shape[1] < 3:
        raise InvalidArgumentError(f"blur needs a slice of at least 3x3, got {data.shape}")
    padded = np.pad(data.astype(np.float64, copy=False), 1, mode="edge")
    nx, ny = data.shape
    acc = np.zeros((nx, ny), dtype=np.float64)
    for ox, oy, w in _BLUR_OFFSETS:
        acc += w * padded[1 + ox : 1 + ox + nx, 1 + oy : 1 + oy + ny]
    return (acc / 16.0).astype(data.dtype, copy=False)


def gaussian_blur_3x3(s: Slice2D) -> Slice2D:
    """Gaussian smoothing with the normalized 3x3 binomial kernel."""
    return Slice2D(blur_3x3_array(s.data), s.spacing)


def _resample_plane_coords(n_src: int, spacing_src: float, spacing_dst: float) -> tuple[int, np.ndarray]:
    n_dst = max(1, int(round(n_src * spacing_src / spacing_dst)))
    coords = np.arange(n_dst, dtype=np.float64) * (spacing_dst / spacing_src)
    # edge clamp: constants are preserved exactly through down/up cycles
    return n_dst, np.clip(coords, 0.0, n_src - 1.0)


def _bilinear_grid_sample_clamped(plane: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.clip(x0, 0, plane.shape[0] - 2) if plane.shape[0] > 1 else np.zeros_like(x0)
    y0 = np.clip(y0, 0, plane.shape[1] - 2) if plane.shape[1] > 1 else np.zeros_like(y0)
    fx = (xs - x0)[:, None]
    fy = (ys - y0)[None, :]
    if plane.shape[0] == 1:
        fx = np.zeros_like(fx)
    if plane.shape[1] == 1:
        fy = np.zeros_like(fy)
    p = plane.astype(np.float64, copy=False)
    x1 = np.minimum(x0 + 1, plane.shape[0] - 1)
    y1 = np.minimum(y0 + 1, plane.shape[1] - 1)
    v00 = p[np.ix_(x0, y0)]
    v01 = p[np.ix_(x0, y1)]
    v10 = p[np.ix_(x1, y0)]
    v11 = p[np.ix_(x1, y1)]
    return (v00 * (1 - fx) * (1 - fy) + v01 * (1 - fx) * fy
            + v10 * fx * (1 - fy) + v11 * fx * fy)


def resample_bilinear(v: Volume, target_in_plane_spacing: tuple[float, float]) -> Volume:
    """Resample in-plane to a new pixel spacing; z is untouched.

    New in-plane dimensions are round(n * old / new), at least 1.
    """
    sx, sy = _check_spacing(target_in_plane_spacing, 2)
    nx, ny, nz = v.shape
    mx, xs = _resample_plane_coords(nx, v.spacing[0], sx)
    my, ys = _resample_plane_coords(ny, v.spacing[1], sy)
    out = np.empty((mx, my, nz), dtype=np.float32)
    for z in range(nz):
        out[:, :, z] = _bilinear_grid_sample_clamped(v.data[:, :, z], xs, ys)
    return Volume(out, (sx, sy, v.spacing[2]), v.sequence, v.patient_id)


def resample_labels_nearest(lm: LabelMap, target_in_plane_spacing: tuple[float, float]) -> LabelMap:
    """Label counterpart of resample_bilinear (nearest-neighbor, label-set safe)."""
    sx, sy = _check_spacing(target_in_plane_spacing, 2)
    nx, ny, nz = lm.shape
    mx, xs = _resample_plane_coords(nx, lm.spacing[0], sx)
    my, ys = _resample_plane_coords(ny, lm.spacing[1], sy)
    ix = np.clip(np.rint(xs), 0, nx - 1).astype(np.int64)
    iy = np.clip(np.rint(ys), 0, ny - 1).astype(np.int64)
    out = lm.data[np.ix_(ix, iy, np.arange(nz))]
    return LabelMap(out, (sx, sy, lm.spacing[2]))


def crop_or_pad_array(data: np.ndarray, nx: int, ny: int, pad_value=0) -> np.ndarray:
    """Center-crop/zero-pad the first two axes to exactly (nx, ny).

    Symmetric; the extra pixel of an odd difference goes to the high-index
    side. Idempotent for a fixed target.
    """
    if nx < 1 or ny < 1:
        raise InvalidArgumentError(f"target size must be >= 1, got ({nx}, {ny})")
    out = data
    for axis, target in ((0, nx), (1, ny)):
        n = out.shape[axis]
        if n > target:
            start = (n - target) // 2
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(start, start + target)
            out = out[tuple(sl)]
        elif n < target:
            low = (target - n) // 2
            high = target - n - low
            widths = [(0, 0)] * out.ndim
            widths[axis] = (low, high)
            out = np.pad(out, widths, mode="constant", constant_values=pad_value)
    return out


def crop_or_pad_center(v: Volume | LabelMap, nx: int, ny: int):
    """Center-crop or zero-pad a volume or label map to (nx, ny) in-plane."""
    data = crop_or_pad_array(v.data, nx, ny)
    if isinstance(v, LabelMap):
        return LabelMap(data, v.spacing)
    return Volume(data, v.spacing, v.sequence, v.patient_id)
