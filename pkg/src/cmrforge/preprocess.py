"""Intensity and geometry standardization for multi-sequence cardiac MRI.

The chain applied to every volume, in order: per-slice polynomial bias
correction (log-domain least squares over an Otsu foreground), histogram
matching to a shared 256-bin reference, bilinear resampling to a common
in-plane grid with center crop/pad, and affine normalization to mean 0.5 /
std 0.5.

The common grid defaults to the bSSFP native resolution (1.25 mm) and a
256x256 in-plane size.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from cmrforge.errors import InvalidArgumentError
from cmrforge.image import (
    LabelMap,
    SequenceKind,
    Volume,
    crop_or_pad_center,
    resample_bilinear,
    resample_labels_nearest,
)

log = logging.getLogger(__name__)

TARGET_IN_PLANE_MM = (1.25, 1.25)
TARGET_SIZE = (256, 256)

# acquisition defaults per sequence: in-plane resolution and a representative
# slice thickness (thickness ranges collapse to midpoints)
NATIVE_IN_PLANE_MM = {
    SequenceKind.BSSFP: (1.25, 1.25),
    SequenceKind.LGE: (0.75, 0.75),
    SequenceKind.T2: (1.35, 1.35),
    SequenceKind.SYNTHETIC_LGE: (1.25, 1.25),
    SequenceKind.SYNTHETIC_BSSFP: (1.25, 1.25),
}
NATIVE_SLICE_MM = {
    SequenceKind.BSSFP: 10.0,
    SequenceKind.LGE: 5.0,
    SequenceKind.T2: 15.0,
    SequenceKind.SYNTHETIC_LGE: 10.0,
    SequenceKind.SYNTHETIC_BSSFP: 10.0,
}

HISTOGRAM_BINS = 256
LOG_EPS = 1e-3
FIELD_FLOOR = 0.05


def otsu_threshold(values: np.ndarray) -> float:
    """Otsu's threshold maximizing between-class variance over 256 bins."""
    values = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return lo
    counts, edges = np.histogram(values, bins=HISTOGRAM_BINS, range=(lo, hi))
    centers = (edges[:-1] + edges[1:]) / 2.0
    weights = counts.astype(np.float64)
    total = weights.sum()
    w0 = np.cumsum(weights)
    w1 = total - w0
    mass = np.cumsum(weights * centers)
    mean0 = np.divide(mass, w0, out=np.zeros_like(mass), where=w0 > 0)
    mean1 = np.divide(mass[-1] - mass, w1, out=np.zeros_like(mass), where=w1 > 0)
    between = w0 * w1 * (mean0 - mean1) ** 2
    return float(centers[int(np.argmax(between))])


def _poly_terms(degree: int):
    return [(i, j) for total in range(degree + 1) for i in range(total + 1) for j in (total - i,)]


def _poly_design(shape, degree):
    nx, ny = shape
    xs = np.linspace(-1.0, 1.0, nx) if nx > 1 else np.zeros(nx)
    ys = np.linspace(-1.0, 1.0, ny) if ny > 1 else np.zeros(ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    terms = _poly_terms(degree)
    cols = [gx**i * gy**j for i, j in terms]
    return np.stack(cols, axis=-1)  # (nx, ny, n_terms)


@dataclass(frozen=True)
class BiasField:
    """Per-slice log-domain polynomial fit; evaluates to a multiplicative field."""

    coefficients: np.ndarray
    degree: int
    shape: tuple[int, int]
    fitted: bool = True

    def evaluate(self) -> np.ndarray:
        """Multiplicative field with foreground geometric mean 1, clamped >= 0.05."""
        design = _poly_design(self.shape, self.degree)
        logfield = design @ self.coefficients
        return np.maximum(np.exp(logfield), FIELD_FLOOR)


def correct_bias(v: Volume, degree: int = 3) -> tuple[Volume, list[BiasField]]:
    """Remove smooth multiplicative intensity bias slice by slice.

    Per slice, a degree-``degree`` 2D polynomial is least-squares fitted to
    log(intensity + 1e-3) over the Otsu foreground; the slice is divided by
    exp(fit - foreground mean of the fit), which preserves the foreground
    mean to within ~1%. Slices without usable foreground pass through
    unchanged (warning, identity field).
    """
    if degree < 0:
        raise InvalidArgumentError(f"polynomial degree must be >= 0, got {degree}")
    if not np.any(v.data > 0):
        raise InvalidArgumentError("bias correction needs positive foreground intensities")

    n_terms = len(_poly_terms(degree))
    out = np.empty_like(v.data)
    fields: list[BiasField] = []
    for z in range(v.shape[2]):
        plane = v.data[:, :, z].astype(np.float64)
        threshold = otsu_threshold(plane)
        fg = plane > threshold
        if fg.sum() < max(n_terms, 4):
            log.warning("slice %d of %s: foreground too small for bias fit, passed through",
                        z, v.patient_id or "<volume>")
            out[:, :, z] = v.data[:, :, z]
            fields.append(BiasField(np.zeros(n_terms), degree, plane.shape, fitted=False))
            continue

        design = _poly_design(plane.shape, degree)
        a = design[fg]
        b = np.log(plane[fg] + LOG_EPS)
        coeffs, *_ = np.linalg.lstsq(a, b, rcond=None)

        logfield = design @ coeffs
        logfield -= logfield[fg].mean()
        field = np.maximum(np.exp(logfield), FIELD_FLOOR)
        out[:, :, z] = (plane / field).astype(np.float32)
        fields.append(BiasField(coeffs, degree, plane.shape))
    return v.with_data(out), fields


# ------------------------------------------------------------- histograms

_EDGES = np.linspace(0.0, 1.0, HISTOGRAM_BINS + 1)


def _rescale_01(data: np.ndarray):
    lo, hi = float(data.min()), float(data.max())
    if hi <= lo:
        return None
    return (data.astype(np.float64) - lo) / (hi - lo)


def _cdf_01(data01: np.ndarray) -> np.ndarray:
    counts, _ = np.histogram(data01, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    return np.cumsum(counts) / data01.size


@dataclass(frozen=True)
class ReferenceHistogram:
    """Shared 256-bin cumulative distribution over [0,1]-rescaled intensities."""

    cdf: np.ndarray
    sources: tuple[str, ...]

    def __post_init__(self):
        cdf = np.asarray(self.cdf, dtype=np.float64)
        if cdf.shape != (HISTOGRAM_BINS,):
            raise InvalidArgumentError(f"reference CDF must have {HISTOGRAM_BINS} bins")
        if np.any(np.diff(cdf) < -1e-12) or abs(cdf[-1] - 1.0) > 1e-9:
            raise InvalidArgumentError("reference CDF must be non-decreasing and end at 1")
        object.__setattr__(self, "cdf", cdf)


def build_reference_histogram(volumes) -> ReferenceHistogram:
    """Average the per-volume CDFs of [0,1]-rescaled intensities."""
    if not volumes:
        raise InvalidArgumentError("need at least one volume to build a reference histogram")
    cdfs, sources = [], []
    for v in volumes:
        scaled = _rescale_01(v.data)
        if scaled is None:
            log.warning("volume %s is constant; skipped from reference histogram", v.patient_id or "<volume>")
            continue
        cdfs.append(_cdf_01(scaled))
        sources.append(v.patient_id or f"volume{len(sources)}")
    if not cdfs:
        raise InvalidArgumentError("all volumes were constant; no reference histogram")
    return ReferenceHistogram(np.mean(cdfs, axis=0), tuple(sources))


def save_reference(ref: ReferenceHistogram, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"cdf": ref.cdf.tolist(), "sources": list(ref.sources)}, f, indent=2)
        f.write("\n")


def load_reference(path) -> ReferenceHistogram:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    return ReferenceHistogram(np.asarray(payload["cdf"]), tuple(payload["sources"]))


def _cdf_points(cdf: np.ndarray) -> np.ndarray:
    # CDF sampled at all 257 bin edges, anchored at 0
    return np.concatenate([[0.0], cdf])


def match_histogram(v: Volume, ref: ReferenceHistogram) -> Volume:
    """Monotone CDF matching with piecewise-linear interpolation between bins.

    Output intensities live in [0,1]; voxel rank order is preserved (ties
    may merge). Constant volumes are returned unchanged with a warning.
    """
    scaled = _rescale_01(v.data)
    if scaled is None:
        log.warning("volume %s is constant; histogram matching skipped", v.patient_id or "<volume>")
        return v

    src_points = _cdf_points(_cdf_01(scaled))
    # strictly increasing copy so the inverse lookup is well defined on flats
    ref_points = _cdf_points(ref.cdf) + np.arange(HISTOGRAM_BINS + 1) * 1e-12

    quantiles = np.interp(scaled.ravel(), _EDGES, src_points)
    matched = np.interp(quantiles, ref_points, _EDGES)
    return v.with_data(matched.reshape(v.shape).astype(np.float32))


def normalize(v: Volume) -> Volume:
    """Affine map to mean 0.5 and standard deviation 0.5."""
    data = v.data.astype(np.float64)
    mean, std = data.mean(), data.std()
    if std <= 0:
        raise InvalidArgumentError("cannot normalize a constant volume (zero std)")
    return v.with_data((0.5 + 0.5 * (data - mean) / std).astype(np.float32))


def standardize_geometry(v: Volume, target_spacing=TARGET_IN_PLANE_MM, target_size=TARGET_SIZE) -> Volume:
    """Resample in-plane to the common grid, then center crop/pad."""
    resampled = resample_bilinear(v, target_spacing)
    return crop_or_pad_center(resampled, target_size[0], target_size[1])


def standardize_labels(lm: LabelMap, target_spacing=TARGET_IN_PLANE_MM, target_size=TARGET_SIZE) -> LabelMap:
    """Label-map counterpart of standardize_geometry (nearest-neighbor)."""
    resampled = resample_labels_nearest(lm, target_spacing)
    return crop_or_pad_center(resampled, target_size[0], target_size[1])


def preprocess_chain(v: Volume, ref: ReferenceHistogram, degree: int = 3,
                     target_spacing=TARGET_IN_PLANE_MM, target_size=TARGET_SIZE) -> Volume:
    """bias -> match -> geometry -> normalize for one volume, given a reference."""
    corrected, _ = correct_bias(v, degree=degree)
    matched = match_histogram(corrected, ref)
    shaped = standardize_geometry(matched, target_spacing, target_size)
    return normalize(shaped)
