"""Procedural short-axis phantoms with exact ground truth.

Each phantom patient is an LV disc + myocardial annulus + RV crescent with a
bright scar sector in the LGE myocardium, rendered for the three acquisition
sequences with per-sequence tissue intensities, optional Gaussian noise and
an optional multiplicative log-polynomial bias field. Geometry is constant
across slices, so every downstream quantity (contour radii, scar angles,
record counts) can be checked by brute-force geometry.

Label volumes are produced for every sequence; which of them count as
"labeled" for dataset assembly is tracked separately in the cohort manifest
(mirroring the segmented-patient counts of the source data: 35 bSSFP, 5 LGE,
35 T2 out of 45).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cmrforge.errors import InvalidArgumentError
from cmrforge.image import LABEL_LV, LABEL_MYO, LABEL_RV, LabelMap, SequenceKind, Volume
from cmrforge.manifest import CohortManifest, CohortPatient, SequenceEntry, write_cohort
from cmrforge.nifti import write_volume
from cmrforge.preprocess import NATIVE_IN_PLANE_MM, NATIVE_SLICE_MM

log = logging.getLogger(__name__)

# per-sequence tissue means; scar is bright only under LGE contrast
DEFAULT_INTENSITIES = {
    SequenceKind.BSSFP: {"background": 0.05, "lv": 0.90, "myo": 0.45, "rv": 0.85, "scar": 0.45},
    SequenceKind.LGE: {"background": 0.05, "lv": 0.60, "myo": 0.20, "rv": 0.55, "scar": 0.95},
    SequenceKind.T2: {"background": 0.05, "lv": 0.55, "myo": 0.35, "rv": 0.50, "scar": 0.55},
}

SLICE_COUNT_RANGES = {
    SequenceKind.LGE: (10, 18),
    SequenceKind.BSSFP: (8, 12),
    SequenceKind.T2: (3, 7),
}

# segmented-patient fractions of the 45-patient source cohort
LABELED_FRACTIONS = {
    SequenceKind.BSSFP: 35 / 45,
    SequenceKind.LGE: 5 / 45,
    SequenceKind.T2: 35 / 45,
}

REAL_SEQUENCES = (SequenceKind.BSSFP, SequenceKind.LGE, SequenceKind.T2)


@dataclass(frozen=True)
class PhantomSpec:
    size: tuple[int, int] = (256, 256)
    r_lv: float = 28.0
    r_epi: float = 44.0
    r_rv: float = 30.0
    rv_gap: float = 0.5  # rv center sits at r_epi + rv_gap * r_rv left of the lv center
    scar_start_deg: float = -25.0
    scar_extent_deg: float = 50.0
    intensities: dict = field(default_factory=lambda: DEFAULT_INTENSITIES)
    noise_sigma: float = 0.0
    bias_coefficients: dict | None = None  # {(i, j): c} -> field exp(sum c * x^i * y^j)
    n_slices: dict = field(default_factory=lambda: {
        SequenceKind.BSSFP: 10, SequenceKind.LGE: 12, SequenceKind.T2: 5})
    seed: int = 0

    def __post_init__(self):
        nx, ny = self.size
        if not 0 < self.r_lv < self.r_epi < min(nx, ny) / 2:
            raise InvalidArgumentError(
                f"radii must satisfy 0 < r_lv < r_epi < {min(nx, ny) / 2}, got {self.r_lv}, {self.r_epi}")
        if not 0 < self.scar_extent_deg <= 180:
            raise InvalidArgumentError(f"scar extent must be in (0, 180], got {self.scar_extent_deg}")
        if self.noise_sigma < 0:
            raise InvalidArgumentError("noise sigma must be >= 0")
        if any(n < 1 for n in self.n_slices.values()):
            raise InvalidArgumentError("slice counts must be >= 1")

    @property
    def center(self) -> tuple[float, float]:
        return ((self.size[0] - 1) / 2.0, (self.size[1] - 1) / 2.0)


@dataclass(frozen=True)
class PhantomPatient:
    id: str
    spec: PhantomSpec
    volumes: dict      # SequenceKind -> Volume
    labels: dict       # SequenceKind -> LabelMap
    scar_mask: LabelMap  # aligned with the LGE volume, value 1 = scar


def _angles_deg(spec):
    """Math-convention angle of each pixel about the LV center (y up, CCW +)."""
    cx, cy = spec.center
    xs = np.arange(spec.size[0], dtype=np.float64)
    ys = np.arange(spec.size[1], dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.degrees(np.arctan2(cy - gy, gx - cx))


def _angle_window(angles, start, extent):
    rel = np.mod(angles - start, 360.0)
    return rel <= extent


def render_label_plane(spec: PhantomSpec) -> np.ndarray:
    """Rasterize the LV/MYO/RV pattern for one slice."""
    cx, cy = spec.center
    xs = np.arange(spec.size[0], dtype=np.float64)
    ys = np.arange(spec.size[1], dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    dist = np.hypot(gx - cx, gy - cy)

    plane = np.zeros(spec.size, dtype=np.uint8)
    plane[dist <= spec.r_lv] = LABEL_LV
    plane[(dist > spec.r_lv) & (dist <= spec.r_epi)] = LABEL_MYO

    rv_cx = cx - (spec.r_epi + spec.rv_gap * spec.r_rv)
    rv_dist = np.hypot(gx - rv_cx, gy - cy)
    plane[(rv_dist <= spec.r_rv) & (plane == 0)] = LABEL_RV
    return plane


def render_scar_plane(spec: PhantomSpec, label_plane: np.ndarray) -> np.ndarray:
    """Scar sector: the part of the myocardium inside the angle window."""
    window = _angle_window(_angles_deg(spec), spec.scar_start_deg, spec.scar_extent_deg)
    return ((label_plane == LABEL_MYO) & window).astype(np.uint8)


def _bias_plane(spec: PhantomSpec) -> np.ndarray | None:
    if not spec.bias_coefficients:
        return None
    nx, ny = spec.size
    xs = np.linspace(-1.0, 1.0, nx) if nx > 1 else np.zeros(nx)
    ys = np.linspace(-1.0, 1.0, ny) if ny > 1 else np.zeros(ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    logfield = np.zeros(spec.size, dtype=np.float64)
    for (i, j), c in spec.bias_coefficients.items():
        logfield += c * gx**i * gy**j
    return np.exp(logfield)


def generate_patient(spec: PhantomSpec, patient_id: str = "phantom") -> PhantomPatient:
    """Render all three sequences plus exact labels and scar mask.

    Deterministic for a fixed spec (noise is drawn from the spec seed).
    """
    label_plane = render_label_plane(spec)
    scar_plane = render_scar_plane(spec, label_plane)
    bias = _bias_plane(spec)
    rng = np.random.default_rng(spec.seed)

    volumes, labels = {}, {}
    for seq in REAL_SEQUENCES:
        table = spec.intensities[seq]
        lut = np.array([table["background"], table["lv"], table["myo"], table["rv"]], dtype=np.float64)
        plane = lut[label_plane]
        plane[scar_plane == 1] = table["scar"]
        if bias is not None:
            plane = plane * bias

        nz = spec.n_slices[seq]
        stack = np.repeat(plane[:, :, None], nz, axis=2)
        if spec.noise_sigma > 0:
            stack = stack + rng.normal(0.0, spec.noise_sigma, size=stack.shape)

        spacing = (*NATIVE_IN_PLANE_MM[seq], NATIVE_SLICE_MM[seq])
        volumes[seq] = Volume(stack.astype(np.float32), spacing, seq, patient_id)
        labels[seq] = LabelMap(np.repeat(label_plane[:, :, None], nz, axis=2), spacing)

    lge_spacing = (*NATIVE_IN_PLANE_MM[SequenceKind.LGE], NATIVE_SLICE_MM[SequenceKind.LGE])
    scar = LabelMap(np.repeat(scar_plane[:, :, None], spec.n_slices[SequenceKind.LGE], axis=2), lge_spacing)
    return PhantomPatient(patient_id, spec, volumes, labels, scar)


@dataclass(frozen=True)
class CohortRecord:
    """A to-be-materialized cohort member: spec plus label availability."""

    patient_id: str
    spec: PhantomSpec
    labeled: frozenset  # SequenceKinds whose ground truth enters manifests


def default_labeled_counts(n_patients: int) -> dict:
    counts = {}
    for seq, frac in LABELED_FRACTIONS.items():
        counts[seq] = min(n_patients, max(1, round(n_patients * frac)))
    return counts


def generate_cohort(n_patients: int, base_seed: int, *, size=(256, 256),
                    labeled_counts=None, slice_ranges=None,
                    noise_sigma=0.02, bias_coefficients=None) -> list[CohortRecord]:
    """Draw per-patient geometry, scar placement and slice counts.

    Radii scale with the image size; slice counts come from the per-sequence
    acquisition ranges unless overridden. Deterministic for a fixed seed.
    """
    if n_patients < 1:
        raise InvalidArgumentError("cohort needs at least one patient")
    rng = np.random.default_rng(base_seed)
    slice_ranges = {**SLICE_COUNT_RANGES, **(slice_ranges or {})}
    labeled_counts = labeled_counts if labeled_counts is not None else default_labeled_counts(n_patients)

    s = min(size)
    records = []
    for i in range(n_patients):
        r_lv = rng.uniform(0.10, 0.14) * s
        r_epi = r_lv + rng.uniform(0.05, 0.08) * s
        r_rv = rng.uniform(0.10, 0.14) * s
        spec = PhantomSpec(
            size=tuple(size),
            r_lv=float(r_lv), r_epi=float(r_epi), r_rv=float(r_rv),
            scar_start_deg=float(rng.uniform(-180.0, 180.0)),
            scar_extent_deg=float(rng.uniform(30.0, 90.0)),
            noise_sigma=noise_sigma,
            bias_coefficients=bias_coefficients,
            n_slices={seq: int(rng.integers(lo, hi + 1)) for seq, (lo, hi) in slice_ranges.items()},
            seed=int(rng.integers(0, 2**31 - 1)),
        )
        records.append(CohortRecord(f"phantom{i:03d}", spec, frozenset()))

    ids = [r.patient_id for r in records]
    labeled_map = {pid: set() for pid in ids}
    for seq in REAL_SEQUENCES:
        count = min(labeled_counts.get(seq, 0), n_patients)
        for pid in rng.choice(ids, size=count, replace=False):
            labeled_map[pid].add(seq)
    return [CohortRecord(r.patient_id, r.spec, frozenset(labeled_map[r.patient_id])) for r in records]


PATIENT_FILES = {
    SequenceKind.BSSFP: ("bssfp.nii.gz", "bssfp_gt.nii.gz"),
    SequenceKind.LGE: ("lge.nii.gz", "lge_gt.nii.gz"),
    SequenceKind.T2: ("t2.nii.gz", "t2_gt.nii.gz"),
}


def write_cohort_to_dir(records, out_dir, base_seed: int) -> CohortManifest:
    """Materialize a cohort: per-patient NIfTI files plus cohort.json.

    Ground-truth files are written for every sequence (they serve as
    evaluation references); the manifest advertises labels only for the
    sequences drawn as labeled, which is what dataset assembly consumes.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    patients = []
    for record in records:
        patient = generate_patient(record.spec, record.patient_id)
        pdir = out_dir / record.patient_id
        pdir.mkdir(exist_ok=True)
        sequences = {}
        for seq in REAL_SEQUENCES:
            image_name, gt_name = PATIENT_FILES[seq]
            write_volume(patient.volumes[seq], pdir / image_name)
            write_volume(patient.labels[seq], pdir / gt_name)
            entry = SequenceEntry(
                image=f"{record.patient_id}/{image_name}",
                labels=f"{record.patient_id}/{gt_name}" if seq in record.labeled else None,
                scar=f"{record.patient_id}/scar.nii.gz" if seq is SequenceKind.LGE else None,
            )
            sequences[seq] = entry
        write_volume(patient.scar_mask, pdir / "scar.nii.gz")
        patients.append(CohortPatient(record.patient_id, sequences))

    manifest = CohortManifest(seed=base_seed, patients=patients)
    write_cohort(manifest, out_dir / "cohort.json")
    return manifest
