"""Training-set assembly: the eight training configurations.

Configurations (LGE is always included):

1. LGE only                          5. 1 + synthetic LGE
2. LGE + bSSFP                       6. 2 + synthetic LGE
3. all sequences (LGE, bSSFP, T2)    7. 3 + synthetic LGE
4. all + myocardial rotations        8. 4 + synthetic LGE

The builder consumes a cohort manifest, materializes one NIfTI file per 2D
slice into a shared ``slices/`` pool under the dataset root (so different
configurations reference identical files and their record sets nest), and
writes a per-configuration manifest. Only patients labeled for a sequence
contribute records; rotations expand each labeled LGE slice by 20 rotated
variants on top of the real record; synthetic LGE slices inherit the source
bSSFP patient's labels and split.

One validation split is drawn per cohort seed over the union of labeled
patient ids (ceil(20%) to val) and shared by all sequences and
configurations, so no patient ever sits on both sides of a split.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cmrforge.augment import RotationAugmentation, rotate_myocardium
from cmrforge.errors import ConfigurationError, InvalidArgumentError, ManifestError
from cmrforge.image import LabelMap, SequenceKind, Volume
from cmrforge.manifest import (
    SYNTHETIC_MANIFEST_NAME,
    CohortManifest,
    DatasetManifest,
    ManifestRecord,
    Provenance,
    read_cohort,
    read_synthetic_manifest,
    write_manifest,
)
from cmrforge.nifti import read_volume, write_volume

log = logging.getLogger(__name__)

VAL_FRACTION = 0.2

_SEQ_TAGS = {
    SequenceKind.LGE: "LGE",
    SequenceKind.BSSFP: "bSSFP",
    SequenceKind.T2: "T2",
    SequenceKind.SYNTHETIC_LGE: "SynLGE",
}


@dataclass(frozen=True)
class TrainingConfig:
    """Sequence/augmentation switches for one of the eight configurations."""

    id: int
    include_bssfp: bool
    include_t2: bool
    include_scar_rotations: bool
    include_synthetic_lge: bool

    @classmethod
    def from_id(cls, config_id: int) -> "TrainingConfig":
        if config_id not in range(1, 9):
            raise ConfigurationError(f"training configuration id must be 1..8, got {config_id}")
        base = (config_id - 1) % 4 + 1
        return cls(
            id=config_id,
            include_bssfp=base >= 2,
            include_t2=base >= 3,
            include_scar_rotations=base >= 4,
            include_synthetic_lge=config_id >= 5,
        )

    def sequences(self):
        seqs = [SequenceKind.LGE]
        if self.include_bssfp:
            seqs.append(SequenceKind.BSSFP)
        if self.include_t2:
            seqs.append(SequenceKind.T2)
        return seqs


def split_patients(patient_ids, val_fraction: float = VAL_FRACTION, seed: int = 0):
    """Deterministic patient-level split: ceil(n * fraction) ids go to val."""
    ids = sorted(patient_ids)
    if len(ids) < 2:
        raise InvalidArgumentError(f"need at least 2 patients to split, got {len(ids)}")
    if not 0 < val_fraction < 1:
        raise InvalidArgumentError(f"val fraction must be in (0, 1), got {val_fraction}")
    perm = np.random.default_rng(seed).permutation(len(ids))
    n_val = math.ceil(len(ids) * val_fraction)
    val = sorted(ids[i] for i in perm[:n_val])
    train = sorted(ids[i] for i in perm[n_val:])
    return train, val


def _slice_name(pid, seq, z, k=None):
    tag = _SEQ_TAGS[seq]
    if k is None:
        return f"{pid}_{tag}_z{z:02d}.nii.gz"
    return f"{pid}_{tag}_z{z:02d}_rot{k:02d}.nii.gz"


def _gt_name(pid, seq, z):
    return f"{pid}_{_SEQ_TAGS[seq]}_z{z:02d}_gt.nii.gz"


def _write_slice_volume(volume, z, path, sequence=None):
    plane = volume.data[:, :, z : z + 1]
    out = Volume(plane, volume.spacing, sequence or volume.sequence, volume.patient_id)
    write_volume(out, path)


def _write_slice_labels(labels, z, path):
    write_volume(LabelMap(labels.data[:, :, z : z + 1], labels.spacing), path)


class _CohortReader:
    """Loads cohort volumes on demand, path-checked against the cohort root."""

    def __init__(self, cohort: CohortManifest, root: Path):
        self.cohort = cohort
        self.root = Path(root)

    def _resolve(self, rel):
        path = self.root / rel
        if not path.exists():
            raise ManifestError(f"cohort file missing on disk: {path}")
        return path

    def volume(self, pid, seq) -> Volume:
        entry = self.cohort.patient(pid).sequences[seq]
        vol, _ = read_volume(self._resolve(entry.image), default_sequence=seq)
        return vol

    def labels(self, pid, seq) -> LabelMap:
        entry = self.cohort.patient(pid).sequences[seq]
        if entry.labels is None:
            raise ManifestError(f"patient {pid} has no {seq.value} labels")
        lm, _ = read_volume(self._resolve(entry.labels), as_labels=True)
        return lm


def _shared_split(cohort: CohortManifest, seed: int):
    union = sorted({pid for seq in (SequenceKind.LGE, SequenceKind.BSSFP, SequenceKind.T2)
                    for pid in cohort.labeled_ids(seq)})
    train, val = split_patients(union, VAL_FRACTION, seed)
    assignment = {pid: "train" for pid in train}
    assignment.update({pid: "val" for pid in val})
    return assignment


def build(config: TrainingConfig, cohort_path, out_dir, synthetic_dir=None, seed: int = 0,
          schedule: RotationAugmentation = RotationAugmentation(),
          include_original: bool = True) -> tuple[DatasetManifest, Path]:
    """Materialize one training configuration under ``out_dir``.

    Slice files land in ``out_dir/slices`` (shared across configurations);
    the manifest is written to ``out_dir/manifest_config{id}.json`` with
    paths relative to ``out_dir``. Returns the manifest and its path.
    """
    if config.include_synthetic_lge and synthetic_dir is None:
        raise ConfigurationError(
            f"configuration {config.id} includes synthetic LGE: --synthetic-dir is required")

    cohort_path = Path(cohort_path)
    cohort = read_cohort(cohort_path)
    reader = _CohortReader(cohort, cohort_path.parent)
    out_dir = Path(out_dir)
    slices_dir = out_dir / "slices"
    slices_dir.mkdir(parents=True, exist_ok=True)

    split = _shared_split(cohort, seed)
    records: list[ManifestRecord] = []

    for seq in config.sequences():
        for pid in cohort.labeled_ids(seq):
            volume = reader.volume(pid, seq)
            labels = reader.labels(pid, seq)
            if volume.shape != labels.shape:
                raise ConfigurationError(
                    f"{pid}/{seq.value}: volume {volume.shape} and labels {labels.shape} differ")
            rotate_this = config.include_scar_rotations and seq is SequenceKind.LGE
            for z in range(volume.shape[2]):
                gt_rel = f"slices/{_gt_name(pid, seq, z)}"
                _write_slice_labels(labels, z, out_dir / gt_rel)
                if include_original or not rotate_this:
                    img_rel = f"slices/{_slice_name(pid, seq, z)}"
                    _write_slice_volume(volume, z, out_dir / img_rel)
                    records.append(ManifestRecord(img_rel, gt_rel, seq, Provenance.real(),
                                                  pid, split[pid]))
                if rotate_this:
                    records.extend(_rotation_records(volume, labels, z, pid, gt_rel,
                                                     out_dir, schedule, split[pid]))

    if config.include_synthetic_lge:
        records.extend(_synthetic_records(Path(synthetic_dir), cohort, reader, out_dir, split))

    manifest = DatasetManifest(config.id, seed, records)
    manifest_path = out_dir / f"manifest_config{config.id}.json"
    write_manifest(manifest, manifest_path)
    return manifest, manifest_path


def _rotation_records(volume, labels, z, pid, gt_rel, out_dir, schedule, split):
    """Rotated variants k = 1..count for one labeled LGE slice."""
    records = []
    s = volume.slice_at(z)
    label_plane = labels.slice_at(z)
    try:
        for k in range(1, schedule.count + 1):
            rotated = rotate_myocardium(s, label_plane, k * schedule.angle_step_deg)
            rel = f"slices/{_slice_name(pid, SequenceKind.LGE, z, k)}"
            out = Volume(rotated.data[:, :, None], volume.spacing, SequenceKind.LGE, pid)
            write_volume(out, out_dir / rel)
            records.append(ManifestRecord(rel, gt_rel, SequenceKind.LGE,
                                          Provenance.rotated(k), pid, split))
    except Exception as e:  # degenerate slice: keep the real record only
        log.warning("%s slice %d: rotation skipped (%s)", pid, z, e)
        return []
    return records


def _synthetic_records(synthetic_dir, cohort, reader, out_dir, split):
    manifest_path = synthetic_dir / SYNTHETIC_MANIFEST_NAME
    if not manifest_path.exists():
        raise ConfigurationError(f"synthetic dir has no {SYNTHETIC_MANIFEST_NAME}: {synthetic_dir}")
    synth = read_synthetic_manifest(manifest_path)

    records = []
    for record in sorted(synth.records, key=lambda r: r.source_patient):
        pid = record.source_patient
        patient = cohort.patient(pid)
        if not patient.labeled(SequenceKind.BSSFP):
            log.warning("synthetic volume for %s skipped: no bSSFP labels to carry over", pid)
            continue
        labels = reader.labels(pid, SequenceKind.BSSFP)
        image_path = synthetic_dir / record.image_path
        if not image_path.exists():
            raise ConfigurationError(f"synthetic volume missing on disk: {image_path}")
        volume, _ = read_volume(image_path, default_sequence=SequenceKind.SYNTHETIC_LGE)
        if volume.shape != labels.shape:
            raise ConfigurationError(
                f"synthetic {pid}: volume {volume.shape} does not match bSSFP labels {labels.shape}")
        for z in range(volume.shape[2]):
            gt_rel = f"slices/{_gt_name(pid, SequenceKind.BSSFP, z)}"
            _write_slice_labels(labels, z, out_dir / gt_rel)
            img_rel = f"slices/{_slice_name(pid, SequenceKind.SYNTHETIC_LGE, z)}"
            _write_slice_volume(volume, z, out_dir / img_rel, sequence=SequenceKind.SYNTHETIC_LGE)
            records.append(ManifestRecord(img_rel, gt_rel, SequenceKind.SYNTHETIC_LGE,
                                          Provenance.synthetic(), pid, split[pid]))
    return records


def build_domain_manifest(cohort_path, sequence: SequenceKind, out_dir, seed: int = 0,
                          include_unlabeled: bool = True) -> tuple[DatasetManifest, Path]:
    """All slices of one acquisition domain (for synthesis training).

    Unlike the numbered configurations, unlabeled patients may contribute
    records (label_path null); synthesis needs images, not masks.
    """
    cohort_path = Path(cohort_path)
    cohort = read_cohort(cohort_path)
    reader = _CohortReader(cohort, cohort_path.parent)
    out_dir = Path(out_dir)
    (out_dir / "slices").mkdir(parents=True, exist_ok=True)
    split = _shared_split(cohort, seed)

    records = []
    for patient in cohort.patients:
        if sequence not in patient.sequences:
            continue
        labeled = patient.labeled(sequence)
        if not labeled and not include_unlabeled:
            continue
        pid = patient.id
        volume = reader.volume(pid, sequence)
        labels = reader.labels(pid, sequence) if labeled else None
        for z in range(volume.shape[2]):
            img_rel = f"slices/{_slice_name(pid, sequence, z)}"
            _write_slice_volume(volume, z, out_dir / img_rel)
            gt_rel = None
            if labels is not None:
                gt_rel = f"slices/{_gt_name(pid, sequence, z)}"
                _write_slice_labels(labels, z, out_dir / gt_rel)
            records.append(ManifestRecord(img_rel, gt_rel, sequence, Provenance.real(),
                                          pid, split.get(pid, "train")))

    manifest = DatasetManifest(0, seed, records)
    manifest_path = out_dir / f"manifest_domain_{_SEQ_TAGS[sequence]}.json"
    write_manifest(manifest, manifest_path)
    return manifest, manifest_path


def summarize(manifest: DatasetManifest) -> dict:
    """Record counts per (sequence, provenance kind, split); totals conserved."""
    counts = Counter()
    for r in manifest.records:
        counts[(r.sequence.value, r.provenance.kind, r.split)] += 1
    return dict(counts)


def format_summary(manifest: DatasetManifest) -> str:
    counts = summarize(manifest)
    lines = [f"configuration {manifest.config_id}, seed {manifest.seed}",
             f"{'sequence':<14}{'provenance':<12}{'split':<8}{'records':>8}"]
    for (seq, prov, split), n in sorted(counts.items()):
        lines.append(f"{seq:<14}{prov:<12}{split:<8}{n:>8}")
    lines.append(f"{'total':<34}{len(manifest.records):>8}")
    return "\n".join(lines)
