"""JSON manifest schemas shared by the pipeline stages.

Three schemas live here:

* DatasetManifest — the training-set listing consumed by the trainer:
  ``{"config_id": int, "seed": int, "records": [...]}`` where each record is
  ``{"image_path", "label_path", "sequence", "provenance", "patient_id",
  "split"}``. Paths are relative to the manifest file. Key order is fixed so
  rebuilding with the same seed yields byte-identical files.
* Cohort manifest — the phantom/ingest stage's per-patient file listing.
* Synthetic manifest — the trainer's synthesis output consumed by
  build-dataset for configurations 5-8.

Validation is strict: unknown fields and missing required fields are
rejected with errors naming the JSON path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from cmrforge.errors import ManifestError
from cmrforge.image import SequenceKind

PROVENANCE_KINDS = ("real", "rotated", "synthetic")
SPLITS = ("train", "val")


@dataclass(frozen=True)
class Provenance:
    kind: str
    k: int | None = None  # rotation index, only for kind == "rotated"

    def __post_init__(self):
        if self.kind not in PROVENANCE_KINDS:
            raise ManifestError(f"provenance kind must be one of {PROVENANCE_KINDS}, got {self.kind!r}")
        if self.kind == "rotated":
            if self.k is None or int(self.k) < 0:
                raise ManifestError("rotated provenance requires a rotation index k >= 0")
        elif self.k is not None:
            raise ManifestError(f"provenance kind {self.kind!r} must not carry a rotation index")

    @staticmethod
    def real():
        return Provenance("real")

    @staticmethod
    def rotated(k: int):
        return Provenance("rotated", int(k))

    @staticmethod
    def synthetic():
        return Provenance("synthetic")


@dataclass(frozen=True)
class ManifestRecord:
    image_path: str
    label_path: str | None
    sequence: SequenceKind
    provenance: Provenance
    patient_id: str
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ManifestError(f"split must be one of {SPLITS}, got {self.split!r}")

    def identity(self):
        """Hashable identity used for set comparisons across configurations."""
        return (self.image_path, self.label_path, self.sequence.value,
                self.provenance.kind, self.provenance.k, self.patient_id, self.split)


@dataclass
class DatasetManifest:
    config_id: int
    seed: int
    records: list[ManifestRecord] = field(default_factory=list)

    def record_identities(self):
        return {r.identity() for r in self.records}


def _require(obj, key, json_path, kind=None):
    if key not in obj:
        raise ManifestError(f"missing required field {key!r}", json_path=json_path)
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise ManifestError(f"field {key!r} has wrong type {type(value).__name__}",
                            json_path=f"{json_path}.{key}")
    return value


def _reject_unknown(obj, allowed, json_path):
    unknown = set(obj) - set(allowed)
    if unknown:
        name = sorted(unknown)[0]
        raise ManifestError(f"unknown field {name!r}", json_path=f"{json_path}.{name}")


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ManifestError(f"manifest file not found: {path}")
    except json.JSONDecodeError as e:
        raise ManifestError(f"malformed JSON in {path}: {e.msg}", json_path=f"line {e.lineno}, column {e.colno}")


def _dump_json(payload, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def _provenance_from_json(obj, json_path):
    if not isinstance(obj, dict):
        raise ManifestError("provenance must be an object", json_path=json_path)
    _reject_unknown(obj, {"kind", "k"}, json_path)
    kind = _require(obj, "kind", json_path, str)
    try:
        return Provenance(kind, obj.get("k"))
    except ManifestError as e:
        raise ManifestError(str(e), json_path=json_path)


def _record_from_json(obj, json_path):
    if not isinstance(obj, dict):
        raise ManifestError("record must be an object", json_path=json_path)
    allowed = {"image_path", "label_path", "sequence", "provenance", "patient_id", "split"}
    _reject_unknown(obj, allowed, json_path)
    image_path = _require(obj, "image_path", json_path, str)
    label_path = _require(obj, "label_path", json_path, (str, type(None)))
    seq_name = _require(obj, "sequence", json_path, str)
    try:
        sequence = SequenceKind.from_name(seq_name)
    except Exception:
        raise ManifestError(f"unknown sequence {seq_name!r}", json_path=f"{json_path}.sequence")
    provenance = _provenance_from_json(_require(obj, "provenance", json_path), f"{json_path}.provenance")
    patient_id = _require(obj, "patient_id", json_path, str)
    split = _require(obj, "split", json_path, str)
    try:
        return ManifestRecord(image_path, label_path, sequence, provenance, patient_id, split)
    except ManifestError as e:
        raise ManifestError(str(e), json_path=json_path)


def read_manifest(path) -> DatasetManifest:
    """Parse and validate a dataset manifest; errors carry the JSON path."""
    root = _load_json(path)
    if not isinstance(root, dict):
        raise ManifestError("manifest root must be an object", json_path="$")
    _reject_unknown(root, {"config_id", "seed", "records"}, "$")
    config_id = _require(root, "config_id", "$", int)
    seed = _require(root, "seed", "$", int)
    records_json = _require(root, "records", "$", list)
    records = [_record_from_json(r, f"$.records[{i}]") for i, r in enumerate(records_json)]
    return DatasetManifest(config_id, seed, records)


def _record_to_json(r: ManifestRecord):
    prov = {"kind": r.provenance.kind}
    if r.provenance.kind == "rotated":
        prov["k"] = r.provenance.k
    return {
        "image_path": r.image_path,
        "label_path": r.label_path,
        "sequence": r.sequence.value,
        "provenance": prov,
        "patient_id": r.patient_id,
        "split": r.split,
    }


def write_manifest(m: DatasetManifest, path):
    """Write a dataset manifest with fixed key order (byte-reproducible)."""
    payload = {
        "config_id": m.config_id,
        "seed": m.seed,
        "records": [_record_to_json(r) for r in m.records],
    }
    _dump_json(payload, path)


def resolve_path(rel_path: str, manifest_path) -> Path:
    """Resolve a record path relative to its manifest's directory."""
    return (Path(manifest_path).parent / rel_path).resolve()


# ------------------------------------------------------------------- cohort

@dataclass(frozen=True)
class SequenceEntry:
    image: str
    labels: str | None = None
    scar: str | None = None


@dataclass(frozen=True)
class CohortPatient:
    id: str
    sequences: dict  # SequenceKind -> SequenceEntry

    def labeled(self, seq: SequenceKind) -> bool:
        entry = self.sequences.get(seq)
        return entry is not None and entry.labels is not None


@dataclass
class CohortManifest:
    seed: int
    patients: list[CohortPatient] = field(default_factory=list)

    def labeled_ids(self, seq: SequenceKind) -> list[str]:
        return [p.id for p in self.patients if p.labeled(seq)]

    def patient(self, pid: str) -> CohortPatient:
        for p in self.patients:
            if p.id == pid:
                return p
        raise ManifestError(f"patient {pid!r} not in cohort")


def read_cohort(path) -> CohortManifest:
    root = _load_json(path)
    if not isinstance(root, dict):
        raise ManifestError("cohort root must be an object", json_path="$")
    _reject_unknown(root, {"seed", "patients"}, "$")
    seed = _require(root, "seed", "$", int)
    patients = []
    for i, p in enumerate(_require(root, "patients", "$", list)):
        jp = f"$.patients[{i}]"
        _reject_unknown(p, {"id", "sequences"}, jp)
        pid = _require(p, "id", jp, str)
        seqs = {}
        for name, entry in _require(p, "sequences", jp, dict).items():
            jq = f"{jp}.sequences.{name}"
            try:
                seq = SequenceKind.from_name(name)
            except Exception:
                raise ManifestError(f"unknown sequence {name!r}", json_path=jq)
            if not isinstance(entry, dict):
                raise ManifestError("sequence entry must be an object", json_path=jq)
            _reject_unknown(entry, {"image", "labels", "scar"}, jq)
            seqs[seq] = SequenceEntry(
                image=_require(entry, "image", jq, str),
                labels=entry.get("labels"),
                scar=entry.get("scar"),
            )
        patients.append(CohortPatient(pid, seqs))
    return CohortManifest(seed, patients)


def write_cohort(cohort: CohortManifest, path):
    payload = {
        "seed": cohort.seed,
        "patients": [
            {
                "id": p.id,
                "sequences": {
                    seq.value: {
                        k: v for k, v in
                        (("image", e.image), ("labels", e.labels), ("scar", e.scar))
                        if v is not None
                    }
                    for seq, e in sorted(p.sequences.items(), key=lambda kv: kv[0].value)
                },
            }
            for p in cohort.patients
        ],
    }
    _dump_json(payload, path)


# ---------------------------------------------------------------- synthetic

@dataclass(frozen=True)
class SyntheticRecord:
    image_path: str
    source_patient: str
    sequence: SequenceKind = SequenceKind.SYNTHETIC_LGE


@dataclass
class SyntheticManifest:
    seed: int
    records: list[SyntheticRecord] = field(default_factory=list)


SYNTHETIC_MANIFEST_NAME = "synthetic_manifest.json"


def read_synthetic_manifest(path) -> SyntheticManifest:
    root = _load_json(path)
    if not isinstance(root, dict):
        raise ManifestError("synthetic manifest root must be an object", json_path="$")
    _reject_unknown(root, {"seed", "records"}, "$")
    seed = _require(root, "seed", "$", int)
    records = []
    for i, r in enumerate(_require(root, "records", "$", list)):
        jp = f"$.records[{i}]"
        _reject_unknown(r, {"image_path", "source_patient", "sequence"}, jp)
        seq_name = _require(r, "sequence", jp, str)
        try:
            seq = SequenceKind.from_name(seq_name)
        except Exception:
            raise ManifestError(f"unknown sequence {seq_name!r}", json_path=f"{jp}.sequence")
        records.append(SyntheticRecord(
            image_path=_require(r, "image_path", jp, str),
            source_patient=_require(r, "source_patient", jp, str),
            sequence=seq,
        ))
    return SyntheticManifest(seed, records)


def write_synthetic_manifest(m: SyntheticManifest, path):
    payload = {
        "seed": m.seed,
        "records": [
            {"image_path": r.image_path, "source_patient": r.source_patient, "sequence": r.sequence.value}
            for r in m.records
        ],
    }
    _dump_json(payload, path)
