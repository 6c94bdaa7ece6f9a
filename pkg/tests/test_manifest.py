import json

import pytest

from cmrforge.errors import ManifestError
from cmrforge.image import SequenceKind
from cmrforge.manifest import (
    CohortManifest,
    CohortPatient,
    DatasetManifest,
    ManifestRecord,
    Provenance,
    SequenceEntry,
    SyntheticManifest,
    SyntheticRecord,
    read_cohort,
    read_manifest,
    read_synthetic_manifest,
    write_cohort,
    write_manifest,
    write_synthetic_manifest,
)


def sample_records():
    return [
        ManifestRecord("slices/p0_LGE_z00.nii.gz", "slices/p0_LGE_z00_gt.nii.gz",
                       SequenceKind.LGE, Provenance.real(), "p0", "train"),
        ManifestRecord("slices/p0_LGE_z00_rot03.nii.gz", "slices/p0_LGE_z00_gt.nii.gz",
                       SequenceKind.LGE, Provenance.rotated(3), "p0", "train"),
        ManifestRecord("slices/p1_synth_z01.nii.gz", "slices/p1_bSSFP_z01_gt.nii.gz",
                       SequenceKind.SYNTHETIC_LGE, Provenance.synthetic(), "p1", "val"),
    ]


def test_empty_manifest_round_trips(tmp_path):
    m = DatasetManifest(config_id=1, seed=7, records=[])
    path = tmp_path / "m.json"
    write_manifest(m, path)
    out = read_manifest(path)
    assert out.config_id == 1 and out.seed == 7 and out.records == []


def test_one_record_per_provenance_kind_round_trips(tmp_path):
    m = DatasetManifest(4, 11, sample_records())
    path = tmp_path / "m.json"
    write_manifest(m, path)
    out = read_manifest(path)
    assert out.records == m.records


def test_missing_sequence_field_names_it(tmp_path):
    payload = {"config_id": 1, "seed": 0, "records": [{
        "image_path": "x.nii", "label_path": None,
        "provenance": {"kind": "real"}, "patient_id": "p", "split": "train"}]}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ManifestError) as err:
        read_manifest(path)
    assert "sequence" in str(err.value)


def test_unknown_field_rejected_with_name(tmp_path):
    payload = {"config_id": 1, "seed": 0, "records": [{
        "image_path": "x.nii", "label_path": None, "sequence": "LGE",
        "provenance": {"kind": "real"}, "patient_id": "p", "split": "train",
        "mystery": 1}]}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ManifestError) as err:
        read_manifest(path)
    assert "mystery" in str(err.value)


def test_malformed_json_carries_position(tmp_path):
    path = tmp_path / "m.json"
    path.write_text("{not json")
    with pytest.raises(ManifestError) as err:
        read_manifest(path)
    assert "line" in str(err.value)


def test_provenance_validation():
    with pytest.raises(ManifestError):
        Provenance("rotated")
    with pytest.raises(ManifestError):
        Provenance("real", k=2)
    with pytest.raises(ManifestError):
        Provenance("augmented")


def test_write_is_deterministic(tmp_path):
    m = DatasetManifest(2, 3, sample_records())
    write_manifest(m, tmp_path / "a.json")
    write_manifest(m, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_cohort_round_trip(tmp_path):
    cohort = CohortManifest(seed=5, patients=[
        CohortPatient("p0", {
            SequenceKind.LGE: SequenceEntry("p0/lge.nii.gz", "p0/lge_gt.nii.gz", "p0/scar.nii.gz"),
            SequenceKind.BSSFP: SequenceEntry("p0/bssfp.nii.gz", None),
        }),
    ])
    path = tmp_path / "cohort.json"
    write_cohort(cohort, path)
    out = read_cohort(path)
    assert out.seed == 5
    assert out.patients[0].labeled(SequenceKind.LGE)
    assert not out.patients[0].labeled(SequenceKind.BSSFP)
    assert out.patients[0].sequences[SequenceKind.LGE].scar == "p0/scar.nii.gz"


def test_synthetic_manifest_round_trip(tmp_path):
    m = SyntheticManifest(seed=1, records=[SyntheticRecord("synth/p0.nii.gz", "p0")])
    path = tmp_path / "synthetic_manifest.json"
    write_synthetic_manifest(m, path)
    out = read_synthetic_manifest(path)
    assert out.records[0].source_patient == "p0"
    assert out.records[0].sequence is SequenceKind.SYNTHETIC_LGE
