import math

import numpy as np
import pytest
from scipy import ndimage

from cmrforge.errors import InvalidArgumentError
from cmrforge.image import LABEL_LV, LABEL_MYO, SequenceKind
from cmrforge.manifest import read_cohort
from cmrforge.phantom import (
    DEFAULT_INTENSITIES,
    PhantomSpec,
    default_labeled_counts,
    generate_cohort,
    generate_patient,
    render_label_plane,
    render_scar_plane,
    write_cohort_to_dir,
)


def small_spec(**kwargs):
    defaults = dict(size=(64, 64), r_lv=7.0, r_epi=11.0, r_rv=7.0,
                    n_slices={SequenceKind.BSSFP: 3, SequenceKind.LGE: 4, SequenceKind.T2: 2})
    defaults.update(kwargs)
    return PhantomSpec(**defaults)


def test_noise_free_lv_pixels_carry_exact_intensity():
    patient = generate_patient(small_spec(), "p0")
    for seq, table in DEFAULT_INTENSITIES.items():
        vol, labels = patient.volumes[seq], patient.labels[seq]
        lv = labels.data == LABEL_LV
        assert np.all(vol.data[lv] == np.float32(table["lv"]))


def test_scar_sector_matches_brute_force_angle_scan():
    spec = small_spec(scar_start_deg=0.0, scar_extent_deg=45.0)
    label_plane = render_label_plane(spec)
    scar = render_scar_plane(spec, label_plane)

    cx, cy = spec.center
    expected = np.zeros(spec.size, dtype=np.uint8)
    for x in range(spec.size[0]):
        for y in range(spec.size[1]):
            if label_plane[x, y] != LABEL_MYO:
                continue
            theta = math.degrees(math.atan2(cy - y, x - cx)) % 360.0
            if theta <= 45.0:
                expected[x, y] = 1
    np.testing.assert_array_equal(scar, expected)
    assert scar.sum() > 0


def test_scar_strictly_inside_myocardium():
    patient = generate_patient(small_spec(), "p0")
    myo = patient.labels[SequenceKind.LGE].data == LABEL_MYO
    assert not np.any((patient.scar_mask.data == 1) & ~myo)


def test_lv_plus_myo_single_connected_component():
    plane = render_label_plane(small_spec())
    heart = np.isin(plane, (LABEL_LV, LABEL_MYO))
    _, n = ndimage.label(heart, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    assert n == 1


def test_same_seed_bit_identical():
    spec = small_spec(noise_sigma=0.05, seed=42)
    a = generate_patient(spec, "p0")
    b = generate_patient(spec, "p0")
    for seq in a.volumes:
        np.testing.assert_array_equal(a.volumes[seq].data, b.volumes[seq].data)


def test_geometry_validation():
    with pytest.raises(InvalidArgumentError):
        small_spec(r_lv=12.0, r_epi=11.0)
    with pytest.raises(InvalidArgumentError):
        small_spec(scar_extent_deg=200.0)


def test_cohort_counts_and_ranges():
    records = generate_cohort(45, base_seed=7)
    assert len(records) == 45
    assert len({r.patient_id for r in records}) == 45
    for r in records:
        n_lge = r.spec.n_slices[SequenceKind.LGE]
        assert 10 <= n_lge <= 18
        assert 8 <= r.spec.n_slices[SequenceKind.BSSFP] <= 12
        assert 3 <= r.spec.n_slices[SequenceKind.T2] <= 7

    labeled = {seq: sum(seq in r.labeled for r in records) for seq in
               (SequenceKind.BSSFP, SequenceKind.LGE, SequenceKind.T2)}
    assert labeled[SequenceKind.BSSFP] == 35
    assert labeled[SequenceKind.LGE] == 5
    assert labeled[SequenceKind.T2] == 35


def test_cohort_deterministic():
    a = generate_cohort(6, base_seed=3, size=(48, 48))
    b = generate_cohort(6, base_seed=3, size=(48, 48))
    assert a == b


def test_default_labeled_counts_scale():
    counts = default_labeled_counts(45)
    assert counts[SequenceKind.LGE] == 5 and counts[SequenceKind.BSSFP] == 35
    toy = default_labeled_counts(5)
    assert toy[SequenceKind.LGE] >= 1


def test_write_cohort_to_dir(tmp_path):
    records = generate_cohort(2, base_seed=1, size=(32, 32),
                              slice_ranges={SequenceKind.LGE: (3, 3),
                                            SequenceKind.BSSFP: (2, 2),
                                            SequenceKind.T2: (2, 2)})
    write_cohort_to_dir(records, tmp_path, base_seed=1)
    cohort = read_cohort(tmp_path / "cohort.json")
    assert len(cohort.patients) == 2
    for p in cohort.patients:
        pdir = tmp_path / p.id
        for name in ("bssfp.nii.gz", "lge.nii.gz", "t2.nii.gz", "scar.nii.gz",
                     "bssfp_gt.nii.gz", "lge_gt.nii.gz", "t2_gt.nii.gz"):
            assert (pdir / name).exists()
        assert p.sequences[SequenceKind.LGE].scar is not None
