import math

import numpy as np
import pytest

from cmrforge.errors import DegenerateContourError, MissingStructureError
from cmrforge.image import LABEL_LV, LABEL_MYO, LabelMap, SequenceKind, Slice2D
from cmrforge.augment import (
    Contour,
    RotationAugmentation,
    build_landmark_set,
    draw_global_angle,
    extract_contours,
    generate_rotation_set,
    global_rotation,
    moore_trace,
    orient_ccw_from_max_x,
    place_landmarks,
    rotate_myocardium,
)
from cmrforge.phantom import PhantomSpec, generate_patient

LGE = SequenceKind.LGE


def augment_phantom(scar_start=-22.5, scar_extent=45.0, **kwargs):
    spec = PhantomSpec(size=(128, 128), r_lv=14.0, r_epi=22.0, r_rv=14.0,
                       scar_start_deg=scar_start, scar_extent_deg=scar_extent,
                       n_slices={SequenceKind.BSSFP: 2, LGE: 3, SequenceKind.T2: 2},
                       **kwargs)
    return generate_patient(spec, "p0")


def boundary_pixels_4(mask):
    """Brute-force oracle: region pixels with a background 4-neighbor."""
    out = set()
    nx, ny = mask.shape
    for x in range(nx):
        for y in range(ny):
            if not mask[x, y]:
                continue
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                px, py = x + dx, y + dy
                if not (0 <= px < nx and 0 <= py < ny) or not mask[px, py]:
                    out.add((x, y))
                    break
    return out


# ------------------------------------------------------------------ contours

def test_annulus_contours_sit_on_expected_radii():
    patient = augment_phantom()
    labels = patient.labels[LGE]
    epi, endo = extract_contours(labels, 0)
    cx, cy = patient.spec.center
    epi_r = np.hypot(epi.points[:, 0] - cx, epi.points[:, 1] - cy)
    endo_r = np.hypot(endo.points[:, 0] - cx, endo.points[:, 1] - cy)
    assert np.all(np.abs(epi_r - patient.spec.r_epi) <= 1.0)
    assert np.all(np.abs(endo_r - patient.spec.r_lv) <= 1.0)


def test_trace_visits_exactly_the_4_boundary():
    patient = augment_phantom()
    plane = patient.labels[LGE].slice_at(0)
    for mask in (np.isin(plane, (LABEL_LV, LABEL_MYO)), plane == LABEL_LV):
        traced = moore_trace(mask)
        traced_set = {(int(x), int(y)) for x, y in traced}
        oracle = boundary_pixels_4(mask)
        assert traced_set == oracle
        assert len(traced) == len(oracle)


def test_missing_structures_raise():
    plane = np.zeros((32, 32, 1), dtype=np.uint8)
    plane[10:20, 10:20, 0] = LABEL_LV  # LV without MYO
    with pytest.raises(MissingStructureError):
        extract_contours(LabelMap(plane, (1, 1, 1)), 0)
    plane[:, :, 0] = 0
    plane[10:20, 10:20, 0] = LABEL_MYO  # MYO without LV
    with pytest.raises(MissingStructureError):
        extract_contours(LabelMap(plane, (1, 1, 1)), 0)


def test_multiple_components_take_largest(caplog):
    patient = augment_phantom()
    plane = patient.labels[LGE].slice_at(0).copy()
    plane[0:2, 0:2] = LABEL_MYO  # stray island far from the heart
    plane[2, 0] = LABEL_LV
    lm = LabelMap(plane[:, :, None], (1, 1, 1))
    with caplog.at_level("WARNING"):
        epi, _ = extract_contours(lm, 0)
    assert any("largest" in r.message for r in caplog.records)
    cx, cy = patient.spec.center
    r = np.hypot(epi.points[:, 0] - cx, epi.points[:, 1] - cy)
    assert np.all(r <= patient.spec.r_epi + 1.0)  # the island did not win


# ----------------------------------------------------------------- landmarks

def test_square_contour_landmarks_at_quarter_arcs():
    ring = [(0, 0), (1, 0), (2, 0), (3, 0), (3, 1), (3, 2), (3, 3),
            (2, 3), (1, 3), (0, 3), (0, 2), (0, 1)]
    c = Contour(np.asarray(ring, dtype=float), "epicardial")
    pts = place_landmarks(c, 4)
    # perimeter 12, arc positions 0, 3, 6, 9 -> the four corners
    np.testing.assert_allclose(pts, [(0, 0), (3, 0), (3, 3), (0, 3)], atol=1e-12)


def test_perfect_circle_landmarks_have_equal_chords():
    theta = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    circle = np.stack([50 + 20 * np.cos(theta), 50 + 20 * np.sin(theta)], axis=1)
    pts = place_landmarks(Contour(circle, "epicardial"), 50)
    assert pts.shape == (50, 2)
    chords = np.hypot(*np.diff(np.vstack([pts, pts[:1]]), axis=0).T)
    assert chords.max() <= 1.01 * chords.min()


def test_traced_circle_landmarks_gap_spread_within_quarter():
    # rasterized contours are jagged; chord gaps stay within 25% of the mean
    patient = augment_phantom()
    epi, _ = extract_contours(patient.labels[LGE], 0)
    pts = place_landmarks(epi, 50)
    assert pts.shape == (50, 2)
    chords = np.hypot(*np.diff(np.vstack([pts, pts[:1]]), axis=0).T)
    assert np.all(np.abs(chords - chords.mean()) <= 0.25 * chords.mean())


def test_landmark_count_contract():
    patient = augment_phantom()
    epi, endo = extract_contours(patient.labels[LGE], 0)
    assert place_landmarks(epi, 50).shape[0] == 50
    assert place_landmarks(endo, 50).shape[0] == 50


def test_orientation_ccw_from_max_x():
    patient = augment_phantom()
    epi, _ = extract_contours(patient.labels[LGE], 0)
    pts = orient_ccw_from_max_x(epi.points)
    cx, cy = patient.spec.center
    assert pts[0, 0] == pts[:, 0].max()
    theta = np.unwrap(np.arctan2(cy - pts[:, 1], pts[:, 0] - cx))
    assert theta[-1] > theta[0]  # angles increase: counter-clockwise, y up


def test_landmark_set_skips_bad_slices(caplog):
    patient = augment_phantom()
    data = patient.labels[LGE].data.copy()
    data[:, :, 1] = 0  # strip structures from the middle slice
    lm = LabelMap(data, patient.labels[LGE].spacing)
    with caplog.at_level("WARNING"):
        ls = build_landmark_set(lm)
    assert ls.skipped == [1]
    assert sorted(ls.slices) == [0, 2]
    assert ls.slices[0]["epicardial"].shape == (50, 2)


def test_degenerate_contour_rejected():
    with pytest.raises(DegenerateContourError):
        Contour(np.zeros((4, 2)), "endocardial")


# ---------------------------------------------------------- scar rotation

def scar_angle_deg(slice_data, label_plane, center, myo_level):
    """Brute-force oracle: intensity-weighted circular mean over the MYO ring."""
    sum_sin = sum_cos = 0.0
    for x, y in zip(*np.nonzero(label_plane == LABEL_MYO)):
        w = max(float(slice_data[x, y]) - myo_level, 0.0)
        theta = math.atan2(center[1] - y, x - center[0])
        sum_sin += w * math.sin(theta)
        sum_cos += w * math.cos(theta)
    return math.degrees(math.atan2(sum_sin, sum_cos))


def wrap_deg(a):
    return (a + 180.0) % 360.0 - 180.0


def test_zero_angle_rotation_is_identity():
    patient = augment_phantom()
    s = patient.volumes[LGE].slice_at(0)
    plane = patient.labels[LGE].slice_at(0)
    out = rotate_myocardium(s, plane, 0.0)
    np.testing.assert_allclose(out.data, s.data, atol=1e-6)

    from cmrforge.image import blur_3x3_array

    heart = np.isin(plane, (LABEL_LV, LABEL_MYO))
    weight = blur_3x3_array(heart.astype(np.float64))
    np.testing.assert_array_equal(out.data[weight == 0], s.data[weight == 0])


def test_outside_band_bit_identical_for_any_angle():
    patient = augment_phantom()
    s = patient.volumes[LGE].slice_at(0)
    plane = patient.labels[LGE].slice_at(0)
    from cmrforge.image import blur_3x3_array

    heart = np.isin(plane, (LABEL_LV, LABEL_MYO))
    outside = blur_3x3_array(heart.astype(np.float64)) == 0
    for angle in (7.2, 66.6, 144.0):
        out = rotate_myocardium(s, plane, angle)
        np.testing.assert_array_equal(out.data[outside], s.data[outside])


def test_scar_centroid_moves_clockwise_by_step():
    patient = augment_phantom()  # scar centered at 0 degrees
    s = patient.volumes[LGE].slice_at(0)
    plane = patient.labels[LGE].slice_at(0)
    myo_level = patient.spec.intensities[LGE]["myo"]
    cx, cy = patient.spec.center

    base = scar_angle_deg(s.data, plane, (cx, cy), myo_level)
    assert abs(base) <= 1.0

    out = rotate_myocardium(s, plane, 7.2)
    moved = scar_angle_deg(out.data, plane, (cx, cy), myo_level)
    assert wrap_deg(moved - base) == pytest.approx(-7.2, abs=1.5)


def test_rotation_set_schedule_and_monotone_displacement():
    patient = augment_phantom()
    s = patient.volumes[LGE].slice_at(0)
    plane = patient.labels[LGE].slice_at(0)
    outputs = generate_rotation_set(s, plane)
    assert len(outputs) == 21
    assert RotationAugmentation().angles()[-1] == pytest.approx(144.0)

    myo_level = patient.spec.intensities[LGE]["myo"]
    cx, cy = patient.spec.center
    base = scar_angle_deg(outputs[0].data, plane, (cx, cy), myo_level)
    displacements = []
    for out in outputs[1:]:
        angle = scar_angle_deg(out.data, plane, (cx, cy), myo_level)
        displacements.append(-wrap_deg(angle - base) % 360.0)
    assert np.all(np.diff(displacements) > 0)  # clockwise sweep, monotone in k


def test_rotation_preserves_heart_mean_within_2pct():
    patient = augment_phantom()
    s = patient.volumes[LGE].slice_at(0)
    plane = patient.labels[LGE].slice_at(0)
    heart = np.isin(plane, (LABEL_LV, LABEL_MYO))
    base = s.data[heart].mean()
    for out in generate_rotation_set(s, plane)[1:]:
        assert out.data[heart].mean() == pytest.approx(base, rel=0.02)


def test_rotation_is_pure_function_of_inputs():
    patient = augment_phantom()
    s = patient.volumes[LGE].slice_at(0)
    plane = patient.labels[LGE].slice_at(0)
    build_landmark_set(patient.labels[LGE])  # deriving landmarks must not matter
    a = rotate_myocardium(s, plane, 36.0)
    b = rotate_myocardium(s, plane, 36.0)
    np.testing.assert_array_equal(a.data, b.data)


# ---------------------------------------------------------- global rotation

def test_global_rotation_deterministic_per_seed():
    patient = augment_phantom()
    s = patient.volumes[LGE].slice_at(0)
    plane = patient.labels[LGE].slice_at(0)
    img_a, lab_a = global_rotation(s, plane, 99)
    img_b, lab_b = global_rotation(s, plane, 99)
    np.testing.assert_array_equal(img_a.data, img_b.data)
    np.testing.assert_array_equal(lab_a, lab_b)


def test_global_angle_bounds_and_span():
    rng = np.random.default_rng(5)
    draws = np.array([draw_global_angle(rng) for _ in range(10_000)])
    assert np.all(np.abs(draws) <= 15.0)
    assert draws.min() < -14.0 and draws.max() > 14.0


def test_global_rotation_keeps_label_codes():
    patient = augment_phantom()
    s = patient.volumes[LGE].slice_at(0)
    plane = patient.labels[LGE].slice_at(0)
    _, labels = global_rotation(s, plane, 4)
    assert set(np.unique(labels)) <= {0, 1, 2, 3}
