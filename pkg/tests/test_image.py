import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmrforge.errors import InvalidArgumentError
from cmrforge.image import (
    LabelMap,
    SequenceKind,
    Slice2D,
    Volume,
    crop_or_pad_array,
    crop_or_pad_center,
    gaussian_blur_3x3,
    resample_bilinear,
    resample_labels_nearest,
    rotate_array,
    rotate_slice,
)

from conftest import gaussian_blob


def make_volume(data, spacing=(1.0, 1.0, 1.0), seq=SequenceKind.LGE):
    return Volume(np.asarray(data, dtype=np.float32), spacing, seq, "p0")


# ---------------------------------------------------------------- containers

def test_volume_rejects_nonfinite():
    data = np.zeros((4, 4, 2), dtype=np.float32)
    data[1, 1, 0] = np.nan
    with pytest.raises(InvalidArgumentError):
        make_volume(data)


def test_volume_rejects_bad_spacing():
    with pytest.raises(InvalidArgumentError):
        Volume(np.zeros((2, 2, 1), np.float32), (1.0, -1.0, 1.0), SequenceKind.LGE)


def test_labelmap_rejects_out_of_range_codes():
    with pytest.raises(InvalidArgumentError):
        LabelMap(np.full((2, 2, 1), 7, np.uint8), (1, 1, 1))


def test_sequence_kind_roundtrip():
    assert SequenceKind.from_name("bSSFP") is SequenceKind.BSSFP
    with pytest.raises(InvalidArgumentError):
        SequenceKind.from_name("FLAIR")


# ------------------------------------------------------------------ rotation

def test_rotate_angle_zero_is_bit_identical(rng):
    s = Slice2D(rng.random((17, 13), dtype=np.float32))
    out = rotate_slice(s, 0.0, (8.0, 6.0))
    np.testing.assert_array_equal(out.data, s.data)


def test_rotate_360_matches_four_exact_quarter_turns():
    # oracle: four chained 90 deg nearest rotations about the center of an
    # odd-sized slice map the grid onto itself exactly -> identity
    blob = gaussian_blob(33)
    center = (16.0, 16.0)
    chained = blob
    for _ in range(4):
        chained = rotate_array(chained, 90.0, center, interp="nearest")
    np.testing.assert_array_equal(chained, blob)

    out = rotate_array(blob, 360.0, center, interp="bilinear")
    assert np.max(np.abs(out - chained)) <= 1e-5


def test_rotate_90_moves_hot_pixel_to_hand_computed_position():
    # exact transform about (2,2): (4,2)-(2,2)=(2,0) -> 90 deg clockwise on
    # screen -> (0,2), so the hot pixel lands at (2,4)
    s = np.zeros((5, 5), dtype=np.float32)
    s[4, 2] = 1.0
    out = rotate_array(s, 90.0, (2.0, 2.0))
    assert out[2, 4] == pytest.approx(1.0, abs=1e-6)
    assert np.sum(out) == pytest.approx(1.0, abs=1e-5)


def test_rotate_inverse_recovers_smooth_slice():
    blob = gaussian_blob(65, sigma=10.0)
    for angle in (7.2, 33.0, 144.0):
        fwd = rotate_array(blob, angle, (32.0, 32.0))
        back = rotate_array(fwd, -angle, (32.0, 32.0))
        assert np.max(np.abs(back - blob)) <= 2e-2


def test_rotate_rejects_bad_arguments():
    s = Slice2D(np.zeros((5, 5), np.float32))
    with pytest.raises(InvalidArgumentError):
        rotate_slice(s, float("nan"), (2, 2))
    with pytest.raises(InvalidArgumentError):
        rotate_slice(s, 10.0, (9.0, 2.0))
    with pytest.raises(InvalidArgumentError):
        rotate_slice(s, 10.0, (float("inf"), 2.0))


def test_rotate_nearest_preserves_label_set(rng):
    labels = rng.integers(0, 4, size=(21, 21)).astype(np.uint8)
    out = rotate_array(labels, 37.0, (10.0, 10.0), interp="nearest")
    assert set(np.unique(out)) <= {0, 1, 2, 3}


# ---------------------------------------------------------------------- blur

def test_blur_constant_is_fixed_point():
    s = Slice2D(np.full((8, 9), 3.25, np.float32))
    out = gaussian_blur_3x3(s)
    np.testing.assert_array_equal(out.data, s.data)


def test_blur_impulse_stamps_kernel():
    s = np.zeros((5, 5), dtype=np.float32)
    s[2, 2] = 1.0
    out = gaussian_blur_3x3(Slice2D(s)).data
    kernel = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.float64) / 16.0
    np.testing.assert_allclose(out[1:4, 1:4], kernel, atol=1e-7)
    assert np.all(out[0, :] == 0) and np.all(out[:, 0] == 0)


def test_blur_preserves_symmetry():
    blob = gaussian_blob(31)
    out = gaussian_blur_3x3(Slice2D(blob)).data
    np.testing.assert_allclose(out, out[::-1, :], atol=1e-7)
    np.testing.assert_allclose(out, out[:, ::-1], atol=1e-7)
    np.testing.assert_allclose(out, out.T, atol=1e-7)


def test_blur_preserves_interior_supported_sum(rng):
    s = np.zeros((32, 32), dtype=np.float32)
    s[4:-4, 4:-4] = rng.random((24, 24), dtype=np.float32)
    out = gaussian_blur_3x3(Slice2D(s)).data
    assert np.sum(out) == pytest.approx(np.sum(s), rel=1e-3)


def test_blur_bounds_extrema(rng):
    s = rng.random((16, 16), dtype=np.float32)
    out = gaussian_blur_3x3(Slice2D(s)).data
    assert out.max() <= s.max()
    assert out.min() >= s.min()


def test_blur_rejects_tiny_slices():
    with pytest.raises(InvalidArgumentError):
        gaussian_blur_3x3(Slice2D(np.zeros((2, 5), np.float32)))


# ------------------------------------------------------------------ resample

def scalar_bilinear(plane, x, y):
    """Independent reference sampler: textbook bilinear with edge clamping."""
    x = min(max(x, 0.0), plane.shape[0] - 1.0)
    y = min(max(y, 0.0), plane.shape[1] - 1.0)
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x0 = min(x0, plane.shape[0] - 2) if plane.shape[0] > 1 else 0
    y0 = min(y0, plane.shape[1] - 2) if plane.shape[1] > 1 else 0
    fx, fy = x - x0, y - y0
    p = plane.astype(np.float64)
    x1 = min(x0 + 1, plane.shape[0] - 1)
    y1 = min(y0 + 1, plane.shape[1] - 1)
    return (p[x0, y0] * (1 - fx) * (1 - fy) + p[x0, y1] * (1 - fx) * fy
            + p[x1, y0] * fx * (1 - fy) + p[x1, y1] * fx * fy)


def test_resample_identity_spacing_is_noop(rng):
    v = make_volume(rng.random((20, 22, 3), dtype=np.float32), spacing=(1.25, 1.25, 5.0))
    out = resample_bilinear(v, (1.25, 1.25))
    assert out.shape == v.shape
    np.testing.assert_allclose(out.data, v.data, atol=1e-6)


def test_resample_lge_table_dimensions_and_values(rng):
    # 384 px at 0.75 mm -> 384*0.75/1.25 = 230.4 -> 230 px at 1.25 mm
    v = make_volume(rng.random((384, 384, 2), dtype=np.float32), spacing=(0.75, 0.75, 5.0))
    out = resample_bilinear(v, (1.25, 1.25))
    assert out.shape == (230, 230, 2)
    assert out.spacing[:2] == (1.25, 1.25)

    ratio = 1.25 / 0.75
    check = rng.integers(0, 230, size=(20, 2))
    for i, j in check:
        expected = scalar_bilinear(v.data[:, :, 0], i * ratio, j * ratio)
        assert out.data[i, j, 0] == pytest.approx(expected, abs=1e-5)


def test_resample_constant_round_trip_exact():
    v = make_volume(np.full((40, 40, 1), 0.625, np.float32), spacing=(1.0, 1.0, 1.0))
    down = resample_bilinear(v, (1.6, 1.6))
    up = resample_bilinear(down, (1.0, 1.0))
    assert np.all(up.data == np.float32(0.625))


def test_resample_rejects_nonpositive_spacing(rng):
    v = make_volume(rng.random((8, 8, 1), dtype=np.float32))
    with pytest.raises(InvalidArgumentError):
        resample_bilinear(v, (0.0, 1.0))


def test_resample_labels_nearest_keeps_codes():
    data = np.zeros((30, 30, 2), dtype=np.uint8)
    data[10:20, 10:20, :] = 2
    lm = LabelMap(data, (1.0, 1.0, 5.0))
    out = resample_labels_nearest(lm, (0.5, 0.5))
    assert out.shape == (60, 60, 2)
    assert set(np.unique(out.data)) <= {0, 2}


# --------------------------------------------------------------- crop-or-pad

def test_crop_or_pad_identity_is_bit_exact(rng):
    v = make_volume(rng.random((256, 256, 2), dtype=np.float32))
    out = crop_or_pad_center(v, 256, 256)
    np.testing.assert_array_equal(out.data, v.data)


def test_pad_230_to_256_gives_13px_zero_border(rng):
    v = make_volume(rng.random((230, 230, 1), dtype=np.float32) + 1.0)
    out = crop_or_pad_center(v, 256, 256)
    assert out.shape == (256, 256, 1)
    # (256-230)//2 = 13 either side
    assert np.all(out.data[:13] == 0) and np.all(out.data[-13:] == 0)
    assert np.all(out.data[:, :13] == 0) and np.all(out.data[:, -13:] == 0)
    np.testing.assert_array_equal(out.data[13:243, 13:243, :], v.data)


def test_crop_300_to_256_takes_window_at_22(rng):
    v = make_volume(rng.random((300, 300, 1), dtype=np.float32))
    out = crop_or_pad_center(v, 256, 256)
    np.testing.assert_array_equal(out.data, v.data[22:278, 22:278, :])


def test_crop_or_pad_odd_difference_extra_goes_high():
    data = np.arange(7, dtype=np.float32).reshape(7, 1, 1)
    out = crop_or_pad_array(data, 4, 1)
    # 7->4: diff 3, start 3//2=1 -> rows 1..4
    np.testing.assert_array_equal(out[:, 0, 0], [1, 2, 3, 4])
    padded = crop_or_pad_array(np.ones((3, 1, 1), np.float32), 6, 1)
    np.testing.assert_array_equal(padded[:, 0, 0], [0, 1, 1, 1, 0, 0])


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=40),
    m=st.integers(min_value=1, max_value=40),
    tx=st.integers(min_value=1, max_value=40),
    ty=st.integers(min_value=1, max_value=40),
)
def test_crop_or_pad_is_idempotent(n, m, tx, ty):
    rng = np.random.default_rng(n * 1000 + m * 40 + tx + ty)
    data = rng.random((n, m, 1)).astype(np.float32)
    once = crop_or_pad_array(data, tx, ty)
    twice = crop_or_pad_array(once, tx, ty)
    assert once.shape == (tx, ty, 1)
    np.testing.assert_array_equal(once, twice)


def test_crop_or_pad_labelmap_preserves_type():
    lm = LabelMap(np.ones((10, 10, 1), np.uint8), (1, 1, 1))
    out = crop_or_pad_center(lm, 16, 16)
    assert isinstance(out, LabelMap)
    assert out.data.dtype == np.uint8
