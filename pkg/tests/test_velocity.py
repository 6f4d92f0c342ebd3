import math

import numpy as np
import pytest

from ovad.velocity import flow_orientation_bin, resize_flow_crop, velocity_histogram

TWO_PI = 2.0 * math.pi


def l1_unit(theta):
    """Direction vector with |x| + |y| == 1."""
    x, y = math.cos(theta), math.sin(theta)
    norm = abs(x) + abs(y)
    return x / norm, y / norm


def polar_crop(thetas, magnitudes, shape):
    """Build a crop whose vectors have given orientations and L1 magnitudes."""
    crop = np.empty(shape + (2,))
    flat = crop.reshape(-1, 2)
    for i, (t, m) in enumerate(zip(thetas, magnitudes)):
        ux, uy = l1_unit(t)
        flat[i] = (m * ux, m * uy)
    return crop


def brute_force_histogram(crop, bins, height=None):
    """Independent per-vector accumulation using the scalar bin op."""
    sums = [0.0] * bins
    counts = [0] * bins
    for x, y in np.asarray(crop, dtype=np.float64).reshape(-1, 2):
        m = abs(x) + abs(y)
        if m == 0.0:
            continue
        if height is not None:
            m = m / height
        b = flow_orientation_bin(x, y, bins)
        sums[b] += m
        counts[b] += 1
    return np.array([s / c if c else 0.0 for s, c in zip(sums, counts)]), np.array(counts)


# --- resize -----------------------------------------------------------------

def test_resize_preserves_constant_field_exactly():
    crop = np.empty((7, 5, 2))
    crop[..., 0] = 1.5
    crop[..., 1] = -2.0
    out = resize_flow_crop(crop, (224, 224))
    assert out.shape == (224, 224, 2)
    assert np.all(out[..., 0] == 1.5)
    assert np.all(out[..., 1] == -2.0)


def test_resize_same_size_is_identity():
    rng = np.random.default_rng(5)
    crop = rng.normal(size=(31, 17, 2))
    assert np.array_equal(resize_flow_crop(crop, (31, 17)), crop)


def test_resize_2x2_to_3x3_hand_computed():
    # x-components are 0 on the left column, 1 on the right; y all zero.
    crop = np.zeros((2, 2, 2))
    crop[:, 1, 0] = 1.0
    out = resize_flow_crop(crop, (3, 3))
    assert np.array_equal(out[:, :, 0], np.array([[0.0, 0.5, 1.0]] * 3))
    assert np.all(out[:, :, 1] == 0.0)


def test_resize_rejects_empty_and_bad_shapes():
    with pytest.raises(ValueError):
        resize_flow_crop(np.zeros((0, 4, 2)), (8, 8))
    with pytest.raises(ValueError):
        resize_flow_crop(np.zeros((4, 4, 3)), (8, 8))
    with pytest.raises(ValueError):
        resize_flow_crop(np.full((2, 2, 2), np.nan), (4, 4))


def test_resize_does_not_rescale_values():
    # Upsampling a field whose magnitude is 3 must keep magnitude 3.
    crop = np.full((4, 4, 2), 1.5)
    out = resize_flow_crop(crop, (64, 64))
    assert np.all(np.abs(out[..., 0]) + np.abs(out[..., 1]) == 3.0)


# --- orientation binning -----------------------------------------------------

def test_bin_examples():
    assert flow_orientation_bin(1.0, 0.0, 8) == 0
    assert flow_orientation_bin(0.0, 1.0, 8) == 2  # theta = pi/2
    # theta just above pi wraps into [pi, 5pi/4)
    assert flow_orientation_bin(-1.0, -1e-12, 8) == 4


def test_bin_matches_direct_atan2_oracle():
    rng = np.random.default_rng(7)
    for _ in range(500):
        x, y = rng.normal(size=2)
        if x == 0 and y == 0:
            continue
        bins = int(rng.integers(1, 13))
        theta = math.atan2(y, x) % TWO_PI
        expected = min(int(theta * bins / TWO_PI), bins - 1)
        assert flow_orientation_bin(x, y, bins) == expected


def test_bin_boundary_wraps_to_zero():
    # atan2 -> -1e-300; adding 2*pi rounds to exactly 2*pi, which is bin 0
    assert flow_orientation_bin(1.0, -1e-300, 8) == 0


def test_bin_rejects_zero_vector():
    with pytest.raises(ValueError):
        flow_orientation_bin(0.0, 0.0, 8)


# --- histogram ---------------------------------------------------------------

def test_uniform_field_single_bin():
    crop = np.zeros((6, 6, 2))
    crop[..., 0] = 1.0
    assert velocity_histogram(crop, 8).tolist() == [1, 0, 0, 0, 0, 0, 0, 0]


def test_all_zero_field_gives_zero_vector():
    for bins in (1, 4, 8):
        assert velocity_histogram(np.zeros((5, 4, 2)), bins).tolist() == [0.0] * bins


def test_two_direction_field():
    # Half the pixels (2, 0), half (0, 3): bin 0 averages 2, bin 1 averages 3.
    crop = np.zeros((2, 4, 2))
    crop[0, :, 0] = 2.0
    crop[1, :, 1] = 3.0
    assert velocity_histogram(crop, 4).tolist() == [2.0, 3.0, 0.0, 0.0]


def test_single_bin_degenerate_mode():
    crop = np.zeros((3, 3, 2))
    crop[..., 0] = 1.0
    assert velocity_histogram(crop, 1).tolist() == [1.0]


def test_histogram_matches_scalar_op_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(50):
        crop = rng.normal(size=(int(rng.integers(1, 9)), int(rng.integers(1, 9)), 2))
        bins = int(rng.integers(1, 10))
        expected, _ = brute_force_histogram(crop, bins)
        np.testing.assert_allclose(velocity_histogram(crop, bins), expected, rtol=1e-12, atol=0)


def test_zero_vectors_are_skipped_not_binned():
    crop = np.zeros((2, 3, 2))
    crop[0, 0] = (4.0, 0.0)
    # five zero vectors must not drag bin 0's average down
    assert velocity_histogram(crop, 8)[0] == 4.0


def test_height_normalization_divides_magnitudes():
    rng = np.random.default_rng(13)
    crop = rng.normal(size=(6, 7, 2))
    h = 2.0  # power of two: division is exact
    assert np.array_equal(velocity_histogram(crop, 8, height=h),
                          velocity_histogram(crop, 8) / h)
    with pytest.raises(ValueError):
        velocity_histogram(crop, 8, height=0.0)


def test_scale_equivariance():
    rng = np.random.default_rng(17)
    crop = rng.normal(size=(8, 8, 2))
    base = velocity_histogram(crop, 8)
    assert np.array_equal(velocity_histogram(2.0 * crop, 8), 2.0 * base)  # exact for c = 2
    c = 3.7
    np.testing.assert_allclose(velocity_histogram(c * crop, 8), c * base, rtol=1e-12)


def test_rotation_covariance_quarter_turn_exact():
    # For B = 4, one bin step is a 90-degree turn: (x, y) -> (-y, x), which
    # permutes bins cyclically and preserves |x| + |y| exactly.
    rng = np.random.default_rng(19)
    crop = rng.normal(size=(9, 5, 2))
    rotated = np.stack([-crop[..., 1], crop[..., 0]], axis=-1)
    assert np.array_equal(velocity_histogram(rotated, 4), np.roll(velocity_histogram(crop, 4), 1))


def test_rotation_covariance_one_bin_step():
    # Generic B: rotate each vector's orientation by 2*pi/B keeping its L1
    # magnitude; inputs sit strictly inside bins so no boundary flips occur.
    rng = np.random.default_rng(23)
    bins = 8
    n = 40
    thetas = (rng.integers(0, bins, size=n) + rng.uniform(0.05, 0.95, size=n)) * TWO_PI / bins
    mags = rng.uniform(0.5, 3.0, size=n)
    h0 = velocity_histogram(polar_crop(thetas, mags, (5, 8)), bins)
    h1 = velocity_histogram(polar_crop(thetas + TWO_PI / bins, mags, (5, 8)), bins)
    np.testing.assert_allclose(h1, np.roll(h0, 1), rtol=1e-9, atol=1e-12)


def test_conservation_of_total_magnitude():
    rng = np.random.default_rng(29)
    crop = rng.normal(size=(7, 6, 2))
    bins = 8
    hist = velocity_histogram(crop, bins)
    _, counts = brute_force_histogram(crop, bins)
    total_l1 = float(np.sum(np.abs(crop[..., 0]) + np.abs(crop[..., 1])))
    np.testing.assert_allclose(float(hist @ counts), total_l1, rtol=1e-9)


def test_single_bin_equals_mean_l1_magnitude():
    rng = np.random.default_rng(31)
    crop = rng.normal(size=(6, 9, 2))
    m = np.abs(crop[..., 0]) + np.abs(crop[..., 1])
    np.testing.assert_allclose(velocity_histogram(crop, 1)[0], m[m > 0].mean(), rtol=1e-12)
