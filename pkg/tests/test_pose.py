import numpy as np
import pytest

from ovad.dataset import BoundingBox
from ovad.pose import PoseTargetSize, compute_pose_target_size, normalize_keypoints


def box(x0, y0, w, h):
    return BoundingBox(x_min=x0, y_min=y0, x_max=x0 + w, y_max=y0 + h)


def random_box(rng):
    x0, y0 = rng.uniform(-100, 100, size=2)
    w, h = rng.uniform(5, 120, size=2)
    return box(x0, y0, w, h)


def test_target_size_two_boxes():
    boxes = [box(0, 0, 40, 100), box(0, 0, 60, 200)]  # (h, w) = (100, 40), (200, 60)
    target = compute_pose_target_size(boxes)
    assert (target.height, target.width) == (150.0, 50.0)


def test_target_size_single_box():
    target = compute_pose_target_size([box(3, 4, 48, 120)])
    assert (target.height, target.width) == (120.0, 48.0)


def test_target_size_matches_brute_force_mean():
    rng = np.random.default_rng(41)
    boxes = [random_box(rng) for _ in range(1000)]
    target = compute_pose_target_size(boxes)
    assert abs(target.height - sum(b.height for b in boxes) / 1000) < 1e-9
    assert abs(target.width - sum(b.width for b in boxes) / 1000) < 1e-9


def test_target_size_empty_list_errors():
    with pytest.raises(ValueError):
        compute_pose_target_size([])


def test_top_left_corner_maps_to_origin():
    b = box(12.5, -3.0, 40, 90)
    out = normalize_keypoints(np.array([[12.5, -3.0]]), b, PoseTargetSize(height=150, width=50))
    assert out.tolist() == [0.0, 0.0]


def test_bottom_right_maps_to_full_extent():
    b = box(10, 20, 30, 60)
    out = normalize_keypoints(np.array([[40.0, 80.0]]), b, PoseTargetSize(height=150, width=50))
    np.testing.assert_allclose(out, [50.0, 150.0], rtol=1e-12)


def test_center_maps_to_half_extent_for_any_box():
    rng = np.random.default_rng(43)
    target = PoseTargetSize(height=150.0, width=50.0)
    for _ in range(200):
        b = random_box(rng)
        center = np.array([[(b.x_min + b.x_max) / 2, (b.y_min + b.y_max) / 2]])
        out = normalize_keypoints(center, b, target)
        np.testing.assert_allclose(out, [25.0, 75.0], rtol=1e-9, atol=1e-9)


def test_flattening_order_is_xy_per_landmark():
    b = box(0, 0, 10, 10)
    pts = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = normalize_keypoints(pts, b, PoseTargetSize(height=10, width=10))
    assert out.tolist() == [1.0, 2.0, 3.0, 4.0]


def test_translation_invariance():
    rng = np.random.default_rng(47)
    target = PoseTargetSize(height=120.0, width=45.0)
    for _ in range(200):
        b = random_box(rng)
        pts = rng.uniform(-50, 200, size=(17, 2))
        base = normalize_keypoints(pts, b, target)
        dx, dy = rng.uniform(-500, 500, size=2)
        shifted = box(b.x_min + dx, b.y_min + dy, b.width, b.height)
        moved = normalize_keypoints(pts + np.array([dx, dy]), shifted, target)
        np.testing.assert_allclose(moved, base, atol=1e-9)


def test_scale_invariance_about_top_left():
    rng = np.random.default_rng(53)
    target = PoseTargetSize(height=120.0, width=45.0)
    for _ in range(200):
        b = random_box(rng)
        pts = rng.uniform(0, 100, size=(17, 2))
        base = normalize_keypoints(pts, b, target)
        c = float(rng.uniform(0.1, 10.0))
        origin = np.array([b.x_min, b.y_min])
        scaled_box = box(b.x_min, b.y_min, c * b.width, c * b.height)
        scaled_pts = origin + c * (pts - origin)
        np.testing.assert_allclose(normalize_keypoints(scaled_pts, scaled_box, target),
                                   base, rtol=1e-7, atol=1e-7)


def test_in_box_landmarks_stay_in_target_box_and_outliers_are_not_clamped():
    rng = np.random.default_rng(59)
    target = PoseTargetSize(height=150.0, width=50.0)
    b = random_box(rng)
    inside = np.column_stack([rng.uniform(b.x_min, b.x_max, 50), rng.uniform(b.y_min, b.y_max, 50)])
    out = normalize_keypoints(inside, b, target).reshape(-1, 2)
    assert (out[:, 0] >= 0).all() and (out[:, 0] <= 50.0).all()
    assert (out[:, 1] >= 0).all() and (out[:, 1] <= 150.0).all()
    way_out = normalize_keypoints(np.array([[b.x_max + 3 * b.width, b.y_min]]), b, target)
    assert way_out[0] > 50.0  # unusual limb extension survives normalization


def test_degenerate_bbox_rejected():
    bad = BoundingBox(x_min=5, y_min=5, x_max=5, y_max=10)
    with pytest.raises(ValueError):
        normalize_keypoints(np.zeros((17, 2)), bad, PoseTargetSize(height=1, width=1))


def test_wrong_keypoint_shape_rejected():
    with pytest.raises(ValueError):
        normalize_keypoints(np.zeros((17, 3)), box(0, 0, 1, 1), PoseTargetSize(height=1, width=1))
