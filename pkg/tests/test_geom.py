import numpy as np
import pytest
from pydantic import ValidationError

from bev.geom import backproject_depth, project_pinhole, project_points, transform_cloud
from models.geometry import FrameTag, PointCloud, Pose
from utils.errors import InvalidPointCloud, InvalidPose, ShapeMismatch


def random_pose(rng) -> Pose:
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return Pose(rotation=q, translation=rng.normal(size=3))


def test_identity_leaves_cloud_unchanged(rng):
    cloud = PointCloud(points=rng.normal(size=(20, 3)), remission=rng.random(20))
    out = transform_cloud(cloud, Pose.identity())
    np.testing.assert_array_equal(out.points, cloud.points)
    np.testing.assert_array_equal(out.remission, cloud.remission)
    assert out.frame == FrameTag.WORLD


def test_translation_moves_origin():
    cloud = PointCloud(points=[[0.0, 0.0, 0.0]], remission=[0.5])
    out = transform_cloud(cloud, Pose(rotation=np.eye(3), translation=[1.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.points, [[1.0, 0.0, 0.0]])


def test_inverse_restores_points(rng):
    pose = random_pose(rng)
    cloud = PointCloud(points=rng.uniform(-50, 50, (100, 3)), remission=rng.random(100))
    back = transform_cloud(transform_cloud(cloud, pose), pose.inverse())
    np.testing.assert_allclose(back.points, cloud.points, atol=1e-9)


def test_compose_applies_right_operand_first(rng):
    a, b = random_pose(rng), random_pose(rng)
    points = rng.normal(size=(10, 3))
    np.testing.assert_allclose(a.compose(b).apply(points), a.apply(b.apply(points)), atol=1e-12)


def test_reflection_is_not_a_pose():
    with pytest.raises(InvalidPose):
        Pose(rotation=np.diag([1.0, 1.0, -1.0]), translation=np.zeros(3))


def test_scaled_rotation_is_not_a_pose():
    with pytest.raises(InvalidPose):
        Pose(rotation=2.0 * np.eye(3), translation=np.zeros(3))


def test_validated_pose_cannot_be_bent(rng):
    pose = random_pose(rng)
    with pytest.raises(ValueError):
        pose.rotation[0, 0] = 2.0
    with pytest.raises(ValidationError):
        pose.rotation = np.diag([1.0, 1.0, -1.0])


@pytest.mark.parametrize("seed", range(100))
def test_transforms_preserve_distances(seed):
    rng = np.random.default_rng(seed)
    pose = random_pose(rng)
    points = rng.uniform(-80, 80, (50, 3))
    moved = transform_cloud(PointCloud(points=points, remission=rng.random(50)), pose).points
    before = np.linalg.norm(points[:, None] - points[None], axis=-1)
    after = np.linalg.norm(moved[:, None] - moved[None], axis=-1)
    np.testing.assert_allclose(after, before, atol=1e-9)
    np.testing.assert_allclose(pose.inverse().apply(moved), points, atol=1e-9)


def test_yaw_turns_forward_toward_positive_lateral():
    pose = Pose.from_yaw(np.pi / 2, [0.0, 0.0, 0.0])
    np.testing.assert_allclose(pose.apply([[0.0, 0.0, 1.0]]), [[1.0, 0.0, 0.0]], atol=1e-12)


def test_remission_out_of_range_is_rejected():
    with pytest.raises(InvalidPointCloud):
        PointCloud(points=[[0.0, 0.0, 1.0]], remission=[1.5])


# ----------------- projection -----------------
def test_principal_ray_hits_principal_point(camera):
    assert project_pinhole((0.0, 0.0, 5.0), camera) == pytest.approx((320.0, 96.0))


def test_behind_camera_is_not_projected(camera):
    assert project_pinhole((0.0, 0.0, -1.0), camera) is None
    assert project_pinhole((0.0, 0.0, 0.0), camera) is None


def test_out_of_frame_is_not_projected(camera):
    x = (camera.width + 10 - camera.cx) * 5.0 / camera.fx
    assert project_pinhole((x, 0.0, 5.0), camera) is None


def test_projection_arithmetic(camera):
    u, v, visible = project_points(np.array([[1.0, 0.5, 10.0]]), camera)
    assert visible[0]
    assert u[0] == pytest.approx(500.0 * 0.1 + 320.0)
    assert v[0] == pytest.approx(500.0 * 0.05 + 96.0)


# ----------------- back-projection -----------------
def test_principal_pixel_backprojects_on_the_axis(camera):
    depth = np.zeros((camera.height, camera.width))
    depth[96, 320] = 4.0
    cloud = backproject_depth(depth, camera)
    assert len(cloud) == 1
    np.testing.assert_allclose(cloud.points[0], [0.0, 0.0, 4.0])
    assert cloud.frame == FrameTag.CAMERA


def test_invalid_depth_emits_no_point(camera):
    depth = np.zeros((camera.height, camera.width))
    depth[0, 0] = np.nan
    depth[1, 1] = -3.0
    depth[2, 2] = np.inf
    assert len(backproject_depth(depth, camera)) == 0


def test_backprojection_inverts_projection(camera):
    depth = np.zeros((camera.height, camera.width))
    depth[10, 600] = 7.5
    point = backproject_depth(depth, camera).points[0]
    u, v = project_pinhole(point, camera)
    assert (u, v) == pytest.approx((600.0, 10.0))


def test_remission_from_rgb_intensity(camera):
    depth = np.zeros((camera.height, camera.width))
    depth[5, 5] = 2.0
    rgb = np.zeros((camera.height, camera.width, 3), dtype=np.uint8)
    rgb[5, 5] = (255, 255, 0)
    cloud = backproject_depth(depth, camera, rgb)
    assert cloud.remission[0] == pytest.approx(2.0 / 3.0)


def test_rgb_shape_must_match_depth(camera):
    depth = np.ones((camera.height, camera.width))
    with pytest.raises(ShapeMismatch):
        backproject_depth(depth, camera, np.zeros((4, 4, 3), dtype=np.uint8))
