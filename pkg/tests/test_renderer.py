import numpy as np
import pytest

from conftest import random_cloud, random_intrinsics, random_pose
from pointstyle.errors import ValidationError
from pointstyle.point_cloud import FeaturePointCloud
from pointstyle.renderer import (
    SplatConfig,
    composite_over,
    project_point,
    render_view,
)
from pointstyle.scene_io import CameraIntrinsics, CameraPose


def _camera(width=16, height=16, f=8.0):
    return (
        CameraIntrinsics(fx=f, fy=f, cx=width / 2, cy=height / 2, width=width, height=height),
        CameraPose(rotation=np.eye(3), translation=np.zeros(3)),
    )


def _cloud_at(positions, features=None, channels=1):
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n = len(positions)
    if features is None:
        features = np.arange(1, n + 1, dtype=np.float32)[:, None] * np.ones(channels, np.float32)
    return FeaturePointCloud(
        positions=positions,
        features=np.asarray(features, dtype=np.float32).reshape(n, -1),
        source_view=np.zeros(n, dtype=np.uint32),
    )


def brute_force_render(cloud, intrinsics, pose, radius, background=0.0, z_near=1e-4):
    """O(N * H * W) reference splatter, nearest-z blend, lowest-index ties."""
    h, w = intrinsics.height, intrinsics.width
    c = cloud.channels
    data = np.full((h, w, c), background, dtype=cloud.features.dtype)
    mask = np.zeros((h, w), dtype=bool)
    depth = np.full((h, w), np.inf)

    p_cam = cloud.positions @ pose.rotation.T + pose.translation
    z = p_cam[:, 2]
    front = z > z_near
    u = intrinsics.fx * p_cam[:, 0] / z + intrinsics.cx
    v = intrinsics.fy * p_cam[:, 1] / z + intrinsics.cy

    for j in range(h):
        for i in range(w):
            du = i + 0.5 - u
            dv = j + 0.5 - v
            hit = front & (du * du + dv * dv <= radius * radius)
            if not np.any(hit):
                continue
            idx = np.flatnonzero(hit)
            best = idx[np.argmin(z[idx])]
            mask[j, i] = True
            depth[j, i] = z[best]
            data[j, i] = cloud.features[best]
    return data, mask, depth


class TestProjectPoint:
    def test_on_axis_point(self):
        intr = CameraIntrinsics(fx=1, fy=1, cx=0.5, cy=0.5, width=1, height=1)
        pose = CameraPose(rotation=np.eye(3), translation=np.zeros(3))
        assert project_point(np.array([0.0, 0.0, 1.0]), intr, pose) == (0.5, 0.5, 1.0)

    def test_behind_camera(self):
        intr = CameraIntrinsics(fx=1, fy=1, cx=0.5, cy=0.5, width=1, height=1)
        pose = CameraPose(rotation=np.eye(3), translation=np.zeros(3))
        assert project_point(np.array([0.0, 0.0, -1.0]), intr, pose) is None

    def test_round_trip_against_back_projection(self, rng):
        """Shared oracle with point_cloud: project(back_project(px)) == px."""
        from pointstyle.point_cloud import back_project
        from pointstyle.scene_io import DepthMap, FeatureMap

        total_checked = 0
        while total_checked < 1000:
            intr = random_intrinsics(rng)
            pose = random_pose(rng)
            h, w = intr.height, intr.width
            depth = np.zeros((h, w), dtype=np.float32)
            n = min(100, h * w)
            us = rng.integers(0, w, size=n)
            vs = rng.integers(0, h, size=n)
            depth[vs, us] = rng.uniform(0.3, 6.0, size=n).astype(np.float32)
            cloud = back_project(
                FeatureMap(np.zeros((h, w, 1), np.float32)), DepthMap(depth), intr, pose
            )
            v_idx, u_idx = np.nonzero(depth > 0)
            for k in range(len(cloud)):
                result = project_point(cloud.positions[k], intr, pose)
                assert result is not None
                assert abs(result[0] - (u_idx[k] + 0.5)) < 1e-4
                assert abs(result[1] - (v_idx[k] + 0.5)) < 1e-4
            total_checked += len(cloud)


class TestRenderView:
    def test_single_splat_disc(self):
        intr, pose = _camera()
        # point projects exactly onto the center of pixel (8, 8)
        x = (8.5 - intr.cx) / intr.fx
        y = (8.5 - intr.cy) / intr.fy
        cloud = _cloud_at([[x, y, 1.0]], features=[[0.625]])
        view = render_view(cloud, intr, pose, SplatConfig(splat_radius_px=2))
        jj, ii = np.nonzero(view.mask)
        expected = {
            (8 + dj, 8 + di)
            for di in range(-2, 3)
            for dj in range(-2, 3)
            if di * di + dj * dj <= 4
        }
        assert set(zip(jj, ii)) == expected
        assert np.all(view.data[view.mask] == np.float32(0.625))
        assert np.all(view.depth[view.mask] == 1.0)
        assert np.all(np.isinf(view.depth[~view.mask]))

    def test_z_test_front_wins(self):
        intr, pose = _camera()
        x1 = (8.5 - intr.cx) / intr.fx * 1.0
        x2 = (8.5 - intr.cx) / intr.fx * 2.0
        cloud = _cloud_at([[x1, x1, 1.0], [x2, x2, 2.0]], features=[[10.0], [20.0]])
        view = render_view(cloud, intr, pose, SplatConfig(splat_radius_px=0.5))
        assert view.data[8, 8, 0] == 10.0
        assert view.depth[8, 8] == 1.0

    def test_order_invariance_nearest(self, rng):
        intr, pose = _camera(32, 32, 16.0)
        cloud = random_cloud(rng, 300, channels=2)
        # push points in front of the camera with distinct depths
        positions = cloud.positions.copy()
        positions[:, 2] = np.linspace(1.0, 3.0, 300)
        cloud = FeaturePointCloud(positions, cloud.features, cloud.source_view)

        perm = rng.permutation(300)
        shuffled = FeaturePointCloud(
            cloud.positions[perm], cloud.features[perm], cloud.source_view[perm]
        )
        a = render_view(cloud, intr, pose, SplatConfig(splat_radius_px=2))
        b = render_view(shuffled, intr, pose, SplatConfig(splat_radius_px=2))
        np.testing.assert_array_equal(a.mask, b.mask)
        np.testing.assert_array_equal(a.data, b.data)
        np.testing.assert_array_equal(a.depth, b.depth)

    def test_order_invariance_weighted(self, rng):
        intr, pose = _camera(24, 24, 12.0)
        positions = rng.uniform(-0.8, 0.8, size=(200, 3))
        positions[:, 2] = rng.uniform(1.0, 3.0, size=200)
        cloud = _cloud_at(positions, features=rng.uniform(0, 1, (200, 3)))
        perm = rng.permutation(200)
        shuffled = FeaturePointCloud(
            cloud.positions[perm], cloud.features[perm], cloud.source_view[perm]
        )
        cfg = SplatConfig(splat_radius_px=2, blend="weighted", zbuffer_size=128)
        a = render_view(cloud, intr, pose, cfg)
        b = render_view(shuffled, intr, pose, cfg)
        np.testing.assert_array_equal(a.mask, b.mask)
        np.testing.assert_allclose(a.data, b.data, atol=1e-6)

    def test_weighted_blend_two_candidates(self):
        intr, pose = _camera()
        x1 = (8.5 - intr.cx) / intr.fx
        cloud = _cloud_at(
            [[x1, x1, 1.0], [2 * x1, 2 * x1, 2.0]], features=[[1.0], [2.0]]
        )
        cfg = SplatConfig(splat_radius_px=0.5, blend="weighted")
        view = render_view(cloud, intr, pose, cfg)
        expected = (1.0 * 1.0 + 0.5 * 2.0) / 1.5
        np.testing.assert_allclose(view.data[8, 8, 0], expected, rtol=1e-6)

    def test_zbuffer_cap_limits_weighted_candidates(self):
        intr, pose = _camera()
        x1 = (8.5 - intr.cx) / intr.fx
        positions = [[x1 * z, x1 * z, z] for z in (1.0, 2.0, 3.0)]
        cloud = _cloud_at(positions, features=[[1.0], [2.0], [4.0]])
        cfg = SplatConfig(splat_radius_px=0.5, blend="weighted", zbuffer_size=2)
        view = render_view(cloud, intr, pose, cfg)
        expected = (1.0 * 1.0 + 0.5 * 2.0) / 1.5  # third candidate dropped
        np.testing.assert_allclose(view.data[8, 8, 0], expected, rtol=1e-6)

    def test_matches_brute_force_oracle_random(self, rng):
        intr, pose = _camera(20, 20, 10.0)
        positions = rng.uniform(-1.2, 1.2, size=(150, 3))
        positions[:, 2] = rng.uniform(0.8, 4.0, size=150)
        cloud = _cloud_at(positions, features=rng.uniform(0, 1, (150, 2)))
        view = render_view(cloud, intr, pose, SplatConfig(splat_radius_px=2))
        data, mask, depth = brute_force_render(cloud, intr, pose, radius=2)
        np.testing.assert_array_equal(view.mask, mask)
        np.testing.assert_array_equal(view.data, data)
        np.testing.assert_array_equal(view.depth, depth)

    def test_empty_cloud_rejected(self):
        intr, pose = _camera()
        from pointstyle.point_cloud import empty_cloud

        with pytest.raises(ValidationError):
            render_view(empty_cloud(3), intr, pose)

    def test_all_behind_camera_yields_empty_mask(self):
        intr, pose = _camera()
        cloud = _cloud_at([[0.0, 0.0, -2.0]])
        view = render_view(cloud, intr, pose)
        assert not np.any(view.mask)
        assert np.all(np.isinf(view.depth))

    def test_background_fill(self):
        intr, pose = _camera()
        cloud = _cloud_at([[0.0, 0.0, -2.0]], features=[[5.0]])
        view = render_view(cloud, intr, pose, SplatConfig(background=0.75))
        assert np.all(view.data == np.float32(0.75))


class TestCompositeOver:
    def test_full_mask_keeps_view(self):
        intr, pose = _camera(4, 4, 2.0)
        cloud = _cloud_at([[0.0, 0.0, 1.0]], features=[[1.0]])
        view = render_view(cloud, intr, pose, SplatConfig(splat_radius_px=10))
        assert np.all(view.mask)
        background = np.zeros((4, 4, 1))
        np.testing.assert_array_equal(composite_over(view, background), view.data)

    def test_empty_mask_gives_background(self):
        intr, pose = _camera(4, 4, 2.0)
        cloud = _cloud_at([[0.0, 0.0, -1.0]], features=[[1.0]])
        view = render_view(cloud, intr, pose)
        background = np.full((4, 4, 1), 9.0)
        np.testing.assert_array_equal(composite_over(view, background), background)

    def test_pixelwise_select_matches_loop(self, rng):
        intr, pose = _camera(8, 8, 4.0)
        positions = rng.uniform(-1, 1, size=(30, 3))
        positions[:, 2] = rng.uniform(1, 2, size=30)
        cloud = _cloud_at(positions, features=rng.uniform(0, 1, (30, 3)))
        view = render_view(cloud, intr, pose, SplatConfig(splat_radius_px=1))
        background = rng.uniform(0, 1, size=(8, 8, 3)).astype(np.float32)
        out = composite_over(view, background)
        for j in range(8):
            for i in range(8):
                expected = view.data[j, i] if view.mask[j, i] else background[j, i]
                np.testing.assert_array_equal(out[j, i], expected)

    def test_dim_mismatch(self):
        intr, pose = _camera(4, 4, 2.0)
        cloud = _cloud_at([[0.0, 0.0, 1.0]])
        view = render_view(cloud, intr, pose)
        with pytest.raises(ValidationError):
            composite_over(view, np.zeros((5, 4, 1)))
