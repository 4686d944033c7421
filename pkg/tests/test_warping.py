import numpy as np
import pytest

from scenegeom.geometry import Camera, Intrinsics, Pose, rotation_about_axis
from scenegeom.pointcloud import lift, render_depth
from scenegeom.rasters import ColorImage, DepthMap, Mask, mask_of
from scenegeom.warping import (
    MaskSet,
    MaskSetEntry,
    ViewpointSampler,
    export_training_sample,
    generate_mask_set,
    load_mask_set,
    load_training_sample,
    sample_viewpoint,
    save_mask_set,
    save_training_sample,
    warp_depth,
)

INTR = Intrinsics(fx=24.0, fy=24.0, cx=16.0, cy=10.0, width=32, height=20)


def identity_cam():
    return Camera(INTR, Pose.identity())


def plane_depth(depth=5.0, h=20, w=32):
    return DepthMap(np.full((h, w), depth))


class TestWarpDepth:
    def test_identity_viewpoint(self):
        rng = np.random.default_rng(0)
        depth = DepthMap(rng.uniform(1.0, 6.0, (20, 32)))
        cam = identity_cam()
        warped, mask = warp_depth(depth, cam, cam)
        assert np.array_equal(mask.values, mask_of(depth).values)
        assert np.max(np.abs(warped.values - depth.values)) < 1e-6

    def test_identity_with_holes(self):
        rng = np.random.default_rng(1)
        vals = rng.uniform(1.0, 6.0, (20, 32))
        vals[rng.random((20, 32)) < 0.3] = 0.0
        depth = DepthMap(vals)
        cam = identity_cam()
        warped, mask = warp_depth(depth, cam, cam)
        assert np.array_equal(mask.values, vals > 0)
        assert np.max(np.abs(warped.values - vals)) < 1e-6

    def test_forward_translation_toward_plane(self):
        # Moving 1 m toward a fronto-parallel plane at 5 m: every reprojected
        # value reads 4 m. Magnification (5/4) spreads the source grid, so
        # the central region is mostly but not fully covered -- exactly the
        # hole pattern forward splatting is expected to leave.
        depth = plane_depth(5.0)
        src = identity_cam()
        dst = Camera(INTR, Pose(np.eye(3), np.array([0.0, 0.0, 1.0])))
        warped, mask = warp_depth(depth, src, dst)
        # Both axes magnify by 5/4, so roughly (4/5)^2 of pixels are hit.
        center = mask.values[5:15, 8:24]
        assert center.mean() > 0.5
        np.testing.assert_allclose(warped.values[mask.values], 4.0, atol=1e-9)

    def test_equals_lift_then_render(self):
        rng = np.random.default_rng(2)
        vals = rng.uniform(1.0, 6.0, (20, 32))
        vals[rng.random((20, 32)) < 0.2] = 0.0
        depth = DepthMap(vals)
        src = identity_cam()
        dst = Camera(
            INTR,
            Pose(rotation_about_axis([0, 1, 0], np.deg2rad(4.0)), np.array([0.1, 0.0, -0.05])),
        )
        warped, mask = warp_depth(depth, src, dst)
        blank = ColorImage(np.zeros((20, 32, 3), np.uint8))
        expected, expected_mask = render_depth(lift(blank, depth, src, mask_of(depth)), dst)
        assert np.array_equal(warped.values, expected.values)
        assert np.array_equal(mask.values, expected_mask.values)

    def test_occlusion_respected(self):
        # A near plane occludes a far plane when both project to the pixel.
        h, w = 20, 32
        far = plane_depth(6.0, h, w)
        src = identity_cam()
        blank = ColorImage(np.zeros((h, w, 3), np.uint8))
        cloud_far = lift(blank, far, src, mask_of(far))
        near = plane_depth(2.0, h, w)
        cloud_near = lift(blank, near, src, mask_of(near))
        from scenegeom.pointcloud import merge

        rendered, _ = render_depth(merge(cloud_far, cloud_near), src)
        assert (rendered.values == 2.0).all()

    def test_resolution_mismatch_rejected(self):
        with pytest.raises(ValueError, match="does not match"):
            warp_depth(DepthMap(np.ones((4, 4))), identity_cam(), identity_cam())


def relative_yaw_pitch(base: Camera, sampled: Camera):
    rel = base.pose.rotation.T @ sampled.pose.rotation
    yaw = np.arctan2(rel[0, 2], rel[2, 2])
    pitch = np.arcsin(np.clip(-rel[1, 2], -1.0, 1.0))
    return np.rad2deg(yaw), np.rad2deg(pitch)


class TestSampleViewpoint:
    def test_zero_ranges_return_base(self):
        base = identity_cam()
        sampler = ViewpointSampler(0.0, 0.0, 0.0, rng_seed=3)
        out = sample_viewpoint(base, sampler)
        np.testing.assert_array_equal(out.pose.rotation, base.pose.rotation)
        np.testing.assert_array_equal(out.pose.translation, base.pose.translation)

    def test_same_seed_is_deterministic(self):
        base = identity_cam()
        sampler = ViewpointSampler(rng_seed=42)
        a = sample_viewpoint(base, sampler)
        b = sample_viewpoint(base, sampler)
        np.testing.assert_array_equal(a.pose.rotation, b.pose.rotation)
        np.testing.assert_array_equal(a.pose.translation, b.pose.translation)

    def test_azimuth_bounds_and_spread(self):
        base = identity_cam()
        rng = np.random.default_rng(4)
        sampler = ViewpointSampler(azimuth_range=15.0, elevation_range=5.0, translation_range=0.3)
        yaws = []
        for _ in range(1000):
            cam = sample_viewpoint(base, sampler, rng)
            yaw, pitch = relative_yaw_pitch(base, cam)
            assert abs(yaw) <= 15.0 + 1e-9
            assert abs(pitch) <= 5.0 + 1e-9
            assert np.max(np.abs(cam.pose.translation - base.pose.translation)) <= 0.3 * np.sqrt(3)
            yaws.append(yaw)
        assert max(yaws) - min(yaws) >= 0.9 * 30.0

    def test_intrinsics_unchanged(self):
        base = identity_cam()
        out = sample_viewpoint(base, ViewpointSampler(rng_seed=5))
        assert out.intrinsics == base.intrinsics

    def test_rejects_negative_ranges(self):
        with pytest.raises(ValueError, match=">= 0"):
            ViewpointSampler(azimuth_range=-1.0)


class TestGenerateMaskSet:
    def test_count(self):
        rng = np.random.default_rng(6)
        items = [(DepthMap(rng.uniform(2, 5, (20, 32))), identity_cam()) for _ in range(3)]
        ms = generate_mask_set(items, views_per_image=2, sampler=ViewpointSampler(rng_seed=1))
        assert len(ms) == 6

    def test_identity_sampler_reproduces_validity_mask(self):
        rng = np.random.default_rng(7)
        vals = rng.uniform(2, 5, (20, 32))
        vals[rng.random((20, 32)) < 0.25] = 0.0
        items = [(DepthMap(vals), identity_cam())]
        ms = generate_mask_set(items, 1, ViewpointSampler(0.0, 0.0, 0.0, rng_seed=0))
        assert np.array_equal(ms.entries[0].mask.values, vals > 0)

    def test_rotation_right_reveals_band(self):
        # Yawing the destination camera right exposes a contiguous band of
        # unseen pixels on the right edge; the boundary column equals the
        # projection of the source frustum's last column into the new view.
        depth = plane_depth(5.0)
        src = identity_cam()
        yaw = np.deg2rad(10.0)
        dst = Camera(INTR, Pose(rotation_about_axis([0, 1, 0], yaw), np.zeros(3)))
        _, mask = warp_depth(depth, src, dst)
        # Analytic boundary: direction of source pixel u = W-1 in dst frame.
        gx = (INTR.width - 1 - INTR.cx) / INTR.fx
        d = np.array([gx, 0.0, 1.0])
        d_dst = dst.pose.rotation.T @ d
        u_boundary = INTR.fx * d_dst[0] / d_dst[2] + INTR.cx
        mid_row = mask.values[INTR.height // 2]
        assert not mid_row[int(np.ceil(u_boundary + 1)) :].any()
        assert mid_row[int(np.floor(u_boundary - 1))]

    def test_repeated_generation_is_deterministic(self):
        rng = np.random.default_rng(8)
        items = [(DepthMap(rng.uniform(2, 5, (20, 32))), identity_cam()) for _ in range(2)]
        sampler = ViewpointSampler(rng_seed=9)
        a = generate_mask_set(items, 2, sampler)
        b = generate_mask_set(items, 2, sampler)
        for ea, eb in zip(a.entries, b.entries):
            assert np.array_equal(ea.mask.values, eb.mask.values)

    def test_mask_set_roundtrip(self, tmp_path):
        rng = np.random.default_rng(10)
        items = [(DepthMap(rng.uniform(2, 5, (20, 32))), identity_cam()) for _ in range(2)]
        ms = generate_mask_set(items, 2, ViewpointSampler(rng_seed=11))
        save_mask_set(ms, tmp_path)
        back = load_mask_set(tmp_path)
        assert len(back) == len(ms)
        for a, b in zip(ms.entries, back.entries):
            assert np.array_equal(a.mask.values, b.mask.values)
            assert a.source_id == b.source_id
            np.testing.assert_allclose(
                a.camera.pose.rotation, b.camera.pose.rotation, atol=1e-15
            )


def singleton_mask_set(mask_vals):
    return MaskSet((MaskSetEntry(Mask(mask_vals), "src", identity_cam()),))


class TestExportTrainingSample:
    def _inputs(self, rng):
        image = ColorImage(rng.integers(0, 256, (20, 32, 3), dtype=np.uint8))
        teacher = DepthMap(rng.uniform(1.0, 5.0, (20, 32)))
        mask_vals = rng.random((20, 32)) > 0.4
        return image, teacher, singleton_mask_set(mask_vals), mask_vals

    def test_p_one_always_empty(self):
        rng = np.random.default_rng(12)
        image, teacher, ms, _ = self._inputs(rng)
        for _ in range(20):
            _, mask, sparse, target = export_training_sample(image, teacher, ms, 1.0, rng)
            assert not mask.values.any()
            assert (sparse.values == 0).all()
            assert np.array_equal(target.values, teacher.values)

    def test_p_zero_uses_mask(self):
        rng = np.random.default_rng(13)
        image, teacher, ms, mask_vals = self._inputs(rng)
        _, mask, sparse, target = export_training_sample(image, teacher, ms, 0.0, rng)
        assert np.array_equal(mask.values, mask_vals)
        assert np.array_equal(sparse.values, np.where(mask_vals, teacher.values, 0.0))

    def test_zero_mask_fraction_binomial(self):
        rng = np.random.default_rng(14)
        image, teacher, ms, _ = self._inputs(rng)
        zeros = 0
        n = 10_000
        for _ in range(n):
            _, mask, _, _ = export_training_sample(image, teacher, ms, 0.5, rng)
            zeros += not mask.values.any()
        assert abs(zeros / n - 0.5) <= 0.02

    def test_sparse_never_fabricates_depth(self):
        rng = np.random.default_rng(15)
        image, teacher, ms, _ = self._inputs(rng)
        for _ in range(10):
            _, _, sparse, _ = export_training_sample(image, teacher, ms, 0.3, rng)
            valid = sparse.values > 0
            assert np.array_equal(sparse.values[valid], teacher.values[valid])

    def test_empty_set_with_low_p_rejected(self):
        rng = np.random.default_rng(16)
        image = ColorImage(np.zeros((4, 4, 3), np.uint8))
        teacher = DepthMap(np.ones((4, 4)))
        with pytest.raises(ValueError, match="empty"):
            export_training_sample(image, teacher, MaskSet(()), 0.0, rng)

    def test_mask_resized_to_image_resolution(self):
        rng = np.random.default_rng(17)
        small = np.zeros((10, 16), bool)
        small[:5] = True
        ms = singleton_mask_set(small)
        image = ColorImage(rng.integers(0, 256, (20, 32, 3), dtype=np.uint8))
        teacher = DepthMap(rng.uniform(1, 4, (20, 32)))
        _, mask, _, _ = export_training_sample(image, teacher, ms, 0.0, rng)
        assert mask.values.shape == (20, 32)
        assert mask.values[:10].all() and not mask.values[10:].any()

    def test_sample_directory_roundtrip(self, tmp_path):
        rng = np.random.default_rng(18)
        image, teacher, ms, _ = self._inputs(rng)
        sample = export_training_sample(image, teacher, ms, 0.0, rng)
        save_training_sample(tmp_path / "s0", *sample)
        image2, mask2, sparse2, target2 = load_training_sample(tmp_path / "s0")
        assert np.array_equal(image2.values, sample[0].values)
        assert np.array_equal(mask2.values, sample[1].values)
        assert np.max(np.abs(sparse2.values - sample[2].values)) < 1e-6
        assert np.max(np.abs(target2.values - sample[3].values)) < 1e-6
