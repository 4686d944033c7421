import numpy as np
import pytest

from scenegeom.alignment import (
    AlignConfig,
    SnapConfig,
    align_closed_form,
    align_iterative,
    default_gradient_threshold,
    mae_objective_and_gradient,
    snap_depth,
)
from scenegeom.rasters import DepthMap


def sparse_from(pred_vals, rng, fraction=0.4, transform=lambda x: x):
    sparse = np.zeros_like(pred_vals)
    idx = rng.random(pred_vals.shape) < fraction
    sparse[idx] = transform(pred_vals[idx])
    return sparse


class TestConfigs:
    def test_align_config_validation(self):
        with pytest.raises(ValueError):
            AlignConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            AlignConfig(max_steps=0)
        with pytest.raises(ValueError):
            AlignConfig(patience=0)

    def test_snap_config_validation(self):
        with pytest.raises(ValueError):
            SnapConfig(gradient_threshold=-1.0)
        with pytest.raises(ValueError):
            SnapConfig(max_region_radius=0.0)


class TestClosedForm:
    def test_identity(self):
        rng = np.random.default_rng(0)
        pred = rng.uniform(1.0, 5.0, (8, 8))
        s, t = align_closed_form(DepthMap(pred), DepthMap(pred))
        assert abs(s - 1.0) < 1e-12 and abs(t) < 1e-12

    def test_exact_affine_recovery(self):
        rng = np.random.default_rng(1)
        pred = rng.uniform(1.0, 5.0, (10, 10))
        sparse = sparse_from(pred, rng, transform=lambda x: 2.0 * x + 0.5)
        s, t = align_closed_form(DepthMap(pred), DepthMap(sparse))
        assert abs(s - 2.0) < 1e-9 and abs(t - 0.5) < 1e-9

    def test_beats_grid_search_oracle(self):
        rng = np.random.default_rng(2)
        pred = rng.uniform(1.0, 4.0, (5, 4))
        noise = rng.normal(0, 0.05, pred.shape)
        sparse = np.clip(1.5 * pred + 0.2 + noise, 0.01, None)
        x, y = pred.ravel(), sparse.ravel()

        def sse(s, t):
            return ((s * x + t - y) ** 2).sum()

        s_star, t_star = align_closed_form(DepthMap(pred), DepthMap(sparse))
        best_grid = min(
            sse(s, t)
            for s in np.arange(1.0, 2.001, 1e-3)
            for t in np.arange(-0.3, 0.701, 1e-3)
        )
        assert sse(s_star, t_star) <= best_grid + 1e-12

    def test_rejects_too_few_pixels(self):
        pred = np.zeros((3, 3))
        pred[0, 0] = 1.0
        with pytest.raises(ValueError, match="at least 2"):
            align_closed_form(DepthMap(pred), DepthMap(pred))

    def test_rejects_constant_pred(self):
        pred = np.full((3, 3), 2.0)
        sparse = np.random.default_rng(3).uniform(1, 3, (3, 3))
        with pytest.raises(ValueError, match="degenerate"):
            align_closed_form(DepthMap(pred), DepthMap(sparse))


class TestIterative:
    def test_identity_stays_put(self):
        rng = np.random.default_rng(4)
        pred = rng.uniform(1.0, 5.0, (10, 10))
        s, t = align_iterative(DepthMap(pred), DepthMap(pred))
        obj, _ = mae_objective_and_gradient(s, t, pred.ravel(), pred.ravel())
        assert (s, t) == (1.0, 0.0)
        assert obj == 0.0

    def test_converges_on_exact_affine(self):
        # The 0.01-step optimizer covers the distance to s = 1.5 and anneals
        # within its 100-step budget on this 100-pixel instance; the spread
        # of pred values staggers the residual sign flips, which keeps the
        # shift coordinate from taking a long detour.
        rng = np.random.default_rng(1)
        pred = rng.uniform(0.05, 1.0, (10, 10))
        sparse = 1.5 * pred
        s, t = align_iterative(DepthMap(pred), DepthMap(sparse), AlignConfig(0.01, 100, 10))
        obj, _ = mae_objective_and_gradient(s, t, pred.ravel(), sparse.ravel())
        # The analytic optimum (1.5, 0) has objective exactly 0.
        opt, _ = mae_objective_and_gradient(1.5, 0.0, pred.ravel(), sparse.ravel())
        assert opt == 0.0
        assert obj < 1e-3

    def test_never_worse_than_start(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            pred = rng.uniform(0.5, 4.0, (8, 8))
            sparse = np.clip(rng.uniform(0.8, 1.4) * pred + rng.normal(0, 0.2, pred.shape), 0.01, None)
            s, t = align_iterative(DepthMap(pred), DepthMap(sparse))
            x, y = pred.ravel(), sparse.ravel()
            start, _ = mae_objective_and_gradient(1.0, 0.0, x, y)
            final, _ = mae_objective_and_gradient(s, t, x, y)
            assert final <= start

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(0.5, 4.0, 200)
        y = rng.uniform(0.5, 4.0, 200)
        h = 1e-6
        checked = 0
        for _ in range(20):
            s = rng.uniform(0.5, 2.0)
            t = rng.uniform(-0.5, 0.5)
            # Stay away from kinks: every residual clearly nonzero.
            if np.min(np.abs(s * x + t - y)) < 1e-3:
                continue
            _, grad = mae_objective_and_gradient(s, t, x, y)
            fd_s = (
                mae_objective_and_gradient(s + h, t, x, y)[0]
                - mae_objective_and_gradient(s - h, t, x, y)[0]
            ) / (2 * h)
            fd_t = (
                mae_objective_and_gradient(s, t + h, x, y)[0]
                - mae_objective_and_gradient(s, t - h, x, y)[0]
            ) / (2 * h)
            assert abs(grad[0] - fd_s) / max(abs(fd_s), 1e-12) < 1e-4
            assert abs(grad[1] - fd_t) / max(abs(fd_t), 1e-12) < 1e-4
            checked += 1
        assert checked >= 10

    def test_applying_fit_reduces_mae(self):
        rng = np.random.default_rng(8)
        pred = rng.uniform(0.5, 4.0, (12, 12))
        sparse = sparse_from(pred, rng, transform=lambda v: 1.3 * v + 0.1)
        s, t = align_iterative(DepthMap(pred), DepthMap(sparse))
        joint = (pred > 0) & (sparse > 0)
        before = np.abs(pred[joint] - sparse[joint]).mean()
        after = np.abs(s * pred[joint] + t - sparse[joint]).mean()
        assert after <= before


def two_plateau_map(width=12, height=6, ramp_start=4):
    """1 m plateau, 3-pixel linear ramp (1.5, 2.0, 2.5), 3 m plateau."""
    vals = np.empty((height, width))
    for x in range(width):
        if x < ramp_start:
            vals[:, x] = 1.0
        elif x < ramp_start + 3:
            vals[:, x] = 1.0 + 0.5 * (x - ramp_start + 1)
        else:
            vals[:, x] = 3.0
    return vals


class TestSnap:
    def test_constant_unchanged(self):
        depth = DepthMap(np.full((5, 5), 2.0))
        out = snap_depth(depth, SnapConfig(gradient_threshold=0.5))
        assert np.array_equal(out.values, depth.values)

    def test_two_plateau_fixture(self):
        # Ramp steps of 0.5 m/px exceed the 0.4 threshold; plateau pixels do
        # not. Hand-derived nearest plateaus: pixels 3 and 4 are closer to
        # the 1 m side (below-threshold columns 0..2), pixels 5 and 6 to the
        # 3 m side (columns 7+).
        vals = two_plateau_map()
        out = snap_depth(DepthMap(vals), SnapConfig(gradient_threshold=0.4))
        assert set(np.unique(out.values)) == {1.0, 3.0}
        assert (out.values[:, :5] == 1.0).all()
        assert (out.values[:, 5:] == 3.0).all()

    def test_no_new_values_introduced(self):
        rng = np.random.default_rng(9)
        vals = rng.uniform(1.0, 4.0, (10, 10))
        cfg = SnapConfig(gradient_threshold=0.8)
        from scenegeom.rasters import gradient_magnitude

        below = gradient_magnitude(DepthMap(vals)) <= 0.8
        out = snap_depth(DepthMap(vals), cfg)
        allowed = set(vals[below].tolist())
        assert set(out.values.ravel().tolist()) <= allowed

    def test_value_idempotent_on_fixture(self):
        cfg = SnapConfig(gradient_threshold=0.4)
        once = snap_depth(DepthMap(two_plateau_map()), cfg)
        twice = snap_depth(once, cfg)
        assert np.array_equal(once.values, twice.values)

    def test_radius_limits_snapping(self):
        vals = two_plateau_map(width=20, ramp_start=8)
        unlimited = snap_depth(DepthMap(vals), SnapConfig(gradient_threshold=0.4))
        limited = snap_depth(
            DepthMap(vals), SnapConfig(gradient_threshold=0.4, max_region_radius=1.0)
        )
        assert not np.array_equal(unlimited.values, limited.values)
        # Within one pixel of a plateau the snap happens; beyond it the
        # original ramp value survives.
        assert limited.values[0, 7] == 1.0
        assert limited.values[0, 8] == 1.5
        assert limited.values[0, 10] == 3.0

    def test_all_above_threshold_rejected(self):
        vals = np.outer(np.ones(4), np.arange(1.0, 5.0))
        with pytest.raises(ValueError, match="nothing to snap"):
            snap_depth(DepthMap(vals), SnapConfig(gradient_threshold=1e-6))

    def test_default_threshold_is_relative(self):
        depth = DepthMap(np.full((4, 4), 2.0))
        assert default_gradient_threshold(depth) == pytest.approx(0.1)
