import numpy as np
import pytest

import reflectguard.heatmap as heatmap_mod
from reflectguard import (
    BoundingBox,
    Detection,
    ImageDims,
    ValidationError,
    build_heatmap,
    region_mean,
    render_heatmap,
)
from reflectguard.heatmap import Workspace
from reflectguard.synth import brute_force_grid, brute_region_mean

from .conftest import random_detections


def det(x, y, w, h, conf, image_id=1, class_id=1):
    return Detection(image_id, class_id, BoundingBox(x, y, w, h), conf)


class TestBuild:
    def test_single_detection(self):
        # box covering cells (0,0) and (1,0)
        hm = build_heatmap([det(0, 0, 2, 1, 0.8)], ImageDims(4, 4))
        expected = np.zeros((4, 4))
        expected[0, 0] = expected[0, 1] = 0.8
        assert np.array_equal(hm.grid, expected)
        assert hm.total_mass() == pytest.approx(1.6, rel=1e-12)

    def test_additive_confidences(self):
        dets = [det(1, 1, 2, 2, 0.2), det(1, 1, 2, 2, 0.3)]
        hm = build_heatmap(dets, ImageDims(4, 4))
        covered = hm.grid[1:3, 1:3]
        assert np.all(covered == 0.5)
        assert np.all(hm.grid[0, :] == 0.0)

    def test_matches_per_pixel_accumulation(self, rng):
        dims = ImageDims(32, 32)
        dets = random_detections(rng, 50, dims)
        hm = build_heatmap(dets, dims)
        assert np.allclose(hm.grid, brute_force_grid(dets, dims), rtol=1e-9, atol=1e-12)

    def test_rejects_class_mismatch(self):
        dets = [det(0, 0, 2, 2, 0.5, class_id=1), det(0, 0, 2, 2, 0.5, class_id=2)]
        with pytest.raises(ValidationError):
            build_heatmap(dets, ImageDims(4, 4))

    def test_rejects_bad_downscale(self):
        with pytest.raises(ValidationError):
            build_heatmap([], ImageDims(4, 4), downscale=0)

    def test_empty_input(self):
        hm = build_heatmap([], ImageDims(8, 6))
        assert hm.grid.shape == (6, 8)
        assert hm.total_mass() == 0.0
        assert hm.region_mean(BoundingBox(0, 0, 8, 6)) == 0.0

    def test_permutation_invariance_exact(self, rng):
        dims = ImageDims(24, 24)
        dets = random_detections(rng, 40, dims)
        base = build_heatmap(dets, dims).grid
        for _ in range(5):
            perm = list(rng.permutation(len(dets)))
            shuffled = [dets[i] for i in perm]
            assert np.array_equal(build_heatmap(shuffled, dims).grid, base)

    def test_additivity(self, rng):
        dims = ImageDims(24, 24)
        a = random_detections(rng, 30, dims)
        b = random_detections(rng, 20, dims)
        combined = build_heatmap(a + b, dims).grid
        split = build_heatmap(a, dims).grid + build_heatmap(b, dims).grid
        assert np.allclose(combined, split, rtol=1e-12, atol=1e-15)

    def test_mass_conservation(self, rng):
        from reflectguard.geometry import rasterize

        dims = ImageDims(32, 32)
        dets = random_detections(rng, 60, dims)
        hm = build_heatmap(dets, dims)
        expected = sum(d.confidence * rasterize(d.bbox, dims).count for d in dets)
        assert hm.total_mass() == pytest.approx(expected, rel=1e-9)


class TestRegionQueries:
    def test_mean_over_exact_support(self):
        hm = build_heatmap([det(2, 2, 4, 3, 0.8)], ImageDims(16, 16))
        assert hm.region_mean(BoundingBox(2, 2, 4, 3)) == pytest.approx(0.8, rel=1e-12)

    def test_fully_outside_region_is_zero(self):
        hm = build_heatmap([det(2, 2, 4, 3, 0.8)], ImageDims(16, 16))
        assert hm.region_mean(BoundingBox(-10, -10, 3, 3)) == 0.0
        assert hm.region_mean(BoundingBox(0, -50, 3, 3)) == 0.0

    def test_clipped_region_divides_by_in_image_cells(self):
        # uniform 0.5 heat everywhere; a half-outside box still averages 0.5
        hm = build_heatmap([det(0, 0, 8, 8, 0.5)], ImageDims(8, 8))
        assert hm.region_mean(BoundingBox(-3, -3, 6, 6)) == pytest.approx(0.5, rel=1e-12)

    def test_against_brute_force(self, rng):
        dims = ImageDims(32, 32)
        dets = random_detections(rng, 50, dims)
        hm = build_heatmap(dets, dims)
        grid = brute_force_grid(dets, dims)
        for _ in range(200):
            q = BoundingBox(
                float(rng.uniform(-8, 36)),
                float(rng.uniform(-8, 36)),
                float(rng.uniform(0.3, 36)),
                float(rng.uniform(0.3, 36)),
            )
            expected = brute_region_mean(grid, q)
            assert hm.region_mean(q) == pytest.approx(expected, rel=1e-9, abs=1e-12)

    def test_region_sum_equals_grid_slice_sum(self, rng):
        dims = ImageDims(48, 40)
        dets = random_detections(rng, 80, dims)
        hm = build_heatmap(dets, dims)
        for _ in range(100):
            q = BoundingBox(
                float(rng.uniform(-5, 50)),
                float(rng.uniform(-5, 45)),
                float(rng.uniform(0.5, 50)),
                float(rng.uniform(0.5, 45)),
            )
            from reflectguard.geometry import rasterize

            region = rasterize(q, dims)
            if region.is_empty:
                assert hm.region_sum(q) == 0.0
                continue
            ref = float(
                np.sum(
                    hm.grid[
                        region.row_start : region.row_stop,
                        region.col_start : region.col_stop,
                    ]
                )
            )
            assert hm.region_sum(q) == pytest.approx(ref, rel=1e-9, abs=1e-12)

    def test_module_level_region_mean(self):
        hm = build_heatmap([det(0, 0, 4, 4, 0.6)], ImageDims(8, 8))
        assert region_mean(hm, BoundingBox(0, 0, 4, 4)) == hm.region_mean(
            BoundingBox(0, 0, 4, 4)
        )


class TestDownscale:
    def test_grid_dims_rounded_up(self):
        hm = build_heatmap([], ImageDims(10, 7), downscale=3)
        assert hm.grid.shape == (3, 4)
        assert hm.downscale == 3

    def test_region_mean_consistent_at_full_cover(self):
        hm = build_heatmap([det(0, 0, 16, 16, 0.4)], ImageDims(16, 16), downscale=2)
        assert hm.region_mean(BoundingBox(0, 0, 16, 16)) == pytest.approx(0.4, rel=1e-12)

    def test_downscale_approximates_native(self, rng):
        dims = ImageDims(64, 64)
        dets = random_detections(rng, 30, dims, allow_outside=False)
        native = build_heatmap(dets, dims)
        coarse = build_heatmap(dets, dims, downscale=2)
        q = BoundingBox(8, 8, 40, 40)
        assert coarse.region_mean(q) == pytest.approx(native.region_mean(q), rel=0.25, abs=0.05)


class TestWorkspace:
    def test_workspace_results_match_owned(self, rng):
        dims = ImageDims(40, 30)
        ws = Workspace()
        for _ in range(5):
            dets = random_detections(rng, 30, dims)
            owned = build_heatmap(dets, dims)
            borrowed = build_heatmap(dets, dims, workspace=ws)
            assert np.array_equal(owned.grid, borrowed.grid)
            q = BoundingBox(3, 3, 20, 15)
            assert owned.region_mean(q) == borrowed.region_mean(q)

    def test_workspace_reuse_recycles_storage(self, rng):
        dims = ImageDims(20, 20)
        ws = Workspace()
        a = build_heatmap(random_detections(rng, 10, dims), dims, workspace=ws)
        first = a.grid.copy()
        b = build_heatmap(random_detections(rng, 10, dims), dims, workspace=ws)
        # The first heatmap's storage was recycled by the second build.
        assert np.array_equal(a.grid, b.grid)
        assert not np.array_equal(a.grid, first)


class TestFusedKernelParity:
    def test_fused_matches_numpy_path(self, rng):
        dims = ImageDims(1100, 980)  # above the fused-kernel cell threshold
        dets = random_detections(rng, 120, dims)
        saved_flag = heatmap_mod._fused_unavailable
        try:
            heatmap_mod._fused_unavailable = True
            via_numpy = build_heatmap(dets, dims)
            heatmap_mod._fused_unavailable = False
            via_fused = build_heatmap(dets, dims)
        finally:
            heatmap_mod._fused_unavailable = saved_flag
        if heatmap_mod._fused_prefix is None:
            pytest.skip("compiled kernel unavailable")
        assert np.allclose(via_fused.grid, via_numpy.grid, rtol=1e-12, atol=1e-15)
        for _ in range(50):
            q = BoundingBox(
                float(rng.uniform(0, 1000)),
                float(rng.uniform(0, 900)),
                float(rng.uniform(1, 300)),
                float(rng.uniform(1, 300)),
            )
            assert via_fused.region_mean(q) == pytest.approx(
                via_numpy.region_mean(q), rel=1e-9, abs=1e-12
            )


class TestRender:
    def test_all_zero_renders_black(self):
        hm = build_heatmap([], ImageDims(6, 5))
        img = render_heatmap(hm)
        assert img.dtype == np.uint8
        assert img.shape == (5, 6)
        assert np.all(img == 0)

    def test_constant_region_maps_to_255(self):
        hm = build_heatmap([det(1, 1, 2, 2, 0.37)], ImageDims(6, 6))
        img = render_heatmap(hm)
        assert np.all(img[1:3, 1:3] == 255)
        assert img.sum() == 255 * 4

    def test_half_value_rounds_to_128(self):
        dets = [det(0, 0, 2, 2, 0.8), det(4, 4, 2, 2, 0.4)]
        hm = build_heatmap(dets, ImageDims(8, 8))
        img = render_heatmap(hm)
        assert np.all(img[0:2, 0:2] == 255)
        assert np.all(img[4:6, 4:6] == 128)
