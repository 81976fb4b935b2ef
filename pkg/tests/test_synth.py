"""Tests for the synthetic scene and dataset generator."""
import filecmp
import math

import numpy as np
import pytest

from conftest import brute_force_mask
from labelalign import synth
from labelalign.geometry import rasterize
from labelalign.synth import SceneConfig, build_dataset, generate_scene, quantize6, \
    render_channels, sample_instances


class TestInstances:
    def test_zero_height_gives_near_nadir(self):
        cfg = SceneConfig(n_buildings=4, height_range=(0.0, 0.0), seed=1)
        instances = sample_instances(cfg)
        for inst in instances:
            assert (inst.o_vec.dx, inst.o_vec.dy) == (0.0, 0.0)
            assert np.array_equal(inst.roof.vertices, inst.footprint.vertices)

    def test_zero_nu_gives_aligned_labels(self):
        cfg = SceneConfig(n_buildings=4, osm_nu=0.0, seed=2)
        for inst in sample_instances(cfg):
            assert (inst.f_vec.dx, inst.f_vec.dy) == (0.0, 0.0)
            assert np.array_equal(inst.osm.vertices, inst.footprint.vertices)

    def test_offset_closure_exact_on_every_instance(self):
        for seed in range(10):
            cfg = SceneConfig(n_buildings=8, seed=seed)
            for inst in sample_instances(cfg):
                assert inst.r_vec.dx == inst.f_vec.dx + inst.o_vec.dx
                assert inst.r_vec.dy == inst.f_vec.dy + inst.o_vec.dy

    def test_polygon_offset_consistency(self):
        cfg = SceneConfig(n_buildings=6, seed=3)
        for inst in sample_instances(cfg):
            assert np.allclose(inst.roof.vertices,
                               inst.footprint.vertices + [inst.o_vec.dx, inst.o_vec.dy])
            assert np.allclose(inst.footprint.vertices,
                               inst.osm.vertices + [inst.f_vec.dx, inst.f_vec.dy])

    def test_displacement_magnitude_follows_rayleigh_mean(self):
        # 10^4 instances without rendering; Rayleigh mean is nu * sqrt(pi/2)
        norms = []
        for seed in range(250):
            cfg = SceneConfig(n_buildings=40, osm_nu=20.0, margin=32, min_gap=8,
                              size_range=(8, 16), seed=seed)
            norms.extend(inst.f_vec.norm() for inst in sample_instances(cfg))
        assert len(norms) == 250 * 40
        expected = 20.0 * math.sqrt(math.pi / 2.0)
        assert np.mean(norms) == pytest.approx(expected, rel=0.02)

    def test_footprints_pairwise_disjoint(self):
        cfg = SceneConfig(n_buildings=8, seed=4)
        instances = sample_instances(cfg)
        assert len(instances) == 8
        acc = np.zeros((cfg.height, cfg.width), dtype=np.int64)
        for inst in instances:
            acc += rasterize(inst.footprint, cfg.width, cfg.height).pixels
        assert acc.max() == 1

    def test_separation_guarantee(self):
        cfg = SceneConfig(n_buildings=8, seed=5)
        instances = sample_instances(cfg)
        boxes = [(inst.footprint.vertices[:, 0].min(), inst.footprint.vertices[:, 1].min(),
                  inst.footprint.vertices[:, 0].max(), inst.footprint.vertices[:, 1].max())
                 for inst in instances]
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                a, b = boxes[i], boxes[j]
                dx = max(a[0] - b[2], b[0] - a[2])
                dy = max(a[1] - b[3], b[1] - a[3])
                assert max(dx, dy) >= cfg.min_gap

    def test_oversized_request_places_fewer_with_warning(self, caplog):
        cfg = SceneConfig(n_buildings=4, size_range=(30, 40), width=160, height=160,
                          margin=10, min_gap=64, seed=6)
        with caplog.at_level("WARNING"):
            instances = sample_instances(cfg)
        assert len(instances) < 4
        assert any("placed" in rec.message for rec in caplog.records)


class TestChannels:
    def test_zero_blur_is_exact_union(self):
        cfg = SceneConfig(n_buildings=4, blur_radius=0, seed=7)
        channels, instances = generate_scene(cfg)
        union = np.zeros((cfg.height, cfg.width), dtype=np.uint8)
        for inst in instances:
            union |= rasterize(inst.footprint, cfg.width, cfg.height).pixels
        assert np.array_equal(channels.footprint_evidence, union.astype(float))

    def test_interior_pixel_is_fully_on(self):
        cfg = SceneConfig(n_buildings=4, blur_radius=2, seed=8)
        channels, instances = generate_scene(cfg)
        # a pixel whose whole blur window lies inside some footprint
        union = np.zeros((cfg.height, cfg.width), dtype=np.uint8)
        for inst in instances:
            union |= rasterize(inst.footprint, cfg.width, cfg.height).pixels
        r = cfg.blur_radius
        deep = np.ones_like(union, dtype=bool)
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                deep &= np.roll(np.roll(union.astype(bool), dy, axis=0), dx, axis=1)
        rows, cols = np.nonzero(deep)
        assert rows.size > 0
        assert (channels.footprint_evidence[rows, cols] == 1.0).all()

    def test_outside_dilated_polygons_is_zero(self):
        cfg = SceneConfig(n_buildings=4, blur_radius=2, seed=9)
        channels, instances = generate_scene(cfg)
        union = np.zeros((cfg.height, cfg.width), dtype=np.uint8)
        for inst in instances:
            union |= rasterize(inst.footprint, cfg.width, cfg.height).pixels
        rows, cols = np.nonzero(union)
        r = cfg.blur_radius
        near = np.zeros_like(union, dtype=bool)
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                near[np.clip(rows + dy, 0, cfg.height - 1),
                     np.clip(cols + dx, 0, cfg.width - 1)] = True
        assert (channels.footprint_evidence[~near] == 0.0).all()

    def test_shared_height_makes_roof_channel_a_shift(self):
        cfg = SceneConfig(n_buildings=4, height_range=(30.0, 30.0), view_azimuth=0.0,
                          blur_radius=1, seed=10)
        channels, instances = generate_scene(cfg)
        assert all(inst.o_vec.dx == 30.0 and inst.o_vec.dy == 0.0 for inst in instances)
        shifted = np.zeros_like(channels.footprint_evidence)
        shifted[:, 30:] = channels.footprint_evidence[:, :-30]
        assert np.array_equal(channels.roof_evidence, shifted)

    def test_blur_matches_brute_force_window_mean(self):
        cfg = SceneConfig(n_buildings=2, blur_radius=2, seed=11, width=160, height=160,
                          margin=24, min_gap=16)
        channels, instances = generate_scene(cfg)
        union = np.zeros((cfg.height, cfg.width), dtype=np.float64)
        for inst in instances:
            union = np.maximum(union, brute_force_mask(inst.footprint, cfg.width, cfg.height))
        padded = np.pad(union, 2)
        rng = np.random.default_rng(0)
        for _ in range(50):
            j = int(rng.integers(0, cfg.height))
            i = int(rng.integers(0, cfg.width))
            window = padded[j:j + 5, i:i + 5]
            assert channels.footprint_evidence[j, i] == pytest.approx(window.mean(), abs=1e-12)


class TestDataset:
    def test_fixture_shape(self, fixture_dataset):
        from labelalign import dataio
        manifest, records, channels = dataio.load_dataset(fixture_dataset)
        assert len(manifest.images) == 3
        assert len(records) == 12
        assert set(channels) == {0, 1, 2}

    def test_regeneration_is_byte_identical(self, tmp_path):
        cfg = SceneConfig(n_buildings=4, seed=42)
        a = tmp_path / "a"
        b = tmp_path / "b"
        build_dataset(cfg, 2, a)
        build_dataset(cfg, 2, b)
        for rel in ("manifest.json", "annotations.json",
                    "channels/img_000_footprint_evidence.pgm",
                    "channels/img_001_roof_evidence.pgm"):
            assert filecmp.cmp(a / rel, b / rel, shallow=False), rel

    def test_mixed_near_and_off_nadir_tags(self, tmp_path):
        cfg = SceneConfig(n_buildings=4, seed=1)
        manifest = build_dataset(cfg, 4, tmp_path / "mixed", near_nadir_images=2)
        views = [img.view for img in manifest.images]
        assert views == ["near_nadir", "near_nadir", "off_nadir", "off_nadir"]
        from labelalign import dataio
        _, records, _ = dataio.load_dataset(tmp_path / "mixed")
        near_ids = {img.id for img in manifest.images if img.view == "near_nadir"}
        for rec in records:
            if rec.image_id in near_ids:
                assert rec.o_vec.norm() == 0.0
            else:
                assert rec.o_vec.norm() > 0.0

    def test_quantize6(self):
        assert quantize6(-0.0000001) == 0.0
        assert quantize6(1.23456789) == 1.234568
        assert quantize6(5.0) == 5.0
