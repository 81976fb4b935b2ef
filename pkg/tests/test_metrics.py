"""Tests for confusion counting, mask scores, and instance-level errors."""
import math

import numpy as np
import pytest

from conftest import random_polygon
from labelalign import dataio, metrics
from labelalign.codec import OffsetVec
from labelalign.geometry import Polygon, VERTEX_MEAN, rasterize, translate
from labelalign.metrics import (InstanceEval, PixelConfusion, aggregate, confusion, epe, le,
                                scores)


def square(x0: float, y0: float, side: float) -> Polygon:
    return Polygon(np.array([[x0, y0], [x0 + side, y0],
                             [x0 + side, y0 + side], [x0, y0 + side]]))


class TestConfusion:
    def test_identical_masks(self):
        m = rasterize(square(1, 1, 5), 12, 12)
        c = confusion(m, m)
        assert (c.fp, c.fn) == (0, 0)
        assert c.tp == m.count

    def test_both_empty(self):
        m = rasterize(square(100, 100, 4), 8, 8)  # fully clipped
        c = confusion(m, m)
        assert (c.tp, c.fp, c.fn) == (0, 0, 0)
        assert c.tn == 64

    def test_offset_squares_overlap_strip(self):
        gt = rasterize(square(0, 0, 4), 12, 12)
        pred = rasterize(square(2, 0, 4), 12, 12)
        c = confusion(pred, gt)
        assert (c.tp, c.fp, c.fn) == (8, 8, 8)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimensions differ"):
            confusion(rasterize(square(0, 0, 2), 8, 8), rasterize(square(0, 0, 2), 8, 9))

    def test_counts_partition_the_image(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = rasterize(random_polygon(rng), 48, 48)
            b = rasterize(random_polygon(rng), 48, 48)
            c = confusion(a, b)
            assert c.tp + c.fp + c.fn + c.tn == 48 * 48


class TestScores:
    def test_half_overlap_example(self):
        s = scores(PixelConfusion(tp=8, fp=8, fn=8, tn=100))
        assert (s.precision, s.recall, s.f1) == (0.5, 0.5, 0.5)
        assert s.iou == pytest.approx(1 / 3)

    def test_perfect(self):
        s = scores(PixelConfusion(tp=50, fp=0, fn=0, tn=10))
        assert (s.f1, s.precision, s.recall, s.iou) == (1.0, 1.0, 1.0, 1.0)

    def test_disjoint_nonempty(self):
        s = scores(PixelConfusion(tp=0, fp=9, fn=12, tn=10))
        assert (s.f1, s.precision, s.recall, s.iou) == (0.0, 0.0, 0.0, 0.0)

    def test_empty_vs_empty_iou_convention(self):
        s = scores(PixelConfusion(tp=0, fp=0, fn=0, tn=64))
        assert s.iou == 1.0
        assert s.f1 == 0.0

    def test_f1_iou_identity(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            tp, fp, fn = (int(v) for v in rng.integers(0, 1000, 3))
            if tp + fp + fn == 0:
                continue
            s = scores(PixelConfusion(tp, fp, fn, 0))
            assert abs(s.f1 - 2.0 * s.iou / (1.0 + s.iou)) <= 1e-12
            assert s.iou <= s.f1 + 1e-15


class TestInstanceErrors:
    def test_epe_three_four_five(self):
        gt = square(10, 10, 6)
        assert epe(translate(gt, OffsetVec(3.0, 4.0)), gt) == 5.0

    def test_epe_zero_for_identical(self):
        gt = square(10, 10, 6)
        assert epe(gt, gt) == 0.0

    def test_epe_equals_shift_norm(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            poly = random_polygon(rng)
            v = OffsetVec(*rng.uniform(-40, 40, 2))
            assert epe(translate(poly, v), poly) == pytest.approx(v.norm(), abs=1e-9)

    def test_epe_vertex_mean_mode(self):
        tri = Polygon(np.array([[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]]))
        moved = translate(tri, OffsetVec(0.0, 7.0))
        assert epe(moved, tri, VERTEX_MEAN) == pytest.approx(7.0, abs=1e-12)

    def test_epe_is_a_metric_on_samples(self):
        rng = np.random.default_rng(4)
        polys = [random_polygon(rng) for _ in range(12)]
        for a in polys[:4]:
            for b in polys[4:8]:
                assert epe(a, b) == pytest.approx(epe(b, a), abs=1e-12)
                for c in polys[8:]:
                    assert epe(a, c) <= epe(a, b) + epe(b, c) + 1e-9

    def test_le_examples(self):
        assert le(OffsetVec(6.0, 8.0), OffsetVec(3.0, 4.0)) == 5.0
        assert le(OffsetVec(0.0, 0.0), OffsetVec(3.0, 4.0)) == 5.0

    def test_le_rotation_invariant(self):
        o = OffsetVec(3.0, 4.0)
        for theta in np.linspace(0, 2 * math.pi, 17):
            rot = OffsetVec(5.0 * math.cos(theta), 5.0 * math.sin(theta))
            assert le(rot, o) == pytest.approx(0.0, abs=1e-9)


class TestAggregate:
    def test_macro_means(self):
        roof = PixelConfusion(tp=9, fp=1, fn=1, tn=0)     # f1 = 0.9
        foot = PixelConfusion(tp=8, fp=2, fn=2, tn=0)     # f1 = 0.8
        inst = [InstanceEval(0, 1.0, 2.0, 0.5)]
        report = aggregate(inst, roof, foot)
        assert report.mf == pytest.approx((0.9 + 0.8) / 2)
        assert report.mi == pytest.approx((scores(roof).iou + scores(foot).iou) / 2)

    def test_perfect_predictions(self, fixture_dataset):
        _, records, _ = dataio.load_dataset(fixture_dataset)
        preds = [dataio.PredictionRecord(r.id, r.footprint, r.roof, r.o_vec)
                 for r in records]
        sizes = {i: (512, 512) for i in range(3)}
        report = metrics.evaluate(records, preds, sizes)
        assert (report.mf, report.mi) == (1.0, 1.0)
        assert (report.mean_epe_roof, report.mean_epe_footprint, report.ale) == (0.0, 0.0, 0.0)
        assert report.instances == len(records)

    def test_uniform_shift_gives_exact_epe(self, fixture_dataset):
        _, records, _ = dataio.load_dataset(fixture_dataset)
        shift = OffsetVec(5.0, 0.0)
        preds = [dataio.PredictionRecord(r.id, translate(r.footprint, shift),
                                         translate(r.roof, shift), r.o_vec)
                 for r in records]
        sizes = {i: (512, 512) for i in range(3)}
        report = metrics.evaluate(records, preds, sizes)
        assert report.mean_epe_footprint == 5.0
        assert report.ale == 0.0

    def test_image_order_invariance(self, fixture_dataset):
        _, records, _ = dataio.load_dataset(fixture_dataset)
        preds = [dataio.PredictionRecord(r.id, r.footprint, translate(r.roof, OffsetVec(2, 1)),
                                         r.o_vec) for r in records]
        sizes = {i: (512, 512) for i in range(3)}
        forward = metrics.evaluate(records, preds, sizes)
        perm = list(reversed(range(len(records))))
        backward = metrics.evaluate([records[i] for i in perm], [preds[i] for i in perm], sizes)
        assert forward.to_json() == backward.to_json()

    def test_empty_aggregate_rejected(self):
        with pytest.raises(ValueError):
            aggregate([], PixelConfusion(), PixelConfusion())
