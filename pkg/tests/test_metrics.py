import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atriareg.errors import BothEmpty, EmptyMask, GeometryMismatch
from atriareg.metrics import PhaseEvaluation, dice, evaluate_tracking, hausdorff_mm, mask_volume_ml
from atriareg.transform import DisplacementField
from atriareg.volume import CineSeries, translate

from conftest import SPACING, block_mask, mask, vol


def brute_hausdorff(a, b, spacing):
    """Directed distances over *all* set voxels (not just the boundary)."""
    pa = np.argwhere(a) * np.asarray(spacing)
    pb = np.argwhere(b) * np.asarray(spacing)
    d = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1))
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def single(idx, dims=(4, 4, 4), spacing=SPACING):
    m = np.zeros(dims, bool)
    m[idx] = True
    return mask(m, spacing)


class TestDice:
    def test_identical(self):
        m = block_mask((5, 5, 5), (1, 1, 1), (2, 3, 2))
        assert dice(m, m) == 1.0

    def test_disjoint(self):
        assert dice(block_mask((6, 6, 6), (0, 0, 0), (2, 2, 2)), block_mask((6, 6, 6), (3, 3, 3), (2, 2, 2))) == 0.0

    def test_half_overlap(self):
        a = block_mask((5, 5, 5), (1, 1, 1), (2, 2, 2))
        b = block_mask((5, 5, 5), (2, 1, 1), (2, 2, 2))
        assert int(np.sum(a.data & b.data)) == 4
        assert dice(a, b) == 0.5

    def test_both_empty(self):
        e = mask(np.zeros((3, 3, 3)))
        with pytest.raises(BothEmpty):
            dice(e, e)

    def test_mismatch(self):
        with pytest.raises(GeometryMismatch):
            dice(mask(np.ones((3, 3, 3))), mask(np.ones((3, 3, 4))))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_symmetric(self, seed):
        r = np.random.default_rng(seed)
        a = mask(r.random((5, 5, 5)) > 0.5)
        b = mask(r.random((5, 5, 5)) > 0.5)
        if a.count + b.count == 0:
            return
        assert dice(a, b) == dice(b, a)
        assert 0.0 <= dice(a, b) <= 1.0


class TestHausdorff:
    def test_identical(self):
        m = block_mask((6, 6, 6), (1, 1, 1), (3, 3, 3), SPACING)
        assert hausdorff_mm(m, m) == 0.0

    def test_x_neighbour(self):
        assert hausdorff_mm(single((1, 1, 1)), single((2, 1, 1))) == pytest.approx(1.72, abs=1e-12)

    def test_z_neighbour(self):
        assert hausdorff_mm(single((1, 1, 1)), single((1, 1, 2))) == pytest.approx(2.0, abs=1e-12)

    def test_empty(self):
        with pytest.raises(EmptyMask):
            hausdorff_mm(single((1, 1, 1)), mask(np.zeros((4, 4, 4)), SPACING))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.tuples(*[st.integers(2, 10)] * 3))
    def test_boundary_equals_full_set_brute_force(self, seed, dims):
        r = np.random.default_rng(seed)
        a = r.random(dims) > 0.6
        b = r.random(dims) > 0.6
        if not a.any() or not b.any():
            return
        got = hausdorff_mm(mask(a, SPACING), mask(b, SPACING))
        assert got == brute_hausdorff(a, b, SPACING)
        assert got == hausdorff_mm(mask(b, SPACING), mask(a, SPACING))

    @settings(max_examples=20, deadline=None)
    @given(st.tuples(*[st.integers(-2, 2)] * 3))
    def test_translation_covariance(self, shift):
        a = block_mask((14, 14, 14), (4, 4, 4), (4, 5, 3), SPACING)
        b = block_mask((14, 14, 14), (5, 4, 4), (3, 5, 4), SPACING)
        ta, tb = translate(a, shift), translate(b, shift)
        assert hausdorff_mm(ta, tb) == pytest.approx(hausdorff_mm(a, b), abs=1e-12)
        assert dice(ta, tb) == dice(a, b)

    def test_percentile_option(self):
        a = block_mask((12, 12, 12), (2, 2, 2), (6, 6, 6))
        b = block_mask((12, 12, 12), (2, 2, 2), (7, 6, 6))
        assert hausdorff_mm(a, b, percentile=95) <= hausdorff_mm(a, b)


class TestVolume:
    def test_empty(self):
        assert mask_volume_ml(mask(np.zeros((3, 3, 3)))) == 0.0

    def test_unit_spacing(self):
        assert mask_volume_ml(mask(np.ones((10, 10, 10)))) == 1.0

    def test_anisotropic(self):
        m = np.zeros((10, 10, 10), bool)
        m[:10, :10, 0] = True
        assert mask_volume_ml(mask(m, SPACING)) == pytest.approx(0.59168, abs=1e-12)


class TestEvaluateTracking:
    def _static(self, n):
        m = block_mask((12, 12, 12), (3, 3, 3), (5, 6, 4), SPACING)
        v = vol(m.data.astype(float), SPACING)
        return CineSeries(tuple([v] * n), tuple([m] * n))

    def test_zero_fields_on_static_series(self):
        series = self._static(20)
        fields = [DisplacementField.zeros(series.phases[0])] * 20
        rows = evaluate_tracking(series, fields)
        assert len(rows) == 20
        for t, row in enumerate(rows):
            assert isinstance(row, PhaseEvaluation)
            assert row.phase == t
            assert row.dice == 1.0 and row.hausdorff_mm == 0.0
            assert row.mean_jacobian == 1.0
            assert row.gt_volume_ml == row.warped_volume_ml

    def test_translation_fields(self):
        base = block_mask((12, 12, 12), (3, 3, 3), (4, 4, 4), SPACING)
        moved = translate(base, (2, 0, 0))
        v = vol(np.zeros((12, 12, 12)), SPACING)
        series = CineSeries((v, v), (base, moved))
        # pull-back: warped(x) = base(x + u), so u = -2 moves the block by +2
        fields = [DisplacementField.zeros(v), DisplacementField.constant(v, (-2, 0, 0))]
        rows = evaluate_tracking(series, fields)
        assert rows[1].dice == 1.0 and rows[1].hausdorff_mm == 0.0

    def test_length_mismatch(self):
        series = self._static(3)
        with pytest.raises(ValueError):
            evaluate_tracking(series, [DisplacementField.zeros(series.phases[0])] * 2)
