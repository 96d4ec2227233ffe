import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atriareg.errors import GeometryMismatch, TooSmall
from atriareg.transform import (
    MM,
    DisplacementField,
    compose_with_shift,
    field_to_mm,
    identity_grid,
    jacobian_det_map,
    warp_array_with_gradient,
    warp_mask,
    warp_trilinear,
)

from conftest import SPACING, block_mask, mask, vol


def scalar_trilinear(img, p):
    """Reference sampler: explicit 8-corner sum with zero outside the array."""
    base = [math.floor(x) for x in p]
    frac = [x - b for x, b in zip(p, base)]
    total = 0.0
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                idx = (base[0] + di, base[1] + dj, base[2] + dk)
                if all(0 <= a < n for a, n in zip(idx, img.shape)):
                    w = 1.0
                    for d, f in zip((di, dj, dk), frac):
                        w *= f if d else 1.0 - f
                    total += w * img[idx]
    return total


def field(data, spacing=(1.0, 1.0, 1.0)):
    return DisplacementField(np.asarray(data, dtype=float), spacing)


class TestWarp:
    def test_zero_field_is_bitwise_identity(self, rng):
        m = vol(rng.normal(size=(5, 6, 7)))
        out = warp_trilinear(m, DisplacementField.zeros(m))
        assert np.array_equal(out.data, m.data)

    def test_linear_ramp_half_voxel(self):
        ramp = identity_grid((8, 4, 4))[0]
        out = warp_trilinear(vol(ramp), DisplacementField.constant(vol(ramp), (0.5, 0, 0)))
        assert np.allclose(out.data[:-1], ramp[:-1] + 0.5, atol=1e-14, rtol=0)
        # last slab samples half outside: 0.5 * 7 + 0.5 * 0
        assert np.allclose(out.data[-1], 3.5)

    def test_midpoint(self):
        img = np.zeros((2, 1, 1))
        img[1] = 2.0
        u = np.zeros((3, 2, 1, 1))
        u[0, 0] = 0.5
        assert warp_trilinear(vol(img), field(u)).data[0, 0, 0] == 1.0

    def test_integer_shift_reproduces_voxels(self, rng):
        img = rng.random((6, 6, 6))
        out = warp_trilinear(vol(img), DisplacementField.constant(vol(img), (1, -2, 0))).data
        assert np.array_equal(out[:5, 2:, :], img[1:, :4, :])
        assert not out[5].any() and not out[:, :2].any()

    def test_geometry_mismatch(self):
        with pytest.raises(GeometryMismatch):
            warp_trilinear(vol(np.zeros((4, 4, 4))), field(np.zeros((3, 4, 4, 5))))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_scalar_reference(self, seed):
        r = np.random.default_rng(seed)
        img = r.normal(size=(4, 5, 3))
        u = r.uniform(-2.5, 2.5, size=(3, 4, 5, 3))
        out = warp_trilinear(vol(img), field(u)).data
        for idx in np.ndindex(img.shape):
            p = [idx[a] + u[a][idx] for a in range(3)]
            assert out[idx] == pytest.approx(scalar_trilinear(img, p), abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
    def test_linear_in_moving(self, seed, a, b):
        r = np.random.default_rng(seed)
        m1, m2 = r.normal(size=(2, 5, 5, 5))
        u = field(r.uniform(-2, 2, size=(3, 5, 5, 5)))
        lhs = warp_trilinear(vol(a * m1 + b * m2), u).data
        rhs = a * warp_trilinear(vol(m1), u).data + b * warp_trilinear(vol(m2), u).data
        scale = max(1.0, np.abs(lhs).max())
        assert np.max(np.abs(lhs - rhs)) <= 1e-6 * scale

    def test_interpolant_gradient_matches_finite_differences(self, rng):
        img = rng.normal(size=(6, 6, 6))
        # keep every sample away from cell faces so the interpolant is smooth there
        u = rng.integers(-1, 2, size=(3, 6, 6, 6)) + rng.uniform(0.1, 0.9, size=(3, 6, 6, 6))
        _, grad = warp_array_with_gradient(img, u)
        eps = 1e-6
        for a in range(3):
            up, dn = u.copy(), u.copy()
            up[a] += eps
            dn[a] -= eps
            fd = (warp_array_with_gradient(img, up)[0] - warp_array_with_gradient(img, dn)[0]) / (2 * eps)
            assert np.allclose(grad[a], fd, atol=1e-8)


class TestWarpMask:
    def test_zero_field(self):
        m = block_mask((4, 4, 4), (1, 1, 1), (2, 2, 2))
        assert np.array_equal(warp_mask(m, DisplacementField.zeros(m)).data, m.data)

    def test_integer_shift(self):
        m = block_mask((4, 4, 4), (1, 1, 1), (2, 2, 2))
        out = warp_mask(m, DisplacementField.constant(m, (1, 0, 0))).data
        expected = np.zeros((4, 4, 4), bool)
        for idx in np.ndindex(4, 4, 4):
            src = (idx[0] + 1, idx[1], idx[2])
            expected[idx] = src[0] < 4 and m.data[src]
        assert np.array_equal(out, expected)
        assert out[0:2, 1:3, 1:3].all() and out.sum() == 8

    def test_half_voxel_tie_is_unset(self):
        data = np.zeros((6, 2, 2), bool)
        data[3:] = True
        m = mask(data)
        out = warp_mask(m, DisplacementField.constant(m, (0.5, 0, 0))).data
        # voxel 2 samples 0.5 * m[2] + 0.5 * m[3] = 0.5, not > 0.5
        assert not out[2].any()
        assert out[3:5].all()
        # voxel 5 samples half outside the array -> 0.5 -> unset
        assert not out[5].any()

    def test_threshold_is_configurable(self):
        data = np.zeros((6, 2, 2), bool)
        data[3:] = True
        m = mask(data)
        out = warp_mask(m, DisplacementField.constant(m, (0.5, 0, 0)), threshold=0.4).data
        assert out[2].all()


class TestJacobian:
    def test_zero_field(self):
        jac = jacobian_det_map(DisplacementField.zeros(vol(np.zeros((4, 5, 6)))))
        assert np.array_equal(jac.data, np.ones((4, 5, 6)))

    def test_linear_x_stretch(self):
        g = identity_grid((6, 6, 6))
        u = np.zeros_like(g)
        u[0] = 0.1 * g[0]
        jac = jacobian_det_map(field(u)).data
        assert np.allclose(jac[1:-1, 1:-1, 1:-1], 1.1, atol=1e-12)

    def test_uniform_scaling(self):
        g = identity_grid((7, 7, 7))
        c = np.array([3.0, 3.0, 3.0])[:, None, None, None]
        jac = jacobian_det_map(field(0.05 * (g - c))).data
        assert np.max(np.abs(jac[1:-1, 1:-1, 1:-1] - 1.157625)) < 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_affine_fields(self, seed):
        r = np.random.default_rng(seed)
        A = r.uniform(-0.2, 0.2, size=(3, 3))
        b = r.uniform(-3, 3, size=3)
        g = identity_grid((5, 6, 7))
        u = np.einsum("cd,d...->c...", A, g) + b[:, None, None, None]
        jac = jacobian_det_map(field(u)).data
        assert np.allclose(jac[1:-1, 1:-1, 1:-1], np.linalg.det(np.eye(3) + A), atol=1e-12, rtol=0)

    @settings(max_examples=20, deadline=None)
    @given(st.tuples(*[st.floats(-5, 5)] * 3))
    def test_constant_field(self, vec):
        like = vol(np.zeros((4, 4, 3)))
        jac = jacobian_det_map(DisplacementField.constant(like, vec)).data
        assert np.array_equal(jac, np.ones_like(jac))

    def test_scaling_field_mean_over_band(self):
        # a field implementing a uniform scaling by s has det s^3 (pull-back of 1/s gives 1/s^3)
        from atriareg.morphology import contour_band_mask

        s = 1.08
        g = identity_grid((24, 24, 16))
        c = np.array([12.0, 12.0, 8.0])[:, None, None, None]
        band = contour_band_mask(mask(np.sum(((g - c) / np.array([7, 6, 4.0])[:, None, None, None]) ** 2, 0) <= 1))
        jac = jacobian_det_map(field((s - 1) * (g - c))).data
        assert 0.98 * s ** 3 <= jac[band.data].mean() <= 1.02 * s ** 3

    def test_too_small(self):
        with pytest.raises(TooSmall):
            jacobian_det_map(field(np.zeros((3, 2, 5, 5))))


class TestFieldPlumbing:
    def test_shift_zero(self, rng):
        f = field(rng.normal(size=(3, 3, 3, 3)))
        assert np.array_equal(compose_with_shift(f, (0, 0, 0)).data, f.data)

    def test_shift_of_zero_field(self):
        like = vol(np.zeros((3, 3, 3)))
        out = compose_with_shift(DisplacementField.zeros(like), (2, 0, 0))
        assert np.array_equal(out.data, DisplacementField.constant(like, (2, 0, 0)).data)

    def test_shift_componentwise(self):
        like = vol(np.zeros((3, 3, 3)))
        out = compose_with_shift(DisplacementField.constant(like, (1, 1, 0)), (-1, 0, 3))
        assert np.array_equal(out.data, DisplacementField.constant(like, (0, 1, 3)).data)

    def test_to_mm(self):
        like = vol(np.zeros((2, 2, 2)), spacing=SPACING)
        out = field_to_mm(DisplacementField.constant(like, (1, 1, 1)))
        assert out.units == MM
        assert np.allclose(out.data[:, 0, 0, 0], [1.72, 1.72, 2.0])
        assert np.allclose(field_to_mm(DisplacementField.constant(like, (2, 0, 0))).data[:, 1, 1, 1], [3.44, 0, 0])
        assert not field_to_mm(DisplacementField.zeros(like)).data.any()
