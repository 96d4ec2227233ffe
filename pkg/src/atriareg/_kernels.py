"""Numba kernels for trilinear sampling and its adjoint-free derivative.

Padding modes: ``ZERO`` treats the image as extended by zeros (so the
interpolant stays continuous across the border), ``CLAMP`` clamps the
sample position to the array.
"""

import os

import numba
import numpy as np
from numba import njit, prange

ZERO = 0
CLAMP = 1

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

_threads = os.environ.get("ATRIAREG_THREADS")
if _threads:
    numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))


@njit(cache=True, inline="always")
def _corner(img, i, j, k, mode):
    nx, ny, nz = img.shape
    if mode == CLAMP:
        i = min(max(i, 0), nx - 1)
        j = min(max(j, 0), ny - 1)
        k = min(max(k, 0), nz - 1)
        return img[i, j, k]
    if i < 0 or j < 0 or k < 0 or i >= nx or j >= ny or k >= nz:
        return 0.0
    return img[i, j, k]


@njit(cache=True, inline="always")
def _clamp_pos(p, n, mode):
    if mode == CLAMP:
        if p < 0.0:
            return 0.0
        if p > n - 1:
            return float(n - 1)
    return p


@njit(cache=True, parallel=True)
def sample_at(img, px, py, pz, mode, out):
    """``out[idx] = I(px[idx], py[idx], pz[idx])`` for 3D position arrays."""
    nx, ny, nz = img.shape
    a, b, c = px.shape
    for i in prange(a):
        for j in range(b):
            for k in range(c):
                x = _clamp_pos(px[i, j, k], nx, mode)
                y = _clamp_pos(py[i, j, k], ny, mode)
                z = _clamp_pos(pz[i, j, k], nz, mode)
                x0 = np.floor(x)
                y0 = np.floor(y)
                z0 = np.floor(z)
                fx = x - x0
                fy = y - y0
                fz = z - z0
                i0 = int(x0)
                j0 = int(y0)
                k0 = int(z0)
                gx = 1.0 - fx
                gy = 1.0 - fy
                gz = 1.0 - fz
                out[i, j, k] = (
                    gx * gy * gz * _corner(img, i0, j0, k0, mode)
                    + fx * gy * gz * _corner(img, i0 + 1, j0, k0, mode)
                    + gx * fy * gz * _corner(img, i0, j0 + 1, k0, mode)
                    + fx * fy * gz * _corner(img, i0 + 1, j0 + 1, k0, mode)
                    + gx * gy * fz * _corner(img, i0, j0, k0 + 1, mode)
                    + fx * gy * fz * _corner(img, i0 + 1, j0, k0 + 1, mode)
                    + gx * fy * fz * _corner(img, i0, j0 + 1, k0 + 1, mode)
                    + fx * fy * fz * _corner(img, i0 + 1, j0 + 1, k0 + 1, mode)
                )


@njit(cache=True, parallel=True)
def warp_with_gradient(img, u, out, grad):
    """Pull-back warp ``out(x) = I(x + u(x))`` with zero padding.

    ``grad[:, x]`` receives the exact derivative of the trilinear
    interpolant at ``x + u(x)`` (floor convention on cell faces).
    """
    nx, ny, nz = img.shape
    for i in prange(nx):
        for j in range(ny):
            for k in range(nz):
                x = i + u[0, i, j, k]
                y = j + u[1, i, j, k]
                z = k + u[2, i, j, k]
                x0 = np.floor(x)
                y0 = np.floor(y)
                z0 = np.floor(z)
                fx = x - x0
                fy = y - y0
                fz = z - z0
                i0 = int(x0)
                j0 = int(y0)
                k0 = int(z0)
                c000 = _corner(img, i0, j0, k0, ZERO)
                c100 = _corner(img, i0 + 1, j0, k0, ZERO)
                c010 = _corner(img, i0, j0 + 1, k0, ZERO)
                c110 = _corner(img, i0 + 1, j0 + 1, k0, ZERO)
                c001 = _corner(img, i0, j0, k0 + 1, ZERO)
                c101 = _corner(img, i0 + 1, j0, k0 + 1, ZERO)
                c011 = _corner(img, i0, j0 + 1, k0 + 1, ZERO)
                c111 = _corner(img, i0 + 1, j0 + 1, k0 + 1, ZERO)
                gx = 1.0 - fx
                gy = 1.0 - fy
                gz = 1.0 - fz
                # interpolate along x first, then reuse the edges for d/dy, d/dz
                e00 = gx * c000 + fx * c100
                e10 = gx * c010 + fx * c110
                e01 = gx * c001 + fx * c101
                e11 = gx * c011 + fx * c111
                f0 = gy * e00 + fy * e10
                f1 = gy * e01 + fy * e11
                out[i, j, k] = gz * f0 + fz * f1
                d00 = c100 - c000
                d10 = c110 - c010
                d01 = c101 - c001
                d11 = c111 - c011
                grad[0, i, j, k] = gz * (gy * d00 + fy * d10) + fz * (gy * d01 + fy * d11)
                grad[1, i, j, k] = gz * (e10 - e00) + fz * (e11 - e01)
                grad[2, i, j, k] = f1 - f0


@njit(cache=True, parallel=True)
def warp_only(img, u, out):
    nx, ny, nz = img.shape
    for i in prange(nx):
        for j in range(ny):
            for k in range(nz):
                x = i + u[0, i, j, k]
                y = j + u[1, i, j, k]
                z = k + u[2, i, j, k]
                x0 = np.floor(x)
                y0 = np.floor(y)
                z0 = np.floor(z)
                fx = x - x0
                fy = y - y0
                fz = z - z0
                i0 = int(x0)
                j0 = int(y0)
                k0 = int(z0)
                gx = 1.0 - fx
                gy = 1.0 - fy
                gz = 1.0 - fz
                e00 = gx * _corner(img, i0, j0, k0, ZERO) + fx * _corner(img, i0 + 1, j0, k0, ZERO)
                e10 = gx * _corner(img, i0, j0 + 1, k0, ZERO) + fx * _corner(img, i0 + 1, j0 + 1, k0, ZERO)
                e01 = gx * _corner(img, i0, j0, k0 + 1, ZERO) + fx * _corner(img, i0 + 1, j0, k0 + 1, ZERO)
                e11 = gx * _corner(img, i0, j0 + 1, k0 + 1, ZERO) + fx * _corner(img, i0 + 1, j0 + 1, k0 + 1, ZERO)
                out[i, j, k] = gz * (gy * e00 + fy * e10) + fz * (gy * e01 + fy * e11)


@njit(cache=True)
def bending(u, grad, partial):
    """Bending energy sum (unnormalized) with the adjoint scattered into
    ``grad``; the exact gradient is ``2 * grad`` (caller scales).

    ``partial[c, i]`` receives the sequential sum over the x-slab ``i`` of
    component ``c``; the caller reduces it in a fixed order.
    """
    _, nx, ny, nz = u.shape
    for c in range(3):
        f = u[c]
        g = grad[c]
        for i in range(nx):
            acc = 0.0
            xi = 0 < i < nx - 1
            for j in range(ny):
                yi = 0 < j < ny - 1
                for k in range(nz):
                    zi = 0 < k < nz - 1
                    v = f[i, j, k]
                    if xi:
                        r = f[i + 1, j, k] - 2.0 * v + f[i - 1, j, k]
                        acc += r * r
                        g[i + 1, j, k] += r
                        g[i, j, k] -= 2.0 * r
                        g[i - 1, j, k] += r
                    if yi:
                        r = f[i, j + 1, k] - 2.0 * v + f[i, j - 1, k]
                        acc += r * r
                        g[i, j + 1, k] += r
                        g[i, j, k] -= 2.0 * r
                        g[i, j - 1, k] += r
                    if zi:
                        r = f[i, j, k + 1] - 2.0 * v + f[i, j, k - 1]
                        acc += r * r
                        g[i, j, k + 1] += r
                        g[i, j, k] -= 2.0 * r
                        g[i, j, k - 1] += r
                    # mixed terms carry weight 2 in the energy -> 2 * 0.25 on the adjoint
                    if xi and yi:
                        r = 0.25 * (f[i + 1, j + 1, k] - f[i + 1, j - 1, k] - f[i - 1, j + 1, k] + f[i - 1, j - 1, k])
                        acc += 2.0 * r * r
                        q = 0.5 * r
                        g[i + 1, j + 1, k] += q
                        g[i + 1, j - 1, k] -= q
                        g[i - 1, j + 1, k] -= q
                        g[i - 1, j - 1, k] += q
                    if xi and zi:
                        r = 0.25 * (f[i + 1, j, k + 1] - f[i + 1, j, k - 1] - f[i - 1, j, k + 1] + f[i - 1, j, k - 1])
                        acc += 2.0 * r * r
                        q = 0.5 * r
                        g[i + 1, j, k + 1] += q
                        g[i + 1, j, k - 1] -= q
                        g[i - 1, j, k + 1] -= q
                        g[i - 1, j, k - 1] += q
                    if yi and zi:
                        r = 0.25 * (f[i, j + 1, k + 1] - f[i, j + 1, k - 1] - f[i, j - 1, k + 1] + f[i, j - 1, k - 1])
                        acc += 2.0 * r * r
                        q = 0.5 * r
                        g[i, j + 1, k + 1] += q
                        g[i, j + 1, k - 1] -= q
                        g[i, j - 1, k + 1] -= q
                        g[i, j - 1, k - 1] += q
            partial[c, i] = acc
