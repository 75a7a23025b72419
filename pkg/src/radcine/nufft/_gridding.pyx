# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Kaiser-Bessel interpolation / spreading kernels.

Shapes: grid (B, T, K1, K2), coords (T, M, 2) in oversampled-grid units,
samples (B, T, M).  Work is split over (b, t) pairs; each pair reads or
writes its own grid slice, so the parallel loop needs no atomics and the
result does not depend on the thread count.
"""
import numpy as np
from cython.parallel cimport prange
from libc.math cimport ceil, fabs

ctypedef fused cplx:
    float complex
    double complex

cdef enum:
    MAXW = 16


cdef inline double _lookup(const double[::1] table, double scale, double d) noexcept nogil:
    cdef double pos = fabs(d) * scale
    cdef Py_ssize_t n = table.shape[0]
    cdef Py_ssize_t i = <Py_ssize_t>pos
    cdef double frac
    if i >= n - 1:
        if pos <= n - 1:
            return table[n - 1]
        return 0.0
    frac = pos - i
    return table[i] * (1.0 - frac) + table[i + 1] * frac


cdef inline void _weights(double kappa, int width, Py_ssize_t k,
                          const double[::1] table, double scale,
                          Py_ssize_t* idx, double* w) noexcept nogil:
    cdef double start = ceil(kappa - 0.5 * width)
    cdef Py_ssize_t j, u
    for j in range(width):
        u = <Py_ssize_t>(start + j)
        w[j] = _lookup(table, scale, kappa - (start + j))
        u = u % k
        if u < 0:
            u = u + k
        idx[j] = u


cdef void _interp_pair(cplx[:, ::1] grid, const double[:, ::1] coords,
                       const double[::1] table, double scale, int width,
                       cplx[::1] out) noexcept nogil:
    cdef Py_ssize_t m, jx, jy
    cdef Py_ssize_t k1 = grid.shape[0], k2 = grid.shape[1]
    cdef Py_ssize_t ix[MAXW]
    cdef Py_ssize_t iy[MAXW]
    cdef double wx[MAXW]
    cdef double wy[MAXW]
    cdef cplx acc, row
    for m in range(coords.shape[0]):
        _weights(coords[m, 0], width, k1, table, scale, ix, wx)
        _weights(coords[m, 1], width, k2, table, scale, iy, wy)
        acc = 0
        for jx in range(width):
            row = 0
            for jy in range(width):
                row = row + grid[ix[jx], iy[jy]] * wy[jy]
            acc = acc + row * wx[jx]
        out[m] = acc


cdef void _spread_pair(const cplx[::1] samples, const double[:, ::1] coords,
                       const double[::1] table, double scale, int width,
                       cplx[:, ::1] grid) noexcept nogil:
    cdef Py_ssize_t m, jx, jy
    cdef Py_ssize_t k1 = grid.shape[0], k2 = grid.shape[1]
    cdef Py_ssize_t ix[MAXW]
    cdef Py_ssize_t iy[MAXW]
    cdef double wx[MAXW]
    cdef double wy[MAXW]
    cdef cplx v
    for m in range(coords.shape[0]):
        _weights(coords[m, 0], width, k1, table, scale, ix, wx)
        _weights(coords[m, 1], width, k2, table, scale, iy, wy)
        for jx in range(width):
            v = samples[m] * wx[jx]
            for jy in range(width):
                grid[ix[jx], iy[jy]] = grid[ix[jx], iy[jy]] + v * wy[jy]


def interp(cplx[:, :, :, ::1] grid, const double[:, :, ::1] coords,
           const double[::1] table, int width, cplx[:, :, ::1] out,
           int num_threads=1):
    """out[b, t, m] = sum of kernel-weighted grid values around coords[t, m]."""
    if width > MAXW:
        raise ValueError(f"kernel width {width} exceeds {MAXW}")
    cdef Py_ssize_t nb = grid.shape[0], nt = grid.shape[1]
    cdef Py_ssize_t p, b, t
    cdef double scale = (table.shape[0] - 1) / (0.5 * width)
    for p in prange(nb * nt, nogil=True, num_threads=max(num_threads, 1), schedule="static"):
        b = p // nt
        t = p % nt
        _interp_pair(grid[b, t], coords[t], table, scale, width, out[b, t])


def spread(cplx[:, :, ::1] samples, const double[:, :, ::1] coords,
           const double[::1] table, int width, cplx[:, :, :, ::1] grid,
           int num_threads=1):
    """Adjoint of :func:`interp`; accumulates into a zero-initialised ``grid``."""
    if width > MAXW:
        raise ValueError(f"kernel width {width} exceeds {MAXW}")
    cdef Py_ssize_t nb = grid.shape[0], nt = grid.shape[1]
    cdef Py_ssize_t p, b, t
    cdef double scale = (table.shape[0] - 1) / (0.5 * width)
    for p in prange(nb * nt, nogil=True, num_threads=max(num_threads, 1), schedule="static"):
        b = p // nt
        t = p % nt
        _spread_pair(samples[b, t], coords[t], table, scale, width, grid[b, t])
