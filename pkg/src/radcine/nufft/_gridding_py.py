"""Vectorised numpy implementation of the gridding kernels.

Same signatures and arithmetic as the compiled ``_gridding`` module; used
when the extension is unavailable or ``RADCINE_PURE_PYTHON`` is set.
"""
import numpy as np


def _lookup(table, scale, d):
    pos = np.abs(d) * scale
    n = table.shape[0]
    i = pos.astype(np.intp)
    inside = i < n - 1
    ic = np.minimum(i, n - 2)
    frac = pos - ic
    val = table[ic] * (1.0 - frac) + table[ic + 1] * frac
    edge = np.where(pos <= n - 1, table[n - 1], 0.0)
    return np.where(inside, val, edge)


def _weights(kappa, width, k, table, scale):
    start = np.ceil(kappa - 0.5 * width)
    offs = start[..., None] + np.arange(width)
    w = _lookup(table, scale, kappa[..., None] - offs)
    idx = np.mod(offs.astype(np.intp), k)
    return idx, w


def _neighbourhood(coords, width, k1, k2, table):
    scale = (table.shape[0] - 1) / (0.5 * width)
    ix, wx = _weights(coords[..., 0], width, k1, table, scale)
    iy, wy = _weights(coords[..., 1], width, k2, table, scale)
    flat = ix[..., :, None] * k2 + iy[..., None, :]          # (T, M, W, W)
    w = wx[..., :, None] * wy[..., None, :]
    return flat, w


def interp(grid, coords, table, width, out, num_threads=1):
    nb, nt, k1, k2 = grid.shape
    flat, w = _neighbourhood(coords, width, k1, k2, table)
    _, m, ww, _ = flat.shape
    g = grid.reshape(nb, nt, k1 * k2)
    vals = np.take_along_axis(g, np.broadcast_to(flat.reshape(1, nt, -1), (nb, nt, m * ww * ww)),
                              axis=2).reshape(nb, nt, m, ww, ww)
    out[...] = np.einsum("btmij,tmij->btm", vals, w.astype(vals.real.dtype))


def spread(samples, coords, table, width, grid, num_threads=1):
    nb, nt, k1, k2 = grid.shape
    flat, w = _neighbourhood(coords, width, k1, k2, table)
    kk = k1 * k2
    base = (np.arange(nb * nt) * kk).reshape(nb, nt, 1, 1, 1)
    idx = (base + flat[None]).ravel()
    contrib = samples[..., None, None] * w[None].astype(samples.real.dtype)
    re = np.bincount(idx, weights=contrib.real.ravel(), minlength=nb * nt * kk)
    im = np.bincount(idx, weights=contrib.imag.ravel(), minlength=nb * nt * kk)
    grid += (re + 1j * im).reshape(grid.shape).astype(grid.dtype)
