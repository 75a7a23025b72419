"""Convolution, pooling, resampling and FFT ops with hand-written backward passes."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, make_node


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0, layout: str = "NCHW") -> Tensor:
    """2D cross-correlation of ``x`` with ``weight`` (F,C,k,k).

    ``layout="NCHW"`` takes (B,C,H,W) input and returns (B,F,H',W');
    ``"NHWC"`` takes (B,H,W,C) and returns (B,H',W',F) without transposes,
    which is the fast path when layers are chained.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError("conv2d expects 4D input and weight")
    if layout == "NCHW":
        out = conv2d(x.permute(0, 2, 3, 1), weight, bias, stride, padding, layout="NHWC")
        return out.permute(0, 3, 1, 2)
    if layout != "NHWC":
        raise ValueError(f"unknown layout {layout!r}")
    b, h, w, c = x.shape
    f, cw, k, k2 = weight.shape
    if c != cw:
        raise ValueError(f"channel mismatch: input has {c}, weight expects {cw}")
    if k != k2 or k % 2 == 0:
        raise ValueError("kernel must be square with odd size")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    hp, wp = h + 2 * padding, w + 2 * padding
    h1, w1 = hp - k + 1, wp - k + 1          # stride-1 output size
    if h <= 0 or w <= 0 or h1 <= 0 or w1 <= 0:
        raise ValueError("non-positive spatial dimensions")

    # Flattened over (b, row, col) of the padded input, tap (di, dj) is the row
    # offset di*wp + dj, so each tap is one GEMM on a contiguous slice. Rows whose
    # window wraps past the right/bottom edge produce junk that is cropped away.
    dt = x.data.dtype
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0))) \
        if padding else x.data
    xf = np.ascontiguousarray(xp).reshape(-1, c)
    span = (k - 1) * wp + (k - 1)
    rows = xf.shape[0] - span
    wt = np.ascontiguousarray(weight.data.transpose(2, 3, 1, 0))   # (k, k, C, F)
    acc = np.zeros((xf.shape[0], f), dtype=dt)
    for di in range(k):
        for dj in range(k):
            o = di * wp + dj
            acc[:rows] += xf[o:o + rows] @ wt[di, dj]
    out = acc.reshape(b, hp, wp, f)[:, :h1:stride, :w1:stride]
    if bias is not None:
        out = out + bias.data
    out = np.ascontiguousarray(out, dtype=dt)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        gf = np.zeros((xf.shape[0], f), dtype=dt)
        gf.reshape(b, hp, wp, f)[:, :h1:stride, :w1:stride] = g
        gl = gf[:rows]
        gw = gx = None
        if weight.requires_grad:
            gwt = np.empty((k, k, c, f), dtype=dt)
            for di in range(k):
                for dj in range(k):
                    o = di * wp + dj
                    gwt[di, dj] = xf[o:o + rows].T @ gl
            gw = np.ascontiguousarray(gwt.transpose(3, 2, 0, 1))
        if x.requires_grad:
            gxf = np.zeros_like(xf)
            for di in range(k):
                for dj in range(k):
                    o = di * wp + dj
                    gxf[o:o + rows] += gl @ wt[di, dj].T
            gx = gxf.reshape(b, hp, wp, c)
            if padding:
                gx = np.ascontiguousarray(gx[:, padding:padding + h, padding:padding + w])
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 1, 2)) if bias.requires_grad else None)
        return tuple(grads)

    return make_node(out, parents, bw, "conv2d")


def maxpool2d(x: Tensor, k: int = 2, axes: tuple[int, int] = (2, 3)) -> Tensor:
    """Non-overlapping k x k max pooling over two adjacent ``axes``.

    The default pools H, W of (B,C,H,W); use ``axes=(1, 2)`` for (B,H,W,C).
    Ties route the gradient to the first cell.
    """
    a0, a1 = axes[0] % x.ndim, axes[1] % x.ndim
    if a1 != a0 + 1:
        raise ValueError("pooling axes must be adjacent")
    shp = x.shape
    h, w = shp[a0], shp[a1]
    if h % k or w % k:
        raise ValueError(f"spatial dims {h}x{w} not divisible by {k}")
    pre, post = shp[:a0], shp[a1 + 1:]
    split = pre + (h // k, k, w // k, k) + post
    # move the two window axes to the end
    n = len(pre)
    order = tuple(range(n)) + (n, n + 2) + tuple(range(n + 4, len(split))) + (n + 1, n + 3)
    blocks = x.data.reshape(split).transpose(order)
    bshape = blocks.shape
    blocks = blocks.reshape(bshape[:-2] + (k * k,))
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def bw(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gb = gb.reshape(bshape).transpose(np.argsort(order))
        return (np.ascontiguousarray(gb).reshape(shp),)

    return make_node(np.ascontiguousarray(out), (x,), bw, "maxpool2d")


def _up2(a, axis):
    # align_corners=False, factor 2: out[2i] = .75 a[i] + .25 a[i-1], out[2i+1] = .75 a[i] + .25 a[i+1]
    n = a.shape[axis]
    prev = np.take(a, np.r_[0, np.arange(n - 1)], axis=axis)
    nxt = np.take(a, np.r_[np.arange(1, n), n - 1], axis=axis)
    even = 0.75 * a + 0.25 * prev
    odd = 0.75 * a + 0.25 * nxt
    out = np.stack([even, odd], axis=axis + 1)
    shape = list(a.shape)
    shape[axis] = 2 * n
    return out.reshape(shape).astype(a.dtype, copy=False)


def _up2_adj(g, axis):
    n = g.shape[axis] // 2
    shape = list(g.shape)
    shape[axis:axis + 1] = [n, 2]
    g = g.reshape(shape)
    even = np.take(g, 0, axis=axis + 1)
    odd = np.take(g, 1, axis=axis + 1)
    out = 0.75 * (even + odd)
    # even outputs pull 0.25 from a[i-1] (clamped at 0)
    tgt = [slice(None)] * out.ndim
    src = [slice(None)] * out.ndim
    tgt[axis], src[axis] = slice(0, n - 1), slice(1, n)
    out[tuple(tgt)] += 0.25 * even[tuple(src)]
    first = [slice(None)] * out.ndim
    first[axis] = slice(0, 1)
    out[tuple(first)] += 0.25 * even[tuple(first)]
    # odd outputs pull 0.25 from a[i+1] (clamped at n-1)
    tgt[axis], src[axis] = slice(1, n), slice(0, n - 1)
    out[tuple(tgt)] += 0.25 * odd[tuple(src)]
    last = [slice(None)] * out.ndim
    last[axis] = slice(n - 1, n)
    out[tuple(last)] += 0.25 * odd[tuple(last)]
    return out.astype(g.dtype, copy=False)


def upsample_bilinear(x: Tensor, scale: int = 2, axes: tuple[int, int] = (2, 3)) -> Tensor:
    """Bilinear x2 upsampling over ``axes`` with half-pixel (align_corners=False) centers.

    The default resamples H, W of (B,C,H,W); use ``axes=(1, 2)`` for (B,H,W,C).
    """
    if scale != 2:
        raise ValueError("only scale=2 is supported")
    a0, a1 = axes[0] % x.ndim, axes[1] % x.ndim
    out = _up2(_up2(x.data, a0), a1)
    return make_node(np.ascontiguousarray(out), (x,),
                     lambda g: (np.ascontiguousarray(_up2_adj(_up2_adj(g, a1), a0)),),
                     "upsample_bilinear")


def to_complex(a: np.ndarray) -> np.ndarray:
    """(..., 2) real array -> complex array (copy)."""
    ctype = np.complex64 if a.dtype == np.float32 else np.complex128
    return np.ascontiguousarray(a).view(ctype)[..., 0]


def from_complex(z: np.ndarray) -> np.ndarray:
    z = np.ascontiguousarray(z)
    rtype = np.float32 if z.dtype == np.complex64 else np.float64
    return z.view(rtype).reshape(z.shape + (2,))


def fft_1d(x: Tensor, inverse: bool = False, axis: int = -2) -> Tensor:
    """Orthonormal DFT over ``axis`` of a (..., 2) complex-as-real tensor."""
    if x.shape[-1] != 2:
        raise ValueError("trailing axis must hold (real, imag)")
    if axis in (-1, x.ndim - 1):
        raise ValueError("cannot transform the (real, imag) axis")
    caxis = axis if axis >= 0 else axis + 1  # index once the trailing 2 is dropped
    n = x.shape[axis]
    if n < 1 or n & (n - 1):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    fwd = np.fft.ifft if inverse else np.fft.fft
    adj = np.fft.fft if inverse else np.fft.ifft

    def run(fn, a):
        z = fn(to_complex(a), axis=caxis, norm="ortho")
        return from_complex(z.astype(np.complex64 if a.dtype == np.float32 else np.complex128,
                                     copy=False))

    return make_node(run(fwd, x.data), (x,), lambda g: (run(adj, g),), "fft_1d")


def complex_mul(a: Tensor, b: Tensor) -> Tensor:
    """Pointwise complex product of two (..., 2) tensors, built from primitive ops."""
    from .tensor import concat, mul, sub, add
    ar, ai = a[..., 0:1], a[..., 1:2]
    br, bi = b[..., 0:1], b[..., 1:2]
    return concat([sub(mul(ar, br), mul(ai, bi)), add(mul(ar, bi), mul(ai, br))], axis=-1)
