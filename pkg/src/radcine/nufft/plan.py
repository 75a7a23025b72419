from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.special import i0

TABLE_SIZE = 1024
APOD_FLOOR = 1e-8


def beatty_beta(width: int, osf: float) -> float:
    """Kaiser-Bessel shape parameter of Beatty et al. for kernel width and oversampling."""
    return float(np.pi * np.sqrt((width / osf) ** 2 * (osf - 0.5) ** 2 - 0.8))


def kb_kernel(d, width: int, beta: float):
    """Kaiser-Bessel kernel on [-width/2, width/2], normalised to 1 at the centre."""
    d = np.asarray(d, dtype=np.float64)
    arg = 1.0 - (2.0 * d / width) ** 2
    out = i0(beta * np.sqrt(np.clip(arg, 0.0, None))) / i0(beta)
    return np.where(np.abs(d) <= width / 2, out, 0.0)


def kb_fourier(f, width: int, beta: float):
    """Continuous Fourier transform of :func:`kb_kernel` at frequency ``f`` (cycles / grid step)."""
    z2 = beta ** 2 - (np.pi * width * np.asarray(f, dtype=np.float64)) ** 2
    z = np.sqrt(np.abs(z2))
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.where(z2 > 0, np.sinh(z) / z, np.sin(z) / z)
    val = np.where(z < 1e-12, 1.0, val)
    return width * val / i0(beta)


@dataclass(frozen=True, eq=False)
class NufftPlan:
    grid: tuple[int, int]
    osf: float
    kernel_width: int
    kb_beta: float
    kernel_table: np.ndarray
    apodization: np.ndarray
    coords: np.ndarray
    os_grid: tuple[int, int]
    frames: tuple[int, ...]
    scaled_coords: np.ndarray = field(repr=False)
    norm: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_samples(self) -> int:
        return self.coords.shape[-2]


def _oversampled(n: int, osf: float) -> int:
    k = osf * n
    if abs(k - round(k)) > 1e-9 or round(k) % 2:
        raise ValueError(f"osf * n = {k} must be an even integer")
    return int(round(k))


def make_plan(n_x: int, n_y: int, coords, osf: float = 2.0, kernel_width: int = 4) -> NufftPlan:
    """Precompute kernel table, deapodisation and scaled coordinates.

    ``coords`` has shape (..., M, 2); leading axes are frames that share the
    image grid but sample different points (one plan covers a whole cine).
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim < 2 or coords.shape[-1] != 2:
        raise ValueError("coords must have shape (..., M, 2)")
    if not np.all(np.isfinite(coords)) or np.abs(coords).max(initial=0.0) > np.pi + 1e-9:
        raise ValueError("coords must lie within [-pi, pi]")
    if kernel_width < 1 or kernel_width > 16:
        raise ValueError("kernel_width must be in [1, 16]")
    k1, k2 = _oversampled(n_x, osf), _oversampled(n_y, osf)
    beta = beatty_beta(kernel_width, osf)
    table = kb_kernel(np.linspace(0.0, kernel_width / 2, TABLE_SIZE), kernel_width, beta)

    rx = np.arange(n_x) - n_x // 2
    ry = np.arange(n_y) - n_y // 2
    apod = np.outer(kb_fourier(rx / k1, kernel_width, beta), kb_fourier(ry / k2, kernel_width, beta))
    apod = np.maximum(apod, APOD_FLOOR)

    frames = coords.shape[:-2]
    flat = coords.reshape(-1, coords.shape[-2], 2)
    scaled = np.empty_like(flat)
    scaled[..., 0] = flat[..., 0] * k1 / (2 * np.pi)
    scaled[..., 1] = flat[..., 1] * k2 / (2 * np.pi)
    for a in (coords, table, apod, scaled):
        a.setflags(write=False)
    return NufftPlan(grid=(n_x, n_y), osf=float(osf), kernel_width=int(kernel_width),
                     kb_beta=beta, kernel_table=table, apodization=apod, coords=coords,
                     os_grid=(k1, k2), frames=frames, scaled_coords=np.ascontiguousarray(scaled),
                     norm=1.0 / np.sqrt(n_x * n_y))


def _split(n, k):
    # image index i holds pixel r = i - n//2, stored at grid index r mod k
    h = n // 2
    return (slice(h, n), slice(0, n - h)), (slice(0, h), slice(k - h, k))


def _pad(x, plan):
    n_x, n_y = plan.grid
    k1, k2 = plan.os_grid
    g = np.zeros(x.shape[:-2] + (k1, k2), dtype=x.dtype)
    for sx_img, sx_grid in _split(n_x, k1):
        for sy_img, sy_grid in _split(n_y, k2):
            g[..., sx_grid, sy_grid] = x[..., sx_img, sy_img]
    return g


def _crop(g, plan):
    n_x, n_y = plan.grid
    k1, k2 = plan.os_grid
    x = np.empty(g.shape[:-2] + (n_x, n_y), dtype=g.dtype)
    for sx_img, sx_grid in _split(n_x, k1):
        for sy_img, sy_grid in _split(n_y, k2):
            x[..., sx_img, sy_img] = g[..., sx_grid, sy_grid]
    return x


def _inv_apod(plan, ctype):
    # deapodisation and the 1/sqrt(n_x n_y) scaling folded into one real factor
    rtype = np.float32 if ctype == np.complex64 else np.float64
    key = np.dtype(rtype).name
    cache = plan._cache
    if key not in cache:
        cache[key] = (plan.norm / plan.apodization).astype(rtype)
    return cache[key]


def _ctype(a):
    return np.complex64 if a.dtype in (np.complex64, np.float32) else np.complex128


def forward(plan: NufftPlan, image, backend=None) -> np.ndarray:
    """Image(s) (..., *frames, n_x, n_y) -> samples (..., *frames, M)."""
    from . import kernels, get_num_threads
    image = np.asarray(image)
    nf = len(plan.frames)
    if image.shape[image.ndim - 2:] != plan.grid or image.shape[image.ndim - 2 - nf:image.ndim - 2] != plan.frames:
        raise ValueError(f"image shape {image.shape} does not match plan "
                         f"frames {plan.frames} and grid {plan.grid}")
    ctype = _ctype(image)
    lead = image.shape[:image.ndim - 2 - nf]
    t = plan.scaled_coords.shape[0]
    x = (image * _inv_apod(plan, ctype)).astype(ctype, copy=False).reshape((-1, t) + plan.grid)
    g = sfft.fft2(_pad(x, plan), axes=(-2, -1), overwrite_x=True)
    out = np.empty(x.shape[:2] + (plan.n_samples,), dtype=ctype)
    kernels(backend).interp(np.ascontiguousarray(g, dtype=ctype), plan.scaled_coords,
                            plan.kernel_table, plan.kernel_width, out, get_num_threads())
    return out.reshape(lead + plan.frames + (plan.n_samples,))


def adjoint(plan: NufftPlan, samples, backend=None) -> np.ndarray:
    """Samples (..., *frames, M) -> image(s) (..., *frames, n_x, n_y)."""
    from . import kernels, get_num_threads
    samples = np.asarray(samples)
    nf = len(plan.frames)
    if samples.shape[samples.ndim - 1 - nf:] != plan.frames + (plan.n_samples,):
        raise ValueError(f"sample shape {samples.shape} does not match plan "
                         f"frames {plan.frames} with {plan.n_samples} points")
    ctype = _ctype(samples)
    lead = samples.shape[:samples.ndim - 1 - nf]
    t = plan.scaled_coords.shape[0]
    s = np.ascontiguousarray(samples, dtype=ctype).reshape(-1, t, plan.n_samples)
    g = np.zeros(s.shape[:2] + plan.os_grid, dtype=ctype)
    kernels(backend).spread(s, plan.scaled_coords, plan.kernel_table, plan.kernel_width, g,
                            get_num_threads())
    g = sfft.ifft2(g, axes=(-2, -1), norm="forward", overwrite_x=True)
    x = _crop(g, plan)
    x *= _inv_apod(plan, ctype)
    return x.reshape(lead + plan.frames + plan.grid)
