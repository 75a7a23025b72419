"""Dynamic multi-coil radial encoding operator.

Array layouts (complex):

* cine image   ``(n_x, n_y, n_t)``
* coil maps    ``(n_c, n_x, n_y)``, sum of squared magnitudes == 1 per pixel
* k-space data ``(n_c, n_t, m)`` with ``m = spokes_per_frame * samples_per_spoke``

The autodiff bridges (``*_tensor``) take and return ``(n_x, n_y, n_t, 2)``
real tensors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nufft
from .autodiff import Tensor, linear_op, to_complex, from_complex
from .dcomp import DensityWeights, ramp_density
from .trajectory import Trajectory

SOS_TOL = 1e-5


@dataclass(frozen=True, eq=False)
class CoilMaps:
    maps: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.maps)
        if m.ndim != 3 or not np.iscomplexobj(m):
            raise ValueError("coil maps must be a complex (n_c, n_x, n_y) array")
        sos = np.sum(np.abs(m.astype(np.complex128)) ** 2, axis=0)
        if np.abs(sos - 1).max() > SOS_TOL:
            raise ValueError("coil maps are not SOS-normalised")

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]


def sos_normalize(maps: np.ndarray) -> np.ndarray:
    maps = np.asarray(maps, dtype=np.complex128)
    sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return maps / np.maximum(sos, 1e-12)


@dataclass(frozen=True, eq=False)
class EncodingOp:
    traj: Trajectory
    density: DensityWeights
    coils: CoilMaps
    plan: nufft.NufftPlan
    _cast: dict = field(default_factory=dict, repr=False)

    # -- shapes ------------------------------------------------------------
    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.plan.grid + (self.traj.n_frames,)

    @property
    def kspace_shape(self) -> tuple[int, int, int]:
        return (self.coils.n_coils, self.traj.n_frames, self.traj.samples_per_frame)

    def _maps(self, dtype):
        key = np.dtype(dtype).name
        if key not in self._cast:
            self._cast[key] = np.asarray(self.coils.maps, dtype=dtype)
        return self._cast[key]

    def _weights(self, dtype):
        key = "w" + np.dtype(dtype).name
        if key not in self._cast:
            rtype = np.float32 if dtype == np.complex64 else np.float64
            self._cast[key] = self.density.weights.astype(rtype)
        return self._cast[key]

    # -- operators ------------------------------------------------------------
    def A(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != self.image_shape:
            raise ValueError(f"image shape {x.shape} != {self.image_shape}")
        ctype = np.complex64 if x.dtype in (np.complex64, np.float32) else np.complex128
        xt = np.moveaxis(x, 2, 0).astype(ctype, copy=False)          # (T, nx, ny)
        coil_imgs = self._maps(ctype)[:, None] * xt[None]            # (C, T, nx, ny)
        return nufft.forward(self.plan, coil_imgs)

    def AH(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        if y.shape != self.kspace_shape:
            raise ValueError(f"k-space shape {y.shape} != {self.kspace_shape}")
        ctype = np.complex64 if y.dtype == np.complex64 else np.complex128
        imgs = nufft.adjoint(self.plan, y.astype(ctype, copy=False))     # (C, T, nx, ny)
        x = np.sum(np.conj(self._maps(ctype))[:, None] * imgs, axis=0)   # fixed coil order
        return np.ascontiguousarray(np.moveaxis(x, 0, 2))

    def A_sharp(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        ctype = np.complex64 if y.dtype == np.complex64 else np.complex128
        return self.AH(y * self._weights(ctype)[None])

    def normal(self, x: np.ndarray) -> np.ndarray:
        return self.AH(self.A(x))

    def H(self, x: np.ndarray, lam: float) -> np.ndarray:
        if lam < 0:
            raise ValueError("lambda must be non-negative")
        return self.normal(x) + np.asarray(lam, dtype=np.real(x).dtype) * x

    # -- autodiff bridges -------------------------------------------------------
    def normal_tensor(self, x: Tensor) -> Tensor:
        """A^H A on a (n_x, n_y, n_t, 2) tensor; self-adjoint, so backward reuses it."""
        fn = lambda d: from_complex(self.normal(to_complex(d)))  # noqa: E731
        return linear_op(x, fn, fn, "AHA")

    def A_tensor(self, x: Tensor) -> Tensor:
        return linear_op(x, lambda d: from_complex(self.A(to_complex(d))),
                         lambda g: from_complex(self.AH(to_complex(g))), "A")

    def AH_tensor(self, y: Tensor) -> Tensor:
        return linear_op(y, lambda d: from_complex(self.AH(to_complex(d))),
                         lambda g: from_complex(self.A(to_complex(g))), "AH")


def make_encoding_op(traj: Trajectory, coil_maps, image_shape: tuple[int, int] | None = None,
                     density: DensityWeights | None = None, osf: float = 2.0,
                     kernel_width: int = 4) -> EncodingOp:
    coils = coil_maps if isinstance(coil_maps, CoilMaps) else CoilMaps(np.asarray(coil_maps))
    n_x, n_y = image_shape if image_shape is not None else coils.maps.shape[1:]
    if coils.maps.shape[1:] != (n_x, n_y):
        raise ValueError("coil map grid does not match the image grid")
    if density is None:
        density = ramp_density(traj, (n_x, n_y))
    if density.weights.shape != traj.coords.shape[:2]:
        raise ValueError("density weights do not match the trajectory layout")
    plan = nufft.make_plan(n_x, n_y, traj.coords, osf, kernel_width)
    return EncodingOp(traj=traj, density=density, coils=coils, plan=plan)


def apply_A(op: EncodingOp, x):
    return op.A(x)


def apply_AH(op: EncodingOp, y):
    return op.AH(y)


def apply_A_sharp(op: EncodingOp, y):
    return op.A_sharp(y)


def apply_H(op: EncodingOp, x, lam: float):
    return op.H(x, lam)
