"""Gridding NUFFT with a Kaiser-Bessel kernel.

Conventions: images are indexed by centred pixel positions
``r = i - n // 2`` and sample coordinates are angular frequencies in
[-pi, pi).  ``forward`` evaluates ``sum_r x(r) exp(-i k.r) / sqrt(n_x n_y)``
and ``adjoint`` is its exact conjugate transpose.

The interpolation / spreading loops run in a compiled extension when it is
importable; otherwise a vectorised numpy version is used.  Set
``RADCINE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _gridding_py

try:
    from . import _gridding as _compiled
except ImportError:  # extension not built
    _compiled = None

from .plan import (NufftPlan, make_plan, forward, adjoint, beatty_beta,
                   kb_kernel, kb_fourier)

_BACKENDS = {"python": _gridding_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_active = "compiled" if _compiled is not None and not os.environ.get("RADCINE_PURE_PYTHON") \
    else "python"
_threads = 1


def available_backends():
    return sorted(_BACKENDS)


def get_backend():
    return _active


def set_backend(name):
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _active = name


def set_num_threads(n):
    global _threads
    _threads = max(int(n), 1)


def get_num_threads():
    return _threads


def kernels(name=None):
    return _BACKENDS[name or _active]


__all__ = ["NufftPlan", "make_plan", "forward", "adjoint", "beatty_beta", "kb_kernel",
           "kb_fourier", "available_backends", "get_backend", "set_backend",
           "set_num_threads", "get_num_threads", "kernels"]
