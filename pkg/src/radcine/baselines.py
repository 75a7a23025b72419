"""Non-learned reference reconstructions: iterative SENSE and smoothed-TV descent."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, from_complex, no_grad, to_complex
from .dc_cg import NumericalError, cg
from .encoding import EncodingOp


def it_sense(op: EncodingOp, y: np.ndarray, n_iter: int = 10, tol: float | None = None,
             callback=None) -> np.ndarray:
    """CG on A^H A x = A^H y from zero, stopped after ``n_iter`` steps (early stopping
    is the only regularisation)."""
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    with no_grad():
        b = Tensor(from_complex(op.AH(y)))
        x0 = Tensor(np.zeros_like(b.data))
        res = cg(op.normal_tensor, b, x0, n_iter, tol,
                 callback=None if callback is None else
                 (lambda k, x: callback(k, to_complex(x.data))))
    return to_complex(res.x.data)


# -- smoothed total variation --------------------------------------------------

def _grad3(x: np.ndarray) -> np.ndarray:
    """Forward differences along x, y, t with a zero last row (Neumann boundary)."""
    d = np.zeros((3,) + x.shape, x.dtype)
    d[0, :-1] = x[1:] - x[:-1]
    d[1, :, :-1] = x[:, 1:] - x[:, :-1]
    d[2, :, :, :-1] = x[:, :, 1:] - x[:, :, :-1]
    return d


def _div3(d: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`_grad3`."""
    out = np.zeros(d.shape[1:], d.dtype)
    for ax in range(3):
        di = np.moveaxis(d[ax], ax, 0)
        o = np.moveaxis(out, ax, 0)
        o[:-1] += di[:-1]
        o[1:] -= di[:-1]
    return out


def tv_value(x: np.ndarray, eps: float) -> float:
    g = _grad3(x)
    return float(np.sqrt((np.abs(g) ** 2).sum(0) + eps ** 2).sum())


@dataclass
class TvResult:
    x: np.ndarray
    objective: list = field(default_factory=list)
    steps: list = field(default_factory=list)


def tv_reconstruct(op: EncodingOp, y: np.ndarray, lambda_tv: float = 0.01, n_iter: int = 50,
                   eps: float = 1e-6, x0: np.ndarray | None = None,
                   return_info: bool = False):
    """Minimise ||A x - y||^2 + lambda_tv * sum sqrt(|grad_{x,y,t} x|^2 + eps^2).

    Gradient descent with a Barzilai-Borwein trial step and Armijo backtracking,
    so the objective never increases. Starts from ``x0`` (default A# y).
    A generic stand-in for a TV reference method, not a tuned reproduction.
    """
    if lambda_tv <= 0 or eps <= 0:
        raise ValueError("lambda_tv and eps must be positive")
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    y = np.asarray(y, np.complex128)
    x = (op.A_sharp(y) if x0 is None else np.asarray(x0)).astype(np.complex128)

    def objective(v):
        r = op.A(v) - y
        return float(np.vdot(r, r).real) + lambda_tv * tv_value(v, eps), r

    def gradient(v, r):
        g = _grad3(v)
        mag = np.sqrt((np.abs(g) ** 2).sum(0) + eps ** 2)
        return 2 * op.AH(r) - lambda_tv * _div3(g / mag)

    f, r = objective(x)
    if not np.isfinite(f):
        raise NumericalError("non-finite TV objective at the starting point")
    grad = gradient(x, r)
    info = TvResult(x, [f], [])
    step = 1.0
    prev = None
    for _ in range(n_iter):
        gg = float(np.vdot(grad, grad).real)
        if gg == 0.0:
            break
        if prev is not None:
            s, dg = x - prev[0], grad - prev[1]
            sy = float(np.vdot(s, dg).real)
            if sy > 0:
                step = float(np.vdot(s, s).real) / sy
        while True:
            cand = x - step * grad
            f_new, r_new = objective(cand)
            if not np.isfinite(f_new):
                step *= 0.5
            elif f_new <= f - 1e-4 * step * gg:
                break
            else:
                step *= 0.5
            if step < 1e-30:
                raise NumericalError("TV line search failed to find a descent step")
        prev = (x, grad)
        x, f = cand, f_new
        grad = gradient(x, r_new)
        info.objective.append(f)
        info.steps.append(step)
        if not np.all(np.isfinite(x)):
            raise NumericalError("TV iterate diverged")
    info.x = x.astype(np.complex64)
    return info if return_info else info.x
