"""Data-consistency step: CG on (A^H A + lam I) x = A^H y + lam x_cnn.

The iterations are written with autodiff ops, so when the inputs require
gradients the whole unrolled solve is recorded and backpropagated exactly.
Under :func:`radcine.autodiff.no_grad` the same code runs as a plain solver.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, as_tensor, add, sub, mul, div, vdot, no_grad, from_complex, to_complex
from .encoding import EncodingOp


class NumericalError(FloatingPointError):
    """Raised when a solve produces NaN/Inf (usually ill-conditioning)."""


@dataclass
class CgConfig:
    n_cg: int = 8
    tol: float | None = None
    record_residuals: bool = False
    use_density: bool = False   # b = A^H W y instead of A^H y

    def __post_init__(self):
        if self.n_cg < 1:
            raise ValueError("n_cg must be >= 1")
        if self.tol is not None and self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class CgResult:
    x: Tensor
    iterations: int
    residuals: list = field(default_factory=list)   # ||r_k|| / ||b|| for k = 0..iterations


def cg(apply_h, b: Tensor, x0: Tensor, n_iter: int, tol: float | None = None,
       record: bool = False, callback=None) -> CgResult:
    """Conjugate gradients for a self-adjoint positive operator given as a tensor map.

    ``callback(k, x_k)`` is called for every iterate including ``x_0``.
    """
    x = x0
    r = sub(b, apply_h(x0))
    p = r
    rs = vdot(r, r)
    bnorm = math.sqrt(float(np.vdot(b.data.ravel(), b.data.ravel()).real)) or 1.0
    residuals = [math.sqrt(max(rs.item(), 0.0)) / bnorm] if record or tol else []
    done = 0
    if callback is not None:
        callback(0, x)
    for _ in range(n_iter):
        if rs.item() == 0.0:
            break
        hp = apply_h(p)
        alpha = div(rs, vdot(p, hp))
        x = add(x, mul(alpha, p))
        r = sub(r, mul(alpha, hp))
        rs_new = vdot(r, r)
        done += 1
        if not np.isfinite(rs_new.data):
            raise NumericalError(f"CG produced a non-finite residual at iteration {done}")
        rel = math.sqrt(max(rs_new.item(), 0.0)) / bnorm
        if record or tol:
            residuals.append(rel)
        if callback is not None:
            callback(done, x)
        if tol is not None and rel <= tol:
            break
        p = add(r, mul(div(rs_new, rs), p))
        rs = rs_new
    if not x.is_finite():
        raise NumericalError("CG produced a non-finite iterate")
    return CgResult(x=x, iterations=done, residuals=residuals)


def make_h(op: EncodingOp, lam: Tensor):
    def apply_h(v: Tensor) -> Tensor:
        return add(op.normal_tensor(v), mul(lam, v))
    return apply_h


def solve_dc(op: EncodingOp, x_cnn: Tensor, ah_y: Tensor, lam, cfg: CgConfig,
             callback=None) -> CgResult:
    """Minimise ||A x - y||^2 + lam ||x - x_cnn||^2 with ``cfg.n_cg`` CG steps from x_cnn.

    ``x_cnn`` and ``ah_y`` are (n_x, n_y, n_t, 2) tensors; ``lam`` a float or
    scalar tensor (keeps the graph to a trainable regularisation weight).
    """
    lam = as_tensor(lam, like=x_cnn)
    if lam.data.size != 1 or not lam.data.reshape(-1)[0] > 0:
        raise ValueError("lambda must be a positive scalar")
    if x_cnn.shape != ah_y.shape or x_cnn.shape[:3] != op.image_shape:
        raise ValueError("x_cnn / ah_y shapes do not match the operator")
    lam = lam.reshape(())
    b = add(ah_y, mul(lam, x_cnn))
    return cg(make_h(op, lam), b, x_cnn, cfg.n_cg, cfg.tol, cfg.record_residuals, callback)


def rhs_data(op: EncodingOp, y: np.ndarray, use_density: bool = False) -> Tensor:
    """A^H y (or A^H W y) as a constant tensor; it does not change across unrolled blocks."""
    img = op.A_sharp(y) if use_density else op.AH(y)
    return Tensor(from_complex(img))


def solve_dc_numpy(op: EncodingOp, x_cnn: np.ndarray, ah_y: np.ndarray, lam: float,
                   cfg: CgConfig, callback=None) -> tuple[np.ndarray, CgResult]:
    """Convenience wrapper over complex arrays without graph recording."""
    with no_grad():
        res = solve_dc(op, Tensor(from_complex(x_cnn)), Tensor(from_complex(ah_y)), lam, cfg,
                       callback)
    return to_complex(res.x.data), res


def write_residuals_csv(path, residuals) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "rel_residual"])
        for i, r in enumerate(residuals):
            w.writerow([i, f"{r:.9e}"])
