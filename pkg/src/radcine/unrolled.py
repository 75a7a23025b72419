"""Unrolled reconstruction: M alternating CNN and data-consistency blocks sharing one Θ."""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor, from_complex, no_grad, to_complex
from .cnn_block import ParamSet, block_forward
from .dc_cg import CgConfig, rhs_data, solve_dc
from .encoding import EncodingOp


def lambda_of(params: ParamSet) -> float:
    """Regularisation weight softplus(lambda_raw), always > 0."""
    with no_grad():
        return float(params.lam().item())


def initial_image(op: EncodingOp, y: np.ndarray) -> Tensor:
    """x_0 = A# y as a constant tensor."""
    return Tensor(from_complex(op.A_sharp(y)))


def reconstruct_tensor(op: EncodingOp, x0: Tensor, ah_y: Tensor, params: ParamSet, M: int,
                       cfg: CgConfig, cnn=None) -> Tensor:
    """Differentiable unrolled chain starting at ``x0`` with precomputed ``A^H y``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    lam = params.lam()
    x = x0
    for _ in range(M):
        x = solve_dc(op, block_forward(x, params, cnn), ah_y, lam, cfg).x
    return x


def reconstruct(op: EncodingOp, y: np.ndarray, params: ParamSet, M: int = 1,
                cfg: CgConfig = CgConfig(), cnn=None) -> np.ndarray:
    """Inference: complex (n_x, n_y, n_t) cine from k-space ``y``; no graph is kept."""
    with no_grad():
        ah_y = rhs_data(op, y, cfg.use_density)
        x = reconstruct_tensor(op, initial_image(op, y), ah_y, params, M, cfg, cnn)
    return to_complex(x.data)
