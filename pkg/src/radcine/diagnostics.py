"""Self-checks exposed on the command line: adjoint identity and end-to-end gradients."""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor, dtype_scope, from_complex, no_grad, sub, vdot
from .cnn_block import UNetConfig, init_params
from .dc_cg import CgConfig, rhs_data
from .encoding import EncodingOp, make_encoding_op
from .simulation import make_coil_maps
from .trajectory import golden_angle_trajectory
from .unrolled import reconstruct_tensor


def _crandn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def adjoint_test(op: EncodingOp, trials: int = 20, seed: int = 0) -> float:
    """Worst |<Ax, y> - <x, A^H y>| / (||Ax|| ||y||) over random complex pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        x = _crandn(rng, op.image_shape)
        y = _crandn(rng, op.kspace_shape)
        ax = op.A(x)
        err = abs(np.vdot(y, ax) - np.vdot(op.AH(y), x))
        worst = max(worst, err / (np.linalg.norm(ax) * np.linalg.norm(y)))
    return float(worst)


def gradcheck(n: int = 16, n_t: int = 8, n_c: int = 2, spokes: int = 4, M: int = 1,
              n_cg: int = 3, n_params: int = 10, eps: float = 1e-6, seed: int = 0,
              unet: UNetConfig = UNetConfig(n_f=4)) -> dict:
    """Central differences vs reverse mode for the end-to-end L2 loss in float64.

    Checks ``n_params`` randomly chosen U-Net weights plus ``lambda_raw``;
    returns the relative error ``||g_ad - g_fd|| / ||g_fd||`` and both vectors.
    """
    rng = np.random.default_rng(seed)
    with dtype_scope(np.float64):
        op = make_encoding_op(golden_angle_trajectory(n, n_t, spokes),
                              make_coil_maps(n, n, n_c, seed=seed).astype(np.complex128))
        params = init_params(unet, seed=seed, lambda_raw=-0.5).astype(np.float64)
        x_gt = _crandn(rng, op.image_shape)
        y = op.A(x_gt) + 0.05 * _crandn(rng, op.kspace_shape)
        x0 = Tensor(from_complex(op.A_sharp(y)))
        ah_y = rhs_data(op, y)
        target = Tensor(from_complex(x_gt))
        cfg = CgConfig(n_cg=n_cg)

        def loss():
            d = sub(reconstruct_tensor(op, x0, ah_y, params, M, cfg), target)
            return vdot(d, d)

        params.requires_grad_(True, True)
        loss().backward()
        names = sorted(params.weights)
        picks = [(names[i], int(rng.integers(params.weights[names[i]].size)))
                 for i in rng.choice(len(names), n_params, replace=len(names) < n_params)]
        picks.append(("lambda_raw", 0))
        tensors = params.tensors()
        ad = np.array([tensors[k].grad.ravel()[j] for k, j in picks])
        fd = np.empty(len(picks))
        with no_grad():
            for i, (k, j) in enumerate(picks):
                flat = tensors[k].data.reshape(-1)
                orig = flat[j]
                flat[j] = orig + eps
                up = loss().item()
                flat[j] = orig - eps
                down = loss().item()
                flat[j] = orig
                fd[i] = (up - down) / (2 * eps)
    rel = float(np.linalg.norm(ad - fd) / np.linalg.norm(fd))
    return {"rel_err": rel, "analytic": ad, "numeric": fd, "names": picks}
