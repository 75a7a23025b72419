"""Timing and memory of one forward+backward pass through the data-consistency block.

The CNN block is fixed to the identity, so the numbers isolate the cost of the
unrolled CG solve as a function of image size, spokes per frame and ``n_cg``.
A second sweep times the NUFFT gridding kernels per backend (compiled vs numpy).
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nufft
from .autodiff import Tensor, from_complex, track_allocations, vdot
from .cnn_block import UNetConfig, block_forward, init_params
from .dc_cg import CgConfig, solve_dc
from .encoding import make_encoding_op
from .simulation import make_coil_maps
from .trajectory import golden_angle_trajectory

log = logging.getLogger(__name__)

CSV_FIELDS = ["size", "n_theta", "n_cg", "time_ms_mean", "time_ms_std", "alloc_mb"]


@dataclass
class BenchRow:
    size: int
    n_theta: int
    n_cg: int
    times_ms: list = field(default_factory=list)
    alloc_mb: float = float("nan")
    error: str = ""

    @property
    def time_ms_mean(self) -> float:
        return float(np.mean(self.times_ms)) if self.times_ms else float("nan")

    @property
    def time_ms_std(self) -> float:
        return float(np.std(self.times_ms)) if self.times_ms else float("nan")


def _identity(b):
    return b


def _problem(size: int, n_theta: int, n_t: int, n_c: int, seed: int):
    op = make_encoding_op(golden_angle_trajectory(size, n_t, n_theta),
                          make_coil_maps(size, size, n_c, seed=seed))
    rng = np.random.default_rng(seed)
    x = (rng.standard_normal(op.image_shape) + 1j * rng.standard_normal(op.image_shape))
    y = op.A(x.astype(np.complex64))
    return op, Tensor(from_complex(x.astype(np.complex64))), Tensor(from_complex(op.AH(y)))


def time_dc_pass(op, x: Tensor, ah_y: Tensor, n_cg: int, params) -> tuple[float, float]:
    """Seconds and peak tracked MB for one forward+backward through CNN(=Id) + DC."""
    params.zero_grad()
    with track_allocations() as tr:
        t0 = time.perf_counter()
        xin = Tensor(x.data, requires_grad=True)
        out = solve_dc(op, block_forward(xin, params, cnn=_identity), ah_y, params.lam(),
                       CgConfig(n_cg=n_cg)).x
        vdot(out, out).backward()
        dt = time.perf_counter() - t0
    return dt, tr.peak / 2 ** 20


def bench_sweep(sizes=(32, 64, 96), n_theta_list=(8, 16), n_cg_list=(1, 2, 4, 8, 12),
                reps: int = 3, n_t: int = 8, n_c: int = 4, seed: int = 0) -> list[BenchRow]:
    """Time every (size, n_theta, n_cg) configuration ``reps`` times after a warm-up pass.

    Failures (for example MemoryError) are recorded on the row and the sweep continues.
    """
    if reps < 3:
        raise ValueError("reps must be >= 3")
    params = init_params(UNetConfig(n_f=1, stages=1, convs_per_stage=1))
    params.requires_grad_(False, True)
    rows = []
    for size in sizes:
        for n_theta in n_theta_list:
            try:
                op, x, ah_y = _problem(size, n_theta, n_t, n_c, seed)
            except MemoryError as exc:
                rows += [BenchRow(size, n_theta, k, error=repr(exc)) for k in n_cg_list]
                continue
            for n_cg in n_cg_list:
                row = BenchRow(size, n_theta, n_cg)
                try:
                    time_dc_pass(op, x, ah_y, n_cg, params)       # warm-up, discarded
                    for _ in range(reps):
                        dt, mb = time_dc_pass(op, x, ah_y, n_cg, params)
                        row.times_ms.append(1e3 * dt)
                    row.alloc_mb = mb
                except MemoryError as exc:
                    row.error = repr(exc)
                log.info("size %d n_theta %d n_cg %d: %.1f +- %.1f ms, %.1f MB", size, n_theta,
                         n_cg, row.time_ms_mean, row.time_ms_std, row.alloc_mb)
                rows.append(row)
    return rows


def write_csv(path, rows: list[BenchRow], config: dict | None = None) -> None:
    """CSV table plus a ``.json`` sidecar with the raw samples and sweep config."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in rows:
            w.writerow([r.size, r.n_theta, r.n_cg, f"{r.time_ms_mean:.3f}",
                        f"{r.time_ms_std:.3f}", f"{r.alloc_mb:.3f}"])
    sidecar = {"config": config or {}, "rows": [asdict(r) for r in rows]}
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2)


def linear_fit_r2(x, y) -> tuple[float, float, float]:
    """Least-squares line ``y = a + b x``; returns (a, b, R^2)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    b, a = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (a + b * x)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return float(a), float(b), 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def check_trends(rows: list[BenchRow]) -> dict:
    """Monotonicity and linearity in n_cg per (size, n_theta), growth in n_theta per (size, n_cg)."""
    ok = [r for r in rows if not r.error]
    out = {"ncg_monotone": True, "ncg_r2_min": 1.0, "theta_increasing": True}
    for size in sorted({r.size for r in ok}):
        for th in sorted({r.n_theta for r in ok}):
            grp = sorted((r for r in ok if r.size == size and r.n_theta == th),
                         key=lambda r: r.n_cg)
            if len(grp) < 2:
                continue
            t = [r.time_ms_mean for r in grp]
            out["ncg_monotone"] &= bool(np.all(np.diff(t) > 0))
            out["ncg_r2_min"] = min(out["ncg_r2_min"], linear_fit_r2([r.n_cg for r in grp], t)[2])
        for k in sorted({r.n_cg for r in ok}):
            grp = sorted((r for r in ok if r.size == size and r.n_cg == k),
                         key=lambda r: r.n_theta)
            t = [r.time_ms_mean for r in grp]
            out["theta_increasing"] &= bool(np.all(np.diff(t) > 0))
    return out


# -- gridding kernels ----------------------------------------------------------

def bench_kernels(sizes=(32, 64, 128), n_theta: int = 16, n_t: int = 8, reps: int = 3,
                  backends=None) -> list[dict]:
    """Forward+adjoint NUFFT time for each available gridding backend."""
    backends = backends or nufft.available_backends()
    rows = []
    for size in sizes:
        traj = golden_angle_trajectory(size, n_t, n_theta)
        plan = nufft.make_plan(size, size, traj.coords)
        rng = np.random.default_rng(0)
        x = (rng.standard_normal((n_t, size, size)) + 1j
             * rng.standard_normal((n_t, size, size))).astype(np.complex64)
        for name in backends:
            nufft.adjoint(plan, nufft.forward(plan, x, name), name)      # warm-up
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                nufft.adjoint(plan, nufft.forward(plan, x, name), name)
                times.append(1e3 * (time.perf_counter() - t0))
            rows.append({"backend": name, "size": size, "n_theta": n_theta, "n_t": n_t,
                         "time_ms_mean": float(np.mean(times)),
                         "time_ms_std": float(np.std(times))})
    return rows
