import os

import numpy as np
import pytest

os.environ.setdefault("OMP_NUM_THREADS", "1")


def numeric_grad(fn, arr, eps=1e-3, idx=None):
    """Central finite differences of scalar ``fn()`` w.r.t. entries of ``arr`` (in place)."""
    flat = arr.reshape(-1)
    picks = range(flat.size) if idx is None else idx
    out = []
    for i in picks:
        old = flat[i]
        flat[i] = old + eps
        fp = float(fn())
        flat[i] = old - eps
        fm = float(fn())
        flat[i] = old
        out.append((fp - fm) / (2 * eps))
    return np.array(out)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if not (np.iscomplexobj(a) or np.iscomplexobj(b)):
        a, b = a.astype(np.float64), b.astype(np.float64)
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-30)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape, dtype=np.complex128):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)).astype(dtype)


@pytest.fixture(scope="session")
def desk_op():
    """64x64x12 cine, 4 coils, 8 golden-angle spokes per frame."""
    from radcine.encoding import make_encoding_op
    from radcine.simulation import make_coil_maps
    from radcine.trajectory import golden_angle_trajectory
    traj = golden_angle_trajectory(64, 12, 8)
    return make_encoding_op(traj, make_coil_maps(64, 64, 4, seed=3))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
