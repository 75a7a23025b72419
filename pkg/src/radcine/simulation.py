"""Synthetic cine phantoms, coil maps and retrospective radial acquisitions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .encoding import EncodingOp, make_encoding_op, sos_normalize
from .trajectory import Trajectory

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class PhantomConfig:
    n_x: int = 64
    n_y: int = 64
    n_t: int = 16
    n_ellipses: int = 6
    heart_rate_cycles: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n_x, self.n_y, self.n_t) <= 0:
            raise ValueError("phantom dimensions must be positive")
        if self.n_t & (self.n_t - 1):
            raise ValueError("n_t must be a power of two")


def _soft_ellipse(xx, yy, cx, cy, a, b, angle, edge=0.75):
    c, s = math.cos(angle), math.sin(angle)
    u = ((xx - cx) * c + (yy - cy) * s) / a
    v = (-(xx - cx) * s + (yy - cy) * c) / b
    r = np.sqrt(u * u + v * v)
    # logistic edge about `edge` pixels wide keeps the phantom band-limited enough for gridding
    return 0.5 * (1 - np.tanh((r - 1) * min(a, b) / (2 * edge)))


def make_phantom(cfg: PhantomConfig) -> np.ndarray:
    """Complex (n_x, n_y, n_t) cine: static ellipses plus a pulsating 'ventricle'.

    Magnitude stays in [0, 1]; a smooth random phase ramp makes it genuinely complex.
    """
    rng = np.random.default_rng(cfg.seed)
    nx, ny, nt = cfg.n_x, cfg.n_y, cfg.n_t
    xx, yy = np.meshgrid(np.arange(nx) - nx / 2, np.arange(ny) - ny / 2, indexing="ij")
    half = min(nx, ny) / 2

    body_a, body_b = half * rng.uniform(0.72, 0.85), half * rng.uniform(0.6, 0.75)
    static = 0.35 * _soft_ellipse(xx, yy, 0, 0, body_a, body_b, rng.uniform(-0.3, 0.3))
    for _ in range(cfg.n_ellipses):
        a, b = half * rng.uniform(0.08, 0.3), half * rng.uniform(0.08, 0.3)
        cx, cy = rng.uniform(-0.45, 0.45) * half, rng.uniform(-0.4, 0.4) * half
        static = static + rng.uniform(-0.15, 0.3) * _soft_ellipse(xx, yy, cx, cy, a, b,
                                                                   rng.uniform(0, math.pi))
    static = np.clip(static, 0.0, 0.7)

    vx, vy = rng.uniform(-0.2, 0.2) * half, rng.uniform(-0.2, 0.2) * half
    va, vb = half * rng.uniform(0.18, 0.28), half * rng.uniform(0.15, 0.25)
    vang = rng.uniform(0, math.pi)
    amp = rng.uniform(0.15, 0.3)
    phase0 = rng.uniform(0, 2 * math.pi)
    t = np.arange(nt)
    scale = 1 + amp * np.sin(2 * math.pi * cfg.heart_rate_cycles * t / nt + phase0)
    cine = np.empty((nx, ny, nt), dtype=np.complex64)
    ramp = np.exp(1j * (rng.uniform(-0.04, 0.04) * xx + rng.uniform(-0.04, 0.04) * yy
                        + rng.uniform(0, 2 * math.pi)))
    for k in range(nt):
        heart = _soft_ellipse(xx, yy, vx, vy, va * scale[k], vb * scale[k], vang)
        mag = np.clip(static * (1 - heart) + 0.95 * heart, 0.0, 1.0)
        cine[..., k] = mag * ramp
    return cine


def make_coil_maps(n_x: int, n_y: int, n_c: int, seed: int = 0) -> np.ndarray:
    """Gaussian coil profiles around the FOV with smooth random phase, SOS-normalised."""
    if n_c < 1:
        raise ValueError("n_c must be >= 1")
    rng = np.random.default_rng(seed)
    xx, yy = np.meshgrid(np.arange(n_x) - n_x / 2, np.arange(n_y) - n_y / 2, indexing="ij")
    radius = 0.6 * max(n_x, n_y)
    width = 0.55 * max(n_x, n_y)
    maps = np.empty((n_c, n_x, n_y), dtype=np.complex128)
    for j in range(n_c):
        ang = 2 * math.pi * j / n_c + rng.uniform(-0.2, 0.2)
        cx, cy = radius * math.cos(ang), radius * math.sin(ang)
        mag = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * width ** 2))
        phase = rng.uniform(0, 2 * math.pi) + (rng.uniform(-1, 1) * xx + rng.uniform(-1, 1) * yy) \
            * math.pi / (2 * max(n_x, n_y))
        maps[j] = mag * np.exp(1j * phase)
    return sos_normalize(maps).astype(np.complex64)


def simulate_acquisition(x_gt: np.ndarray, op: EncodingOp, sigma: float = 0.02, seed: int = 0,
                         normalization: str = "global") -> tuple[np.ndarray, dict]:
    """Retrospective acquisition in normalised units plus complex Gaussian noise.

    ``normalization="global"`` divides ``A x`` by one factor ``s`` (the std of
    all noiseless samples), so ``y = A (x / s) + noise`` stays consistent with
    the coil model. ``"per_coil"`` centres each coil (subtracting its complex
    mean) and scales it to unit std; it is kept for protocol comparisons but
    the result is no longer in the range of ``A``.
    Noise has std ``sigma`` in both the real and the imaginary part.
    Returns ``(y, meta)``; ``meta`` holds the factors needed to undo the scaling.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    clean = op.A(np.asarray(x_gt, dtype=np.complex64)).astype(np.complex128)
    if normalization == "global":
        s = float(np.std(clean)) or 1.0
        y = clean / s
        meta = {"normalization": "global", "scale": s}
    elif normalization == "per_coil":
        axes = tuple(range(1, clean.ndim))
        mean = clean.mean(axis=axes, keepdims=True)
        std = clean.std(axis=axes, keepdims=True)
        std[std == 0] = 1.0
        y = (clean - mean) / std
        meta = {"normalization": "per_coil", "scale": float(np.std(clean)) or 1.0,
                "coil_mean": [[float(v.real), float(v.imag)] for v in mean.ravel()],
                "coil_std": [float(v) for v in std.ravel()]}
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    if sigma > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(y.shape + (2,)) * sigma
        y = y + noise[..., 0] + 1j * noise[..., 1]
    return y.astype(np.complex64), meta


@dataclass
class Sample:
    seed: int
    y: np.ndarray        # (n_c, n_t, m)
    x_i: np.ndarray      # A# y
    x_gt: np.ndarray     # ground truth in the same normalised units
    scale: float
    meta: dict = field(default_factory=dict)


@dataclass
class Dataset:
    op: EncodingOp
    splits: dict          # name -> list[Sample]
    sigma: float
    config: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.splits[name]


def sample_seed(base_seed: int, split: str, index: int) -> int:
    """Deterministic per-sample seed; splits occupy disjoint ranges."""
    return int(base_seed) * 1_000_003 + SPLITS.index(split) * 100_000 + index


def make_sample(cfg: PhantomConfig, op: EncodingOp, sigma: float, seed: int) -> Sample:
    rng = np.random.default_rng(seed)
    pc = replace(cfg, seed=seed, heart_rate_cycles=float(rng.uniform(0.8, 1.6)))
    x = make_phantom(pc)
    y, meta = simulate_acquisition(x, op, sigma, seed=seed + 7919)
    s = meta["scale"]
    x_gt = (x / np.float32(s)).astype(np.complex64)
    meta.update(heart_rate_cycles=pc.heart_rate_cycles, seed=seed)
    return Sample(seed=seed, y=y, x_i=op.A_sharp(y).astype(np.complex64), x_gt=x_gt, scale=s,
                  meta=meta)


def make_dataset(n_train: int = 20, n_val: int = 5, n_test: int = 5,
                 cfg: PhantomConfig = PhantomConfig(), traj: Trajectory | None = None,
                 maps: np.ndarray | None = None, sigma: float = 0.02,
                 op: EncodingOp | None = None) -> Dataset:
    """Train/val/test triples ``(y, x_I, x_gt)`` with seeds disjoint across splits."""
    if op is None:
        if traj is None or maps is None:
            raise ValueError("need either an EncodingOp or (traj, maps)")
        op = make_encoding_op(traj, maps, (cfg.n_x, cfg.n_y))
    counts = dict(zip(SPLITS, (n_train, n_val, n_test)))
    if max(counts.values()) >= 100_000:
        raise ValueError("split sizes overlap the per-split seed ranges")
    seeds = {s: [sample_seed(cfg.seed, s, i) for i in range(n)] for s, n in counts.items()}
    flat = [x for v in seeds.values() for x in v]
    if len(set(flat)) != len(flat):
        raise ValueError("overlapping sample seeds")
    splits = {s: [make_sample(cfg, op, sigma, sd) for sd in seeds[s]] for s in SPLITS}
    return Dataset(op=op, splits=splits, sigma=sigma,
                   config={"phantom": cfg.__dict__.copy(), "sigma": sigma, "counts": counts})
