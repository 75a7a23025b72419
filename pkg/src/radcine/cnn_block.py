"""Spatio-temporal CNN regulariser: a shared 2D U-Net applied to xt and yt slices.

A cine ``x`` of shape (n_x, n_y, n_t, 2) is processed as

    mu  = temporal mean of x
    z   = F_t (x - mu)                      (orthonormal temporal DFT)
    z'  = 1/2 (R_xt^T c(R_xt z) + R_yt^T c(R_yt z))
    out = F_t^H z' + mu

where ``R_xt`` cuts z into n_y slices of shape (2, n_x, n_t), ``R_yt`` into
n_x slices of shape (2, n_y, n_t), and ``c`` is one U-Net used for both.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import (Tensor, add, concat, conv2d, fft_1d, leaky_relu, load_weights, maxpool2d,
                       mean, permute, save_weights, scale, softplus, sub, upsample_bilinear)

log = logging.getLogger(__name__)

PAPER_PARAM_COUNT = 93_617

# (n_x, n_y, n_t, 2) <-> slice batches
_XT = (1, 3, 0, 2)        # -> (n_y, 2, n_x, n_t)
_YT = (0, 3, 1, 2)        # -> (n_x, 2, n_y, n_t)
_XT_INV = tuple(np.argsort(_XT))
_YT_INV = tuple(np.argsort(_YT))


@dataclass(frozen=True)
class UNetConfig:
    n_f: int = 16
    stages: int = 3
    convs_per_stage: int = 2
    kernel: int = 3
    leaky_slope: float = 0.01
    in_channels: int = 2
    out_channels: int = 2

    def __post_init__(self):
        if self.n_f < 1 or self.stages < 1 or self.convs_per_stage < 1:
            raise ValueError("n_f, stages and convs_per_stage must be >= 1")
        if self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        if not 0 < self.leaky_slope < 1:
            raise ValueError("leaky_slope must lie in (0, 1)")

    @property
    def divisor(self) -> int:
        return 2 ** (self.stages - 1)

    def channels(self, stage: int) -> int:
        return self.n_f * 2 ** stage


def layer_shapes(cfg: UNetConfig) -> dict[str, tuple[int, ...]]:
    """Ordered parameter names and shapes of the U-Net."""
    k = cfg.kernel
    shapes = {}

    def conv(name, c_in, c_out, size=k):
        shapes[name + ".w"] = (c_out, c_in, size, size)
        shapes[name + ".b"] = (c_out,)

    c_in = cfg.in_channels
    for s in range(cfg.stages):
        for j in range(cfg.convs_per_stage):
            conv(f"enc{s}.conv{j}", c_in, cfg.channels(s))
            c_in = cfg.channels(s)
    for s in range(cfg.stages - 2, -1, -1):
        conv(f"dec{s}.up", cfg.channels(s + 1), cfg.channels(s))
        c_in = 2 * cfg.channels(s)
        for j in range(cfg.convs_per_stage):
            conv(f"dec{s}.conv{j}", c_in, cfg.channels(s))
            c_in = cfg.channels(s)
    conv("out", cfg.channels(0), cfg.out_channels, size=1)
    return shapes


class ParamSet:
    """U-Net weights plus the unconstrained regularisation scalar ``lambda_raw``."""

    def __init__(self, cfg: UNetConfig, weights: dict[str, Tensor], lambda_raw: Tensor):
        shapes = layer_shapes(cfg)
        if set(weights) != set(shapes):
            raise ValueError("weight names do not match the U-Net configuration")
        for name, shp in shapes.items():
            if weights[name].shape != shp:
                raise ValueError(f"{name}: shape {weights[name].shape} != {shp}")
        if lambda_raw.shape != (1,):
            raise ValueError("lambda_raw must have shape (1,)")
        self.cfg = cfg
        self.weights = {name: weights[name] for name in shapes}
        self.lambda_raw = lambda_raw

    def tensors(self) -> dict[str, Tensor]:
        out = dict(self.weights)
        out["lambda_raw"] = self.lambda_raw
        return out

    def n_unet_params(self) -> int:
        return sum(t.size for t in self.weights.values())

    def lam(self) -> Tensor:
        return softplus(self.lambda_raw, beta=1.0)

    def requires_grad_(self, unet: bool = True, lam: bool = True) -> "ParamSet":
        for t in self.weights.values():
            t.requires_grad = unet
        self.lambda_raw.requires_grad = lam
        return self

    def zero_grad(self) -> None:
        for t in self.tensors().values():
            t.grad = None

    def copy(self) -> "ParamSet":
        return self.astype(self.lambda_raw.dtype)

    def astype(self, dtype) -> "ParamSet":
        """Detached copy with every buffer cast to ``dtype``."""
        return ParamSet(self.cfg, {k: Tensor(v.data.astype(dtype)) for k, v in self.weights.items()},
                        Tensor(self.lambda_raw.data.astype(dtype)))

    def save(self, path, meta: dict | None = None) -> None:
        meta = dict(meta or {})
        meta["unet"] = asdict(self.cfg)
        save_weights(path, {k: v.data for k, v in self.tensors().items()}, meta)

    @classmethod
    def load(cls, path) -> tuple["ParamSet", dict]:
        arrays, meta = load_weights(path)
        cfg = UNetConfig(**meta.get("unet", {}))
        lam = arrays.pop("lambda_raw")
        return cls(cfg, {k: Tensor(v) for k, v in arrays.items()}, Tensor(lam)), meta


def init_params(cfg: UNetConfig = UNetConfig(), seed: int = 0, lambda_raw: float = 0.0,
                zero_final: bool = False) -> ParamSet:
    """He-normal weights, zero biases; ``zero_final`` zeroes the output convolution."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shp in layer_shapes(cfg).items():
        if name.endswith(".b") or (zero_final and name.startswith("out.")):
            arr = np.zeros(shp, np.float32)
        else:
            fan_in = shp[1] * shp[2] * shp[3]
            # convs feeding a leaky ReLU get the He gain, linear ones unit gain
            gain = 1.0 if name.startswith("out.") or ".up." in name else 2.0
            arr = (rng.standard_normal(shp) * np.sqrt(gain / fan_in)).astype(np.float32)
        weights[name] = Tensor(arr)
    params = ParamSet(cfg, weights, Tensor(np.array([lambda_raw], np.float32)))
    log.info("U-Net parameters: %d (reference count %d)", params.n_unet_params(),
             PAPER_PARAM_COUNT)
    return params


def unet_forward(cfg: UNetConfig, weights: dict[str, Tensor], batch: Tensor) -> Tensor:
    """2D U-Net on a (B, C, H, W) batch; output has ``cfg.out_channels`` channels."""
    if batch.ndim != 4 or batch.shape[1] != cfg.in_channels:
        raise ValueError(f"expected (B, {cfg.in_channels}, H, W), got {batch.shape}")
    out = _unet_nhwc(cfg, weights, permute(batch, (0, 2, 3, 1)))
    return permute(out, (0, 3, 1, 2))


def _unet_nhwc(cfg: UNetConfig, weights: dict[str, Tensor], x: Tensor) -> Tensor:
    # channels-last (B, H, W, C) throughout: convs chain without transposes
    h, w = x.shape[1:3]
    if h % cfg.divisor or w % cfg.divisor:
        raise ValueError(f"spatial dims {h}x{w} must be divisible by {cfg.divisor}")
    pad = cfg.kernel // 2

    def conv(name, t, act=True, p=pad):
        y = conv2d(t, weights[name + ".w"], weights[name + ".b"], padding=p, layout="NHWC")
        return leaky_relu(y, cfg.leaky_slope) if act else y

    skips = []
    for s in range(cfg.stages):
        if s > 0:
            x = maxpool2d(x, 2, axes=(1, 2))
        for j in range(cfg.convs_per_stage):
            x = conv(f"enc{s}.conv{j}", x)
        skips.append(x)
    for s in range(cfg.stages - 2, -1, -1):
        x = conv(f"dec{s}.up", upsample_bilinear(x, 2, axes=(1, 2)), act=False)
        x = concat([x, skips[s]], axis=3)
        for j in range(cfg.convs_per_stage):
            x = conv(f"dec{s}.conv{j}", x)
    return conv("out", x, act=False, p=0)


def temporal_mean(x: Tensor) -> Tensor:
    """Per-pixel mean over frames, shape (n_x, n_y, 1, 2)."""
    return mean(x, axis=2, keepdims=True)


def temporal_mean_stack(x: Tensor) -> Tensor:
    """Temporal mean replicated over all frames."""
    m = temporal_mean(x)
    return concat([m] * x.shape[2], axis=2)


def to_xt_yt(z: Tensor) -> tuple[Tensor, Tensor]:
    """(n_x, n_y, n_t, 2) -> (n_y, 2, n_x, n_t) and (n_x, 2, n_y, n_t) slice batches."""
    if z.ndim != 4 or z.shape[-1] != 2:
        raise ValueError("expected a (n_x, n_y, n_t, 2) tensor")
    return permute(z, _XT), permute(z, _YT)


def from_xt_yt(xt: Tensor, yt: Tensor) -> tuple[Tensor, Tensor]:
    """Inverse permutations of :func:`to_xt_yt`."""
    return permute(xt, _XT_INV), permute(yt, _YT_INV)


def _check_cine(x: Tensor, cfg: UNetConfig):
    if x.ndim != 4 or x.shape[-1] != 2:
        raise ValueError("cine must have shape (n_x, n_y, n_t, 2)")
    n_x, n_y, n_t, _ = x.shape
    d = cfg.divisor
    if n_x % d or n_y % d or n_t % d:
        raise ValueError(f"n_x, n_y, n_t must be divisible by {d}")


def block_forward(x: Tensor, params: ParamSet, cnn=None) -> Tensor:
    """Apply the CNN block to a (n_x, n_y, n_t, 2) cine.

    ``cnn`` overrides the U-Net with any batch map (B, 2, H, W) -> (B, 2, H, W);
    by default both slice orientations go through ``params``' single U-Net.
    """
    _check_cine(x, params.cfg)
    mu = temporal_mean(x)
    z = fft_1d(sub(x, mu), axis=2)
    if cnn is None:
        a, b = _branches_nhwc(z, params)
    else:
        xt, yt = to_xt_yt(z)
        a, b = from_xt_yt(cnn(xt), cnn(yt))
    zc = scale(add(a, b), 0.5)
    return add(fft_1d(zc, inverse=True, axis=2), mu)


def _branches_nhwc(z: Tensor, params: ParamSet) -> tuple[Tensor, Tensor]:
    # channels-last slice batches: xt is (n_y, n_x, n_t, 2), yt is z itself
    cfg, w = params.cfg, params.weights
    xt = permute(z, (1, 0, 2, 3))
    if xt.shape == z.shape:
        # square images: one U-Net pass over both slice sets
        n = xt.shape[0]
        both = _unet_nhwc(cfg, w, concat([xt, z], axis=0))
        out_xt, out_yt = both[:n], both[n:]
    else:
        out_xt, out_yt = _unet_nhwc(cfg, w, xt), _unet_nhwc(cfg, w, z)
    return permute(out_xt, (1, 0, 2, 3)), out_yt
