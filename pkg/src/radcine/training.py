"""Two-stage training: pre-train one CNN block, then fine-tune the unrolled network."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, from_complex, no_grad, scale, sub, vdot
from .cnn_block import ParamSet, UNetConfig, block_forward, init_params
from .dc_cg import CgConfig, NumericalError, rhs_data
from .unrolled import lambda_of, reconstruct, reconstruct_tensor

log = logging.getLogger(__name__)

DEFAULT_LR = {"pretrain": 1e-4, "finetune": 1e-5}


@dataclass
class TrainConfig:
    stage: str = "pretrain"
    epochs: int = 10
    lr: float | None = None          # None -> stage default
    lr_lambda: float | None = None   # step size for lambda_raw; None -> lr
    batch_size: int = 1
    seed: int = 0
    M: int = 1
    n_cg: int = 8
    val_every: int = 1
    train_lambda: bool = True        # finetune only
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.stage not in DEFAULT_LR:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.lr is None:
            self.lr = DEFAULT_LR[self.stage]
        if self.lr_lambda is None:
            self.lr_lambda = self.lr
        if self.lr < 0 or self.lr_lambda < 0:
            raise ValueError("lr must be non-negative")
        if self.epochs < 1 or self.batch_size < 1 or self.val_every < 1:
            raise ValueError("epochs, batch_size and val_every must be >= 1")
        if self.M < 1 or self.n_cg < 1:
            raise ValueError("M and n_cg must be >= 1")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def optimizer_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState,
                   lr: float | dict, betas=(0.9, 0.999), eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update, applied in place to ``params[name].data``.

    ``lr`` is either one step size or a per-name mapping. Names missing from
    ``grads`` (frozen parameters) are left untouched.
    """
    b1, b2 = betas
    state.t += 1
    c1, c2 = 1.0 - b1 ** state.t, 1.0 - b2 ** state.t
    for name, g in grads.items():
        p = params[name]
        g = np.asarray(g)
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros(p.shape, np.float64)
            state.v[name] = np.zeros(p.shape, np.float64)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        rate = lr[name] if isinstance(lr, dict) else lr
        step = rate * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data = (p.data - step).astype(p.data.dtype)
    return state


def l2_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over the real (…, 2) representation."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    d = sub(pred, target)
    return scale(vdot(d, d), 1.0 / d.size)


def nrmse(pred: np.ndarray, gt: np.ndarray) -> float:
    return float(np.linalg.norm(pred - gt) / np.linalg.norm(gt))


def write_loss_csv(path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "train_loss", "val_loss"])
        for row in history:
            val = row["val_loss"]
            w.writerow([row["step"], f"{row['train_loss']:.9e}",
                        "" if val is None else f"{val:.9e}"])


# -- per-stage forward passes --------------------------------------------------

class _Pipeline:
    """Loss evaluation for one stage; caches constant per-sample tensors."""

    def __init__(self, stage: str, op=None, M: int = 1, n_cg: int = 8):
        self.stage, self.op, self.M = stage, op, M
        self.cg = CgConfig(n_cg=n_cg)
        self._cache = {}

    def _tensors(self, sample):
        key = id(sample)
        if key not in self._cache:
            ah_y = rhs_data(self.op, sample.y) if self.stage == "finetune" else None
            self._cache[key] = (Tensor(from_complex(sample.x_i)), ah_y,
                                Tensor(from_complex(sample.x_gt)))
        return self._cache[key]

    def output(self, sample, params: ParamSet) -> Tensor:
        x_i, ah_y, _ = self._tensors(sample)
        if self.stage == "pretrain":
            return block_forward(x_i, params)
        return reconstruct_tensor(self.op, x_i, ah_y, params, self.M, self.cg)

    def loss(self, sample, params: ParamSet) -> Tensor:
        return l2_loss(self.output(sample, params), self._tensors(sample)[2])


def _mean_loss(pipe: _Pipeline, samples, params: ParamSet) -> float:
    with no_grad():
        return float(np.mean([pipe.loss(s, params).item() for s in samples]))


def _fit(pipe: _Pipeline, dataset, params: ParamSet, cfg: TrainConfig, history, loss_csv,
         trainable: dict[str, Tensor]) -> ParamSet:
    train, val = list(dataset["train"]), list(dataset["val"])
    if not train:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    rates = {k: cfg.lr_lambda if k == "lambda_raw" else cfg.lr for k in trainable}
    step = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [train[i] for i in order[start:start + cfg.batch_size]]
            params.zero_grad()
            for sample in batch:
                loss = pipe.loss(sample, params)
                value = loss.item()
                if not math.isfinite(value):
                    raise NumericalError(
                        f"non-finite {cfg.stage} loss at epoch {epoch} step {step} "
                        f"(sample seed {sample.seed}, lambda {lambda_of(params):.4g})")
                scale(loss, 1.0 / len(batch)).backward()
                losses.append(value)
            grads = {k: t.grad for k, t in trainable.items() if t.grad is not None}
            optimizer_step(trainable, grads, state, rates, cfg.betas, cfg.eps)
            step += 1
        val_loss = None
        if val and ((epoch + 1) % cfg.val_every == 0 or epoch + 1 == cfg.epochs):
            val_loss = _mean_loss(pipe, val, params)
        row = {"step": step, "epoch": epoch, "train_loss": float(np.mean(losses)),
               "val_loss": val_loss}
        history.append(row)
        log.info("%s epoch %d: train %.4e val %s lambda %.4g (%.1fs)", cfg.stage, epoch,
                 row["train_loss"], "-" if val_loss is None else f"{val_loss:.4e}",
                 lambda_of(params), time.perf_counter() - t0)
        if loss_csv is not None:
            write_loss_csv(loss_csv, history)
    params.zero_grad()
    params.requires_grad_(False, False)
    return params


def pretrain(dataset, cfg: TrainConfig = TrainConfig(), params0: ParamSet | None = None,
             unet: UNetConfig = UNetConfig(), history: list | None = None,
             loss_csv=None) -> ParamSet:
    """Fit one CNN block on (x_I, x_gt) pairs. No encoding operator is involved.

    ``dataset`` needs ``"train"`` and ``"val"`` lists of samples with ``x_i``
    and ``x_gt``. Per-epoch rows are appended to ``history`` when given.
    """
    if cfg.stage != "pretrain":
        raise ValueError("pretrain needs a TrainConfig with stage='pretrain'")
    params = (init_params(unet, seed=cfg.seed) if params0 is None else params0.copy())
    params.requires_grad_(True, False)
    return _fit(_Pipeline("pretrain"), dataset, params, cfg,
                history if history is not None else [], loss_csv, dict(params.weights))


def finetune(dataset, params0: ParamSet, cfg: TrainConfig = TrainConfig(stage="finetune"),
             history: list | None = None, loss_csv=None) -> ParamSet:
    """End-to-end training of the unrolled network (M blocks, n_cg CG steps each).

    ``dataset.op`` supplies the encoding operator; ``lambda_raw`` is trained
    alongside the U-Net unless ``cfg.train_lambda`` is False.
    """
    if cfg.stage != "finetune":
        raise ValueError("finetune needs a TrainConfig with stage='finetune'")
    params = params0.copy()
    params.requires_grad_(True, cfg.train_lambda)
    trainable = params.tensors() if cfg.train_lambda else dict(params.weights)
    pipe = _Pipeline("finetune", dataset.op, cfg.M, cfg.n_cg)
    return _fit(pipe, dataset, params, cfg, history if history is not None else [], loss_csv,
                trainable)


def evaluate_nrmse(op, samples, params: ParamSet, M: int, n_cg: int) -> float:
    """Mean per-cine NRMSE of the unrolled pipeline over ``samples``."""
    cfg = CgConfig(n_cg=n_cg)
    return float(np.mean([nrmse(reconstruct(op, s.y, params, M, cfg), s.x_gt)
                          for s in samples]))
