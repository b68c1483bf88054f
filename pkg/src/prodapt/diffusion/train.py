"""Epsilon-prediction training loop: AdamW, cosine learning rate, EMA weights."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .. import nn
from .model import DenoiserModel, ModelDescriptor
from .schedule import NoiseSchedule, forward_noise, make_schedule


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 256
    lr: float = 3e-4
    weight_decay: float = 1e-6
    ema_decay: float = 0.995
    n_diff: int = 45
    seed: int = 0
    pair_stride: int = 1  # subsample overlapping training windows

    def to_dict(self) -> dict:
        return asdict(self)


def loss_and_gradients(
    model: DenoiserModel,
    plans: np.ndarray,
    conds: np.ndarray,
    sched: NoiseSchedule,
    rng: np.random.Generator,
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """One batch of the epsilon-prediction MSE and its parameter gradients.

    Returns (loss, gradient arrays by parameter name, per-sample losses).
    Gradients are freshly accumulated (the model's grads are zeroed first).
    """
    plans = np.asarray(plans)
    conds = np.asarray(conds)
    if plans.ndim != 3 or len(plans) == 0:
        raise ValueError("batch of plans must be non-empty with shape (B, h_p, 2)")
    if len(conds) != len(plans):
        raise ValueError("plans and conditionings disagree on batch size")
    B = len(plans)
    i = rng.integers(0, sched.n_diff, size=B)
    eps = rng.standard_normal(plans.shape)
    noisy = forward_noise(plans, i, eps, sched)
    pred = model.forward(noisy.astype(model.dtype), i, conds)
    diff = pred - eps.astype(model.dtype)
    per_sample = (diff * diff).mean(axis=(1, 2))
    loss = float(per_sample.mean())
    if not math.isfinite(loss):
        bad = int(np.argmax(~np.isfinite(per_sample)))
        raise TrainingDiverged(f"non-finite loss at batch index {bad}")
    model.zero_grad()
    model.backward((2.0 / diff.size) * diff)
    grads = {name: p.grad.copy() for name, p in model.params()}
    return loss, grads, per_sample


def train(
    plans: np.ndarray,
    conds: np.ndarray,
    desc: ModelDescriptor,
    cfg: TrainConfig,
) -> tuple[DenoiserModel, dict]:
    """Train a denoiser on normalized (plan, conditioning) pairs.

    Returns the EMA model and a log with the per-epoch mean loss.
    Deterministic for a fixed config and dataset.
    """
    plans = np.asarray(plans, dtype=np.float32)
    conds = np.asarray(conds, dtype=np.float32)
    if len(plans) == 0:
        raise ValueError("training dataset is empty")
    if cfg.pair_stride > 1:
        plans = plans[::cfg.pair_stride]
        conds = conds[::cfg.pair_stride]
    n = len(plans)
    rng = np.random.default_rng(cfg.seed)
    model = DenoiserModel(desc, np.random.default_rng(cfg.seed))
    sched = make_schedule(cfg.n_diff)
    params = model.params()
    opt = nn.AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    ema = nn.EMA(params, cfg.ema_decay)
    steps_per_epoch = max(1, math.ceil(n / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch
    log: dict = {"epoch_loss": [], "n_pairs": n, "config": cfg.to_dict()}
    step_idx = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            if len(idx) == 0:
                continue
            loss, _, _ = loss_and_gradients(model, plans[idx], conds[idx], sched, rng)
            lr = cfg.lr * 0.5 * (1.0 + math.cos(math.pi * step_idx / max(1, total_steps)))
            opt.step(lr=lr)
            ema.update()
            step_idx += 1
            losses.append(loss)
        log["epoch_loss"].append(float(np.mean(losses)))
    ema.copy_to(params)
    return model, log
