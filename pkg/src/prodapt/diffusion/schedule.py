"""Squared-cosine noise schedule and the closed-form forward process."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BETA_MIN = 1e-4
BETA_MAX = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    n_diff: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray


def make_schedule(n_diff: int) -> NoiseSchedule:
    """Squared-cosine betas clipped to [1e-4, 0.999].

    ``alpha_bar`` is recomputed as the exact running product of ``1 - beta``
    so the product identity holds bit-exactly after clipping.
    """
    if n_diff < 2:
        raise ValueError("n_diff must be at least 2")
    s = 0.008

    def f(t: float) -> float:
        return math.cos((t / n_diff + s) / (1 + s) * math.pi / 2) ** 2

    beta = np.empty(n_diff)
    for i in range(n_diff):
        beta[i] = min(max(1.0 - f(i + 1) / f(i), BETA_MIN), BETA_MAX)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(n_diff=n_diff, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def forward_noise(plan: np.ndarray, i, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Noisy sample at step ``i``: sqrt(ab_i) * plan + sqrt(1 - ab_i) * eps.

    ``i`` may be a scalar for one plan, or a vector matching a leading batch
    axis of ``plan``.
    """
    plan = np.asarray(plan)
    eps = np.asarray(eps)
    if plan.shape != eps.shape:
        raise ValueError(f"shape mismatch: plan {plan.shape} vs eps {eps.shape}")
    i = np.asarray(i)
    if np.any(i < 0) or np.any(i >= sched.n_diff):
        raise ValueError("diffusion step out of range")
    ab = sched.alpha_bar[i]
    if i.ndim:  # per-sample steps: broadcast over trailing axes
        ab = ab.reshape(ab.shape + (1,) * (plan.ndim - 1))
    return np.sqrt(ab) * plan + np.sqrt(1.0 - ab) * eps
