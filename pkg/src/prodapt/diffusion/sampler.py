"""Ancestral DDPM sampler with optional warmstart from the previous plan."""

from __future__ import annotations

import math

import numpy as np

from .schedule import NoiseSchedule, forward_noise

WARMSTART_FRACTION = 0.6


def shift_plan(plan: np.ndarray, h_a: int) -> np.ndarray:
    """Advance a plan by ``h_a`` executed actions, repeating the last one."""
    if h_a <= 0:
        return plan.copy()
    h_a = min(h_a, plan.shape[0])
    return np.concatenate([plan[h_a:], np.repeat(plan[-1:], h_a, axis=0)], axis=0)


def sample(
    model,
    cond: np.ndarray,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    warmstart: np.ndarray | None = None,
    h_a: int = 0,
    warmstart_fraction: float = WARMSTART_FRACTION,
) -> np.ndarray:
    """Draw one normalized action plan by iterative denoising.

    ``model`` is anything with ``predict_eps(noisy, i, cond) -> eps`` over a
    batch of one.  Without a warmstart the chain starts from pure noise at the
    last schedule step; with one, the previous plan is shifted forward by
    ``h_a`` actions, re-noised to step ``ceil(warmstart_fraction * n_diff)``
    and denoised from there.
    """
    desc = model.desc
    cond = np.asarray(cond, dtype=np.float32)
    if cond.ndim != 1 or cond.shape[0] != desc.cond_dim:
        raise ValueError(f"conditioning must have length {desc.cond_dim}, "
                         f"got shape {cond.shape}")
    shape = (desc.h_p, desc.action_dim)
    if warmstart is None:
        x = rng.standard_normal(shape).astype(np.float32)
        start = sched.n_diff - 1
    else:
        warmstart = np.asarray(warmstart, dtype=np.float32)
        if warmstart.shape != shape:
            raise ValueError(f"warmstart plan must have shape {shape}")
        start = min(math.ceil(warmstart_fraction * sched.n_diff), sched.n_diff - 1)
        eps = rng.standard_normal(shape).astype(np.float32)
        x = forward_noise(shift_plan(warmstart, h_a), start, eps, sched).astype(np.float32)

    cond_b = cond[None, :]
    for i in range(start, -1, -1):
        eps_hat = model.predict_eps(x[None], i, cond_b)[0]
        beta = sched.beta[i]
        x = (x - (beta / math.sqrt(1.0 - sched.alpha_bar[i])) * eps_hat) \
            / math.sqrt(sched.alpha[i])
        if i > 0:
            x = x + math.sqrt(beta) * rng.standard_normal(shape).astype(np.float32)
        x = x.astype(np.float32)
    return x
