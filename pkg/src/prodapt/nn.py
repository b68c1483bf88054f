"""Minimal neural-network layers on numpy with reverse-mode gradients.

Every layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``Param.grad`` during ``backward``.
Convolutions are lowered to matrix products (im2col), so the heavy math
runs through BLAS.  Tensors are channels-last: ``(batch, time, channels)``.

The dtype is fixed per model at construction; gradient checks build the
same model in float64.
"""

from __future__ import annotations

import math

import numpy as np


class Param:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)


class Module:
    """Base class: parameter discovery by attribute walk."""

    def params(self) -> list[tuple[str, Param]]:
        out = []
        for name, attr in vars(self).items():
            if isinstance(attr, Param):
                out.append((name, attr))
            elif isinstance(attr, Module):
                out.extend((f"{name}.{sub}", p) for sub, p in attr.params())
            elif isinstance(attr, (list, tuple)):
                for i, item in enumerate(attr):
                    if isinstance(item, Module):
                        out.extend((f"{name}.{i}.{sub}", p) for sub, p in item.params())
        return out

    def zero_grad(self) -> None:
        for _, p in self.params():
            p.grad[...] = 0.0


class SiLU(Module):
    """x * sigmoid(x); the sigmoid is cached so backward is transcendental-free."""

    def forward(self, x):
        sig = 1.0 / (1.0 + np.exp(-x))
        self._x = x
        self._sig = sig
        return x * sig

    def backward(self, g):
        sig = self._sig
        return g * (sig * (1.0 + self._x * (1.0 - sig)))


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, dtype):
        scale = math.sqrt(1.0 / d_in)
        self.w = Param(rng.uniform(-scale, scale, (d_in, d_out)).astype(dtype))
        self.b = Param(np.zeros(d_out, dtype=dtype))

    def forward(self, x):
        self._x = x
        return x @ self.w.value + self.b.value

    def backward(self, g):
        self.w.grad += self._x.T @ g
        self.b.grad += g.sum(axis=0)
        return g @ self.w.value.T


class Conv1d(Module):
    """Same-padded 1D convolution over (B, T, C), stride 1 or 2."""

    def __init__(self, rng, c_in: int, c_out: int, kernel: int, dtype, stride: int = 1,
                 zero_init: bool = False):
        self.kernel = kernel
        self.stride = stride
        self.c_in = c_in
        self.c_out = c_out
        scale = math.sqrt(1.0 / (c_in * kernel))
        if zero_init:
            w = np.zeros((kernel * c_in, c_out), dtype=dtype)
        else:
            w = rng.uniform(-scale, scale, (kernel * c_in, c_out)).astype(dtype)
        self.w = Param(w)
        self.b = Param(np.zeros(c_out, dtype=dtype))

    def forward(self, x):
        B, T, C = x.shape
        if C != self.c_in:
            raise ValueError(f"expected {self.c_in} channels, got {C}")
        k, s = self.kernel, self.stride
        pad = (k - 1) // 2
        if pad:
            xp = np.zeros((B, T + 2 * pad, C), dtype=x.dtype)
            xp[:, pad:pad + T] = x
        else:
            xp = x
        t_out = (T + s - 1) // s
        # patches[b, j, i, :] = xp[b, s*j + i, :]
        patches = np.empty((B, t_out, k, C), dtype=x.dtype)
        for i in range(k):
            patches[:, :, i, :] = xp[:, i:i + s * t_out:s, :]
        flat = patches.reshape(B * t_out, k * C)
        y = flat @ self.w.value + self.b.value
        self._cache = (flat, B, T, t_out, pad)
        return y.reshape(B, t_out, self.c_out)

    def backward(self, g):
        flat, B, T, t_out, pad = self._cache
        k, s, C = self.kernel, self.stride, self.c_in
        gf = g.reshape(B * t_out, self.c_out)
        self.w.grad += flat.T @ gf
        self.b.grad += gf.sum(axis=0)
        dpatches = (gf @ self.w.value.T).reshape(B, t_out, k, C)
        dxp = np.zeros((B, T + 2 * pad, C), dtype=g.dtype)
        for i in range(k):
            dxp[:, i:i + s * t_out:s, :] += dpatches[:, :, i, :]
        return dxp[:, pad:pad + T] if pad else dxp


class GroupNorm(Module):
    def __init__(self, groups: int, channels: int, dtype, eps: float = 1e-5):
        if channels % groups:
            raise ValueError("channels must divide into groups")
        self.groups = groups
        self.channels = channels
        self.eps = eps
        self.gamma = Param(np.ones(channels, dtype=dtype))
        self.beta = Param(np.zeros(channels, dtype=dtype))

    def _group_mean(self, x, B, T, C):
        # reduce over (T, C//G) via a contiguous T-sum then a short group sum
        G = self.groups
        s = x.sum(axis=1).reshape(B, G, C // G).sum(axis=2)
        return s * (1.0 / (T * (C // G)))

    def forward(self, x):
        B, T, C = x.shape
        G = self.groups
        mean = self._group_mean(x, B, T, C)
        sq = self._group_mean(x * x, B, T, C)
        var = sq - mean * mean
        inv = 1.0 / np.sqrt(var + self.eps)  # (B, G)
        inv_c = np.repeat(inv, C // G, axis=1)[:, None, :]
        mean_c = np.repeat(mean, C // G, axis=1)[:, None, :]
        xhat = (x - mean_c) * inv_c
        self._cache = (xhat, inv_c, B, T, C)
        return xhat * self.gamma.value + self.beta.value

    def backward(self, g):
        xhat, inv_c, B, T, C = self._cache
        G = self.groups
        self.gamma.grad += (g * xhat).reshape(B * T, C).sum(axis=0)
        self.beta.grad += g.reshape(B * T, C).sum(axis=0)
        gx = g * self.gamma.value
        m1 = np.repeat(self._group_mean(gx, B, T, C), C // G, axis=1)[:, None, :]
        m2 = np.repeat(self._group_mean(gx * xhat, B, T, C), C // G, axis=1)[:, None, :]
        return inv_c * (gx - m1 - xhat * m2)


def upsample2(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour x2 upsampling along the time axis."""
    return np.repeat(x, 2, axis=1)


def upsample2_backward(g: np.ndarray) -> np.ndarray:
    B, T2, C = g.shape
    return g.reshape(B, T2 // 2, 2, C).sum(axis=2)


def sinusoidal_embedding(i, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Standard sin/cos embedding of integer diffusion steps, shape (B, dim)."""
    i = np.atleast_1d(np.asarray(i, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    args = i[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


class AdamW:
    """Adam with decoupled weight decay over a parameter list."""

    def __init__(self, params: list[tuple[str, Param]], lr: float = 1e-4,
                 betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 1e-6):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.value) for _, p in params]
        self.v = [np.zeros_like(p.value) for _, p in params]

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        self.t += 1
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for (_, p), m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.value -= lr * ((m / bc1) / (np.sqrt(v / bc2) + self.eps)
                             + self.weight_decay * p.value)


class EMA:
    """Exponential moving average of parameter values."""

    def __init__(self, params: list[tuple[str, Param]], decay: float):
        self.params = params
        self.decay = decay
        self.shadow = {name: p.value.copy() for name, p in params}

    def update(self) -> None:
        d = self.decay
        for name, p in self.params:
            self.shadow[name] *= d
            self.shadow[name] += (1.0 - d) * p.value

    def copy_to(self, params: list[tuple[str, Param]]) -> None:
        for name, p in params:
            p.value[...] = self.shadow[name]
