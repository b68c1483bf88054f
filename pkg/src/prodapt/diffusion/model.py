"""Conditional 1D U-Net noise predictor.

The network denoises an action plan of shape (h_p, 2).  Conditioning (the
flattened observation window, optionally followed by the keypoint vector)
is concatenated with a sinusoidal embedding of the diffusion step and
injected into every residual block through feature-wise modulation.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .. import nn


@dataclass(frozen=True)
class ModelDescriptor:
    h_p: int
    cond_dim: int
    action_dim: int = 2
    widths: tuple[int, int] = (32, 64)
    emb_dim: int = 64
    groups: int = 8
    kernel: int = 3
    film_mult: int = 10

    @property
    def z_dim(self) -> int:
        return self.emb_dim + self.cond_dim

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelDescriptor":
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        return cls(**d)


class FiLMResBlock(nn.Module):
    """conv -> groupnorm -> modulate -> conv -> groupnorm, with residual skip.

    The modulation MLP maps the (step embedding ++ conditioning) vector
    through a hidden layer proportional to its own width, so inference cost
    grows with the conditioning width: policies with longer observation
    horizons pay for them at every denoising step.
    """

    def __init__(self, rng, c_in, c_out, z_dim, groups, kernel, dtype,
                 film_mult: int = 4):
        g = min(groups, c_out)
        self.c1 = nn.Conv1d(rng, c_in, c_out, kernel, dtype)
        self.g1 = nn.GroupNorm(g, c_out, dtype)
        self.a1 = nn.SiLU()
        self.f0 = nn.SiLU()
        self.f1 = nn.Linear(rng, z_dim, film_mult * z_dim, dtype)
        self.f2 = nn.SiLU()
        self.f3 = nn.Linear(rng, film_mult * z_dim, 2 * c_out, dtype)
        self.c2 = nn.Conv1d(rng, c_out, c_out, kernel, dtype)
        self.g2 = nn.GroupNorm(g, c_out, dtype)
        self.a2 = nn.SiLU()
        self.skip = nn.Conv1d(rng, c_in, c_out, 1, dtype) if c_in != c_out else None
        self.c_out = c_out

    def forward(self, x, z):
        h = self.a1.forward(self.g1.forward(self.c1.forward(x)))
        film = self.f3.forward(self.f2.forward(self.f1.forward(self.f0.forward(z))))
        scale = film[:, :self.c_out][:, None, :]
        shift = film[:, self.c_out:][:, None, :]
        self._h = h
        self._scale = scale
        hm = h * (1.0 + scale) + shift
        out = self.a2.forward(self.g2.forward(self.c2.forward(hm)))
        s = self.skip.forward(x) if self.skip is not None else x
        return out + s

    def backward(self, g):
        ghm = self.c2.backward(self.g2.backward(self.a2.backward(g)))
        gh = ghm * (1.0 + self._scale)
        gscale = (ghm * self._h).sum(axis=1)
        gshift = ghm.sum(axis=1)
        gfilm = np.concatenate([gscale, gshift], axis=1)
        gz = self.f0.backward(self.f1.backward(self.f2.backward(self.f3.backward(gfilm))))
        gx = self.c1.backward(self.g1.backward(self.a1.backward(gh)))
        if self.skip is not None:
            gx = gx + self.skip.backward(g)
        else:
            gx = gx + g
        return gx, gz


class DenoiserModel(nn.Module):
    """Two-level temporal U-Net with FiLM conditioning in every block."""

    def __init__(self, desc: ModelDescriptor, rng: np.random.Generator,
                 dtype=np.float32):
        w1, w2 = desc.widths
        zd = desc.z_dim
        k, gps = desc.kernel, desc.groups
        self.desc = desc
        self.dtype = dtype
        fm = desc.film_mult
        self.d1 = FiLMResBlock(rng, desc.action_dim, w1, zd, gps, k, dtype, fm)
        self.ds1 = nn.Conv1d(rng, w1, w1, k, dtype, stride=2)
        self.d2 = FiLMResBlock(rng, w1, w2, zd, gps, k, dtype, fm)
        self.ds2 = nn.Conv1d(rng, w2, w2, k, dtype, stride=2)
        self.mid = FiLMResBlock(rng, w2, w2, zd, gps, k, dtype, fm)
        self.u2 = FiLMResBlock(rng, 2 * w2, w1, zd, gps, k, dtype, fm)
        self.u1 = FiLMResBlock(rng, 2 * w1, w1, zd, gps, k, dtype, fm)
        self.final = nn.Conv1d(rng, w1, desc.action_dim, 1, dtype, zero_init=True)

    def _check(self, noisy, cond):
        d = self.desc
        if noisy.ndim != 3 or noisy.shape[1] != d.h_p or noisy.shape[2] != d.action_dim:
            raise ValueError(f"noisy plan must be (B, {d.h_p}, {d.action_dim}), "
                             f"got {noisy.shape}")
        if cond.ndim != 2 or cond.shape[1] != d.cond_dim:
            raise ValueError(f"conditioning must be (B, {d.cond_dim}), got {cond.shape}")
        if noisy.shape[0] != cond.shape[0]:
            raise ValueError("batch size mismatch between plan and conditioning")

    def forward(self, noisy: np.ndarray, i, cond: np.ndarray) -> np.ndarray:
        self._check(noisy, cond)
        noisy = noisy.astype(self.dtype, copy=False)
        cond = cond.astype(self.dtype, copy=False)
        emb = nn.sinusoidal_embedding(i, self.desc.emb_dim).astype(self.dtype)
        if emb.shape[0] == 1 and noisy.shape[0] > 1:
            emb = np.broadcast_to(emb, (noisy.shape[0], emb.shape[1]))
        z = np.concatenate([emb, cond], axis=1)
        a = self.d1.forward(noisy, z)
        b = self.d2.forward(self.ds1.forward(a), z)
        m = self.mid.forward(self.ds2.forward(b), z)
        m = self.u2.forward(np.concatenate([nn.upsample2(m), b], axis=2), z)
        m = self.u1.forward(np.concatenate([nn.upsample2(m), a], axis=2), z)
        self._w1 = self.desc.widths[0]
        self._w2 = self.desc.widths[1]
        return self.final.forward(m)

    def backward(self, g: np.ndarray) -> None:
        """Accumulate parameter gradients for upstream gradient ``g``."""
        w1, w2 = self._w1, self._w2
        gm = self.final.backward(g.astype(self.dtype, copy=False))
        gm, gz1 = self.u1.backward(gm)
        ga = gm[:, :, w1:]
        gm = nn.upsample2_backward(gm[:, :, :w1])
        gm, gz2 = self.u2.backward(gm)
        gb = gm[:, :, w2:]
        gm = nn.upsample2_backward(gm[:, :, :w2])
        gm, gz3 = self.mid.backward(gm)
        gb = gb + self.ds2.backward(gm)
        gb, gz4 = self.d2.backward(gb)
        ga = ga + self.ds1.backward(gb)
        _, gz5 = self.d1.backward(ga)

    def predict_eps(self, noisy: np.ndarray, i: int, cond: np.ndarray) -> np.ndarray:
        """Inference entry point: deterministic noise prediction."""
        return self.forward(noisy, i, cond)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.value for name, p in self.params()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        own = dict(self.params())
        if set(own) != set(arrays):
            missing = set(own) ^ set(arrays)
            raise ValueError(f"parameter name mismatch: {sorted(missing)}")
        for name, p in own.items():
            if p.value.shape != arrays[name].shape:
                raise ValueError(f"shape mismatch for {name}")
            p.value[...] = arrays[name].astype(self.dtype)

    def n_params(self) -> int:
        return sum(p.value.size for _, p in self.params())
