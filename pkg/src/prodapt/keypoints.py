"""Contact detection and the bounded keypoint memory.

A keypoint records where the end-effector was during a strong contact and
the direction of the contact normal.  New contacts are kept only when they
are informative: far from every stored keypoint, or close but with a
clearly different normal (a corner).  The memory holds the last ``n_kp``
accepted keypoints, evicting the oldest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sim2d import Observation, Vec2, rot_minus90


@dataclass(frozen=True)
class Keypoint:
    position: Vec2
    normal_sin: float
    normal_cos: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        norm = self.normal_sin ** 2 + self.normal_cos ** 2
        if abs(norm - 1.0) > 1e-9:
            raise ValueError("normal encoding must be a unit vector")

    @classmethod
    def from_angle(cls, position: Vec2, angle: float) -> "Keypoint":
        return cls(position=position, normal_sin=math.sin(angle),
                   normal_cos=math.cos(angle))

    @property
    def normal_angle(self) -> float:
        return math.atan2(self.normal_sin, self.normal_cos)

    def as_array(self) -> np.ndarray:
        return np.array([self.position[0], self.position[1],
                         self.normal_sin, self.normal_cos])


@dataclass(frozen=True)
class KeypointConfig:
    tau_min: float = 1.0          # N*m
    d_min: float = 0.05           # m
    theta_min: float = math.pi / 4
    n_kp: int = 10

    def __post_init__(self):
        if min(self.tau_min, self.d_min, self.theta_min) <= 0 or self.n_kp < 1:
            raise ValueError("all thresholds must be strictly positive, n_kp >= 1")


@dataclass(frozen=True)
class KeypointBuffer:
    entries: tuple[Keypoint, ...] = ()  # oldest first

    def __len__(self) -> int:
        return len(self.entries)


def angular_distance(a: float, b: float) -> float:
    """Smallest absolute angle between two directions, in [0, pi]."""
    d = (a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def detect_contact(obs: Observation, cfg: KeypointConfig) -> tuple[Vec2, float] | None:
    """Flag a contact when the planar torque magnitude strictly exceeds tau_min.

    The contact normal is recovered by inverting the simulator's torque
    model: rotate the reading by -90 degrees and normalize.
    """
    mag = math.hypot(obs.torque[0], obs.torque[1])
    if mag <= cfg.tau_min:
        return None
    n = rot_minus90(obs.torque) / mag
    return obs.position.copy(), math.atan2(n[1], n[0])


def maybe_insert(
    buffer: KeypointBuffer, candidate: tuple[Vec2, float], cfg: KeypointConfig
) -> tuple[KeypointBuffer, bool]:
    """Insert a contact candidate if it is informative; FIFO-evict when full.

    A candidate is accepted when it is at least ``d_min`` from every stored
    keypoint, or when every nearby keypoint has a normal at least
    ``theta_min`` away.
    """
    position, angle = candidate
    position = np.asarray(position, dtype=np.float64)
    for kp in buffer.entries:
        d = math.hypot(position[0] - kp.position[0], position[1] - kp.position[1])
        if d < cfg.d_min and angular_distance(angle, kp.normal_angle) < cfg.theta_min:
            return buffer, False
    entries = buffer.entries + (Keypoint.from_angle(position, angle),)
    if len(entries) > cfg.n_kp:
        entries = entries[-cfg.n_kp:]
    return KeypointBuffer(entries=entries), True


def encode(buffer: KeypointBuffer, cfg: KeypointConfig, norm) -> np.ndarray:
    """Flat conditioning vector: n_kp slots of (x, y, sin, cos), zero-padded.

    ``norm`` is a fitted :class:`prodapt.data.NormStats`; stored keypoints are
    normalized per dimension, unset slots stay exactly zero.
    """
    out = np.zeros(cfg.n_kp * 4, dtype=np.float32)
    for i, kp in enumerate(buffer.entries):
        out[i * 4:(i + 1) * 4] = norm.normalize_keypoint(kp.as_array())
    return out
