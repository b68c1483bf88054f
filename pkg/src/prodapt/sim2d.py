"""Deterministic planar simulator of a position-controlled end-effector.

The end-effector is a disc moving among fixed oriented-rectangle obstacles.
There is no exteroception: the only sensor channels are the disc position
and an emulated planar "torque" reading that is nonzero exactly while the
disc is being held off an obstacle surface.

All geometry is in meters; rotations in radians.  Operations are pure:
``step`` returns a new :class:`SimState` and never mutates its inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

Vec2 = np.ndarray  # shape (2,) float64


def vec2(x: float, y: float) -> Vec2:
    return np.array([x, y], dtype=np.float64)


def rot90(v: Vec2) -> Vec2:
    """Rotate a vector by +90 degrees (counter-clockwise)."""
    return np.array([-v[1], v[0]], dtype=np.float64)


def rot_minus90(v: Vec2) -> Vec2:
    return np.array([v[1], -v[0]], dtype=np.float64)


@dataclass(frozen=True)
class Obstacle:
    """Oriented rectangle: center, half extents along its local axes, rotation."""

    center: Vec2
    half_extents: tuple[float, float]
    rotation: float  # radians, normalized to [-pi, pi)

    def __post_init__(self):
        if self.half_extents[0] <= 0 or self.half_extents[1] <= 0:
            raise ValueError("half_extents must be strictly positive")
        r = (self.rotation + math.pi) % (2 * math.pi) - math.pi
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))

    def to_local(self, p: Vec2) -> Vec2:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        d = p - self.center
        return np.array([c * d[0] + s * d[1], -s * d[0] + c * d[1]])

    def to_world_dir(self, v: Vec2) -> Vec2:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])

    def corners(self) -> np.ndarray:
        hx, hy = self.half_extents
        local = np.array([[hx, hy], [-hx, hy], [-hx, -hy], [hx, -hy]])
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + self.center


@dataclass(frozen=True)
class Scene:
    obstacles: tuple[Obstacle, ...]
    start: Vec2
    goal: Vec2
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=np.float64))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=np.float64))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        xmin, ymin, xmax, ymax = self.bounds
        for p, name in ((self.start, "start"), (self.goal, "goal")):
            if not (xmin <= p[0] <= xmax and ymin <= p[1] <= ymax):
                raise ValueError(f"{name} outside scene bounds")
        for ob in self.obstacles:
            local = ob.to_local(self.start)
            hx, hy = ob.half_extents
            if abs(local[0]) < hx and abs(local[1]) < hy:
                raise ValueError("start lies inside an obstacle")


@dataclass(frozen=True)
class SimConfig:
    max_step_length: float = 0.05      # per 0.1 s tick (0.5 m/s cap)
    ee_radius: float = 0.025           # disc end-effector
    contact_stiffness: float = 40.0    # N*m per meter of blocked motion
    penetration_tol: float = 1e-6
    projection_passes: int = 3


@dataclass(frozen=True)
class Contact:
    point: Vec2
    normal: Vec2  # unit, pointing out of the obstacle toward the disc


@dataclass(frozen=True)
class SimState:
    position: Vec2
    torque: Vec2
    contact: Contact | None = None
    step_index: int = 0


@dataclass(frozen=True)
class Observation:
    """Everything the policy is allowed to see: pose and torque, nothing else."""

    position: Vec2
    torque: Vec2

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.position, self.torque])


def init_state(scene: Scene) -> SimState:
    return SimState(position=scene.start.copy(), torque=vec2(0.0, 0.0))


def disc_obstacle_contact(
    p: Vec2, radius: float, ob: Obstacle
) -> tuple[float, Vec2, Vec2] | None:
    """Closed-form disc vs oriented-rectangle test.

    Returns (penetration_depth, surface_point, outward_normal) in world
    coordinates, or None when the disc does not overlap the rectangle.
    """
    local = ob.to_local(p)
    hx, hy = ob.half_extents
    q = np.array([min(max(local[0], -hx), hx), min(max(local[1], -hy), hy)])
    delta = local - q
    dist = math.hypot(delta[0], delta[1])
    if dist > 0.0:
        if dist >= radius:
            return None
        n_local = delta / dist
        depth = radius - dist
    else:
        # center inside the rectangle: push out along the shallower axis
        dx = hx - abs(local[0])
        dy = hy - abs(local[1])
        if dx <= dy:
            n_local = np.array([math.copysign(1.0, local[0]) or 1.0, 0.0])
            q = np.array([math.copysign(hx, local[0]), local[1]])
            depth = radius + dx
        else:
            n_local = np.array([0.0, math.copysign(1.0, local[1]) or 1.0])
            q = np.array([local[0], math.copysign(hy, local[1])])
            depth = radius + dy
    normal = ob.to_world_dir(n_local)
    c, s = math.cos(ob.rotation), math.sin(ob.rotation)
    point = ob.center + np.array([c * q[0] - s * q[1], s * q[0] + c * q[1]])
    return depth, point, normal


def _resolve(p: Vec2, scene: Scene, cfg: SimConfig) -> tuple[Vec2, Contact | None]:
    """Push the disc out of any penetrated obstacle; report the deepest contact."""
    deepest: tuple[float, Vec2, Vec2] | None = None
    for _ in range(cfg.projection_passes):
        worst = None
        for ob in scene.obstacles:
            hit = disc_obstacle_contact(p, cfg.ee_radius, ob)
            if hit is not None and (worst is None or hit[0] > worst[0]):
                worst = hit
        if worst is None or worst[0] <= cfg.penetration_tol:
            break
        depth, point, normal = worst
        if deepest is None or depth > deepest[0]:
            deepest = worst
        p = p + normal * depth
    contact = None
    if deepest is not None:
        contact = Contact(point=deepest[1], normal=deepest[2])
    return p, contact


def step(state: SimState, scene: Scene, target: Vec2, cfg: SimConfig) -> SimState:
    """Advance one control tick toward ``target``.

    The commanded motion is capped at ``cfg.max_step_length``; any part of it
    blocked by an obstacle produces a torque reading of
    ``contact_stiffness * blocked_displacement`` rotated by +90 degrees, so
    the reading's direction encodes the contact tangent.
    """
    target = np.asarray(target, dtype=np.float64)
    if not np.all(np.isfinite(target)):
        raise ValueError("target must be finite")
    xmin, ymin, xmax, ymax = scene.bounds
    pos = state.position
    delta = target - pos
    dist = math.hypot(delta[0], delta[1])
    if dist > cfg.max_step_length:
        free = pos + delta * (cfg.max_step_length / dist)
    else:
        free = pos + delta
    free = np.array([min(max(free[0], xmin), xmax), min(max(free[1], ymin), ymax)])

    move = math.hypot(free[0] - pos[0], free[1] - pos[1])
    n_sub = max(1, math.ceil(move / cfg.ee_radius))
    inc = (free - pos) / n_sub
    p = pos
    contact: Contact | None = None
    for _ in range(n_sub):
        # advance from the resolved position so the disc can never start a
        # substep inside an obstacle (which would flip the contact normal)
        p, c = _resolve(p + inc, scene, cfg)
        if c is not None:
            contact = c
        p = np.array([min(max(p[0], xmin), xmax), min(max(p[1], ymin), ymax)])

    # projection should never lengthen the step; if a pathological corner
    # configuration does, refuse the motion (pos is known collision-free)
    if math.hypot(p[0] - pos[0], p[1] - pos[1]) > cfg.max_step_length + cfg.penetration_tol:
        p = pos.copy()

    reaction = p - free
    blocked = math.hypot(reaction[0], reaction[1])
    if contact is not None and blocked > cfg.penetration_tol:
        torque = cfg.contact_stiffness * rot90(reaction)
    else:
        torque = vec2(0.0, 0.0)
        contact = None
    return SimState(position=p, torque=torque, contact=contact,
                    step_index=state.step_index + 1)


def observe(state: SimState) -> Observation:
    """Proprioceptive projection: position and torque only."""
    return Observation(position=state.position.copy(), torque=state.torque.copy())


# ---------------------------------------------------------------------------
# Scene construction

DEFAULT_BOUNDS = (0.2, -0.6, 1.4, 0.6)
TRAIN_START = (0.4, 0.0)
EVAL_START = (0.7, 0.0)
GOAL = (1.2, 0.0)
CUBE_SIDE = 0.15
OBSTACLE_X_RANGE = (0.55, 1.0)
OBSTACLE_Y_RANGE = (-0.3, 0.3)
WALL_THICKNESS = 0.05

EVAL_SETUPS = ("Clear", "Wall", "Bucket", "Elbow")


def make_training_scene(seed: int) -> Scene:
    """Random training scene: 1-3 cubes uniform over the obstacle box."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    obstacles = []
    for _ in range(n):
        cx = rng.uniform(*OBSTACLE_X_RANGE)
        cy = rng.uniform(*OBSTACLE_Y_RANGE)
        rot = rng.uniform(0.0, math.pi / 2)
        obstacles.append(Obstacle(center=vec2(cx, cy),
                                  half_extents=(CUBE_SIDE / 2, CUBE_SIDE / 2),
                                  rotation=rot))
    return Scene(obstacles=tuple(obstacles), start=vec2(*TRAIN_START),
                 goal=vec2(*GOAL), bounds=DEFAULT_BOUNDS)


def make_eval_scene(setup: str) -> Scene:
    """Fixed evaluation scenes: Clear, Wall, Bucket, Elbow."""
    half_cube = CUBE_SIDE / 2
    half_thick = WALL_THICKNESS / 2
    if setup == "Clear":
        obstacles: tuple[Obstacle, ...] = ()
    elif setup == "Wall":
        # 0.45 m wall perpendicular to the start-goal line, centered on it
        obstacles = (Obstacle(center=vec2(0.85, 0.0),
                              half_extents=(half_thick, 0.225), rotation=0.0),)
    elif setup == "Bucket":
        # three cubes forming a pocket that opens toward the start
        obstacles = (
            Obstacle(center=vec2(0.75, 0.15), half_extents=(half_cube, half_cube), rotation=0.0),
            Obstacle(center=vec2(0.75, -0.15), half_extents=(half_cube, half_cube), rotation=0.0),
            Obstacle(center=vec2(0.9, 0.0), half_extents=(half_cube, half_cube), rotation=0.0),
        )
    elif setup == "Elbow":
        # slanted short wall across the path feeding into a long wall whose far
        # end leaves no passable gap: the only way around is back past the slant
        slant_len = 0.225
        a = vec2(0.9, 0.13)                           # junction with the long wall
        d = vec2(-math.cos(math.pi / 4), -math.sin(math.pi / 4))
        center = a + d * (slant_len / 2)
        obstacles = (
            Obstacle(center=center, half_extents=(slant_len / 2, half_thick),
                     rotation=math.pi / 4),
            Obstacle(center=vec2(0.925, 0.355), half_extents=(half_thick, 0.225),
                     rotation=0.0),
        )
    else:
        raise ValueError(f"unknown setup {setup!r}; expected one of {EVAL_SETUPS}")
    return Scene(obstacles=obstacles, start=vec2(*EVAL_START), goal=vec2(*GOAL),
                 bounds=DEFAULT_BOUNDS)


# ---------------------------------------------------------------------------
# Scene (de)serialization

def scene_to_dict(scene: Scene) -> dict:
    return {
        "obstacles": [
            {"cx": float(o.center[0]), "cy": float(o.center[1]),
             "hx": float(o.half_extents[0]), "hy": float(o.half_extents[1]),
             "rot": float(o.rotation)}
            for o in scene.obstacles
        ],
        "start": [float(scene.start[0]), float(scene.start[1])],
        "goal": [float(scene.goal[0]), float(scene.goal[1])],
        "bounds": [float(b) for b in scene.bounds],
    }


def scene_from_dict(d: dict) -> Scene:
    obstacles = tuple(
        Obstacle(center=vec2(o["cx"], o["cy"]), half_extents=(o["hx"], o["hy"]),
                 rotation=o["rot"])
        for o in d["obstacles"]
    )
    xmin, ymin, xmax, ymax = d["bounds"]
    return Scene(obstacles=obstacles, start=vec2(*d["start"]), goal=vec2(*d["goal"]),
                 bounds=(xmin, ymin, xmax, ymax))


def save_scene(scene: Scene, path) -> None:
    with open(path, "w") as f:
        json.dump(scene_to_dict(scene), f, indent=2)


def load_scene(path) -> Scene:
    with open(path) as f:
        return scene_from_dict(json.load(f))
