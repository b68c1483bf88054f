"""Demonstration collection, storage, normalization, and training pairs.

Demonstrations come from a scripted expert by default: a goal-seeking
navigator that, on contact, commits to a random side and wall-follows,
reversing when a side stops paying off. Teleoperated episodes written by
the serve module use the exact same file format and are drop-in.
"""

import hashlib
import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from . import sim2d
from .controller import ControllerConfig, build_conditioning
from .keypoints import Keypoint, KeypointBuffer, KeypointConfig, detect_contact, maybe_insert
from .sim2d import Observation, Scene, SimConfig, rot90, vec2

EPS_RANGE = 1e-6


@dataclass(frozen=True)
class Demonstration:
    scene: Scene
    ticks: list  # (Observation before the action, action target)
    keypoint_events: list  # (tick index, Keypoint)
    source: str = "scripted"

    def __post_init__(self):
        if not self.ticks:
            raise ValueError("demonstration must contain at least one tick")


# --- scripted expert ---------------------------------------------------------

_SEEK, _FOLLOW = 0, 1


@dataclass(frozen=True)
class ExpertConfig:
    press: float = 0.04  # commanded push into the wall while following
    turn_step: float = 0.45  # radians per tick when rounding a lost corner
    lost_max: int = 8  # corner-rounding ticks before giving up on the wall
    reversal_budget: float = 0.6  # follow distance without progress
    success_radius: float = 0.05
    max_ticks: int = 1000


def _rotate(v, angle):
    c, s = math.cos(angle), math.sin(angle)
    return vec2(c * v[0] - s * v[1], c * v[1] + s * v[0])


def scripted_expert(scene: Scene, rng, *, sim_cfg: SimConfig | None = None,
                    kp_cfg: KeypointConfig | None = None,
                    cfg: ExpertConfig | None = None) -> Demonstration | None:
    """Drive one episode; returns None when the goal is not reached in time."""
    ticks, events, success = _expert_rollout(scene, rng, sim_cfg=sim_cfg,
                                             kp_cfg=kp_cfg, cfg=cfg)
    if not success or not ticks:
        return None
    return Demonstration(scene=scene, ticks=ticks, keypoint_events=events,
                         source="scripted")


def _expert_rollout(scene: Scene, rng, *, sim_cfg=None, kp_cfg=None, cfg=None):
    sim_cfg = sim_cfg or SimConfig()
    kp_cfg = kp_cfg or KeypointConfig()
    cfg = cfg or ExpertConfig()
    step_len = sim_cfg.max_step_length

    state = sim2d.init_state(scene)
    buffer = KeypointBuffer(entries=())
    ticks = []
    events = []

    mode = _SEEK
    side = 1.0
    heading = vec2(1.0, 0.0)
    lost = 0
    best = float(np.hypot(*(state.position - scene.goal)))
    since_best = 0.0
    success = False

    for t in range(cfg.max_ticks):
        obs = sim2d.observe(state)
        cand = detect_contact(obs, kp_cfg)
        if cand is not None:
            buffer, inserted = maybe_insert(buffer, cand, kp_cfg)
            if inserted:
                events.append((t, buffer.entries[-1]))

        pos = state.position
        to_goal = scene.goal - pos
        dist = float(np.hypot(*to_goal))
        if dist <= cfg.success_radius:
            success = True
            break

        contact = state.contact
        if mode == _SEEK:
            if contact is not None:
                # commit to a random side on every fresh hook; determinism
                # here produces limit cycles in concave obstacle pockets
                mode = _FOLLOW
                side = 1.0 if rng.random() < 0.5 else -1.0
                since_best = 0.0
                best = dist
            else:
                d = to_goal / dist
                target = scene.goal if dist < step_len else pos + d * step_len

        if mode == _FOLLOW:
            if dist < best:
                best = dist
                since_best = 0.0
            if since_best > cfg.reversal_budget:
                side = -side
                since_best = 0.0
                best = dist  # a reversal restarts the progress clock
            if contact is not None and float(np.dot(to_goal, contact.normal)) > 0.0:
                # wall normal points goalward: the way ahead is open, stop
                # hugging (otherwise the expert orbits convex clusters forever)
                mode = _SEEK
                d = to_goal / dist
                target = scene.goal if dist < step_len else pos + d * step_len
            elif contact is not None:
                n = contact.normal
                heading = side * rot90(n)
                target = pos + heading * step_len - n * cfg.press
                lost = 0
            else:
                lost += 1
                if lost > cfg.lost_max:
                    mode = _SEEK
                    d = to_goal / dist
                    target = scene.goal if dist < step_len else pos + d * step_len
                else:
                    heading = _rotate(heading, side * cfg.turn_step)
                    target = pos + heading * step_len

        x0, y0, x1, y1 = scene.bounds
        target = vec2(min(max(float(target[0]), x0), x1),
                      min(max(float(target[1]), y0), y1))
        ticks.append((obs, target))
        state = sim2d.step(state, scene, target, sim_cfg)
        if mode == _FOLLOW:
            since_best += float(np.hypot(*(state.position - pos)))

    return ticks, events, success


# --- normalization -----------------------------------------------------------

@dataclass(frozen=True)
class NormStats:
    """Per-dimension min/max mapping each feature family to [-1, 1]."""

    obs_min: np.ndarray
    obs_max: np.ndarray
    act_min: np.ndarray
    act_max: np.ndarray
    kp_min: np.ndarray
    kp_max: np.ndarray

    @staticmethod
    def _scale(x, lo, hi):
        return (2.0 * (np.asarray(x, dtype=np.float64) - lo) / (hi - lo) - 1.0).astype(np.float32)

    @staticmethod
    def _unscale(x, lo, hi):
        return (lo + (np.asarray(x, dtype=np.float64) + 1.0) * 0.5 * (hi - lo))

    def normalize_obs(self, x):
        return self._scale(x, self.obs_min, self.obs_max)

    def normalize_action(self, x):
        return self._scale(x, self.act_min, self.act_max)

    def denormalize_action(self, x):
        return self._unscale(x, self.act_min, self.act_max)

    def normalize_keypoint(self, x):
        return self._scale(x, self.kp_min, self.kp_max)

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in
                ("obs_min", "obs_max", "act_min", "act_max", "kp_min", "kp_max")}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: np.asarray(d[k], dtype=np.float64) for k in
                      ("obs_min", "obs_max", "act_min", "act_max", "kp_min", "kp_max")})


def _widen(lo: np.ndarray, hi: np.ndarray):
    # degenerate dims are widened symmetrically so the constant maps to 0
    flat = hi - lo < EPS_RANGE
    c = 0.5 * (lo + hi)
    lo = np.where(flat, c - 0.5 * EPS_RANGE, lo)
    hi = np.where(flat, c + 0.5 * EPS_RANGE, hi)
    return lo, hi


def fit_normalization(demos) -> NormStats:
    demos = list(demos)
    if not demos:
        raise ValueError("cannot fit normalization on an empty dataset")
    obs = np.array([o.as_array() for d in demos for o, _ in d.ticks], dtype=np.float64)
    act = np.array([a for d in demos for _, a in d.ticks], dtype=np.float64)
    kps = [kp.as_array() for d in demos for _, kp in d.keypoint_events]
    if kps:
        kp = np.array(kps, dtype=np.float64)
        kp_min, kp_max = kp.min(axis=0), kp.max(axis=0)
    else:
        # no contact in the whole dataset; fall back to sane fixed ranges
        kp_min = np.array([obs[:, 0].min(), obs[:, 1].min(), -1.0, -1.0])
        kp_max = np.array([obs[:, 0].max(), obs[:, 1].max(), 1.0, 1.0])
    obs_min, obs_max = _widen(obs.min(axis=0), obs.max(axis=0))
    act_min, act_max = _widen(act.min(axis=0), act.max(axis=0))
    kp_min, kp_max = _widen(kp_min, kp_max)
    return NormStats(obs_min, obs_max, act_min, act_max, kp_min, kp_max)


# --- dataset storage ---------------------------------------------------------

def save_demonstration(path, demo: Demonstration) -> None:
    events = {t: kp for t, kp in demo.keypoint_events}
    with open(path, "w") as f:
        f.write(json.dumps({"scene": sim2d.scene_to_dict(demo.scene),
                            "source": demo.source}) + "\n")
        for t, (obs, action) in enumerate(demo.ticks):
            f.write(json.dumps({
                "t": t,
                "obs": [round(float(v), 9) for v in obs.as_array()],
                "action": [round(float(v), 9) for v in action],
            }) + "\n")
            if t in events:
                kp = events[t]
                f.write(json.dumps(
                    {"t": t, "kp": [round(float(v), 9) for v in kp.as_array()]}) + "\n")


def load_demonstration(path) -> Demonstration:
    with open(path) as f:
        rows = [json.loads(line) for line in f if line.strip()]
    if not rows or "scene" not in rows[0]:
        raise ValueError(f"{path}: missing scene header")
    scene = sim2d.scene_from_dict(rows[0]["scene"])
    ticks = []
    events = []
    for row in rows[1:]:
        if "kp" in row:
            x, y, s, c = row["kp"]
            mag = math.hypot(s, c)  # undo the drift from decimal rounding
            events.append((row["t"],
                           Keypoint(position=vec2(x, y), normal_sin=s / mag,
                                    normal_cos=c / mag)))
        else:
            ox, oy, tx, ty = row["obs"]
            ticks.append((Observation(position=vec2(ox, oy), torque=vec2(tx, ty)),
                          vec2(*row["action"])))
    return Demonstration(scene=scene, ticks=ticks, keypoint_events=events,
                         source=rows[0].get("source", "scripted"))


def _config_hash(*cfgs) -> str:
    blob = json.dumps([sorted(vars(c).items()) for c in cfgs], default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def collect(n_episodes: int, seed: int, out_dir, *,
            sim_cfg: SimConfig | None = None,
            kp_cfg: KeypointConfig | None = None,
            expert_cfg: ExpertConfig | None = None) -> dict:
    """Write n kept demonstrations plus a manifest; returns the manifest."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    sim_cfg = sim_cfg or SimConfig()
    kp_cfg = kp_cfg or KeypointConfig()
    expert_cfg = expert_cfg or ExpertConfig()
    os.makedirs(out_dir, exist_ok=True)

    kept_seeds = []
    discarded = 0
    attempt = 0
    root = np.random.SeedSequence(seed)
    while len(kept_seeds) < n_episodes:
        ep_seed = int(root.spawn(attempt + 1)[-1].generate_state(1)[0])
        attempt += 1
        scene = sim2d.make_training_scene(ep_seed)
        demo = scripted_expert(scene, np.random.default_rng(ep_seed),
                               sim_cfg=sim_cfg, kp_cfg=kp_cfg, cfg=expert_cfg)
        if demo is None:
            discarded += 1
            continue
        idx = len(kept_seeds)
        save_demonstration(os.path.join(out_dir, f"episode_{idx:05d}.jsonl"), demo)
        kept_seeds.append(ep_seed)

    manifest = {
        "seed": seed,
        "episode_seeds": kept_seeds,
        "config_hash": _config_hash(sim_cfg, kp_cfg, expert_cfg),
        "counts": {"kept": len(kept_seeds), "discarded": discarded},
        "source": "scripted",
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1)
    return manifest


def load_dataset(data_dir) -> list[Demonstration]:
    names = sorted(n for n in os.listdir(data_dir)
                   if n.startswith("episode_") and n.endswith(".jsonl"))
    if not names:
        raise ValueError(f"{data_dir}: no episode files")
    return [load_demonstration(os.path.join(data_dir, n)) for n in names]


# --- training pairs ----------------------------------------------------------

def make_pairs(demos, cfg: ControllerConfig, kp_cfg: KeypointConfig,
               norm: NormStats) -> tuple[np.ndarray, np.ndarray]:
    """(plans, conds) arrays in normalized space, one pair per demo tick.

    The keypoint buffer is replayed through the same detector and insertion
    rule the controller uses, and the conditioning vector comes from the
    controller's own builder, so training matches deployment bit for bit.
    """
    plans = []
    conds = []
    for demo in demos:
        obs_list = [o for o, _ in demo.ticks]
        acts = np.array([a for _, a in demo.ticks], dtype=np.float64)
        norm_acts = norm.normalize_action(acts)
        buffer = KeypointBuffer(entries=())
        for t in range(len(demo.ticks)):
            cand = detect_contact(obs_list[t], kp_cfg)
            if cand is not None:
                buffer, _ = maybe_insert(buffer, cand, kp_cfg)
            conds.append(build_conditioning(obs_list[:t + 1], buffer, cfg, kp_cfg, norm))
            plan = norm_acts[t:t + cfg.h_p]
            if len(plan) < cfg.h_p:
                pad = np.repeat(plan[-1:], cfg.h_p - len(plan), axis=0)
                plan = np.concatenate([plan, pad])
            plans.append(plan.astype(np.float32))
    return np.stack(plans), np.stack(conds)


def replay_keypoints(demo: Demonstration, kp_cfg: KeypointConfig) -> KeypointBuffer:
    """Final buffer after pushing every tick's observation through the manager."""
    buffer = KeypointBuffer(entries=())
    for obs, _ in demo.ticks:
        cand = detect_contact(obs, kp_cfg)
        if cand is not None:
            buffer, _ = maybe_insert(buffer, cand, kp_cfg)
    return buffer
