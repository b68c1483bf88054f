"""Receding-horizon control loop.

Ties the pieces together: observe the last few steps, condition the
denoiser on them (plus the contact-keypoint buffer), sample a fresh plan
of target positions, apply the first ``h_a`` of them, repeat. Termination
is success (within ``success_radius`` of the goal) or an iteration cap.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import sim2d
from .keypoints import KeypointBuffer, KeypointConfig, detect_contact, encode, maybe_insert
from .diffusion import DenoiserModel, NoiseSchedule, make_schedule, sample
from .sim2d import Observation, Scene, SimConfig


@dataclass(frozen=True)
class ControllerConfig:
    h_o: int = 3
    h_p: int = 20
    h_a: int = 10
    n_kp: int = 10
    control_hz: float = 10.0
    max_iters: int = 1000
    success_radius: float = 0.05
    use_keypoints: bool = True
    warmstart: bool = True

    def __post_init__(self):
        if not (1 <= self.h_a <= self.h_p):
            raise ValueError("need 1 <= h_a <= h_p")
        if self.h_o < 1:
            raise ValueError("h_o must be at least 1")
        if self.success_radius <= 0:
            raise ValueError("success_radius must be positive")

    @property
    def cond_dim(self) -> int:
        return self.h_o * 4 + (self.n_kp * 4 if self.use_keypoints else 0)


@dataclass
class RolloutRecord:
    observations: list  # Observation per applied action, plus the initial one
    actions: list  # target position per applied action
    keypoint_events: list  # (tick, Keypoint) at insertion time
    kp_counts: list  # buffer size after each tick
    success: bool
    iterations: int
    inference_s: list  # wall time of each sample() call
    sample_ticks: list  # tick index at which each sample happened
    plans: list = field(default_factory=list)  # denormalized plans, if kept


def build_conditioning(history, buffer: KeypointBuffer, cfg: ControllerConfig,
                       kp_cfg: KeypointConfig, norm) -> np.ndarray:
    """Flat conditioning vector: h_o normalized observations, oldest first,
    then (optionally) the zero-padded keypoint encoding.

    A shorter-than-h_o history is bootstrapped by repeating its first entry.
    """
    if not history:
        raise ValueError("history must be non-empty")
    window = list(history[-cfg.h_o:])
    while len(window) < cfg.h_o:
        window.insert(0, window[0])
    parts = [norm.normalize_obs(obs.as_array()) for obs in window]
    if cfg.use_keypoints:
        parts.append(encode(buffer, kp_cfg, norm))
    return np.concatenate(parts).astype(np.float32)


def run_episode(scene: Scene, model: DenoiserModel, cfg: ControllerConfig,
                kp_cfg: KeypointConfig, rng, *, norm,
                sched: NoiseSchedule | None = None,
                sim_cfg: SimConfig | None = None,
                keep_plans: bool = False,
                on_tick=None) -> RolloutRecord:
    """Run one closed-loop episode and return its full trace.

    ``norm`` is the NormStats the model was trained with; ``sched`` defaults
    to the standard 45-step schedule. ``on_tick`` is called after every
    applied action with (tick, state, plan) and exists for live streaming.
    """
    if model.desc.cond_dim != cfg.cond_dim:
        raise ValueError(
            f"model expects conditioning width {model.desc.cond_dim}, "
            f"controller would provide {cfg.cond_dim}")
    if sched is None:
        sched = make_schedule(45)
    if sim_cfg is None:
        sim_cfg = SimConfig()

    state = sim2d.init_state(scene)
    history = [sim2d.observe(state)]
    buffer = KeypointBuffer(entries=())
    rec = RolloutRecord(observations=[history[0]], actions=[],
                        keypoint_events=[], kp_counts=[], success=False,
                        iterations=0, inference_s=[], sample_ticks=[])

    norm_plan = None  # previous plan in normalized space, for warmstarting
    plan = None
    cursor = 0
    tick = 0
    while tick < cfg.max_iters and not rec.success:
        if plan is None or cursor >= cfg.h_a:
            cond = build_conditioning(history, buffer, cfg, kp_cfg, norm)
            t0 = time.perf_counter()
            norm_plan = sample(model, cond, sched, rng,
                               warmstart=norm_plan if cfg.warmstart else None,
                               h_a=cfg.h_a)
            rec.inference_s.append(time.perf_counter() - t0)
            rec.sample_ticks.append(tick)
            plan = norm.denormalize_action(norm_plan)
            if keep_plans:
                rec.plans.append(plan.copy())
            cursor = 0
        action = plan[cursor]
        cursor += 1
        state = sim2d.step(state, scene, action, sim_cfg)
        obs = sim2d.observe(state)
        history.append(obs)
        tick += 1
        rec.observations.append(obs)
        rec.actions.append(np.asarray(action, dtype=float).copy())

        cand = detect_contact(obs, kp_cfg)
        if cand is not None:
            buffer, inserted = maybe_insert(buffer, cand, kp_cfg)
            if inserted:
                rec.keypoint_events.append((tick, buffer.entries[-1]))
        rec.kp_counts.append(len(buffer))

        dist = float(np.hypot(*(state.position - scene.goal)))
        rec.success = dist <= cfg.success_radius
        if on_tick is not None:
            on_tick(tick, state, plan)
    rec.iterations = tick
    return rec


def save_rollout(path, scene: Scene, rec: RolloutRecord) -> None:
    """One JSON record per tick, between a scene header and a result trailer."""
    ms_by_tick = {t: s * 1e3 for t, s in zip(rec.sample_ticks, rec.inference_s)}
    with open(path, "w") as f:
        f.write(json.dumps({"scene": sim2d.scene_to_dict(scene)}) + "\n")
        for i, action in enumerate(rec.actions):
            obs = rec.observations[i + 1]
            row = {
                "t": i + 1,
                "obs": [round(float(v), 9) for v in obs.as_array()],
                "action": [round(float(v), 9) for v in action],
                "kp_count": rec.kp_counts[i],
            }
            if i in ms_by_tick:
                row["inference_ms"] = round(ms_by_tick[i], 3)
            f.write(json.dumps(row) + "\n")
        f.write(json.dumps({"success": rec.success,
                            "iterations": rec.iterations}) + "\n")


def load_rollout(path) -> tuple[Scene, list[dict], dict]:
    """Inverse of save_rollout: (scene, tick records, trailer)."""
    with open(path) as f:
        rows = [json.loads(line) for line in f if line.strip()]
    if not rows or "scene" not in rows[0]:
        raise ValueError(f"{path}: missing scene header")
    if "success" not in rows[-1]:
        raise ValueError(f"{path}: missing result trailer")
    return sim2d.scene_from_dict(rows[0]["scene"]), rows[1:-1], rows[-1]
