"""Dual curriculum for lower-body training and the command-range curriculum.

Lower: motions are scored by survival length, sorted by rising difficulty,
and sampled from a moving window [alpha_d, alpha_d + w]; the window start
alpha_d and the motion scale alpha_s adapt to the mean survival length.
Upper: the velocity-command sampling range widens while mean tracking score
exceeds the 0.9 threshold and shrinks back otherwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .env import Command
from .motions import MotionClip, MotionLibrary

# Command-range limits and tracking threshold (printed values).
COMMAND_LIMIT_MIN = (-0.7, -0.5, -0.5)
COMMAND_LIMIT_MAX = (0.7, 0.5, 0.5)
TRACKING_THRESHOLD = 0.9
CURRICULUM_WINDOW = 40


@dataclass
class LowerCurriculumState:
    """Window start, motion scale, and the difficulty-sorted clip order."""

    sorted_order: list                    # clip ids, ascending difficulty
    alpha_d: int = 1                      # window start; starts at 1
    alpha_s: float = 0.1                  # initial scale: small start (not printed)
    window: int = CURRICULUM_WINDOW
    l_msl: float = 0.0

    def __post_init__(self):
        if self.window > len(self.sorted_order):
            raise ValueError("window larger than the motion library")
        self.clamp()

    def clamp(self) -> None:
        top = len(self.sorted_order) - self.window
        self.alpha_d = int(min(max(self.alpha_d, 0), top))
        self.alpha_s = float(min(max(self.alpha_s, 0.0), 1.0))


@dataclass
class CommandCurriculumState:
    c_min: np.ndarray = field(default_factory=lambda: np.array([-0.2, -0.2, -0.2]))
    c_max: np.ndarray = field(default_factory=lambda: np.array([0.2, 0.2, 0.2]))
    limit_min: np.ndarray = field(default_factory=lambda: np.array(COMMAND_LIMIT_MIN))
    limit_max: np.ndarray = field(default_factory=lambda: np.array(COMMAND_LIMIT_MAX))
    threshold: float = TRACKING_THRESHOLD

    def __post_init__(self):
        self.c_min = np.asarray(self.c_min, dtype=np.float64)
        self.c_max = np.asarray(self.c_max, dtype=np.float64)
        if ((self.c_min < self.limit_min - 1e-12).any()
                or (self.c_max > self.limit_max + 1e-12).any()
                or (self.c_min > self.c_max + 1e-12).any()):
            raise ValueError("command bounds out of order")


def scale_motion(clip: MotionClip, q_default, alpha_s: float) -> MotionClip:
    """Interpolate targets between the default pose and the reference clip."""
    if not 0.0 <= alpha_s <= 1.0:
        raise ValueError("alpha_s must lie in [0, 1]")
    q0 = np.asarray(q_default, dtype=np.float64)
    frames = q0 + alpha_s * (clip.frames - q0)
    return MotionClip(clip.clip_id, clip.label, clip.category, frames)


def score_and_sort(library: MotionLibrary, survival_fn, episodes_per_clip: int,
                   seed: int) -> list:
    """Order clip ids by ascending difficulty (descending mean survival).

    ``survival_fn(clip, episode_seed) -> steps`` runs one scoring episode; a
    raised exception scores that episode 0 (hardest).  Ties break by clip id.
    """
    scores = []
    ss = np.random.SeedSequence(seed)
    for i, clip in enumerate(library):
        total = 0.0
        for e in range(episodes_per_clip):
            ep_seed = int(np.random.default_rng(ss.spawn(1)[0]).integers(2 ** 63))
            try:
                total += float(survival_fn(clip, ep_seed))
            except Exception:
                total += 0.0
        mean = total / episodes_per_clip if episodes_per_clip else 0.0
        scores.append((-mean, clip.clip_id))
    scores.sort()
    return [cid for _, cid in scores]


def update_lower_curriculum(state: LowerCurriculumState, l_msl: float,
                            l_sl_max: int, library_size: int) -> LowerCurriculumState:
    """One curriculum update at episode termination.

    alpha_d moves up by w when mean survival clears 0.8 * l_sl_max and falls
    back by 2w otherwise; reaching the top wraps alpha_d to 0 and raises
    alpha_s by 0.05, while sitting at the bottom lowers alpha_s by 0.01.
    """
    w = state.window
    top = library_size - w
    if l_msl >= 0.8 * l_sl_max:
        alpha_d = min(state.alpha_d + w, top)
    else:
        alpha_d = max(state.alpha_d - 2 * w, 0)
    alpha_s = state.alpha_s
    if alpha_d == top:
        alpha_s = min(alpha_s + 0.05, 1.0)
        alpha_d = 0
    elif alpha_d == 0:
        alpha_s = max(alpha_s - 0.01, 0.0)
    return LowerCurriculumState(sorted_order=list(state.sorted_order),
                                alpha_d=alpha_d, alpha_s=alpha_s,
                                window=w, l_msl=float(l_msl))


def sample_adversarial_motion(state: LowerCurriculumState, library: MotionLibrary,
                              seed: int, q_default) -> tuple:
    """Uniform draw from the sorted window, scaled by the current alpha_s.

    Window positions are [alpha_d, alpha_d + w] inclusive, clipped to the
    last list index.  Returns (clip, scaled clip).
    """
    rng = np.random.default_rng(seed)
    hi = min(state.alpha_d + state.window, len(state.sorted_order) - 1)
    pos = int(rng.integers(state.alpha_d, hi + 1))
    clip = library.by_id(state.sorted_order[pos])
    return clip, scale_motion(clip, q_default, state.alpha_s)


def update_command_curriculum(state: CommandCurriculumState,
                              mean_tracking_score: float) -> CommandCurriculumState:
    """Widen the command range on good tracking, shrink symmetrically otherwise.

    The shrink stops at the midpoint of the current range so the bounds never
    cross (the printed clamp arguments for this branch are inconsistent; see
    the curriculum notes in the README).
    """
    if mean_tracking_score > state.threshold:
        c_min = np.maximum(state.c_min - 0.1, state.limit_min)
        c_max = np.minimum(state.c_max + 0.1, state.limit_max)
    else:
        mid = 0.5 * (state.c_min + state.c_max)
        c_min = np.minimum(state.c_min + 0.1, mid)
        c_max = np.maximum(state.c_max - 0.1, mid)
    c_min = np.clip(c_min, state.limit_min, state.limit_max)
    c_max = np.clip(c_max, state.limit_min, state.limit_max)
    return CommandCurriculumState(c_min, c_max, state.limit_min.copy(),
                                  state.limit_max.copy(), state.threshold)


def sample_command(state: CommandCurriculumState, seed: int,
                   terrain_level: int = 0, push_enabled: bool = False) -> Command:
    rng = np.random.default_rng(seed)
    v = rng.uniform(state.c_min, state.c_max)
    return Command(vx=float(v[0]), vy=float(v[1]), yaw=float(v[2]),
                   terrain_level=terrain_level, push_enabled=push_enabled)


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def curriculum_to_json(lower: LowerCurriculumState,
                       command: CommandCurriculumState) -> dict:
    return {
        "schema": "advgait-curriculum-v1",
        "lower": {
            "alpha_d": lower.alpha_d,
            "alpha_s": lower.alpha_s,
            "window": lower.window,
            "l_msl": lower.l_msl,
            "sorted_order": list(lower.sorted_order),
        },
        "command": {
            "c_min": command.c_min.tolist(),
            "c_max": command.c_max.tolist(),
            "limit_min": command.limit_min.tolist(),
            "limit_max": command.limit_max.tolist(),
            "threshold": command.threshold,
        },
    }


def curriculum_from_json(obj: dict) -> tuple:
    if obj.get("schema") != "advgait-curriculum-v1":
        raise ValueError(f"unknown curriculum schema {obj.get('schema')!r}")
    lo = obj["lower"]
    lower = LowerCurriculumState(sorted_order=list(lo["sorted_order"]),
                                 alpha_d=int(lo["alpha_d"]),
                                 alpha_s=float(lo["alpha_s"]),
                                 window=int(lo["window"]),
                                 l_msl=float(lo["l_msl"]))
    cm = obj["command"]
    command = CommandCurriculumState(np.asarray(cm["c_min"]), np.asarray(cm["c_max"]),
                                     np.asarray(cm["limit_min"]),
                                     np.asarray(cm["limit_max"]),
                                     float(cm["threshold"]))
    return lower, command


def save_curriculum(path, lower, command) -> None:
    with open(path, "w") as fh:
        json.dump(curriculum_to_json(lower, command), fh, indent=1)


def load_curriculum(path) -> tuple:
    with open(path) as fh:
        return curriculum_from_json(json.load(fh))
