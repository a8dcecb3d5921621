"""Procedural upper-body motion library.

64 cyclic clips across 8 categories (wave left/right/both, raise, circle
left/right, punch, salute), each a parameter-grid variant (amplitude x
frequency x duration).  Clips are absolute joint-target trajectories for the
5 upper joints and stay within joint limits at full motion scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import EnvConfig


@dataclass
class MotionClip:
    clip_id: str
    label: str            # text slot used in annotations
    category: str
    frames: np.ndarray    # (T, 5) absolute upper joint targets

    @property
    def duration(self) -> int:
        return self.frames.shape[0]

    def frame_at(self, t: int) -> np.ndarray:
        """Cyclic lookup; clips tile over longer episodes."""
        return self.frames[t % self.frames.shape[0]]


@dataclass
class MotionLibrary:
    clips: list

    def __len__(self) -> int:
        return len(self.clips)

    def __iter__(self):
        return iter(self.clips)

    def by_id(self, clip_id: str) -> MotionClip:
        for c in self.clips:
            if c.clip_id == clip_id:
                return c
        raise KeyError(clip_id)

    @property
    def categories(self) -> list:
        seen = []
        for c in self.clips:
            if c.category not in seen:
                seen.append(c.category)
        return seen


# category -> (label, frame generator(theta, amp, q0) -> (T,5))
def _wave(side):
    def gen(theta, amp, q0):
        f = np.tile(q0, (theta.shape[0], 1))
        idx = 0 if side == "left" else 2
        f[:, idx] = q0[idx] + amp * (1.0 + 0.2 * np.sin(theta))
        f[:, idx + 1] = q0[idx + 1] + amp * 0.8 * (0.5 + 0.5 * np.sin(theta))
        return f
    return gen


def _wave_both(theta, amp, q0):
    f = np.tile(q0, (theta.shape[0], 1))
    for idx in (0, 2):
        f[:, idx] = q0[idx] + amp * (1.0 + 0.2 * np.sin(theta))
        f[:, idx + 1] = q0[idx + 1] + amp * 0.8 * (0.5 + 0.5 * np.sin(theta))
    f[:, 4] = 0.3 * amp * np.sin(theta)
    return f


def _raise_both(theta, amp, q0):
    f = np.tile(q0, (theta.shape[0], 1))
    lift = 1.8 * (0.5 - 0.5 * np.cos(theta))
    f[:, 0] = q0[0] + amp * lift
    f[:, 2] = q0[2] + amp * lift
    return f


def _circle(side):
    def gen(theta, amp, q0):
        f = np.tile(q0, (theta.shape[0], 1))
        idx = 0 if side == "left" else 2
        f[:, idx] = q0[idx] + amp * (0.8 + 0.5 * np.sin(theta))
        f[:, idx + 1] = q0[idx + 1] + amp * (0.5 + 0.5 * np.cos(theta))
        return f
    return gen


def _punch(theta, amp, q0):
    f = np.tile(q0, (theta.shape[0], 1))
    f[:, 0] = q0[0] + amp * 0.6 * (1.0 + np.sin(theta))
    f[:, 2] = q0[2] + amp * 0.6 * (1.0 - np.sin(theta))
    f[:, 1] = q0[1] + amp * 0.5 * (1.0 - np.sin(theta))
    f[:, 3] = q0[3] + amp * 0.5 * (1.0 + np.sin(theta))
    return f


def _salute(theta, amp, q0):
    f = np.tile(q0, (theta.shape[0], 1))
    lift = 0.5 - 0.5 * np.cos(theta)
    f[:, 2] = q0[2] + amp * 1.5 * lift
    f[:, 3] = q0[3] + amp * 1.4 * lift
    f[:, 4] = 0.2 * amp * np.sin(theta)
    return f


CATEGORY_GENERATORS = {
    "wave_left": ("wave left hand", _wave("left")),
    "wave_right": ("wave right hand", _wave("right")),
    "wave_both": ("wave both hands", _wave_both),
    "raise_both": ("raise both hands", _raise_both),
    "circle_left": ("circle left hand", _circle("left")),
    "circle_right": ("circle right hand", _circle("right")),
    "punch": ("punch forward", _punch),
    "salute": ("salute", _salute),
}

AMPLITUDES = (0.6, 1.0)
FREQUENCIES = (0.8, 1.4)       # Hz
DURATIONS = (100, 200)         # steps


def build_library(config: EnvConfig | None = None) -> MotionLibrary:
    """The default 64-clip library (8 categories x 2 amps x 2 freqs x 2 lengths)."""
    config = config or EnvConfig()
    q0 = np.asarray(config.q_u_default, dtype=np.float64)
    clips = []
    for category, (label, gen) in CATEGORY_GENERATORS.items():
        for amp in AMPLITUDES:
            for freq in FREQUENCIES:
                for dur in DURATIONS:
                    t = np.arange(dur)
                    theta = 2.0 * np.pi * freq * t * config.dt
                    frames = gen(theta, amp, q0)
                    clip = MotionClip(
                        clip_id=f"{category}-a{amp:.1f}-f{freq:.1f}-t{dur}",
                        label=label, category=category, frames=frames)
                    clips.append(clip)
    lib = MotionLibrary(clips)
    validate_library(lib, config)
    return lib


def validate_library(library: MotionLibrary, config: EnvConfig) -> None:
    low = np.asarray(config.q_u_low)
    high = np.asarray(config.q_u_high)
    for clip in library:
        if clip.duration < 50:
            raise ValueError(f"clip {clip.clip_id} shorter than 50 steps")
        if (clip.frames < low).any() or (clip.frames > high).any():
            raise ValueError(f"clip {clip.clip_id} exceeds joint limits at full scale")


def wave_family(library: MotionLibrary) -> MotionLibrary:
    """Subset used by the text-policy experiments (wave_* categories)."""
    return MotionLibrary([c for c in library if c.category.startswith("wave")])
