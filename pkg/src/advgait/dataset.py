"""Annotated trajectory generation: command grid x motion library.

Commands fall into 11 direction types (8 translations, 2 rotations, keep
standing) crossed with 4 magnitude levels (easy/medium/hard sampled from
their ranges, fix = constant 0.4), giving 41 categories; standing has no level.
Each (motion, category) pair yields one ~200-step episode with a templated
text annotation; fallen episodes are flagged and excluded from the
published stream.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass, field

import numpy as np

from .env import (IDX_H, IDX_HEADING, IDX_PITCH, IDX_PX, IDX_PY, IDX_ROLL,
                  IDX_VX, IDX_VY, IDX_YAW_RATE, IDX_QLEG, IDX_QU,
                  N_LOWER_ACT, N_UPPER_ACT, EnvConfig, SurrogateBatch)
from .motions import MotionLibrary, MotionClip

RECORD_SCHEMA = "advgait-trajectory-v1"

# Direction type -> (mode word, phrase, sign pattern (sx, sy, syaw)).
# Translations use the level's linear ranges; rotations its yaw range.
DIRECTIONS = {
    "front": ("go", "forward", (1, 0, 0)),
    "back": ("go", "backward", (-1, 0, 0)),
    "left": ("go", "left", (0, 1, 0)),
    "right": ("go", "right", (0, -1, 0)),
    "front_left": ("go", "forward to left", (1, 1, 0)),
    "front_right": ("go", "forward to right", (1, -1, 0)),
    "back_left": ("go", "backward to left", (-1, 1, 0)),
    "back_right": ("go", "backward to right", (-1, -1, 0)),
    "turn_left": ("turn", "left", (0, 0, 1)),
    "turn_right": ("turn", "right", (0, 0, -1)),
    "stand": ("keep standing", "", (0, 0, 0)),
}

# Level -> ((vx lo, hi), (vy lo, hi), (yaw lo, hi)) magnitude ranges.
COMMAND_LEVELS = {
    "easy": ((0.2, 0.4), (0.2, 0.3), (0.2, 0.3)),
    "medium": ((0.4, 0.5), (0.3, 0.4), (0.3, 0.4)),
    "hard": ((0.5, 0.7), (0.4, 0.5), (0.4, 0.5)),
    "fix": ((0.4, 0.4), (0.4, 0.4), (0.4, 0.4)),
}

LEVEL_WORDS = {"easy": "slowly", "medium": "moderately", "hard": "fast", "fix": ""}


def all_categories() -> list:
    """The 41 (direction, level) categories; standing carries no level."""
    cats = []
    for d in DIRECTIONS:
        if d == "stand":
            cats.append(("stand", None))
        else:
            for level in COMMAND_LEVELS:
                cats.append((d, level))
    return cats


@dataclass
class CommandSpec:
    direction: str
    level: str | None             # None only for "stand"
    vx: float = 0.0
    vy: float = 0.0
    yaw: float = 0.0

    @staticmethod
    def sample(direction: str, level: str | None, rng: np.random.Generator) -> "CommandSpec":
        if direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {direction!r}")
        sx, sy, syaw = DIRECTIONS[direction][2]
        if direction == "stand":
            return CommandSpec("stand", None)
        if level not in COMMAND_LEVELS:
            raise ValueError(f"unknown level {level!r}")
        (vxr, vyr, yr) = COMMAND_LEVELS[level]
        vx = sx * rng.uniform(*vxr) if sx else 0.0
        vy = sy * rng.uniform(*vyr) if sy else 0.0
        yaw = syaw * rng.uniform(*yr) if syaw else 0.0
        return CommandSpec(direction, level, vx, vy, yaw)

    def as_array(self, terrain: float = 0.0, push: bool = False) -> np.ndarray:
        return np.array([self.vx, self.vy, self.yaw, terrain,
                         1.0 if push else 0.0])


def render_text(mode: str, direction: str, level: str | None,
                motion_label: str) -> str:
    """Template fill: "<mode> <direction> <speed word> and <motion>"."""
    if mode == "keep standing":
        return f"keep standing and {motion_label}"
    word = LEVEL_WORDS.get(level, "") if level else ""
    parts = [mode, direction]
    if word:
        parts.append(word)
    return " ".join(parts) + f" and {motion_label}"


def text_for(spec: CommandSpec, motion_label: str) -> str:
    mode, phrase, _ = DIRECTIONS[spec.direction]
    return render_text(mode, phrase, spec.level, motion_label)


@dataclass
class TrajectoryRecord:
    """One annotated episode; all per-step arrays share the same length."""

    text: str
    clip_id: str
    direction: str
    level: str | None
    command: list                 # [vx, vy, yaw]
    states: list                  # per-step compact state features
    actions: list                 # per-step 11-dim whole-body actions
    dof_pos: list                 # per-step 11 joint positions
    trans: list                   # per-step [px, py, h]
    rot: list                     # per-step [roll, pitch, heading]
    fallen: bool = False
    schema: str = RECORD_SCHEMA

    STATE_FEATURES = 10   # [vx, vy, yaw_rate, g_roll, g_pitch, h,
                          #  roll_rate, pitch_rate, phase_l, phase_r]

    def validate(self) -> None:
        if self.schema != RECORD_SCHEMA:
            raise ValueError(f"unknown record schema {self.schema!r}")
        if not self.text:
            raise ValueError("empty annotation text")
        n = len(self.states)
        for name in ("actions", "dof_pos", "trans", "rot"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"array length mismatch in {name}")

    def to_json_obj(self) -> dict:
        return {
            "schema": self.schema, "text": self.text, "clip_id": self.clip_id,
            "direction": self.direction, "level": self.level,
            "command": self.command, "fallen": self.fallen,
            "states": self.states, "actions": self.actions,
            "dof_pos": self.dof_pos, "trans": self.trans, "rot": self.rot,
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "TrajectoryRecord":
        rec = TrajectoryRecord(
            text=obj["text"], clip_id=obj["clip_id"], direction=obj["direction"],
            level=obj["level"], command=obj["command"], states=obj["states"],
            actions=obj["actions"], dof_pos=obj["dof_pos"], trans=obj["trans"],
            rot=obj["rot"], fallen=obj["fallen"], schema=obj.get("schema", ""))
        rec.validate()
        return rec


def _round(arr: np.ndarray, digits: int = 5) -> list:
    return np.round(arr, digits).tolist()


def state_features(state_rows: np.ndarray) -> np.ndarray:
    s = np.atleast_2d(state_rows)
    g = np.sin(s[:, [IDX_ROLL, IDX_PITCH]])
    from .env import IDX_PHASE_L, IDX_PITCH_RATE, IDX_ROLL_RATE
    return np.column_stack([
        s[:, IDX_VX], s[:, IDX_VY], s[:, IDX_YAW_RATE], g[:, 0], g[:, 1],
        s[:, IDX_H], s[:, IDX_ROLL_RATE], s[:, IDX_PITCH_RATE],
        s[:, IDX_PHASE_L], s[:, IDX_PHASE_L + 1],
    ])


class RecordFormatError(ValueError):
    pass


def write_records(records, path) -> None:
    """Newline-delimited JSON, one record per line, streamed."""
    with open(path, "w") as fh:
        for rec in records:
            rec.validate()
            fh.write(json.dumps(rec.to_json_obj(), separators=(",", ":")))
            fh.write("\n")


def read_records(path):
    """Streaming reader; malformed lines raise with their line number."""
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                yield TrajectoryRecord.from_json_obj(obj)
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise RecordFormatError(f"{path}:{lineno}: bad record ({exc})") from exc


@dataclass
class CollectStats:
    total: int = 0
    published: int = 0
    fallen: int = 0
    per_category: dict = field(default_factory=dict)


def collect(lower_ctrl, upper_ctrl, library: MotionLibrary,
            env_cfg: EnvConfig | None = None, seed: int = 0,
            episode_steps: int | None = None, categories=None,
            include_fallen: bool = False, stats: CollectStats | None = None):
    """Yield one record per (motion, category) pair, batched over motions.

    Fallen episodes are flagged and skipped (unless include_fallen); values
    are rounded to 5 decimals when the record is built, so the written file
    reproduces the in-memory records exactly.
    """
    env_cfg = env_cfg or EnvConfig()
    steps = episode_steps or env_cfg.dataset_episode_steps
    cats = categories if categories is not None else all_categories()
    clips = list(library)
    if stats is None:
        stats = CollectStats()
    for direction, level in cats:
        tag = zlib.crc32(f"{direction}:{level}".encode())
        spec_rng = np.random.default_rng((seed, tag))
        n = len(clips)
        batch = SurrogateBatch(env_cfg, n)
        batch.reset_all([seed + 977 * i for i in range(n)], dr_enabled=False)
        specs = [CommandSpec.sample(direction, level, spec_rng) for _ in range(n)]
        cmd = np.stack([sp.as_array() for sp in specs])
        prev_a_l = np.zeros((n, N_LOWER_ACT))
        prev_a_u = np.zeros((n, N_UPPER_ACT))
        states = np.empty((steps, n, batch.state.shape[1]))
        acts = np.empty((steps, n, N_LOWER_ACT + N_UPPER_ACT))
        fallen = np.zeros(n, dtype=bool)
        for t in range(steps):
            refs = np.stack([c.frame_at(t) for c in clips])
            a_l = lower_ctrl.act(batch.state, cmd, prev_a_l)
            a_u = upper_ctrl.act(batch.state, refs, prev_a_u)
            new_state, info = batch.step(a_l, a_u, cmd)
            states[t] = new_state
            acts[t, :, :N_LOWER_ACT] = a_l
            acts[t, :, N_LOWER_ACT:] = a_u
            fallen |= info[:, 0] > 0.5
            prev_a_l, prev_a_u = a_l, a_u
        for i, clip in enumerate(clips):
            stats.total += 1
            key = f"{direction}:{level}"
            stats.per_category.setdefault(key, 0)
            if fallen[i]:
                stats.fallen += 1
                if not include_fallen:
                    continue
            st = states[:, i]
            rec = TrajectoryRecord(
                text=text_for(specs[i], clip.label),
                clip_id=clip.clip_id, direction=direction, level=level,
                command=_round(np.array([specs[i].vx, specs[i].vy, specs[i].yaw])),
                states=_round(state_features(st)),
                actions=_round(acts[:, i]),
                dof_pos=_round(np.column_stack([st[:, IDX_QLEG:IDX_QLEG + 6],
                                                st[:, IDX_QU:IDX_QU + 5]])),
                trans=_round(st[:, [IDX_PX, IDX_PY, IDX_H]]),
                rot=_round(st[:, [IDX_ROLL, IDX_PITCH, IDX_HEADING]]),
                fallen=bool(fallen[i]),
            )
            stats.per_category[key] += 1
            stats.published += 1
            yield rec


def balance_categories(library: MotionLibrary, max_spread: float = 1.5):
    """Repeat clips of under-represented categories until step counts even out.

    Returns (augmented library, report).  Repetitions are new clip entries
    with a suffixed id, so collection gives them distinct episode seeds
    rather than byte-duplicating trajectories.  An empty category is
    reported, never silently padded.
    """
    by_cat: dict = {}
    for clip in library:
        by_cat.setdefault(clip.category, []).append(clip)
    steps = {cat: sum(c.duration for c in clips) for cat, clips in by_cat.items()}
    empty = [cat for cat, total in steps.items() if total == 0]
    if empty:
        raise ValueError(f"empty motion categories: {empty}")
    target = max(steps.values())
    out = list(library.clips)
    report = {}
    for cat, clips in by_cat.items():
        total = steps[cat]
        reps = 0
        k = 0
        while target / total > max_spread:
            clip = clips[k % len(clips)]
            reps += 1
            out.append(MotionClip(f"{clip.clip_id}#rep{reps}", clip.label,
                                  clip.category, clip.frames))
            total += clip.duration
            k += 1
        report[cat] = {"before": steps[cat], "after": total, "repeats": reps}
    return MotionLibrary(out), report


def category_step_counts(library: MotionLibrary) -> dict:
    counts: dict = {}
    for clip in library:
        counts[clip.category] = counts.get(clip.category, 0) + clip.duration
    return counts


def write_manifest(path, stats: CollectStats, seed: int) -> None:
    manifest = {
        "schema": "advgait-dataset-manifest-v1",
        "record_schema": RECORD_SCHEMA,
        "seed": seed,
        "total_episodes": stats.total,
        "published": stats.published,
        "fallen_excluded": stats.fallen,
        "per_category": stats.per_category,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1)


def direction_correct(rec: TrajectoryRecord, stand_tol: float = 0.25) -> bool:
    """Does the mean displacement agree with the commanded direction?

    Translations: displacement dot the commanded planar direction > 0.
    Rotations: net heading change has the commanded sign.  Standing: total
    displacement stays below ``stand_tol`` meters.
    """
    trans = np.asarray(rec.trans)
    rot = np.asarray(rec.rot)
    disp = trans[-1, :2] - trans[0, :2]
    sx, sy, syaw = DIRECTIONS[rec.direction][2]
    if rec.direction == "stand":
        return bool(np.linalg.norm(disp) < stand_tol)
    if syaw:
        return bool(syaw * (rot[-1, 2] - rot[0, 2]) > 0)
    return bool(disp[0] * sx + disp[1] * sy > 0)
