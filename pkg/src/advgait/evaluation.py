"""Evaluation metric suite over motions x difficulty levels.

Linear and angular commands are assessed separately (the other set to zero)
and metrics are averaged across both runs.  Metrics accumulate only while
the robot is alive; survival is the fraction of episodes that never fall.
Joint position error is reported in radians (the joint-space analog of the
published metric, which is labeled in meters).
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .env import (IDX_PITCH, IDX_QU, IDX_ROLL, IDX_VX, IDX_VY, IDX_YAW_RATE,
                  EnvConfig, N_LOWER_ACT, N_UPPER_ACT, SurrogateBatch)

# (vx, vy, yaw, terrain level, push) per difficulty level.
DIFFICULTY_LEVELS = {
    "easy": (0.7, 0.0, 0.2, 0, False),
    "medium": (1.0, 0.3, 0.4, 3, True),
    "hard": (1.3, 0.6, 0.6, 6, True),
}

ARM_L1, ARM_L2 = 0.3, 0.25


@dataclass
class EvalReport:
    level: str
    e_vel: float
    e_ang: float
    e_jpe_upper: float      # radians (see module docstring)
    e_kpe_upper: float      # meters
    e_action_upper: float
    e_action_lower: float
    e_g: float
    survival_rate: float
    n_episodes: int

    COLUMNS = ["level", "e_vel", "e_ang", "e_jpe_upper", "e_kpe_upper",
               "e_action_upper", "e_action_lower", "e_g", "survival_rate",
               "n_episodes"]

    def row(self):
        return [self.level, self.e_vel, self.e_ang, self.e_jpe_upper,
                self.e_kpe_upper, self.e_action_upper, self.e_action_lower,
                self.e_g, self.survival_rate, self.n_episodes]

    def validate(self) -> None:
        if not 0.0 <= self.survival_rate <= 1.0:
            raise ValueError("survival rate out of [0, 1]")
        for name in ("e_vel", "e_ang", "e_jpe_upper", "e_kpe_upper",
                     "e_action_upper", "e_action_lower", "e_g"):
            if getattr(self, name) < 0:
                raise ValueError(f"negative error metric {name}")


def hand_positions(q_u: np.ndarray) -> np.ndarray:
    """Planar two-link forward kinematics of both hands, (..., 2 arms, 2)."""
    q = np.asarray(q_u, dtype=np.float64)
    out = np.empty(q.shape[:-1] + (2, 2))
    for k, (i_sh, i_el) in enumerate(((0, 1), (2, 3))):
        sh = q[..., i_sh]
        el = q[..., i_el]
        out[..., k, 0] = ARM_L1 * np.sin(sh) + ARM_L2 * np.sin(sh + el)
        out[..., k, 1] = -(ARM_L1 * np.cos(sh) + ARM_L2 * np.cos(sh + el))
    return out


@dataclass
class MetricAccumulator:
    """Ordered, mergeable sums so parallel evaluation reduces deterministically."""

    vel_err: float = 0.0
    vel_n: int = 0
    ang_err: float = 0.0
    ang_n: int = 0
    jpe: float = 0.0
    kpe: float = 0.0
    act_u: float = 0.0
    act_l: float = 0.0
    g_err: float = 0.0
    all_n: int = 0
    episodes: int = 0
    survived: int = 0

    def merge(self, other: "MetricAccumulator") -> None:
        for name in ("vel_err", "vel_n", "ang_err", "ang_n", "jpe", "kpe",
                     "act_u", "act_l", "g_err", "all_n", "episodes", "survived"):
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def report(self, level: str) -> EvalReport:
        rep = EvalReport(
            level=level,
            e_vel=self.vel_err / max(self.vel_n, 1),
            e_ang=self.ang_err / max(self.ang_n, 1),
            e_jpe_upper=self.jpe / max(self.all_n, 1),
            e_kpe_upper=self.kpe / max(self.all_n, 1),
            e_action_upper=self.act_u / max(self.all_n, 1),
            e_action_lower=self.act_l / max(self.all_n, 1),
            e_g=self.g_err / max(self.all_n, 1),
            survival_rate=self.survived / max(self.episodes, 1),
            n_episodes=self.episodes,
        )
        rep.validate()
        return rep


def accumulate_trajectory(acc: MetricAccumulator, command3: np.ndarray,
                          states: np.ndarray, refs: np.ndarray,
                          actions_l: np.ndarray, actions_u: np.ndarray,
                          alive: np.ndarray, mode: str) -> None:
    """Fold one episode's per-step arrays into the accumulator.

    ``alive`` masks steps after a fall out of the means; ``mode`` is
    "linear" or "angular" and routes the tracking-error metric.
    """
    n = int(alive.sum())
    if n == 0:
        acc.episodes += 1
        return
    s = states[alive]
    v_err = np.sqrt((command3[0] - s[:, IDX_VX]) ** 2
                    + (command3[1] - s[:, IDX_VY]) ** 2)
    a_err = np.abs(command3[2] - s[:, IDX_YAW_RATE])
    if mode == "linear":
        acc.vel_err += float(v_err.sum())
        acc.vel_n += n
    else:
        acc.ang_err += float(a_err.sum())
        acc.ang_n += n
    q_u = s[:, IDX_QU:IDX_QU + 5]
    r = refs[alive]
    acc.jpe += float(np.abs(r - q_u).mean(axis=1).sum())
    hp = hand_positions(q_u)
    hr = hand_positions(r)
    acc.kpe += float(np.sqrt(((hp - hr) ** 2).sum(axis=-1)).mean(axis=-1).sum())
    da_l = np.abs(np.diff(actions_l, axis=0, prepend=actions_l[:1]))
    da_u = np.abs(np.diff(actions_u, axis=0, prepend=actions_u[:1]))
    acc.act_l += float(da_l[alive].mean(axis=1).sum())
    acc.act_u += float(da_u[alive].mean(axis=1).sum())
    g = np.sin(s[:, [IDX_ROLL, IDX_PITCH]])
    acc.g_err += float(np.sqrt((g ** 2).sum(axis=1)).sum())
    acc.all_n += n
    acc.episodes += 1
    acc.survived += int(alive.all())


def _run_chunk(args):
    """Evaluate a chunk of (global index, clip) pairs; per-clip accumulators.

    Episode seeds depend only on the global clip index, and the surrogate
    step is independent per instance, so results are identical however the
    clips are partitioned across workers.
    """
    (indexed_clips, level, env_cfg, lower_ctrl, upper_ctrl, steps, seed) = args
    idxs = [i for i, _ in indexed_clips]
    clips = [c for _, c in indexed_clips]
    vx, vy, yaw, terrain, push = DIFFICULTY_LEVELS[level]
    per_clip = [MetricAccumulator() for _ in clips]
    modes = [("linear", np.array([vx, vy, 0.0])),
             ("angular", np.array([0.0, 0.0, yaw]))]
    for mode, cmd3 in modes:
        n = len(clips)
        batch = SurrogateBatch(env_cfg, n)
        batch.reset_all([seed + 31 * idxs[i] for i in range(n)], dr_enabled=False)
        cmd = np.tile(np.concatenate([cmd3, [float(terrain), 1.0 if push else 0.0]]),
                      (n, 1))
        prev_a_l = np.zeros((n, N_LOWER_ACT))
        prev_a_u = np.zeros((n, N_UPPER_ACT))
        states = np.empty((steps, n, batch.state.shape[1]))
        refs = np.empty((steps, n, 5))
        acts_l = np.empty((steps, n, N_LOWER_ACT))
        acts_u = np.empty((steps, n, N_UPPER_ACT))
        fallen_at = np.full(n, steps, dtype=np.int64)
        alive_mask = np.ones(n, dtype=bool)
        for t in range(steps):
            ref = np.stack([c.frame_at(t) for c in clips])
            a_l = lower_ctrl.act(batch.state, cmd, prev_a_l)
            a_u = upper_ctrl.act(batch.state, ref, prev_a_u)
            new_state, info = batch.step(a_l, a_u, cmd)
            states[t] = new_state
            refs[t] = ref
            acts_l[t] = a_l
            acts_u[t] = a_u
            newly = alive_mask & (info[:, 0] > 0.5)
            fallen_at[newly] = t
            alive_mask &= ~(info[:, 0] > 0.5)
            prev_a_l, prev_a_u = a_l, a_u
        for i in range(n):
            alive = np.arange(steps) < fallen_at[i]
            accumulate_trajectory(per_clip[i], cmd3, states[:, i], refs[:, i],
                                  acts_l[:, i], acts_u[:, i], alive, mode)
    return list(zip(idxs, per_clip))


def evaluate(lower_ctrl, upper_ctrl, motion_set, level: str,
             env_cfg: EnvConfig | None = None, steps: int = 300,
             seed: int = 0, workers: int = 1) -> EvalReport:
    """Run every motion under the level's linear and angular commands."""
    if level not in DIFFICULTY_LEVELS:
        raise ValueError(f"unknown difficulty level {level!r}")
    clips = list(motion_set)
    if not clips:
        raise ValueError("empty motion set")
    env_cfg = env_cfg or EnvConfig()
    indexed = list(enumerate(clips))
    chunks = max(1, min(workers, len(clips)))
    parts = [indexed[i::chunks] for i in range(chunks)]
    args = [(part, level, env_cfg, lower_ctrl, upper_ctrl, steps, seed)
            for part in parts if part]
    if chunks == 1:
        results = [_run_chunk(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=chunks) as pool:
            results = list(pool.map(_run_chunk, args))
    flat = [pair for chunk in results for pair in chunk]
    flat.sort(key=lambda p: p[0])
    total = MetricAccumulator()
    for _, acc in flat:
        total.merge(acc)
    return total.report(level)


def write_reports_csv(path, reports: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EvalReport.COLUMNS)
        for r in reports:
            w.writerow(r.row())


def format_reports(reports: list) -> str:
    """Fixed-width text table."""
    cols = EvalReport.COLUMNS
    rows = [[f"{v:.4f}" if isinstance(v, float) else str(v) for v in r.row()]
            for r in reports]
    widths = [max(len(c), *(len(row[i]) for row in rows)) if rows else len(c)
              for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(widths[i]) for i, c in enumerate(cols))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(row[i].ljust(widths[i]) for i in range(len(cols))))
    return "\n".join(lines)
