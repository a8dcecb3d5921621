"""Observation vectors and scripted controllers for the surrogate.

Observation layout mirrors the proprioception convention: joint positions,
joint velocities, base angular rates, projected gravity, last own action,
command (velocities for the lower policy, reference upper joints for the
upper policy), gait phase.  Critics additionally receive the base linear
velocity (privileged).
"""

from __future__ import annotations

import numpy as np

from .env import (IDX_H, IDX_PHASE_L, IDX_PITCH, IDX_PITCH_RATE, IDX_QDLEG,
                  IDX_QDU, IDX_QLEG, IDX_QU, IDX_ROLL, IDX_ROLL_RATE, IDX_VX,
                  IDX_VY, IDX_VZ, IDX_YAW_RATE, EnvConfig)

OBS_LOWER_DIM = 11 + 11 + 3 + 2 + 6 + 3 + 2   # 38
OBS_UPPER_DIM = 11 + 11 + 3 + 2 + 5 + 5 + 2   # 39
PRIV_EXTRA = 3                                # vx, vy, vz


def _common(state: np.ndarray):
    q = np.concatenate([state[:, IDX_QLEG:IDX_QLEG + 6],
                        state[:, IDX_QU:IDX_QU + 5]], axis=1)
    qd = np.concatenate([state[:, IDX_QDLEG:IDX_QDLEG + 6],
                         state[:, IDX_QDU:IDX_QDU + 5]], axis=1)
    omega = state[:, [IDX_ROLL_RATE, IDX_PITCH_RATE, IDX_YAW_RATE]]
    g_xy = np.sin(state[:, [IDX_ROLL, IDX_PITCH]])
    phase = state[:, IDX_PHASE_L:IDX_PHASE_L + 2]
    return q, qd, omega, g_xy, phase


def obs_lower(state: np.ndarray, command3: np.ndarray,
              last_action: np.ndarray) -> np.ndarray:
    q, qd, omega, g_xy, phase = _common(np.atleast_2d(state))
    return np.concatenate([q, qd, omega, g_xy, np.atleast_2d(last_action),
                           np.atleast_2d(command3), phase], axis=1)


def obs_upper(state: np.ndarray, ref_q_u: np.ndarray,
              last_action: np.ndarray) -> np.ndarray:
    q, qd, omega, g_xy, phase = _common(np.atleast_2d(state))
    return np.concatenate([q, qd, omega, g_xy, np.atleast_2d(last_action),
                           np.atleast_2d(ref_q_u), phase], axis=1)


def privileged(obs: np.ndarray, state: np.ndarray) -> np.ndarray:
    vel = np.atleast_2d(state)[:, [IDX_VX, IDX_VY, IDX_VZ]]
    return np.concatenate([np.atleast_2d(obs), vel], axis=1)


class ScriptedLower:
    """PD ankle stabilizer with direct command passthrough.

    Stable closed loop: ankle gains satisfy k_ankle * kp > g/l so the
    pendulum is regulated; used as the scoring/dataset oracle controller.
    """

    def __init__(self, config: EnvConfig, kp_pitch: float = 2.0, kd_pitch: float = 0.6,
                 kp_roll: float = 2.5, kd_roll: float = 0.7):
        self.config = config
        self.kp_pitch, self.kd_pitch = kp_pitch, kd_pitch
        self.kp_roll, self.kd_roll = kp_roll, kd_roll

    def act(self, state: np.ndarray, commands: np.ndarray,
            last_action: np.ndarray | None = None) -> np.ndarray:
        s = np.atleast_2d(state)
        c = np.atleast_2d(commands)
        n = s.shape[0]
        pitch_term = self.kp_pitch * s[:, IDX_PITCH] + self.kd_pitch * s[:, IDX_PITCH_RATE]
        roll_term = self.kp_roll * s[:, IDX_ROLL] + self.kd_roll * s[:, IDX_ROLL_RATE]
        a = np.zeros((n, 6))
        a[:, 0] = c[:, 0]
        a[:, 1] = c[:, 1]
        a[:, 2] = c[:, 2]
        a[:, 3] = np.clip(pitch_term + roll_term, -1.0, 1.0)
        a[:, 4] = np.clip(pitch_term - roll_term, -1.0, 1.0)
        return a


class OpenLoopUpper:
    """Plays the reference joint targets straight through as actions."""

    def act(self, state: np.ndarray, ref_q_u: np.ndarray,
            last_action: np.ndarray | None = None) -> np.ndarray:
        return np.atleast_2d(ref_q_u).copy()


class PolicyLowerController:
    """Frozen lower policy acting deterministically (mean action).

    Stateless: the caller supplies the previous own-action row, so episode
    resets stay the caller's responsibility.
    """

    def __init__(self, policy):
        self.policy = policy

    def act(self, state: np.ndarray, commands: np.ndarray,
            last_action: np.ndarray) -> np.ndarray:
        s = np.atleast_2d(state)
        o = obs_lower(s, np.atleast_2d(commands)[:, :3], last_action)
        return self.policy.act_deterministic(o, privileged(o, s))


class PolicyUpperController:
    """Frozen upper policy acting deterministically (mean action)."""

    def __init__(self, policy):
        self.policy = policy

    def act(self, state: np.ndarray, ref_q_u: np.ndarray,
            last_action: np.ndarray) -> np.ndarray:
        s = np.atleast_2d(state)
        o = obs_upper(s, np.atleast_2d(ref_q_u), last_action)
        return self.policy.act_deterministic(o, privileged(o, s))
