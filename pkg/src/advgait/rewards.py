"""Lower- and upper-body reward banks on surrogate quantities.

Every term is evaluated separately and carries its printed weight, so tests
can pin each expression against an independently coded oracle.  Batched
evaluation over (N, .) arrays is the training path; the single-sample
wrappers return a full per-term breakdown.

Quantity sources (see docs/surrogate_mapping.md): state vectors before and
after the step, the raw policy actions of this and the previous step, the
3-vector velocity command, and the StepInfo torques/accelerations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .env import (INFO_BACC, INFO_FALLEN, INFO_QDD_LEG, INFO_QDD_U, INFO_TAU_L,
                  INFO_TAU_U, IDX_CONTACT_L, IDX_DFEET, IDX_DKNEE, IDX_F_L,
                  IDX_FV_L, IDX_H, IDX_PHASE_L, IDX_PITCH, IDX_PITCH_RATE,
                  IDX_QDLEG, IDX_QDU, IDX_QLEG, IDX_QU, IDX_ROLL, IDX_ROLL_RATE,
                  IDX_VX, IDX_VY, IDX_VZ, IDX_YAW_RATE, IDX_Z_L, STATE_DIM,
                  EnvConfig)


class RewardConfigError(ValueError):
    """A reward term's surrogate quantity is unavailable."""


@dataclass
class RewardParams:
    """Printed weights and coefficients of both reward banks."""

    # Lower bank weights.
    w_dof_limits: float = -5.0
    w_alive: float = 0.15
    w_lin_vel_z: float = -2.0
    w_ang_vel_xy: float = -0.5
    w_orientation: float = -1.0
    w_torque: float = -1e-5
    w_base_height: float = -10.0
    w_dof_acc: float = -2.5e-7
    w_dof_vel: float = -1e-3
    w_action_rate: float = -0.01
    w_hip_dof: float = -1.0
    w_slippage: float = -0.2
    w_feet_swing: float = -20.0
    w_feet_contact: float = 0.18
    w_feet_distance: float = 0.5
    w_knee_distance: float = 0.4
    w_stand_still: float = -2.0
    w_ankle_torque: float = -5e-5
    w_ankle_action_rate: float = -0.02
    w_stance_base_vel: float = -1.0
    w_contact_force: float = -0.01
    w_track_lin: float = 2.0
    w_track_ang: float = 1.0
    # Upper bank weights (shared names reuse the lower values where printed equal).
    w_upper_dof_limits: float = -5.0
    w_upper_alive: float = 0.15
    w_upper_orientation: float = -1.0
    w_upper_torque: float = -1e-5
    w_upper_dof_acc: float = -2.5e-7
    w_upper_dof_vel: float = -1e-3
    w_upper_action_rate: float = -0.01
    w_upper_track: float = 10.0
    # Coefficients and thresholds.
    track_lin_coef: float = 4.0
    track_ang_coef: float = 4.0
    upper_track_coef: float = 0.5
    swing_height_target: float = 0.08
    contact_force_offset: float = 100.0
    stand_still_gate: float = 0.1
    contact_force_gate: float = 1.0
    phase_contact_gate: float = 0.55
    dist_exp_coef: float = 100.0
    dist_range: tuple = (0.18, 0.45)   # not derived from any printed value
    h_target: float = 1.0

    def validate(self) -> None:
        for name, value in self.__dict__.items():
            arr = np.asarray(value, dtype=np.float64)
            if not np.isfinite(arr).all():
                raise RewardConfigError(f"non-finite reward parameter {name}")


@dataclass
class RewardBreakdown:
    """Per-term (raw, weight, weighted) map with the summed total."""

    terms: dict        # name -> (raw, weight, weighted)
    total: float

    @staticmethod
    def from_raws(raws: dict, weights: dict) -> "RewardBreakdown":
        terms = {}
        total = 0.0
        for name, raw in raws.items():
            w = weights[name]
            weighted = raw * w
            terms[name] = (raw, w, weighted)
            total += weighted
        return RewardBreakdown(terms, total)


LOWER_TERMS = [
    "dof_pos_limits", "alive",
    "lin_vel_z", "ang_vel_xy", "orientation", "torque", "base_height",
    "dof_acc", "dof_vel", "action_rate", "hip_dof_pos", "slippage",
    "feet_swing_height", "feet_contact", "feet_distance", "knee_distance",
    "stand_still", "ankle_torque", "ankle_action_rate", "stance_base_vel",
    "feet_contact_forces",
    "track_lin_vel", "track_ang_vel",
]

UPPER_TERMS = [
    "dof_pos_limits", "alive",
    "orientation", "torque", "dof_acc", "dof_vel", "action_rate",
    "track_dof_pos",
]


def _check_inputs(state: np.ndarray, info: np.ndarray, bank: str, first_term: str):
    if state.shape[-1] != STATE_DIM:
        raise RewardConfigError(
            f"{bank} term '{first_term}': state vector has {state.shape[-1]} "
            f"slots, expected {STATE_DIM}")
    if info is None:
        raise RewardConfigError(f"{bank} term 'torque': StepInfo missing")


def _out_of_range(d: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.maximum(lo - d, 0.0) + np.maximum(d - hi, 0.0)


def lower_reward_raws(prev_state, state, action, prev_action, command, info,
                      params: RewardParams, config: EnvConfig) -> dict:
    """Raw (unweighted) values of every lower-bank term, batched."""
    s = np.atleast_2d(state)
    sp = np.atleast_2d(prev_state)
    a = np.atleast_2d(action)
    ap = np.atleast_2d(prev_action)
    c = np.atleast_2d(command)[:, :3]
    inf = np.atleast_2d(info) if info is not None else None
    _check_inputs(s, inf, "lower", LOWER_TERMS[0])

    q_leg = s[:, IDX_QLEG:IDX_QLEG + 6]
    q_leg_prev = sp[:, IDX_QLEG:IDX_QLEG + 6]
    qd_leg = s[:, IDX_QDLEG:IDX_QDLEG + 6]
    low = np.asarray(config.q_leg_low)
    high = np.asarray(config.q_leg_high)
    outside = ((q_leg < low) | (q_leg > high)).any(axis=1)

    fallen = inf[:, INFO_FALLEN] > 0.5
    tau_l = inf[:, INFO_TAU_L:INFO_TAU_L + 6]
    qdd_leg = inf[:, INFO_QDD_LEG:INFO_QDD_LEG + 6]

    g_xy = np.sin(s[:, [IDX_ROLL, IDX_PITCH]])
    cmd_norm = np.sqrt((c ** 2).sum(axis=1))
    standing = cmd_norm < params.stand_still_gate

    forces = s[:, IDX_F_L:IDX_F_L + 2]
    foot_vel = s[:, IDX_FV_L:IDX_FV_L + 2]
    swing_z = s[:, IDX_Z_L:IDX_Z_L + 2]
    phases = s[:, IDX_PHASE_L:IDX_PHASE_L + 2]
    # Printed gates differ per term: >= for slippage, < for swing, > for contact.
    force_ge = forces >= params.contact_force_gate
    force_lt = forces < params.contact_force_gate
    force_gt = forces > params.contact_force_gate
    phase_ind = phases < params.phase_contact_gate

    lo_r, hi_r = params.dist_range

    raws = {
        "dof_pos_limits": outside.astype(np.float64),
        "alive": (~fallen).astype(np.float64),
        "lin_vel_z": s[:, IDX_VZ] ** 2,
        "ang_vel_xy": s[:, IDX_ROLL_RATE] ** 2 + s[:, IDX_PITCH_RATE] ** 2,
        "orientation": (g_xy ** 2).sum(axis=1),
        "torque": (tau_l ** 2).sum(axis=1),
        "base_height": (s[:, IDX_H] - params.h_target) ** 2,
        "dof_acc": (qdd_leg ** 2).sum(axis=1),
        "dof_vel": (qd_leg ** 2).sum(axis=1),
        "action_rate": ((a - ap) ** 2).sum(axis=1),
        "hip_dof_pos": q_leg[:, 1] ** 2 + q_leg[:, 4] ** 2,
        "slippage": (foot_vel ** 2 * force_ge).sum(axis=1),
        "feet_swing_height": (((swing_z - params.swing_height_target) ** 2)
                              * force_lt).sum(axis=1),
        "feet_contact": (force_gt == phase_ind).sum(axis=1).astype(np.float64),
        "feet_distance": np.exp(-params.dist_exp_coef
                                * _out_of_range(s[:, IDX_DFEET], lo_r, hi_r)),
        "knee_distance": np.exp(-params.dist_exp_coef
                                * _out_of_range(s[:, IDX_DKNEE], lo_r, hi_r)),
        "stand_still": ((q_leg - q_leg_prev) ** 2).sum(axis=1) * standing,
        "ankle_torque": (tau_l[:, 3] ** 2 + tau_l[:, 4] ** 2),
        "ankle_action_rate": ((a[:, 3] - ap[:, 3]) ** 2 + (a[:, 4] - ap[:, 4]) ** 2),
        "stance_base_vel": (s[:, IDX_VX] ** 2 + s[:, IDX_VY] ** 2
                            + s[:, IDX_VZ] ** 2) * standing,
        "feet_contact_forces": np.minimum(
            np.sqrt((forces ** 2).sum(axis=1)) - params.contact_force_offset, 0.0),
        "track_lin_vel": np.exp(-params.track_lin_coef
                                * ((c[:, 0] - s[:, IDX_VX]) ** 2
                                   + (c[:, 1] - s[:, IDX_VY]) ** 2)),
        "track_ang_vel": np.exp(-params.track_ang_coef
                                * (c[:, 2] - s[:, IDX_YAW_RATE]) ** 2),
    }
    return raws


def lower_weights(params: RewardParams) -> dict:
    return {
        "dof_pos_limits": params.w_dof_limits,
        "alive": params.w_alive,
        "lin_vel_z": params.w_lin_vel_z,
        "ang_vel_xy": params.w_ang_vel_xy,
        "orientation": params.w_orientation,
        "torque": params.w_torque,
        "base_height": params.w_base_height,
        "dof_acc": params.w_dof_acc,
        "dof_vel": params.w_dof_vel,
        "action_rate": params.w_action_rate,
        "hip_dof_pos": params.w_hip_dof,
        "slippage": params.w_slippage,
        "feet_swing_height": params.w_feet_swing,
        "feet_contact": params.w_feet_contact,
        "feet_distance": params.w_feet_distance,
        "knee_distance": params.w_knee_distance,
        "stand_still": params.w_stand_still,
        "ankle_torque": params.w_ankle_torque,
        "ankle_action_rate": params.w_ankle_action_rate,
        "stance_base_vel": params.w_stance_base_vel,
        "feet_contact_forces": params.w_contact_force,
        "track_lin_vel": params.w_track_lin,
        "track_ang_vel": params.w_track_ang,
    }


def upper_reward_raws(prev_state, state, action, prev_action, ref_q_u, info,
                      params: RewardParams, config: EnvConfig) -> dict:
    s = np.atleast_2d(state)
    a = np.atleast_2d(action)
    ap = np.atleast_2d(prev_action)
    ref = np.atleast_2d(ref_q_u)
    inf = np.atleast_2d(info) if info is not None else None
    _check_inputs(s, inf, "upper", UPPER_TERMS[0])

    q_u = s[:, IDX_QU:IDX_QU + 5]
    qd_u = s[:, IDX_QDU:IDX_QDU + 5]
    low = np.asarray(config.q_u_low)
    high = np.asarray(config.q_u_high)
    outside = ((q_u < low) | (q_u > high)).any(axis=1)
    fallen = inf[:, INFO_FALLEN] > 0.5
    tau_u = inf[:, INFO_TAU_U:INFO_TAU_U + 5]
    qdd_u = inf[:, INFO_QDD_U:INFO_QDD_U + 5]
    g_xy = np.sin(s[:, [IDX_ROLL, IDX_PITCH]])

    return {
        "dof_pos_limits": outside.astype(np.float64),
        "alive": (~fallen).astype(np.float64),
        "orientation": (g_xy ** 2).sum(axis=1),
        "torque": (tau_u ** 2).sum(axis=1),
        "dof_acc": (qdd_u ** 2).sum(axis=1),
        "dof_vel": (qd_u ** 2).sum(axis=1),
        "action_rate": ((a - ap) ** 2).sum(axis=1),
        "track_dof_pos": np.exp(-params.upper_track_coef
                                * ((ref - q_u) ** 2).sum(axis=1)),
    }


def upper_weights(params: RewardParams) -> dict:
    return {
        "dof_pos_limits": params.w_upper_dof_limits,
        "alive": params.w_upper_alive,
        "orientation": params.w_upper_orientation,
        "torque": params.w_upper_torque,
        "dof_acc": params.w_upper_dof_acc,
        "dof_vel": params.w_upper_dof_vel,
        "action_rate": params.w_upper_action_rate,
        "track_dof_pos": params.w_upper_track,
    }


def _total(raws: dict, weights: dict) -> np.ndarray:
    total = None
    for name, raw in raws.items():
        term = raw * weights[name]
        total = term if total is None else total + term
    return total


def lower_reward_batch(prev_state, state, action, prev_action, command, info,
                       params: RewardParams, config: EnvConfig) -> np.ndarray:
    raws = lower_reward_raws(prev_state, state, action, prev_action, command,
                             info, params, config)
    return _total(raws, lower_weights(params))


def upper_reward_batch(prev_state, state, action, prev_action, ref_q_u, info,
                       params: RewardParams, config: EnvConfig) -> np.ndarray:
    raws = upper_reward_raws(prev_state, state, action, prev_action, ref_q_u,
                             info, params, config)
    return _total(raws, upper_weights(params))


def lower_reward(prev_state, state, action, prev_action, command, info,
                 params: RewardParams, config: EnvConfig) -> RewardBreakdown:
    raws = lower_reward_raws(prev_state, state, action, prev_action, command,
                             info, params, config)
    return RewardBreakdown.from_raws({k: float(v[0]) for k, v in raws.items()},
                                     lower_weights(params))


def upper_reward(prev_state, state, action, prev_action, ref_q_u, info,
                 params: RewardParams, config: EnvConfig) -> RewardBreakdown:
    raws = upper_reward_raws(prev_state, state, action, prev_action, ref_q_u,
                             info, params, config)
    return RewardBreakdown.from_raws({k: float(v[0]) for k, v in raws.items()},
                                     upper_weights(params))


def tracking_score(q_u, ref_q_u, coef: float = 0.5) -> float:
    """exp(-coef * ||ref - q||^2); the command-curriculum gate statistic."""
    dq = np.asarray(ref_q_u, dtype=np.float64) - np.asarray(q_u, dtype=np.float64)
    return float(np.exp(-coef * (dq ** 2).sum()))


def write_breakdown_csv(path, breakdowns: list[RewardBreakdown]) -> None:
    """Per-step term log for debugging."""
    if not breakdowns:
        raise ValueError("no breakdowns to write")
    names = list(breakdowns[0].terms.keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step"] + names + ["total"])
        for i, b in enumerate(breakdowns):
            w.writerow([i] + [repr(b.terms[n][2]) for n in names] + [repr(b.total)])
