"""Reduced-order planar humanoid surrogate.

The robot is a velocity-tracked base carrying an inverted-pendulum torso.
Leg motion is kinematic, driven by a two-phase gait variable; arm and waist
joints are second-order servos whose motion (static moment + reaction
torque) perturbs the torso lean, which the lower body can counteract with
ankle torque analogs.  All dynamics are first-order lags or semi-implicit
Euler pendulum updates, so step responses and instability growth rates are
analytically checkable.

Joint mapping (surrogate stands in for the full robot; one named joint per
reward-relevant body group):

    lower (6):  hip_pitch_L, hip_roll_L, knee_L, hip_pitch_R, hip_roll_R, knee_R
    upper (5):  shoulder_pitch_L, elbow_L, shoulder_pitch_R, elbow_R, waist_yaw
    lower action (6): thrust_x, thrust_y, yaw_cmd, ankle_L, ankle_R, height_cmd
    upper action (5): target positions of the upper joints

The full quantity-by-quantity mapping used by the reward banks is documented
in docs/surrogate_mapping.md.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import backend

# Flat state layout (float64); see EnvState properties for named access.
IDX_PX, IDX_PY, IDX_HEADING = 0, 1, 2
IDX_VX, IDX_VY, IDX_YAW_RATE = 3, 4, 5
IDX_H, IDX_VZ = 6, 7
IDX_ROLL, IDX_PITCH, IDX_ROLL_RATE, IDX_PITCH_RATE = 8, 9, 10, 11
IDX_PHASE_L, IDX_PHASE_R = 12, 13
IDX_QLEG = 14          # 6 entries
IDX_QDLEG = 20         # 6 entries
IDX_QU = 26            # 5 entries
IDX_QDU = 31           # 5 entries
IDX_CONTACT_L, IDX_CONTACT_R = 36, 37
IDX_F_L, IDX_F_R = 38, 39
IDX_FV_L, IDX_FV_R = 40, 41
IDX_Z_L, IDX_Z_R = 42, 43
IDX_DFEET, IDX_DKNEE = 44, 45
IDX_T = 46
STATE_DIM = 47

# Domain-randomization record layout.
DR_FRICTION, DR_MASS_ADD, DR_LINK_SCALE, DR_COM_X, DR_COM_Y, DR_DELAY = 0, 1, 2, 3, 4, 5
DR_DIM = 6

# StepInfo layout.
INFO_FALLEN = 0
INFO_TAU_L = 1        # 6 entries
INFO_TAU_U = 7        # 5 entries
INFO_QDD_LEG = 12     # 6 entries
INFO_QDD_U = 18       # 5 entries
INFO_BACC = 23        # 2 entries
INFO_DIM = 25

N_LOWER_ACT = 6
N_UPPER_ACT = 5
N_JOINTS = 11
DELAY_SLOTS = 3        # ring depth: up to 2 whole-step delays (40 ms at 20 ms dt)

MOVE_GATE = 0.1        # stand-still command-norm threshold


@dataclass
class EnvConfig:
    """Surrogate parameters; defaults give a desk-scale 50 Hz robot."""

    dt: float = 0.02
    gait_freq: float = 1.5          # not derived from any printed value
    gait_offset: float = 0.5        # not derived from any printed value
    pend_len: float = 1.0
    gravity: float = 9.81
    nominal_height: float = 1.0
    fall_lean: float = 0.7
    fall_height_frac: float = 0.6
    tau_v: float = 0.5
    tau_yaw: float = 0.3
    tau_h: float = 0.4
    arm_omega: float = 8.0
    arm_damping: float = 1.0
    arm_acc_max: float = 40.0
    arm_inertia: float = 0.6
    k_ankle_pitch: float = 8.0
    k_ankle_roll: float = 6.0
    k_acc: float = 0.10
    k_acc_roll: float = 0.10
    k_com: float = 1.5
    k_com_roll: float = 1.2
    k_react: float = 0.02
    drag_per_level: float = 0.08
    mass: float = 15.0
    i_yaw: float = 2.0
    k_tau_ankle: float = 25.0
    # Gait kinematics.
    speed_norm: float = 1.5
    hip_pitch_amp: float = 0.5
    hip_roll_amp: float = 0.15
    swing_base: float = 0.04
    swing_gain: float = 0.06
    knee_stand: float = 0.3
    knee_crouch: float = 0.35
    knee_lift: float = 2.5
    feet_dist0: float = 0.30
    feet_dist_gain: float = 0.8
    knee_dist0: float = 0.24
    knee_dist_gain: float = 0.6
    slip_base: float = 0.02
    slip_friction_gain: float = 0.3
    slip_terrain_gain: float = 0.02
    swing_foot_speed: float = 1.5
    force_dyn: float = 0.15
    # Pushes.
    push_interval_s: float = 10.0
    push_speed: float = 1.0
    # Episode lengths (training default / dataset collection default).
    max_episode_steps: int = 1000
    dataset_episode_steps: int = 200
    # Default upper pose and joint limits.
    q_u_default: tuple = (0.2, 0.4, 0.2, 0.4, 0.0)
    q_u_low: tuple = (-1.2, -0.3, -1.2, -0.3, -1.0)
    q_u_high: tuple = (2.6, 2.4, 2.6, 2.4, 1.0)
    q_leg_low: tuple = (-1.2, -0.6, -0.1, -1.2, -0.6, -0.1)
    q_leg_high: tuple = (1.2, 0.6, 2.2, 1.2, 0.6, 2.2)
    # Action bounds.
    act_l_low: tuple = (-2.0, -2.0, -2.0, -1.0, -1.0, -0.3)
    act_l_high: tuple = (2.0, 2.0, 2.0, 1.0, 1.0, 0.3)
    # Domain randomization ranges.
    dr_friction: tuple = (0.1, 1.25)
    dr_base_mass: tuple = (-3.0, 5.0)
    dr_link_scale: tuple = (0.9, 1.1)
    dr_com_offset: tuple = (-0.1, 0.1)
    dr_delay_ms: tuple = (0.0, 40.0)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        for tau in (self.tau_v, self.tau_yaw, self.tau_h):
            if tau <= self.dt:
                raise ValueError("actuator time constants must exceed dt")
        for lo, hi in (self.dr_friction, self.dr_base_mass, self.dr_link_scale,
                       self.dr_com_offset, self.dr_delay_ms):
            if lo > hi:
                raise ValueError("domain randomization range is inverted")

    @property
    def push_period(self) -> int:
        return max(1, int(round(self.push_interval_s / self.dt)))

    def vector(self) -> np.ndarray:
        """Packed kernel parameters (see kernel docstrings for slots)."""
        v = np.array([
            self.dt, self.gait_freq, self.gait_offset,
            self.gravity / self.pend_len, self.nominal_height,
            self.fall_lean, self.fall_height_frac,
            self.tau_v, self.tau_yaw, self.tau_h,
            self.arm_omega, self.arm_damping, self.arm_acc_max,
            self.arm_inertia,
            self.k_ankle_pitch, self.k_ankle_roll,
            self.k_acc, self.k_acc_roll,
            self.k_com, self.k_com_roll, self.k_react,
            self.drag_per_level, self.mass, self.i_yaw, self.k_tau_ankle,
            self.speed_norm, self.hip_pitch_amp, self.hip_roll_amp,
            self.swing_base, self.swing_gain,
            self.knee_stand, self.knee_crouch, self.knee_lift,
            self.feet_dist0, self.feet_dist_gain,
            self.knee_dist0, self.knee_dist_gain,
            self.slip_base, self.slip_friction_gain, self.slip_terrain_gain,
            self.swing_foot_speed, self.force_dyn,
        ], dtype=np.float64)
        return np.concatenate([
            v,
            np.asarray(self.q_u_default, dtype=np.float64),
            np.asarray(self.q_u_low, dtype=np.float64),
            np.asarray(self.q_u_high, dtype=np.float64),
            np.array([self.gravity], dtype=np.float64),
        ])


@dataclass
class Command:
    """Lower-body velocity command plus environment difficulty knobs."""

    vx: float = 0.0
    vy: float = 0.0
    yaw: float = 0.0
    terrain_level: int = 0
    push_enabled: bool = False

    def __post_init__(self):
        if not 0 <= self.terrain_level <= 10:
            raise ValueError("terrain_level must be in 0..10")

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.yaw,
                         float(self.terrain_level),
                         1.0 if self.push_enabled else 0.0])

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.vx ** 2 + self.vy ** 2 + self.yaw ** 2))


@dataclass
class ActionPair:
    lower: np.ndarray   # (6,)
    upper: np.ndarray   # (5,)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.lower.shape != (N_LOWER_ACT,) or self.upper.shape != (N_UPPER_ACT,):
            raise ValueError("bad action dimensions")
        if not (np.isfinite(self.lower).all() and np.isfinite(self.upper).all()):
            raise ValueError("non-finite action")


@dataclass
class StepInfo:
    fallen: bool
    tau_l: np.ndarray
    tau_u: np.ndarray
    qdd_leg: np.ndarray
    qdd_u: np.ndarray
    base_acc: np.ndarray

    @staticmethod
    def from_row(row: np.ndarray) -> "StepInfo":
        return StepInfo(
            fallen=bool(row[INFO_FALLEN] > 0.5),
            tau_l=row[INFO_TAU_L:INFO_TAU_L + 6].copy(),
            tau_u=row[INFO_TAU_U:INFO_TAU_U + 5].copy(),
            qdd_leg=row[INFO_QDD_LEG:INFO_QDD_LEG + 6].copy(),
            qdd_u=row[INFO_QDD_U:INFO_QDD_U + 5].copy(),
            base_acc=row[INFO_BACC:INFO_BACC + 2].copy(),
        )


@dataclass
class EnvState:
    """Full surrogate state: flat dynamics vector plus episode-scoped extras.

    The flat vector is the part the dynamics kernel sees; the DR record,
    delay ring and disturbance seed ride along so ``step`` stays a pure
    function of its arguments.
    """

    vec: np.ndarray                      # (STATE_DIM,)
    dr: np.ndarray                       # (DR_DIM,)
    delay_buf: np.ndarray                # (DELAY_SLOTS, 11)
    disturbance_seed: int = 0

    # Named views ------------------------------------------------------
    @property
    def base_pos(self): return self.vec[IDX_PX:IDX_PY + 1]
    @property
    def heading(self): return float(self.vec[IDX_HEADING])
    @property
    def base_lin_vel(self): return self.vec[IDX_VX:IDX_VY + 1]
    @property
    def yaw_rate(self): return float(self.vec[IDX_YAW_RATE])
    @property
    def base_height(self): return float(self.vec[IDX_H])
    @property
    def vertical_vel(self): return float(self.vec[IDX_VZ])
    @property
    def lean(self): return self.vec[IDX_ROLL:IDX_PITCH + 1]
    @property
    def lean_rate(self): return self.vec[IDX_ROLL_RATE:IDX_PITCH_RATE + 1]
    @property
    def projected_gravity(self):
        return np.sin(self.vec[IDX_ROLL:IDX_PITCH + 1])
    @property
    def phase(self): return self.vec[IDX_PHASE_L:IDX_PHASE_R + 1]
    @property
    def q_leg(self): return self.vec[IDX_QLEG:IDX_QLEG + 6]
    @property
    def qd_leg(self): return self.vec[IDX_QDLEG:IDX_QDLEG + 6]
    @property
    def q_u(self): return self.vec[IDX_QU:IDX_QU + 5]
    @property
    def qd_u(self): return self.vec[IDX_QDU:IDX_QDU + 5]
    @property
    def contacts(self): return self.vec[IDX_CONTACT_L:IDX_CONTACT_R + 1] > 0.5
    @property
    def foot_forces(self): return self.vec[IDX_F_L:IDX_F_R + 1]
    @property
    def foot_velocities(self): return self.vec[IDX_FV_L:IDX_FV_R + 1]
    @property
    def swing_heights(self): return self.vec[IDX_Z_L:IDX_Z_R + 1]
    @property
    def step_count(self): return int(self.vec[IDX_T])

    def copy(self) -> "EnvState":
        return EnvState(self.vec.copy(), self.dr.copy(), self.delay_buf.copy(),
                        self.disturbance_seed)


def push_vector(seed: int, event_index: int, speed: float) -> np.ndarray:
    """Deterministic push velocity for a given episode seed and event index."""
    gen = np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF,
                                                    event_index & 0xFFFFFFFFFFFFFFFF]))
    ang = 2.0 * np.pi * gen.random()
    return np.array([speed * np.cos(ang), speed * np.sin(ang)])


def default_state_vector(config: EnvConfig) -> np.ndarray:
    vec = np.zeros(STATE_DIM)
    vec[IDX_H] = config.nominal_height
    vec[IDX_PHASE_L] = 0.0
    vec[IDX_PHASE_R] = config.gait_offset % 1.0
    vec[IDX_QLEG + 2] = config.knee_stand
    vec[IDX_QLEG + 5] = config.knee_stand
    vec[IDX_QU:IDX_QU + 5] = config.q_u_default
    vec[IDX_CONTACT_L] = 1.0
    vec[IDX_CONTACT_R] = 1.0
    weight = config.mass * config.gravity
    vec[IDX_F_L] = weight / 2.0
    vec[IDX_F_R] = weight / 2.0
    vec[IDX_DFEET] = config.feet_dist0
    vec[IDX_DKNEE] = config.knee_dist0
    return vec


def sample_dr(config: EnvConfig, rng: np.random.Generator) -> np.ndarray:
    """Domain randomization draws, in documented order."""
    dr = np.empty(DR_DIM)
    dr[DR_FRICTION] = rng.uniform(*config.dr_friction)
    dr[DR_MASS_ADD] = rng.uniform(*config.dr_base_mass)
    dr[DR_LINK_SCALE] = rng.uniform(*config.dr_link_scale)
    dr[DR_COM_X] = rng.uniform(*config.dr_com_offset)
    dr[DR_COM_Y] = rng.uniform(*config.dr_com_offset)
    delay_ms = rng.uniform(*config.dr_delay_ms)
    dr[DR_DELAY] = float(int(delay_ms / (config.dt * 1000.0)))  # whole steps, rounded down
    return dr


def default_dr() -> np.ndarray:
    dr = np.zeros(DR_DIM)
    dr[DR_FRICTION] = 1.0
    dr[DR_LINK_SCALE] = 1.0
    return dr


def reset(config: EnvConfig, seed: int, dr_enabled: bool) -> EnvState:
    """Default pose with zero velocities; DR sampled per seed when enabled."""
    vec = default_state_vector(config)
    dr = sample_dr(config, np.random.default_rng(seed)) if dr_enabled else default_dr()
    buf = np.zeros((DELAY_SLOTS, N_JOINTS))
    return EnvState(vec, dr, buf, disturbance_seed=int(seed))


def advance_phase(phase, f: float, dt: float, psi: float, command) -> np.ndarray:
    """Gait phase update; freezes below the stand-still command gate."""
    phase = np.asarray(phase, dtype=np.float64)
    cmd = np.asarray(command, dtype=np.float64)[:3]
    if float(np.sqrt((cmd ** 2).sum())) < MOVE_GATE:
        return phase.copy()
    left = (phase[0] + f * dt) % 1.0
    right = (left + psi) % 1.0
    return np.array([left, right])


class SurrogateBatch:
    """A batch of independent surrogate instances stepped together.

    Owns the flat state/DR/delay arrays; each instance has its own
    disturbance seed.  Stepping routes through the selected kernel backend.
    """

    def __init__(self, config: EnvConfig, n_envs: int):
        self.config = config
        self.n = n_envs
        self.cfg_vec = config.vector()
        self.state = np.zeros((n_envs, STATE_DIM))
        self.dr = np.tile(default_dr(), (n_envs, 1))
        self.delay = np.zeros((n_envs, DELAY_SLOTS, N_JOINTS))
        self.seeds = np.zeros(n_envs, dtype=np.int64)
        self._act_l_low = np.asarray(config.act_l_low)
        self._act_l_high = np.asarray(config.act_l_high)
        self._q_u_low = np.asarray(config.q_u_low)
        self._q_u_high = np.asarray(config.q_u_high)

    def reset_env(self, i: int, seed: int, dr_enabled: bool) -> None:
        st = reset(self.config, seed, dr_enabled)
        self.state[i] = st.vec
        self.dr[i] = st.dr
        self.delay[i] = 0.0
        self.seeds[i] = seed

    def reset_all(self, seeds, dr_enabled: bool) -> None:
        for i, s in enumerate(seeds):
            self.reset_env(i, int(s), dr_enabled)

    def step(self, actions_l: np.ndarray, actions_u: np.ndarray,
             commands: np.ndarray):
        """Advance every instance one step.

        actions_l (N,6), actions_u (N,5), commands (N,5) with columns
        [vx, vy, yaw, terrain_level, push_enabled].  Returns (state_view,
        info_array); state arrays are updated in place.
        """
        if not (np.isfinite(actions_l).all() and np.isfinite(actions_u).all()):
            raise ValueError("non-finite action")
        # Control delay ring: newest action at slot 0.
        self.delay[:, 1:] = self.delay[:, :-1]
        self.delay[:, 0, :N_LOWER_ACT] = actions_l
        self.delay[:, 0, N_LOWER_ACT:] = actions_u
        delay_steps = self.dr[:, DR_DELAY].astype(np.intp)
        eff = self.delay[np.arange(self.n), delay_steps]
        eff_l = np.clip(eff[:, :N_LOWER_ACT], self._act_l_low, self._act_l_high)
        eff_u = np.clip(eff[:, N_LOWER_ACT:], self._q_u_low, self._q_u_high)
        # Scheduled pushes.
        push = np.zeros((self.n, 2))
        period = self.config.push_period
        t = self.state[:, IDX_T].astype(np.int64)
        push_mask = (commands[:, 4] > 0.5) & (t > 0) & (t % period == 0)
        for i in np.nonzero(push_mask)[0]:
            push[i] = push_vector(int(self.seeds[i]), int(t[i]) // period,
                                  self.config.push_speed)
        out_state = np.empty_like(self.state)
        info = np.empty((self.n, INFO_DIM))
        backend.kernels().env_step_batch(self.state, eff_l, eff_u, commands,
                                         push, self.dr, self.cfg_vec,
                                         out_state, info)
        self.state[:] = out_state
        return self.state, info


def step(state: EnvState, actions: ActionPair, command: Command,
         config: EnvConfig, disturbance_seed: int | None = None):
    """Single-instance step; pure in (state, actions, command, config, seed)."""
    batch = SurrogateBatch(config, 1)
    batch.state[0] = state.vec
    batch.dr[0] = state.dr
    batch.delay[0] = state.delay_buf
    batch.seeds[0] = state.disturbance_seed if disturbance_seed is None else disturbance_seed
    _, info = batch.step(actions.lower[None, :], actions.upper[None, :],
                         command.as_array()[None, :])
    new_state = EnvState(batch.state[0].copy(), state.dr.copy(),
                         batch.delay[0].copy(), int(batch.seeds[0]))
    return new_state, StepInfo.from_row(info[0])


def survival_length(fallen_flags) -> int:
    """Index of the first fall in an episode, or the episode length."""
    flags = np.asarray(fallen_flags, dtype=bool)
    hits = np.nonzero(flags)[0]
    return int(hits[0]) if hits.size else int(flags.shape[0])
