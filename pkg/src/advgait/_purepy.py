"""Pure-Python kernels: reference twins of the compiled extension.

Every function here mirrors advgait._core step for step, consuming the same
uniform stream in the same order, so the two backends produce identical
trajectories from identical seeds (the extension is compiled with
``-ffp-contract=off`` to keep the arithmetic aligned).  These fallbacks are
much slower; they exist so the package works without a C toolchain and so
the compiled kernels have an executable specification to be checked against.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "pure"


class UniformStream:
    """Sequential uniform[0,1) draws served block-wise from a numpy Generator.

    Both backends consume draws one at a time in identical order; blocking
    only amortizes the Generator call.
    """

    def __init__(self, rng: np.random.Generator, block: int = 65536):
        self.rng = rng
        self.block = int(block)
        self.buf = rng.random(self.block)
        self.pos = 0

    def refill(self) -> None:
        self.buf = self.rng.random(self.block)
        self.pos = 0

    def next(self) -> float:
        if self.pos >= self.buf.shape[0]:
            self.refill()
        u = self.buf[self.pos]
        self.pos += 1
        return u

    @staticmethod
    def from_seed(seed: int, block: int = 65536) -> "UniformStream":
        return UniformStream(np.random.default_rng(seed), block)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex."""
    n = v.shape[0]
    u = v.copy()
    # Insertion sort, descending; identical tie handling to the C twin.
    for i in range(1, n):
        key = u[i]
        j = i
        while j > 0 and key > u[j - 1]:
            u[j] = u[j - 1]
            j -= 1
        u[j] = key
    acc = 0.0
    lam = 0.0
    rho = 0
    for j in range(n):
        acc += u[j]
        cand = (1.0 - acc) / (j + 1)
        if u[j] + cand > 0.0:
            rho = j + 1
            lam = cand
    out = np.empty(n)
    for i in range(n):
        w = v[i] + lam
        out[i] = w if w > 0.0 else 0.0
    return out


def _pick(cum_row, u):
    """Index of the first cumulative bucket exceeding u (linear scan)."""
    acc = 0.0
    n = len(cum_row)
    for i in range(n):
        acc += cum_row[i]
        if u < acc:
            return i
    return n - 1


def _sample_episode(transition, stop, reward, eff_max, eff_min, rho,
                    stream, max_steps, record):
    """One episode; optionally records visited (state, action, coef) lists.

    Returns (total_reward, steps).  ``record`` is None or a pair of lists
    ([(s, a, coef_max)], [(s, b, coef_min)]) appended in step order; coef is
    d log pi_eff / d x at the sampled entry, i.e. (1 - eps)/pi_eff, with the
    (1 - eps) factor applied by the caller via the coefficient tables.
    """
    u = stream.next()
    s = _pick(rho, u)
    total = 0.0
    n_states = transition.shape[3]
    for t in range(max_steps):
        a = _pick(eff_max[s], stream.next())
        b = _pick(eff_min[s], stream.next())
        total += reward[s, a, b]
        if record is not None:
            record[0].append((s, a, 1.0 / eff_max[s, a]))
            record[1].append((s, b, 1.0 / eff_min[s, b]))
        u = stream.next()
        if u < stop[s, a, b]:
            return total, t + 1
        acc = stop[s, a, b]
        nxt = n_states - 1
        for j in range(n_states):
            acc += transition[s, a, b, j]
            if u < acc:
                nxt = j
                break
        s = nxt
    return total, max_steps


def game_returns(transition, stop, reward, eff_max, eff_min, rho,
                 n_episodes, stream, max_steps=100_000):
    """Monte-Carlo episode returns under fixed effective policies."""
    out = np.empty(n_episodes)
    for i in range(n_episodes):
        out[i], _ = _sample_episode(transition, stop, reward, eff_max, eff_min,
                                    rho, stream, max_steps, None)
    return out


def game_reinforce(transition, stop, reward, x, y, eps_max, eps_min, rho,
                   n_episodes, stream, max_steps=100_000):
    """Sum over episodes of R_T * sum_t d log pi(a_t|s_t)/d params.

    Returns (grad_max_sum, grad_min_sum) with the same shapes as y and x.
    The caller divides by n_episodes for the batch mean.
    """
    S, A_max = y.shape
    A_min = x.shape[1]
    eff_max = (1.0 - eps_max) * y + eps_max / A_max
    eff_min = (1.0 - eps_min) * x + eps_min / A_min
    g_max = np.zeros_like(y)
    g_min = np.zeros_like(x)
    for _ in range(n_episodes):
        rec = ([], [])
        total, _ = _sample_episode(transition, stop, reward, eff_max, eff_min,
                                   rho, stream, max_steps, rec)
        for s, a, coef in rec[0]:
            g_max[s, a] += total * (1.0 - eps_max) * coef
        for s, b, coef in rec[1]:
            g_min[s, b] += total * (1.0 - eps_min) * coef
    return g_max, g_min


def game_pg_chunk(transition, stop, reward, x, y, eps_max, eps_min, rho,
                  n_episodes, t0, eta_max0, eta_min0, decay_power, decay_tau,
                  stream, max_steps=100_000):
    """Run ``n_episodes`` of simultaneous projected REINFORCE updates in place.

    y (max player) ascends, x (min player) descends; after each episode the
    touched rows are projected back onto the simplex.  Learning rates follow
    eta(t) = eta0 / (1 + t/tau)^power with the global episode index t.
    Returns the sum of episode returns for bookkeeping.
    """
    S, A_max = y.shape
    A_min = x.shape[1]
    ret_sum = 0.0
    for i in range(n_episodes):
        t = t0 + i
        if decay_power > 0.0:
            scale = (1.0 + t / decay_tau) ** (-decay_power)
        else:
            scale = 1.0
        eta_max = eta_max0 * scale
        eta_min = eta_min0 * scale
        eff_max = (1.0 - eps_max) * y + eps_max / A_max
        eff_min = (1.0 - eps_min) * x + eps_min / A_min
        rec = ([], [])
        total, _ = _sample_episode(transition, stop, reward, eff_max, eff_min,
                                   rho, stream, max_steps, rec)
        ret_sum += total
        touched_max = set()
        for s, a, coef in rec[0]:
            y[s, a] += eta_max * total * (1.0 - eps_max) * coef
            touched_max.add(s)
        touched_min = set()
        for s, b, coef in rec[1]:
            x[s, b] -= eta_min * total * (1.0 - eps_min) * coef
            touched_min.add(s)
        for s in sorted(touched_max):
            y[s] = project_simplex(y[s])
        for s in sorted(touched_min):
            x[s] = project_simplex(x[s])
    return ret_sum


# ---------------------------------------------------------------------------
# Surrogate dynamics kernel
# ---------------------------------------------------------------------------

def env_step_batch(state, act_l, act_u, command, push, dr, cfg, out_state, out_info):
    """Vectorized one-step surrogate dynamics for N instances.

    Mirrors the compiled kernel element for element; see advgait.env for the
    state/info/config layouts.  ``act_l``/``act_u`` are the already delayed
    and clamped effective actions; ``push`` holds this step's velocity kicks.
    """
    dt = cfg[0]
    f, psi = cfg[1], cfg[2]
    g_over_l, h0 = cfg[3], cfg[4]
    fall_lean, fall_h_frac = cfg[5], cfg[6]
    tau_v, tau_yaw, tau_h = cfg[7], cfg[8], cfg[9]
    arm_omega, arm_damping, arm_acc_max, arm_inertia = cfg[10], cfg[11], cfg[12], cfg[13]
    k_ankle_pitch, k_ankle_roll = cfg[14], cfg[15]
    k_acc, k_acc_roll = cfg[16], cfg[17]
    k_com, k_com_roll, k_react = cfg[18], cfg[19], cfg[20]
    drag_per_level, mass, i_yaw, k_tau_ankle = cfg[21], cfg[22], cfg[23], cfg[24]
    speed_norm, hip_pitch_amp, hip_roll_amp = cfg[25], cfg[26], cfg[27]
    swing_base, swing_gain = cfg[28], cfg[29]
    knee_stand, knee_crouch, knee_lift = cfg[30], cfg[31], cfg[32]
    feet_dist0, feet_dist_gain = cfg[33], cfg[34]
    knee_dist0, knee_dist_gain = cfg[35], cfg[36]
    slip_base, slip_friction_gain, slip_terrain_gain = cfg[37], cfg[38], cfg[39]
    swing_foot_speed, force_dyn = cfg[40], cfg[41]
    q_u0 = cfg[42:47]
    q_u_low = cfg[47:52]
    q_u_high = cfg[52:57]
    gravity = cfg[57]

    s = state
    o = out_state
    terrain = command[:, 3]
    friction = dr[:, 0]

    # Base velocity (body frame) with pushes and terrain drag.
    vx0, vy0 = s[:, 3], s[:, 4]
    vx_p = vx0 + push[:, 0]
    vy_p = vy0 + push[:, 1]
    drag = drag_per_level * terrain
    vx1 = vx_p + dt * ((act_l[:, 0] - vx_p) / tau_v - drag * vx_p)
    vy1 = vy_p + dt * ((act_l[:, 1] - vy_p) / tau_v - drag * vy_p)
    bacc_x = (vx1 - vx0) / dt
    bacc_y = (vy1 - vy0) / dt

    w1 = s[:, 5] + dt * (act_l[:, 2] - s[:, 5]) / tau_yaw
    heading1 = s[:, 2] + dt * w1
    ch, sh = np.cos(heading1), np.sin(heading1)
    px1 = s[:, 0] + dt * (ch * vx1 - sh * vy1)
    py1 = s[:, 1] + dt * (sh * vx1 + ch * vy1)

    h_target = h0 + act_l[:, 5]
    h1 = s[:, 6] + dt * (h_target - s[:, 6]) / tau_h
    vz1 = (h1 - s[:, 6]) / dt

    # Arm/waist second-order servos with acceleration clamp.
    link = dr[:, 2][:, None]
    q_u = s[:, 26:31]
    qd_u = s[:, 31:36]
    raw = arm_omega * arm_omega * (act_u - q_u) - 2.0 * arm_damping * arm_omega * qd_u
    qdd_u = np.clip(raw, -arm_acc_max, arm_acc_max) / link
    qd_u1 = qd_u + dt * qdd_u
    q_u1 = q_u + dt * qd_u1
    low_hit = q_u1 < q_u_low
    high_hit = q_u1 > q_u_high
    q_u1 = np.where(low_hit, q_u_low, np.where(high_hit, q_u_high, q_u1))
    qd_u1 = np.where(low_hit | high_hit, 0.0, qd_u1)
    tau_u = arm_inertia * link * qdd_u

    # Arm moments: static offset from default pose + reaction from qdd.
    dq = q_u1 - q_u0
    m_pitch = (dq[:, 0] + dq[:, 2]) + 0.5 * (dq[:, 1] + dq[:, 3])
    m_roll = (dq[:, 0] - dq[:, 2]) + 0.5 * (dq[:, 1] - dq[:, 3]) + 0.3 * q_u1[:, 4]
    r_pitch = qdd_u[:, 0] + qdd_u[:, 2] + 0.5 * (qdd_u[:, 1] + qdd_u[:, 3])
    r_roll = (qdd_u[:, 0] - qdd_u[:, 2]) + 0.5 * (qdd_u[:, 1] - qdd_u[:, 3])

    # Torso lean: unstable pendulum + couplings, semi-implicit Euler.
    ankle_sym = 0.5 * (act_l[:, 3] + act_l[:, 4])
    ankle_dif = 0.5 * (act_l[:, 3] - act_l[:, 4])
    bias_p = g_over_l * 0.5 * dr[:, 3]
    bias_r = g_over_l * 0.5 * dr[:, 4]
    roll0, pitch0 = s[:, 8], s[:, 9]
    pitch_acc = (g_over_l * np.sin(pitch0) + k_com * m_pitch + k_react * r_pitch
                 + k_acc * bacc_x + bias_p - k_ankle_pitch * ankle_sym)
    roll_acc = (g_over_l * np.sin(roll0) + k_com_roll * m_roll + k_react * r_roll
                + k_acc_roll * bacc_y + bias_r - k_ankle_roll * ankle_dif)
    pitch_rate1 = s[:, 11] + dt * pitch_acc
    pitch1 = pitch0 + dt * pitch_rate1
    roll_rate1 = s[:, 10] + dt * roll_acc
    roll1 = roll0 + dt * roll_rate1

    # Gait phase (frozen below the stand-still gate).
    cmd_norm = np.sqrt(command[:, 0] ** 2 + command[:, 1] ** 2 + command[:, 2] ** 2)
    moving = cmd_norm >= 0.1
    ph_l1 = np.where(moving, (s[:, 12] + f * dt) % 1.0, s[:, 12])
    ph_r1 = np.where(moving, (ph_l1 + psi) % 1.0, s[:, 13])

    # Kinematic legs driven by phase and command.
    speed_frac = np.minimum(1.0, cmd_norm / speed_norm)
    a_hp = hip_pitch_amp * speed_frac
    cy_frac = np.clip(command[:, 1] / 0.5, -1.0, 1.0)
    q_leg1 = np.empty_like(s[:, 14:20])
    z = np.empty((s.shape[0], 2))
    for k, ph in enumerate((ph_l1, ph_r1)):
        sin_ph = np.sin(2.0 * np.pi * ph)
        hip_pitch = a_hp * sin_ph
        hip_roll = hip_roll_amp * cy_frac * sin_ph
        sw = (ph - 0.55) / 0.45
        z_k = np.where(ph >= 0.55,
                       (swing_base + swing_gain * speed_frac) * np.sin(np.pi * sw),
                       0.0)
        knee = knee_crouch * speed_frac + knee_lift * z_k
        q_leg1[:, 3 * k + 0] = np.where(moving, hip_pitch, 0.0)
        q_leg1[:, 3 * k + 1] = np.where(moving, hip_roll, 0.0)
        q_leg1[:, 3 * k + 2] = np.where(moving, knee, knee_stand)
        z[:, k] = np.where(moving, z_k, 0.0)
    qd_leg1 = (q_leg1 - s[:, 14:20]) / dt
    qdd_leg = (qd_leg1 - s[:, 20:26]) / dt

    droll = q_leg1[:, 1] - q_leg1[:, 4]
    d_feet = feet_dist0 + feet_dist_gain * droll
    d_knee = knee_dist0 + knee_dist_gain * droll

    # Contacts, vertical foot forces, horizontal foot speeds.
    m_eff = mass + dr[:, 1]
    weight = m_eff * gravity
    c_l = np.where(moving, ph_l1 < 0.55, True)
    c_r = np.where(moving, ph_r1 < 0.55, True)
    both = c_l & c_r
    f_l = np.where(both, weight / 2.0,
                   np.where(c_l, weight * (1.0 + force_dyn * np.sin(2.0 * np.pi * ph_l1)),
                            0.0))
    f_r = np.where(both, weight / 2.0,
                   np.where(c_r, weight * (1.0 + force_dyn * np.sin(2.0 * np.pi * ph_r1)),
                            0.0))
    speed = np.sqrt(vx1 ** 2 + vy1 ** 2)
    slip = np.minimum(1.0, slip_base + slip_friction_gain * np.maximum(0.0, 0.5 - friction)
                      + slip_terrain_gain * terrain)
    fv_swing = speed + swing_foot_speed * np.where(moving, speed_frac, 0.0)
    fv_l = np.where(c_l, slip * speed, fv_swing)
    fv_r = np.where(c_r, slip * speed, fv_swing)

    fallen = ((np.abs(roll1) > fall_lean) | (np.abs(pitch1) > fall_lean)
              | (h1 < fall_h_frac * h0))

    o[:, 0], o[:, 1], o[:, 2] = px1, py1, heading1
    o[:, 3], o[:, 4], o[:, 5] = vx1, vy1, w1
    o[:, 6], o[:, 7] = h1, vz1
    o[:, 8], o[:, 9], o[:, 10], o[:, 11] = roll1, pitch1, roll_rate1, pitch_rate1
    o[:, 12], o[:, 13] = ph_l1, ph_r1
    o[:, 14:20] = q_leg1
    o[:, 20:26] = qd_leg1
    o[:, 26:31] = q_u1
    o[:, 31:36] = qd_u1
    o[:, 36] = np.where(c_l, 1.0, 0.0)
    o[:, 37] = np.where(c_r, 1.0, 0.0)
    o[:, 38], o[:, 39] = f_l, f_r
    o[:, 40], o[:, 41] = fv_l, fv_r
    o[:, 42], o[:, 43] = z[:, 0], z[:, 1]
    o[:, 44], o[:, 45] = d_feet, d_knee
    o[:, 46] = s[:, 46] + 1.0

    out_info[:, 0] = np.where(fallen, 1.0, 0.0)
    out_info[:, 1] = m_eff * (act_l[:, 0] - vx1) / tau_v
    out_info[:, 2] = m_eff * (act_l[:, 1] - vy1) / tau_v
    out_info[:, 3] = i_yaw * (act_l[:, 2] - w1) / tau_yaw
    out_info[:, 4] = k_tau_ankle * act_l[:, 3]
    out_info[:, 5] = k_tau_ankle * act_l[:, 4]
    out_info[:, 6] = m_eff * (h_target - h1) / tau_h
    out_info[:, 7:12] = tau_u
    out_info[:, 12:18] = qdd_leg
    out_info[:, 18:23] = qdd_u
    out_info[:, 23] = bacc_x
    out_info[:, 24] = bacc_y
