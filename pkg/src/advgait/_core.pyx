# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: tabular-game episode engine and surrogate dynamics step.

Each public function is a drop-in twin of the one in advgait._purepy: same
signature, same uniform-stream consumption order, same arithmetic order
(the extension is built with -ffp-contract=off so no fused multiply-adds
sneak in).  advgait.backend picks whichever module imported successfully.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, fabs, fmod, pow, sin, sqrt

BACKEND_NAME = "compiled"

DEF MAX_ACTIONS = 64


cdef class _Draws:
    """C-side view of a UniformStream; refills through the Python object."""
    cdef object stream
    cdef double[::1] buf
    cdef Py_ssize_t pos

    def __cinit__(self, stream):
        self.stream = stream
        self.buf = stream.buf
        self.pos = stream.pos

    cdef double next(self):
        cdef double u
        if self.pos >= self.buf.shape[0]:
            self.stream.refill()
            self.buf = self.stream.buf
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u

    cdef void sync(self):
        self.stream.pos = self.pos


cdef inline Py_ssize_t _pick_vec(double[::1] probs, double u) nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i, n = probs.shape[0]
    for i in range(n):
        acc += probs[i]
        if u < acc:
            return i
    return n - 1


cdef inline Py_ssize_t _pick_row(double[:, ::1] table, Py_ssize_t s, double u) nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i, n = table.shape[1]
    for i in range(n):
        acc += table[s, i]
        if u < acc:
            return i
    return n - 1


cdef void _project_row(double* v, Py_ssize_t n):
    """Euclidean projection onto the simplex, in place (insertion sort)."""
    cdef double u[MAX_ACTIONS]
    cdef Py_ssize_t i, j, rho
    cdef double key, acc, cand, lam, w
    for i in range(n):
        u[i] = v[i]
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
    for i in range(n):
        w = v[i] + lam
        v[i] = w if w > 0.0 else 0.0


def project_simplex(cnp.ndarray[double, ndim=1] v):
    cdef cnp.ndarray[double, ndim=1] out = v.copy()
    if out.shape[0] > MAX_ACTIONS:
        raise ValueError("action space too large for the compiled projection")
    _project_row(<double*> out.data, out.shape[0])
    return out


cdef Py_ssize_t _episode(double[:, :, :, ::1] trans, double[:, :, ::1] stop,
                         double[:, :, ::1] reward,
                         double[:, ::1] eff_max, double[:, ::1] eff_min,
                         double[::1] rho, _Draws d, Py_ssize_t max_steps,
                         Py_ssize_t[::1] ep_s, Py_ssize_t[::1] ep_a, double[::1] ep_ca,
                         Py_ssize_t[::1] ep_b, double[::1] ep_cb,
                         double* total_out):
    """One episode; records visit indices and 1/pi coefficients in step order."""
    cdef Py_ssize_t s, a, b, t, j, nxt, n_states
    cdef double total = 0.0, u, acc
    n_states = trans.shape[3]
    s = _pick_vec(rho, d.next())
    for t in range(max_steps):
        a = _pick_row(eff_max, s, d.next())
        b = _pick_row(eff_min, s, d.next())
        total += reward[s, a, b]
        ep_s[t] = s
        ep_a[t] = a
        ep_ca[t] = 1.0 / eff_max[s, a]
        ep_b[t] = b
        ep_cb[t] = 1.0 / eff_min[s, b]
        u = d.next()
        if u < stop[s, a, b]:
            total_out[0] = total
            return t + 1
        acc = stop[s, a, b]
        nxt = n_states - 1
        for j in range(n_states):
            acc += trans[s, a, b, j]
            if u < acc:
                nxt = j
                break
        s = nxt
    total_out[0] = total
    return max_steps


def game_returns(double[:, :, :, ::1] transition, double[:, :, ::1] stop,
                 double[:, :, ::1] reward, double[:, ::1] eff_max,
                 double[:, ::1] eff_min, double[::1] rho,
                 Py_ssize_t n_episodes, stream, Py_ssize_t max_steps=100000):
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n_episodes)
    cdef _Draws d = _Draws(stream)
    cdef Py_ssize_t i
    cdef double total
    ws = np.empty(max_steps, dtype=np.intp)
    wa = np.empty(max_steps, dtype=np.intp)
    wb = np.empty(max_steps, dtype=np.intp)
    wca = np.empty(max_steps)
    wcb = np.empty(max_steps)
    cdef Py_ssize_t[::1] ep_s = ws, ep_a = wa, ep_b = wb
    cdef double[::1] ep_ca = wca, ep_cb = wcb
    for i in range(n_episodes):
        _episode(transition, stop, reward, eff_max, eff_min, rho, d, max_steps,
                 ep_s, ep_a, ep_ca, ep_b, ep_cb, &total)
        out[i] = total
    d.sync()
    return out


def game_reinforce(double[:, :, :, ::1] transition, double[:, :, ::1] stop,
                   double[:, :, ::1] reward, double[:, ::1] x, double[:, ::1] y,
                   double eps_max, double eps_min, double[::1] rho,
                   Py_ssize_t n_episodes, stream, Py_ssize_t max_steps=100000):
    cdef Py_ssize_t S = y.shape[0], A_max = y.shape[1], A_min = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] gmax_arr = np.zeros((S, A_max))
    cdef cnp.ndarray[double, ndim=2] gmin_arr = np.zeros((S, A_min))
    cdef cnp.ndarray[double, ndim=2] effmax_arr = np.empty((S, A_max))
    cdef cnp.ndarray[double, ndim=2] effmin_arr = np.empty((S, A_min))
    cdef double[:, ::1] g_max = gmax_arr, g_min = gmin_arr
    cdef double[:, ::1] eff_max = effmax_arr, eff_min = effmin_arr
    cdef _Draws d = _Draws(stream)
    cdef Py_ssize_t i, t, n, s, a2
    cdef double total
    for s in range(S):
        for a2 in range(A_max):
            eff_max[s, a2] = (1.0 - eps_max) * y[s, a2] + eps_max / A_max
        for a2 in range(A_min):
            eff_min[s, a2] = (1.0 - eps_min) * x[s, a2] + eps_min / A_min
    ws = np.empty(max_steps, dtype=np.intp)
    wa = np.empty(max_steps, dtype=np.intp)
    wb = np.empty(max_steps, dtype=np.intp)
    wca = np.empty(max_steps)
    wcb = np.empty(max_steps)
    cdef Py_ssize_t[::1] ep_s = ws, ep_a = wa, ep_b = wb
    cdef double[::1] ep_ca = wca, ep_cb = wcb
    for i in range(n_episodes):
        n = _episode(transition, stop, reward, eff_max, eff_min, rho, d, max_steps,
                     ep_s, ep_a, ep_ca, ep_b, ep_cb, &total)
        for t in range(n):
            g_max[ep_s[t], ep_a[t]] += total * (1.0 - eps_max) * ep_ca[t]
        for t in range(n):
            g_min[ep_s[t], ep_b[t]] += total * (1.0 - eps_min) * ep_cb[t]
    d.sync()
    return gmax_arr, gmin_arr


def game_pg_chunk(double[:, :, :, ::1] transition, double[:, :, ::1] stop,
                  double[:, :, ::1] reward, double[:, ::1] x, double[:, ::1] y,
                  double eps_max, double eps_min, double[::1] rho,
                  Py_ssize_t n_episodes, Py_ssize_t t0,
                  double eta_max0, double eta_min0,
                  double decay_power, double decay_tau,
                  stream, Py_ssize_t max_steps=100000):
    cdef Py_ssize_t S = y.shape[0], A_max = y.shape[1], A_min = x.shape[1]
    if A_max > MAX_ACTIONS or A_min > MAX_ACTIONS:
        raise ValueError("action space too large for the compiled projection")
    cdef cnp.ndarray[double, ndim=2] effmax_arr = np.empty((S, A_max))
    cdef cnp.ndarray[double, ndim=2] effmin_arr = np.empty((S, A_min))
    cdef double[:, ::1] eff_max = effmax_arr, eff_min = effmin_arr
    touched_max_arr = np.zeros(S, dtype=np.uint8)
    touched_min_arr = np.zeros(S, dtype=np.uint8)
    cdef unsigned char[::1] touched_max = touched_max_arr
    cdef unsigned char[::1] touched_min = touched_min_arr
    cdef _Draws d = _Draws(stream)
    cdef Py_ssize_t i, t, n, s, a2
    cdef double total, scale, eta_max, eta_min, ret_sum = 0.0
    cdef double trow[MAX_ACTIONS]
    ws = np.empty(max_steps, dtype=np.intp)
    wa = np.empty(max_steps, dtype=np.intp)
    wb = np.empty(max_steps, dtype=np.intp)
    wca = np.empty(max_steps)
    wcb = np.empty(max_steps)
    cdef Py_ssize_t[::1] ep_s = ws, ep_a = wa, ep_b = wb
    cdef double[::1] ep_ca = wca, ep_cb = wcb
    for i in range(n_episodes):
        t = t0 + i
        if decay_power > 0.0:
            scale = pow(1.0 + t / decay_tau, -decay_power)
        else:
            scale = 1.0
        eta_max = eta_max0 * scale
        eta_min = eta_min0 * scale
        for s in range(S):
            for a2 in range(A_max):
                eff_max[s, a2] = (1.0 - eps_max) * y[s, a2] + eps_max / A_max
            for a2 in range(A_min):
                eff_min[s, a2] = (1.0 - eps_min) * x[s, a2] + eps_min / A_min
        n = _episode(transition, stop, reward, eff_max, eff_min, rho, d, max_steps,
                     ep_s, ep_a, ep_ca, ep_b, ep_cb, &total)
        ret_sum += total
        for s in range(S):
            touched_max[s] = 0
            touched_min[s] = 0
        for t in range(n):
            y[ep_s[t], ep_a[t]] += eta_max * total * (1.0 - eps_max) * ep_ca[t]
            touched_max[ep_s[t]] = 1
        for t in range(n):
            x[ep_s[t], ep_b[t]] -= eta_min * total * (1.0 - eps_min) * ep_cb[t]
            touched_min[ep_s[t]] = 1
        for s in range(S):
            if touched_max[s]:
                for a2 in range(A_max):
                    trow[a2] = y[s, a2]
                _project_row(trow, A_max)
                for a2 in range(A_max):
                    y[s, a2] = trow[a2]
        for s in range(S):
            if touched_min[s]:
                for a2 in range(A_min):
                    trow[a2] = x[s, a2]
                _project_row(trow, A_min)
                for a2 in range(A_min):
                    x[s, a2] = trow[a2]
    d.sync()
    return ret_sum


def env_step_batch(double[:, ::1] state, double[:, ::1] act_l, double[:, ::1] act_u,
                   double[:, ::1] command, double[:, ::1] push, double[:, ::1] dr,
                   double[::1] cfg, double[:, ::1] out_state, double[:, ::1] out_info):
    """Scalar-loop twin of _purepy.env_step_batch (layouts in advgait.env)."""
    cdef double dt = cfg[0], f = cfg[1], psi = cfg[2]
    cdef double g_over_l = cfg[3], h0 = cfg[4]
    cdef double fall_lean = cfg[5], fall_h_frac = cfg[6]
    cdef double tau_v = cfg[7], tau_yaw = cfg[8], tau_h = cfg[9]
    cdef double arm_omega = cfg[10], arm_damping = cfg[11]
    cdef double arm_acc_max = cfg[12], arm_inertia = cfg[13]
    cdef double k_ankle_pitch = cfg[14], k_ankle_roll = cfg[15]
    cdef double k_acc = cfg[16], k_acc_roll = cfg[17]
    cdef double k_com = cfg[18], k_com_roll = cfg[19], k_react = cfg[20]
    cdef double drag_per_level = cfg[21], mass = cfg[22]
    cdef double i_yaw = cfg[23], k_tau_ankle = cfg[24]
    cdef double speed_norm = cfg[25], hip_pitch_amp = cfg[26], hip_roll_amp = cfg[27]
    cdef double swing_base = cfg[28], swing_gain = cfg[29]
    cdef double knee_stand = cfg[30], knee_crouch = cfg[31], knee_lift = cfg[32]
    cdef double feet_dist0 = cfg[33], feet_dist_gain = cfg[34]
    cdef double knee_dist0 = cfg[35], knee_dist_gain = cfg[36]
    cdef double slip_base = cfg[37], slip_friction_gain = cfg[38]
    cdef double slip_terrain_gain = cfg[39]
    cdef double swing_foot_speed = cfg[40], force_dyn = cfg[41]
    cdef double gravity = cfg[57]
    cdef double pi = np.pi

    cdef Py_ssize_t n = state.shape[0], i, j, k
    cdef double terrain, friction, vx0, vy0, vx_p, vy_p, drag, vx1, vy1
    cdef double bacc_x, bacc_y, w1, heading1, ch, sh, px1, py1
    cdef double h_target, h1, vz1, link, raw, qdd, m_pitch, m_roll, r_pitch, r_roll
    cdef double ankle_sym, ankle_dif, bias_p, bias_r, roll0, pitch0
    cdef double pitch_acc, roll_acc, pitch_rate1, pitch1, roll_rate1, roll1
    cdef double cmd_norm, ph_l1, ph_r1, speed_frac, a_hp, cy_frac
    cdef double sin_ph, hip_pitch, hip_roll, sw, z_k, knee, ph
    cdef double m_eff, weight, f_l, f_r, speed, slip, fv_swing, fv_l, fv_r
    cdef double droll, d_feet, d_knee, total
    cdef double q_u1[5]
    cdef double qd_u1[5]
    cdef double qdd_u[5]
    cdef double q_leg1[6]
    cdef double z2[2]
    cdef bint moving, c_l, c_r, both, fallen

    for i in range(n):
        terrain = command[i, 3]
        friction = dr[i, 0]

        vx0 = state[i, 3]
        vy0 = state[i, 4]
        vx_p = vx0 + push[i, 0]
        vy_p = vy0 + push[i, 1]
        drag = drag_per_level * terrain
        vx1 = vx_p + dt * ((act_l[i, 0] - vx_p) / tau_v - drag * vx_p)
        vy1 = vy_p + dt * ((act_l[i, 1] - vy_p) / tau_v - drag * vy_p)
        bacc_x = (vx1 - vx0) / dt
        bacc_y = (vy1 - vy0) / dt

        w1 = state[i, 5] + dt * (act_l[i, 2] - state[i, 5]) / tau_yaw
        heading1 = state[i, 2] + dt * w1
        ch = cos(heading1)
        sh = sin(heading1)
        px1 = state[i, 0] + dt * (ch * vx1 - sh * vy1)
        py1 = state[i, 1] + dt * (sh * vx1 + ch * vy1)

        h_target = h0 + act_l[i, 5]
        h1 = state[i, 6] + dt * (h_target - state[i, 6]) / tau_h
        vz1 = (h1 - state[i, 6]) / dt

        link = dr[i, 2]
        for j in range(5):
            raw = arm_omega * arm_omega * (act_u[i, j] - state[i, 26 + j]) \
                - 2.0 * arm_damping * arm_omega * state[i, 31 + j]
            if raw > arm_acc_max:
                raw = arm_acc_max
            elif raw < -arm_acc_max:
                raw = -arm_acc_max
            qdd = raw / link
            qdd_u[j] = qdd
            qd_u1[j] = state[i, 31 + j] + dt * qdd
            q_u1[j] = state[i, 26 + j] + dt * qd_u1[j]
            if q_u1[j] < cfg[47 + j]:
                q_u1[j] = cfg[47 + j]
                qd_u1[j] = 0.0
            elif q_u1[j] > cfg[52 + j]:
                q_u1[j] = cfg[52 + j]
                qd_u1[j] = 0.0

        m_pitch = ((q_u1[0] - cfg[42]) + (q_u1[2] - cfg[44])) \
            + 0.5 * ((q_u1[1] - cfg[43]) + (q_u1[3] - cfg[45]))
        m_roll = ((q_u1[0] - cfg[42]) - (q_u1[2] - cfg[44])) \
            + 0.5 * ((q_u1[1] - cfg[43]) - (q_u1[3] - cfg[45])) + 0.3 * q_u1[4]
        r_pitch = qdd_u[0] + qdd_u[2] + 0.5 * (qdd_u[1] + qdd_u[3])
        r_roll = (qdd_u[0] - qdd_u[2]) + 0.5 * (qdd_u[1] - qdd_u[3])

        ankle_sym = 0.5 * (act_l[i, 3] + act_l[i, 4])
        ankle_dif = 0.5 * (act_l[i, 3] - act_l[i, 4])
        bias_p = g_over_l * 0.5 * dr[i, 3]
        bias_r = g_over_l * 0.5 * dr[i, 4]
        roll0 = state[i, 8]
        pitch0 = state[i, 9]
        pitch_acc = (g_over_l * sin(pitch0) + k_com * m_pitch + k_react * r_pitch
                     + k_acc * bacc_x + bias_p - k_ankle_pitch * ankle_sym)
        roll_acc = (g_over_l * sin(roll0) + k_com_roll * m_roll + k_react * r_roll
                    + k_acc_roll * bacc_y + bias_r - k_ankle_roll * ankle_dif)
        pitch_rate1 = state[i, 11] + dt * pitch_acc
        pitch1 = pitch0 + dt * pitch_rate1
        roll_rate1 = state[i, 10] + dt * roll_acc
        roll1 = roll0 + dt * roll_rate1

        cmd_norm = sqrt(command[i, 0] * command[i, 0] + command[i, 1] * command[i, 1]
                        + command[i, 2] * command[i, 2])
        moving = cmd_norm >= 0.1
        if moving:
            ph_l1 = fmod(state[i, 12] + f * dt, 1.0)
            ph_r1 = fmod(ph_l1 + psi, 1.0)
        else:
            ph_l1 = state[i, 12]
            ph_r1 = state[i, 13]

        speed_frac = cmd_norm / speed_norm
        if speed_frac > 1.0:
            speed_frac = 1.0
        a_hp = hip_pitch_amp * speed_frac
        cy_frac = command[i, 1] / 0.5
        if cy_frac > 1.0:
            cy_frac = 1.0
        elif cy_frac < -1.0:
            cy_frac = -1.0
        for k in range(2):
            ph = ph_l1 if k == 0 else ph_r1
            sin_ph = sin(2.0 * pi * ph)
            hip_pitch = a_hp * sin_ph
            hip_roll = hip_roll_amp * cy_frac * sin_ph
            sw = (ph - 0.55) / 0.45
            if ph >= 0.55:
                z_k = (swing_base + swing_gain * speed_frac) * sin(pi * sw)
            else:
                z_k = 0.0
            knee = knee_crouch * speed_frac + knee_lift * z_k
            if moving:
                q_leg1[3 * k + 0] = hip_pitch
                q_leg1[3 * k + 1] = hip_roll
                q_leg1[3 * k + 2] = knee
                z2[k] = z_k
            else:
                q_leg1[3 * k + 0] = 0.0
                q_leg1[3 * k + 1] = 0.0
                q_leg1[3 * k + 2] = knee_stand
                z2[k] = 0.0

        droll = q_leg1[1] - q_leg1[4]
        d_feet = feet_dist0 + feet_dist_gain * droll
        d_knee = knee_dist0 + knee_dist_gain * droll

        m_eff = mass + dr[i, 1]
        weight = m_eff * gravity
        if moving:
            c_l = ph_l1 < 0.55
            c_r = ph_r1 < 0.55
        else:
            c_l = True
            c_r = True
        both = c_l and c_r
        if both:
            f_l = weight / 2.0
            f_r = weight / 2.0
        elif c_l:
            f_l = weight * (1.0 + force_dyn * sin(2.0 * pi * ph_l1))
            f_r = 0.0
        elif c_r:
            f_l = 0.0
            f_r = weight * (1.0 + force_dyn * sin(2.0 * pi * ph_r1))
        else:
            f_l = 0.0
            f_r = 0.0
        speed = sqrt(vx1 * vx1 + vy1 * vy1)
        slip = slip_base
        if friction < 0.5:
            slip = slip + slip_friction_gain * (0.5 - friction)
        slip = slip + slip_terrain_gain * terrain
        if slip > 1.0:
            slip = 1.0
        fv_swing = speed + swing_foot_speed * (speed_frac if moving else 0.0)
        fv_l = slip * speed if c_l else fv_swing
        fv_r = slip * speed if c_r else fv_swing

        fallen = (fabs(roll1) > fall_lean or fabs(pitch1) > fall_lean
                  or h1 < fall_h_frac * h0)

        out_state[i, 0] = px1
        out_state[i, 1] = py1
        out_state[i, 2] = heading1
        out_state[i, 3] = vx1
        out_state[i, 4] = vy1
        out_state[i, 5] = w1
        out_state[i, 6] = h1
        out_state[i, 7] = vz1
        out_state[i, 8] = roll1
        out_state[i, 9] = pitch1
        out_state[i, 10] = roll_rate1
        out_state[i, 11] = pitch_rate1
        out_state[i, 12] = ph_l1
        out_state[i, 13] = ph_r1
        for j in range(6):
            out_state[i, 14 + j] = q_leg1[j]
            out_state[i, 20 + j] = (q_leg1[j] - state[i, 14 + j]) / dt
            out_info[i, 12 + j] = (out_state[i, 20 + j] - state[i, 20 + j]) / dt
        for j in range(5):
            out_state[i, 26 + j] = q_u1[j]
            out_state[i, 31 + j] = qd_u1[j]
            out_info[i, 7 + j] = arm_inertia * link * qdd_u[j]
            out_info[i, 18 + j] = qdd_u[j]
        out_state[i, 36] = 1.0 if c_l else 0.0
        out_state[i, 37] = 1.0 if c_r else 0.0
        out_state[i, 38] = f_l
        out_state[i, 39] = f_r
        out_state[i, 40] = fv_l
        out_state[i, 41] = fv_r
        out_state[i, 42] = z2[0]
        out_state[i, 43] = z2[1]
        out_state[i, 44] = d_feet
        out_state[i, 45] = d_knee
        out_state[i, 46] = state[i, 46] + 1.0

        out_info[i, 0] = 1.0 if fallen else 0.0
        out_info[i, 1] = m_eff * (act_l[i, 0] - vx1) / tau_v
        out_info[i, 2] = m_eff * (act_l[i, 1] - vy1) / tau_v
        out_info[i, 3] = i_yaw * (act_l[i, 2] - w1) / tau_yaw
        out_info[i, 4] = k_tau_ankle * act_l[i, 3]
        out_info[i, 5] = k_tau_ankle * act_l[i, 4]
        out_info[i, 6] = m_eff * (h_target - h1) / tau_h
        out_info[i, 23] = bacc_x
        out_info[i, 24] = bacc_y
