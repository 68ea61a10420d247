"""Compiled inner loop of the DEM integrator.

State vector layout for ``n`` granules::

    [z, zdot, x(n), y(n), theta(n), vx(n), vy(n), omega(n), W_PS, W_vis, W_f, E_in]

Positions are inertial; the container's left wall sits at ``x = z`` and the floor
at ``y = 0``. The last four entries are running integrals carried through RK4 so the
dissipation bookkeeping has the same order of accuracy as the motion.

Contact slots: granule pairs ``(i, j), i < j`` first, then four walls per granule
(left, right, floor, ceiling).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# parameter vector indices
P_MPS, P_K, P_C, P_F0, P_T0, P_D1, P_D2, P_ALPHA, P_MU, P_KS, P_A, P_MEFF, P_ONE_D, P_CLAMP = range(14)
P_R, P_M, P_I = 14, 15, 16
N_PARAMS = 17

N_AUX = 4  # W_PS, W_vis, W_f, E_in

# integer settings
S_RAMP = 0

# run status codes
RUNNING, DONE_FLOOR, DONE_TMAX, ABORT_CONSERVATION, ABORT_NONFINITE, BUFFER_FULL = 0, 1, 2, 3, 4, 5

WALL_LEFT, WALL_RIGHT, WALL_FLOOR, WALL_CEILING = 0, 1, 2, 3

# per-sample diagnostics columns
D_F, D_FD, D_EPS, D_EPID = 0, 1, 2, 3
N_DIAG = 4


@njit(cache=True)
def state_size(n):
    return 2 + 6 * n + N_AUX


@njit(cache=True)
def n_slots(n):
    return n * (n - 1) // 2 + 4 * n


@njit(cache=True)
def shock(t, F0, t0):
    if t < t0:
        return F0 * math.sin(math.pi / t0 * t)
    return 0.0


@njit(cache=True)
def _normal_magnitude(delta, ddelta, A, meff, alpha, clamp):
    """Returns (signed normal magnitude, elastic part)."""
    root = math.sqrt(delta)
    elastic = A * delta * root
    gamma = alpha * math.sqrt(meff * A) * math.sqrt(root)
    mag = elastic + gamma * ddelta
    if clamp and mag < 0.0:
        mag = 0.0
    return mag, elastic


@njit(cache=True)
def rhs(t, y, dy, p, n):
    """Fill ``dy`` with the time derivative of ``y``; return F_d (x reaction on the walls)."""
    m_ps = p[P_MPS]
    R = p[P_R]
    m = p[P_M]
    inertia = p[P_I]
    A = p[P_A]
    meff = p[P_MEFF]
    alpha = p[P_ALPHA]
    mu = p[P_MU]
    ks = p[P_KS]
    one_d = p[P_ONE_D] != 0.0
    clamp = p[P_CLAMP] != 0.0
    friction = (not one_d) and mu > 0.0
    d1 = p[P_D1]
    d2 = p[P_D2]

    z = y[0]
    zd = y[1]
    ix, iy, ith, ivx, ivy, iom = 2, 2 + n, 2 + 2 * n, 2 + 3 * n, 2 + 4 * n, 2 + 5 * n

    for k in range(dy.shape[0]):
        dy[k] = 0.0
    for i in range(n):
        dy[ix + i] = y[ivx + i]
        dy[iy + i] = y[ivy + i]
        dy[ith + i] = y[iom + i]

    p_vis = 0.0
    p_f = 0.0
    f_d = 0.0
    two_r = 2.0 * R

    # granule-granule
    for i in range(n):
        for j in range(i + 1, n):
            dx = y[ix + j] - y[ix + i]
            dyy = y[iy + j] - y[iy + i]
            d2ij = dx * dx + dyy * dyy
            if d2ij >= two_r * two_r:
                continue
            d = math.sqrt(d2ij)
            delta = two_r - d
            nx = dx / d
            ny = dyy / d
            rvx = y[ivx + i] - y[ivx + j]
            rvy = y[ivy + i] - y[ivy + j]
            ddelta = rvx * nx + rvy * ny
            mag, elastic = _normal_magnitude(delta, ddelta, A, meff, alpha, clamp)
            p_vis += (mag - elastic) * ddelta
            fxi = -mag * nx
            fyi = -mag * ny
            if friction:
                tx = -ny
                ty = nx
                slip = rvx * tx + rvy * ty + R * y[iom + i] + R * y[iom + j]
                ft = mu * abs(mag) * math.tanh(ks * slip)
                fxi -= ft * tx
                fyi -= ft * ty
                dy[iom + i] -= R * ft / inertia
                dy[iom + j] -= R * ft / inertia
                p_f += ft * slip
            dy[ivx + i] += fxi / m
            dy[ivy + i] += fyi / m
            dy[ivx + j] -= fxi / m
            dy[ivy + j] -= fyi / m

    # granule-wall
    for i in range(n):
        xi = y[ix + i]
        yi = y[iy + i]
        nwalls = 2 if one_d else 4
        for w in range(nwalls):
            if w == WALL_LEFT:
                delta = R - (xi - z)
                nx, ny = -1.0, 0.0
            elif w == WALL_RIGHT:
                delta = xi + R - (z + d1)
                nx, ny = 1.0, 0.0
            elif w == WALL_FLOOR:
                delta = R - yi
                nx, ny = 0.0, -1.0
            else:
                delta = yi + R - d2
                nx, ny = 0.0, 1.0
            if delta <= 0.0:
                continue
            rvx = y[ivx + i] - zd
            rvy = y[ivy + i]
            ddelta = rvx * nx + rvy * ny
            mag, elastic = _normal_magnitude(delta, ddelta, A, meff, alpha, clamp)
            p_vis += (mag - elastic) * ddelta
            fx = -mag * nx
            fy = -mag * ny
            if friction:
                tx = -ny
                ty = nx
                slip = rvx * tx + rvy * ty + R * y[iom + i]
                ft = mu * abs(mag) * math.tanh(ks * slip)
                fx -= ft * tx
                fy -= ft * ty
                dy[iom + i] -= R * ft / inertia
                p_f += ft * slip
            dy[ivx + i] += fx / m
            dy[ivy + i] += fy / m
            f_d -= fx

    force = shock(t, p[P_F0], p[P_T0])
    dy[0] = zd
    dy[1] = (force + f_d - p[P_C] * zd - p[P_K] * z) / m_ps
    base = 2 + 6 * n
    dy[base] = p[P_C] * zd * zd
    dy[base + 1] = p_vis
    dy[base + 2] = p_f
    dy[base + 3] = force * zd
    return f_d


@njit(cache=True)
def energies(y, p, n, shares):
    """Return (E_PS, E_PID); per-granule energies go into ``shares``."""
    R = p[P_R]
    m = p[P_M]
    inertia = p[P_I]
    A = p[P_A]
    one_d = p[P_ONE_D] != 0.0
    z = y[0]
    zd = y[1]
    e_ps = 0.5 * p[P_MPS] * zd * zd + 0.5 * p[P_K] * z * z
    ix, iy, ivx, ivy, iom = 2, 2 + n, 2 + 3 * n, 2 + 4 * n, 2 + 5 * n
    for i in range(n):
        vx = y[ivx + i]
        vy = y[ivy + i]
        om = y[iom + i]
        shares[i] = 0.5 * m * (vx * vx + vy * vy) + 0.5 * inertia * om * om
    two_r = 2.0 * R
    for i in range(n):
        for j in range(i + 1, n):
            dx = y[ix + j] - y[ix + i]
            dyy = y[iy + j] - y[iy + i]
            d2ij = dx * dx + dyy * dyy
            if d2ij >= two_r * two_r:
                continue
            delta = two_r - math.sqrt(d2ij)
            half = 0.2 * A * delta * delta * math.sqrt(delta)
            shares[i] += half
            shares[j] += half
    for i in range(n):
        xi = y[ix + i]
        yi = y[iy + i]
        nwalls = 2 if one_d else 4
        for w in range(nwalls):
            if w == WALL_LEFT:
                delta = R - (xi - z)
            elif w == WALL_RIGHT:
                delta = xi + R - (z + p[P_D1])
            elif w == WALL_FLOOR:
                delta = R - yi
            else:
                delta = yi + R - p[P_D2]
            if delta > 0.0:
                shares[i] += 0.4 * A * delta * delta * math.sqrt(delta)
    e_pid = 0.0
    for i in range(n):
        e_pid += shares[i]
    return e_ps, e_pid


@njit(cache=True)
def scan_gaps(y, p, n, gaps, closing):
    """Surface gap (negative = penetration) and closing speed for every contact slot.

    Floor/ceiling slots are set to +inf in 1D mode.
    """
    R = p[P_R]
    one_d = p[P_ONE_D] != 0.0
    z = y[0]
    zd = y[1]
    ix, iy, ivx, ivy = 2, 2 + n, 2 + 3 * n, 2 + 4 * n
    s = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = y[ix + j] - y[ix + i]
            dyy = y[iy + j] - y[iy + i]
            d = math.sqrt(dx * dx + dyy * dyy)
            gaps[s] = d - 2.0 * R
            if d > 0.0:
                closing[s] = ((y[ivx + i] - y[ivx + j]) * dx + (y[ivy + i] - y[ivy + j]) * dyy) / d
            else:
                closing[s] = 0.0
            s += 1
    for i in range(n):
        xi = y[ix + i]
        yi = y[iy + i]
        gaps[s] = (xi - z) - R
        closing[s] = -(y[ivx + i] - zd)
        gaps[s + 1] = (z + p[P_D1]) - (xi + R)
        closing[s + 1] = y[ivx + i] - zd
        if one_d:
            gaps[s + 2] = np.inf
            closing[s + 2] = 0.0
            gaps[s + 3] = np.inf
            closing[s + 3] = 0.0
        else:
            gaps[s + 2] = yi - R
            closing[s + 2] = -y[ivy + i]
            gaps[s + 3] = p[P_D2] - (yi + R)
            closing[s + 3] = y[ivy + i]
        s += 4


@njit(cache=True)
def choose_level(level, ramp, gaps, closing, dt_free, dt_contact, prox):
    """Next ramp level: 0 is contact stepping, ``ramp`` is free-flight stepping.

    Active contact or a gap that would close within the current step forces level 0;
    proximity or a closure predicted within two free steps ramps down one level;
    otherwise ramp up one level.
    """
    dt_now = step_for_level(level, ramp, dt_free, dt_contact)
    near = False
    for s in range(gaps.shape[0]):
        g = gaps[s]
        v = closing[s]
        if g <= 0.0:
            return 0
        if v > 0.0 and g <= v * dt_now:
            return 0
        if g < prox or (v > 0.0 and g < 2.0 * v * dt_free):
            near = True
    if near:
        return max(level - 1, 0)
    return min(level + 1, ramp)


@njit(cache=True)
def step_for_level(level, ramp, dt_free, dt_contact):
    if level <= 0:
        return dt_contact
    if level >= ramp:
        return dt_free
    return dt_contact * (dt_free / dt_contact) ** (level / ramp)


@njit(cache=True)
def rk4(t, y, dt, p, n, k1, k2, k3, k4, tmp, out):
    rhs(t, y, k1, p, n)
    for q in range(y.shape[0]):
        tmp[q] = y[q] + 0.5 * dt * k1[q]
    rhs(t + 0.5 * dt, tmp, k2, p, n)
    for q in range(y.shape[0]):
        tmp[q] = y[q] + 0.5 * dt * k2[q]
    rhs(t + 0.5 * dt, tmp, k3, p, n)
    for q in range(y.shape[0]):
        tmp[q] = y[q] + dt * k3[q]
    rhs(t + dt, tmp, k4, p, n)
    for q in range(y.shape[0]):
        out[q] = y[q] + dt / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q])


@njit(cache=True)
def rk4_single(t, y, dt, p, n):
    size = y.shape[0]
    k1 = np.empty(size)
    k2 = np.empty(size)
    k3 = np.empty(size)
    k4 = np.empty(size)
    tmp = np.empty(size)
    out = np.empty(size)
    rk4(t, y, dt, p, n, k1, k2, k3, k4, tmp, out)
    return out


@njit(cache=True)
def run_chunk(
    p, n, fsettings, isettings,
    # persistent run state (modified in place)
    y, clock, level_box, active, sample_index_box,
    # output buffers
    samples, diag, shares_out,
    ev_time, ev_slot, ev_on, ev_count_box,
    mode_time, mode_val, mode_count_box,
):
    """Advance until a stop condition or until a buffer fills.

    ``clock = [t, t_next_sample]``. Samples are written at exact multiples of the
    output stride. Returns (status, samples_written).
    """
    dt_free = fsettings[0]
    dt_contact = fsettings[1]
    prox = fsettings[2]
    t_max = fsettings[3]
    floor = fsettings[4]
    tol = fsettings[5]
    stride = fsettings[6]
    t_min_stop = fsettings[7]
    ramp = isettings[S_RAMP]

    t0 = p[P_T0]
    size = y.shape[0]
    k1 = np.empty(size)
    k2 = np.empty(size)
    k3 = np.empty(size)
    k4 = np.empty(size)
    tmp = np.empty(size)
    ynew = np.empty(size)
    ns = n_slots(n)
    gaps = np.empty(ns)
    closing = np.empty(ns)
    shares = np.empty(max(n, 1))
    base = 2 + 6 * n

    t = clock[0]
    t_next = clock[1]
    level = level_box[0]
    written = 0
    cap = samples.shape[0]
    ev_cap = ev_time.shape[0]
    mode_cap = mode_time.shape[0]

    while True:
        # sample due at the current time
        if t >= t_next:
            if written >= cap:
                clock[0] = t
                clock[1] = t_next
                level_box[0] = level
                return BUFFER_FULL, written
            for q in range(size):
                samples[written, q] = y[q]
            f_d = rhs(t, y, k1, p, n)
            e_ps, e_pid = energies(y, p, n, shares)
            diag[written, D_F] = shock(t, p[P_F0], t0)
            diag[written, D_FD] = f_d
            diag[written, D_EPS] = e_ps
            diag[written, D_EPID] = e_pid
            for i in range(n):
                shares_out[written, i] = shares[i]
            written += 1
            sample_index_box[0] += 1
            t_next = sample_index_box[0] * stride

            e_in = y[base + 3]
            ok = True
            for q in range(size):
                if not math.isfinite(y[q]):
                    ok = False
            if not ok:
                clock[0] = t
                clock[1] = t_next
                return ABORT_NONFINITE, written
            if e_in > 0.0 and t >= t0:
                total = e_ps + e_pid + y[base] + y[base + 1] + y[base + 2]
                if abs(total - e_in) / e_in > tol:
                    clock[0] = t
                    clock[1] = t_next
                    return ABORT_CONSERVATION, written
            if t >= t_min_stop:
                if e_in <= 0.0 or 100.0 * (e_ps + e_pid) / e_in < floor:
                    clock[0] = t
                    clock[1] = t_next
                    level_box[0] = level
                    return DONE_FLOOR, written
            if t >= t_max - 1e-12:
                clock[0] = t
                clock[1] = t_next
                level_box[0] = level
                return DONE_TMAX, written

        if ev_count_box[0] + ns > ev_cap or mode_count_box[0] + 1 > mode_cap:
            clock[0] = t
            clock[1] = t_next
            level_box[0] = level
            return BUFFER_FULL, written

        scan_gaps(y, p, n, gaps, closing)
        new_level = choose_level(level, ramp, gaps, closing, dt_free, dt_contact, prox)
        if (new_level == 0) != (level == 0) or (new_level == ramp) != (level == ramp):
            mode = 1
            if new_level == 0:
                mode = 0
            elif new_level == ramp:
                mode = 2
            mode_time[mode_count_box[0]] = t
            mode_val[mode_count_box[0]] = mode
            mode_count_box[0] += 1
        level = new_level
        dt = step_for_level(level, ramp, dt_free, dt_contact)
        # land exactly on the next sample and on the end of the shock
        t_stop = t_next
        if t < t0 and t0 < t_stop:
            t_stop = t0
        snap = False
        if t + dt >= t_stop - 1e-15:
            dt = t_stop - t
            snap = True
        rk4(t, y, dt, p, n, k1, k2, k3, k4, tmp, ynew)
        for q in range(size):
            y[q] = ynew[q]
        t = t_stop if snap else t + dt

        # contact onset/offset bookkeeping
        scan_gaps(y, p, n, gaps, closing)
        for s in range(ns):
            now = gaps[s] < 0.0
            if now != active[s]:
                c = ev_count_box[0]
                ev_time[c] = t
                ev_slot[c] = s
                ev_on[c] = now
                ev_count_box[0] = c + 1
                active[s] = now
