# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled trajectory kernel.

Must stay operation-for-operation identical to ``_kernel_py.run_trajectory``;
both consume the same bit generator in the same order.
"""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, sqrt
from libc.stdint cimport int64_t, int32_t, int8_t
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal, random_poisson

cnp.import_array()

cdef enum:
    SEG_FEEDBACK = 0
    SEG_HIGH = 1
    SEG_LOW = 2
    SEG_OFF = 3
    SEG_RAMP = 4


def run_trajectory(bit_generator, double x0, double y0, double vx0, double vy0,
                   dict p, int64_t[::1] seg_end, int64_t[::1] seg_kind,
                   double[::1] seg_u0, double[::1] seg_u1, int64_t period,
                   int64_t n_steps, int record):
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")

    cdef double mass = p["mass"], wt2 = p["wt2"], wp2 = p["wp2"], g0sq = p["g0sq"]
    cdef double kappa = p["kappa"], gamma = p["gamma"], delta_a = p["delta_a"], delta_c = p["delta_c"]
    cdef double ls = p["light_shift"], scat = p["scat"], kick = p["kick"]
    cdef double clicks = p["clicks_per_bin"], dark = p["dark_per_bin"], dt = p["dt"]
    cdef double u_high = p["u_high"], u_low = p["u_low"], esc_r2 = p["esc_r2"]
    cdef int64_t spb = p["steps_per_bin"], bpw = p["bins_per_window"], threshold = p["threshold"]
    cdef bint strict = p["strict"]

    cdef double c_force = 4.0 / (wt2 * mass)
    cdef double half_dt = 0.5 * dt
    cdef double gam2 = gamma * gamma, kg = kappa * gamma

    cdef int64_t n_bins = n_steps // spb
    cdef int64_t n_win = n_bins // bpw
    bins_arr = np.zeros(n_bins if record >= 2 else 0, dtype=np.int32)
    win_arr = np.zeros(n_win if record >= 1 else 0, dtype=np.int32)
    lev_arr = np.zeros(n_win if record >= 1 else 0, dtype=np.int8)
    cdef int32_t[::1] bins = bins_arr
    cdef int32_t[::1] wins = win_arr
    cdef int8_t[::1] levs = lev_arr

    cdef double x = x0, y = y0, vx = vx0, vy = vy0
    cdef double r2 = x * x + y * y
    cdef double ft = exp(-2.0 * r2 / wt2)
    cdef double gexp, g2, u = u_high, a, delta, re, im, t_rel, rsc, sigma, energy, lam, frac
    cdef double t_sum = 0.0
    cdef int64_t n, seg = 0, cycle_start = 0, seg_start = 0, local, kind
    cdef int64_t bin_index = 0, win_index = 0, in_window = 0, counts, wsum = 0
    cdef int64_t prev = -1
    cdef int64_t escape_step = -1, unbound_step = -1, unbound_since = -1
    cdef int8_t level = 0
    cdef int64_t nseg = seg_end.shape[0]

    kind = seg_kind[0]
    if kind == SEG_HIGH or kind == SEG_FEEDBACK:
        u = u_high
        level = 0
    elif kind == SEG_LOW:
        u = u_low
        level = 1
    elif kind == SEG_OFF:
        u = 0.0
        level = 3
    else:
        u = seg_u0[0]
        level = 2

    with bit_generator.lock:
        with nogil:
            n = 0
            while n < n_steps:
                # schedule
                local = n - cycle_start
                if local >= seg_end[seg]:
                    seg_start = seg_end[seg]
                    seg = seg + 1
                    if seg == nseg:
                        seg = 0
                        seg_start = 0
                        cycle_start = cycle_start + period
                        local = n - cycle_start
                    kind = seg_kind[seg]
                    if kind == SEG_HIGH:
                        u = u_high
                        level = 0
                    elif kind == SEG_LOW:
                        u = u_low
                        level = 1
                    elif kind == SEG_OFF:
                        u = 0.0
                        level = 3
                    elif kind == SEG_RAMP:
                        level = 2
                if kind == SEG_RAMP:
                    frac = (<double> (local - seg_start)) / (<double> (seg_end[seg] - seg_start))
                    if frac > 1.0:
                        frac = 1.0
                    u = seg_u0[seg] + (seg_u1[seg] - seg_u0[seg]) * frac

                # velocity Verlet in the trap
                a = -c_force * u * ft
                vx = vx + half_dt * (a * x)
                vy = vy + half_dt * (a * y)
                x = x + dt * vx
                y = y + dt * vy
                r2 = x * x + y * y
                ft = exp(-2.0 * r2 / wt2)
                gexp = exp(-2.0 * r2 / wp2)
                a = -c_force * u * ft
                vx = vx + half_dt * (a * x)
                vy = vy + half_dt * (a * y)

                # probe transmission and scattering at the new position
                g2 = g0sq * gexp
                delta = delta_a - ls * (u * ft)
                re = kg - delta_c * delta + g2
                im = kappa * delta + delta_c * gamma
                t_rel = (kg * kg + (kappa * delta) * (kappa * delta)) / (re * re + im * im)
                t_sum = t_sum + t_rel
                rsc = scat * g2 * t_rel / (delta * delta + gam2)
                sigma = sqrt(kick * rsc)
                vx = vx + sigma * random_standard_normal(rng)
                vy = vy + sigma * random_standard_normal(rng)

                n = n + 1

                energy = 0.5 * mass * (vx * vx + vy * vy) - u * ft
                if energy > 0.0:
                    if unbound_since < 0:
                        unbound_since = n
                    if r2 > esc_r2:
                        escape_step = n
                        unbound_step = unbound_since
                        break
                else:
                    unbound_since = -1

                if n % spb == 0:
                    lam = clicks * (t_sum / spb) + dark
                    t_sum = 0.0
                    counts = random_poisson(rng, lam)
                    if record >= 2:
                        bins[bin_index] = <int32_t> counts
                    bin_index = bin_index + 1
                    wsum = wsum + counts
                    in_window = in_window + 1
                    if in_window == bpw:
                        if record >= 1:
                            wins[win_index] = <int32_t> wsum
                            levs[win_index] = level
                        win_index = win_index + 1
                        if kind == SEG_FEEDBACK and prev >= 0:
                            if strict:
                                if prev - wsum > threshold:
                                    u = u_low
                                    level = 1
                                else:
                                    u = u_high
                                    level = 0
                            else:
                                if prev - wsum >= threshold:
                                    u = u_low
                                    level = 1
                                else:
                                    u = u_high
                                    level = 0
                        prev = wsum
                        wsum = 0
                        in_window = 0

    return {
        "escape_step": escape_step,
        "unbound_step": unbound_step,
        "n_steps": n,
        "n_bins": bin_index,
        "n_windows": win_index,
        "bins": bins_arr[:bin_index] if record >= 2 else None,
        "windows": win_arr[:win_index] if record >= 1 else None,
        "levels": lev_arr[:win_index] if record >= 1 else None,
        "state": (x, y, vx, vy),
        "depth": u,
    }
