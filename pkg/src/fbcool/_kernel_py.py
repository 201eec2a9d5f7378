"""Pure-Python trajectory kernel.

Mirror of ``_kernel.pyx``: same arithmetic in the same order and the same
draws from the bit generator, so both produce identical records. Roughly
two orders of magnitude slower; used when the extension is not built.
"""

from math import exp, sqrt

import numpy as np

SEG_FEEDBACK = 0
SEG_HIGH = 1
SEG_LOW = 2
SEG_OFF = 3
SEG_RAMP = 4


def run_trajectory(bit_generator, x0, y0, vx0, vy0, p, seg_end, seg_kind, seg_u0, seg_u1,
                   period, n_steps, record):
    gen = np.random.Generator(bit_generator)
    normal = gen.standard_normal
    poisson = gen.poisson

    mass, wt2, wp2, g0sq = float(p["mass"]), float(p["wt2"]), float(p["wp2"]), float(p["g0sq"])
    kappa, gamma = float(p["kappa"]), float(p["gamma"])
    delta_a, delta_c = float(p["delta_a"]), float(p["delta_c"])
    ls, scat, kick = float(p["light_shift"]), float(p["scat"]), float(p["kick"])
    clicks, dark, dt = float(p["clicks_per_bin"]), float(p["dark_per_bin"]), float(p["dt"])
    u_high, u_low, esc_r2 = float(p["u_high"]), float(p["u_low"]), float(p["esc_r2"])
    spb, bpw, threshold = int(p["steps_per_bin"]), int(p["bins_per_window"]), int(p["threshold"])
    strict = bool(p["strict"])
    seg_end = [int(v) for v in seg_end]
    seg_kind = [int(v) for v in seg_kind]
    seg_u0 = [float(v) for v in seg_u0]
    seg_u1 = [float(v) for v in seg_u1]
    period = int(period)
    n_steps = int(n_steps)

    c_force = 4.0 / (wt2 * mass)
    half_dt = 0.5 * dt
    gam2, kg = gamma * gamma, kappa * gamma

    n_bins = n_steps // spb
    n_win = n_bins // bpw
    bins = np.zeros(n_bins if record >= 2 else 0, dtype=np.int32)
    wins = np.zeros(n_win if record >= 1 else 0, dtype=np.int32)
    levs = np.zeros(n_win if record >= 1 else 0, dtype=np.int8)

    x, y, vx, vy = float(x0), float(y0), float(vx0), float(vy0)
    r2 = x * x + y * y
    ft = exp(-2.0 * r2 / wt2)
    t_sum = 0.0
    seg = cycle_start = seg_start = 0
    bin_index = win_index = in_window = wsum = 0
    prev = -1
    escape_step = unbound_step = unbound_since = -1
    nseg = len(seg_end)

    kind = seg_kind[0]
    if kind == SEG_HIGH or kind == SEG_FEEDBACK:
        u, level = u_high, 0
    elif kind == SEG_LOW:
        u, level = u_low, 1
    elif kind == SEG_OFF:
        u, level = 0.0, 3
    else:
        u, level = seg_u0[0], 2

    n = 0
    while n < n_steps:
        local = n - cycle_start
        if local >= seg_end[seg]:
            seg_start = seg_end[seg]
            seg += 1
            if seg == nseg:
                seg = 0
                seg_start = 0
                cycle_start += period
                local = n - cycle_start
            kind = seg_kind[seg]
            if kind == SEG_HIGH:
                u, level = u_high, 0
            elif kind == SEG_LOW:
                u, level = u_low, 1
            elif kind == SEG_OFF:
                u, level = 0.0, 3
            elif kind == SEG_RAMP:
                level = 2
        if kind == SEG_RAMP:
            frac = float(local - seg_start) / float(seg_end[seg] - seg_start)
            if frac > 1.0:
                frac = 1.0
            u = seg_u0[seg] + (seg_u1[seg] - seg_u0[seg]) * frac

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

        g2 = g0sq * gexp
        delta = delta_a - ls * (u * ft)
        re = kg - delta_c * delta + g2
        im = kappa * delta + delta_c * gamma
        t_rel = (kg * kg + (kappa * delta) * (kappa * delta)) / (re * re + im * im)
        t_sum = t_sum + t_rel
        rsc = scat * g2 * t_rel / (delta * delta + gam2)
        sigma = sqrt(kick * rsc)
        vx = vx + sigma * normal()
        vy = vy + sigma * normal()

        n += 1

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
            counts = int(poisson(lam))
            if record >= 2:
                bins[bin_index] = counts
            bin_index += 1
            wsum += counts
            in_window += 1
            if in_window == bpw:
                if record >= 1:
                    wins[win_index] = wsum
                    levs[win_index] = level
                win_index += 1
                if kind == SEG_FEEDBACK and prev >= 0:
                    diff = prev - wsum
                    if (diff > threshold) if strict else (diff >= threshold):
                        u, level = u_low, 1
                    else:
                        u, level = u_high, 0
                prev = wsum
                wsum = 0
                in_window = 0

    return {
        "escape_step": escape_step,
        "unbound_step": unbound_step,
        "n_steps": n,
        "n_bins": bin_index,
        "n_windows": win_index,
        "bins": bins[:bin_index] if record >= 2 else None,
        "windows": wins[:win_index] if record >= 1 else None,
        "levels": levs[:win_index] if record >= 1 else None,
        "state": (x, y, vx, vy),
        "depth": u,
    }
