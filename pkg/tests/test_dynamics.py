import math

import numpy as np
import pytest
from scipy import constants, integrate

from fbcool import dynamics, model
from fbcool.controller import FeedbackConfig, Schedule
from fbcool.dynamics import MASS, AtomState, DynamicsConfig

CAV = model.CavityParams()
WT = CAV.waist_trap * 1e6
QUIET = model.DriveParams(n_empty=0.0)


def _energy(state, depth):
    x, y, vx, vy = state
    r2 = x * x + y * y
    return 0.5 * MASS * (vx * vx + vy * vy) - depth * math.exp(-2 * r2 / WT ** 2) + depth


def test_mass_units():
    # 0.5 m v^2 / k_B in µK for v = 1 m/s
    assert MASS == pytest.approx(0.5e6 * model.ATOMIC_MASS / constants.k * 2, rel=1e-12)


@pytest.mark.skipif(dynamics._run_compiled is None, reason="compiled kernel not built")
@pytest.mark.parametrize("schedule", [Schedule.constant(), Schedule.toggle(300.0),
                                      Schedule.ramp(hold=200.0, ramp_duration=500.0)])
def test_kernels_bit_identical(schedule):
    init = AtomState([3.0, -2.0], [0.05, 0.1])
    args = (init, FeedbackConfig(), schedule, 1500.0, model.DriveParams(n_empty=0.4), CAV,
            DynamicsConfig(zeta_heat=5.0))
    a = dynamics.simulate_trajectory(*args, rng=(7, 1, 2), backend="compiled")
    b = dynamics.simulate_trajectory(*args, rng=(7, 1, 2), backend="python")
    assert a.final_state == b.final_state
    assert a.escape_time == b.escape_time
    assert np.array_equal(a.intensity_bins, b.intensity_bins)
    assert np.array_equal(a.trap_history, b.trap_history)


def test_determinism(feedback, dyn, drive):
    init = AtomState([2.0, 0.0], [0.0, 0.2])
    a = dynamics.simulate_trajectory(init, feedback, Schedule(), 3000.0, drive, CAV, dyn, (1, 0, 5))
    b = dynamics.simulate_trajectory(init, feedback, Schedule(), 3000.0, drive, CAV, dyn, (1, 0, 5))
    c = dynamics.simulate_trajectory(init, feedback, Schedule(), 3000.0, drive, CAV, dyn, (1, 0, 6))
    assert a.final_state == b.final_state and np.array_equal(a.intensity_bins, b.intensity_bins)
    assert a.final_state != c.final_state


def test_energy_conserved_without_heating(feedback, dyn):
    init = AtomState([8.0, 0.0], [0.0, 0.15])
    rec = dynamics.simulate_trajectory(init, feedback, Schedule.constant("high"), 20000.0,
                                       QUIET, CAV, dyn, 0)
    e0 = _energy((8.0, 0.0, 0.0, 0.15), 950.0)
    assert rec.escape_time is None
    assert _energy(rec.final_state, 950.0) == pytest.approx(e0, rel=1e-4)


def test_no_drive_never_escapes(feedback, dyn):
    for k in range(5):
        init = dynamics.sample_initial(600.0, 950.0, np.random.default_rng(k), CAV)
        rec = dynamics.simulate_trajectory(init, feedback, Schedule(), 5000.0, QUIET, CAV, dyn, k)
        assert rec.escape_time is None
        assert rec.intensity_bins.sum() == 0


def _period(x0, depth, dt=0.05, n=40000):
    state = AtomState([x0, 0.0], [0.0, 0.0])
    xs = np.empty(n)
    rng = np.random.default_rng(0)
    for i in range(n):
        state = dynamics.step(state, depth, QUIET, CAV, dt, rng, zeta_heat=0.0)
        xs[i] = state.position[0]
    up = np.flatnonzero((xs[:-1] < 0) & (xs[1:] >= 0))
    frac = -xs[up] / (xs[up + 1] - xs[up])
    t = (up + frac) * dt
    return np.diff(t).mean()


def test_harmonic_period():
    expected = 2 * math.pi * math.sqrt(MASS * WT ** 2 / (4 * 950.0))
    assert _period(0.1, 950.0) == pytest.approx(expected, rel=0.01)


def test_anharmonic_period_longer():
    assert _period(0.7 * WT, 950.0) > 1.05 * _period(0.1, 950.0)


def test_step_leaves_escaped_atom_alone():
    s = AtomState([100.0, 0.0], [1.0, 0.0], escaped_at=3.0)
    assert dynamics.step(s, 950.0, QUIET, CAV, 0.5, np.random.default_rng()) is s


def test_step_flags_escape():
    s = AtomState([3.2 * WT, 0.0], [1.0, 0.0])
    assert not dynamics.step(s, 950.0, QUIET, CAV, 0.5, np.random.default_rng()).trapped


def test_free_diffusion_kick_variance(drive):
    rng = np.random.default_rng(3)
    dt = 0.5
    vs = np.array([dynamics.step(AtomState([0.0, 0.0], [0.0, 0.0]), 0.0, drive, CAV, dt, rng).velocity
                   for _ in range(20000)])
    d_p = dynamics.heating_diffusion(0.0, 0.0, drive, CAV)
    expected = 2 * d_p * dt * 1e-6 / model.ATOMIC_MASS ** 2
    assert vs.var(axis=0) == pytest.approx([expected] * 2, rel=0.04)


def test_diffusion_scales_with_zeta(drive):
    a = dynamics.heating_diffusion(1.0, 950.0, drive, CAV, 1.0)
    assert dynamics.heating_diffusion(1.0, 950.0, drive, CAV, 2.0) == pytest.approx(2 * a)
    assert dynamics.heating_diffusion(1.0, 950.0, QUIET, CAV, 2.0) == 0.0


def test_scattering_linear_in_drive():
    one = dynamics.scattering_rate(0.0, 950.0, model.DriveParams(n_empty=0.1), CAV)
    two = dynamics.scattering_rate(0.0, 950.0, model.DriveParams(n_empty=0.2), CAV)
    assert one > 0 and two == pytest.approx(2 * one)
    assert dynamics.scattering_rate(5 * WT, 950.0, model.DriveParams(), CAV) < 1e-6 * one


def test_more_heating_escapes_sooner(feedback, dyn):
    def survivors(zeta):
        d = DynamicsConfig(zeta_heat=zeta)
        n = 0
        for k in range(30):
            rng = dynamics.make_rng((0, 0, k))
            init = dynamics.sample_initial(400.0, 950.0, rng, CAV)
            rec = dynamics.simulate_trajectory(init, feedback, Schedule.constant("high"), 15000.0,
                                               model.DriveParams(), CAV, d, rng, record="none")
            n += rec.escape_time is None
        return n

    counts = [survivors(z) for z in (0.3, 1.0, 3.0)]
    assert counts[0] > counts[1] > counts[2]


def test_sample_initial_bounds():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        s = dynamics.sample_initial(400.0, 950.0, rng, CAV)
        assert s.energy(950.0, CAV) < 950.0
        assert math.hypot(*s.position) < 3 * WT


def test_sample_initial_matches_boltzmann():
    t, u = 400.0, 950.0
    a = u / t
    rng = np.random.default_rng(1)
    samples = [dynamics.sample_initial(t, u, rng, CAV) for _ in range(20000)]
    s = np.array([2 * (x.position @ x.position) / WT ** 2 for x in samples])
    e = np.array([x.energy(u, CAV) for x in samples])

    # marginal density of s = 2 r^2 / w^2 after integrating the truncated kinetic part
    dens = lambda x: math.exp(a * math.exp(-x)) * -math.expm1(-a * math.exp(-x))
    z = integrate.quad(dens, 0, 18)[0]
    mean_s = integrate.quad(lambda x: x * dens(x), 0, 18)[0] / z
    assert s.mean() == pytest.approx(mean_s, rel=0.03)

    # energy density above the trap bottom: exp(-E/T) * area(E), area ∝ -ln(1 - E/U)
    edens = lambda x: math.exp(-x / t) * -math.log1p(-x / u)
    ze = integrate.quad(edens, 0, u, limit=200)[0]
    mean_e = integrate.quad(lambda x: x * edens(x), 0, u, limit=200)[0] / ze
    assert e.mean() == pytest.approx(mean_e, rel=0.02)


def test_sample_initial_validation():
    rng = np.random.default_rng()
    with pytest.raises(ValueError):
        dynamics.sample_initial(0.0, 950.0, rng, CAV)
    with pytest.raises(ValueError):
        dynamics.sample_initial(400.0, 0.0, rng, CAV)


@pytest.mark.parametrize("kw", [dict(dt=0), dict(dt=0.3), dict(zeta_heat=-1), dict(t_init=0),
                                dict(escape_radius=0)])
def test_dynamics_config_validation(kw):
    with pytest.raises(ValueError):
        DynamicsConfig(**kw)


def test_record_levels(feedback, dyn, drive):
    init = AtomState([1.0, 0.0], [0.0, 0.0])
    full = dynamics.simulate_trajectory(init, feedback, Schedule(), 1300.0, drive, CAV, dyn, 2)
    win = dynamics.simulate_trajectory(init, feedback, Schedule(), 1300.0, drive, CAV, dyn, 2,
                                       record="windows")
    assert full.intensity_bins.size == 1300 and full.window_counts.size == 100
    assert np.array_equal(win.window_counts, full.window_counts)
    assert np.array_equal(full.window_counts, full.intensity_bins.reshape(100, 13).sum(axis=1))


def test_unknown_backend(feedback, dyn, drive):
    with pytest.raises(ValueError):
        dynamics.simulate_trajectory(AtomState([0, 0], [0, 0]), feedback, Schedule(), 10.0,
                                     drive, CAV, dyn, 0, backend="gpu")


def test_equilibrium_point_unchanged():
    s = dynamics.step(AtomState([0.0, 0.0], [0.0, 0.0]), 950.0, QUIET, CAV, 0.5,
                      np.random.default_rng(), zeta_heat=0.0)
    assert np.array_equal(s.position, [0, 0]) and np.array_equal(s.velocity, [0, 0])


def test_deeper_trap_never_shortens_residence(dyn):
    # deterministic atom launched from the centre with 500 µK of kinetic energy
    speed = math.sqrt(2 * 500.0 / MASS)
    init = AtomState([0.0, 0.0], [speed * 0.6, speed * 0.8])
    times = []
    for depth in (100.0, 200.0, 300.0, 400.0, 490.0, 510.0, 700.0):
        fb = FeedbackConfig(u_high=depth, u_low=min(400.0, depth / 2))
        rec = dynamics.simulate_trajectory(init, fb, Schedule.constant("high"), 2000.0, QUIET, CAV,
                                           dyn, 0, record="none")
        times.append(math.inf if rec.escape_time is None else rec.escape_time)
    assert all(a <= b for a, b in zip(times, times[1:]))
    assert math.isfinite(times[0]) and times[-1] == math.inf


def test_cold_sample_concentrated_at_centre():
    rng = np.random.default_rng(5)
    for _ in range(100):
        s = dynamics.sample_initial(1e-3, 950.0, rng, CAV)
        assert math.hypot(*s.position) < 0.05 * WT
        assert 0.5 * MASS * float(s.velocity @ s.velocity) < 0.02
