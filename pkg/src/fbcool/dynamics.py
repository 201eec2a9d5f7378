"""
Stochastic radial motion of the atom in the switchable dipole trap.

Units: positions in µm, velocities in µm/µs (= m/s), times in µs, energies
and trap depths in µK. The transverse plane is two-dimensional; the atom
sits at an antinode of the standing wave along the cavity axis.
"""

from dataclasses import dataclass, field
import math
import os

import numpy as np
from scipy import constants

from . import model
from .controller import FeedbackConfig, Schedule, TrapLevel

try:
    if os.environ.get("FBCOOL_PURE_PYTHON"):
        raise ImportError("pure-Python kernel forced")
    from ._kernel import run_trajectory as _run_compiled
except ImportError:
    _run_compiled = None
from ._kernel_py import run_trajectory as _run_python

KERNEL = "compiled" if _run_compiled is not None else "python"

#: mass in µK / (µm/µs)^2, so that 0.5 * MASS * v**2 is in µK
MASS = model.ATOMIC_MASS / (constants.k * 1e-6)

# calibrated so that the no-feedback 1/e storage time is 35 ms at default
# parameters (see experiments.calibrate_heating)
DEFAULT_ZETA_HEAT = 0.381972


def recoil_velocity(cavity):
    """Single-photon recoil velocity at the probe wavelength, µm/µs."""
    return constants.h / (cavity.lambda_probe * model.ATOMIC_MASS)


@dataclass(frozen=True)
class DynamicsConfig:
    dt: float = 0.5  # µs
    zeta_heat: float = DEFAULT_ZETA_HEAT
    t_init: float = 400.0  # µK
    escape_radius: float = 3.0  # in units of the trap waist

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        spb = round(1.0 / self.dt)
        if abs(spb * self.dt - 1.0) > 1e-9:
            raise ValueError("dt must divide 1 µs into a whole number of steps")
        if self.zeta_heat < 0:
            raise ValueError("zeta_heat must be >= 0")
        if not self.t_init > 0:
            raise ValueError("t_init must be positive")
        if not self.escape_radius > 0:
            raise ValueError("escape_radius must be positive")

    @property
    def steps_per_bin(self):
        return int(round(1.0 / self.dt))


@dataclass
class AtomState:
    position: np.ndarray
    velocity: np.ndarray
    escaped_at: float = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)

    @property
    def trapped(self):
        return self.escaped_at is None

    def energy(self, depth, cavity):
        """Radial energy above the trap bottom, µK."""
        r = math.hypot(*self.position)
        kin = 0.5 * MASS * float(self.velocity @ self.velocity)
        return kin + trap_potential(r, depth, cavity) + depth


@dataclass
class TrapState:
    level: TrapLevel = TrapLevel.HIGH
    depth: float = 950.0
    schedule: Schedule = field(default_factory=Schedule)

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("trap depth must be >= 0")


@dataclass
class TrajectoryRecord:
    """Output of one simulated atom.

    ``escape_time`` is when the atom left the trap region; ``unbound_time``
    is the start of the unbound stretch that ended in that escape. Both
    are None for an atom still trapped at the end of the run.
    """

    escape_time: float
    unbound_time: float
    duration: float
    intensity_bins: np.ndarray
    window_counts: np.ndarray
    trap_history: np.ndarray
    rng_seed: tuple
    t_int: float = 13.0
    initial_state: tuple = None
    final_state: tuple = None

    @property
    def escaped(self):
        return self.escape_time is not None

    @property
    def n_bins(self):
        return int(self.duration)


def _waists_um(cavity):
    return cavity.waist_trap * 1e6, cavity.waist_probe * 1e6


def trap_potential(r, depth, cavity):
    """Dipole potential (µK) at radius ``r`` (µm) for a trap of ``depth`` µK."""
    wt, _ = _waists_um(cavity)
    return -depth * np.exp(-2.0 * np.square(r) / (wt * wt))


def trap_force(r_vec, depth, cavity):
    """-grad V in µK/µm at the 2-vector ``r_vec`` (µm)."""
    wt, _ = _waists_um(cavity)
    r_vec = np.asarray(r_vec, dtype=float)
    r2 = float(r_vec @ r_vec)
    return -4.0 * depth / (wt * wt) * math.exp(-2.0 * r2 / (wt * wt)) * r_vec


def scattering_rate(r, depth, drive, cavity):
    """Spontaneous photon scattering rate (1/s) of the probed atom at radius ``r`` µm."""
    wt, _ = _waists_um(cavity)
    u_local = depth * np.exp(-2.0 * np.square(r) / (wt * wt))
    g = model.coupling(np.asarray(r) * 1e-6, cavity)
    t_rel = model.rel_transmission(g, drive, cavity, u_local)
    delta = model.effective_detuning(drive, u_local)
    n_cav = drive.n_empty * t_rel
    return 2.0 * cavity.gamma * g * g * n_cav / (delta * delta + cavity.gamma ** 2)


def heating_diffusion(r, depth, drive, cavity, zeta_heat=DEFAULT_ZETA_HEAT):
    """Momentum diffusion coefficient per axis, kg^2 m^2 / s^3."""
    hbar_k = constants.h / cavity.lambda_probe
    return zeta_heat * hbar_k ** 2 * scattering_rate(r, depth, drive, cavity)


def _depth_of(trap_state):
    return trap_state.depth if isinstance(trap_state, TrapState) else float(trap_state)


def step(state, trap_state, drive, cavity, dt, rng, zeta_heat=DEFAULT_ZETA_HEAT):
    """Advance one atom by ``dt`` µs.

    Velocity-Verlet for the trap force followed by a Gaussian momentum kick
    of variance ``2 D_p dt / m^2`` per axis. Escaped atoms are returned
    unchanged.
    """
    if not state.trapped:
        return state
    depth = _depth_of(trap_state)
    pos = state.position.copy()
    vel = state.velocity.copy()
    vel += 0.5 * dt * trap_force(pos, depth, cavity) / MASS
    pos += dt * vel
    vel += 0.5 * dt * trap_force(pos, depth, cavity) / MASS
    r = math.hypot(*pos)
    d_p = heating_diffusion(r, depth, drive, cavity, zeta_heat)
    # 2 D_p dt / m^2 in (m/s)^2, dt converted to s
    sigma = math.sqrt(2.0 * d_p * dt * 1e-6) / model.ATOMIC_MASS
    if sigma > 0:
        vel += sigma * rng.standard_normal(2)
    new = AtomState(pos, vel)
    wt, _ = _waists_um(cavity)
    if new.energy(depth, cavity) > depth and r > 3.0 * wt:
        new.escaped_at = math.nan
    return new


def sample_initial(t_init, depth, rng, cavity, escape_radius=3.0):
    """Draw a bound atom from the thermal distribution in the Gaussian trap.

    The 2D Boltzmann weight exp(-E/T) is truncated to E < depth and to the
    escape radius, and sampled exactly by rejection: the reduced radius
    s = 2 r^2 / w^2 from a piecewise exponential/flat envelope, the kinetic
    energy from its Maxwell (exponential) law.
    """
    if not t_init > 0:
        raise ValueError("t_init must be positive")
    if not depth > 0:
        raise ValueError("depth must be positive")
    wt, _ = _waists_um(cavity)
    a = depth / t_init
    s_max = 2.0 * escape_radius ** 2
    b = a * (1.0 - math.exp(-1.0))
    w1 = -math.expm1(-b) / b if b > 0 else 1.0
    w2 = math.exp(-b) * (s_max - 1.0)
    p1 = w1 / (w1 + w2)
    while True:
        if rng.random() < p1:
            s = -math.log1p(rng.random() * math.expm1(-b)) / b
            env = -b * s
        else:
            s = 1.0 + (s_max - 1.0) * rng.random()
            env = -b
        if math.log(rng.random()) > -a * (-math.expm1(-s)) - env:
            continue
        kin = rng.exponential(t_init)
        if kin >= depth * math.exp(-s):
            continue
        break
    r = wt * math.sqrt(0.5 * s)
    theta = 2.0 * math.pi * rng.random()
    phi = 2.0 * math.pi * rng.random()
    speed = math.sqrt(2.0 * kin / MASS)
    return AtomState(np.array([r * math.cos(theta), r * math.sin(theta)]),
                     np.array([speed * math.cos(phi), speed * math.sin(phi)]))


def kernel_params(cavity, drive, feedback, dyn):
    """Flat parameter set in kernel units (µm, µs, µK, rad/µs)."""
    wt, wp = _waists_um(cavity)
    v_rec = recoil_velocity(cavity)
    gamma = cavity.gamma * 1e-6
    return {
        "mass": MASS,
        "wt2": wt * wt,
        "wp2": wp * wp,
        "g0sq": (cavity.g0 * 1e-6) ** 2,
        "kappa": cavity.kappa * 1e-6,
        "gamma": gamma,
        "delta_a": drive.delta_atom * 1e-6,
        "delta_c": drive.delta_cavity * 1e-6,
        "light_shift": drive.light_shift * 1e-6,
        "scat": 2.0 * gamma * drive.n_empty,
        "kick": 2.0 * dyn.zeta_heat * v_rec * v_rec * dyn.dt,
        "clicks_per_bin": model.empty_cavity_rate(drive, cavity) * 1e-6,
        "dark_per_bin": drive.dark_rate * 1e-6,
        "dt": dyn.dt,
        "steps_per_bin": dyn.steps_per_bin,
        "bins_per_window": feedback.bins_per_window,
        "threshold": int(feedback.threshold),
        "strict": bool(feedback.strict),
        "u_high": feedback.u_high,
        "u_low": feedback.u_low,
        "esc_r2": (dyn.escape_radius * wt) ** 2,
    }


def make_rng(seed):
    """Generator for a seed given as an int or a (master, point, atom) tuple."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        master, *key = seed
        ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    else:
        ss = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(ss))


_RECORD_LEVELS = {"none": 0, "windows": 1, "full": 2}


def simulate_trajectory(init, feedback, schedule, duration, drive, cavity, dyn, rng,
                        record="full", rng_seed=None, backend=None):
    """Simulate one atom for ``duration`` µs.

    ``rng`` is a Generator (or a seed accepted by ``make_rng``) whose bit
    generator drives both the momentum kicks and the photon counts.
    ``record`` selects what is stored: ``none`` (escape time only),
    ``windows`` (window counts and trap history) or ``full`` (plus the
    1 µs intensity bins).
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    if rng_seed is None and not isinstance(rng, np.random.Generator):
        rng_seed = tuple(rng) if isinstance(rng, (tuple, list)) else (int(rng),)
    rng = make_rng(rng)
    backend = backend or KERNEL
    if backend == "compiled":
        if _run_compiled is None:
            raise RuntimeError("compiled kernel is not available")
        run = _run_compiled
    elif backend == "python":
        run = _run_python
    else:
        raise ValueError(f"unknown backend {backend!r}")

    n_steps = int(round(duration / dyn.dt))
    ends, kinds, u0, u1, period = schedule.segments(dyn.dt)
    p = kernel_params(cavity, drive, feedback, dyn)
    x, y = (float(v) for v in init.position)
    vx, vy = (float(v) for v in init.velocity)
    out = run(rng.bit_generator, x, y, vx, vy, p, ends, kinds, u0, u1, period,
              n_steps, _RECORD_LEVELS[record])

    esc = out["escape_step"]
    return TrajectoryRecord(
        escape_time=esc * dyn.dt if esc >= 0 else None,
        unbound_time=out["unbound_step"] * dyn.dt if esc >= 0 else None,
        duration=float(out["n_bins"]),
        intensity_bins=out["bins"],
        window_counts=out["windows"],
        trap_history=out["levels"],
        rng_seed=rng_seed,
        t_int=feedback.t_int,
        initial_state=(x, y, vx, vy),
        final_state=tuple(out["state"]),
    )
