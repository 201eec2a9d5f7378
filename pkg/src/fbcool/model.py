"""
Cavity QED constants and closed-form physics of the probed atom.

Conventions: angular frequencies in rad/s, lengths in m, trap depths and
atomic energies in µK (energy / k_B). The dynamics layer converts to the
µm / µs / µK system used by the trajectory kernel.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import constants

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6  # rad/s per MHz

# 85Rb
ATOMIC_MASS = 84.911789738 * constants.atomic_mass  # kg


class UnstableResonatorError(ValueError):
    pass


class EnergyExceedsDepthError(ValueError):
    pass


def mode_waist(cavity, wavelength):
    """TEM00 waist radius (1/e^2 intensity) of a two-mirror resonator.

    Mirror radii may be ``math.inf`` (planar).
    """
    L = cavity.cavity_length
    R1, R2 = cavity.mirror_curvatures
    g1 = 1.0 - L / R1
    g2 = 1.0 - L / R2
    prod = g1 * g2
    if g1 == g2:
        # symmetric resonator, including the confocal point g = 0
        if not -1.0 < g1 < 1.0:
            raise UnstableResonatorError(f"unstable resonator: g1*g2 = {prod}")
        w2 = L * wavelength / (2.0 * math.pi) * math.sqrt((1.0 + g1) / (1.0 - g1))
        return math.sqrt(w2)
    if not 0.0 < prod < 1.0:
        raise UnstableResonatorError(f"unstable resonator: g1*g2 = {prod}")
    w4 = (L * wavelength / math.pi) ** 2 * prod * (1.0 - prod) / (g1 + g2 - 2.0 * prod) ** 2
    return w4 ** 0.25


@dataclass(frozen=True)
class CavityParams:
    g0: float = 16.0 * MHZ
    kappa: float = 1.5 * MHZ
    gamma: float = 3.0 * MHZ
    cavity_length: float = 260e-6
    mirror_curvatures: tuple = (200e-3, 10e-3)
    mirror_transmissions: tuple = (2e-6, 16e-6)
    round_trip_loss: float = 11e-6
    lambda_probe: float = 780e-9
    lambda_trap: float = 785e-9

    def __post_init__(self):
        for name in ("g0", "kappa", "gamma", "cavity_length", "lambda_probe", "lambda_trap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if min(self.mirror_transmissions) < 0 or self.round_trip_loss < 0:
            raise ValueError("mirror transmissions and losses must be non-negative")
        if self.mirror_transmissions[1] <= 0:
            raise ValueError("output mirror transmission must be positive")

    @property
    def waist_probe(self):
        return mode_waist(self, self.lambda_probe)

    @property
    def waist_trap(self):
        return mode_waist(self, self.lambda_trap)

    @property
    def out_coupling_fraction(self):
        """Share of the intracavity decay leaving through the detection mirror."""
        t1, t2 = self.mirror_transmissions
        return t2 / (t1 + t2 + self.round_trip_loss)

    @property
    def finesse(self):
        return 2.0 * math.pi / (sum(self.mirror_transmissions) + self.round_trip_loss)

    @property
    def strong_coupling(self):
        return self.g0 > self.kappa and self.g0 > self.gamma


# Default light shift: 2pi x 10 MHz at the centre of a 950 µK trap.
DEFAULT_LIGHT_SHIFT = 10.0 * MHZ / 950.0


@dataclass(frozen=True)
class DriveParams:
    """Probe drive and detection chain.

    ``light_shift`` is the reduction of the probe-atom detuning per µK of
    local trap depth: the effective detuning is
    ``delta_atom - light_shift * U_local``, so a deeper trap brings the
    atom closer to the blue-detuned probe and lowers the transmission.
    """

    delta_atom: float = 40.0 * MHZ
    delta_cavity: float = 0.0
    n_empty: float = 0.1
    eta_det: float = 0.23
    attenuation: float = 1.0
    light_shift: float = DEFAULT_LIGHT_SHIFT  # rad/s per µK
    dark_rate: float = 0.0  # clicks/s

    def __post_init__(self):
        if self.n_empty < 0:
            raise ValueError("n_empty must be >= 0")
        if not 0.0 <= self.eta_det <= 1.0:
            raise ValueError("eta_det must lie in [0, 1]")
        if not 0.0 <= self.attenuation <= 1.0:
            raise ValueError("attenuation must lie in [0, 1]")
        if self.dark_rate < 0:
            raise ValueError("dark_rate must be >= 0")


def coupling(r, cavity):
    """Atom-cavity coupling at radial distance ``r`` (m) from the axis."""
    w = cavity.waist_probe
    return cavity.g0 * np.exp(-np.square(r) / (w * w))


def effective_detuning(drive, depth_local=0.0):
    return drive.delta_atom - drive.light_shift * depth_local


def rel_transmission(g, drive, cavity, depth_local=0.0):
    """Steady-state transmission relative to the empty resonant cavity.

    ``depth_local`` is the trap depth (µK) seen by the atom; it enters
    through the light-shifted atomic detuning.
    """
    da = effective_detuning(drive, depth_local)
    dc = drive.delta_cavity
    k, gam = cavity.kappa, cavity.gamma
    g2 = np.square(g)
    # |k (gam + i da)|^2 over |(k + i dc)(gam + i da) + g^2|^2, written so that
    # g = 0, dc = 0 gives identical numerator and denominator
    num = (k * gam) ** 2 + (k * da) ** 2
    re = k * gam - dc * da + g2
    im = k * da + dc * gam
    return num / (re * re + im * im)


def empty_cavity_rate(drive, cavity):
    """Detected clicks/s for the empty cavity (T_rel = 1), without dark counts."""
    return (drive.attenuation * drive.eta_det * cavity.out_coupling_fraction
            * drive.n_empty * 2.0 * cavity.kappa)


def detected_rate(t_rel, drive, cavity):
    if np.any(np.asarray(t_rel) < 0):
        raise ValueError("relative transmission must be >= 0")
    return empty_cavity_rate(drive, cavity) * t_rel


def turning_radius(energy, depth, cavity):
    """Radius (m) where an atom with ``energy`` above the trap bottom turns around."""
    if energy < 0:
        raise ValueError("energy must be >= 0")
    if energy > depth:
        raise EnergyExceedsDepthError(f"energy {energy} µK exceeds trap depth {depth} µK")
    if energy == depth:
        return math.inf
    w = cavity.waist_trap
    return w * math.sqrt(-0.5 * math.log1p(-energy / depth))


def window_counts_at(r, depth, window, drive, cavity):
    """Expected clicks in an integration window (s) for an atom held at ``r``."""
    w = cavity.waist_trap
    u_local = depth * math.exp(-2.0 * r * r / (w * w)) if math.isfinite(r) else 0.0
    t = rel_transmission(coupling(r, cavity), drive, cavity, u_local)
    return float(detected_rate(t, drive, cavity) * window + drive.dark_rate * window)


def snr_vs_energy(energy, window, drive, cavity, depth=950.0, noise="center"):
    """Shot-noise SNR of the transmission step between trap centre and the orbit edge.

    ``energy`` (µK, above the trap bottom) is mapped to its turning radius.
    The signal is the count excess over a centred atom within one window
    of duration ``window`` (s). ``noise="center"`` takes the shot noise of
    the localized-atom baseline; ``noise="position"`` uses the counts at
    the turning radius instead.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    r = turning_radius(energy, depth, cavity)
    c_r = window_counts_at(r, depth, window, drive, cavity)
    c_0 = window_counts_at(0.0, depth, window, drive, cavity)
    if noise == "center":
        ref = c_0
    elif noise == "position":
        ref = c_r
    else:
        raise ValueError(f"unknown noise reference {noise!r}")
    if ref <= 0:
        return 0.0
    return (c_r - c_0) / math.sqrt(ref)
