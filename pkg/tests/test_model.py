import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbcool import model
from fbcool.model import MHZ, CavityParams, DriveParams


def abcd_waist(L, R1, R2, lam):
    """Waist from the self-consistent q of the round-trip ABCD matrix, taken at mirror 1."""
    prop = np.array([[1.0, L], [0.0, 1.0]])

    def mirror(R):
        return np.array([[1.0, 0.0], [-2.0 / R, 1.0]])

    m = mirror(R1) @ prop @ mirror(R2) @ prop
    A, B, C, D = m.ravel()
    inv_q = (D - A) / (2 * B) - 1j * math.sqrt(1 - ((A + D) / 2) ** 2) / abs(B)
    q = 1 / inv_q
    # propagate to the waist where q is purely imaginary
    z_r = q.imag
    return math.sqrt(lam * z_r / math.pi)


def test_mode_waist_default_about_20um(cavity):
    w = model.mode_waist(cavity, 780e-9)
    assert 19e-6 < w < 21e-6
    assert w == pytest.approx(abcd_waist(260e-6, 0.2, 0.01, 780e-9), rel=1e-9)


def test_mode_waist_confocal_closed_form():
    L, lam = 0.01, 780e-9
    cav = CavityParams(cavity_length=L, mirror_curvatures=(L, L))
    expected = math.sqrt(L * lam / (2 * math.pi))
    assert model.mode_waist(cav, lam) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("radii", [(math.inf, math.inf), (100e-6, 100e-6), (200e-6, 10e-3)])
def test_mode_waist_unstable(radii):
    cav = CavityParams(mirror_curvatures=radii)
    with pytest.raises(model.UnstableResonatorError):
        model.mode_waist(cav, 780e-9)


def test_cavity_invariants(cavity):
    assert cavity.strong_coupling
    assert 0 < cavity.out_coupling_fraction < 1
    assert cavity.out_coupling_fraction == pytest.approx(16 / 29)
    assert cavity.finesse == pytest.approx(2 * math.pi / 29e-6)
    assert cavity.waist_probe > 0 and cavity.waist_trap > cavity.waist_probe


def test_coupling(cavity):
    assert model.coupling(0.0, cavity) == cavity.g0 == 16 * MHZ
    assert model.coupling(cavity.waist_probe, cavity) == pytest.approx(cavity.g0 / math.e)
    assert model.coupling(1.0, cavity) == 0.0
    r = np.linspace(0, 60e-6, 50)
    assert np.all(np.diff(model.coupling(r, cavity)) < 0)


def complex_oracle(g, da, dc, kappa, gamma):
    num = abs(kappa * (gamma + 1j * da)) ** 2
    den = abs((kappa + 1j * dc) * (gamma + 1j * da) + g * g) ** 2
    return num / den


def test_rel_transmission_values(cavity, drive):
    assert model.rel_transmission(0.0, drive, cavity) == 1.0
    t = model.rel_transmission(cavity.g0, drive, cavity)
    ref = complex_oracle(cavity.g0, 40 * MHZ, 0.0, cavity.kappa, cavity.gamma)
    assert t == pytest.approx(ref, rel=1e-12)
    assert t == pytest.approx(0.0507, abs=0.001)
    assert model.rel_transmission(cavity.g0 / math.e, drive, cavity) > t


@given(g=st.floats(0, 2e8), da=st.floats(-5e8, 5e8), dc=st.floats(-5e7, 5e7))
def test_rel_transmission_matches_complex_form(g, da, dc):
    cav = CavityParams()
    dr = DriveParams(delta_atom=da, delta_cavity=dc, light_shift=0.0)
    ref = complex_oracle(g, da, dc, cav.kappa, cav.gamma)
    assert model.rel_transmission(g, dr, cav) == pytest.approx(ref, rel=1e-9)


def test_transmission_increases_with_radius(cavity, drive):
    r = np.linspace(0, 50e-6, 200)
    t = model.rel_transmission(model.coupling(r, cavity), drive, cavity)
    assert np.all(np.diff(t) > 0)
    assert np.all(t < 1)


def test_light_shift_lowers_on_axis_transmission(cavity, drive):
    deep = model.rel_transmission(cavity.g0, drive, cavity, 950.0)
    shallow = model.rel_transmission(cavity.g0, drive, cavity, 400.0)
    assert deep < shallow < model.rel_transmission(cavity.g0, drive, cavity, 0.0)
    assert model.effective_detuning(drive, 950.0) == pytest.approx(30 * MHZ)


def test_photon_budget(cavity, drive):
    rate = model.empty_cavity_rate(drive, cavity)
    oracle = 0.1 * 2 * 1.5 * MHZ * (16 / 29) * 0.23
    assert rate == pytest.approx(oracle, rel=1e-12)
    assert rate == pytest.approx(2.39e5, rel=0.01)
    assert rate * 13e-6 == pytest.approx(3.1, abs=0.05)
    assert model.detected_rate(0.0, drive, cavity) == 0.0


@pytest.mark.parametrize("name", ["attenuation", "eta_det", "n_empty"])
def test_detected_rate_linear(cavity, drive, name):
    base = model.detected_rate(0.3, drive, cavity)
    half = DriveParams(**{**drive.__dict__, name: getattr(drive, name) * 0.5})
    assert model.detected_rate(0.3, half, cavity) == pytest.approx(0.5 * base, rel=1e-14)


def test_drive_validation():
    with pytest.raises(ValueError):
        DriveParams(attenuation=1.5)
    with pytest.raises(ValueError):
        DriveParams(eta_det=-0.1)
    with pytest.raises(ValueError):
        DriveParams(n_empty=-1)


def test_turning_radius(cavity):
    assert model.turning_radius(0.0, 950, cavity) == 0.0
    assert model.turning_radius(950, 950, cavity) == math.inf
    r = model.turning_radius(500, 950, cavity)
    w = cavity.waist_trap
    assert 950 * (1 - math.exp(-2 * r * r / w / w)) == pytest.approx(500)
    with pytest.raises(model.EnergyExceedsDepthError):
        model.turning_radius(1000, 950, cavity)


def test_snr(cavity, drive):
    assert model.snr_vs_energy(0.0, 13e-6, drive, cavity) == 0.0
    e = np.linspace(1, 940, 200)
    snr = [model.snr_vs_energy(x, 13e-6, drive, cavity) for x in e]
    assert np.all(np.diff(snr) > 0)
    longer = [model.snr_vs_energy(x, 26e-6, drive, cavity) for x in e]
    assert np.allclose(np.array(longer) / np.array(snr), math.sqrt(2))
    with pytest.raises(model.EnergyExceedsDepthError):
        model.snr_vs_energy(960, 13e-6, drive, cavity)


def test_snr_position_reference(cavity, drive):
    a = model.snr_vs_energy(500, 13e-6, drive, cavity, noise="center")
    b = model.snr_vs_energy(500, 13e-6, drive, cavity, noise="position")
    assert b < a
    with pytest.raises(ValueError):
        model.snr_vs_energy(500, 13e-6, drive, cavity, noise="other")
