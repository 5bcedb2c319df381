import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holotweezers.dynamics import potential, sample_ensemble
from holotweezers.errors import InvalidParameterError
from holotweezers.phys import K_B, RB87_MASS, TrapParams, harmonic_frequencies, preset, thermal_sigmas

# Hand evaluation of the closed forms with CODATA-2018 constants (independent of the package).
ZR_REF = 3.4693949856368973e-06
FT_REF = 105481.07225356577
FL_REF = 20853.431313679983
SV_15 = 0.03788173787729972
SXY_15 = 5.7157798145912585e-08
SZ_15 = 2.8911624880307483e-07


def test_preset_values(trap):
    assert trap.depth_mK == pytest.approx(1.08)
    assert trap.waist == 0.97e-6
    assert trap.wavelength == 852e-9
    assert trap.rayleigh_range == pytest.approx(ZR_REF, rel=1e-12)


def test_frequencies_match_hand_calculation(trap):
    ft, fl = harmonic_frequencies(trap)
    assert ft == pytest.approx(FT_REF, rel=1e-6)
    assert fl == pytest.approx(FL_REF, rel=1e-6)


def test_frequencies_close_to_reported(trap):
    ft, fl = harmonic_frequencies(trap)
    assert abs(ft / 105.2e3 - 1) < 0.02
    assert abs(fl / 20.8e3 - 1) < 0.02
    assert ft > fl


def test_depth_scaling_doubles_frequencies(trap):
    ft, fl = harmonic_frequencies(trap)
    ft4, fl4 = harmonic_frequencies(trap.scaled(depth=4 * trap.depth))
    assert ft4 == pytest.approx(2 * ft, rel=1e-14)
    assert fl4 == pytest.approx(2 * fl, rel=1e-14)


def test_thermal_sigmas_15uK(trap):
    s = thermal_sigmas(15e-6, trap)
    assert s.sigma_v == pytest.approx(SV_15, rel=1e-6)
    assert s.sigma_xy == pytest.approx(SXY_15, rel=1e-6)
    assert s.sigma_z == pytest.approx(SZ_15, rel=1e-6)
    assert s.sigma_z > s.sigma_xy > 0


def test_thermal_sigmas_scale_with_sqrt_T(trap):
    a, b = thermal_sigmas(10e-6, trap), thermal_sigmas(40e-6, trap)
    for f in ("sigma_xy", "sigma_z", "sigma_v"):
        x, y = getattr(a, f), getattr(b, f)
        assert y == pytest.approx(2 * x, rel=1e-14)


@pytest.mark.parametrize("kw", [dict(depth=0), dict(waist=-1e-6), dict(wavelength=0), dict(mass=-1.0)])
def test_invalid_trap_params(kw):
    base = dict(depth=1e-3 * K_B, waist=1e-6, wavelength=852e-9, mass=RB87_MASS)
    with pytest.raises(InvalidParameterError):
        TrapParams(**{**base, **kw})


def test_nonpositive_temperature(trap):
    with pytest.raises(InvalidParameterError):
        thermal_sigmas(0.0, trap)
    with pytest.raises(InvalidParameterError):
        thermal_sigmas(-1e-6, trap)


def test_unknown_axial_form():
    with pytest.raises(InvalidParameterError):
        preset("paper-rb87", axial_form="cubic")


def test_frequencies_agree_with_numerical_curvature(trap):
    h = 1e-9
    u = lambda r: potential(np.array(r, dtype=float), trap)
    kx = (u([h, 0, 0]) - 2 * u([0, 0, 0]) + u([-h, 0, 0])) / h**2
    hz = 1e-8
    kz = (u([0, 0, hz]) - 2 * u([0, 0, 0]) + u([0, 0, -hz])) / hz**2
    ft, fl = harmonic_frequencies(trap)
    assert math.sqrt(kx / trap.mass) / (2 * math.pi) == pytest.approx(ft, rel=1e-3)
    assert math.sqrt(kz / trap.mass) / (2 * math.pi) == pytest.approx(fl, rel=1e-3)


def test_equipartition(trap):
    T = 15e-6
    n = 100_000
    ens = sample_ensemble(T, n, trap, seed=11)
    x2 = ens.positions[:, 0] ** 2
    pe = 0.5 * trap.mass * trap.omega_transverse**2 * x2
    target = 0.5 * K_B * T
    se = pe.std(ddof=1) / math.sqrt(n)
    assert abs(pe.mean() - target) < 3 * se


@settings(max_examples=30, deadline=None)
@given(depth_mK=st.floats(0.05, 10), waist_um=st.floats(0.5, 5), lam_nm=st.floats(500, 1100))
def test_frequency_ordering_property(depth_mK, waist_um, lam_nm):
    p = TrapParams.from_mK(depth_mK, waist_um * 1e-6, lam_nm * 1e-9)
    ft, fl = harmonic_frequencies(p)
    assert ft > fl > 0
    assert p.rayleigh_range == pytest.approx(math.pi * p.waist**2 / p.wavelength, rel=1e-15)
    s = thermal_sigmas(20e-6, p)
    assert s.sigma_z > s.sigma_xy
