"""Physical constants, Gaussian-beam trap parameters and thermal statistics.

Everything is SI internally.  Trap depth is stored in joules; the ``from_mK``
constructor accepts the usual temperature-equivalent depth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import scipy.constants as sc

from .errors import InvalidParameterError

K_B = sc.k
G_ACCEL = sc.g
RB87_MASS = 86.909180531 * sc.atomic_mass

AXIAL_FORMS = ("squared", "as-printed")


@dataclass(frozen=True)
class TrapParams:
    """Focused Gaussian-beam dipole trap.

    ``axial_form`` selects the axial envelope used by the dynamics module:
    ``"squared"`` is the Lorentzian 1/(1 + (z/zR)^2) of a Gaussian beam,
    ``"as-printed"`` the literal 1/(1 + z/zR) kept for comparison runs.
    """

    depth: float  # J
    waist: float  # m
    wavelength: float  # m
    mass: float = RB87_MASS  # kg
    axial_form: str = "squared"

    def __post_init__(self):
        for name in ("depth", "waist", "wavelength", "mass"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be positive and finite, got {value!r}")
        if self.axial_form not in AXIAL_FORMS:
            raise InvalidParameterError(f"axial_form must be one of {AXIAL_FORMS}, got {self.axial_form!r}")

    @classmethod
    def from_mK(cls, depth_mK, waist, wavelength, mass=RB87_MASS, axial_form="squared"):
        return cls(depth_mK * 1e-3 * K_B, waist, wavelength, mass, axial_form)

    @property
    def depth_mK(self):
        return self.depth / K_B * 1e3

    @property
    def rayleigh_range(self):
        return math.pi * self.waist**2 / self.wavelength

    @property
    def omega_transverse(self):
        return math.sqrt(4.0 * self.depth / (self.mass * self.waist**2))

    @property
    def omega_longitudinal(self):
        return math.sqrt(2.0 * self.depth / (self.mass * self.rayleigh_range**2))

    @property
    def freq_transverse(self):
        return self.omega_transverse / (2 * math.pi)

    @property
    def freq_longitudinal(self):
        return self.omega_longitudinal / (2 * math.pi)

    def scaled(self, **changes):
        fields = dict(depth=self.depth, waist=self.waist, wavelength=self.wavelength,
                      mass=self.mass, axial_form=self.axial_form)
        fields.update(changes)
        return TrapParams(**fields)


@dataclass(frozen=True)
class ThermalSigmas:
    sigma_xy: float  # m
    sigma_z: float  # m
    sigma_v: float  # m/s


PRESETS = {
    "paper-rb87": dict(depth_mK=1.08, waist=0.97e-6, wavelength=852e-9, mass=RB87_MASS),
}


def preset(name="paper-rb87", axial_form="squared") -> TrapParams:
    try:
        values = PRESETS[name]
    except KeyError:
        raise InvalidParameterError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    return TrapParams.from_mK(axial_form=axial_form, **values)


def harmonic_frequencies(p: TrapParams) -> tuple[float, float]:
    """Return ``(f_transverse, f_longitudinal)`` in Hz from the curvature at the trap bottom."""
    if not isinstance(p, TrapParams):
        raise InvalidParameterError("expected TrapParams")
    return p.freq_transverse, p.freq_longitudinal


def thermal_sigmas(temperature: float, p: TrapParams) -> ThermalSigmas:
    """Phase-space widths of a thermal atom in the harmonic approximation of the trap.

    Positions use angular trap frequencies (omega = 2 pi f).
    """
    if not (math.isfinite(temperature) and temperature > 0):
        raise InvalidParameterError(f"temperature must be positive, got {temperature!r}")
    sigma_v = math.sqrt(K_B * temperature / p.mass)
    return ThermalSigmas(
        sigma_xy=sigma_v / p.omega_transverse,
        sigma_z=sigma_v / p.omega_longitudinal,
        sigma_v=sigma_v,
    )
