"""Closed-form atomic physics helpers.

Spectroscopic frequencies are MHz (omega / 2 pi) as everywhere else in the
package; SI units appear only inside the formulas that carry physical
constants, and each function states its input and output units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import scipy.constants as sc

from .errors import DivisionDomain


@dataclass(frozen=True)
class PhysicalConstants:
    e: float = sc.e
    m_e: float = sc.m_e
    epsilon_0: float = sc.epsilon_0
    c: float = sc.c
    h: float = sc.h
    hbar: float = sc.hbar


CODATA = PhysicalConstants()


@dataclass(frozen=True)
class MolassesParams:
    """Cooling-transition parameters; ``I_mol`` is the total intensity in W/m^2."""

    I_mol: float = 0.0
    d: float = 3.58e-29
    c1_sq: float = 0.73
    c2_sq: float = 0.73
    delta_mol: float = 100.0
    gamma: float = 5.75

    def __post_init__(self):
        if self.I_mol < 0:
            raise ValueError("I_mol must be >= 0")
        if not (0 < self.c1_sq <= 1 and 0 < self.c2_sq <= 1):
            raise ValueError("Clebsch-Gordan factors must lie in (0, 1]")


@dataclass(frozen=True)
class BeamGeometry:
    """Elliptical Gaussian beam: power in W, 1/e^2 radii in m."""

    power: float
    w_x: float
    w_y: float

    def __post_init__(self):
        if self.power < 0:
            raise ValueError("power must be >= 0")
        if not (self.w_x > 0 and self.w_y > 0):
            raise ValueError("waists must be > 0")

    @property
    def peak_intensity(self) -> float:
        """2 P / (pi w_x w_y) in W/m^2 (atom at the beam centre)."""
        return 2.0 * self.power / (math.pi * self.w_x * self.w_y)


def molasses_rabi_frequency(p: MolassesParams, k: PhysicalConstants = CODATA) -> float:
    """Omega_mol / 2 pi in MHz from the total molasses intensity."""
    field = math.sqrt(2.0 * p.I_mol / (k.c * k.epsilon_0))
    return p.d / k.hbar * field / (2 * math.pi) / 1e6


def intensity_for_rabi_frequency(omega_mol: float, p: MolassesParams = MolassesParams(),
                                 k: PhysicalConstants = CODATA) -> float:
    """Inverse of :func:`molasses_rabi_frequency`: W/m^2 for Omega_mol / 2 pi in MHz."""
    field = omega_mol * 1e6 * 2 * math.pi * k.hbar / p.d
    return field * field * k.c * k.epsilon_0 / 2.0


def excited_fraction(p: MolassesParams, omega_mol: float) -> float:
    """Steady-state 5p3/2 population driven by the molasses.

    All three frequencies enter squared and in a ratio, so MHz (omega/2pi)
    can be used directly.
    """
    if omega_mol < 0:
        raise ValueError("omega_mol must be >= 0")
    drive = omega_mol * omega_mol / 2.0
    return 0.5 * p.c1_sq * drive / (
        p.delta_mol ** 2 + p.gamma ** 2 / 4.0 + p.c2_sq * drive
    )


def photon_frequency(wavelength: float, k: PhysicalConstants = CODATA) -> float:
    """nu = c / lambda in Hz."""
    if wavelength <= 0:
        raise ValueError("wavelength must be > 0")
    return k.c / wavelength


def ionization_cross_section(tau: float, f: float, beam: BeamGeometry, wavelength: float,
                             k: PhysicalConstants = CODATA) -> float:
    """Photo-ionization cross section in cm^2.

    ``tau`` is the measured loss time constant in ms, ``f`` the 5p3/2
    population, ``wavelength`` in m.
    """
    if tau == 0 or f == 0:
        raise DivisionDomain("tau and f must be non-zero")
    if tau < 0 or not 0 < f < 1:
        raise ValueError("need tau > 0 and 0 < f < 1")
    intensity = beam.peak_intensity
    if intensity == 0:
        raise DivisionDomain("beam intensity is zero")
    photon_energy = k.h * photon_frequency(wavelength, k)
    sigma_m2 = photon_energy / (f * intensity * tau * 1e-3)
    return sigma_m2 * 1e4


def ionization_rate(sigma: float, f: float, beam: BeamGeometry, wavelength: float,
                    k: PhysicalConstants = CODATA) -> float:
    """Photo-ionization rate 1/tau in 1/ms for a cross section in cm^2."""
    photon_energy = k.h * photon_frequency(wavelength, k)
    rate_per_s = f * beam.peak_intensity * (sigma * 1e-4) / photon_energy
    return rate_per_s * 1e-3


def rydberg_polarizability(wavelength: float, k: PhysicalConstants = CODATA) -> float:
    """Free-electron polarizability volume -e^2 / (m_e eps0 omega^2) in m^3.

    This is alpha / eps0 with omega = 2 pi c / lambda; the light shift of
    the level is -alpha I / (2 eps0 c).
    """
    omega = 2 * math.pi * photon_frequency(wavelength, k)
    return -k.e ** 2 / (k.m_e * k.epsilon_0 * omega ** 2)


def ponderomotive_shift(intensity: float, wavelength: float,
                        k: PhysicalConstants = CODATA) -> float:
    """Light shift of a Rydberg level in MHz (positive), intensity in W/m^2."""
    if intensity < 0:
        raise ValueError("intensity must be >= 0")
    omega = 2 * math.pi * photon_frequency(wavelength, k)
    energy = k.e ** 2 * intensity / (2 * k.m_e * k.epsilon_0 * k.c * omega ** 2)
    return energy / k.h / 1e6


def effective_two_photon(omega_R: float, omega_B: float, delta_big: float):
    """Adiabatic-elimination quantities, all in MHz.

    Returns ``(omega_eff, shift_up, shift_r)`` with omega_eff =
    Omega_R Omega_B / 2 Delta and light shifts Omega_R^2 / 4 Delta on the
    ground state and Omega_B^2 / 4 Delta on the Rydberg state.
    """
    if delta_big == 0:
        raise DivisionDomain("intermediate detuning must be non-zero")
    return (
        omega_R * omega_B / (2 * delta_big),
        omega_R ** 2 / (4 * delta_big),
        omega_B ** 2 / (4 * delta_big),
    )


def resonance_estimate(omega_R: float, omega_B: float, delta_big: float) -> float:
    """Two-photon detuning (MHz) that compensates the differential light shift.

    The Rydberg level sits at -delta in the rotating frame, so resonance
    needs delta = shift_r - shift_up.
    """
    _, up, r = effective_two_photon(omega_R, omega_B, delta_big)
    return r - up


def heterodyne_linewidth(beat_fwhm: float) -> float:
    """Laser linewidth from a self-heterodyne beat FWHM (Lorentzian, same unit)."""
    if beat_fwhm < 0:
        raise ValueError("beat_fwhm must be >= 0")
    return beat_fwhm / 2.0
