"""Steady-state response of a detuned single-mode cavity.

Detuning ``delta`` is the angular offset between cavity resonance and laser,
positive on the side where the radiation-pressure gradient damps the mirror.
The response is the Lorentzian single-mode limit of the Airy function, which
is accurate to better than 1e-4 for finesse of a few hundred.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import RegimeWarning
from .params import C, CavityParams

PDH_REGIME_FACTOR = 10.0


@dataclass(frozen=True)
class CavityResponse:
    detuning: float
    circulating_power: float
    radiation_force: float
    force_gradient: float


def circulating_power(delta, cavity: CavityParams):
    u = np.asarray(delta, dtype=float) / cavity.kappa
    p0 = cavity.buildup_factor * cavity.coupling_efficiency * cavity.input_power
    return p0 / (1.0 + u * u)


def radiation_force(delta, cavity: CavityParams):
    return 2.0 * circulating_power(delta, cavity) / C


def displaced_detuning(x, delta, cavity: CavityParams):
    """Detuning after the end mirror moves by ``x`` (positive lengthens the cavity)."""
    return delta - cavity.omega_laser / cavity.length * np.asarray(x, dtype=float)


def force_gradient_beta(delta, cavity: CavityParams):
    """dF/dx of the radiation force at detuning ``delta``, N/m.

    Positive for positive detuning; odd in ``delta``; linear in input power.
    """
    kappa = cavity.kappa
    d = np.asarray(delta, dtype=float)
    u = d / kappa
    p0 = cavity.buildup_factor * cavity.coupling_efficiency * cavity.input_power
    return (2.0 / C) * p0 * (cavity.omega_laser / cavity.length) * (2.0 * d / kappa ** 2) / (1.0 + u * u) ** 2


def response(delta: float, cavity: CavityParams) -> CavityResponse:
    p = float(circulating_power(delta, cavity))
    return CavityResponse(delta, p, 2.0 * p / C, float(force_gradient_beta(delta, cavity)))


def optimal_gradient_detuning(cavity: CavityParams) -> float:
    """Detuning where the force gradient peaks, kappa/sqrt(3)."""
    return cavity.kappa / math.sqrt(3.0)


# -- reflection ---------------------------------------------------------------

def reflection_coefficient(delta, cavity: CavityParams):
    """Complex field reflection of the mode-matched part of the beam."""
    kappa = cavity.kappa
    rho = cavity.input_coupling_fraction
    return 1.0 - 2.0 * rho * kappa / (kappa + 1j * np.asarray(delta, dtype=float))


def _reflection_derivative(delta, cavity: CavityParams):
    kappa = cavity.kappa
    rho = cavity.input_coupling_fraction
    return 2j * rho * kappa / (kappa + 1j * np.asarray(delta, dtype=float)) ** 2


def free_spectral_range(cavity: CavityParams) -> float:
    """Angular free spectral range pi*c/L."""
    return math.pi * C / cavity.length


def reflection_scan(length_offsets, cavity: CavityParams):
    """Reflected power while the cavity length is swept by ``length_offsets`` (m).

    The detuning is folded into one free spectral range, so a scan longer
    than lambda/2 passes through several resonances.  Power is in watts.
    """
    dl = np.asarray(length_offsets, dtype=float)
    fsr = free_spectral_range(cavity)
    delta = -cavity.omega_laser / cavity.length * dl
    delta = (delta + 0.5 * fsr) % fsr - 0.5 * fsr
    r = reflection_coefficient(delta, cavity)
    eta = cavity.coupling_efficiency
    return cavity.input_power * (eta * np.abs(r) ** 2 + (1.0 - eta))


def reflection_fwhm_length(cavity: CavityParams) -> float:
    """Resonance FWHM in end-mirror displacement, lambda/(2F).

    The round-trip optical path changes twice as fast, which gives lambda/F.
    """
    return cavity.wavelength / (2.0 * cavity.finesse)


# -- Pound-Drever-Hall ------------------------------------------------------------

def _check_pdh_regime(modulation: float, cavity: CavityParams) -> None:
    if modulation < PDH_REGIME_FACTOR * cavity.kappa:
        warnings.warn(
            f"PDH modulation {modulation / (2 * math.pi):.3g} Hz is below "
            f"{PDH_REGIME_FACTOR:g}*kappa ({PDH_REGIME_FACTOR * cavity.kappa / (2 * math.pi):.3g} Hz); "
            "sidebands are not fully reflected",
            RegimeWarning, stacklevel=3,
        )


def _pdh_raw(delta, modulation, cavity):
    r0 = reflection_coefficient(delta, cavity)
    rp = reflection_coefficient(np.asarray(delta) + modulation, cavity)
    rm = reflection_coefficient(np.asarray(delta) - modulation, cavity)
    return np.imag(r0 * np.conj(rm) - np.conj(r0) * rp)


def _pdh_raw_slope(delta, modulation, cavity):
    d = np.asarray(delta, dtype=float)
    r0 = reflection_coefficient(d, cavity)
    rp = reflection_coefficient(d + modulation, cavity)
    rm = reflection_coefficient(d - modulation, cavity)
    dr0 = _reflection_derivative(d, cavity)
    drp = _reflection_derivative(d + modulation, cavity)
    drm = _reflection_derivative(d - modulation, cavity)
    return np.imag(dr0 * np.conj(rm) + r0 * np.conj(drm) - np.conj(dr0) * rp - np.conj(r0) * drp)


def pdh_error_signal(delta, modulation: float, cavity: CavityParams, *, check: bool = True):
    """PDH discriminant normalised so that its slope at zero detuning is 1/kappa.

    ``modulation`` is the angular modulation frequency.  A
    :class:`RegimeWarning` is issued when it is below ten cavity half-widths.
    """
    if check:
        _check_pdh_regime(modulation, cavity)
    norm = cavity.kappa * _pdh_raw_slope(0.0, modulation, cavity)
    return _pdh_raw(delta, modulation, cavity) / norm


def pdh_slope(delta, modulation: float, cavity: CavityParams, *, check: bool = True):
    """d(error)/d(delta) in units of 1/kappa; equals 1 at zero detuning."""
    if check:
        _check_pdh_regime(modulation, cavity)
    return _pdh_raw_slope(delta, modulation, cavity) / _pdh_raw_slope(0.0, modulation, cavity)
