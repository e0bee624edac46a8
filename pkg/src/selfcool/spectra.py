"""Analytic displacement and readout spectra.

Spectra are one-sided densities over frequency in Hz, normalised so that
``integral S(f) df`` over ``[0, inf)`` equals the mean square displacement.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .backaction import EffectiveDynamics
from .cavity import pdh_slope
from .errors import AdiabaticityViolation, GridTooCoarse, Unstable, ValidationError
from .params import K_B, CavityParams, MechanicalMode

PDH_MODULATION = 2.0 * math.pi * 19e6
ADIABATIC_RATIO = 10.0
MIN_POINTS_PER_FWHM = 10


class SpectrumKind(enum.Enum):
    DISPLACEMENT = "displacement"
    PDH_READOUT = "pdh_readout"


@dataclass(frozen=True)
class Spectrum:
    frequency: np.ndarray
    values: np.ndarray
    kind: SpectrumKind = SpectrumKind.DISPLACEMENT
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        f = np.asarray(self.frequency, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if f.ndim != 1 or f.shape != v.shape:
            raise ValidationError("frequency and values must be 1-D arrays of equal length")
        if f.size < 2 or np.any(np.diff(f) <= 0):
            raise ValidationError("frequency grid must be strictly increasing")
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise ValidationError("spectrum values must be finite and non-negative")
        object.__setattr__(self, "frequency", f)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "kind", SpectrumKind(self.kind))

    def area(self) -> float:
        return float(np.trapezoid(self.values, self.frequency))

    def scaled(self, factor: float, kind: SpectrumKind | None = None) -> "Spectrum":
        return Spectrum(self.frequency, self.values * factor, kind or self.kind, dict(self.meta))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# kind={self.kind.value}\n")
        for key in sorted(self.meta):
            buf.write(f"# {key}={_meta_text(self.meta[key])}\n")
        buf.write("frequency_hz,psd\n")
        for f, v in zip(self.frequency.tolist(), self.values.tolist()):
            buf.write(f"{f!r},{v!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Spectrum":
        kind = SpectrumKind.DISPLACEMENT
        meta = {}
        rows = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                if key == "kind":
                    kind = SpectrumKind(value)
                else:
                    meta[key] = _meta_value(value)
            elif line.strip() and not line.startswith("frequency_hz"):
                f, v = line.split(",")
                rows.append((float(f), float(v)))
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1], kind, meta)


def _meta_text(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _meta_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def mechanical_susceptibility(omega, mode: MechanicalMode):
    """chi(W) = 1 / (M (W_M^2 - W^2 - i W_M W / Q)), m/N."""
    w = np.asarray(omega, dtype=float)
    wm = mode.omega_m
    return 1.0 / (mode.effective_mass * (wm * wm - w * w - 1j * wm * w / mode.quality))


def effective_susceptibility(omega, mode: MechanicalMode, dyn: EffectiveDynamics):
    w = np.asarray(omega, dtype=float)
    return 1.0 / (mode.effective_mass * (dyn.omega_eff ** 2 - w * w - 2j * dyn.gamma_eff * w))


def thermal_force_psd(mode: MechanicalMode) -> float:
    """One-sided thermal force density 4*k_B*T*(2*m*gamma), N^2/Hz."""
    return 8.0 * mode.effective_mass * mode.gamma * K_B * mode.bath_temperature


def mean_square_displacement(mode: MechanicalMode, dyn: EffectiveDynamics) -> float:
    if dyn.gamma_eff <= 0.0:
        raise Unstable("no stationary variance for non-positive damping")
    return (mode.gamma / dyn.gamma_eff) * K_B * mode.bath_temperature / (
        mode.effective_mass * dyn.omega_eff ** 2)


def peak_center(dyn: EffectiveDynamics) -> float:
    """Angular peak position sqrt(omega_eff^2 - 2 gamma_eff^2)."""
    return math.sqrt(max(dyn.omega_eff ** 2 - 2.0 * dyn.gamma_eff ** 2, 0.0))


def default_grid(dyn: EffectiveDynamics, points_per_fwhm: int = 50, half_span_fwhm: float = 50.0,
                 wing_points: int = 2000) -> np.ndarray:
    """Grid dense around the peak with geometric wings to 0 and 3x the peak.

    The wings carry the Lorentzian tails, so trapezoidal areas on this grid
    miss well under 0.1% of the total.
    """
    f0 = peak_center(dyn) / (2.0 * math.pi)
    fwhm = dyn.fwhm_hz
    lo = max(f0 - half_span_fwhm * fwhm, 0.05 * f0)
    hi = f0 + half_span_fwhm * fwhm
    n_dense = int(math.ceil((hi - lo) / fwhm * points_per_fwhm)) + 1
    dense = np.linspace(lo, hi, n_dense)
    lower = lo - np.geomspace(lo * 0.999, lo * 1e-4, wing_points)
    upper = np.geomspace(hi, max(3.0 * f0, 2.0 * hi), wing_points)
    grid = np.unique(np.concatenate(([0.0], lower, dense, upper)))
    return grid[grid >= 0.0]


def analytic_psd(grid_hz, mode: MechanicalMode, dyn: EffectiveDynamics) -> Spectrum:
    """Thermal displacement PSD of the mode with back-action modified parameters."""
    if dyn.gamma_eff <= 0.0:
        raise Unstable(f"gamma_eff = {dyn.gamma_eff:.4g} rad/s: no stationary spectrum")
    f = np.asarray(grid_hz, dtype=float)
    w = 2.0 * math.pi * f
    den = (w * w - dyn.omega_eff ** 2) ** 2 + 4.0 * dyn.gamma_eff ** 2 * w * w
    values = 8.0 * mode.gamma * K_B * mode.bath_temperature / (mode.effective_mass * den)
    meta = {
        "f_eff_hz": dyn.f_eff_hz,
        "fwhm_hz": dyn.fwhm_hz,
        "bath_temperature_k": mode.bath_temperature,
        "effective_mass_kg": mode.effective_mass,
    }
    return Spectrum(f, values, SpectrumKind.DISPLACEMENT, meta)


def measure_fwhm(spectrum: Spectrum) -> tuple[float, int]:
    """Numerical FWHM (Hz, linear interpolation) and number of grid points above half maximum."""
    f, v = spectrum.frequency, spectrum.values
    i = int(np.argmax(v))
    half = 0.5 * v[i]
    left = i
    while left > 0 and v[left - 1] >= half:
        left -= 1
    right = i
    while right < v.size - 1 and v[right + 1] >= half:
        right += 1
    if left == 0 or right == v.size - 1:
        raise GridTooCoarse("resonance is not resolved inside the frequency grid")

    def cross(a, b):
        return f[a] + (half - v[a]) * (f[b] - f[a]) / (v[b] - v[a])

    return cross(right, right + 1) - cross(left - 1, left), right - left + 1


def _check_resolved(spectrum: Spectrum) -> None:
    _, n = measure_fwhm(spectrum)
    if n < MIN_POINTS_PER_FWHM:
        raise GridTooCoarse(f"FWHM spans {n} grid points, need at least {MIN_POINTS_PER_FWHM}")


def effective_temperature(spectrum: Spectrum, mode: MechanicalMode) -> float:
    """Equipartition temperature m*omega_m^2*<x^2>/k_B from the spectrum area."""
    if spectrum.kind is not SpectrumKind.DISPLACEMENT:
        raise ValidationError("effective temperature needs a displacement spectrum")
    _check_resolved(spectrum)
    return mode.effective_mass * mode.omega_m ** 2 * spectrum.area() / K_B


def check_adiabatic(cavity: CavityParams, mode: MechanicalMode) -> float:
    ratio = 2.0 * cavity.kappa / mode.omega_m
    if ratio < ADIABATIC_RATIO:
        raise AdiabaticityViolation(
            f"2*kappa/omega_m = {ratio:.3g} < {ADIABATIC_RATIO:g}: the field does not follow the mirror")
    return ratio


def readout_transfer(delta: float, cavity: CavityParams, mode: MechanicalMode,
                     modulation: float = PDH_MODULATION) -> float:
    """Readout gain relative to zero detuning, (PDH slope(delta)/slope(0))^2.

    The readout spectrum is the displacement spectrum times this gain; the
    absolute displacement sensitivity at zero detuning is
    :func:`displacement_sensitivity`.
    """
    check_adiabatic(cavity, mode)
    return float(pdh_slope(delta, modulation, cavity)) ** 2


def displacement_sensitivity(delta: float, cavity: CavityParams,
                             modulation: float = PDH_MODULATION) -> float:
    """Normalised PDH error per metre of mirror displacement."""
    slope = float(pdh_slope(delta, modulation, cavity))
    return slope * cavity.omega_laser / (cavity.length * cavity.kappa)


def to_readout(spectrum: Spectrum, gain: float) -> Spectrum:
    if spectrum.kind is not SpectrumKind.DISPLACEMENT:
        raise ValidationError("readout conversion needs a displacement spectrum")
    out = spectrum.scaled(gain, SpectrumKind.PDH_READOUT)
    out.meta["readout_gain"] = gain
    return out


def from_readout(spectrum: Spectrum, gain: float) -> Spectrum:
    if spectrum.kind is not SpectrumKind.PDH_READOUT:
        raise ValidationError("expected a PDH readout spectrum")
    return spectrum.scaled(1.0 / gain, SpectrumKind.DISPLACEMENT)
