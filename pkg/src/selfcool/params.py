"""Physical parameter records and derived quantities.

Angular frequencies are rad/s throughout.  Anything that crosses a file
boundary (config, CSV) is converted to Hz by the caller.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from scipy import constants as _const

from .errors import DegenerateInput, ValidationError

C = _const.c
HBAR = _const.hbar
K_B = _const.k


class Buildup(enum.Enum):
    """Intracavity power build-up convention, ``P_circ = B * eta * P_in``."""

    TWO_F_OVER_PI = "two_f_over_pi"
    F_OVER_PI = "f_over_pi"

    def factor(self, finesse: float) -> float:
        if self is Buildup.TWO_F_OVER_PI:
            return 2.0 * finesse / math.pi
        return finesse / math.pi


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


def _finite(*values: float) -> bool:
    return all(isinstance(v, (int, float)) and math.isfinite(v) for v in values)


@dataclass(frozen=True)
class CavityParams:
    """Fabry-Perot cavity with a movable end mirror.

    ``finesse`` is the measured finesse and sets the decay rate; the mirror
    reflectivities and ``extra_loss`` only fix how the total loss splits
    between input coupling and everything else (used by the reflection and
    PDH models).
    """

    length: float
    finesse: float
    wavelength: float = 1064e-9
    input_power: float = 2e-3
    input_reflectivity: float = 0.993
    end_reflectivity: float = 0.997
    extra_loss: float = 0.002
    coupling_efficiency: float = 1.0
    buildup: Buildup = Buildup.TWO_F_OVER_PI

    def __post_init__(self):
        _require(
            _finite(self.length, self.finesse, self.wavelength, self.input_power,
                    self.input_reflectivity, self.end_reflectivity, self.extra_loss,
                    self.coupling_efficiency),
            "cavity parameters must be finite numbers",
        )
        _require(self.length > 0, f"length must be > 0, got {self.length}")
        _require(self.finesse > 1, f"finesse must be > 1, got {self.finesse}")
        _require(self.wavelength > 0, f"wavelength must be > 0, got {self.wavelength}")
        _require(self.input_power >= 0, f"input power must be >= 0, got {self.input_power}")
        for name in ("input_reflectivity", "end_reflectivity", "extra_loss"):
            v = getattr(self, name)
            _require(0.0 <= v <= 1.0, f"{name} must lie in [0, 1], got {v}")
        _require(0.0 < self.coupling_efficiency <= 1.0,
                 f"coupling efficiency must lie in (0, 1], got {self.coupling_efficiency}")
        if not isinstance(self.buildup, Buildup):
            object.__setattr__(self, "buildup", Buildup(self.buildup))

    @property
    def kappa(self) -> float:
        """Field half-linewidth pi*c/(2*F*L), rad/s."""
        return derive_kappa(self)

    @property
    def omega_laser(self) -> float:
        return 2.0 * math.pi * C / self.wavelength

    @property
    def buildup_factor(self) -> float:
        return self.buildup.factor(self.finesse)

    @property
    def drive_rate(self) -> float:
        """Drive amplitude sqrt(2*kappa*P/(hbar*omega_l)) in s^-1, for a photon-number normalised field."""
        return math.sqrt(2.0 * self.kappa * self.input_power / (HBAR * self.omega_laser))

    @property
    def input_coupling_fraction(self) -> float:
        """Share of the total loss that leaves through the input mirror."""
        t_in = 1.0 - self.input_reflectivity
        total = t_in + (1.0 - self.end_reflectivity) + self.extra_loss
        if total <= 0.0:
            return 0.5
        return t_in / total

    def with_power(self, power: float) -> "CavityParams":
        return _replace(self, input_power=power)


@dataclass(frozen=True)
class MechanicalMode:
    """Single mechanical mode; ``gamma`` is the amplitude (half-width) damping rate."""

    omega_m: float
    quality: float
    effective_mass: float
    bath_temperature: float = 300.0

    def __post_init__(self):
        _require(_finite(self.omega_m, self.quality, self.effective_mass, self.bath_temperature),
                 "mode parameters must be finite numbers")
        _require(self.omega_m > 0, f"omega_m must be > 0, got {self.omega_m}")
        _require(self.quality > 0, f"quality factor must be > 0, got {self.quality}")
        _require(self.effective_mass > 0, f"effective mass must be > 0, got {self.effective_mass}")
        _require(self.bath_temperature >= 0,
                 f"bath temperature must be >= 0, got {self.bath_temperature}")

    @classmethod
    def from_hz(cls, frequency_hz: float, quality: float, effective_mass: float,
                bath_temperature: float = 300.0) -> "MechanicalMode":
        return cls(2.0 * math.pi * frequency_hz, quality, effective_mass, bath_temperature)

    @property
    def gamma(self) -> float:
        return self.omega_m / (2.0 * self.quality)

    @property
    def frequency_hz(self) -> float:
        return self.omega_m / (2.0 * math.pi)

    @property
    def fwhm_hz(self) -> float:
        return 2.0 * self.gamma / (2.0 * math.pi)

    @property
    def thermal_variance(self) -> float:
        """k_B*T/(m*omega_m^2), m^2."""
        return K_B * self.bath_temperature / (self.effective_mass * self.omega_m ** 2)


@dataclass(frozen=True)
class PhotothermalModel:
    """Retarded force with the radiation-pressure gradient shape, scaled by ``ratio``.

    ``ratio = 0`` (or ``enabled = False``) means pure radiation pressure.
    """

    ratio: float = 0.0
    tau: float = 4e-9
    enabled: bool = True

    def __post_init__(self):
        _require(_finite(self.ratio, self.tau), "photothermal parameters must be finite")
        if self.enabled:
            _require(self.tau > 0, f"photothermal tau must be > 0, got {self.tau}")

    @property
    def active(self) -> bool:
        return self.enabled and self.ratio != 0.0

    @property
    def effective_ratio(self) -> float:
        return self.ratio if self.enabled else 0.0

    @classmethod
    def off(cls) -> "PhotothermalModel":
        return cls(ratio=0.0, enabled=False)


@dataclass(frozen=True)
class Layer:
    material: str
    density: float
    thickness: float
    count: int
    refractive_index: float
    diffusivity: float

    def __post_init__(self):
        _require(bool(self.material), "layer needs a material name")
        for name in ("density", "thickness", "refractive_index", "diffusivity"):
            v = getattr(self, name)
            _require(_finite(v) and v > 0, f"{self.material}: {name} must be > 0, got {v}")
        _require(isinstance(self.count, int) and self.count > 0,
                 f"{self.material}: layer count must be a positive integer")


@dataclass(frozen=True)
class LayerStack:
    layers: tuple[Layer, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        _require(len({layer.material for layer in self.layers}) >= 2,
                 "a layer stack needs at least two materials")

    @property
    def surface_density(self) -> float:
        """Mass per unit area, kg/m^2."""
        return sum(la.density * la.thickness * la.count for la in self.layers)

    @property
    def thickness(self) -> float:
        return sum(la.thickness * la.count for la in self.layers)


# Bragg mirror of the micro-mirror (bulk diffusivities converted from cm^2/s).
BRAGG_STACK = LayerStack((
    Layer("SiO2", 2200.0, 183.45e-9, 8, 1.45, 0.086e-4),
    Layer("TiO2", 4200.0, 107.26e-9, 9, 2.48, 0.031e-4),
))


def derive_kappa(cavity: CavityParams) -> float:
    return math.pi * C / (2.0 * cavity.finesse * cavity.length)


def finesse_from_losses(input_t: float, end_t: float, extra_loss: float) -> float:
    """Finesse of a cavity whose round-trip losses are small: 2*pi / total loss."""
    for name, v in (("input_t", input_t), ("end_t", end_t), ("extra_loss", extra_loss)):
        if not (0.0 <= v < 1.0):
            raise ValidationError(f"{name} must lie in [0, 1), got {v}")
    total = input_t + end_t + extra_loss
    if total <= 0.0:
        raise DegenerateInput("lossless cavity has unbounded finesse")
    if total >= 1.0:
        raise ValidationError(f"total round-trip loss must be < 1, got {total}")
    return 2.0 * math.pi / total


def detuning_spatial(delta: float, cavity: CavityParams) -> float:
    """Mirror displacement equivalent to an angular detuning, L*delta/omega_l."""
    return cavity.length * delta / cavity.omega_laser


def _replace(obj, **changes):
    from dataclasses import replace
    return replace(obj, **changes)


# Laboratory configuration.  Two mirror geometries are kept: the nominal
# design and the one used for the mode-mass analysis.
LAB_CAVITY = CavityParams(length=0.025, finesse=500.0)
LAB_MODE = MechanicalMode.from_hz(280e3, 8750.0, 22e-12)
THEORY_MODE = MechanicalMode.from_hz(280e3, 8750.0, 9e-12)
GEOMETRY_NOMINAL = {"length": 520e-6, "width": 120e-6, "thickness": 2.4e-6}
GEOMETRY_MEASURED = {"length": 490e-6, "width": 110e-6, "mass": 390e-12}
