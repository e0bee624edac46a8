"""Line-oriented ``key = value`` experiment configuration.

Units are part of every key name.  Unknown or repeated keys are errors and
are reported with their line number.  ``#`` starts a comment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, ValidationError
from .modes import BeamModeModel, Longitudinal, ProbeProfile, Transverse
from .params import BRAGG_STACK, Buildup, CavityParams, MechanicalMode, PhotothermalModel


def _float(text):
    return float(text)


def _int(text):
    return int(text)


def _bool(text):
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


SCHEMA = {
    "cavity.length_m": (_float, 0.025),
    "cavity.finesse": (_float, 500.0),
    "cavity.wavelength_m": (_float, 1064e-9),
    "cavity.input_reflectivity": (_float, 0.993),
    "cavity.end_reflectivity": (_float, 0.997),
    "cavity.extra_loss": (_float, 0.002),
    "cavity.coupling_efficiency": (_float, 1.0),
    "cavity.buildup": (str, "two_f_over_pi"),
    "cavity.pdh_modulation_hz": (_float, 19e6),
    "laser.power_w": (_floats, [1e-3, 2e-3]),
    "mode.frequency_hz": (_float, 280e3),
    "mode.q": (_float, 8750.0),
    "mode.effective_mass_kg": (_float, 22e-12),
    "mode.bath_temperature_k": (_float, 300.0),
    "photothermal.enabled": (_bool, False),
    "photothermal.ratio": (_float, 0.0),
    "photothermal.tau_s": (_float, 4e-9),
    "photothermal.zeta": (_float, 1.0),
    "geometry.length_m": (_float, 490e-6),
    "geometry.width_m": (_float, 110e-6),
    "geometry.surface_density_kg_m2": (_float, BRAGG_STACK.surface_density),
    "geometry.mode_index": (_int, 1),
    "geometry.longitudinal": (str, "tension_string"),
    "geometry.transverse": (str, "one_side_clamped"),
    "geometry.dead_fraction": (_float, 0.3),
    "probe.waist_m": (_float, 10e-6),
    "probe.x_m": (_float, math.nan),
    "probe.y_m": (_float, math.nan),
    "tomography.noise": (_float, 0.1),
    "simulation.dt_s": (_float, math.nan),
    "simulation.record_every": (_int, 5),
    "simulation.seed": (_int, 20061),
    "simulation.duration_s": (_float, math.nan),
    "simulation.runs": (_int, 30),
    "simulation.delta_over_kappa": (_float, 0.5),
    "sweep.delta_min": (_float, -1.0),
    "sweep.delta_max": (_float, 3.0),
    "sweep.points": (_int, 81),
}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict
    source: str = "<defaults>"
    explicit: frozenset = field(default_factory=frozenset)

    def __getitem__(self, key):
        return self.values[key]

    def cavity(self, power: float | None = None) -> CavityParams:
        v = self.values
        try:
            buildup = Buildup(v["cavity.buildup"])
        except ValueError:
            raise ConfigError(f"unknown build-up convention {v['cavity.buildup']!r}") from None
        return CavityParams(
            length=v["cavity.length_m"], finesse=v["cavity.finesse"],
            wavelength=v["cavity.wavelength_m"],
            input_power=self.powers[0] if power is None else power,
            input_reflectivity=v["cavity.input_reflectivity"],
            end_reflectivity=v["cavity.end_reflectivity"],
            extra_loss=v["cavity.extra_loss"],
            coupling_efficiency=v["cavity.coupling_efficiency"], buildup=buildup,
        )

    @property
    def powers(self) -> list[float]:
        p = self.values["laser.power_w"]
        if not p:
            raise ConfigError("laser.power_w needs at least one value")
        return list(p)

    @property
    def modulation(self) -> float:
        return 2.0 * math.pi * self.values["cavity.pdh_modulation_hz"]

    def mode(self) -> MechanicalMode:
        v = self.values
        return MechanicalMode.from_hz(v["mode.frequency_hz"], v["mode.q"], v["mode.effective_mass_kg"],
                                      v["mode.bath_temperature_k"])

    def photothermal(self) -> PhotothermalModel:
        v = self.values
        return PhotothermalModel(v["photothermal.ratio"], v["photothermal.tau_s"], v["photothermal.enabled"])

    def beam(self) -> BeamModeModel:
        v = self.values
        try:
            return BeamModeModel(v["geometry.length_m"], v["geometry.width_m"],
                                 v["geometry.surface_density_kg_m2"], v["geometry.mode_index"],
                                 Longitudinal(v["geometry.longitudinal"]),
                                 Transverse(v["geometry.transverse"]), v["geometry.dead_fraction"])
        except ValueError as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ConfigError(str(exc)) from None

    def probe(self, beam: BeamModeModel | None = None) -> ProbeProfile:
        beam = beam or self.beam()
        ax, ay = beam.antinode()
        x = self.values["probe.x_m"]
        y = self.values["probe.y_m"]
        return ProbeProfile(self.values["probe.waist_m"], ax if math.isnan(x) else x,
                            ay if math.isnan(y) else y)

    def validate(self) -> None:
        """Build every record once so range errors surface before any work starts."""
        for p in self.powers:
            self.cavity(p)
        self.mode()
        self.photothermal()
        beam = self.beam()
        self.probe(beam)

    def snapshot(self) -> dict:
        out = {}
        for key in SCHEMA:
            val = self.values[key]
            out[key] = val if not (isinstance(val, float) and math.isnan(val)) else None
        return out


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    values = {k: default for k, (_, default) in SCHEMA.items()}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in seen:
            raise ConfigError(f"{key!r} already set on line {seen[key]}", lineno)
        conv = SCHEMA[key][0]
        try:
            values[key] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno) from None
        seen[key] = lineno
    cfg = ExperimentConfig(values, source, frozenset(seen))
    try:
        cfg.validate()
    except ConfigError:
        raise
    except ValidationError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def default_config() -> ExperimentConfig:
    return parse_config("", "<defaults>")
