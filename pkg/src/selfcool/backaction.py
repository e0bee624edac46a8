"""Dynamical back-action on the mirror mode.

The cavity force follows the mirror through a one-pole low-pass at rate
``2*kappa``; the photothermal force follows through a second one-pole at
rate ``1/tau``.  For each pole ``a`` the force gradient ``g`` splits into a
quadrature part that adds ``(g/2m) * a/(a^2 + w^2)`` to the amplitude damping
and an in-phase part that removes ``(g/m) * a^2/(a^2 + w^2)`` from the
squared frequency.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .cavity import force_gradient_beta
from .errors import Unstable, UnstableSpring
from .params import CavityParams, MechanicalMode, PhotothermalModel

SWEEP_COLUMNS = ("delta_over_kappa", "power_w", "gamma_eff_hz_fwhm", "f_eff_hz",
                 "t_eff_k", "cooling_ratio", "stable")


@dataclass(frozen=True)
class EffectiveDynamics:
    gamma_eff: float
    omega_eff: float
    gamma_rp: float
    gamma_pt: float
    gamma: float
    omega_m: float
    stable: bool

    @property
    def cooling_ratio_pred(self) -> float:
        if not self.stable:
            return math.nan
        return (self.gamma_eff / self.gamma) * (self.omega_eff / self.omega_m) ** 2

    @property
    def fwhm_hz(self) -> float:
        return 2.0 * self.gamma_eff / (2.0 * math.pi)

    @property
    def f_eff_hz(self) -> float:
        return self.omega_eff / (2.0 * math.pi)

    @classmethod
    def bare(cls, mode: MechanicalMode) -> "EffectiveDynamics":
        return cls(mode.gamma, mode.omega_m, 0.0, 0.0, mode.gamma, mode.omega_m, True)

    @classmethod
    def from_rates(cls, mode: MechanicalMode, gamma_eff: float,
                   omega_eff: float | None = None) -> "EffectiveDynamics":
        """Dynamics with a prescribed damping, attributing the excess to radiation pressure."""
        omega_eff = mode.omega_m if omega_eff is None else omega_eff
        return cls(gamma_eff, omega_eff, gamma_eff - mode.gamma, 0.0, mode.gamma,
                   mode.omega_m, gamma_eff > 0)


def _pole_parts(a: float, omega: float) -> tuple[float, float]:
    """(quadrature, in-phase) weights of a one-pole response at rate ``a``."""
    den = a * a + omega * omega
    return a / den, a * a / den


def effective_damping(delta: float, cavity: CavityParams, mode: MechanicalMode,
                      pt: PhotothermalModel | None = None) -> EffectiveDynamics:
    """Effective damping and frequency of ``mode`` at detuning ``delta``.

    Raises
    ------
    UnstableSpring
        If the optical spring drives the squared frequency to zero or below.
    """
    pt = pt or PhotothermalModel.off()
    m = mode.effective_mass
    w = mode.omega_m
    beta = float(force_gradient_beta(delta, cavity))

    quad_rp, inph_rp = _pole_parts(2.0 * cavity.kappa, w)
    gamma_rp = beta / (2.0 * m) * quad_rp
    spring = beta / m * inph_rp

    r = pt.effective_ratio
    gamma_pt = 0.0
    if r != 0.0:
        quad_pt, inph_pt = _pole_parts(1.0 / pt.tau, w)
        gamma_pt = r * beta / (2.0 * m) * quad_pt
        spring += r * beta / m * inph_pt

    omega_sq = w * w - spring
    if omega_sq <= 0.0:
        raise UnstableSpring(
            f"optical spring exceeds mechanical stiffness at delta={delta:.4g} rad/s "
            f"(omega_eff^2 = {omega_sq:.4g})"
        )
    gamma_eff = mode.gamma + gamma_rp + gamma_pt
    return EffectiveDynamics(gamma_eff, math.sqrt(omega_sq), gamma_rp, gamma_pt,
                             mode.gamma, w, gamma_eff > 0.0)


def predicted_cooling_ratio(dyn: EffectiveDynamics, mode: MechanicalMode | None = None) -> float:
    """T_bath/T_eff for noiseless extra damping: (gamma_eff/gamma)*(omega_eff/omega_m)^2."""
    if dyn.gamma_eff <= 0.0:
        raise Unstable(f"gamma_eff = {dyn.gamma_eff:.4g} rad/s is not positive")
    gamma = mode.gamma if mode is not None else dyn.gamma
    omega_m = mode.omega_m if mode is not None else dyn.omega_m
    return (dyn.gamma_eff / gamma) * (dyn.omega_eff / omega_m) ** 2


@dataclass(frozen=True)
class SweepRow:
    delta: float
    power: float
    kappa: float
    bath_temperature: float
    dynamics: EffectiveDynamics | None
    error: str = ""

    @property
    def stable(self) -> bool:
        return self.dynamics is not None and self.dynamics.stable

    @property
    def cooling_ratio(self) -> float:
        return self.dynamics.cooling_ratio_pred if self.stable else math.nan

    @property
    def t_eff(self) -> float:
        return self.bath_temperature / self.cooling_ratio if self.stable else math.nan

    def as_record(self) -> dict:
        dyn = self.dynamics
        return {
            "delta_over_kappa": self.delta / self.kappa,
            "power_w": self.power,
            "gamma_eff_hz_fwhm": dyn.fwhm_hz if dyn else math.nan,
            "f_eff_hz": dyn.f_eff_hz if dyn else math.nan,
            "t_eff_k": self.t_eff,
            "cooling_ratio": self.cooling_ratio,
            "stable": self.stable,
        }


def sweep_detuning(deltas: Iterable[float], cavity: CavityParams, mode: MechanicalMode,
                   pt: PhotothermalModel | None = None) -> list[SweepRow]:
    """Evaluate :func:`effective_damping` on a grid; failures become flagged rows."""
    deltas = list(deltas)
    if not deltas:
        raise ValueError("detuning grid is empty")
    rows = []
    for d in deltas:
        try:
            dyn = effective_damping(d, cavity, mode, pt)
            rows.append(SweepRow(d, cavity.input_power, cavity.kappa, mode.bath_temperature, dyn))
        except UnstableSpring as exc:
            rows.append(SweepRow(d, cavity.input_power, cavity.kappa, mode.bath_temperature,
                                 None, error=str(exc)))
    return rows


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(float(v))


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        rec = row.as_record()
        writer.writerow([_fmt(rec[k]) for k in SWEEP_COLUMNS])
    return buf.getvalue()


def read_sweep_csv(text: str) -> list[dict]:
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        out.append({k: (rec[k] == "true") if k == "stable" else float(rec[k]) for k in SWEEP_COLUMNS})
    return out
