"""Radiation-pressure back-action cooling of a micro-mirror in a detuned cavity.

Submodules: :mod:`params`, :mod:`cavity`, :mod:`backaction`, :mod:`spectra`,
:mod:`langevin`, :mod:`estimation`, :mod:`modes`, :mod:`config`, :mod:`cli`.
"""

__version__ = "0.1.0"

from .backaction import EffectiveDynamics, effective_damping, sweep_detuning
from .errors import SelfCoolError, ValidationError
from .params import CavityParams, MechanicalMode, PhotothermalModel

__all__ = [
    "__version__", "CavityParams", "MechanicalMode", "PhotothermalModel",
    "EffectiveDynamics", "effective_damping", "sweep_detuning",
    "SelfCoolError", "ValidationError",
]
