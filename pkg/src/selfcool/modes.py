"""Mode shapes of the doubly clamped mirror, effective mass, and thermal time scales.

Coordinates: ``x`` runs along the length ``[0, length]``, ``y`` across the
width ``[0, width]``.  The dead strip occupies ``y < dead_fraction*width``
and does not move.  Shapes are normalised to a maximum of 1.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize

from .errors import Ambiguous, InsufficientData, NodeDivergence, OutOfBounds, ValidationError
from .params import BRAGG_STACK, LayerStack


class Longitudinal(enum.Enum):
    TENSION_STRING = "tension_string"
    CLAMPED_CLAMPED = "clamped_clamped"


class Transverse(enum.Enum):
    UNIFORM = "uniform"
    ONE_SIDE_CLAMPED = "one_side_clamped"


@dataclass(frozen=True)
class BeamModeModel:
    length: float
    width: float
    surface_density: float = BRAGG_STACK.surface_density
    mode_index: int = 1
    longitudinal: Longitudinal = Longitudinal.TENSION_STRING
    transverse: Transverse = Transverse.UNIFORM
    dead_fraction: float = 0.0

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0 and self.surface_density > 0):
            raise ValidationError("beam dimensions and surface density must be positive")
        if not (isinstance(self.mode_index, (int, np.integer)) and self.mode_index >= 1):
            raise ValidationError(f"mode index must be an integer >= 1, got {self.mode_index}")
        if not 0.0 <= self.dead_fraction <= 0.5:
            raise ValidationError(f"dead fraction must lie in [0, 0.5], got {self.dead_fraction}")
        object.__setattr__(self, "longitudinal", Longitudinal(self.longitudinal))
        object.__setattr__(self, "transverse", Transverse(self.transverse))

    @property
    def total_mass(self) -> float:
        return self.surface_density * self.length * self.width

    @property
    def area(self) -> float:
        return self.length * self.width

    def antinode(self) -> tuple[float, float]:
        """Point of maximum amplitude (the free edge for a one-side clamped profile)."""
        xi = _longitudinal_antinode(self.longitudinal, self.mode_index)
        if self.transverse is Transverse.ONE_SIDE_CLAMPED:
            y = self.width
        else:
            y = self.width * (1.0 + self.dead_fraction) / 2.0
        return xi * self.length, y


@dataclass(frozen=True)
class ProbeProfile:
    """Gaussian intensity profile with 1/e^2 radius ``waist``; ``waist=0`` is a point probe."""

    waist: float
    x0: float
    y0: float

    def __post_init__(self):
        if self.waist < 0:
            raise ValidationError("probe waist must be >= 0")


# -- shapes -----------------------------------------------------------------------------

@lru_cache(maxsize=None)
def clamped_clamped_root(n: int) -> float:
    """n-th positive root of cos(k)cosh(k) = 1 (4.7300, 7.8532, ...)."""
    guess = (n + 0.5) * math.pi
    return optimize.brentq(lambda k: math.cos(k) * math.cosh(k) - 1.0, guess - 0.5, guess + 0.5)


CANTILEVER_ROOT = optimize.brentq(lambda k: math.cos(k) * math.cosh(k) + 1.0, 1.0, 2.5)


def _cc_raw(xi, n):
    k = clamped_clamped_root(n)
    sigma = (math.cosh(k) - math.cos(k)) / (math.sinh(k) - math.sin(k))
    kx = k * xi
    return np.cosh(kx) - np.cos(kx) - sigma * (np.sinh(kx) - np.sin(kx))


@lru_cache(maxsize=None)
def _cc_peak(n: int) -> float:
    xi = np.linspace(0.0, 1.0, 20001)
    return float(np.max(np.abs(_cc_raw(xi, n))))


@lru_cache(maxsize=None)
def _longitudinal_antinode(family: Longitudinal, n: int) -> float:
    if family is Longitudinal.TENSION_STRING:
        return 0.5 / n
    xi = np.linspace(0.0, 1.0, 20001)
    return float(xi[np.argmax(np.abs(_cc_raw(xi, n)))])


def longitudinal_shape(xi, family: Longitudinal, n: int):
    xi = np.asarray(xi, dtype=float)
    if family is Longitudinal.TENSION_STRING:
        return np.sin(n * math.pi * xi)
    return _cc_raw(xi, n) / _cc_peak(n)


def transverse_shape(eta, kind: Transverse):
    """Profile across the vibrating strip; ``eta`` runs 0 (clamped side) to 1."""
    eta = np.asarray(eta, dtype=float)
    if kind is Transverse.UNIFORM:
        return np.ones_like(eta)
    k = CANTILEVER_ROOT
    sigma = (math.cosh(k) + math.cos(k)) / (math.sinh(k) + math.sin(k))

    def raw(e):
        return np.cosh(k * e) - np.cos(k * e) - sigma * (np.sinh(k * e) - np.sin(k * e))

    return raw(eta) / raw(1.0)


def mode_shape(model: BeamModeModel, x, y, *, check: bool = True):
    """Normalised out-of-plane amplitude at ``(x, y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tol = 1e-9 * max(model.length, model.width)
    if check and (np.any(x < -tol) or np.any(x > model.length + tol)
                  or np.any(y < -tol) or np.any(y > model.width + tol)):
        raise OutOfBounds("point lies outside the mirror")
    live = model.width * (1.0 - model.dead_fraction)
    eta = (y - model.dead_fraction * model.width) / live
    u = longitudinal_shape(np.clip(x / model.length, 0.0, 1.0), model.longitudinal, model.mode_index)
    t = transverse_shape(np.clip(eta, 0.0, 1.0), model.transverse)
    return np.where(eta < 0.0, 0.0, u * t)


def frequency_ratio(family: Longitudinal, n: int) -> float:
    """f_n / f_1 for the longitudinal family."""
    family = Longitudinal(family)
    if family is Longitudinal.TENSION_STRING:
        return float(n)
    return (clamped_clamped_root(n) / clamped_clamped_root(1)) ** 2


# -- effective mass -------------------------------------------------------------------

def _trapz2(values, xs, ys):
    return float(np.trapezoid(np.trapezoid(values, ys, axis=1), xs))


def mean_square_integral(model: BeamModeModel, resolution: int = 256) -> float:
    """Integral of u^2 over the mirror surface, m^2."""
    if resolution < 64:
        raise ValidationError("quadrature needs at least 64 points per axis")
    xs = np.linspace(0.0, model.length, resolution + 1)
    y_dead = model.dead_fraction * model.width
    ys = np.linspace(y_dead, model.width, resolution + 1)
    u = mode_shape(model, xs[:, None], ys[None, :], check=False)
    return _trapz2(u * u, xs, ys)


def probe_overlap(model: BeamModeModel, probe: ProbeProfile, resolution: int = 128) -> float:
    """<u, v^2> with v^2 normalised to unit integral over the mirror surface."""
    if probe.waist == 0.0:
        return float(mode_shape(model, probe.x0, probe.y0))
    mode_shape(model, probe.x0, probe.y0)  # bounds check
    reach = 4.0 * probe.waist
    x_lo, x_hi = max(0.0, probe.x0 - reach), min(model.length, probe.x0 + reach)
    y_lo, y_hi = max(0.0, probe.y0 - reach), min(model.width, probe.y0 + reach)
    nx = max(resolution, int(math.ceil((x_hi - x_lo) / (probe.waist / 16.0)))) + 1
    ny = max(resolution, int(math.ceil((y_hi - y_lo) / (probe.waist / 16.0)))) + 1
    xs = np.linspace(x_lo, x_hi, nx)
    ys = np.linspace(y_lo, y_hi, ny)
    r2 = (xs[:, None] - probe.x0) ** 2 + (ys[None, :] - probe.y0) ** 2
    v2 = np.exp(-2.0 * r2 / probe.waist ** 2)
    u = mode_shape(model, xs[:, None], ys[None, :], check=False)
    return _trapz2(u * v2, xs, ys) / _trapz2(v2, xs, ys)


def effective_mass(model: BeamModeModel, probe: ProbeProfile, resolution: int = 256) -> float:
    """rho_s * <u^2> / <u, v^2>^2, kg.

    Raises
    ------
    NodeDivergence
        When the probe sits on a node, so the overlap vanishes.
    """
    msq = mean_square_integral(model, resolution)
    overlap = probe_overlap(model, probe, max(64, resolution // 2))
    if overlap * overlap < 1e-12 * msq / model.area:
        raise NodeDivergence("probe overlap with the mode vanishes (infinite effective mass)")
    return model.surface_density * msq / overlap ** 2


def effective_mass_with_error(model: BeamModeModel, probe: ProbeProfile,
                              resolution: int = 256) -> tuple[float, float]:
    """Effective mass and the change on halving the quadrature resolution."""
    fine = effective_mass(model, probe, resolution)
    coarse = effective_mass(model, probe, max(64, resolution // 2))
    return fine, abs(fine - coarse)


def mass_magnification(model: BeamModeModel, point: tuple[float, float], resolution: int = 256) -> float:
    """<u^2> / (area * u^2(r0)): effective over total mass for a point probe."""
    u0 = float(mode_shape(model, *point))
    if u0 == 0.0:
        raise NodeDivergence("point lies on a node")
    return mean_square_integral(model, resolution) / (model.area * u0 * u0)


# -- tomography ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScanDataset:
    x: np.ndarray
    y: np.ndarray
    mean_square_disp: np.ndarray
    length: float
    width: float

    def __post_init__(self):
        for name in ("x", "y", "mean_square_disp"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        if not (self.x.size == self.y.size == self.mean_square_disp.size):
            raise ValidationError("scan columns differ in length")

    @property
    def size(self) -> int:
        return self.x.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x_m,y_m,mean_square_disp\n")
        for row in zip(self.x, self.y, self.mean_square_disp):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, length: float, width: float) -> "ScanDataset":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if lines and lines[0].startswith("x_m"):
            lines = lines[1:]
        arr = np.array([[float(v) for v in ln.split(",")] for ln in lines]).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], length, width)


def raster_grid(model: BeamModeModel, nx: int = 10, ny: int = 15) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centred raster: ~50 um steps along the length, ~7 um across the width."""
    xs = (np.arange(nx) + 0.5) * model.length / nx
    ys = (np.arange(ny) + 0.5) * model.width / ny
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return gx.ravel(), gy.ravel()


def line_scan_grid(model: BeamModeModel, n: int = 40, spacing: float = 12e-6,
                   y: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Longitudinal line of ``n`` points centred on the bridge."""
    span = (n - 1) * spacing
    if span > model.length:
        raise OutOfBounds("line scan is longer than the mirror")
    xs = 0.5 * (model.length - span) + spacing * np.arange(n)
    ys = np.full(n, 0.5 * model.width if y is None else y)
    return xs, ys


def synthesize_tomography(model: BeamModeModel, points: tuple[np.ndarray, np.ndarray],
                          noise: float = 0.0, seed: int = 0, amplitude: float = 1.0) -> ScanDataset:
    """Mean-square displacement samples ``amplitude * u^2`` with multiplicative Gaussian noise."""
    xs, ys = (np.asarray(p, dtype=float) for p in points)
    u2 = amplitude * mode_shape(model, xs, ys) ** 2
    if noise > 0.0:
        rng = np.random.default_rng(seed)
        u2 = u2 * (1.0 + noise * rng.standard_normal(u2.shape))
    return ScanDataset(xs, ys, u2, model.length, model.width)


@dataclass(frozen=True)
class ModeFit:
    model: BeamModeModel
    amplitude: float
    residual: float
    residuals_by_index: dict


def _fit_dead_fraction(data: ScanDataset, base: BeamModeModel) -> tuple[float, float, float]:
    y = data.mean_square_disp

    def solve(d):
        m = BeamModeModel(base.length, base.width, base.surface_density, base.mode_index,
                          base.longitudinal, base.transverse, float(d))
        g = mode_shape(m, data.x, data.y, check=False) ** 2
        gg = float(g @ g)
        amp = float(g @ y) / gg if gg > 0 else 0.0
        r = y - amp * g
        return float(r @ r), amp

    grid = np.linspace(0.0, 0.5, 101)
    costs = [solve(d)[0] for d in grid]
    best = float(grid[int(np.argmin(costs))])
    lo, hi = max(0.0, best - 0.005), min(0.5, best + 0.005)
    res = optimize.minimize_scalar(lambda d: solve(d)[0], bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-6})
    d = float(res.x) if res.fun <= min(costs) else best
    cost, amp = solve(d)
    return d, amp, cost


def fit_mode(data: ScanDataset, *, indices=(1, 2, 3),
             longitudinal: Longitudinal = Longitudinal.TENSION_STRING,
             transverse_models=(Transverse.UNIFORM, Transverse.ONE_SIDE_CLAMPED),
             surface_density: float = BRAGG_STACK.surface_density) -> ModeFit:
    """Least-squares mode identification over index, transverse model and dead fraction.

    The amplitude is solved in closed form; the dead fraction by a grid
    search refined with a bounded scalar minimiser.  The residual is relative
    to the data norm.

    Raises
    ------
    Ambiguous
        If the best two mode indices are within 5% in residual.
    """
    if data.size < 30:
        raise InsufficientData("mode fitting needs at least 30 points")
    norm = float(np.linalg.norm(data.mean_square_disp))
    if norm == 0.0:
        raise InsufficientData("scan carries no signal")
    best_by_index = {}
    for n in indices:
        for tr in transverse_models:
            base = BeamModeModel(data.length, data.width, surface_density, n, longitudinal, tr, 0.0)
            d, amp, cost = _fit_dead_fraction(data, base)
            res = math.sqrt(cost) / norm
            if n not in best_by_index or res < best_by_index[n][0]:
                best_by_index[n] = (res, amp, BeamModeModel(data.length, data.width, surface_density,
                                                            n, longitudinal, tr, d))
    ranked = sorted(best_by_index.items(), key=lambda kv: kv[1][0])
    best_n, (best_res, amp, model) = ranked[0]
    if len(ranked) > 1 and ranked[1][1][0] <= 1.05 * best_res:
        raise Ambiguous(f"mode indices {best_n} and {ranked[1][0]} fit equally well")
    return ModeFit(model, amp, best_res, {n: v[0] for n, v in best_by_index.items()})


# -- photothermal time scale --------------------------------------------------------------

def _top_layers(stack: LayerStack):
    seen = {}
    for layer in stack.layers:
        seen.setdefault(layer.material, layer)
    if len(seen) < 2:
        raise ValidationError("need two materials")
    return list(seen.values())[:2]


def photothermal_tau(stack: LayerStack = BRAGG_STACK, zeta: float = 1.0) -> float:
    """Thermalisation time between the two top layers, (1/zeta)^2 * sum(L_i^2 / D_i)."""
    if not zeta > 0:
        raise ValidationError("zeta must be positive")
    return sum(la.thickness ** 2 / la.diffusivity for la in _top_layers(stack)) / zeta ** 2


def zeta_for_tau(tau: float, stack: LayerStack = BRAGG_STACK) -> float:
    """Geometric factor that makes :func:`photothermal_tau` equal ``tau``."""
    return math.sqrt(photothermal_tau(stack, 1.0) / tau)


def heat_diffusion_length(diffusivity: float, tau: float, zeta: float = 1.0) -> float:
    return zeta * math.sqrt(diffusivity * tau)
