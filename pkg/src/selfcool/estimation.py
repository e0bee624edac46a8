"""Measurement-side analysis: spectra from traces, peak fits, calibrations."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import signal

from .cavity import pdh_slope
from .errors import (InsufficientData, NonUniform, NoPeak, NotConvergedWarning,
                     SlopeVanishes, TooShort, ValidationError)
from .langevin import TimeTrace
from .params import K_B, CavityParams
from .spectra import PDH_MODULATION, Spectrum, SpectrumKind, _check_resolved

FIT_COLUMNS = ("center_hz", "fwhm_hz", "area", "offset", "err_center", "err_fwhm", "err_area",
               "converged")
WINDOWS = {"hann": "hann", "rect": "boxcar"}


# -- spectral estimation ------------------------------------------------------------

def trace_from_samples(times, samples, seed: int = 0, rtol: float = 1e-6) -> TimeTrace:
    t = np.asarray(times, dtype=float)
    steps = np.diff(t)
    if steps.size == 0:
        raise TooShort("need at least two samples")
    dt = float(np.mean(steps))
    if np.any(np.abs(steps - dt) > rtol * dt):
        raise NonUniform("sample times are not uniformly spaced")
    return TimeTrace(dt, np.asarray(samples, dtype=float), seed)


def estimate_psd(trace: TimeTrace, segment_length: int | None = None, overlap_fraction: float = 0.5,
                 window: str = "hann") -> Spectrum:
    """Averaged-periodogram one-sided PSD of a trace, in units^2/Hz.

    The mean is removed from every segment and the window power is
    compensated, so the integral of the result equals the variance of a
    stationary input.
    """
    n = trace.samples.size
    nperseg = n if segment_length is None else int(segment_length)
    if nperseg < 8:
        raise TooShort("segments need at least 8 samples")
    if nperseg > n:
        raise TooShort(f"segment length {nperseg} exceeds trace length {n}")
    if not 0.0 <= overlap_fraction <= 0.9:
        raise ValidationError("overlap fraction must lie in [0, 0.9]")
    try:
        win = WINDOWS[window.lower()]
    except KeyError:
        raise ValidationError(f"unknown window {window!r}") from None
    f, p = signal.welch(trace.samples, fs=1.0 / trace.dt, window=win, nperseg=nperseg,
                        noverlap=int(overlap_fraction * nperseg), detrend="constant",
                        scaling="density", return_onesided=True)
    meta = {"segment_length": nperseg, "overlap": overlap_fraction, "window": window,
            "sample_rate_hz": 1.0 / trace.dt}
    return Spectrum(f, p, SpectrumKind.DISPLACEMENT, meta)


def segment_for_resolution(trace: TimeTrace, fwhm_hz: float, bins_per_fwhm: float = 10.0) -> int:
    """Shortest power-of-two segment whose bin width is below fwhm/bins_per_fwhm."""
    need = bins_per_fwhm / (fwhm_hz * trace.dt)
    seg = 1 << int(math.ceil(math.log2(need)))
    return min(seg, trace.samples.size)


def average_spectra(spectra: Sequence[Spectrum]) -> Spectrum:
    if not spectra:
        raise InsufficientData("no spectra to average")
    f = spectra[0].frequency
    for s in spectra[1:]:
        if s.frequency.shape != f.shape or not np.allclose(s.frequency, f):
            raise ValidationError("spectra are on different grids")
    values = np.mean([s.values for s in spectra], axis=0)
    meta = dict(spectra[0].meta, averages=len(spectra))
    return Spectrum(f, values, spectra[0].kind, meta)


def ensemble_psd(traces: Sequence[TimeTrace], fwhm_hz: float, **kwargs) -> Spectrum:
    """Average of :func:`estimate_psd` over traces, segmented to resolve ``fwhm_hz``."""
    traces = [t for t in traces if isinstance(t, TimeTrace)]
    if not traces:
        raise InsufficientData("no successful runs")
    seg = kwargs.pop("segment_length", None) or segment_for_resolution(traces[0], fwhm_hz)
    return average_spectra([estimate_psd(t, seg, **kwargs) for t in traces])


# -- Lorentzian fitting ------------------------------------------------------------

@dataclass(frozen=True)
class LorentzianFit:
    center_hz: float
    fwhm_hz: float
    area: float
    offset: float
    err_center: float
    err_fwhm: float
    err_area: float
    converged: bool
    iterations: int
    residual_norm: float

    def evaluate(self, f):
        return lorentzian(f, self.center_hz, self.fwhm_hz, self.area, self.offset)

    def as_record(self) -> dict:
        return {k: getattr(self, k) for k in FIT_COLUMNS}


def lorentzian(f, center, fwhm, area, offset=0.0):
    """Area-normalised Lorentzian plus a constant floor."""
    f = np.asarray(f, dtype=float)
    hw = 0.5 * fwhm
    return area * hw / math.pi / ((f - center) ** 2 + hw * hw) + offset


def _model_and_jacobian(x, p):
    c, w, a, o = p
    d = (x - c) ** 2 + 0.25 * w * w
    model = a * w / (2.0 * math.pi * d) + o
    jac = np.empty((x.size, 4))
    jac[:, 0] = a * w / (2.0 * math.pi) * 2.0 * (x - c) / (d * d)
    jac[:, 1] = a / (2.0 * math.pi) * (1.0 / d - 0.5 * w * w / (d * d))
    jac[:, 2] = w / (2.0 * math.pi * d)
    jac[:, 3] = 1.0
    return model, jac


def _initial_guess(f, y):
    i = int(np.argmax(y))
    floor = float(np.min(y))
    height = y[i] - floor
    if not height > 0:
        raise NoPeak("spectrum has no peak above its floor")
    half = floor + 0.5 * height
    left = i
    while left > 0 and y[left - 1] >= half:
        left -= 1
    right = i
    while right < y.size - 1 and y[right + 1] >= half:
        right += 1
    if left == 0 and right == y.size - 1:
        raise NoPeak("no half-maximum crossing inside the spectrum")

    def cross(a, b):
        return f[a] + (half - y[a]) * (f[b] - f[a]) / (y[b] - y[a])

    lo = cross(left - 1, left) if left > 0 else f[0]
    hi = cross(right, right + 1) if right < y.size - 1 else f[-1]
    width = max(hi - lo, f[min(i + 1, y.size - 1)] - f[max(i - 1, 0)])
    return f[i], width, 0.5 * math.pi * height * width, floor


def fit_lorentzian(spectrum: Spectrum, initial_guess: Sequence[float] | None = None, *,
                   window_fwhm: float | None = 15.0, max_iter: int = 200,
                   tol: float = 1e-8) -> LorentzianFit:
    """Damped least-squares fit of a Lorentzian plus offset.

    A trial step is accepted only if it lowers the residual; the damping
    factor is then multiplied by 1/3, otherwise by 2.  Iteration stops when
    the relative parameter change drops below ``tol`` or after ``max_iter``
    trial steps.  Only points within ``window_fwhm`` guessed widths of the
    guessed centre enter the fit.  ``initial_guess`` is
    ``(center_hz, fwhm_hz, area, offset)``.
    """
    f_all, y_all = spectrum.frequency, spectrum.values
    guess = tuple(initial_guess) if initial_guess is not None else _initial_guess(f_all, y_all)
    c0, w0, a0, o0 = (float(v) for v in guess)
    if not w0 > 0:
        raise ValidationError("initial FWHM must be positive")
    if window_fwhm is not None:
        sel = np.abs(f_all - c0) <= window_fwhm * w0
        f, y = f_all[sel], y_all[sel]
    else:
        f, y = f_all, y_all
    if f.size < 5:
        raise NoPeak("too few points around the peak")

    # work in units of the guessed width and peak height
    y_ref = max(float(np.max(np.abs(y))), 1e-300)
    x = (f - c0) / w0
    z = y / y_ref
    p = np.array([0.0, 1.0, a0 / (y_ref * w0), o0 / y_ref])
    scale = np.array([1.0, 1.0, max(abs(p[2]), 1e-12), 1e-3])

    model, jac = _model_and_jacobian(x, p)
    res = model - z
    cost = float(res @ res)
    lam = 1e-3
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        jtj = jac.T @ jac
        grad = jac.T @ res
        damped = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-30))
        try:
            step = -np.linalg.solve(damped, grad)
        except np.linalg.LinAlgError:
            lam *= 2.0
            continue
        trial = p + step
        if trial[1] <= 0:
            lam *= 2.0
            continue
        t_model, t_jac = _model_and_jacobian(x, trial)
        t_res = t_model - z
        t_cost = float(t_res @ t_res)
        if t_cost < cost:
            small = np.all(np.abs(step) <= tol * np.maximum(np.abs(trial), scale))
            p, model, jac, res, cost = trial, t_model, t_jac, t_res, t_cost
            lam /= 3.0
            if small:
                converged = True
                break
        else:
            lam *= 2.0
            if lam > 1e12:
                # no descent direction left at working precision
                converged = True
                break

    if not converged:
        warnings.warn(f"Lorentzian fit did not converge in {max_iter} iterations",
                      NotConvergedWarning, stacklevel=2)

    dof = max(x.size - 4, 1)
    s2 = cost / dof
    try:
        cov = np.linalg.inv(jac.T @ jac) * s2
        err = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        err = np.full(4, math.nan)
    return LorentzianFit(
        center_hz=c0 + p[0] * w0,
        fwhm_hz=p[1] * w0,
        area=p[2] * y_ref * w0,
        offset=p[3] * y_ref,
        err_center=err[0] * w0,
        err_fwhm=err[1] * w0,
        err_area=err[2] * y_ref * w0,
        converged=converged,
        iterations=it,
        residual_norm=math.sqrt(cost) * y_ref,
    )


def fits_to_csv(fits: Sequence[LorentzianFit]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FIT_COLUMNS)
    for fit in fits:
        rec = fit.as_record()
        writer.writerow([("true" if rec[k] else "false") if k == "converged" else repr(float(rec[k]))
                         for k in FIT_COLUMNS])
    return buf.getvalue()


# -- calibrations -------------------------------------------------------------------

def normalize_by_pdh_slope(fit: LorentzianFit, delta: float, cavity: CavityParams,
                           modulation: float = PDH_MODULATION) -> LorentzianFit:
    """Divide readout areas by the squared PDH slope relative to zero detuning."""
    slope = float(pdh_slope(delta, modulation, cavity, check=False))
    if abs(slope) < 1e-6:
        raise SlopeVanishes(f"PDH slope at delta={delta:.4g} rad/s is {slope:.3g} of its peak")
    gain = slope * slope
    return replace(fit, area=fit.area / gain, err_area=fit.err_area / gain, offset=fit.offset / gain)


def calibrate_effective_mass(spectrum: Spectrum, mode_freq_hz: float, t_bath: float) -> float:
    """Mass that makes the spectrum area match k_B*T/(m*omega^2)."""
    _check_resolved(spectrum)
    omega = 2.0 * math.pi * mode_freq_hz
    return K_B * t_bath / (omega * omega * spectrum.area())


def mass_from_area(area: float, mode_freq_hz: float, t_bath: float) -> float:
    omega = 2.0 * math.pi * mode_freq_hz
    return K_B * t_bath / (omega * omega * area)


# -- heating -------------------------------------------------------------------------

@dataclass(frozen=True)
class HeatingRow:
    power_w: float
    area: float
    fwhm_hz: float
    area_times_fwhm: float
    center_hz: float
    product: float


@dataclass(frozen=True)
class HeatingDiagnostic:
    rows: tuple[HeatingRow, ...]
    means: dict
    std_errors: dict
    heating: bool
    worst_z: float


def heating_diagnostic(fits: Sequence[tuple[float, LorentzianFit]], *,
                       spring_compensated: bool = True,
                       reference_hz: float | None = None) -> HeatingDiagnostic:
    """Compare area*width across input powers.

    Without absorption heating the product of area and width is fixed by the
    bath temperature and the natural damping, so all powers share one value.
    The optical spring rescales the area by (f_M/f_eff)^2; with
    ``spring_compensated`` the product is multiplied by (center/reference)^2
    to remove that.  Heating is flagged when any two powers differ by more
    than twice their combined standard error.
    """
    fits = list(fits)
    if spring_compensated and reference_hz is None and fits:
        reference_hz = max(fit.center_hz for _, fit in fits)
    rows = []
    for power, fit in fits:
        prod = fit.area * fit.fwhm_hz
        comp = prod * (fit.center_hz / reference_hz) ** 2 if spring_compensated else prod
        rows.append(HeatingRow(power, fit.area, fit.fwhm_hz, prod, fit.center_hz, comp))
    groups: dict[float, list[float]] = {}
    for row in rows:
        groups.setdefault(row.power_w, []).append(row.product)
    if len(groups) < 2:
        raise InsufficientData("need at least two input powers")
    if any(len(v) < 3 for v in groups.values()):
        raise InsufficientData("need at least three detunings per power")
    means = {p: float(np.mean(v)) for p, v in groups.items()}
    ses = {p: float(np.std(v, ddof=1) / math.sqrt(len(v))) for p, v in groups.items()}
    worst = 0.0
    powers = sorted(groups)
    for i, pa in enumerate(powers):
        for pb in powers[i + 1:]:
            comb = math.hypot(ses[pa], ses[pb])
            diff = abs(means[pa] - means[pb])
            z = diff / comb if comb > 0 else (math.inf if diff > 0 else 0.0)
            worst = max(worst, z)
    return HeatingDiagnostic(tuple(rows), means, ses, worst > 2.0, worst)


def heating_to_csv(diag: HeatingDiagnostic) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["power_w", "area", "fwhm_hz", "area_times_fwhm", "center_hz", "compensated_product"])
    for r in diag.rows:
        writer.writerow([repr(float(v)) for v in (r.power_w, r.area, r.fwhm_hz, r.area_times_fwhm,
                                                   r.center_hz, r.product)])
    return buf.getvalue()
