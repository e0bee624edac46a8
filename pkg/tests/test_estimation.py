import math
import warnings

import numpy as np
import pytest
from scipy.optimize import curve_fit

from selfcool import estimation, spectra
from selfcool.backaction import EffectiveDynamics
from selfcool.errors import (InsufficientData, NonUniform, NoPeak, NotConvergedWarning, SlopeVanishes,
                             TooShort, ValidationError)
from selfcool.estimation import LorentzianFit, fit_lorentzian, lorentzian
from selfcool.langevin import TimeTrace
from selfcool.params import K_B, LAB_CAVITY, LAB_MODE
from selfcool.spectra import Spectrum

F = np.linspace(279.5e3, 280.5e3, 2001)
TRUTH = (280.0e3 + 0.37, 32.0, 6.1e-23, 2e-27)


def noisy(seed, level=0.05):
    rng = np.random.default_rng(seed)
    y = lorentzian(F, *TRUTH)
    return np.abs(y * (1 + level * rng.standard_normal(F.size)))


def test_lorentzian_is_area_normalised():
    f = np.linspace(-1e5, 1e5, 2_000_001)
    assert np.trapezoid(lorentzian(f, 0.0, 10.0, 3.0), f) == pytest.approx(3.0, rel=1e-3)
    assert lorentzian(5.0, 0.0, 10.0, 1.0) == pytest.approx(0.5 * lorentzian(0.0, 0.0, 10.0, 1.0))


def test_white_noise_psd_level_and_parseval():
    rng = np.random.default_rng(1)
    dt, sigma = 1e-6, 2.0
    tr = TimeTrace(dt, sigma * rng.standard_normal(2 ** 16), 0)
    psd = estimation.estimate_psd(tr, 1024)
    assert np.median(psd.values[1:-1]) == pytest.approx(2 * sigma ** 2 * dt, rel=0.05)
    assert psd.area() == pytest.approx(np.var(tr.samples), rel=0.02)


def test_single_segment_rect_matches_numpy_periodogram():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(256)
    dt = 1e-3
    psd = estimation.estimate_psd(TimeTrace(dt, x, 0), window="rect")
    xf = np.fft.rfft(x - x.mean())
    manual = np.abs(xf) ** 2 * dt / x.size
    manual[1:-1] *= 2
    np.testing.assert_allclose(psd.values, manual, rtol=1e-10, atol=1e-14)


def test_sinusoid_peak_location():
    dt = 1e-6
    t = np.arange(2 ** 15) * dt
    tr = TimeTrace(dt, np.sin(2 * np.pi * 12_345.0 * t), 0)
    psd = estimation.estimate_psd(tr, 4096)
    assert psd.frequency[np.argmax(psd.values)] == pytest.approx(12_345.0, abs=1 / (4096 * dt))


def test_segment_for_resolution_power_of_two():
    tr = TimeTrace(1e-6, np.zeros(2 ** 20), 0)
    seg = estimation.segment_for_resolution(tr, 32.0)
    assert seg & (seg - 1) == 0
    assert 1 / (seg * 1e-6) <= 3.2 < 2 / (seg * 1e-6)


def test_psd_guards():
    tr = TimeTrace(1e-6, np.zeros(100), 0)
    with pytest.raises(TooShort):
        estimation.estimate_psd(tr, 200)
    with pytest.raises(ValidationError):
        estimation.estimate_psd(tr, 50, window="kaiser")
    with pytest.raises(NonUniform):
        estimation.trace_from_samples([0, 1, 2.5], [0, 0, 0])
    assert estimation.trace_from_samples([0, 1, 2], [0, 1, 0]).dt == 1.0


def test_fit_noiseless_exact():
    fit = fit_lorentzian(Spectrum(F, lorentzian(F, *TRUTH)))
    assert fit.converged
    for got, want in zip((fit.center_hz, fit.fwhm_hz, fit.area, fit.offset), TRUTH):
        assert got == pytest.approx(want, rel=1e-6)


def test_fit_agrees_with_scipy_curve_fit():
    y = noisy(3)
    fit = fit_lorentzian(Spectrum(F, y), window_fwhm=None)
    ymax = y.max()
    popt, pcov = curve_fit(lorentzian, F, y / ymax, p0=(280e3, 30.0, 50.0, 0.0), xtol=1e-14, ftol=1e-14)
    for got, want in zip((fit.center_hz, fit.fwhm_hz, fit.area / ymax), popt[:3]):
        assert got == pytest.approx(want, rel=1e-5)
    assert fit.err_fwhm == pytest.approx(math.sqrt(pcov[1, 1]), rel=0.05)


def test_fit_recovers_width_over_100_noise_seeds():
    widths = [fit_lorentzian(Spectrum(F, noisy(s))).fwhm_hz for s in range(100)]
    assert max(abs(w - 32.0) / 32.0 for w in widths) <= 0.05


def test_fit_rejects_flat_spectrum():
    with pytest.raises(NoPeak):
        fit_lorentzian(Spectrum(F, np.ones_like(F)))


def test_fit_warns_when_iterations_exhausted():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        fit = fit_lorentzian(Spectrum(F, noisy(4)), initial_guess=(280.3e3, 5.0, 1e-23, 0.0), max_iter=2)
    assert not fit.converged
    assert any(issubclass(w.category, NotConvergedWarning) for w in rec)


def test_fit_csv_header():
    fit = fit_lorentzian(Spectrum(F, noisy(5)))
    lines = estimation.fits_to_csv([fit, fit]).splitlines()
    assert lines[0].split(",") == list(estimation.FIT_COLUMNS)
    assert len(lines) == 3


def _fit(area, fwhm, center=280e3):
    return LorentzianFit(center, fwhm, area, 0.0, 0.0, 0.0, 0.0, True, 1, 0.0)


def test_pdh_normalisation_divides_by_squared_slope():
    from selfcool.cavity import pdh_slope

    om = 2 * math.pi * 19e6
    d = 0.4 * LAB_CAVITY.kappa
    fit = _fit(2e-23, 100.0)
    out = estimation.normalize_by_pdh_slope(fit, d, LAB_CAVITY, om)
    assert out.area == pytest.approx(2e-23 / float(pdh_slope(d, om, LAB_CAVITY, check=False)) ** 2)
    assert out.fwhm_hz == fit.fwhm_hz


def test_pdh_normalisation_refuses_vanishing_slope():
    from scipy.optimize import brentq
    from selfcool.cavity import pdh_slope

    om = 2 * math.pi * 19e6
    k = LAB_CAVITY.kappa
    # the slope changes sign between the line centre and the sidebands
    u0 = brentq(lambda u: pdh_slope(u * k, om, LAB_CAVITY, check=False), 0.5, 2.0)
    with pytest.raises(SlopeVanishes):
        estimation.normalize_by_pdh_slope(_fit(1e-23, 50.0), u0 * k, LAB_CAVITY, om)


def test_mass_calibration_inverts_equipartition():
    dyn = EffectiveDynamics.bare(LAB_MODE)
    psd = spectra.analytic_psd(spectra.default_grid(dyn), LAB_MODE, dyn)
    m = estimation.calibrate_effective_mass(psd, LAB_MODE.frequency_hz, 300.0)
    assert m == pytest.approx(22e-12, rel=1e-3)
    area = K_B * 300 / (22e-12 * LAB_MODE.omega_m ** 2)
    assert estimation.mass_from_area(area, LAB_MODE.frequency_hz, 300.0) == pytest.approx(22e-12)


def test_heating_diagnostic_flags_only_real_heating():
    base = 32.0 * 5e-23
    fits = []
    for p, jitter in ((1e-3, (0.02, -0.01, -0.01)), (2e-3, (-0.02, 0.0, 0.02))):
        for w, j in zip((100.0, 300.0, 600.0), jitter):
            fits.append((p, _fit(base / w * (1 + j), w)))
    diag = estimation.heating_diagnostic(fits, reference_hz=280e3)
    assert not diag.heating
    hot = [(p, _fit(f.area * (1.5 if p == 2e-3 else 1.0), f.fwhm_hz)) for p, f in fits]
    diag = estimation.heating_diagnostic(hot, reference_hz=280e3)
    assert diag.heating and diag.worst_z > 2
    assert len(estimation.heating_to_csv(diag).splitlines()) == 7


def test_heating_spring_compensation():
    # a softened mode shows a larger area; the (center/ref)^2 factor undoes it
    fits = []
    for p, shift in ((1e-3, 0.99), (2e-3, 0.98)):
        for w in (100.0, 200.0, 400.0):
            fits.append((p, _fit(1.6e-21 / w / shift ** 2, w, center=280e3 * shift)))
    assert not estimation.heating_diagnostic(fits, reference_hz=280e3).heating
    raw = estimation.heating_diagnostic(fits, spring_compensated=False)
    assert raw.worst_z > 2


def test_heating_needs_enough_points():
    with pytest.raises(InsufficientData):
        estimation.heating_diagnostic([(1e-3, _fit(1, 1))] * 3)
    with pytest.raises(InsufficientData):
        estimation.heating_diagnostic([(1e-3, _fit(1, 1)), (2e-3, _fit(1, 1))])
