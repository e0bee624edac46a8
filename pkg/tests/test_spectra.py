
import numpy as np
import pytest
from scipy import integrate

from selfcool import spectra
from selfcool.backaction import EffectiveDynamics, effective_damping
from selfcool.errors import AdiabaticityViolation, GridTooCoarse, Unstable, ValidationError
from selfcool.params import K_B, CavityParams, LAB_CAVITY, LAB_MODE, THEORY_MODE
from selfcool.spectra import Spectrum, SpectrumKind


def test_susceptibility_on_resonance():
    chi = spectra.mechanical_susceptibility(LAB_MODE.omega_m, LAB_MODE)
    # purely imaginary at resonance with |chi| = Q / (m omega^2)
    assert abs(chi.real) < 1e-9 * abs(chi)
    assert abs(chi) == pytest.approx(LAB_MODE.quality / (LAB_MODE.effective_mass * LAB_MODE.omega_m ** 2))


def test_bare_effective_susceptibility_equals_mechanical():
    w = np.linspace(0.9, 1.1, 11) * LAB_MODE.omega_m
    np.testing.assert_allclose(spectra.effective_susceptibility(w, LAB_MODE, EffectiveDynamics.bare(LAB_MODE)),
                               spectra.mechanical_susceptibility(w, LAB_MODE), rtol=1e-12)


def test_psd_is_force_noise_times_susceptibility():
    dyn = effective_damping(0.4 * LAB_CAVITY.kappa, LAB_CAVITY, LAB_MODE)
    f = np.linspace(270e3, 290e3, 101)
    psd = spectra.analytic_psd(f, LAB_MODE, dyn)
    chi = spectra.effective_susceptibility(2 * np.pi * f, LAB_MODE, dyn)
    np.testing.assert_allclose(psd.values, spectra.thermal_force_psd(LAB_MODE) * np.abs(chi) ** 2, rtol=1e-12)


@pytest.mark.parametrize("ratio", [1.0, 5.0, 30.0])
def test_area_matches_quadrature_integral(ratio):
    dyn = EffectiveDynamics.from_rates(LAB_MODE, ratio * LAB_MODE.gamma)
    psd = lambda f: spectra.thermal_force_psd(LAB_MODE) * abs(spectra.effective_susceptibility(2 * np.pi * f, LAB_MODE, dyn)) ** 2
    f0 = dyn.f_eff_hz
    w = dyn.fwhm_hz
    total = sum(integrate.quad(psd, a, b, limit=500)[0]
                for a, b in [(0, f0 - 50 * w), (f0 - 50 * w, f0 + 50 * w), (f0 + 50 * w, 50 * f0)])
    assert total == pytest.approx(spectra.mean_square_displacement(LAB_MODE, dyn), rel=1e-3)
    grid_area = spectra.analytic_psd(spectra.default_grid(dyn), LAB_MODE, dyn).area()
    assert grid_area == pytest.approx(total, rel=1e-3)


def test_equipartition_and_cooled_temperature():
    bare = EffectiveDynamics.bare(LAB_MODE)
    t = spectra.effective_temperature(spectra.analytic_psd(spectra.default_grid(bare), LAB_MODE, bare), LAB_MODE)
    assert t == pytest.approx(300.0, rel=1e-3)
    cooled = EffectiveDynamics.from_rates(LAB_MODE, 30 * LAB_MODE.gamma)
    t = spectra.effective_temperature(spectra.analytic_psd(spectra.default_grid(cooled), LAB_MODE, cooled), LAB_MODE)
    assert t == pytest.approx(10.0, rel=1e-3) and t <= 10.0


def test_spring_shift_enters_temperature():
    dyn = effective_damping(1.0 * LAB_CAVITY.kappa, LAB_CAVITY, THEORY_MODE)
    t = spectra.effective_temperature(spectra.analytic_psd(spectra.default_grid(dyn), THEORY_MODE, dyn), THEORY_MODE)
    assert t == pytest.approx(300 / dyn.cooling_ratio_pred, rel=1e-3)


def test_measured_fwhm_and_peak():
    dyn = EffectiveDynamics.from_rates(LAB_MODE, 10 * LAB_MODE.gamma)
    psd = spectra.analytic_psd(spectra.default_grid(dyn), LAB_MODE, dyn)
    fwhm, n = spectra.measure_fwhm(psd)
    assert fwhm == pytest.approx(320.0, rel=1e-3) and n >= 50
    peak = psd.frequency[np.argmax(psd.values)]
    assert peak == pytest.approx(spectra.peak_center(dyn) / (2 * np.pi), abs=fwhm / 50)


def test_coarse_grid_rejected():
    dyn = EffectiveDynamics.bare(LAB_MODE)
    f = np.linspace(270e3, 290e3, 201)  # 100 Hz spacing against a 32 Hz width
    with pytest.raises(GridTooCoarse):
        spectra.effective_temperature(spectra.analytic_psd(f, LAB_MODE, dyn), LAB_MODE)


def test_unstable_has_no_spectrum():
    dyn = EffectiveDynamics.from_rates(LAB_MODE, -LAB_MODE.gamma)
    with pytest.raises(Unstable):
        spectra.analytic_psd([1.0, 2.0], LAB_MODE, dyn)
    with pytest.raises(Unstable):
        spectra.mean_square_displacement(LAB_MODE, dyn)


def test_spectrum_validation_and_csv_round_trip():
    with pytest.raises(ValidationError):
        Spectrum(np.array([1.0, 0.5]), np.array([1.0, 1.0]))
    with pytest.raises(ValidationError):
        Spectrum(np.array([1.0, 2.0]), np.array([1.0, -1.0]))
    s = Spectrum(np.array([1.0, 2.0, 3.0]), np.array([1e-24, 3e-24, 2e-24]), meta={"runs": 30})
    back = Spectrum.from_csv(s.to_csv())
    np.testing.assert_array_equal(back.frequency, s.frequency)
    np.testing.assert_array_equal(back.values, s.values)
    assert back.meta == {"runs": 30}
    assert back.kind is SpectrumKind.DISPLACEMENT


def test_readout_round_trip_and_gain():
    dyn = EffectiveDynamics.bare(LAB_MODE)
    psd = spectra.analytic_psd(spectra.default_grid(dyn), LAB_MODE, dyn)
    gain = spectra.readout_transfer(0.3 * LAB_CAVITY.kappa, LAB_CAVITY, LAB_MODE)
    assert 0 < gain < 1
    assert spectra.readout_transfer(0.0, LAB_CAVITY, LAB_MODE) == pytest.approx(1.0)
    ro = spectra.to_readout(psd, gain)
    assert ro.kind is SpectrumKind.PDH_READOUT
    np.testing.assert_allclose(spectra.from_readout(ro, gain).values, psd.values, rtol=1e-12)
    with pytest.raises(ValidationError):
        spectra.to_readout(ro, gain)


def test_adiabatic_guard():
    assert spectra.check_adiabatic(LAB_CAVITY, LAB_MODE) > 10
    slow = CavityParams(length=0.025, finesse=2e5)
    with pytest.raises(AdiabaticityViolation):
        spectra.readout_transfer(0.0, slow, LAB_MODE)


def test_displacement_sensitivity_scale():
    s = spectra.displacement_sensitivity(0.0, LAB_CAVITY)
    assert s == pytest.approx(LAB_CAVITY.omega_laser / (LAB_CAVITY.length * LAB_CAVITY.kappa))
    assert K_B > 0
