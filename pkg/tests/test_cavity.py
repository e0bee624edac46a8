import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from selfcool import cavity
from selfcool.errors import RegimeWarning
from selfcool.params import C, LAB_CAVITY


def airy_power(delta, cav):
    """Exact Airy circulating power for an impedance-free mirror pair of the same finesse."""
    # coefficient of finesse form: 1 / (1 + (2F/pi)^2 sin^2(phi/2)), phi = 2 delta L / c
    phi = 2 * delta * cav.length / C
    peak = cav.buildup_factor * cav.input_power
    return peak / (1 + (2 * cav.finesse / math.pi) ** 2 * np.sin(phi / 2) ** 2)


def test_on_resonance_buildup():
    assert float(cavity.circulating_power(0.0, LAB_CAVITY)) == pytest.approx(2e-3 * 1000 / math.pi)


def test_half_power_at_kappa():
    p0 = cavity.circulating_power(0.0, LAB_CAVITY)
    assert cavity.circulating_power(LAB_CAVITY.kappa, LAB_CAVITY) == pytest.approx(p0 / 2)


def test_lorentzian_matches_airy_near_resonance():
    d = np.linspace(-5, 5, 201) * LAB_CAVITY.kappa
    np.testing.assert_allclose(cavity.circulating_power(d, LAB_CAVITY), airy_power(d, LAB_CAVITY),
                               rtol=1e-3)


def test_force_is_two_p_over_c():
    assert float(cavity.radiation_force(0.3e7, LAB_CAVITY)) == pytest.approx(
        2 * float(cavity.circulating_power(0.3e7, LAB_CAVITY)) / C)


def test_beta_matches_finite_difference_of_force():
    rng = np.random.default_rng(0)
    k = LAB_CAVITY.kappa
    for d in rng.uniform(-4 * k, 4 * k, 100):
        h = 1e-13
        f = lambda x: float(cavity.radiation_force(cavity.displaced_detuning(x, d, LAB_CAVITY), LAB_CAVITY))
        fd = (f(h) - f(-h)) / (2 * h)
        assert float(cavity.force_gradient_beta(d, LAB_CAVITY)) == pytest.approx(fd, rel=1e-6)


@settings(max_examples=50)
@given(st.floats(-10, 10), st.floats(1e-4, 1e-1))
def test_beta_odd_and_linear_in_power(u, power):
    cav = LAB_CAVITY.with_power(power)
    d = u * cav.kappa
    b = float(cavity.force_gradient_beta(d, cav))
    assert float(cavity.force_gradient_beta(-d, cav)) == pytest.approx(-b, abs=1e-30)
    assert float(cavity.force_gradient_beta(d, cav.with_power(2 * power))) == pytest.approx(2 * b)


def test_beta_peak_at_kappa_over_root3():
    from scipy.optimize import minimize_scalar

    k = LAB_CAVITY.kappa
    res = minimize_scalar(lambda u: -float(cavity.force_gradient_beta(u * k, LAB_CAVITY)),
                          bounds=(0.01, 3), method="bounded", options={"xatol": 1e-10})
    assert res.x == pytest.approx(1 / math.sqrt(3), rel=1e-6)
    assert cavity.optimal_gradient_detuning(LAB_CAVITY) == pytest.approx(k / math.sqrt(3))


def test_response_record():
    r = cavity.response(LAB_CAVITY.kappa, LAB_CAVITY)
    assert r.force_gradient > 0 and r.circulating_power > 0
    assert r.radiation_force == pytest.approx(2 * r.circulating_power / C)


def test_reflection_dip_and_width():
    k = LAB_CAVITY.kappa
    r0 = abs(cavity.reflection_coefficient(0.0, LAB_CAVITY)) ** 2
    far = abs(cavity.reflection_coefficient(1e3 * k, LAB_CAVITY)) ** 2
    assert r0 < far and far == pytest.approx(1, abs=1e-5)
    # the dip 1-|r|^2 is Lorentzian with half width kappa
    dip = lambda d: 1 - abs(cavity.reflection_coefficient(d, LAB_CAVITY)) ** 2
    assert dip(k) == pytest.approx(dip(0) / 2, rel=1e-12)
    assert cavity.reflection_fwhm_length(LAB_CAVITY) == pytest.approx(1064e-9 / 1000)


def test_reflection_scan_is_periodic_over_half_wavelength():
    cav = LAB_CAVITY
    x = np.linspace(-20e-9, 20e-9, 41)
    a = cavity.reflection_scan(x, cav)
    b = cavity.reflection_scan(x + cav.wavelength / 2, cav)
    np.testing.assert_allclose(a, b, rtol=1e-6)
    assert a.min() < a.max() <= cav.input_power * (1 + 1e-12)


def test_fsr():
    assert cavity.free_spectral_range(LAB_CAVITY) == pytest.approx(math.pi * C / 0.025)


def test_pdh_normalised_slope_and_oddness():
    k = LAB_CAVITY.kappa
    om = 2 * math.pi * 19e6
    assert cavity.pdh_slope(0.0, om, LAB_CAVITY) == pytest.approx(1.0, rel=1e-9)
    d = np.linspace(-3, 3, 61) * k
    sig = cavity.pdh_error_signal(d, om, LAB_CAVITY)
    np.testing.assert_allclose(sig, -sig[::-1], atol=1e-12 * np.abs(sig).max())


def test_pdh_slope_matches_finite_difference():
    om = 2 * math.pi * 19e6
    k = LAB_CAVITY.kappa
    for u in (0.0, 0.3, 1.0, 2.0):
        h = 1e-5 * k
        fd = (cavity.pdh_error_signal(u * k + h, om, LAB_CAVITY)
              - cavity.pdh_error_signal(u * k - h, om, LAB_CAVITY)) / (2 * h)
        assert cavity.pdh_slope(u * k, om, LAB_CAVITY) == pytest.approx(fd * k, rel=1e-5, abs=1e-9)


def test_pdh_slope_falls_at_kappa():
    om = 2 * math.pi * 190e6
    assert cavity.pdh_slope(LAB_CAVITY.kappa, om, LAB_CAVITY) < 0.1


def test_pdh_regime_warning():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        cavity.pdh_error_signal(0.0, 2 * math.pi * 19e6, LAB_CAVITY)
    assert any(issubclass(w.category, RegimeWarning) for w in rec)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cavity.pdh_error_signal(0.0, 2 * math.pi * 19e6, LAB_CAVITY, check=False)
