import math

import numpy as np
import pytest
from scipy import integrate

from selfcool import modes
from selfcool.errors import Ambiguous, InsufficientData, NodeDivergence, OutOfBounds, ValidationError
from selfcool.modes import BeamModeModel, Longitudinal, ProbeProfile, Transverse
from selfcool.params import BRAGG_STACK

L, W = 490e-6, 110e-6
STRING = BeamModeModel(L, W)
EDGE = BeamModeModel(L, W, transverse=Transverse.ONE_SIDE_CLAMPED)


def point(model):
    return ProbeProfile(0.0, *model.antinode())


def test_beam_roots():
    assert modes.clamped_clamped_root(1) == pytest.approx(4.730040745, rel=1e-9)
    assert modes.clamped_clamped_root(2) == pytest.approx(7.853204624, rel=1e-9)
    assert modes.CANTILEVER_ROOT == pytest.approx(1.875104069, rel=1e-9)
    assert modes.frequency_ratio(Longitudinal.CLAMPED_CLAMPED, 2) == pytest.approx(2.7565, rel=1e-4)
    assert modes.frequency_ratio(Longitudinal.TENSION_STRING, 3) == 3.0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_string_antinode_mass_is_half(n):
    m = BeamModeModel(L, W, mode_index=n)
    assert modes.effective_mass(m, point(m)) == pytest.approx(m.total_mass / 2, rel=1e-6)


def test_clamped_clamped_mass_ratio():
    m = BeamModeModel(L, W, longitudinal=Longitudinal.CLAMPED_CLAMPED)
    # independent 1-D quadrature of the normalised clamped-clamped shape
    ratio = integrate.quad(lambda xi: float(modes.longitudinal_shape(xi, Longitudinal.CLAMPED_CLAMPED, 1)) ** 2,
                           0, 1, limit=200)[0]
    assert ratio == pytest.approx(0.3965, abs=5e-4)
    assert modes.effective_mass(m, point(m)) == pytest.approx(ratio * m.total_mass, rel=1e-4)


def test_cantilever_edge_gives_quarter():
    # string x cantilever measured at the free edge: (1/2) * (1/4) of the total mass
    assert modes.effective_mass(EDGE, point(EDGE)) == pytest.approx(EDGE.total_mass / 8, rel=1e-4)


@pytest.mark.parametrize("d", [0.1, 0.3, 0.5])
def test_dead_strip_scales_mass(d):
    m = BeamModeModel(L, W, transverse=Transverse.ONE_SIDE_CLAMPED, dead_fraction=d)
    assert modes.effective_mass(m, point(m)) == pytest.approx(m.total_mass * (1 - d) / 8, rel=1e-4)
    assert float(modes.mode_shape(m, L / 2, 0.5 * d * W)) == 0.0


def test_quadrature_converged_below_0p1_percent():
    real = BeamModeModel(L, W, BRAGG_STACK.surface_density, 1, Longitudinal.TENSION_STRING,
                         Transverse.ONE_SIDE_CLAMPED, 0.3)
    m, err = modes.effective_mass_with_error(real, ProbeProfile(10e-6, *real.antinode()))
    assert err / m < 1e-3
    assert 15e-12 <= m <= 40e-12


def test_gaussian_probe_limits():
    x0, y0 = STRING.antinode()
    pt = modes.effective_mass(STRING, ProbeProfile(0.0, x0, y0))
    tiny = modes.effective_mass(STRING, ProbeProfile(1e-7, x0, y0))
    assert tiny == pytest.approx(pt, rel=5e-3)
    # a Gaussian with 1/e^2 radius w averages sin(pi x/L) to exp(-pi^2 w^2 / (8 L^2))
    w = 40e-6
    overlap = modes.probe_overlap(STRING, ProbeProfile(w, x0, y0))
    assert overlap == pytest.approx(math.exp(-math.pi ** 2 * w * w / (8 * L * L)), rel=1e-5)


def test_node_and_bounds():
    with pytest.raises(NodeDivergence):
        modes.effective_mass(STRING, ProbeProfile(0.0, 0.0, W / 2))
    second = BeamModeModel(L, W, mode_index=2)
    with pytest.raises(NodeDivergence):
        modes.effective_mass(second, ProbeProfile(0.0, L / 2, W / 2))
    with pytest.raises(OutOfBounds):
        modes.mode_shape(STRING, L * 1.1, W / 2)
    with pytest.raises(ValidationError):
        BeamModeModel(L, W, dead_fraction=0.7)
    with pytest.raises(ValidationError):
        BeamModeModel(L, W, mode_index=0)
    with pytest.raises(ValidationError):
        modes.mean_square_integral(STRING, 16)


def test_mass_magnification():
    assert modes.mass_magnification(STRING, STRING.antinode()) == pytest.approx(0.5, rel=1e-6)
    assert modes.mass_magnification(STRING, (L / 6, W / 2)) == pytest.approx(2.0, rel=1e-6)


def test_raster_grid_geometry():
    xs, ys = modes.raster_grid(STRING)
    assert xs.size == 150
    assert np.unique(xs).size == 10 and np.unique(ys).size == 15
    assert np.diff(np.unique(xs))[0] == pytest.approx(49e-6)
    lx, _ = modes.line_scan_grid(STRING)
    assert lx.size == 40 and np.diff(lx)[0] == pytest.approx(12e-6)
    with pytest.raises(OutOfBounds):
        modes.line_scan_grid(STRING, n=50)


def test_fit_recovers_fundamental_and_dead_fraction():
    truth = BeamModeModel(L, W, transverse=Transverse.ONE_SIDE_CLAMPED, dead_fraction=0.3)
    grid = modes.raster_grid(truth)
    for seed in range(50):
        fit = modes.fit_mode(modes.synthesize_tomography(truth, grid, 0.1, seed))
        assert fit.model.mode_index == 1
        assert fit.model.transverse is Transverse.ONE_SIDE_CLAMPED
        assert abs(fit.model.dead_fraction - 0.3) <= 0.05


def test_line_scan_identifies_index():
    for n in (1, 2, 3):
        truth = BeamModeModel(L, W, mode_index=n)
        data = modes.synthesize_tomography(truth, modes.line_scan_grid(truth), 0.1, 5)
        assert modes.fit_mode(data).model.mode_index == n


def test_fit_guards():
    xs, ys = modes.line_scan_grid(STRING, n=20)
    with pytest.raises(InsufficientData):
        modes.fit_mode(modes.synthesize_tomography(STRING, (xs, ys)))
    xs, ys = modes.raster_grid(STRING)
    with pytest.raises(InsufficientData):
        modes.fit_mode(modes.ScanDataset(xs, ys, np.zeros_like(xs), L, W))
    # equal mixture of the first two string modes fits neither one better
    mix = 0.5 * (modes.mode_shape(STRING, xs, ys) ** 2
                 + modes.mode_shape(BeamModeModel(L, W, mode_index=2), xs, ys) ** 2)
    with pytest.raises(Ambiguous):
        modes.fit_mode(modes.ScanDataset(xs, ys, mix, L, W), indices=(1, 2))


def test_scan_csv_round_trip():
    data = modes.synthesize_tomography(EDGE, modes.raster_grid(EDGE), 0.1, 1)
    back = modes.ScanDataset.from_csv(data.to_csv(), L, W)
    np.testing.assert_array_equal(back.mean_square_disp, data.mean_square_disp)
    with pytest.raises(ValidationError):
        modes.ScanDataset([1.0], [1.0, 2.0], [1.0], L, W)


def test_photothermal_time():
    sio2, tio2 = BRAGG_STACK.layers
    expected = sio2.thickness ** 2 / sio2.diffusivity + tio2.thickness ** 2 / tio2.diffusivity
    assert modes.photothermal_tau(BRAGG_STACK, 1.0) == pytest.approx(expected)
    assert modes.photothermal_tau(BRAGG_STACK, 1.0) == pytest.approx(7.6e-9, rel=0.01)
    assert modes.photothermal_tau(BRAGG_STACK, math.sqrt(2)) == pytest.approx(3.8e-9, rel=0.01)
    z = modes.zeta_for_tau(4e-9)
    assert modes.photothermal_tau(BRAGG_STACK, z) == pytest.approx(4e-9)
    assert modes.heat_diffusion_length(1e-6, 4e-9, 2.0) == pytest.approx(2 * math.sqrt(4e-15))
    with pytest.raises(ValidationError):
        modes.photothermal_tau(BRAGG_STACK, 0.0)
