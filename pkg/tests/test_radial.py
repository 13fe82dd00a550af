import dataclasses
import math

import numpy as np
import pytest
from scipy.special import spherical_jn, spherical_yn

from boulware import (DegenerateModesError, DomainError, RadialGrid,
                      SpacetimeParams, ThresholdError, WindowTooSmall)
from boulware import radial

FLAT = SpacetimeParams(M=0.0, m=1.0)
UNIT = SpacetimeParams(M=1.0, m=1.0)


def hankel1(l, x, d=False):
    return spherical_jn(l, x, d) + 1j * spherical_yn(l, x, d)


# ---------------------------------------------------------------- seeds

def test_phi_seed_flat_swave_exact():
    om = math.sqrt(2.0)
    s = radial.seed_phi_infinity(om, 0, FLAT, r_seed=120.0)
    q = 1.0
    assert abs(s.u - np.exp(1j * q * 120.0) / (q * 1j)) < 1e-12
    assert abs(s.z - 1j * q) < 1e-13
    assert s.boundary == radial.INFINITY_OUTGOING


def test_phi_seed_flat_matches_hankel():
    # flat outgoing solution is r h_l(qr); the seed normalization makes the
    # ratio exactly one
    om, l, r = 1.8, 3, 90.0
    q = math.sqrt(om * om - 1.0)
    s = radial.seed_phi_infinity(om, l, FLAT, r_seed=r)
    assert abs(s.u / (r * hankel1(l, q * r)) - 1.0) < 1e-10
    zx = (q * hankel1(l, q * r) + q * q * r * hankel1(l, q * r, True)) \
        / (q * r * hankel1(l, q * r))
    assert abs(s.z - zx) < 1e-12


def test_phi_seed_phase_derivative_log_law():
    om, r = math.sqrt(2.0), 200.0
    s = radial.seed_phi_infinity(om, 0, UNIT, r_seed=r)
    f = 1.0 - 2.0 / r
    dphase_dr = (s.z / f).imag
    # q + (M/q)(2 omega^2 - m^2)/r = 1 + 3/r, up to O(1/r^2)
    assert abs(dphase_dr - (1.0 + 3.0 / r)) < 1e-3


def test_phi_seed_subthreshold_decay_approaches_b():
    b = math.sqrt(0.75)
    devs = []
    for r in (200.0, 400.0):
        s = radial.seed_phi_infinity(0.5, 0, UNIT, r_seed=r)
        f = 1.0 - 2.0 / r
        devs.append(abs(-(s.z / f).real - b))
    assert devs[1] < devs[0]
    assert devs[0] < 5e-3  # remaining c/r tail
    s = radial.seed_phi_infinity(0.5, 0, UNIT, r_seed=400.0)
    assert s.boundary == radial.INFINITY_DECAYING


def test_phi_seed_rejections():
    with pytest.raises(ThresholdError):
        radial.seed_phi_infinity(1.0, 0, UNIT)
    with pytest.raises(ThresholdError):
        radial.seed_phi_infinity(math.sqrt(1.0 + 5e-10), 0, UNIT)
    with pytest.raises(DomainError):
        radial.seed_phi_infinity(1.5, 0, UNIT, r_seed=40.0)  # below 50*2M
    with pytest.raises(DomainError):
        radial.seed_phi_infinity(1.5, -1, UNIT)
    with pytest.raises(DomainError):
        radial.seed_phi_infinity(1.5, 0, UNIT, order=0)


def test_psi_seed_phase_and_modulus():
    s = radial.seed_psi_horizon(0.7, 0, UNIT, rstar_seed=-40.0)
    assert abs(s.z.imag + 0.7) < 1e-8
    assert abs(abs(s.u) - 1.0) < 1e-6
    s2 = radial.seed_psi_horizon(0.7, 2, UNIT, rstar_seed=-40.0)
    assert abs(abs(s2.u) - 1.0) < 1e-6
    # two truncation orders agree (the recursion has converged)
    s3 = radial.seed_psi_horizon(0.7, 2, UNIT, rstar_seed=-40.0, order=5)
    assert abs(s3.u - s2.u) < 1e-10


def test_psi_seed_omega_zero_real():
    s = radial.seed_psi_horizon(0.0, 1, UNIT, rstar_seed=-40.0)
    assert s.u.imag == 0.0
    assert abs(s.u.real - 1.0) < 1e-6


def test_psi_seed_rejections():
    with pytest.raises(DomainError):
        radial.seed_psi_horizon(0.7, 0, FLAT)
    with pytest.raises(DomainError):
        radial.seed_psi_horizon(0.7, 0, UNIT, rstar_seed=-20.0)  # > -15*2M


# ----------------------------------------------------------- integration

def test_integrate_flat_swave_exact():
    om = math.sqrt(2.0)
    grid = RadialGrid.from_radii(np.linspace(10.0, 100.0, 46), FLAT)
    seed = radial.seed_phi_infinity(om, 0, FLAT, r_seed=100.0)
    mode = radial.integrate_mode(seed, grid, FLAT, tol=1e-10)
    exact = np.exp(1j * grid.points) / 1j
    assert np.max(np.abs(mode.u - exact) / np.abs(exact)) < 1e-10


def test_integrate_against_fixed_step_oracle():
    # independently-written fixed-step RK4 at small h, flat massive l=2
    om, l = 1.8, 2
    grid = RadialGrid.from_radii(np.array([20.0, 30.0, 40.0]), FLAT)
    seed = radial.seed_phi_infinity(om, l, FLAT, r_seed=90.0)
    ext = RadialGrid.from_radii(np.array([20.0, 30.0, 40.0, 90.0]), FLAT)
    mode = radial.integrate_mode(seed, ext, FLAT, tol=1e-11, rep="linear")

    ll = l * (l + 1.0)

    def rhs(r, y):
        wq = ll / (r * r) + 1.0 - om * om
        return np.array([y[2], y[3], wq * y[0], wq * y[1]])

    y = np.array([seed.u.real, seed.u.imag, seed.du.real, seed.du.imag])
    r = 90.0
    h = -0.002
    vals = {}
    targets = [40.0, 30.0, 20.0]
    for tgt in targets:
        n = int(round((tgt - r) / h))
        for _ in range(n):
            k1 = rhs(r, y)
            k2 = rhs(r + h / 2, y + h / 2 * k1)
            k3 = rhs(r + h / 2, y + h / 2 * k2)
            k4 = rhs(r + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            r += h
        vals[tgt] = y[0] + 1j * y[1]
    for i, tgt in enumerate([20.0, 30.0, 40.0]):
        got = mode.u[i]
        assert abs(got - vals[tgt]) / abs(vals[tgt]) < 1e-8


def test_integrate_residual_bound():
    grid = RadialGrid.from_rstar(np.linspace(-20.0, 40.0, 30), UNIT)
    mode = radial.solve_mode("infinity", math.sqrt(2.0), 0, UNIT, grid,
                             tol=1e-8)
    rep = radial.residual_check(mode)
    assert rep["passed"]
    assert rep["max_scaled"] <= 10.0 * mode.tol


def test_integrate_monotonic_growth_subthreshold():
    grid = RadialGrid.from_radii(np.linspace(20.0, 120.0, 100), UNIT)
    mode = radial.solve_mode("infinity", 0.5, 0, UNIT, grid, tol=1e-9)
    lm = mode.log_magnitude()[:len(grid)]
    assert np.all(np.diff(lm) < 0.0)  # grows toward the horizon


def test_integrate_validation():
    grid = RadialGrid.from_radii(np.linspace(10.0, 50.0, 20), FLAT)
    seed = radial.seed_phi_infinity(1.5, 0, FLAT, r_seed=100.0)
    with pytest.raises(DomainError):
        radial.integrate_mode(seed, grid, FLAT)  # seed not an endpoint
    grid2 = RadialGrid.from_radii(np.linspace(10.0, 100.0, 20), FLAT)
    with pytest.raises(DomainError):
        radial.integrate_mode(seed, grid2, FLAT, tol=1e-3)
    with pytest.raises(DomainError):
        radial.integrate_mode(seed, grid2, FLAT, tol=1e-13)


# ------------------------------------------------------------- wronskian

def _pair(om, l, params, tol=1e-9):
    grid = RadialGrid.from_rstar(np.linspace(-30.0, 60.0, 64), params)
    phi = radial.solve_mode("infinity", om, l, params, grid, tol=tol)
    psi = radial.solve_mode("horizon", om, l, params, grid, tol=tol)
    return phi, psi


def test_wronskian_constancy_and_refinement():
    phi, psi = _pair(1.3, 0, UNIT)
    wr = radial.wronskian(phi, psi)
    assert wr.spread <= 1e-6
    phi2, psi2 = _pair(1.3, 0, UNIT, tol=1e-10)
    wr2 = radial.wronskian(phi2, psi2)
    assert abs(wr.value - wr2.value) / abs(wr2.value) <= 1e-6


def test_wronskian_bilinearity():
    phi, psi = _pair(0.9, 1, UNIT)
    w0 = radial.wronskian(phi, psi).value
    phi_s = dataclasses.replace(phi, u=2.0 * phi.u, du=2.0 * phi.du,
                                w=phi.w + math.log(2.0))
    psi_s = dataclasses.replace(psi, u=-3.0 * psi.u, du=-3.0 * psi.du)
    w1 = radial.wronskian(phi_s, psi_s).value
    assert abs(w1 - (-6.0) * w0) / abs(w0) < 1e-12


def test_wronskian_degenerate():
    phi, _ = _pair(1.3, 0, UNIT)
    clone = dataclasses.replace(phi)
    with pytest.raises(DegenerateModesError):
        radial.wronskian(phi, clone)


def test_seed_order_convergence():
    grid = RadialGrid.from_rstar(np.linspace(20.0, 60.0, 24), UNIT)
    u_at = []
    for order in (8, 10):
        mode = radial.solve_mode("infinity", 1.2, 1, UNIT, grid, tol=1e-9,
                                 r_seed=120.0, order=order)
        u_at.append(mode.u[0])
    assert abs(u_at[0] - u_at[1]) <= 1e-9 * abs(u_at[1])


def test_conjugation_symmetry():
    phi_p, psi_p = _pair(1.3, 2, UNIT)
    phi_m, psi_m = _pair(-1.3, 2, UNIT)
    assert np.max(np.abs(phi_m.u - np.conj(phi_p.u))) < 1e-12
    assert np.max(np.abs(psi_m.u - np.conj(psi_p.u))) < 1e-12


# ------------------------------------------------------------------ fits

def test_fit_phase_super_threshold():
    grid = RadialGrid.from_radii(np.linspace(100.0, 300.0, 64), UNIT)
    mode = radial.solve_mode("infinity", 1.2, 0, UNIT, grid, tol=1e-10)
    fit = radial.fit_asymptotics(mode, (100.0, 300.0))
    q = math.sqrt(1.2 ** 2 - 1.0)
    logc = (2.0 * 1.2 ** 2 - 1.0) / q
    assert abs(fit.phase_slope - q) / q < 1e-2
    assert abs(fit.power_exponent - logc) / logc < 1e-2
    assert fit.residual <= 1e-3
    assert fit.model == "phase-outgoing"


def test_fit_decay_sub_threshold():
    grid = RadialGrid.from_radii(np.linspace(100.0, 300.0, 64), UNIT)
    mode = radial.solve_mode("infinity", 0.5, 1, UNIT, grid, tol=1e-10)
    fit = radial.fit_asymptotics(mode, (100.0, 300.0))
    b = math.sqrt(0.75)
    assert abs(fit.decay_rate - b) / b < 0.02
    # the derived power exponent c = M(m^2 - 2 omega^2)/b against the fit
    c = (1.0 - 2.0 * 0.25) / b
    assert abs(fit.power_exponent - c) / abs(c) < 0.05


def test_fit_psi_phase():
    grid = RadialGrid.from_rstar(np.linspace(-80.0, -40.0, 64), UNIT)
    mode = radial.solve_mode("horizon", 0.7, 0, UNIT, grid, tol=1e-10,
                             rstar_seed=-82.0)
    fit = radial.fit_asymptotics(mode, (-80.0, -40.0))
    assert abs(fit.phase_slope + 0.7) / 0.7 < 1e-3


def test_fit_window_errors():
    grid = RadialGrid.from_radii(np.linspace(100.0, 300.0, 64), UNIT)
    mode = radial.solve_mode("infinity", 1.2, 0, UNIT, grid, tol=1e-9)
    with pytest.raises(WindowTooSmall):
        radial.fit_asymptotics(mode, (100.0, 130.0))  # <16 samples
    with pytest.raises(DomainError):
        radial.fit_asymptotics(mode, (60.0, 300.0))  # below asymptotic floor


# --------------------------------------------------- internal WKB seeding

def test_wkb_seed_matches_series_seed():
    # z = u'/u is normalization-free; the two seed families must agree
    om, l = 2.5, 40
    grid = RadialGrid.from_radii(np.linspace(50.0, 64.0, 18), UNIT)
    via_series = radial.solve_mode("infinity", om, l, UNIT, grid, tol=1e-10)
    seed = radial._seed_phi_wkb(om, l, UNIT, 70.0)
    ext = RadialGrid.from_radii(np.append(np.linspace(50.0, 64.0, 18), 70.0),
                                UNIT)
    via_wkb = radial.integrate_mode(seed, ext, UNIT, tol=1e-10)
    z_a = via_series.z[:5]
    z_b = via_wkb.z[:5]
    assert np.max(np.abs(z_a - z_b)) < 1e-6
