import cmath
import math

import mpmath
import numpy as np
import pytest
from scipy.special import eval_legendre, spherical_in

from boulware import (BranchError, DomainError, RadialGrid, SpacetimeParams,
                      ThresholdError)
from boulware import radial
from boulware.flat import (CAL, FlatPoint, bessel_k1, chord_distance,
                           flat_channel_green, flat_limit_compare,
                           flat_thermal_closed, flat_two_point,
                           flat_wightman_closed, flat_wightman_integral,
                           rho_flat, _sigma)
from boulware.greens import green_frequency
from boulware.thermal import kms_strip_check


def test_k1_against_mpmath():
    pts = [0.05, 0.7, 1.99, 2.0, 2.01, 5.0, 15.9, 16.0, 16.1, 40.0, 300.0,
           0.3 + 0.2j, 1.5 - 1.2j, 2.05 + 0.44j, 6.0 + 4.0j, 14.0 + 7.0j,
           40.0 - 15.0j]
    with mpmath.workdps(30):
        for z in pts:
            want = complex(mpmath.besselk(1, mpmath.mpc(z)))
            assert abs(bessel_k1(z) - want) / abs(want) < 1e-12, z


def test_k1_domain():
    for z in (0.0, -1.0, -0.5 + 2.0j):
        with pytest.raises(DomainError):
            bessel_k1(z)


def test_flat_point_validation():
    FlatPoint(t=-0.1j, R=0.0, m=1.0)
    for kw in ({"t": 0.5, "R": 1.0, "m": 1.0},
               {"t": 0.5 + 0.1j, "R": 1.0, "m": 1.0},
               {"t": -0.1j, "R": -1.0, "m": 1.0},
               {"t": -0.1j, "R": 1.0, "m": 0.0}):
        with pytest.raises(DomainError):
            FlatPoint(**kw)


def test_closed_euclidean_point():
    # t = -2i, R = 0: sigma = 2, value = K1(2)/(8 pi^2), real positive
    val = flat_wightman_closed(FlatPoint(t=-2.0j, R=0.0, m=1.0))
    with mpmath.workdps(30):
        want = float(mpmath.besselk(1, 2)) / (8.0 * math.pi ** 2)
    assert val.imag == pytest.approx(0.0, abs=1e-18)
    assert val.real == pytest.approx(want, rel=1e-12)
    assert val.real > 0.0


def test_sigma_branch_guard():
    # real timelike separation sits on the cut and must be refused
    with pytest.raises(BranchError):
        _sigma(2.0, 1.0)
    # regulated version of the same point is fine
    assert _sigma(2.0 - 1e-3j, 1.0).real > 0.0


def test_integral_matches_closed_times_cal():
    pt = FlatPoint(t=-0.5j, R=2.0, m=1.0)
    got = flat_wightman_integral(pt)
    want = CAL * flat_wightman_closed(pt)
    assert abs(got.value - want) / abs(want) < 1e-8
    assert CAL == pytest.approx(4.0 * math.pi ** 2, rel=1e-15)


def test_calibration_ratio_constant():
    rng = np.random.default_rng(11)
    for _ in range(10):
        pt = FlatPoint(t=complex(rng.uniform(-1, 1), -rng.uniform(0.2, 1.5)),
                       R=rng.uniform(0.0, 3.0), m=1.0)
        ratio = flat_wightman_integral(pt).value / flat_wightman_closed(pt)
        assert abs(ratio - CAL) / CAL < 1e-8


def test_integral_conjugation():
    a = flat_wightman_integral(FlatPoint(t=-0.3 - 0.2j, R=1.3, m=1.0))
    b = flat_wightman_integral(FlatPoint(t=0.3 - 0.2j, R=1.3, m=1.0))
    assert abs(a.value - b.value.conjugate()) < 1e-10 * abs(a.value)


def test_integral_small_R_continuity():
    vals = {}
    for R in (1e-3, 1e-4):
        pt = FlatPoint(t=-0.5j, R=R, m=1.0)
        got = flat_wightman_integral(pt)
        want = CAL * flat_wightman_closed(pt)
        assert abs(got.value - want) / abs(want) < 1e-9
        vals[R] = got.value
    # physical R-dependence is O(R^2); the two probes agree to that order
    assert abs(vals[1e-3] - vals[1e-4]) / abs(vals[1e-3]) < 1e-5


def test_channel_closed_forms():
    q = math.sqrt(1.2 ** 2 - 1.0)
    r, rp = 6.0, 9.0
    want = math.sin(q * r) * cmath.exp(1j * q * rp) / (q * r * rp)
    got = flat_channel_green(1.2, 0, 1.0, r, rp)
    assert abs(got - want) / abs(want) < 1e-13
    b = math.sqrt(1.0 - 0.5 ** 2)
    want = math.sinh(b * r) * math.exp(-b * rp) / (b * r * rp)
    got = flat_channel_green(0.5, 0, 1.0, r, rp)
    assert abs(got - want) / abs(want) < 1e-13
    # decaying in the greater radius
    assert abs(flat_channel_green(0.5, 0, 1.0, 6.0, 14.0)) < abs(got)
    assert flat_channel_green(1.2, 3, 1.0, 9.0, 6.0) == flat_channel_green(1.2, 3, 1.0, 6.0, 9.0)
    with pytest.raises(ThresholdError):
        flat_channel_green(1.0, 0, 1.0, 6.0, 9.0)
    for args in ((1.2, -1, 1.0, 6.0, 9.0), (1.2, 0, 1.0, -6.0, 9.0),
                 (-1.2, 0, 1.0, 6.0, 9.0)):
        with pytest.raises(DomainError):
            flat_channel_green(*args)


def test_channel_sub_threshold_ode_route():
    # independent route: phi from the M=0 integrator, regular solution
    # assembled from the modified spherical Bessel closed form
    om, l, m = 0.8, 1, 1.0
    b = math.sqrt(m * m - om * om)
    params = SpacetimeParams(M=0.0, m=m)
    radii = np.linspace(5.0, 12.0, 15)
    grid = RadialGrid.from_radii(radii, params)
    phi = radial.solve_mode("infinity", om, l, params, grid, tol=1e-10)
    x = b * radii
    u = radii * spherical_in(l, x)
    # d(r i_l(br))/dr = i_l + x i_l'; d/dr* = d/dr at M = 0
    du = spherical_in(l, x) + x * spherical_in(l, x, derivative=True)
    psi = radial.ModeSolution(om, l, "origin-regular", grid,
                              u.astype(complex), du.astype(complex),
                              grid.points[0], 0, params, 1e-10, "linear")
    g = green_frequency(phi, psi, [(6.0, 10.0), (8.0, 8.0)])
    for (r, rp) in [(6.0, 10.0), (8.0, 8.0)]:
        want = flat_channel_green(om, l, m, r, rp)
        assert abs(g.value(r, rp) - want) / abs(want) < 1e-8


def test_rho_flat_is_collapsed_channel_sum():
    om, m, r, rp, gam = 1.7, 1.0, 10.0, 12.0, 0.3
    total = 0.0
    for l in range(120):
        total += ((2 * l + 1) / (4 * math.pi) * eval_legendre(l, math.cos(gam))
                  * flat_channel_green(om, l, m, r, rp).imag)
    want = rho_flat(om, m, r, rp, gam)
    assert abs(total / math.pi - want) / abs(want) < 1e-12
    # diagonal and threshold behavior
    diag = sum((2 * l + 1) / (4 * math.pi) * flat_channel_green(om, l, m, 9.0, 9.0).imag
               for l in range(80))
    q = math.sqrt(om * om - 1.0)
    assert diag / math.pi == pytest.approx(q / (4 * math.pi ** 2), rel=1e-12)
    assert rho_flat(om, m, 9.0, 9.0) == pytest.approx(q / (4 * math.pi ** 2), rel=1e-14)
    assert rho_flat(0.5, m, 9.0, 9.0) == 0.0


def test_ground_spectral_matches_closed():
    cases = [(-0.5j, 10.0, 12.0, 0.0), (0.4 - 0.25j, 8.0, 8.5, 0.0),
             (-0.3j, 5.0, 5.0, 0.1), (-0.2j, 7.0, 7.0, 0.0)]
    for (tau, r, rp, gam) in cases:
        got = flat_two_point(tau, r, rp, 1.0, gamma=gam)
        D = chord_distance(r, rp, gam)
        want = flat_wightman_closed(FlatPoint(t=tau, R=D, m=1.0))
        assert abs(got.value - want) / abs(want) < 1e-10


def test_thermal_spectral_matches_image_sum():
    for (t, beta, eps, R) in [(0.3, 2.0, 0.2, 1.0), (0.0, 4.0, 0.4, 0.0),
                              (0.5, 1.5, 0.3, 2.0)]:
        tau = t - 1j * eps
        got = flat_two_point(tau, 10.0, 10.0 + R, 1.0, beta=beta)
        want = flat_thermal_closed(tau, R, 1.0, beta)
        assert abs(got.value - want) / abs(want) < 1e-10
    with pytest.raises(DomainError):
        flat_two_point(0.3 - 2.5j, 10.0, 11.0, 1.0, beta=2.0)
    with pytest.raises(DomainError):
        flat_thermal_closed(0.3 + 0.1j, 1.0, 1.0, 2.0)


def test_thermal_dominates_ground_on_diagonal():
    tau = -0.15j
    ground = flat_two_point(tau, 9.0, 9.0, 1.0).value
    for beta in (1.0, 2.0, 5.0):
        thermal = flat_two_point(tau, 9.0, 9.0, 1.0, beta=beta).value
        assert thermal.real > ground.real


def test_flat_kms_strip_identity():
    beta, eps, t, R = 2.0, 0.2, 0.5, 1.0
    # image-sum route: the identity is a termwise rearrangement
    a = flat_thermal_closed(t - 1j * (beta - eps), R, 1.0, beta)
    b = flat_thermal_closed(-t - 1j * eps, R, 1.0, beta)
    assert abs(a - b) / abs(a) < 1e-12
    # spectral-quadrature route through the generic checker
    rep = kms_strip_check(
        lambda tau, r, rp: flat_two_point(tau, r, rp, 1.0, beta=beta),
        t, beta, eps, 10.0, 11.0)
    assert rep["rel_difference"] < 1e-6


def test_exponential_clustering_rate():
    # ln|W| = -m R - p ln R + c over R in [5, 15]
    R = np.linspace(5.0, 15.0, 21)
    logs = [math.log(abs(flat_wightman_closed(FlatPoint(t=-0.01j, R=float(x), m=1.0))))
            for x in R]
    A = np.column_stack([-R, -np.log(R), np.ones_like(R)])
    kappa, p, c = np.linalg.lstsq(A, np.array(logs), rcond=None)[0]
    assert abs(kappa - 1.0) < 0.02


def test_flat_limit_compare_channels():
    probes = [(1.2, 0, 60.0, 70.0), (1.2, 0, 50.0, 60.0)]
    rep3 = flat_limit_compare(1e-3, 1.0, channel_probes=probes)
    assert rep3["max_deviation"] <= 1e-2
    rep2 = flat_limit_compare(1e-2, 1.0, channel_probes=probes)
    for c3, c2 in zip(rep3["channels"], rep2["channels"]):
        assert c2["deviation"] > c3["deviation"]
    rep0 = flat_limit_compare(0.0, 1.0, channel_probes=probes[:1])
    assert rep0["max_deviation"] == 0.0
    with pytest.raises(DomainError):
        flat_limit_compare(0.5, 1.0, channel_probes=probes)
