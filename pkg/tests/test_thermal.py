import math

import mpmath
import numpy as np
import pytest

from boulware import DomainError, SpacetimeParams
from boulware.greens import solve_channel
from boulware.thermal import (SpectralDensity, ThermalParams, bose_weight,
                              detailed_balance_check, ground_positivity_check,
                              kms_strip_check, thermal_green_frequency)


def test_thermal_params():
    tp = ThermalParams(beta=4.0)
    assert tp.epsilon == pytest.approx(0.4)
    assert ThermalParams(beta=2.0, epsilon=0.9).epsilon == 0.9
    for bad in (lambda: ThermalParams(beta=0.0),
                lambda: ThermalParams(beta=-1.0),
                lambda: ThermalParams(beta=2.0, epsilon=0.0),
                lambda: ThermalParams(beta=2.0, epsilon=1.0),
                lambda: ThermalParams(beta=2.0, epsilon=1.5)):
        with pytest.raises(DomainError):
            bad()


def test_bose_weight_values():
    # beta*omega = ln 2 gives exactly 1/(1 - 1/2)
    assert bose_weight(math.log(2.0), 1.0) == pytest.approx(2.0, rel=1e-14)
    assert bose_weight(1.0, 2.0) == pytest.approx(1.0 / (1.0 - math.exp(-2.0)), rel=1e-14)
    # zero-temperature limit
    w = bose_weight(1.0, 50.0)
    bound = math.exp(-50.0) / (1.0 - math.exp(-50.0))
    assert abs(w - 1.0) <= bound * (1.0 + 1e-12)
    assert bose_weight(1.0, 2000.0) == 1.0


def test_bose_weight_small_argument():
    x = 1e-8
    with mpmath.workdps(40):
        want = float(1.0 / (1.0 - mpmath.e ** (-mpmath.mpf(x))))
    got = bose_weight(x, 1.0)
    assert abs(got - want) / want < 1e-10
    # leading behavior 1/x + 1/2
    assert got == pytest.approx(1.0 / x + 0.5, rel=1e-7)


def test_bose_weight_properties():
    om = np.array([0.2, 1.0, 3.0])
    w = bose_weight(om, 1.5)
    assert w.shape == om.shape
    assert np.all(w > 1.0)
    # monotone decreasing in beta at fixed omega
    betas = [0.5, 1.0, 2.0, 4.0]
    vals = [bose_weight(1.0, b) for b in betas]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    for bad in (lambda: bose_weight(0.0, 1.0),
                lambda: bose_weight(-1.0, 1.0),
                lambda: bose_weight(1.0, 0.0)):
        with pytest.raises(DomainError):
            bad()


def test_thermal_green_frequency_ratio():
    g = solve_channel(1.3, 0, SpacetimeParams(M=1.0, m=1.0),
                      [(10.0, 20.0), (15.0, 15.0)], tol=1e-8)
    beta = 2.0
    gt = thermal_green_frequency(g, beta)
    w = bose_weight(1.3, beta)
    for pair, val in g.values.items():
        assert gt.values[pair] == w * val
    assert gt.omega == g.omega and gt.wronskian == g.wronskian


def test_spectral_density_validation():
    good = SpectralDensity(np.array([1.0, 2.0]), np.array([0.1, -0.2]), (5.0, 5.0))
    assert good.is_diagonal
    om, rh = good.extended()
    assert np.allclose(om, [-2.0, -1.0, 1.0, 2.0])
    assert np.allclose(rh, [0.2, -0.1, 0.1, -0.2])
    cases = [
        (np.array([-1.0, 2.0]), np.array([0.1, 0.2])),
        (np.array([2.0, 1.0]), np.array([0.1, 0.2])),
        (np.array([1.0, 2.0]), np.array([0.1, np.nan])),
        (np.array([1.0, 2.0]), np.array([0.1])),
        (np.array([]), np.array([])),
    ]
    for om_g, rh_g in cases:
        with pytest.raises(DomainError):
            SpectralDensity(om_g, rh_g, (5.0, 5.0))


def test_detailed_balance_random_tables():
    rng = np.random.default_rng(20260825)
    worst = 0.0
    for _ in range(100):
        n = rng.integers(5, 60)
        om = np.sort(rng.uniform(0.01, 40.0, size=n))
        om = np.unique(om)
        rho = rng.standard_normal(om.size)
        s = SpectralDensity(om, rho, (10.0, 12.0))
        for beta in (0.5, 2.0, 10.0):
            worst = max(worst, detailed_balance_check(s, beta))
    assert worst <= 1e-12


def test_detailed_balance_edge_cases():
    om = np.array([1.0, 2.0, 3.0])
    zero = SpectralDensity(om, np.zeros(3), (4.0, 4.0))
    assert detailed_balance_check(zero, 2.0) == 0.0
    # beta*omega beyond the exp overflow point exercises the log branch
    s = SpectralDensity(np.array([1.0, 800.0]), np.array([0.3, -0.7]), (4.0, 4.0))
    assert detailed_balance_check(s, 1.5) <= 1e-12


def test_kms_strip_plumbing():
    # evaluator even in the real part of tau and symmetric in (r, r'):
    # the identity holds exactly at beta = 2 eps_mid... use a spectral toy
    om = np.linspace(0.5, 8.0, 40)
    rho = np.exp(-om) * np.sin(om)
    beta = 2.0

    def evaluator(tau, r, rp):
        n = bose_weight(om, beta)
        vals = rho * ((n) * np.exp(-1j * om * tau) + (n - 1.0) * np.exp(1j * om * tau))
        return complex(np.trapezoid(vals, om))

    rep = kms_strip_check(evaluator, 0.37, beta, 0.25, 7.0, 7.0)
    assert rep["difference"] <= 1e-14 * max(abs(rep["lhs"]), 1.0)
    assert rep["passed"] is None  # plain complex return carries no error bars

    class Res:
        def __init__(self, v):
            self.value = v
            self.quad_error = 5e-9
            self.lsum_error = 1e-10

    rep2 = kms_strip_check(lambda tau, r, rp: Res(evaluator(tau, r, rp)),
                           0.37, beta, 0.25, 7.0, 7.0)
    assert rep2["combined_error"] == pytest.approx(2 * (5e-9 + 1e-10))
    assert rep2["passed"] is True
    with pytest.raises(DomainError):
        kms_strip_check(evaluator, 0.1, beta, 2.5, 7.0, 7.0)


def test_ground_positivity():
    om = np.linspace(1.01, 3.0, 50)
    q = np.sqrt(om * om - 1.0)
    rho = q / (4.0 * math.pi ** 2)  # flat diagonal density, nonnegative
    s = SpectralDensity(om, rho, (20.0, 20.0))
    rep = ground_positivity_check(s)
    assert rep["verdict"] is True
    flipped = SpectralDensity(om, -rho, (20.0, 20.0))
    assert ground_positivity_check(flipped)["verdict"] is False
    # tiny negative excursion within tolerance still passes
    dip = rho.copy()
    dip[10] = -1e-9 * np.max(rho)
    rep3 = ground_positivity_check(SpectralDensity(om, dip, (20.0, 20.0)))
    assert rep3["verdict"] is True and rep3["min_rho"] < 0.0
    with pytest.raises(DomainError):
        ground_positivity_check(SpectralDensity(om, rho, (20.0, 21.0)))
