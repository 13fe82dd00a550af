import math

import numpy as np
import pytest
from scipy.integrate import quad

from boulware import (
    DomainError,
    RadialGrid,
    SpacetimeParams,
    effective_potential,
    horizon_gap,
    inverse_tortoise,
    tortoise,
)
from boulware.geometry import potential_derivatives


def bisect_inverse(rstar, M, lo=None, hi=None, iters=200):
    # independent oracle: plain bisection on tortoise(r) - rstar
    if lo is None:
        lo = 2.0 * M * (1.0 + 1e-300)
        lo = 2.0 * M + 1e-15
    if hi is None:
        hi = max(abs(rstar), 3.0 * M) + 10.0 * M + 10.0
    f = lambda r: r + 2 * M * math.log(r / (2 * M) - 1) - rstar
    while f(lo) > 0:
        lo = 2 * M + (lo - 2 * M) / 10
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def test_tortoise_log_argument_one():
    p = SpacetimeParams(M=1.0)
    assert tortoise(4.0, p) == pytest.approx(4.0, abs=1e-14)


def test_tortoise_flat_identity():
    p = SpacetimeParams(M=0.0)
    assert tortoise(10.0, p) == 10.0
    assert inverse_tortoise(10.0, p) == 10.0


def test_tortoise_r6_value_and_integral_oracle():
    p = SpacetimeParams(M=1.0)
    got = tortoise(6.0, p)
    assert got == pytest.approx(6.0 + 2.0 * math.log(2.0), rel=1e-15)
    # cross-check: integrate dr*/dr = 1/(1 - 2M/r) from r=4 to r=6
    inc, err = quad(lambda r: 1.0 / (1.0 - 2.0 / r), 4.0, 6.0, epsabs=1e-13)
    assert got - tortoise(4.0, p) == pytest.approx(inc, abs=1e-10)


def test_tortoise_domain():
    p = SpacetimeParams(M=1.0)
    with pytest.raises(DomainError):
        tortoise(2.0, p)
    with pytest.raises(DomainError):
        tortoise(1.5, p)


def test_inverse_examples():
    p = SpacetimeParams(M=1.0)
    assert inverse_tortoise(4.0, p) == pytest.approx(4.0, rel=1e-13)
    r = inverse_tortoise(-20.0, p)
    # leading-order form quoted for orientation; bisection oracle is the test
    assert r == pytest.approx(2.0 * (1.0 + math.exp((-20.0 - 2.0) / 2.0)), rel=1e-4)
    assert r == pytest.approx(bisect_inverse(-20.0, 1.0), rel=1e-12)


def test_inverse_roundtrip_sweep():
    # identity r -> r* -> r over the documented range (2M(1+1e-6), 1e4 M]
    for M in (0.5, 1.0, 2.0):
        p = SpacetimeParams(M=M)
        r = 2 * M * (1 + np.geomspace(1e-6, 5e3, 160))
        rs = tortoise(r, p)
        back = inverse_tortoise(rs, p)
        assert np.all(np.abs(back - r) <= 1e-12 * np.maximum(1.0, np.abs(r)))


def test_inverse_rstar_residual_where_representable():
    p = SpacetimeParams(M=1.0)
    for rs in (-18.0, 2.5, 3.9, 8.0, 140.0, 1e6):
        r = inverse_tortoise(rs, p)
        assert r > 2.0
        assert tortoise(r, p) == pytest.approx(rs, abs=1e-12 * max(1.0, abs(rs)))


def test_horizon_gap_deep():
    p = SpacetimeParams(M=1.0)
    # independent check: theta = e^s + s with s = ln(x/2M)
    for rs in (-1300.0, -300.0, -80.0, -20.0, 5.0):
        x = horizon_gap(rs, p)
        s = math.log(x / 2.0)
        theta = (rs - 2.0) / 2.0
        assert math.exp(s) + s == pytest.approx(theta, abs=1e-12 * max(1.0, abs(theta)))
    # saturating input refuses to hand back r = 2M
    with pytest.raises(DomainError):
        inverse_tortoise(-200.0, p)
    with pytest.raises(DomainError):
        horizon_gap(-2000.0, p)


def test_tortoise_derivative_matches_metric_factor():
    p = SpacetimeParams(M=1.0)
    r = np.linspace(2.6, 400.0, 90)
    h = 1e-6 * np.maximum(1.0, r)
    fd = (tortoise(r + h, p) - tortoise(r - h, p)) / (2 * h)
    assert np.allclose(fd, 1.0 / (1.0 - 2.0 / r), rtol=1e-6)


def test_potential_examples():
    p = SpacetimeParams(M=1.0, m=1.0)
    assert effective_potential(2.0 + 1e-12, 3, p) == pytest.approx(0.0, abs=1e-11)
    flat = SpacetimeParams(M=0.0, m=1.0)
    assert effective_potential(7.7, 0, flat) == pytest.approx(1.0, rel=1e-15)
    # direct arithmetic: (1/2)*(2/16 + 2/64 + 1)
    assert effective_potential(4.0, 1, p) == pytest.approx(0.578125, abs=1e-15)


def test_potential_nonnegative_and_limits():
    p = SpacetimeParams(M=1.0, m=1.0)
    r = 2.0 + np.geomspace(1e-8, 1e4, 200)
    for l in (0, 1, 5):
        V = effective_potential(r, l, p)
        assert np.all(V >= 0.0)
    assert effective_potential(1e8, 2, p) == pytest.approx(1.0, rel=1e-7)


def test_potential_domain_errors():
    p = SpacetimeParams(M=1.0)
    with pytest.raises(DomainError):
        effective_potential(1.9, 0, p)
    with pytest.raises(DomainError):
        effective_potential(5.0, -1, p)


def test_potential_derivatives_fd():
    p = SpacetimeParams(M=1.0, m=1.0)
    r = np.linspace(3.0, 60.0, 25)
    V, Vp, Vpp = potential_derivatives(r, 2, p)
    assert np.allclose(V, effective_potential(r, 2, p), rtol=1e-14)
    h = 1e-5 * r
    fd1 = (effective_potential(r + h, 2, p) - effective_potential(r - h, 2, p)) / (2 * h)
    fd2 = (effective_potential(r + h, 2, p) - 2 * V + effective_potential(r - h, 2, p)) / h**2
    assert np.allclose(Vp, fd1, rtol=2e-8, atol=1e-12)
    assert np.allclose(Vpp, fd2, rtol=2e-4, atol=1e-10)


def test_params_validation():
    with pytest.raises(DomainError):
        SpacetimeParams(M=-1.0)
    with pytest.raises(DomainError):
        SpacetimeParams(M=1.0, m=0.0)
    p = SpacetimeParams(M=0.5)
    assert p.horizon == 1.0


def test_radial_grid_roundtrip():
    p = SpacetimeParams(M=1.0)
    g = RadialGrid.from_radii(np.linspace(3.0, 30.0, 40), p)
    assert len(g) == 40
    assert np.all(np.diff(g.points) > 0)
    assert np.allclose(g.radii, np.linspace(3.0, 30.0, 40), rtol=1e-14)
    g2 = RadialGrid.from_rstar(np.linspace(-80.0, 50.0, 33), p)
    assert np.all(g2.gap > 0.0)
    assert np.all(np.diff(g2.gap) > 0.0)
    with pytest.raises(DomainError):
        RadialGrid(points=np.array([0.0, 1.0]), gap=np.array([2.0, 1.0]), params=p)
    with pytest.raises(DomainError):
        # wrong pairing
        RadialGrid(points=np.array([0.0, 1.0]), gap=np.array([1.0, 2.0]), params=p)
