"""Minkowski baseline for the Schwarzschild machinery.

Closed forms for the regulated massive Wightman function,

    W(tau, R) = (1/(4 pi^2)) (m / sigma) K_1(m sigma),
    sigma = principal sqrt(R^2 - tau^2),   Im tau < 0,

its one-dimensional momentum-integral sibling in the source convention
(overall 1/(2 pi), hence a fixed ratio CAL = 4 pi^2 to the closed form),
the per-channel frequency Green's functions (spherical Bessel products),
the collapsed spectral kernel, thermal correlators by image summation,
and the M -> 0 cross-check of the curved-space pipeline.

K_1 is implemented locally over the right half plane: power series for
|z| <= 2, a trapezoidal integral representation for 2 < |z| < 16, and the
divergent asymptotic series truncated at its smallest term for |z| >= 16.
Each regime holds ~1e-12 relative accuracy on the arguments that arise
here (|arg z| well inside (-pi/2, pi/2)).
"""

import cmath
import dataclasses
import math

import numpy as np
from scipy.integrate import quad
from scipy.special import (spherical_in, spherical_jn, spherical_kn,
                           spherical_yn)

from .errors import BranchError, DomainError, ThresholdError
from .geometry import SpacetimeParams, tortoise
from .radial import THRESHOLD_GAP

_EULER_GAMMA = 0.5772156649015328606

# frozen once: paper-convention integral / standard closed form = 4 pi^2
CAL = 39.478417604357434


@dataclasses.dataclass(frozen=True)
class FlatPoint:
    """Regulated flat-spacetime separation: complex time t, distance R."""

    t: complex
    R: float
    m: float

    def __post_init__(self):
        if not (self.t.imag < 0.0):
            raise DomainError(f"Im t must be negative, got {self.t}")
        if not (self.R >= 0.0):
            raise DomainError(f"R must be >= 0, got {self.R}")
        if not (self.m > 0.0):
            raise DomainError(f"m must be positive, got {self.m}")


def _k1_series(z):
    # K1 = 1/z + I1(z) ln(z/2) - (z/4) sum_k [psi(k+1)+psi(k+2)] c_k,
    # c_k = (z^2/4)^k / (k! (k+1)!)
    z2 = 0.25 * z * z
    c = 1.0 + 0.0j
    i1_sum = c
    d1 = -_EULER_GAMMA          # psi(1)
    d2 = 1.0 - _EULER_GAMMA     # psi(2)
    psi_sum = c * (d1 + d2)
    for k in range(1, 80):
        c *= z2 / (k * (k + 1))
        i1_sum += c
        d1 += 1.0 / k
        d2 += 1.0 / (k + 1)
        term = c * (d1 + d2)
        psi_sum += term
        if abs(term) < 1e-18 * abs(psi_sum):
            break
    i1 = 0.5 * z * i1_sum
    return 1.0 / z + i1 * cmath.log(0.5 * z) - 0.25 * z * psi_sum


def _k1_integral(z):
    # K1(z) = int_0^inf e^{-z cosh t} cosh t dt; the integrand is even in t
    # and analytic, so the trapezoid rule converges geometrically in 1/h.
    # Successive halving reuses all previous samples.
    T = math.acosh(1.0 + 48.0 / z.real)
    h = 0.25
    t = np.arange(0.0, T + 0.5 * h, h)
    w = np.exp(-z * np.cosh(t)) * np.cosh(t)
    w[0] *= 0.5
    val = h * np.sum(w)
    for _ in range(8):
        tm = np.arange(0.5 * h, T, h)
        mid = np.sum(np.exp(-z * np.cosh(tm)) * np.cosh(tm))
        new = 0.5 * val + 0.5 * h * mid
        h *= 0.5
        done = abs(new - val) < 1e-14 * abs(new)
        val = new
        if done:
            break
    return complex(val)


def _k1_asymptotic(z):
    # K1(z) ~ sqrt(pi/(2z)) e^{-z} sum_k A_k, A_k = A_{k-1}(4-(2k-1)^2)/(8kz),
    # truncated at the smallest term
    a = 1.0 + 0.0j
    total = a
    best = abs(a)
    for k in range(1, 40):
        a *= (4.0 - (2.0 * k - 1.0) ** 2) / (8.0 * k * z)
        if abs(a) >= best:
            break
        best = abs(a)
        total += a
        if abs(a) < 1e-18 * abs(total):
            break
    return cmath.sqrt(math.pi / (2.0 * z)) * cmath.exp(-z) * total


def bessel_k1(z):
    """Modified Bessel function K_1 on Re z > 0, ~1e-12 relative."""
    z = complex(z)
    if not (z.real > 0.0):
        raise DomainError(f"bessel_k1 requires Re z > 0, got {z}")
    az = abs(z)
    if az <= 2.0:
        return _k1_series(z)
    if az < 16.0:
        return _k1_integral(z)
    return _k1_asymptotic(z)


def _sigma(tau, R):
    """Principal sqrt(R^2 - tau^2); continuous off the real axis.

    For Im tau != 0 the argument R^2 - tau^2 can only land on the branch
    cut (-inf, 0] when Re tau = 0, and there it is R^2 + |Im tau|^2 > 0,
    so the principal branch is the analytic continuation from the
    Euclidean point tau = -i|tau|, R = 0.
    """
    tau = complex(tau)
    s2 = R * R - tau * tau
    if s2.imag == 0.0 and s2.real <= 0.0:
        raise BranchError(
            f"sigma^2 = {s2} on the branch cut (real tau = {tau} beyond the "
            "light cone needs a regulator)")
    return cmath.sqrt(s2)


def _wightman_smooth(tau, R, m):
    """(m sigma K1(m sigma)) / (4 pi^2 sigma^2) continued off Im tau < 0."""
    sig = _sigma(tau, R)
    z = m * sig
    return m * bessel_k1(z) / (4.0 * math.pi ** 2 * sig)


def flat_wightman_closed(pt: FlatPoint):
    """Closed-form regulated Wightman function (1/(4 pi^2)) (m/sigma) K1(m sigma)."""
    return _wightman_smooth(pt.t, pt.R, pt.m)


@dataclasses.dataclass(frozen=True)
class FlatQuadResult:
    value: complex
    quad_error: float


def _damped_cut(eps, m):
    # e^{-eps omega} tail below ~1e-20 of the peak
    return m + 50.0 / eps


def flat_wightman_integral(pt: FlatPoint, spec=None):
    """One-dimensional momentum integral in the source's 1/(2 pi) convention.

    (1/(2 pi)) (2 pi / R) int_0^inf dp (p/omega_p) sin(pR) e^{-i omega_p t}
    evaluated after the substitution omega = omega_p as
    (1/R) int_m^inf sin(R sqrt(omega^2 - m^2)) e^{-i omega t} domega.
    The R -> 0 limit replaces sin(qR)/R by q.  Equals CAL times
    flat_wightman_closed (one stored constant; see CAL).
    """
    m, R, tau = pt.m, pt.R, pt.t
    eps = -tau.imag
    cut = _damped_cut(eps, m)
    rel = getattr(spec, "rel_tol", 1e-11) if spec is not None else 1e-11
    if spec is not None and getattr(spec, "omega_max", None):
        cut = max(float(spec.omega_max), m + 1.0)

    if R < 1e-8:
        def f(om):
            return math.sqrt(om * om - m * m) * cmath.exp(-1j * om * tau)
    else:
        def f(om):
            q = math.sqrt(om * om - m * m)
            return math.sin(q * R) / R * cmath.exp(-1j * om * tau)

    val, err = quad(f, m, cut, complex_func=True, limit=400,
                    epsabs=0.0, epsrel=rel)
    tail = (cut / eps) * math.exp(-eps * cut) / max(R, 1e-8)
    return FlatQuadResult(complex(val),
                          float(abs(err.real) + abs(err.imag) + tail))


def flat_channel_green(omega, l, m, r, rp):
    """Frequency Green's function of the flat radial problem.

    Super-threshold: i q j_l(q r_<) h^(1)_l(q r_>); sub-threshold:
    (2b/pi) i_l(b r_<) k_l(b r_>).  Both are the Wronskian-normalized
    product of the origin-regular and infinity-outgoing/decaying
    solutions, divided by r r'.
    """
    if l < 0 or int(l) != l:
        raise DomainError(f"l must be a nonnegative integer, got {l}")
    if not (r > 0.0 and rp > 0.0):
        raise DomainError(f"radii must be positive, got {r}, {rp}")
    if not (omega > 0.0 and m > 0.0):
        raise DomainError(f"omega and m must be positive, got {omega}, {m}")
    if abs(omega * omega - m * m) < THRESHOLD_GAP:
        raise ThresholdError(
            f"|omega^2 - m^2| = {abs(omega**2 - m**2):.2e} is inside the "
            "rejected threshold neighborhood")
    rl, rg = (r, rp) if r <= rp else (rp, r)
    l = int(l)
    if omega > m:
        q = math.sqrt(omega * omega - m * m)
        jl = spherical_jn(l, q * rl)
        hl = spherical_jn(l, q * rg) + 1j * spherical_yn(l, q * rg)
        return 1j * q * jl * hl
    b = math.sqrt(m * m - omega * omega)
    return (2.0 * b / math.pi) * spherical_in(l, b * rl) * spherical_kn(l, b * rg)


def chord_distance(r, rp, gamma):
    """Euclidean chord through the sphere pair: law of cosines."""
    return math.sqrt(max(r * r + rp * rp - 2.0 * r * rp * math.cos(gamma), 0.0))


def rho_flat(omega, m, r, rp, gamma=0.0):
    """Flat spectral density (1/pi) Im K(omega): sin(qD)/(4 pi^2 D).

    The angular sum of (2l+1)/(4 pi) P_l(cos gamma) i q j_l h_l collapses
    by the addition theorem to e^{iqD}/(4 pi D) with D the chord distance;
    sub-threshold channels are real, so rho vanishes for omega <= m.
    """
    if omega <= m:
        return 0.0
    q = math.sqrt(omega * omega - m * m)
    D = chord_distance(r, rp, gamma)
    return q * np.sinc(q * D / math.pi) / (4.0 * math.pi ** 2)


def flat_two_point(tau, r, rp, m, beta=None, gamma=0.0, rel_tol=1e-11,
                   omega_max=None):
    """Position-space flat correlator from the spectral representation.

    Ground state: int_m^inf rho(omega) e^{-i omega tau} domega.  Thermal:
    the Bose-weighted combination w e^{-i omega tau} + (w-1) e^{i omega tau}
    with w = bose_weight.  Standard Wightman normalization (equal to
    flat_wightman_closed in the ground case); independent of the image-sum
    route, so the two serve as mutual oracles.  omega_max overrides the
    default regulator-based cut (the truncated tail stays in quad_error),
    which lets curved-vs-flat comparisons share one truncation point.
    """
    tau = complex(tau)
    eps = -tau.imag
    if not (eps > 0.0):
        raise DomainError(f"Im tau must be negative, got {tau}")
    if beta is not None:
        if not (beta > 0.0):
            raise DomainError(f"beta must be positive, got {beta}")
        if not (eps < beta):
            raise DomainError(
                f"thermal evaluation needs 0 < -Im tau < beta, got {tau}")
    eps_eff = eps if beta is None else min(eps, beta - eps)
    cut = _damped_cut(eps_eff, m)
    if omega_max is not None:
        if not (omega_max > m):
            raise DomainError(f"omega_max must exceed m, got {omega_max}")
        cut = float(omega_max)

    if beta is None:
        def f(om):
            return rho_flat(om, m, r, rp, gamma) * cmath.exp(-1j * om * tau)
    else:
        def f(om):
            # the occupation-number term is evaluated with its log folded
            # into the exponent: n_B * e^{i om tau} would otherwise lose
            # precision (w - 1 cancels) and can pair underflow with
            # overflow at deep strip positions
            x = beta * om
            ln_nb = -x if x > 700.0 else -math.log(math.expm1(x))
            w = 1.0 / (-math.expm1(-x))
            ph = cmath.exp(-1j * om * tau)
            return rho_flat(om, m, r, rp, gamma) * (
                w * ph + cmath.exp(1j * om * tau + ln_nb))

    val, err = quad(f, m, cut, complex_func=True, limit=400,
                    epsabs=0.0, epsrel=rel_tol)
    D = chord_distance(r, rp, gamma)
    rho_cap = cut / (4.0 * math.pi ** 2) if D == 0.0 \
        else 1.0 / (4.0 * math.pi ** 2 * D)
    tail = rho_cap * math.exp(-eps_eff * cut) / eps_eff
    return FlatQuadResult(complex(val),
                          float(abs(err.real) + abs(err.imag) + tail))


def flat_thermal_closed(tau, R, m, beta):
    """Thermal Wightman function by the KMS image sum sum_n W(tau - i n beta).

    Requires -beta < Im tau < 0 so every image stays off the real axis.
    Terms decay like e^{-m beta |n|}; the sum is truncated once the bound
    drops below 1e-16 of the accumulated value.
    """
    tau = complex(tau)
    if not (-beta < tau.imag < 0.0):
        raise DomainError(f"Im tau must lie in (-beta, 0), got {tau}")
    total = _wightman_smooth(tau, R, m)
    n = 1
    while True:
        step = (_wightman_smooth(tau - 1j * n * beta, R, m)
                + _wightman_smooth(tau + 1j * n * beta, R, m))
        total += step
        if abs(step) < 1e-16 * abs(total) or n > 400:
            break
        n += 1
    return total


def flat_limit_compare(M_small, m, channel_probes=(), position_probes=(),
                       tol=1e-9, spec=None):
    """Relative deviation of the curved pipeline from flat oracles at small M.

    Channel probes are (omega, l, r, rp) tuples; the Schwarzschild value at
    radii (r, rp) is compared against the flat channel Green's function at
    the tortoise radii (r*(r), r*(rp)).  The identification r <-> r* is the
    chart in which the radial operator actually approaches the flat one;
    at fixed Schwarzschild r the phase offset 2 M q ln(r/2M) dominates and
    never shrinks relative to the oscillation, while in the tortoise chart
    the genuine O(M) residual (the (M m^2/q) ln r tail plus near-field
    scattering) is what remains.  Position probes are (tau, r, rp, gamma)
    tuples compared the same way through the spectral evaluators; spec (a
    position.QuadratureSpec) is threaded to both sides so they share one
    frequency truncation, defaulting to omega_max = m + 8/eps at a relative
    tolerance loose enough for probing.
    """
    if not (0.0 <= M_small <= 1e-2 / m):
        raise DomainError(
            f"flat-limit comparison expects M <= 1e-2/m, got {M_small}")
    from .greens import solve_channel

    params = SpacetimeParams(M=M_small, m=m)
    report = {"M": M_small, "channels": [], "positions": []}
    for (omega, l, r, rp) in channel_probes:
        flat_r = tortoise(r, params) if M_small > 0.0 else r
        flat_rp = tortoise(rp, params) if M_small > 0.0 else rp
        want = flat_channel_green(omega, l, m, flat_r, flat_rp)
        if M_small == 0.0:
            got = want
        else:
            g = solve_channel(omega, l, params, [(r, rp)], tol=tol)
            got = g.value(r, rp)
        report["channels"].append({
            "omega": omega, "l": l, "r": r, "rp": rp,
            "deviation": abs(got - want) / abs(want),
        })
    for (tau, r, rp, gamma) in position_probes:
        from .position import QuadratureSpec, two_point

        probe_spec = spec
        if probe_spec is None:
            eps = -complex(tau).imag
            probe_spec = QuadratureSpec(omega_max=m + 8.0 / eps,
                                        rel_tol=1e-4)
        flat_r = tortoise(r, params) if M_small > 0.0 else r
        flat_rp = tortoise(rp, params) if M_small > 0.0 else rp
        want = flat_two_point(tau, flat_r, flat_rp, m, gamma=gamma,
                              omega_max=probe_spec.omega_max)
        if M_small == 0.0:
            got_val, got_err = want.value, want.quad_error
        else:
            res = two_point("ground", tau, r, rp, gamma, params=params,
                            spec=probe_spec)
            got_val, got_err = res.value, res.quad_error
        report["positions"].append({
            "tau": tau, "r": r, "rp": rp, "gamma": gamma,
            "deviation": abs(got_val - want.value) / abs(want.value),
            "errors": got_err + want.quad_error,
        })
    devs = ([c["deviation"] for c in report["channels"]]
            + [p["deviation"] for p in report["positions"]])
    report["max_deviation"] = max(devs) if devs else 0.0
    return report
