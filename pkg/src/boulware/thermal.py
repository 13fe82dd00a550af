"""Thermal (KMS) structure on top of the ground-state Green's functions.

The ground-state frequency kernel G(r, r', omega) is promoted to a thermal
one by the Bose weight n(omega) = 1/(1 - e^{-beta omega}).  The spectral
density rho = (1/pi) Im G, extended oddly to negative frequencies, feeds
the detailed-balance identity S(omega) = e^{beta omega} S(-omega) and the
positive-frequency (ground state) positivity verdict.  The KMS strip
boundary identity W(t - i(beta - eps)) = W(-t - i eps, swapped) is checked
against any position-space evaluator with complex-time support.
"""

import dataclasses
import math

import numpy as np

from .errors import DomainError


@dataclasses.dataclass(frozen=True)
class ThermalParams:
    """Inverse temperature and the imaginary-time regulator tau -> tau - i eps.

    epsilon defaults to beta/10 and must stay inside (0, beta/2) so both
    strip depths used by the KMS check are regulated.
    """

    beta: float
    epsilon: float = None

    def __post_init__(self):
        if not (self.beta > 0.0) or not math.isfinite(self.beta):
            raise DomainError(f"beta must be positive and finite, got {self.beta}")
        eps = self.epsilon
        if eps is None:
            eps = self.beta / 10.0
            object.__setattr__(self, "epsilon", eps)
        if not (0.0 < eps < self.beta / 2.0):
            raise DomainError(
                f"epsilon must lie in (0, beta/2) = (0, {self.beta / 2.0}), got {eps}")


@dataclasses.dataclass(frozen=True)
class SpectralDensity:
    """rho(r, r', omega) tabulated on positive frequencies for one radius pair.

    Negative frequencies are defined by the odd extension rho(-w) = -rho(w);
    extended() materializes the two-sided table.
    """

    omega_grid: np.ndarray
    rho: np.ndarray
    pair: tuple

    def __post_init__(self):
        om = np.asarray(self.omega_grid, dtype=float)
        rh = np.asarray(self.rho, dtype=float)
        object.__setattr__(self, "omega_grid", om)
        object.__setattr__(self, "rho", rh)
        if om.ndim != 1 or om.size == 0:
            raise DomainError("omega_grid must be a nonempty 1-d array")
        if rh.shape != om.shape:
            raise DomainError(
                f"rho shape {rh.shape} does not match omega_grid {om.shape}")
        if not np.all(om > 0.0):
            raise DomainError("omega_grid must be strictly positive")
        if not np.all(np.diff(om) > 0.0):
            raise DomainError("omega_grid must be strictly increasing")
        if not np.all(np.isfinite(rh)):
            raise DomainError("rho contains non-finite entries")

    @property
    def is_diagonal(self):
        r, rp = self.pair
        return float(r) == float(rp)

    def extended(self):
        """Two-sided (omega, rho) table under the odd extension."""
        om = np.concatenate([-self.omega_grid[::-1], self.omega_grid])
        rh = np.concatenate([-self.rho[::-1], self.rho])
        return om, rh


def bose_weight(omega, beta):
    """1/(1 - e^{-beta omega}) for omega > 0, stable at both ends.

    -expm1(-x) evaluates 1 - e^{-x} to full relative precision for small x
    (where the weight behaves as 1/x + 1/2) and saturates cleanly to 1 for
    large x, so a single branch covers the whole range.
    """
    om = np.asarray(omega, dtype=float)
    if not np.all(om > 0.0):
        raise DomainError("bose_weight requires omega > 0")
    if not (beta > 0.0):
        raise DomainError("bose_weight requires beta > 0")
    w = 1.0 / (-np.expm1(-beta * om))
    if np.ndim(omega) == 0:
        return float(w)
    return w


def bose_occupation(omega, beta):
    """n_B = 1/(e^{beta omega} - 1) = bose_weight - 1 without cancellation.

    The subtraction bose_weight - 1 loses all precision once beta*omega
    exceeds ~36; 1/expm1 keeps full relative accuracy (underflowing to 0
    only past beta*omega ~ 745).
    """
    om = np.asarray(omega, dtype=float)
    if not np.all(om > 0.0):
        raise DomainError("bose_occupation requires omega > 0")
    if not (beta > 0.0):
        raise DomainError("bose_occupation requires beta > 0")
    n = 1.0 / np.expm1(beta * om)
    if np.ndim(omega) == 0:
        return float(n)
    return n


def thermal_green_frequency(green, beta):
    """Bose-weighted copy of a frequency-domain Green's function.

    Every stored value is multiplied by bose_weight(omega, beta); the
    prefactor i and the e^{-i omega tau} phase belong to the frequency
    quadrature, not here.
    """
    w = bose_weight(green.omega, beta)
    values = {pair: w * val for pair, val in green.values.items()}
    return dataclasses.replace(green, values=values)


def _thermal_spectral_function(omega, rho, beta):
    """S(omega) = n(omega) rho(omega) on a two-sided grid.

    n continues to omega < 0 as 1/(1 - e^{-beta omega}) = 1/(-expm1(beta
    |omega|)), which is small and negative; together with the odd rho this
    is what detailed balance constrains.
    """
    x = beta * omega
    # -expm1(-x) is 1 - e^{-x} on both signs: positive for x > 0, and
    # 1 - e^{|x|} < 0 for x < 0, which is exactly the continued weight;
    # the overflow for x << -700 saturates to the correct -0.0
    with np.errstate(over="ignore"):
        n = 1.0 / (-np.expm1(-x))
    return n * rho


def detailed_balance_check(s: SpectralDensity, beta):
    """Max violation of S(omega) = e^{beta omega} S(-omega) on the table.

    Algebraic given the construction, so anything above roundoff signals a
    broken extension or weight.  Entries with beta*omega > 700 are compared
    in log magnitude (the literal e^{beta omega} overflows); the measure is
    equivalent at the 1e-12 scale.  Report-only: returns the max.
    """
    if not (beta > 0.0):
        raise DomainError("detailed_balance_check requires beta > 0")
    om, rh = s.extended()
    S = _thermal_spectral_function(om, rh, beta)
    npos = s.omega_grid.size
    floor = np.finfo(float).tiny
    worst = 0.0
    for i in range(npos):
        w = s.omega_grid[i]
        Sp = S[npos + i]
        Sm = S[npos - 1 - i]
        x = beta * w
        if x <= 700.0:
            viol = abs(Sp - math.exp(x) * Sm) / max(abs(Sp), floor)
        else:
            # S(-omega) itself underflows; rebuild its log from the same
            # construction: ln|n(-w)| = -ln(expm1(x)) = -x to double
            # precision here, and rho(-w) = -rho(w)
            r = s.rho[i]
            if r == 0.0 and Sp == 0.0:
                viol = 0.0
            elif r == 0.0 or Sp == 0.0 or (Sp > 0.0) != (r > 0.0):
                viol = math.inf
            else:
                ln_sm = -x + math.log(abs(r))
                viol = abs(math.expm1(x + ln_sm - math.log(abs(Sp))))
        if viol > worst:
            worst = viol
    return worst


def kms_strip_check(two_point_evaluator, t, beta, epsilon, r, rp):
    """Boundary values of the KMS strip identity at depths beta-eps and eps.

    Evaluates W(t - i(beta - eps); r, r') and W(-t - i eps; r', r) through
    two independent calls of the supplied evaluator and reports both with
    their difference.  The evaluator may return a complex number or an
    object with .value and error-estimate attributes; reported combined
    error is the sum of whatever estimates both results carry.
    """
    if not (0.0 < epsilon < beta):
        raise DomainError("kms_strip_check requires 0 < epsilon < beta")
    res_a = two_point_evaluator(t - 1j * (beta - epsilon), r, rp)
    res_b = two_point_evaluator(-t - 1j * epsilon, rp, r)

    def unpack(res):
        if hasattr(res, "value"):
            err = abs(getattr(res, "quad_error", 0.0))
            err += abs(getattr(res, "lsum_error", 0.0))
            return complex(res.value), err
        return complex(res), 0.0

    a, ea = unpack(res_a)
    b, eb = unpack(res_b)
    diff = abs(a - b)
    combined = ea + eb
    out = {
        "lhs": a,
        "rhs": b,
        "difference": diff,
        "combined_error": combined,
        "rel_difference": diff / max(abs(a), abs(b), np.finfo(float).tiny),
    }
    out["passed"] = bool(diff <= combined) if combined > 0.0 else None
    return out


def ground_positivity_check(s: SpectralDensity):
    """Positivity verdict for the diagonal spectral density.

    Passes iff rho(r, r, omega) >= -tol_pos everywhere, tol_pos = 1e-8 max
    |rho|.  Report-only; whether the Wronskian normalization makes rho
    exactly the mode density is not settled, so a uniform sign or scale
    mismatch must stay distinguishable from a genuine defect.
    """
    if not s.is_diagonal:
        raise DomainError(
            f"ground_positivity_check needs a diagonal pair, got {s.pair}")
    tol_pos = 1e-8 * float(np.max(np.abs(s.rho))) if s.rho.size else 0.0
    k = int(np.argmin(s.rho))
    return {
        "verdict": bool(s.rho[k] >= -tol_pos),
        "min_rho": float(s.rho[k]),
        "at_omega": float(s.omega_grid[k]),
        "tol_pos": tol_pos,
    }
