"""Position-space two-point functions on the exterior geometry.

Everything here reduces to one object: the spectral density per radius
pair, rho(omega; r, r') = (1/pi) Im K, where K is the angular channel
sum of frequency Green values.  Regulated correlators are frequency
integrals of rho against e^{-i omega tau} (ground state) or the
Bose-weighted pair of exponentials (thermal); the regulator
Im tau = -eps < 0 makes both ends absolutely convergent.  The real part
of K never enters the frequency integral: its channel sum diverges
linearly at coincidence while Im K stays summable, so the evaluator
projects channels onto their imaginary part before integrating.

The frequency rule is a composite Gauss-Kronrod 7/15 scheme.  Panel
edges sit exactly at omega = m; on either side of threshold the
integration variable is the local momentum (omega = m +- xi^2), which
absorbs the square-root behaviour of d q/d omega, and panel widths
follow the resolved phase scale (q times the chord separation plus the
time scale of the exponentials).  A cosine-squared taper over the top
quarter of the range suppresses truncation ringing; the taper bias, the
analytic damped tail past omega_max, the skipped threshold slivers and
a stack-noise floor all land in the reported quad_error.
"""

import math
import cmath
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaincc, gamma as _gamma_fn

from . import _dp54
from . import flat as _flat
from .errors import (ConfigError, ConvergenceError, DomainError,
                     QuadratureError, ResidualError, SeedAccuracyError,
                     TruncationError, WindowTooSmall)
from .geometry import SpacetimeParams, horizon_gap, tortoise
from .radial import (SEED_RESIDUAL_TOL, AsymptoticFit, _lstsq,
                     _phi_default_order, _phi_exponents, seed_phi_infinity)
from .thermal import ThermalParams

# 15-point Kronrod rule with the embedded 7-point Gauss rule (positive
# half, outside-in).  A test pins polynomial exactness to degree 22 and
# 13 respectively, so a transcription slip cannot survive.
_GK_X_HALF = (0.991455371120813, 0.949107912342759, 0.864864423359769,
              0.741531185599394, 0.586087235467691, 0.405845151377397,
              0.207784955007898)
_GK_WK_HALF = (0.022935322010529, 0.063092092629979, 0.104790010322250,
               0.140653259715525, 0.169004726639267, 0.190350578064785,
               0.204432940075298)
_GK_WK_0 = 0.209482141084728
_G7_W_HALF = (0.129484966168870, 0.279705391489277, 0.381830050505119)
_G7_W_0 = 0.417959183673469


def _build_rule():
    half = np.array(_GK_X_HALF)
    wk_half = np.array(_GK_WK_HALF)
    nodes = np.concatenate([-half, [0.0], half[::-1]])
    wk = np.concatenate([wk_half, [_GK_WK_0], wk_half[::-1]])
    w7 = np.zeros(15)
    w7[7] = _G7_W_0
    for j, wg in zip((1, 3, 5), _G7_W_HALF):
        w7[j] = wg
        w7[14 - j] = wg
    return nodes, wk, w7


_RULE_X, _RULE_WK, _RULE_WG = _build_rule()

_WKB_GATE = 1e-7
_PHI_RUNGS = (1.15, 1.5, 2.0, 2.7, 3.6)
_SPREAD_SOFT = 3e-5      # per-channel Wronskian scatter triggering a retry
_SPREAD_HARD = 1e-3
_PHASE_PER_PANEL = 8.0
_COULOMB_R_CAP = 1.5e5   # largest turning radius the sub-threshold side chases


@dataclass(frozen=True)
class QuadratureSpec:
    """Frequency-quadrature configuration.

    omega_max = None resolves at call time to m + 20/eps_eff, eps_eff
    the effective regulator of the given tau (min(eps, beta - eps) for
    thermal states).  mode_tol is the radial solver tolerance feeding
    the channel stacks; l_max caps the angular sum.
    """
    omega_max: float = None
    rel_tol: float = 1e-6
    abs_tol: float = 0.0
    panel: str = "gauss-kronrod-7/15, sqrt-mapped threshold panels"
    tail_rule: str = "kernel envelope x e^{-eps omega} / phase derivative"
    stop_consecutive: int = 3
    l_max: int = 6000
    mode_tol: float = 1e-8
    refine_rounds: int = 8

    def __post_init__(self):
        if self.omega_max is not None and not (
                math.isfinite(self.omega_max) and self.omega_max > 0.0):
            raise ConfigError(f"omega_max must be positive, got {self.omega_max}")
        if not (0.0 < self.rel_tol < 1.0):
            raise ConfigError(f"rel_tol outside (0, 1): {self.rel_tol}")
        if not (math.isfinite(self.abs_tol) and self.abs_tol >= 0.0):
            raise ConfigError("abs_tol must be finite and >= 0")
        if self.stop_consecutive < 1:
            raise ConfigError("stop_consecutive must be >= 1")
        if self.l_max < 8:
            raise ConfigError("l_max must be >= 8")
        if not (1e-12 <= self.mode_tol <= 1e-4):
            raise ConfigError(f"mode_tol outside [1e-12, 1e-4]: {self.mode_tol}")
        if self.refine_rounds < 0:
            raise ConfigError("refine_rounds must be >= 0")


@dataclass(frozen=True)
class TwoPointResult:
    value: complex
    quad_error: float
    lsum_error: float
    l_used: int
    spec: QuadratureSpec

    def __post_init__(self):
        if not cmath.isfinite(self.value):
            raise DomainError("two-point value is not finite")
        if not (self.quad_error >= 0.0 and self.lsum_error >= 0.0):
            raise DomainError("error estimates must be nonnegative")


@dataclass(frozen=True)
class ChannelSumResult:
    value: complex
    lsum_error: float
    l_used: int


def legendre_table(x, lmax):
    """P_0..P_lmax at scalar x by the three-term recurrence."""
    p = np.empty(lmax + 1)
    p[0] = 1.0
    if lmax >= 1:
        p[1] = x
    for l in range(1, lmax):
        p[l + 1] = ((2 * l + 1) * x * p[l] - l * p[l - 1]) / (l + 1)
    return p


def channel_sum(channels, gamma, rel_tol=1e-6, stop_consecutive=3,
                l_gate=0, component="complex"):
    """Angular sum of per-l Green values at one (omega, r, r').

    sum_l (2l+1)/(4 pi) P_l(cos gamma) G_l, truncated once
    stop_consecutive consecutive terms fall below rel_tol times the
    running partial sum.  The stop rule is not trusted before l_gate:
    up to l ~ q r_< the term envelope oscillates without decay, and a
    Legendre zero can fake convergence.  The returned value is the raw
    truncated sum; a cosine-squared window over the top third of the
    channels probes any residual partial-sum oscillation, and its
    deviation from the raw sum plus the final term scale make up
    lsum_error.  Raises TruncationError when the table ends before the
    stop rule fires.

    component="imag" applies the stop rule and window to Im G_l alone.
    The diagonal sum of Re G_l is not summable (coincidence
    divergence), so the spectral-density path must use this projection.
    """
    g = np.asarray(channels, dtype=complex)
    if g.ndim != 1 or g.size == 0:
        raise DomainError("channels must be a nonempty 1-d sequence")
    if component not in ("complex", "imag"):
        raise ConfigError(f"unknown component {component!r}")
    if not (0.0 < rel_tol < 1.0):
        raise DomainError(f"rel_tol outside (0, 1): {rel_tol}")
    n = g.size
    pl = legendre_table(math.cos(gamma), n - 1)
    coef = (2.0 * np.arange(n) + 1.0) / (4.0 * math.pi) * pl
    terms = coef * (1j * g.imag if component == "imag" else g)
    partial = np.cumsum(terms)
    mags = np.abs(terms)
    run = 0
    stop = None
    for l in range(n):
        ref = max(abs(partial[l]), 1e-300)
        run = run + 1 if mags[l] <= rel_tol * ref else 0
        if run >= stop_consecutive and l >= l_gate:
            stop = l
            break
    if stop is None:
        raise TruncationError(
            f"channel sum did not converge by l={n - 1} "
            f"(rel_tol={rel_tol}, gate={l_gate})")
    n_win = min(max(4, (stop + 1) // 3), stop + 1)
    win = np.ones(stop + 1)
    ramp = np.arange(1, n_win + 1, dtype=float)
    win[stop + 1 - n_win:] = np.cos(0.5 * math.pi * ramp / (n_win + 1.0)) ** 2
    smoothed = complex(np.dot(win, terms[:stop + 1]))
    raw = complex(partial[stop])
    tail_scale = float(np.max(mags[max(0, stop - stop_consecutive + 1):stop + 1]))
    err = abs(smoothed - raw) + stop_consecutive * tail_scale
    return ChannelSumResult(raw, err, stop)


# ---------------------------------------------------------------------------
# batched channel stacks


def _potential_r_arrays(r, ll, M, m2):
    """(V, dV/dr, d2V/dr2) with ll an array of l(l+1) values."""
    f = 1.0 - 2.0 * M / r
    fp = 2.0 * M / r ** 2
    fpp = -4.0 * M / r ** 3
    U = ll / r ** 2 + 2.0 * M / r ** 3 + m2
    Up = -2.0 * ll / r ** 3 - 6.0 * M / r ** 4
    Upp = 6.0 * ll / r ** 4 + 24.0 * M / r ** 5
    return f * U, fp * U + f * Up, fpp * U + 2.0 * fp * Up + f * Upp


def _wkb_z_arrays(omega, ll, params, r):
    """Vectorized phase-integral log-derivative for infinity seeds.

    Mirrors the scalar seed builder term by term: z = ik - k'/2k plus
    two corrections, the third-order term (finite differenced) serving
    as the accuracy gate.  Returns (z, gate) per channel.
    """
    M = params.M
    m2 = params.m ** 2
    omsq = omega * omega

    def z012(rv):
        V, Vp, Vpp = _potential_r_arrays(rv, ll, M, m2)
        fv = 1.0 - 2.0 * M / rv if M > 0.0 else np.ones_like(rv)
        fpv = 2.0 * M / rv ** 2
        dV = fv * Vp
        ddV = fv * (fpv * Vp + fv * Vpp)
        k = np.sqrt((omsq - V).astype(complex))
        k = np.where(k.imag < 0.0, -k, k)
        kp = -dV / (2.0 * k)
        kpp = (-ddV - 2.0 * kp * kp) / (2.0 * k)
        z1 = -kp / (2.0 * k)
        z1p = -kpp / (2.0 * k) + kp * kp / (2.0 * k * k)
        z2 = 1j * (z1p + z1 * z1) / (2.0 * k)
        return 1j * k + z1, z2, k

    base, z2, k = z012(r)
    delta = 1e-4 * r
    _, z2p, _ = z012(r + delta)
    _, z2m, _ = z012(r - delta)
    fz = 1.0 - 2.0 * M / r if M > 0.0 else np.ones_like(r)
    dz2 = fz * (z2p - z2m) / (2.0 * delta)
    z1v = base - 1j * k
    z3 = 1j * (dz2 + 2.0 * z1v * z2) / (2.0 * k)
    gate = np.abs(z3) / np.maximum(np.abs(k), 1e-300)
    return base + z2 + z3, gate


def _psi_seed_arrays(omega, ll, params, rstar_seed, order=10):
    """Horizon Frobenius seeds for a whole l-chunk at one frequency.

    Vectorized over the two ll-dependent recurrence coefficients;
    returns (w0, z0) per channel with the same residual gate as the
    scalar builder.
    """
    M = params.M
    m = params.m
    if M <= 0.0:
        raise DomainError("horizon seeds need M > 0")
    x = float(horizon_gap(rstar_seed, params))
    n = ll.shape[0]
    q1 = 2.0 * M - 24j * omega * M * M
    q2 = -12j * omega * M
    q3 = -2j * omega
    r0 = -(8.0 * M ** 3 * m * m + 2.0 * M * ll + 2.0 * M)
    r1 = -(ll + 12.0 * M * M * m * m)
    r2 = -6.0 * M * m * m
    r3 = -m * m
    a = np.zeros((order + 1, n), dtype=complex)
    a[0] = 1.0
    for N in range(0, order):
        acc = a[N] * (N * (N - 1.0) * 4.0 * M + N * q1 + r0)
        if N >= 1:
            acc = acc + a[N - 1] * ((N - 1.0) * (N - 2.0)
                                    + (N - 1.0) * q2 + r1)
        if N >= 2:
            acc = acc + a[N - 2] * ((N - 2.0) * q3 + r2)
        if N >= 3:
            acc = acc + a[N - 3] * r3
        a[N + 1] = -acc / (4.0 * M * M * (N + 1.0)
                           * (N + 1.0 - 4j * omega * M))
    pows = x ** np.arange(order + 1)
    v = pows @ a
    kk = np.arange(1, order + 1)
    vx = (kk * pows[:-1]) @ a[1:]
    vxx = (np.arange(2, order + 1) * np.arange(1, order) * pows[:-2]) @ a[2:]
    r = 2.0 * M + x
    res = (x * r * r * vxx + (2.0 * M * r - 2j * omega * r ** 3) * vx
           - (m * m * r ** 3 + ll * r + 2.0 * M) * v)
    scale = (m * m * r ** 3 + ll * r + 2.0 * M) * np.maximum(np.abs(v), 1e-300)
    worst = float(np.max(np.abs(res) / scale))
    if not (worst <= SEED_RESIDUAL_TOL):
        raise SeedAccuracyError(
            f"batched horizon seed residual {worst:.2e} at r*={rstar_seed}")
    f = x / r
    w0 = -1j * omega * rstar_seed + np.log(v)
    z0 = -1j * omega + f * vx / v
    return w0, z0


def _turning_rstar(omega, ll, params, r_lo, r_hi, kind):
    """Outermost classical turning point per channel, as r*.

    kind "entry" finds the last forbidden->allowed boundary moving
    outward (an infinity-side wave resumes oscillating there); "exit"
    the last allowed->forbidden boundary (outer edge of the inner
    allowed pocket).  NaN where no such crossing exists in [r_lo, r_hi];
    callers map that onto a pure-log sentinel.
    """
    M = params.M
    m2 = params.m ** 2
    omsq = omega * omega
    grid = np.geomspace(r_lo, r_hi, 280)
    f = 1.0 - 2.0 * M / grid
    a = f / grid ** 2
    b = f * (2.0 * M / grid ** 3 + m2)
    allowed = (a[:, None] * ll[None, :] + b[:, None]) < omsq
    if kind == "entry":
        trans = allowed[1:] & ~allowed[:-1]
    else:
        trans = ~allowed[1:] & allowed[:-1]
    has = trans.any(axis=0)
    out = np.full(ll.shape, np.nan)
    if not np.any(has):
        return out
    n = grid.shape[0]
    idx = n - 1 - np.argmax(trans[::-1], axis=0)  # upper grid index of crossing
    lo = grid[idx[has] - 1].copy()
    hi = grid[idx[has]].copy()
    llc = ll[has]
    hi_allowed = kind == "entry"
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        fm = 1.0 - 2.0 * M / mid
        Vm = fm * (llc / mid ** 2 + 2.0 * M / mid ** 3 + m2)
        mid_allowed = Vm < omsq
        match_hi = mid_allowed if hi_allowed else ~mid_allowed
        hi = np.where(match_hi, mid, hi)
        lo = np.where(match_hi, lo, mid)
    out[has] = tortoise(0.5 * (lo + hi), params)
    return out


class _StackContext:
    """Shared immutable inputs for per-frequency kernel evaluations."""

    def __init__(self, params, r_obs, pairs, gamma, spec):
        order = np.argsort(r_obs)
        self.params = params
        self.r_asc = np.ascontiguousarray(np.asarray(r_obs, dtype=float)[order])
        if np.any(np.diff(self.r_asc) <= 0.0):
            raise DomainError("observation radii must be distinct")
        if params.M > 0.0 and self.r_asc[0] <= 2.0 * params.M:
            raise DomainError("observation radii must lie outside the horizon")
        self.s_asc = np.ascontiguousarray(tortoise(self.r_asc, params))
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        self.pairs = [(int(rank[i]), int(rank[j])) for (i, j) in pairs]
        self.gamma = float(gamma)
        self.spec = spec
        self.r_top = float(self.r_asc[-1])
        self.s_top = float(self.s_asc[-1])
        self.s_bot = float(self.s_asc[0])
        M = params.M
        self.rstar_psi = min(-16.0 * 2.0 * M, self.s_bot - 2.0 * M)
        # the largest lower pair radius governs how many channels a sum needs
        self.r_gate = max(self.r_asc[min(i, j)] for (i, j) in self.pairs)

    def l_gate(self, omega):
        m = self.params.m
        if omega <= m:
            return 6
        qr = math.sqrt(omega * omega - m * m) * self.r_gate
        return int(qr + 3.0 * qr ** (1.0 / 3.0)) + 10


def _series_seed_radius(omega, l, params, order):
    """Radius where the large-r series truncated at this order is safe.

    Term ratio ~ (order^2 + |alpha|^2 + l(l+1)) / (2 |q_e| r n); pinning
    it to 0.3 at n = order keeps the optimal-truncation tail below the
    residual gate.  Near threshold |alpha| ~ M m^2 / q blows up and this
    radius grows like 1/q^3.
    """
    qe, al = _phi_exponents(omega, params)
    return (order * order + abs(al) ** 2 + l * (l + 1.0)) \
        / (2.0 * abs(qe) * order * 0.3)


def _phi_series_seed(omega, l, ctx):
    """Series seed with an (order, radius) ladder.

    High orders overflow the coefficient recurrence when the Coulomb
    parameter is large (|c_n| grows like (alpha^2/2q)^n / n!), so on
    failure the order drops and the seed radius moves out to keep the
    truncation tail small; raising the radius alone never helps once
    the table itself is non-finite.
    """
    params = ctx.params
    last = None
    for order in (_phi_default_order(l), 32, 24, 18, 12):
        r0 = max(100.0 * 2.0 * params.M, 100.0 / params.m,
                 1.05 * ctx.r_top + 5.0,
                 _series_seed_radius(omega, l, params, order))
        for _ in range(4):
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    return seed_phi_infinity(omega, l, params, r_seed=r0,
                                             order=order)
            except SeedAccuracyError as exc:
                last = exc
                r0 *= 1.6
    raise SeedAccuracyError(
        f"no admissible series seed at omega={omega}, l={l}: {last}")


def _phi_seed_chunk(omega, ll, ctx, rung_start=0):
    """Infinity-side seed data (r*, z, h0) for one l-chunk.

    Phase-integral seeds on a ladder of radii above the observation
    span (above the outer turning radius when below threshold, where
    the long-range mass tail pushes the forbidden zone far out);
    channels whose correction gate never passes fall back to the
    large-r series.
    """
    params = ctx.params
    m = params.m
    base = ctx.r_top
    if omega < m:
        r_t0 = 2.0 * params.M * m * m / max(m * m - omega * omega, 1e-300)
        base = max(base, 1.05 * r_t0 + 5.0 * params.M)
    n = ll.shape[0]
    z0 = np.zeros(n, dtype=complex)
    r_seed = np.zeros(n)
    todo = np.ones(n, dtype=bool)
    for mult in _PHI_RUNGS[rung_start:]:
        if not todo.any():
            break
        rv = np.full(int(todo.sum()), mult * base)
        z, gate = _wkb_z_arrays(omega, ll[todo], params, rv)
        ok = gate <= _WKB_GATE
        sel = np.nonzero(todo)[0][ok]
        z0[sel] = z[ok]
        r_seed[sel] = rv[0]
        todo[sel] = False
    for c in np.nonzero(todo)[0]:
        l = int(round(0.5 * (math.sqrt(1.0 + 4.0 * ll[c]) - 1.0)))
        seed = _phi_series_seed(omega, l, ctx)
        z0[c] = seed.z
        r_seed[c] = seed.r
    s_seed = np.asarray(tortoise(r_seed, params), dtype=float)
    h0 = 0.3 / np.maximum(1.0, np.abs(z0))
    return s_seed, z0, h0


def _solve_chunk(omega, l_lo, l_hi, ctx, tol, rung_start=0):
    """Green values G_l(r, r') for l in [l_lo, l_hi) at one frequency.

    Returns (G, spread): G has shape (n_l, n_pairs); spread is the
    relative Wronskian scatter across the observation nodes per channel
    (log-space data keeps the check scale-free).
    """
    params = ctx.params
    m = params.m
    omsq = omega * omega
    ls = np.arange(l_lo, l_hi)
    ll = ls * (ls + 1.0)
    n_ch = ll.shape[0]
    n_obs = ctx.s_asc.shape[0]

    s_phi, z_phi, h_phi = _phi_seed_chunk(omega, ll, ctx, rung_start)
    w_psi0, z_psi0 = _psi_seed_arrays(omega, ll, params, ctx.rstar_psi)
    h_psi = 0.3 / np.maximum(1.0, np.abs(z_psi0))

    # psi turns into a standing wave (real zeros, log form dies) past the
    # last forbidden->allowed boundary below the top node, on either side
    # of threshold; phi above threshold is a traveling wave all the way
    # down, below threshold it needs the linear form from the outer edge
    # of the classically allowed pocket inward.
    s_entry = _turning_rstar(omega, ll, params,
                             2.02 * params.M, 1.001 * ctx.r_top, "entry")
    s_switch_psi = np.where(np.isnan(s_entry), ctx.s_top + 1.0, s_entry)
    if omega > m:
        s_switch_phi = np.full(n_ch, ctx.s_bot - 1.0)
    else:
        r_t0 = 2.0 * params.M * m * m / max(m * m - omsq, 1e-300)
        hi = 1.001 * max(ctx.r_top, 1.1 * r_t0 + 5.0 * params.M)
        s_turn = _turning_rstar(omega, ll, params, 2.02 * params.M, hi, "exit")
        s_switch_phi = np.where(np.isnan(s_turn), ctx.s_bot - 1.0,
                                np.minimum(s_turn, s_phi))

    phi_out = np.empty((n_ch, n_obs, 4))
    psi_out = np.empty((n_ch, n_obs, 4))
    status = np.zeros(n_ch, dtype=np.int64)
    _dp54._batch_channels(
        params.M, m * m, omsq, ll,
        s_phi, np.zeros(n_ch), np.zeros(n_ch),
        z_phi.real.copy(), z_phi.imag.copy(), h_phi, s_switch_phi,
        ctx.rstar_psi, w_psi0.real.copy(), w_psi0.imag.copy(),
        z_psi0.real.copy(), z_psi0.imag.copy(), h_psi, s_switch_psi,
        ctx.s_asc, tol, 1e-300, 0.02 * tol, 2_000_000,
        phi_out, psi_out, status)
    if np.any(status != 0):
        bad = np.nonzero(status != 0)[0]
        raise ConvergenceError(
            f"channel batch failed at omega={omega}, "
            f"l={[int(ls[c]) for c in bad[:6]]}, "
            f"status={[int(status[c]) for c in bad[:6]]}")

    w_phi = phi_out[:, :, 0] + 1j * phi_out[:, :, 1]
    z_f = phi_out[:, :, 2] + 1j * phi_out[:, :, 3]
    w_ps = psi_out[:, :, 0] + 1j * psi_out[:, :, 1]
    z_p = psi_out[:, :, 2] + 1j * psi_out[:, :, 3]

    # W = u_phi u_psi (z_psi - z_phi): node independence is the health gate
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ln_w = w_phi + w_ps + np.log((z_p - z_f).astype(complex))
        dev = np.exp(ln_w - ln_w[:, -1][:, None])
    dev = np.where(np.isfinite(dev), dev, 0.0)
    mean = np.mean(dev, axis=1)
    spread = np.max(np.abs(dev - mean[:, None]), axis=1) / np.maximum(
        np.abs(mean), 1e-300)

    G = np.empty((n_ch, len(ctx.pairs)), dtype=complex)
    for jp, (ia, ib) in enumerate(ctx.pairs):
        lo, hi = (ia, ib) if ia <= ib else (ib, ia)
        expo = w_ps[:, lo] - w_ps[:, hi]
        den = (z_p[:, hi] - z_f[:, hi]) * (ctx.r_asc[lo] * ctx.r_asc[hi])
        with np.errstate(over="ignore", under="ignore"):
            G[:, jp] = np.exp(expo) / den
    # graceful underflow deep under the angular barrier
    G = np.where(np.isfinite(G), G, 0.0)
    return G, spread


def _channel_table(omega, ctx, component):
    """Grow an l-table until every pair's channel sum terminates.

    Returns (per-pair ChannelSumResults, spread array, table).
    """
    spec = ctx.spec
    gate = ctx.l_gate(omega)
    pad = max(24, int(3.0 * (gate + 8.0) ** (1.0 / 3.0)) + 12)
    l_hi = min(gate + pad, spec.l_max + 1)
    chunks = []
    spreads = []
    l_done = 0
    while True:
        G, spread = _solve_chunk(omega, l_done, l_hi, ctx, spec.mode_tol)
        bad = np.nonzero(spread > _SPREAD_SOFT)[0]
        for c in bad:
            G2, sp2 = _solve_chunk(omega, l_done + int(c),
                                   l_done + int(c) + 1, ctx,
                                   spec.mode_tol / 20.0, rung_start=2)
            if sp2[0] < spread[c]:
                G[c] = G2[0]
                spread[c] = sp2[0]
        if bad.size and float(np.max(spread[bad])) > _SPREAD_HARD:
            raise ResidualError(
                f"Wronskian spread {float(np.max(spread[bad])):.2e} persists "
                f"at omega={omega} after retry")
        chunks.append(G)
        spreads.append(spread)
        l_done = l_hi
        table = np.concatenate(chunks, axis=0) if len(chunks) > 1 else chunks[0]
        try:
            sums = [channel_sum(table[:, jp], ctx.gamma, spec.rel_tol,
                                spec.stop_consecutive, gate, component)
                    for jp in range(table.shape[1])]
        except TruncationError:
            if l_hi >= spec.l_max + 1:
                raise
            l_hi = min(max(l_hi + 48, l_hi + l_hi // 3), spec.l_max + 1)
            continue
        return sums, np.concatenate(spreads), table


def _kernel_at_omega(omega, ctx):
    """Spectral data at one frequency: (rho, lsum_err, l_used) per pair.

    rho = Im K / pi with K the imag-projected channel sum; per-channel
    Wronskian scatter is folded into the error bound with a unit
    Legendre envelope (an overestimate, but cheap).
    """
    sums, spread, table = _channel_table(omega, ctx, "imag")
    l_used = max(s.l_used for s in sums)
    rho = np.empty(len(sums))
    lse = np.empty(len(sums))
    for jp, s in enumerate(sums):
        n = s.l_used + 1
        coef = (2.0 * np.arange(n) + 1.0) / (4.0 * math.pi)
        noise = float(np.sum(coef * spread[:n] * np.abs(table[:n, jp])))
        rho[jp] = s.value.imag / math.pi
        lse[jp] = (s.lsum_error + noise) / math.pi
    return rho, lse, l_used


# ---------------------------------------------------------------------------
# frequency panels

_PLAIN, _SQRT_SUP, _SQRT_SUB = 0, 1, 2


def _threshold_offsets(m, M):
    """(super, sub) gaps around omega = m that nodes must respect.

    Both sides clear the radial threshold guard; the sub side also
    stays out of the slow-decay regime whose outer turning radius
    exceeds the reachable seed range (r_t ~ M m / (m - omega)).
    """
    base = max(1.1e-6, 1.1e-9 / (2.0 * m))
    sub = max(base, M * m / _COULOMB_R_CAP)
    return base, sub


def _pairwise(seq):
    return zip(seq[:-1], seq[1:])


def _edges_from_rate(lo, hi, rate_fn, cap):
    if not hi > lo:
        return [lo]
    edges = [lo]
    guard = 0
    while edges[-1] < hi - 1e-13 * (1.0 + abs(hi)):
        e = edges[-1]
        w = min(cap, _PHASE_PER_PANEL / max(rate_fn(e), 1e-9))
        w = max(w, 1e-7 * (1.0 + abs(hi)))
        edges.append(min(e + w, hi))
        guard += 1
        if guard > 4000:
            raise QuadratureError("panel layout did not terminate")
    return edges


def _panel_nodes(panel, m):
    kind, a, b = panel
    half = 0.5 * (b - a)
    t = 0.5 * (a + b) + half * _RULE_X
    if kind == _PLAIN:
        return t, np.full(15, half)
    if kind == _SQRT_SUP:
        return m + t * t, 2.0 * t * half
    return m - t * t, 2.0 * t * half


def _build_panels(m, omega_max, nu, D, d_sup, d_sub, damp=0.0):
    """Initial panel list covering (0, omega_max] minus threshold slivers.

    damp is the decay rate of the slowest regulator exponential; once the
    weight has fallen a few orders below its threshold value the chord
    oscillation no longer needs full resolution, so panels widen.
    """
    panels = []
    # sub-threshold: plain panels up to 0.55 m, then zeta = sqrt(m - omega)
    w_br_sub = 0.55 * m

    def rate_sub(w):
        b = math.sqrt(max(m * m - w * w, 1e-12 * m * m))
        return nu + D * w / b

    for a, b in _pairwise(_edges_from_rate(0.0, w_br_sub, rate_sub, 0.45 * m)):
        panels.append((_PLAIN, a, b))

    z_lo, z_hi = math.sqrt(d_sub), math.sqrt(m - w_br_sub)

    def rate_zeta(z):
        return D * math.sqrt(max(2.0 * m - z * z, m)) + 2.0 * nu * z

    for a, b in _pairwise(_edges_from_rate(z_lo, z_hi, rate_zeta, z_hi)):
        panels.append((_SQRT_SUB, a, b))

    # super-threshold: xi = sqrt(omega - m) out to the breakpoint,
    # plain panels beyond
    w_br_sup = min(1.6 * m, omega_max)
    x_lo, x_hi = math.sqrt(d_sup), math.sqrt(w_br_sup - m)

    def rate_xi(x):
        return 1.5 * D * math.sqrt(2.0 * m + x * x) + 2.0 * nu * x

    for a, b in _pairwise(_edges_from_rate(x_lo, x_hi, rate_xi, x_hi)):
        panels.append((_SQRT_SUP, a, b))

    if omega_max > w_br_sup:
        def rate_sup(w):
            q = math.sqrt(max(w * w - m * m, 1e-12 * m * m))
            g = min(1.0, 1.0e3 * math.exp(-damp * (w - m)))
            return nu + D * (w / q) * max(g, 0.02)

        cap_sup = max(3.0 * max(1.0, m), 0.12 * (omega_max - w_br_sup))
        for a, b in _pairwise(_edges_from_rate(w_br_sup, omega_max, rate_sup,
                                               cap_sup)):
            panels.append((_PLAIN, a, b))
    return panels


def _spectral_weights(om, tau, beta):
    """Frequency weights of the regulated correlator.

    ground: e^{-i omega tau}; thermal: (n+1) e^{-i omega tau}
    + n e^{+i omega tau} with the occupation folded through logs so
    deep-strip points neither overflow nor cancel.
    """
    om = np.asarray(om, dtype=float)
    down = np.exp(-1j * om * tau)
    if beta is None:
        return down
    x = beta * om
    with np.errstate(over="ignore"):
        w = 1.0 / (-np.expm1(-x))
    ln_nb = np.where(x > 700.0, -x, -np.log(np.expm1(np.minimum(x, 700.0))))
    return w * down + np.exp(1j * om * tau + ln_nb)


def _taper(om, omega_max, m):
    lo = omega_max - 0.25 * (omega_max - m)
    t = np.ones_like(om)
    sel = om > lo
    t[sel] = np.cos(0.5 * math.pi * (om[sel] - lo) / (omega_max - lo)) ** 2
    return t


class _Quadrature:
    """Composite-panel state with deterministic assembly.

    Worker threads only reorder completions; every node value is a pure
    function of its frequency, and the summation order is fixed by
    (kind, left edge), so results are worker-count independent to the
    byte.
    """

    def __init__(self, ctx, tau, beta, omega_max, workers):
        self.ctx = ctx
        self.tau = tau
        self.beta = beta
        self.omega_max = omega_max
        self.workers = workers
        self.n_pairs = len(ctx.pairs)
        self.panels = []
        self.om = []
        self.jac = []
        self.rho = []
        self.lsum = []
        self.l_used = 0
        self.n_nodes = 0

    def add_panels(self, panels):
        m = self.ctx.params.m
        mapped = [_panel_nodes(p, m) for p in panels]
        if not mapped:
            return
        flat_om = np.concatenate([om for om, _ in mapped])
        if self.workers > 1 and flat_om.size > 15:
            with ThreadPoolExecutor(max_workers=self.workers) as ex:
                rows = list(ex.map(
                    lambda w: _kernel_at_omega(w, self.ctx), flat_om))
        else:
            rows = [_kernel_at_omega(w, self.ctx) for w in flat_om]
        k = 0
        for (om, jac) in mapped:
            rho = np.empty((15, self.n_pairs))
            ls = np.empty((15, self.n_pairs))
            for i in range(15):
                rho[i], ls[i], lu = rows[k]
                self.l_used = max(self.l_used, lu)
                k += 1
            self.om.append(om)
            self.jac.append(jac)
            self.rho.append(rho)
            self.lsum.append(ls)
        self.panels.extend(panels)
        self.n_nodes += 15 * len(panels)

    def assemble(self):
        """(value, err, lsum_err, gross) vectors over pairs."""
        m = self.ctx.params.m
        val = np.zeros(self.n_pairs, dtype=complex)
        raw = np.zeros(self.n_pairs, dtype=complex)
        err = np.zeros(self.n_pairs)
        lse = np.zeros(self.n_pairs)
        gross = np.zeros(self.n_pairs)
        self.panel_err = np.zeros((len(self.panels), self.n_pairs))
        for i in sorted(range(len(self.panels)),
                        key=lambda j: (self.panels[j][0], self.panels[j][1])):
            om, jac = self.om[i], self.jac[i]
            g = _spectral_weights(om, self.tau, self.beta)
            tp = _taper(om, self.omega_max, m)
            f = self.rho[i] * (g * jac)[:, None]
            ft = f * tp[:, None]
            i15 = _RULE_WK @ ft
            pe = np.abs(i15 - _RULE_WG @ ft)
            val += i15
            raw += _RULE_WK @ f
            err += pe
            self.panel_err[i] = pe
            lse += _RULE_WK @ (self.lsum[i] * (np.abs(g) * jac * tp)[:, None])
            gross += _RULE_WK @ np.abs(f)
        err += np.abs(val - raw)       # taper bias, reported not hidden
        return val, err, lse, gross

    def refine(self, flags):
        split = [p for p, fl in zip(self.panels, flags) if fl]
        keep = [i for i, fl in enumerate(flags) if not fl]
        self.panels = [self.panels[i] for i in keep]
        self.om = [self.om[i] for i in keep]
        self.jac = [self.jac[i] for i in keep]
        self.rho = [self.rho[i] for i in keep]
        self.lsum = [self.lsum[i] for i in keep]
        halves = []
        for kind, a, b in split:
            mid = 0.5 * (a + b)
            halves.append((kind, a, mid))
            halves.append((kind, mid, b))
        self.add_panels(halves)


def _tail_bound(omega_max, rho_env, eps1, eps2, D, t_re, m):
    """Damped-tail estimate past omega_max.

    The integrand phase is +- (q D -+ omega t), so each exponential
    piece gains a 1/|phase derivative| factor at the cut unless the
    phase is stationary there, in which case the regulator alone
    carries it.
    """
    q = math.sqrt(max(omega_max ** 2 - m * m, 1e-12))
    dphase = D * omega_max / q
    out = 0.0
    for eps, sgn in ((eps1, -1.0), (eps2, 1.0)):
        if eps is None:
            continue
        stat = min(abs(dphase + sgn * t_re), abs(dphase - sgn * t_re))
        out += 1.5 * rho_env * math.exp(-eps * omega_max) / max(eps, stat)
    return out


# ---------------------------------------------------------------------------
# public evaluators


def _normalize_state(state, beta):
    if isinstance(state, ThermalParams):
        return "thermal", float(state.beta)
    if state == "ground":
        return "ground", None
    if state == "thermal":
        if beta is None:
            raise ConfigError("thermal evaluation needs beta")
        if not (math.isfinite(beta) and beta > 0.0):
            raise DomainError(f"beta must be positive, got {beta}")
        return "thermal", float(beta)
    raise ConfigError(f"unknown state {state!r}")


def _resolve_spec(spec, m, eps, beta):
    if spec is None:
        spec = QuadratureSpec()
    if spec.omega_max is None:
        eps_eff = eps if beta is None else min(eps, beta - eps)
        spec = replace(spec, omega_max=m + 20.0 / eps_eff)
    d_sup, _ = _threshold_offsets(m, 0.0)
    if spec.omega_max <= m + 16.0 * d_sup:
        raise ConfigError(
            f"omega_max={spec.omega_max} leaves no room above threshold m={m}")
    return spec


def _default_workers(workers):
    if workers is None:
        return min(8, os.cpu_count() or 1)
    if int(workers) < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    return int(workers)


def _two_point_multi(state, tau, r, rp_list, gamma, spec, params, beta,
                     workers):
    state, beta = _normalize_state(state, beta)
    tau = complex(tau)
    eps = -tau.imag
    if not eps > 0.0:
        raise DomainError(f"Im tau must be negative, got {tau}")
    if beta is not None and not eps < beta:
        raise DomainError(
            f"regulator eps={eps} must stay inside the strip (0, beta={beta})")
    if params is None:
        raise ConfigError("params is required")
    m = params.m
    spec = _resolve_spec(spec, m, eps, beta)
    workers = _default_workers(workers)
    r = float(r)
    rp_list = [float(x) for x in rp_list]

    if params.M == 0.0:
        out = []
        for rp in rp_list:
            fl = _flat.flat_two_point(tau, r, rp, m, beta=beta, gamma=gamma,
                                      rel_tol=min(1e-11, spec.rel_tol),
                                      omega_max=spec.omega_max)
            out.append(TwoPointResult(fl.value, fl.quad_error, 0.0, 0, spec))
        return out

    obs = sorted(set([r] + rp_list))
    pair_idx = [(obs.index(r), obs.index(rp)) for rp in rp_list]
    ctx = _StackContext(params, np.asarray(obs), pair_idx, gamma, spec)

    rs = float(tortoise(r, params))
    chords = [_flat.chord_distance(rs, float(tortoise(rp, params)), gamma)
              for rp in rp_list]
    D = max(chords)
    eps2 = None if beta is None else beta - eps
    nu = abs(tau.real) + 0.35 * eps
    if eps2 is not None:
        nu = max(nu, abs(tau.real) + 0.35 * eps2)

    d_sup, d_sub = _threshold_offsets(m, params.M)
    damp = eps if eps2 is None else min(eps, eps2)
    quad = _Quadrature(ctx, tau, beta, spec.omega_max, workers)
    quad.add_panels(_build_panels(m, spec.omega_max, nu, D, d_sup, d_sub,
                                  damp))
    val, err, lse, gross = quad.assemble()
    for _ in range(spec.refine_rounds):
        targ = np.maximum(spec.rel_tol * np.abs(val), spec.abs_tol)
        targ = np.maximum(targ, spec.rel_tol * 1e-2 * gross)
        if np.all(err <= 0.6 * targ):
            break
        budget = 1.2 * targ / max(len(quad.panels), 1)
        flags = [bool(np.any(quad.panel_err[i] > budget))
                 for i in range(len(quad.panels))]
        if not any(flags):
            break
        quad.refine(flags)
        val, err, lse, gross = quad.assemble()
    targ = np.maximum(spec.rel_tol * np.abs(val), spec.abs_tol)
    targ = np.maximum(targ, spec.rel_tol * 1e-2 * gross)
    if np.any(err > 4.0 * targ):
        worst = int(np.argmax(err / np.maximum(targ, 1e-300)))
        raise QuadratureError(
            f"panel error {err[worst]:.2e} above target {targ[worst]:.2e} "
            f"after {spec.refine_rounds} refinement rounds "
            f"({quad.n_nodes} nodes)")

    # additive error pieces shared by every pair
    top_rho = max((float(np.abs(rh).max()) for rh in quad.rho), default=0.0)
    gm = abs(complex(_spectral_weights(np.array([m]), tau, beta)[0]))
    bridge = gm * (d_sup + d_sub) * math.sqrt(2.0 * m * max(d_sup, d_sub)) \
        / (4.0 * math.pi ** 2)
    results = []
    for jp in range(len(rp_list)):
        tail = _tail_bound(spec.omega_max, 2.0 * top_rho, eps, eps2,
                           chords[jp], tau.real, m)
        qe = float(err[jp] + tail + bridge + 5.0 * spec.mode_tol * gross[jp])
        results.append(TwoPointResult(complex(val[jp]), qe, float(lse[jp]),
                                      quad.l_used, spec))
    return results


def two_point(state, tau, r, rp, gamma=0.0, spec=None, params=None,
              beta=None, workers=None):
    """Regulated two-point value W(tau; r, r', gamma) in one state.

    state is "ground", "thermal" (with beta=...), or a ThermalParams
    instance.  tau = t - i eps needs eps > 0; thermal states further
    need eps < beta (the analyticity strip).  M = 0 parameters delegate
    to the closed flat-space evaluator, bypassing the channel stacks.

    quad_error adds the Kronrod panel estimates, taper bias, the
    analytic tail past omega_max, the skipped threshold slivers, and a
    radial-tolerance noise floor; lsum_error propagates channel-sum
    truncation plus Wronskian-scatter noise through the same quadrature
    weights.  Raises QuadratureError when refinement cannot reach the
    requested tolerance.
    """
    return _two_point_multi(state, tau, r, [rp], gamma, spec, params,
                            beta, workers)[0]


def _fit_decay(rr, vals, errs, note):
    keep = [i for i in range(len(rr))
            if math.isfinite(abs(vals[i])) and abs(vals[i]) > 25.0 * errs[i]]
    if len(keep) < 8:
        raise WindowTooSmall(
            f"only {len(keep)} of {len(rr)} points {note} sit above the "
            "noise floor; need >= 8")
    x = np.asarray([rr[i] for i in keep])
    y = np.asarray([math.log(abs(vals[i])) for i in keep])
    A = np.column_stack([-x, -np.log(x), np.ones_like(x)])
    coef, rms = _lstsq(A, y)
    return AsymptoticFit(None, float(coef[0]), float(coef[1]),
                         (float(x[0]), float(x[-1])), rms, "decay", "r",
                         int(x.size))


def decay_profile(state, tau, r, r_prime_list, gamma=0.0, spec=None,
                  params=None, beta=None, workers=None, omega=None):
    """Exponential decay rate of the correlator along r'.

    Fits ln|W| = -kappa r' - p ln r' + c over the given radii (one
    shared channel stack, one frequency quadrature per point).  Points
    within a factor 25 of their combined error estimate are dropped;
    fewer than 8 survivors raise WindowTooSmall.  Equal-time regulated
    ground correlators decay with kappa -> m at large separation.

    omega switches to the fixed-frequency variant: the fit runs on
    channel-summed kernel magnitudes |K(omega; r, r')| and kappa
    approaches sqrt(m^2 - omega^2) below threshold.
    """
    rr = [float(x) for x in r_prime_list]
    if len(rr) < 8:
        raise DomainError(f"need at least 8 radii, got {len(rr)}")
    if not all(b > a for a, b in zip(rr, rr[1:])):
        raise DomainError("r_prime_list must be strictly increasing")
    if params is None:
        raise ConfigError("params is required")
    if params.M > 0.0 and rr[0] < 10.0 * 2.0 * params.M:
        raise DomainError("decay window must sit well outside the horizon")
    if omega is not None:
        omega = float(omega)
        if spec is None:
            spec = QuadratureSpec()
        if params.M == 0.0:
            m = params.m
            if omega >= m:
                raise DomainError("fixed-frequency fits need omega < m")
            b = math.sqrt(m * m - omega * omega)
            vals = [math.exp(-b * abs(rp - float(r)))
                    / (4.0 * math.pi * abs(rp - float(r))) for rp in rr]
            errs = [1e-13 * v for v in vals]
        else:
            obs = sorted(set([float(r)] + rr))
            pair_idx = [(obs.index(float(r)), obs.index(rp)) for rp in rr]
            ctx = _StackContext(params, np.asarray(obs), pair_idx, gamma, spec)
            sums, _, _ = _channel_table(omega, ctx, "complex")
            vals = [s.value for s in sums]
            errs = [s.lsum_error for s in sums]
        return _fit_decay(rr, vals, errs, f"(fixed omega={omega})")
    res = _two_point_multi(state, tau, r, rr, gamma, spec, params, beta,
                           workers)
    return _fit_decay(rr, [t.value for t in res],
                      [t.quad_error + t.lsum_error for t in res],
                      f"(tau={tau})")


def kernel(omega, r, rp, gamma=0.0, spec=None, params=None):
    """Channel-summed frequency kernel K(omega; r, r', gamma).

    The M = 0 limit is closed form: e^{i q D}/(4 pi D) above threshold
    (outgoing Helmholtz), e^{-b D}/(4 pi D) below (Yukawa), D the chord.
    """
    if params is None:
        raise ConfigError("params is required")
    if spec is None:
        spec = QuadratureSpec()
    omega = float(omega)
    if params.M == 0.0:
        m = params.m
        D = _flat.chord_distance(float(r), float(rp), gamma)
        if D <= 0.0:
            raise DomainError("flat kernel diverges at coincidence")
        if omega > m:
            q = math.sqrt(omega * omega - m * m)
            val = cmath.exp(1j * q * D) / (4.0 * math.pi * D)
        else:
            b = math.sqrt(m * m - omega * omega)
            val = complex(math.exp(-b * D) / (4.0 * math.pi * D))
        return ChannelSumResult(val, 1e-13 * abs(val), 0)
    obs = sorted({float(r), float(rp)})
    pair_idx = [(obs.index(float(r)), obs.index(float(rp)))]
    ctx = _StackContext(params, np.asarray(obs), pair_idx, gamma, spec)
    sums, _, _ = _channel_table(omega, ctx, "complex")
    return sums[0]


def integrability_check(state, tau, r, R_cut_list, spec=None, params=None,
                        beta=None, workers=None, r_min=None,
                        fit_window=None):
    """Partial integrals I(R) = int_{r_min}^R |W| r'^2 dr' and a verdict.

    The integrand is evaluated directly while the fitted decay model
    (ln|W| = -kappa r' - p ln r' + c, fit over fit_window) predicts
    values safely above the numerical noise floor; past that radius the
    model supplies the integrand, and every cut using it is flagged.
    Converged iff the increments between cuts shrink with a fitted
    geometric ratio < 1 and the extrapolated tail past the last cut
    stays below rel_tol x I(R_max).
    """
    cuts = [float(x) for x in R_cut_list]
    if len(cuts) < 4:
        raise DomainError(f"need at least 4 cuts, got {len(cuts)}")
    if not all(b > a for a, b in zip(cuts, cuts[1:])):
        raise DomainError("cuts must be strictly increasing")
    if params is None:
        raise ConfigError("params is required")
    m = params.m
    r = float(r)
    if r_min is None:
        r_min = r
    r_min = float(r_min)
    if not r_min < cuts[0]:
        raise DomainError("r_min must lie below the first cut")
    if spec is None:
        spec = QuadratureSpec()

    if fit_window is None:
        fit_window = (r + 2.5 / m, r + 10.0 / m)
    fit_r = list(np.linspace(float(fit_window[0]), float(fit_window[1]), 10))
    fit_res = _two_point_multi(state, tau, r, fit_r, 0.0, spec, params,
                               beta, workers)
    fit = _fit_decay(fit_r, [t.value for t in fit_res],
                     [t.quad_error + t.lsum_error for t in fit_res],
                     "(integrability fit window)")
    kappa, p = fit.decay_rate, fit.power_exponent
    c = float(np.mean([math.log(abs(t.value)) + kappa * rp + p * math.log(rp)
                       for rp, t in zip(fit_r, fit_res)]))

    def model_abs(rp):
        return math.exp(c - kappa * rp - p * math.log(rp))

    floor = max(t.quad_error + t.lsum_error for t in fit_res)
    r_dir = cuts[-1]
    if kappa > 0.0:
        probe = fit_r[0]
        step = max(0.5, 0.5 / m)
        while probe < cuts[-1] and model_abs(probe) > 25.0 * floor:
            probe += step
        r_dir = min(probe, cuts[-1])

    gl_x, gl_w = np.polynomial.legendre.leggauss(12)
    segs = []
    for a, b in _pairwise([r_min] + cuts):
        b_eff = min(b, r_dir)
        if b_eff > a:
            segs.append((a, b_eff, True))
        if b > max(a, r_dir):
            segs.append((max(a, r_dir), b, False))
    direct_nodes = []
    for a, b, direct in segs:
        if direct:
            direct_nodes.extend(0.5 * (b - a) * gl_x + 0.5 * (a + b))
    node_res = _two_point_multi(state, tau, r, direct_nodes, 0.0, spec,
                                params, beta, workers) if direct_nodes else []
    node_iter = iter(node_res)

    def seg_integral(a, b, direct):
        rs = 0.5 * (b - a) * gl_x + 0.5 * (a + b)
        if direct:
            vals = np.asarray([abs(next(node_iter).value) for _ in rs])
        else:
            vals = np.asarray([model_abs(x) for x in rs])
        return float(0.5 * (b - a) * np.dot(gl_w, vals * rs ** 2))

    partial = []
    acc = 0.0
    seg_i = 0
    flagged = []
    for cut in cuts:
        used_model = False
        while seg_i < len(segs) and segs[seg_i][1] <= cut + 1e-12:
            a, b, direct = segs[seg_i]
            acc += seg_integral(a, b, direct)
            used_model = used_model or not direct
            seg_i += 1
        partial.append(acc)
        flagged.append(used_model)

    increments = [partial[0]] + [b - a for a, b in _pairwise(partial)]
    ratios = [inc2 / inc1 if inc1 > 0.0 else math.inf
              for inc1, inc2 in _pairwise(increments)]
    finite = [x for x in ratios if 0.0 < x < math.inf]
    fitted_ratio = float(np.exp(np.mean(np.log(finite)))) if finite else math.inf
    R = cuts[-1]
    if kappa > 0.0:
        s = 3.0 - p
        if 0.0 < s < 170.0:
            tail = math.exp(c) * kappa ** (-s) * float(_gamma_fn(s)) \
                * float(gammaincc(s, kappa * R))
        else:
            # integration-by-parts estimate when the power term is extreme
            kr = kappa * R
            tail = model_abs(R) * R * R / kappa * (1.0 + 2.0 / kr + 2.0 / kr ** 2)
    else:
        tail = math.inf
    converged = bool(fitted_ratio < 1.0 and math.isfinite(tail)
                     and tail <= spec.rel_tol * partial[-1])
    return {
        "cuts": cuts,
        "partial": partial,
        "increments": increments,
        "ratio": fitted_ratio,
        "tail": tail,
        "converged": converged,
        "direct_up_to": r_dir,
        "model_flagged": flagged,
        "fit": {"kappa": kappa, "power": p, "log_coef": c,
                "residual": fit.residual, "window": fit.fit_window},
    }
