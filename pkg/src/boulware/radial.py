"""Radial mode solutions u(r*) for fixed (omega, l).

Two boundary families:

  psi  -- horizon-regular, seeded by a Frobenius series in x = r - 2M
          around the regular singular point and integrated outward;
  phi  -- infinity-normalized, seeded by the large-r asymptotic series
          (outgoing e^{i(qr + alpha ln r)} above threshold, decaying
          e^{-br} r^{-c} below) and integrated inward.

Both directions propagate the locally growing solution through
classically forbidden regions, so the integration is numerically stable.
Solutions are carried either as (u, u') or as (ln u, u'/u); the log form
is mandatory sub-threshold where |u| traverses hundreds of e-folds.
"""

import cmath
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _dp54
from .errors import (ConfigError, ConvergenceError, DegenerateModesError,
                     DomainError, ResidualError, SeedAccuracyError,
                     StepSizeUnderflow, ThresholdError, WindowTooSmall)
from .geometry import (RadialGrid, SpacetimeParams, horizon_gap,
                       potential_derivatives, tortoise)

HORIZON_REGULAR = "HorizonRegular"
INFINITY_OUTGOING = "InfinityOutgoing"
INFINITY_DECAYING = "InfinityDecaying"

THRESHOLD_GAP = 1e-9          # |omega^2 - m^2| below this is rejected
SEED_RESIDUAL_TOL = 1e-8      # relative local ODE residual allowed at a seed
RESIDUAL_FACTOR = 10.0        # a-posteriori mesh residual allowance, x tol
MESH_CAP = 400_000


def _check_omega_l(omega, l):
    if not np.isfinite(omega):
        raise DomainError(f"omega must be finite, got {omega}")
    if int(l) != l or l < 0:
        raise DomainError(f"l must be a nonnegative integer, got {l}")


def _threshold_guard(omega, m):
    if abs(omega * omega - m * m) < THRESHOLD_GAP:
        raise ThresholdError(
            f"|omega^2 - m^2| = {abs(omega**2 - m**2):.2e} is inside the "
            "rejected threshold neighborhood")


def infinity_boundary(omega, params):
    """Boundary tag for the infinity solution at this frequency."""
    return INFINITY_OUTGOING if omega * omega > params.m ** 2 else INFINITY_DECAYING


@dataclass(frozen=True)
class Seed:
    """Asymptotic-series seed: values and log-form at one r* location."""
    kind: str                 # "phi" | "psi"
    boundary: str
    omega: float
    l: int
    r: float
    rstar: float
    u: complex
    du: complex               # du/dr*
    w: complex                # ln u with the series' continuous phase
    z: complex                # (du/dr*) / u
    order: int
    residual: float           # relative local ODE residual of the truncated series


def _phi_exponents(omega, params):
    """(q_e, alpha): u ~ exp(i q_e r + i alpha ln r) at large r.

    q_e = sign(omega) sqrt(omega^2 - m^2) above threshold, i*b below;
    alpha = M (2 omega^2 - m^2) / q_e kills the 1/r term of the phase.
    """
    m = params.m
    diff = omega * omega - m * m
    if diff > 0.0:
        qe = math.copysign(math.sqrt(diff), omega if omega != 0.0 else 1.0)
        qe = complex(qe, 0.0)
    else:
        qe = complex(0.0, math.sqrt(-diff))
    alpha = params.M * (2.0 * omega * omega - m * m) / qe
    return qe, alpha


def _phi_series_tables(omega, l, params, order):
    """Correction coefficients c_0..c_order of the large-r series.

    Recurrence from substituting exp(i(q_e r + alpha ln r)) sum c_k r^-k
    into the reduced equation written in r; closes on the 1/r ladder.
    """
    M = params.M
    m = params.m
    ll = l * (l + 1.0)
    qe, al = _phi_exponents(omega, params)
    # polynomial (in 1/r) coefficients multiplying g, g', g''
    p0 = np.zeros(5, dtype=complex)
    p0[2] = -al * al + 8.0 * M * qe * al - 4.0 * M * M * qe * qe \
        - 1j * al + 2j * M * qe - ll
    p0[3] = 4.0 * M * al * al - 8.0 * M * M * qe * al + 6j * M * al \
        - 4j * M * M * qe + 2.0 * M * (ll - 1.0)
    p0[4] = -4.0 * M * M * al * al - 8j * M * M * al + 4.0 * M * M
    p1 = np.zeros(4, dtype=complex)
    p1[0] = 2j * qe
    p1[1] = 2j * al - 8j * M * qe
    p1[2] = -8j * M * al + 8j * M * M * qe + 2.0 * M
    p1[3] = 8j * M * M * al - 4.0 * M * M
    p2 = np.zeros(3, dtype=complex)
    p2[0] = 1.0
    p2[1] = -4.0 * M
    p2[2] = 4.0 * M * M
    c = np.zeros(order + 1, dtype=complex)
    c[0] = 1.0
    for n in range(2, order + 2):
        acc = 0.0 + 0.0j
        for k in range(0, n - 1):
            term = 0.0 + 0.0j
            i2 = n - k - 2
            if 0 <= i2 <= 2:
                term += k * (k + 1.0) * p2[i2]
            i1 = n - k - 1
            if 0 <= i1 <= 3:
                term -= k * p1[i1]
            i0 = n - k
            if 0 <= i0 <= 4:
                term += p0[i0]
            acc += c[k] * term
        c[n - 1] = acc / (2j * qe * (n - 1))
    return c, qe, al


def _phi_series_eval(c, qe, al, omega, l, params, r):
    """(w, z, residual_rel, order_used) of the truncated series at radius r."""
    M = params.M
    m = params.m
    ll = l * (l + 1.0)
    x = 1.0 / r
    # optimal truncation at the globally smallest term: for large l the
    # term magnitudes first hump upward before the asymptotic decay, so
    # stopping at the first local increase would quit far too early
    n = c.shape[0]
    terms = c * x ** np.arange(n)
    mags = np.abs(terms)
    used = int(np.argmin(mags[1:]) + 1) if n > 1 else 0
    ks = np.arange(used + 1, dtype=float)
    tk = terms[:used + 1]
    g = complex(np.sum(tk))
    gp = complex(np.sum(-ks * tk) * x)
    gpp = complex(np.sum(ks * (ks + 1.0) * tk) * x * x)
    tail = mags[used]
    # local ODE residual of the truncated series (g-space, e^{i phi} removed)
    phip = qe + al * x
    phipp = -al * x * x
    A = 1.0 - 4.0 * M * x + 4.0 * M * M * x * x
    B = 2.0 * M * x * x - 4.0 * M * M * x ** 3
    qsq = omega * omega - m * m
    C = qsq + 2.0 * M * m * m * x - ll * x * x \
        + 2.0 * M * (ll - 1.0) * x ** 3 + 4.0 * M * M * x ** 4
    res = A * (-phip * phip * g + 1j * phipp * g + 2j * phip * gp + gpp) \
        + B * (1j * phip * g + gp) + C * g
    scale = max(abs(qsq), m * m) * max(abs(g), 1e-300)
    res_rel = abs(res) / scale
    f = 1.0 - 2.0 * M * x
    w = 1j * (qe * r + al * cmath.log(r)) + cmath.log(g)
    z = f * (1j * phip + gp / g)
    return w, z, max(res_rel, tail / max(abs(g), 1e-300) * 1e-2), used


def _phi_default_order(l):
    # the useful truncation index grows like sqrt(l(l+1)) before the
    # asymptotic decay takes over
    return min(140, max(24, int(1.6 * math.sqrt(l * (l + 1.0))) + 8))


def seed_phi_infinity(omega, l, params: SpacetimeParams, r_seed=None,
                      order=None):
    """Large-r seed for the infinity-normalized solution u = r*phi.

    Above threshold: u = e^{i(qr + (M/q)(2 omega^2 - m^2) ln r)}
    (1 + c_1/r + ...)/(q i^{l+1}).  Below: u = e^{-br} r^{-c}(1 + ...)
    / i^{l+2} with b = sqrt(m^2 - omega^2) and c = M(m^2 - 2 omega^2)/b
    fixed by the leading large-r balance.
    """
    _check_omega_l(omega, l)
    m = params.m
    _threshold_guard(omega, m)
    if order is None:
        order = _phi_default_order(l)
    if order < 1 or int(order) != order:
        raise DomainError(f"order must be an integer >= 1, got {order}")
    r_floor = 50.0 * max(2.0 * params.M, 1.0 / m)
    if r_seed is None:
        r_seed = max(100.0 * 2.0 * params.M, 100.0 / m)
    if r_seed < r_floor:
        raise DomainError(
            f"r_seed={r_seed} is below the asymptotic floor {r_floor}")
    c, qe, al = _phi_series_tables(omega, l, params, int(order))
    w, z, res, used = _phi_series_eval(c, qe, al, omega, l, params, r_seed)
    # res can be nan when the coefficient table overflowed (large Coulomb
    # parameter at high order); the inverted comparison catches that too
    if not (res <= SEED_RESIDUAL_TOL):
        raise SeedAccuracyError(
            f"series seed residual {res:.2e} at r_seed={r_seed} (l={l}, "
            f"omega={omega}); increase r_seed or lower the order")
    super_thr = omega * omega > m * m
    if super_thr:
        pref = 1.0 / (qe * 1j ** (l + 1))
        boundary = INFINITY_OUTGOING
    else:
        pref = 1j ** (-(l + 2))
        boundary = INFINITY_DECAYING
    w = w + cmath.log(pref)
    # sub-threshold magnitudes may underflow the direct value; w stays exact
    u = cmath.exp(w) if w.real < 700.0 else complex(math.inf, math.inf)
    du = z * u
    return Seed("phi", boundary, float(omega), int(l), float(r_seed),
                float(tortoise(r_seed, params)), u, du, w, z, used, res)


def seed_psi_horizon(omega, l, params: SpacetimeParams, rstar_seed=None,
                     order=10):
    """Frobenius seed u = e^{-i omega r*}(1 + a_1 x + ...), x = r - 2M."""
    _check_omega_l(omega, l)
    M = params.M
    m = params.m
    if M == 0.0:
        raise DomainError("horizon seed needs M > 0")
    if order < 1 or int(order) != order:
        raise DomainError(f"order must be an integer >= 1, got {order}")
    if rstar_seed is None:
        rstar_seed = -30.0 * 2.0 * M
    if rstar_seed > -15.0 * 2.0 * M:
        raise DomainError(
            f"rstar_seed={rstar_seed} is outside the near-horizon regime "
            f"(need <= {-15.0 * 2.0 * M})")
    ll = l * (l + 1.0)
    # x r^2 v'' + (2Mr - 2i w r^3) v' - (m^2 r^3 + l(l+1) r + 2M) v = 0,
    # expanded about x = 0 with r = 2M + x
    p2, p3 = 4.0 * M, 1.0
    q0 = 4.0 * M * M - 16j * omega * M ** 3
    q1 = 2.0 * M - 24j * omega * M * M
    q2 = -12j * omega * M
    q3 = -2j * omega
    r0 = -(8.0 * M ** 3 * m * m + 2.0 * M * ll + 2.0 * M)
    r1 = -(ll + 12.0 * M * M * m * m)
    r2 = -6.0 * M * m * m
    r3 = -m * m
    a = np.zeros(order + 1, dtype=complex)
    a[0] = 1.0
    for N in range(0, order):
        acc = a[N] * (N * (N - 1.0) * p2 + N * q1 + r0)
        if N >= 1:
            acc += a[N - 1] * ((N - 1.0) * (N - 2.0) * p3 + (N - 1.0) * q2 + r1)
        if N >= 2:
            acc += a[N - 2] * ((N - 2.0) * q3 + r2)
        if N >= 3:
            acc += a[N - 3] * r3
        a[N + 1] = -acc / (4.0 * M * M * (N + 1.0) * (N + 1.0 - 4j * omega * M))
    x = horizon_gap(rstar_seed, params)
    pows = x ** np.arange(order + 1)
    v = complex(np.sum(a * pows))
    vx = complex(np.sum(a[1:] * np.arange(1, order + 1) * pows[:-1]))
    vxx = complex(np.sum(a[2:] * np.arange(2, order + 1)
                         * np.arange(1, order) * pows[:-2]))
    r = 2.0 * M + x
    res = x * r * r * vxx + (2.0 * M * r - 2j * omega * r ** 3) * vx \
        - (m * m * r ** 3 + ll * r + 2.0 * M) * v
    scale = (m * m * r ** 3 + ll * r + 2.0 * M) * max(abs(v), 1e-300)
    res_rel = abs(res) / scale
    if not (res_rel <= SEED_RESIDUAL_TOL):
        raise SeedAccuracyError(
            f"Frobenius seed residual {res_rel:.2e} at rstar_seed={rstar_seed}")
    f = x / r
    w = -1j * omega * rstar_seed + cmath.log(v)
    z = -1j * omega + f * vx / v
    u = cmath.exp(w)
    du = z * u
    return Seed("psi", HORIZON_REGULAR, float(omega), int(l), float(r),
                float(rstar_seed), u, du, w, z, int(order), res_rel)


def _wkb_z(omega, l, params, rstar, r):
    """Phase-integral z = u'/u for the infinity solution at one point.

    Orders ik - k'/2k + two corrections, with the third-order term
    estimated by finite differences and used as the accuracy gate.
    """
    def z012(rv):
        V, Vp, Vpp = potential_derivatives(rv, l, params)
        fv = 1.0 - 2.0 * params.M / rv if params.M > 0.0 else 1.0
        fpv = 2.0 * params.M / rv ** 2
        dV = fv * Vp                       # d/dr*
        ddV = fv * (fpv * Vp + fv * Vpp)
        ksq = omega * omega - V
        k = cmath.sqrt(complex(ksq, 0.0))
        if k.imag < 0.0:
            k = -k
        kp = -dV / (2.0 * k)
        kpp = (-ddV - 2.0 * kp * kp) / (2.0 * k)
        z0 = 1j * k
        z1 = -kp / (2.0 * k)
        z1p = -kpp / (2.0 * k) + kp * kp / (2.0 * k * k)
        z2 = 1j * (z1p + z1 * z1) / (2.0 * k)
        return z0 + z1, z2, k
    base, z2, k = z012(r)
    delta = 1e-4 * r
    _, z2p, _ = z012(r + delta)
    _, z2m, _ = z012(r - delta)
    fz = 1.0 - 2.0 * params.M / r if params.M > 0.0 else 1.0
    dz2 = fz * (z2p - z2m) / (2.0 * delta)     # d/dr*
    z1v = base - 1j * k
    z3 = 1j * (dz2 + 2.0 * z1v * z2) / (2.0 * k)
    return base + z2 + z3, abs(z3) / max(abs(k), 1e-300)


def _seed_phi_wkb(omega, l, params, r_seed):
    """Infinity-side seed from the phase integral; normalization-free."""
    rstar = float(tortoise(r_seed, params))
    z, gate = _wkb_z(omega, l, params, rstar, r_seed)
    if gate > 1e-7:
        raise SeedAccuracyError(
            f"phase-integral seed correction {gate:.2e} too large at "
            f"r_seed={r_seed} (l={l}, omega={omega})")
    boundary = infinity_boundary(omega, params)
    return Seed("phi", boundary, float(omega), int(l), float(r_seed), rstar,
                1.0 + 0.0j, z, 0.0 + 0.0j, z, 0, gate)


@dataclass(frozen=True)
class ModeSolution:
    """Sampled radial solution with derivative data on a RadialGrid."""
    omega: float
    l: int
    boundary: str
    grid: RadialGrid
    u: np.ndarray
    du: np.ndarray
    seed_location: float      # r* of the seed
    seed_order: int
    params: SpacetimeParams
    tol: float
    rep: str                  # "linear" | "log" | "log+linear"
    w: Optional[np.ndarray] = None   # ln u (phase continuous per leg)
    z: Optional[np.ndarray] = None   # u'/u when available
    # accepted-step meshes, one (rep, s, y) triple per integration leg
    meshes: tuple = field(default=(), repr=False)

    def __len__(self):
        return len(self.grid)

    def log_magnitude(self):
        """ln|u| on the grid, valid in both representations."""
        if self.w is not None:
            return self.w.real.copy()
        return np.log(np.abs(self.u))

    def phase(self):
        """Continuous arg u on the grid."""
        if self.w is not None:
            return self.w.imag.copy()
        return np.unwrap(np.angle(self.u))


def _seed_state(seed, rep):
    if rep == "log":
        return np.array([seed.w.real, seed.w.imag, seed.z.real, seed.z.imag])
    if not (np.isfinite(seed.u.real) and np.isfinite(seed.u.imag)
            and abs(seed.u) > 0.0):
        raise ConfigError(
            "seed magnitude is outside double range; use the log "
            "representation for this mode")
    return np.array([seed.u.real, seed.u.imag, seed.du.real, seed.du.imag])


def _classical_switch(omega, l, params: SpacetimeParams, s_bottom, s_seed):
    """Outermost r* in [s_bottom, s_seed] with V = omega^2, or None.

    Below threshold the infinity solution is real up to a constant phase
    and develops zeros wherever omega^2 > V, so the log representation
    must stop at the outermost classical turning point.  Returns the
    crossing (on its forbidden side), s_seed itself when even the seed
    radius is classically allowed (possible just under threshold, where
    the potential dips below m^2), or None when the whole span is
    forbidden.
    """
    omsq = omega * omega
    m2 = params.m ** 2
    ll = l * (l + 1.0)
    span = s_seed - s_bottom
    if span <= 0.0:
        return None
    n = int(min(4000.0, max(600.0, span * max(abs(omega), 1e-3))))
    scan = np.linspace(s_bottom, s_seed, n)
    V = np.empty(n)
    scratch1 = np.empty(n)
    scratch2 = np.empty(n)
    _dp54._potential_batch(scan, params.M, m2, ll, V, scratch1, scratch2)
    below = V < omsq
    if not below.any():
        return None
    i = int(np.nonzero(below)[0][-1])
    if i == n - 1:
        return s_seed
    lo, hi = scan[i], scan[i + 1]
    one = np.empty(1)
    d1 = np.empty(1)
    d2 = np.empty(1)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        _dp54._potential_batch(np.array([mid]), params.M, m2, ll, one, d1, d2)
        if one[0] < omsq:
            lo = mid
        else:
            hi = mid
    return hi


def _run_leg(rep, params, m2, ll, omsq, s0, y0, s_end, out_s, y_out, tol,
             h0, max_steps, omega, l):
    mesh_s = np.empty(MESH_CAP)
    mesh_y = np.empty((MESH_CAP, 4))
    status, nsteps, nout, nmesh = _dp54._leg(
        _dp54.REP_LOG if rep == "log" else _dp54.REP_LINEAR,
        params.M, m2, ll, omsq, s0, y0, s_end, out_s, y_out,
        tol, 1e-300, 0.02 * tol, h0, max_steps, mesh_s, mesh_y, True)
    if status == _dp54.STATUS_UNDERFLOW:
        raise StepSizeUnderflow(
            f"step controller stalled (omega={omega}, l={l}, rep={rep})")
    if status != _dp54.STATUS_OK or nout < out_s.size:
        raise ConvergenceError(
            f"integration failed with status {status} after {nsteps} steps "
            f"(omega={omega}, l={l}, rep={rep})")
    return mesh_s[:nmesh].copy(), mesh_y[:nmesh].copy()


def integrate_mode(seed: Seed, target_grid: RadialGrid,
                   params: SpacetimeParams, omega=None, l=None, tol=1e-8,
                   rep=None, check_residual=True,
                   max_steps=2_000_000) -> ModeSolution:
    """Propagate a seed across target_grid with the adaptive RK pair.

    The seed location must be an endpoint of the grid.  tol is the local
    relative error target, within [1e-12, 1e-4]; an a-posteriori residual
    check on the accepted mesh enforces the documented 10x-tol bound.
    Sub-threshold infinity modes switch to the linear representation at
    the outermost classical turning point (real solutions have zeros in
    the allowed region, where a logarithmic derivative blows up).
    """
    omega = seed.omega if omega is None else omega
    l = seed.l if l is None else l
    _check_omega_l(omega, l)
    if omega == 0.0:
        raise DomainError("omega = 0 is rejected; it enters only as a "
                          "regulated limit in the frequency integrals")
    if not (1e-12 <= tol <= 1e-4):
        raise DomainError(f"tol={tol} outside [1e-12, 1e-4]")
    pts = target_grid.points
    if abs(seed.rstar - pts[0]) <= 1e-9 * (1.0 + abs(seed.rstar)):
        outward = True
    elif abs(seed.rstar - pts[-1]) <= 1e-9 * (1.0 + abs(seed.rstar)):
        outward = False
    else:
        raise DomainError(
            f"seed location r*={seed.rstar} is not an endpoint of the grid "
            f"[{pts[0]}, {pts[-1]}]")
    if rep is None:
        rep = "log" if seed.kind == "phi" else "linear"
    m2 = params.m ** 2
    ll = l * (l + 1.0)
    omsq = omega * omega
    s_switch = None
    if (seed.kind == "phi" and rep == "log" and not outward
            and omsq < m2):
        s_switch = _classical_switch(omega, l, params, pts[0], seed.rstar)
    out_s = pts.copy() if outward else pts[::-1].copy()
    kb = max(1.0, abs(seed.z))
    if s_switch is not None:
        y_log, meshes = _phi_two_leg(seed, out_s, s_switch, params, m2, ll,
                                     omsq, tol, kb, max_steps, omega, l)
        y_out = y_log[::-1]
        rep = "log+linear"
    else:
        y0 = _seed_state(seed, rep)
        y_out = np.empty((out_s.size, 4))
        mesh_s, mesh_y = _run_leg(rep, params, m2, ll, omsq, seed.rstar, y0,
                                  out_s[-1], out_s, y_out, tol, 0.3 / kb,
                                  max_steps, omega, l)
        if not outward:
            y_out = y_out[::-1]
        meshes = ((rep, mesh_s, mesh_y),)
    if rep in ("log", "log+linear"):
        w = y_out[:, 0] + 1j * y_out[:, 1]
        z = y_out[:, 2] + 1j * y_out[:, 3]
        with np.errstate(over="ignore", under="ignore"):
            u = np.exp(w)
            du = z * u
    else:
        w = None
        z = None
        u = y_out[:, 0] + 1j * y_out[:, 1]
        du = y_out[:, 2] + 1j * y_out[:, 3]
    mode = ModeSolution(float(omega), int(l), seed.boundary, target_grid,
                        u, du, seed.rstar, seed.order, params, tol, rep,
                        w, z, meshes)
    if check_residual:
        report = residual_check(mode)
        if not report["passed"]:
            raise ResidualError(
                f"mesh residual {report['max_scaled']:.2e} exceeds "
                f"{report['threshold']:.2e} (omega={omega}, l={l})")
    return mode


def _phi_two_leg(seed, out_desc, s_switch, params, m2, ll, omsq, tol, kb,
                 max_steps, omega, l):
    """Inward infinity-mode integration split at the classical turning point.

    Returns (rows, meshes) with rows in log form [Re w, Im w, Re z, Im z]
    on out_desc (descending).  The linear leg carries the magnitude offset
    Re w accumulated up to the switch, so nothing over- or underflows.
    """
    n = out_desc.size
    n_hi = int(np.sum(out_desc > s_switch))
    rows = np.empty((n, 4))
    meshes = []
    skip_log = s_switch >= seed.rstar - 1e-12 * (1.0 + abs(seed.rstar))
    if skip_log:
        w_end = seed.w
        z_end = seed.z
        s_start = seed.rstar
    else:
        ext_s = np.append(out_desc[:n_hi], s_switch)
        ext_y = np.empty((n_hi + 1, 4))
        y0 = _seed_state(seed, "log")
        mesh_s, mesh_y = _run_leg("log", params, m2, ll, omsq, seed.rstar,
                                  y0, s_switch, ext_s, ext_y, tol, 0.3 / kb,
                                  max_steps, omega, l)
        rows[:n_hi] = ext_y[:n_hi]
        w_end = complex(ext_y[n_hi, 0], ext_y[n_hi, 1])
        z_end = complex(ext_y[n_hi, 2], ext_y[n_hi, 3])
        s_start = s_switch
        meshes.append(("log", mesh_s, mesh_y))
    w_off = w_end.real
    u0 = complex(math.cos(w_end.imag), math.sin(w_end.imag))
    du0 = z_end * u0
    y1 = np.array([u0.real, u0.imag, du0.real, du0.imag])
    one = np.empty(1)
    d1 = np.empty(1)
    d2 = np.empty(1)
    _dp54._potential_batch(np.array([s_start]), params.M, m2, ll, one, d1, d2)
    kb2 = math.sqrt(abs(omsq - one[0])) + 1e-8
    lin = np.empty((n - n_hi, 4))
    mesh_s, mesh_y = _run_leg("linear", params, m2, ll, omsq, s_start, y1,
                              out_desc[-1], out_desc[n_hi:], lin, tol,
                              0.5 / kb2, max_steps, omega, l)
    meshes.append(("linear", mesh_s, mesh_y))
    mag = np.hypot(lin[:, 0], lin[:, 1])
    rows[n_hi:, 0] = w_off + np.log(mag)
    rows[n_hi:, 1] = np.arctan2(lin[:, 1], lin[:, 0])
    den = mag * mag
    rows[n_hi:, 2] = (lin[:, 2] * lin[:, 0] + lin[:, 3] * lin[:, 1]) / den
    rows[n_hi:, 3] = (lin[:, 3] * lin[:, 0] - lin[:, 2] * lin[:, 1]) / den
    return rows, tuple(meshes)


def residual_check(mode: ModeSolution):
    """A-posteriori ODE residual on the accepted integration mesh.

    Reconstructs the solution on each mesh interval by septic Hermite
    interpolation (values plus first, second and third derivatives at
    both ends, the higher ones supplied by the equation itself) and
    evaluates the defect at the midpoint, scaled by the local equation
    magnitude.  Threshold: 10 x integration tolerance.
    """
    if not mode.meshes or sum(leg[1].size for leg in mode.meshes) < 3:
        raise DomainError("mode carries no integration mesh")
    worst = 0.0
    count = 0
    for rep, s, y in mode.meshes:
        if s.size < 2:
            continue
        leg_worst, leg_count = _leg_residual(rep, s, y, mode)
        worst = max(worst, leg_worst)
        count += leg_count
    threshold = max(RESIDUAL_FACTOR * mode.tol, 5e-13)
    return {"max_scaled": worst, "threshold": threshold,
            "passed": worst <= threshold, "n_intervals": count}


def _leg_residual(rep, s, y, mode):
    m2 = mode.params.m ** 2
    ll = mode.l * (mode.l + 1.0)
    omsq = mode.omega ** 2
    n = s.size
    V = np.empty(n)
    dV = np.empty(n)
    d2V = np.empty(n)
    _dp54._potential_batch(s, mode.params.M, m2, ll, V, dV, d2V)
    Wq = V - omsq
    h = np.diff(s)
    mid = 0.5 * (s[:-1] + s[1:])
    Vm = np.empty(mid.size)
    dVm = np.empty(mid.size)
    d2Vm = np.empty(mid.size)
    _dp54._potential_batch(mid, mode.params.M, m2, ll, Vm, dVm, d2Vm)
    Wqm = Vm - omsq
    if rep == "log":
        zc = y[:, 2] + 1j * y[:, 3]
        val = zc
        d1 = Wq - zc * zc                  # z' = (V - w^2) - z^2
        d2 = dV - 2.0 * zc * d1
        d3 = d2V - 2.0 * (d1 * d1 + zc * d2)
    else:
        val = y[:, 0] + 1j * y[:, 1]
        d1 = y[:, 2] + 1j * y[:, 3]
        d2 = Wq * val
        d3 = dV * val + Wq * d1
    a0 = val[:-1]
    a1 = d1[:-1] * h
    a2 = 0.5 * d2[:-1] * h * h
    a3 = d3[:-1] * h * h * h / 6.0
    A = val[1:] - a0 - a1 - a2 - a3
    B = d1[1:] * h - a1 - 2.0 * a2 - 3.0 * a3
    C = d2[1:] * h * h - 2.0 * a2 - 6.0 * a3
    D = d3[1:] * h * h * h - 6.0 * a3
    a4 = 35.0 * A - 15.0 * B + 2.5 * C - D / 6.0
    a5 = -84.0 * A + 39.0 * B - 7.0 * C + 0.5 * D
    a6 = 70.0 * A - 34.0 * B + 6.5 * C - 0.5 * D
    a7 = -20.0 * A + 10.0 * B - 2.0 * C + D / 6.0
    pm = (a0 + 0.5 * a1 + 0.25 * a2 + 0.125 * a3 + 0.0625 * a4
          + 0.03125 * a5 + 0.015625 * a6 + 0.0078125 * a7)
    ppm = (a1 + a2 + 0.75 * a3 + 0.5 * a4 + 0.3125 * a5 + 0.1875 * a6
           + 0.109375 * a7) / h
    if rep == "log":
        resid = ppm + pm * pm - Wqm
        scale = np.maximum(np.abs(Wqm), np.abs(pm) ** 2) + m2
    else:
        ppp = (2.0 * a2 + 3.0 * a3 + 3.0 * a4 + 2.5 * a5 + 1.875 * a6
               + 1.3125 * a7) / (h * h)
        resid = ppp - Wqm * pm
        mag = np.maximum.reduce([np.abs(a0), np.abs(val[1:]), np.abs(pm)])
        scale = (np.abs(Wqm) + m2 + 1.0 / (1.0 + mid * mid)) * mag + 1e-300
    scaled = np.abs(resid) / scale
    leg_worst = float(np.max(scaled)) if scaled.size else 0.0
    return leg_worst, int(scaled.size)


def solve_mode(boundary, omega, l, params: SpacetimeParams,
               grid: RadialGrid, tol=1e-8, r_seed=None, rstar_seed=None,
               order=None, rep=None) -> ModeSolution:
    """Seed automatically and integrate across grid (extended to the seed).

    boundary: "infinity" (phi family) or "horizon" (psi family), or the
    explicit boundary tag.  The returned solution lives on the input grid
    plus the seed point appended as the new endpoint.
    """
    _check_omega_l(omega, l)
    if boundary in ("infinity", INFINITY_OUTGOING, INFINITY_DECAYING):
        auto_seed = r_seed is None
        if auto_seed:
            base = max(100.0 * 2.0 * params.M, 100.0 / params.m)
            top = grid.radii[-1]
            r_seed = max(base, 1.05 * top + 5.0, _series_radius(omega, l, params))
        seed = None
        for _ in range(5):
            try:
                seed = seed_phi_infinity(omega, l, params, r_seed=r_seed,
                                         order=order)
                break
            except SeedAccuracyError:
                if not auto_seed:
                    raise
                r_seed *= 1.6
        if seed is None:
            seed = seed_phi_infinity(omega, l, params, r_seed=r_seed,
                                     order=order)
        pts = np.append(grid.points, seed.rstar)
        gap = np.append(grid.gap, seed.r - 2.0 * params.M)
    elif boundary in ("horizon", HORIZON_REGULAR):
        if rstar_seed is None:
            rstar_seed = min(-30.0 * 2.0 * params.M,
                             grid.points[0] - 2.0 * params.M)
        seed = seed_psi_horizon(omega, l, params, rstar_seed=rstar_seed,
                                order=10 if order is None else order)
        # exact gap at the seed: r - 2M loses the value to rounding here
        pts = np.append(seed.rstar, grid.points)
        gap = np.append(horizon_gap(seed.rstar, params), grid.gap)
    else:
        raise ConfigError(f"unknown boundary {boundary!r}")
    ext = RadialGrid(points=pts, gap=gap, params=params)
    return integrate_mode(seed, ext, params, omega, l, tol=tol, rep=rep)


def _series_radius(omega, l, params):
    """Radius beyond which the large-r series converges comfortably."""
    qe, al = _phi_exponents(omega, params)
    K, ratio = 28.0, 0.3
    ll = l * (l + 1.0)
    return (K * K + abs(al) ** 2 + ll) / (2.0 * abs(qe) * K * ratio)


@dataclass(frozen=True)
class WronskianResult:
    value: complex
    spread: float             # relative rms of the pointwise values
    n_points: int

    def __complex__(self):
        return self.value


def wronskian(phi: ModeSolution, psi: ModeSolution) -> WronskianResult:
    """W = u_phi u_psi' - u_phi' u_psi in r*, averaged over the overlap.

    Computed in log space so sub-threshold magnitudes cannot overflow.
    Raises DegenerateModesError when |W| falls below 1e-10 of the
    natural product scale (solutions not independent).
    """
    if phi.omega != psi.omega or phi.l != psi.l or phi.params != psi.params:
        raise DomainError("wronskian requires matching (omega, l, params)")
    ia, ib = _overlap_indices(phi.grid.points, psi.grid.points)
    if ia.size == 0:
        raise DomainError("mode grids do not overlap")
    lw_phi, z_phi = _log_form(phi, ia)
    lw_psi, z_psi = _log_form(psi, ib)
    with np.errstate(divide="ignore", invalid="ignore"):
        ln_w = lw_phi + lw_psi + np.log((z_psi - z_phi).astype(complex))
        ref = np.max(ln_w.real)
        vals = np.exp(ln_w - ref)
    vals = np.where(np.isfinite(vals), vals, 0.0)
    mean = np.mean(vals)
    # product scale |u_phi| |u_psi'| for the degeneracy gate, in logs
    ln_scale = np.max(lw_phi.real + lw_psi.real + np.log(np.abs(z_psi) + 1e-300))
    if not np.isfinite(ref) or ref + math.log(max(abs(mean), 1e-300)) \
            < math.log(1e-10) + ln_scale:
        raise DegenerateModesError(
            f"Wronskian below independence threshold at omega={phi.omega}, "
            f"l={phi.l}")
    spread = float(np.sqrt(np.mean(np.abs(vals - mean) ** 2)) / abs(mean))
    value = complex(mean * np.exp(ref))
    return WronskianResult(value, spread, int(ia.size))


def _overlap_indices(pa, pb):
    """Index pairs where the two r* grids coincide (1e-9 mixed tol)."""
    ib = np.searchsorted(pb, pa)
    ib = np.clip(ib, 0, pb.size - 1)
    left = np.clip(ib - 1, 0, pb.size - 1)
    use_left = np.abs(pb[left] - pa) < np.abs(pb[ib] - pa)
    ib = np.where(use_left, left, ib)
    ok = np.abs(pb[ib] - pa) <= 1e-9 * (1.0 + np.abs(pa))
    return np.nonzero(ok)[0], ib[ok]


def _log_form(mode: ModeSolution, idx):
    if mode.w is not None:
        return mode.w[idx], mode.z[idx]
    u = mode.u[idx]
    du = mode.du[idx]
    if np.any(u == 0.0):
        raise DomainError("linear-representation mode has a zero sample; "
                          "cannot form log data at that point")
    return np.log(u), du / u


@dataclass(frozen=True)
class AsymptoticFit:
    """Least-squares fit of a mode against its asymptotic model.

    model "phase-outgoing": arg u = slope*r + logcoef*ln r + const
      (phase_slope = slope, power_exponent = logcoef);
    model "decay": ln|u| = -decay_rate*r - power_exponent*ln r + const;
    model "phase-horizon": arg u = phase_slope*r* + const.
    """
    phase_slope: Optional[float]
    decay_rate: Optional[float]
    power_exponent: Optional[float]
    fit_window: tuple
    residual: float
    model: str
    coordinate: str
    n_points: int


def fit_asymptotics(mode: ModeSolution, window) -> AsymptoticFit:
    """Fit the windowed samples against the boundary-appropriate model."""
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise DomainError(f"empty fit window {window}")
    params = mode.params
    if mode.boundary == HORIZON_REGULAR:
        coord = mode.grid.points
        limit = -15.0 * 2.0 * params.M
        if hi > limit + 1e-9:
            raise DomainError(
                f"window [{lo}, {hi}] leaves the near-horizon regime "
                f"(r* <= {limit})")
    else:
        coord = mode.grid.radii
        floor = 50.0 * max(2.0 * params.M, 1.0 / params.m)
        if lo < floor - 1e-9:
            raise DomainError(
                f"window [{lo}, {hi}] begins below the asymptotic floor "
                f"{floor}")
    sel = (coord >= lo - 1e-12) & (coord <= hi + 1e-12)
    x = coord[sel]
    if x.size < 16:
        raise WindowTooSmall(
            f"{x.size} samples in window [{lo}, {hi}]; need at least 16")
    if mode.boundary == INFINITY_OUTGOING:
        y = mode.phase()[sel]
        # nuisance 1/r column absorbs the first series correction
        A = np.column_stack([x, np.log(x), np.ones_like(x), 1.0 / x])
        coef, rms = _lstsq(A, y)
        return AsymptoticFit(float(coef[0]), None, float(coef[1]),
                             (lo, hi), rms, "phase-outgoing", "r", x.size)
    if mode.boundary == INFINITY_DECAYING:
        y = mode.log_magnitude()[sel]
        A = np.column_stack([x, np.log(x), np.ones_like(x), 1.0 / x])
        coef, rms = _lstsq(A, y)
        return AsymptoticFit(None, float(-coef[0]), float(-coef[1]),
                             (lo, hi), rms, "decay", "r", x.size)
    y = mode.phase()[sel]
    A = np.column_stack([x, np.ones_like(x)])
    coef, rms = _lstsq(A, y)
    return AsymptoticFit(float(coef[0]), None, None, (lo, hi), rms,
                         "phase-horizon", "rstar", x.size)


def _lstsq(A, y):
    coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    rms = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return coef, rms
