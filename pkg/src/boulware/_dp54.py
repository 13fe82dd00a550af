"""Adaptive Dormand-Prince 5(4) integration of the reduced mode equation.

Two state representations share one stepper:

  linear: y = [Re u, Im u, Re u', Im u'],     u'' = (V - omega^2) u
  log:    y = [Re w, Im w, Re z, Im z],       w = ln u,  z' = (V-omega^2) - z^2

Derivatives are with respect to r*.  The log form is used on spans where z
is smooth (traveling waves, classically forbidden regions) and for
solutions whose magnitude leaves the double range; the linear form is used
on oscillatory spans with standing-wave content, where z has near-poles.
Boundary solutions with complex Wronskian against their conjugate never
vanish, so ln u is well defined along every leg we integrate.

V is evaluated from r* through the exact gap variable (Newton with warm
start per RHS call), so the potential stays accurate arbitrarily close to
the horizon.  No fastmath anywhere: results must be bitwise independent of
threading and worker count.
"""

import cmath
import math

import numpy as np
from numba import njit

REP_LINEAR = 0
REP_LOG = 1

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_MAXSTEPS = 2
STATUS_NAN = 3

# Dormand-Prince coefficients (classic RK45 pair)
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = (19372.0 / 6561.0, -25360.0 / 2187.0,
                          64448.0 / 6561.0, -212.0 / 729.0)
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0,
                                46732.0 / 5247.0, 49.0 / 176.0,
                                -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                           -2187.0 / 6784.0, 11.0 / 84.0)
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

# Gauss-Legendre rules for the WKB fast-forward chunks
_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)
_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)
# gates on the first and second WKB corrections relative to |sqrt(Q)|;
# the neglected third-order term is bounded by their product, which keeps
# the branch admixture at handoff below the radial tolerance floor
_FF_G1 = 0.04
_FF_G2 = 3.0e-6
# two-branch transport: differential phase errors between the branches do
# not cancel in anything, so the accumulated defect proxy gets a hard
# per-leg budget in radians
_FF_BUDGET = 2.5e-7


@njit(cache=True, nogil=True, inline="always")
def _potential(rstar, M, m2, ll, s_warm, th_warm):
    """V(r(r*)) with warm-started Newton inversion; returns (V, s, theta)."""
    if M == 0.0:
        return ll / (rstar * rstar) + m2, 0.0, 0.0
    twoM = 2.0 * M
    theta = (rstar - twoM) / twoM
    if abs(theta - th_warm) <= 3.0:
        s = s_warm
    elif theta > 40.0:
        s = math.log(theta - math.log(theta))
    elif theta < -33.0:
        s = theta - math.exp(theta)
    elif theta > 1.0:
        s = math.log(theta)
    else:
        s = theta - math.exp(min(theta, 0.5))
    for _ in range(40):
        es = math.exp(s)
        delta = (es + s - theta) / (es + 1.0)
        s -= delta
        if abs(delta) <= 1e-15 * (1.0 + abs(s)):
            break
    es = math.exp(s)
    f = es / (1.0 + es)
    r = twoM * (1.0 + es)
    inv = 1.0 / r
    V = f * ((ll + twoM * inv) * inv * inv + m2)
    return V, s, theta


@njit(cache=True, nogil=True)
def _potential_batch(rstar_arr, M, m2, ll, out_V, out_dV, out_d2V):
    """V, dV/dr*, d2V/dr*2 at each r* point (exact gap near the horizon)."""
    sw = 0.0
    tw = 1e300
    for i in range(rstar_arr.shape[0]):
        s = rstar_arr[i]
        if M == 0.0:
            out_V[i] = ll / (s * s) + m2
            out_dV[i] = -2.0 * ll / (s * s * s)
            out_d2V[i] = 6.0 * ll / (s * s * s * s)
            continue
        V, sw, tw = _potential(s, M, m2, ll, sw, tw)
        es = math.exp(sw)
        f = es / (1.0 + es)
        r = 2.0 * M * (1.0 + es)
        inv = 1.0 / r
        U = (ll + 2.0 * M * inv) * inv * inv + m2
        Up = (-2.0 * ll - 6.0 * M * inv) * inv * inv * inv
        Upp = (6.0 * ll + 24.0 * M * inv) * inv * inv * inv * inv
        fp = 2.0 * M * inv * inv
        fpp = -4.0 * M * inv * inv * inv
        out_V[i] = V
        out_dV[i] = f * (fp * U + f * Up)
        out_d2V[i] = f * (fp * fp * U + 3.0 * f * fp * Up + f * fpp * U
                          + f * f * Upp)
    return 0


@njit(cache=True, nogil=True, inline="always")
def _potential_grad(s, M, m2, ll, sw, tw):
    """(V, dV/dr*, d2V/dr*^2) with the warm-started horizon chain."""
    if M == 0.0:
        s3 = s * s * s
        return ll / (s * s) + m2, -2.0 * ll / s3, 6.0 * ll / (s3 * s), sw, tw
    V, sw, tw = _potential(s, M, m2, ll, sw, tw)
    es = math.exp(sw)
    f = es / (1.0 + es)
    r = 2.0 * M * (1.0 + es)
    inv = 1.0 / r
    U = (ll + 2.0 * M * inv) * inv * inv + m2
    Up = (-2.0 * ll - 6.0 * M * inv) * inv * inv * inv
    Upp = (6.0 * ll + 24.0 * M * inv) * inv * inv * inv * inv
    fp = 2.0 * M * inv * inv
    fpp = -4.0 * M * inv * inv * inv
    dV = f * (fp * U + f * Up)
    d2V = f * (fp * fp * U + 3.0 * f * fp * Up + f * fpp * U + f * f * Upp)
    return V, dV, d2V, sw, tw


@njit(cache=True, nogil=True, inline="always")
def _wkb_branch_z(Q, dV, d2V, br):
    """Third-order WKB logarithmic derivative on branch br = +-1.

    For z' = Q - z^2 the expansion around z0 = br sqrt(Q) gives
    d1 = -Q'/(4Q) and d2 = (4 Q Q'' - 5 Q'^2) / (32 Q^2 z0); returns
    (z0 + d1 + d2, |d1|, |d2|, |z0|).
    """
    rt = cmath.sqrt(complex(Q, 0.0))
    z0 = br * rt
    d1 = -dV / (4.0 * Q)
    d2 = (4.0 * Q * d2V - 5.0 * dV * dV) / (32.0 * Q * Q * z0)
    return z0 + d1 + d2, abs(d1), abs(d2), abs(z0)


@njit(cache=True, nogil=True)
def _ff_leg(M, m2, ll, omsq, s0, wre, wim, zre, zim, s_stop):
    """Fast-forward a log leg across smooth WKB spans toward s_stop.

    Advances (w, z) in large chunks by Gauss integration of the WKB
    logarithmic derivative, halving a chunk whenever a correction gate
    fails, Q changes sign, or the nested rules disagree; gives up (and
    returns the state reached) once chunks stop shrinking usefully.
    Truncation shifts w by a near-constant offset, which cancels in the
    ratio of boundary solutions over their Wronskian; the handoff z is a
    fresh WKB evaluation, so the admixed wrong-branch amplitude stays at
    the gate level.  Returns (s_reached, Re w, Im w, Re z, Im z).
    """
    s = s0
    w = complex(wre, wim)
    z = complex(zre, zim)
    sgn = 1.0 if s_stop >= s0 else -1.0
    remaining = sgn * (s_stop - s)
    if remaining <= 1e-12 * (1.0 + abs(s)):
        return s, w.real, w.imag, z.real, z.imag
    sw = 0.0
    tw = 1e300
    V, dV, d2V, sw, tw = _potential_grad(s, M, m2, ll, sw, tw)
    Q = V - omsq
    if Q == 0.0 or not math.isfinite(Q):
        return s, w.real, w.imag, z.real, z.imag
    rt = cmath.sqrt(complex(Q, 0.0))
    br = 1.0
    if abs(-rt - z) < abs(rt - z):
        br = -1.0
    zw, a1, a2, a0 = _wkb_branch_z(Q, dV, d2V, br)
    # the incoming state must already sit on a WKB branch
    if not (abs(zw - z) <= 0.25 * a0 and a1 <= _FF_G1 * a0
            and a2 <= _FF_G2 * a0):
        return s, w.real, w.imag, z.real, z.imag
    sign0 = 1.0 if Q > 0.0 else -1.0
    h = remaining
    chunks = 0
    fails = 0
    while remaining > 1e-12 * (1.0 + abs(s)) and chunks < 1000:
        chunks += 1
        if h > remaining:
            h = remaining
        hs = sgn * h
        good = True
        acc16 = complex(0.0, 0.0)
        acc8 = complex(0.0, 0.0)
        zw_e = complex(0.0, 0.0)
        for i in range(16):
            si = s + hs * 0.5 * (_GL16_X[i] + 1.0)
            V, dV, d2V, sw, tw = _potential_grad(si, M, m2, ll, sw, tw)
            Q = V - omsq
            if (not math.isfinite(Q)) or Q * sign0 <= 0.0:
                good = False
                break
            zw, a1, a2, a0 = _wkb_branch_z(Q, dV, d2V, br)
            if not (a1 <= _FF_G1 * a0 and a2 <= _FF_G2 * a0):
                good = False
                break
            acc16 += _GL16_W[i] * zw
        if good:
            for i in range(8):
                si = s + hs * 0.5 * (_GL8_X[i] + 1.0)
                V, dV, d2V, sw, tw = _potential_grad(si, M, m2, ll, sw, tw)
                Q = V - omsq
                if (not math.isfinite(Q)) or Q * sign0 <= 0.0:
                    good = False
                    break
                zw, a1, a2, a0 = _wkb_branch_z(Q, dV, d2V, br)
                if not (a1 <= _FF_G1 * a0 and a2 <= _FF_G2 * a0):
                    good = False
                    break
                acc8 += _GL8_W[i] * zw
        if good:
            se = s + hs
            V, dV, d2V, sw, tw = _potential_grad(se, M, m2, ll, sw, tw)
            Q = V - omsq
            if (not math.isfinite(Q)) or Q * sign0 <= 0.0:
                good = False
            else:
                zw_e, a1, a2, a0 = _wkb_branch_z(Q, dV, d2V, br)
                if not (a1 <= _FF_G1 * a0 and a2 <= _FF_G2 * a0):
                    good = False
        if good:
            i16 = 0.5 * hs * acc16
            i8 = 0.5 * hs * acc8
            if abs(i16 - i8) > 1e-8 * (1.0 + abs(i16)):
                good = False
        if not good:
            fails += 1
            h *= 0.5
            if h < 1e-3 * (1.0 + abs(s)) or fails > 200:
                break
            continue
        w += 0.5 * hs * acc16
        s = s + hs
        z = zw_e
        remaining = sgn * (s_stop - s)
        h *= 3.0
    return s, w.real, w.imag, z.real, z.imag


# looser correction gates for the two-branch transport: d2 is carried in
# the exponent there, so only the third-order defect (budget-tracked)
# is dropped
_FF_G1T = 0.04
_FF_G2T = 3.0e-5


@njit(cache=True, nogil=True)
def _ff_linear(M, m2, ll, omsq, s0, ure, uim, upre, upim, s_stop, acc0):
    """Transport a linear-rep state across a smooth oscillatory span.

    Decomposes (u, u') onto the two third-order WKB branches at s0,
    advances the branch amplitudes by Gauss integration of the branch
    exponent, and recombines exactly at the point reached.  Unlike the
    single-branch fast-forward the branch phases enter differentially and
    nothing cancels downstream, so the integrated defect proxy
    |d1 d2 / z0| is charged against the hard budget acc0; the chunk
    quadrature gate is correspondingly tighter.  Requires Q < 0 throughout.
    Returns (s_reached, Re u, Im u, Re u', Im u', acc).
    """
    s = s0
    sgn = 1.0 if s_stop >= s0 else -1.0
    remaining = sgn * (s_stop - s)
    if remaining <= 1e-12 * (1.0 + abs(s)) or acc0 >= _FF_BUDGET:
        return s, ure, uim, upre, upim, acc0
    sw = 0.0
    tw = 1e300
    V, dV, d2V, sw, tw = _potential_grad(s, M, m2, ll, sw, tw)
    Q = V - omsq
    if (not math.isfinite(Q)) or Q >= 0.0:
        return s, ure, uim, upre, upim, acc0
    zp, a1, a2, a0 = _wkb_branch_z(Q, dV, d2V, 1.0)
    if not (a1 <= _FF_G1T * a0 and a2 <= _FF_G2T * a0):
        return s, ure, uim, upre, upim, acc0
    # for Q < 0 the d1 term is real while z0 and d2 are imaginary, so the
    # second branch is the exact conjugate
    zm = zp.conjugate()
    u = complex(ure, uim)
    up = complex(upre, upim)
    det = zp - zm
    A = (up - zm * u) / det
    B = (zp * u - up) / det
    acc = acc0
    h = remaining
    chunks = 0
    fails = 0
    moved = False
    zp_end = zp
    while remaining > 1e-12 * (1.0 + abs(s)) and chunks < 1000:
        chunks += 1
        if h > remaining:
            h = remaining
        hs = sgn * h
        good = True
        acc16 = complex(0.0, 0.0)
        acc8 = complex(0.0, 0.0)
        dacc = 0.0
        zw_e = complex(0.0, 0.0)
        for i in range(16):
            si = s + hs * 0.5 * (_GL16_X[i] + 1.0)
            V, dV, d2V, sw, tw = _potential_grad(si, M, m2, ll, sw, tw)
            Q = V - omsq
            if (not math.isfinite(Q)) or Q >= 0.0:
                good = False
                break
            zw, a1, a2, a0 = _wkb_branch_z(Q, dV, d2V, 1.0)
            if not (a1 <= _FF_G1T * a0 and a2 <= _FF_G2T * a0):
                good = False
                break
            acc16 += _GL16_W[i] * zw
            dacc += _GL16_W[i] * (a1 * a2 / a0)
        if good:
            for i in range(8):
                si = s + hs * 0.5 * (_GL8_X[i] + 1.0)
                V, dV, d2V, sw, tw = _potential_grad(si, M, m2, ll, sw, tw)
                Q = V - omsq
                if (not math.isfinite(Q)) or Q >= 0.0:
                    good = False
                    break
                zw, a1, a2, a0 = _wkb_branch_z(Q, dV, d2V, 1.0)
                if not (a1 <= _FF_G1T * a0 and a2 <= _FF_G2T * a0):
                    good = False
                    break
                acc8 += _GL8_W[i] * zw
        if good:
            se = s + hs
            V, dV, d2V, sw, tw = _potential_grad(se, M, m2, ll, sw, tw)
            Q = V - omsq
            if (not math.isfinite(Q)) or Q >= 0.0:
                good = False
            else:
                zw_e, a1, a2, a0 = _wkb_branch_z(Q, dV, d2V, 1.0)
                if not (a1 <= _FF_G1T * a0 and a2 <= _FF_G2T * a0):
                    good = False
        if good:
            i16 = 0.5 * hs * acc16
            i8 = 0.5 * hs * acc8
            if abs(i16 - i8) > 2e-9 * (1.0 + abs(i16)):
                good = False
        if good:
            d_used = 0.5 * h * dacc
            if acc + d_used > _FF_BUDGET:
                break
            ip = 0.5 * hs * acc16
            A *= cmath.exp(ip)
            B *= cmath.exp(ip.conjugate())
            acc += d_used
            s = s + hs
            zp_end = zw_e
            moved = True
            remaining = sgn * (s_stop - s)
            h *= 3.0
        else:
            fails += 1
            h *= 0.5
            if h < 1e-3 * (1.0 + abs(s)) or fails > 200:
                break
    if not moved:
        return s, ure, uim, upre, upim, acc
    zp = zp_end
    zm = zp.conjugate()
    u = A + B
    up = A * zp + B * zm
    return s, u.real, u.imag, up.real, up.imag, acc


@njit(cache=True, nogil=True, inline="always")
def _deriv(rep, s, a0, a1, a2, a3, M, m2, ll, omsq, sw, tw):
    V, sw, tw = _potential(s, M, m2, ll, sw, tw)
    Wq = V - omsq
    if rep == REP_LINEAR:
        return a2, a3, Wq * a0, Wq * a1, sw, tw
    dzre = Wq - (a2 * a2 - a3 * a3)
    dzim = -2.0 * a2 * a3
    return a2, a3, dzre, dzim, sw, tw


@njit(cache=True, nogil=True)
def _leg(rep, M, m2, ll, omsq, s0, y0, s_end, out_s, y_out,
         rtol, atol, atol_w, h0, max_steps, mesh_s, mesh_y, record_mesh):
    """Integrate one leg from s0 to s_end, recording y at out_s exactly.

    out_s must be sorted in the direction of integration and lie within
    [s0, s_end].  Returns (status, nsteps, n_out_filled, n_mesh).
    y0 and y_out rows are 4-vectors in the active representation.
    """
    sgn = 1.0 if s_end >= s0 else -1.0
    s = s0
    b0, b1, b2, b3 = y0[0], y0[1], y0[2], y0[3]
    n_out = out_s.shape[0]
    iout = 0
    imesh = 0
    cap = mesh_s.shape[0]
    sw = 0.0
    tw = 1e300
    # record any outputs sitting at the start point
    while iout < n_out and sgn * (out_s[iout] - s) <= 1e-12 * (1.0 + abs(s)):
        y_out[iout, 0] = b0
        y_out[iout, 1] = b1
        y_out[iout, 2] = b2
        y_out[iout, 3] = b3
        iout += 1
    if record_mesh and imesh < cap:
        mesh_s[imesh] = s
        mesh_y[imesh, 0] = b0
        mesh_y[imesh, 1] = b1
        mesh_y[imesh, 2] = b2
        mesh_y[imesh, 3] = b3
        imesh += 1
    k10, k11, k12, k13, sw, tw = _deriv(rep, s, b0, b1, b2, b3,
                                        M, m2, ll, omsq, sw, tw)
    h = abs(h0)
    total = abs(s_end - s0)
    if h > total:
        h = total
    if h <= 0.0:
        h = 1e-6 + 0.0 * total
    nsteps = 0
    just_rejected = False
    while sgn * (s_end - s) > 1e-12 * (1.0 + abs(s)):
        nsteps += 1
        if nsteps > max_steps:
            return STATUS_MAXSTEPS, nsteps, iout, imesh
        # cap the step so the accepted mesh resolves the potential well
        # enough for the septic a-posteriori residual check (its stencil
        # error scales as |V| (h/L)^6 / C against |V - w^2| + m^2)
        Vc, dVc, d2Vc, sw, tw = _potential_grad(s, M, m2, ll, sw, tw)
        if Vc != 0.0:
            aV = abs(Vc)
            Lc = 1e300
            if dVc != 0.0:
                Lc = aV / abs(dVc)
            if d2Vc != 0.0:
                L2 = math.sqrt(aV / abs(d2Vc))
                if L2 < Lc:
                    Lc = L2
            if Lc < 1e300:
                budget = 40.0 * rtol * (abs(Vc - omsq) + m2) / aV
                h_cap = Lc * budget ** (1.0 / 6.0)
                if h > h_cap:
                    h = h_cap
        target = s_end
        if iout < n_out:
            target = out_s[iout]
        dist = sgn * (target - s)
        landed = False
        if h >= dist / 1.05:
            h = dist
            landed = True
        hs = sgn * h
        # stages
        t0 = b0 + hs * _A21 * k10
        t1 = b1 + hs * _A21 * k11
        t2 = b2 + hs * _A21 * k12
        t3 = b3 + hs * _A21 * k13
        k20, k21, k22, k23, sw, tw = _deriv(rep, s + _C2 * hs, t0, t1, t2, t3,
                                            M, m2, ll, omsq, sw, tw)
        t0 = b0 + hs * (_A31 * k10 + _A32 * k20)
        t1 = b1 + hs * (_A31 * k11 + _A32 * k21)
        t2 = b2 + hs * (_A31 * k12 + _A32 * k22)
        t3 = b3 + hs * (_A31 * k13 + _A32 * k23)
        k30, k31, k32, k33, sw, tw = _deriv(rep, s + _C3 * hs, t0, t1, t2, t3,
                                            M, m2, ll, omsq, sw, tw)
        t0 = b0 + hs * (_A41 * k10 + _A42 * k20 + _A43 * k30)
        t1 = b1 + hs * (_A41 * k11 + _A42 * k21 + _A43 * k31)
        t2 = b2 + hs * (_A41 * k12 + _A42 * k22 + _A43 * k32)
        t3 = b3 + hs * (_A41 * k13 + _A42 * k23 + _A43 * k33)
        k40, k41, k42, k43, sw, tw = _deriv(rep, s + _C4 * hs, t0, t1, t2, t3,
                                            M, m2, ll, omsq, sw, tw)
        t0 = b0 + hs * (_A51 * k10 + _A52 * k20 + _A53 * k30 + _A54 * k40)
        t1 = b1 + hs * (_A51 * k11 + _A52 * k21 + _A53 * k31 + _A54 * k41)
        t2 = b2 + hs * (_A51 * k12 + _A52 * k22 + _A53 * k32 + _A54 * k42)
        t3 = b3 + hs * (_A51 * k13 + _A52 * k23 + _A53 * k33 + _A54 * k43)
        k50, k51, k52, k53, sw, tw = _deriv(rep, s + _C5 * hs, t0, t1, t2, t3,
                                            M, m2, ll, omsq, sw, tw)
        t0 = b0 + hs * (_A61 * k10 + _A62 * k20 + _A63 * k30 + _A64 * k40 + _A65 * k50)
        t1 = b1 + hs * (_A61 * k11 + _A62 * k21 + _A63 * k31 + _A64 * k41 + _A65 * k51)
        t2 = b2 + hs * (_A61 * k12 + _A62 * k22 + _A63 * k32 + _A64 * k42 + _A65 * k52)
        t3 = b3 + hs * (_A61 * k13 + _A62 * k23 + _A63 * k33 + _A64 * k43 + _A65 * k53)
        k60, k61, k62, k63, sw, tw = _deriv(rep, s + hs, t0, t1, t2, t3,
                                            M, m2, ll, omsq, sw, tw)
        n0 = b0 + hs * (_B1 * k10 + _B3 * k30 + _B4 * k40 + _B5 * k50 + _B6 * k60)
        n1 = b1 + hs * (_B1 * k11 + _B3 * k31 + _B4 * k41 + _B5 * k51 + _B6 * k61)
        n2 = b2 + hs * (_B1 * k12 + _B3 * k32 + _B4 * k42 + _B5 * k52 + _B6 * k62)
        n3 = b3 + hs * (_B1 * k13 + _B3 * k33 + _B4 * k43 + _B5 * k53 + _B6 * k63)
        k70, k71, k72, k73, sw, tw = _deriv(rep, s + hs, n0, n1, n2, n3,
                                            M, m2, ll, omsq, sw, tw)
        e0 = hs * (_E1 * k10 + _E3 * k30 + _E4 * k40 + _E5 * k50 + _E6 * k60 + _E7 * k70)
        e1 = hs * (_E1 * k11 + _E3 * k31 + _E4 * k41 + _E5 * k51 + _E6 * k61 + _E7 * k71)
        e2 = hs * (_E1 * k12 + _E3 * k32 + _E4 * k42 + _E5 * k52 + _E6 * k62 + _E7 * k72)
        e3 = hs * (_E1 * k13 + _E3 * k33 + _E4 * k43 + _E5 * k53 + _E6 * k63 + _E7 * k73)
        # error norm over the two complex pairs
        if rep == REP_LINEAR:
            nu = math.hypot(b0, b1)
            nu_n = math.hypot(n0, n1)
            ndu = math.hypot(b2, b3)
            ndu_n = math.hypot(n2, n3)
            V, sw, tw = _potential(s, M, m2, ll, sw, tw)
            kb = math.sqrt(abs(V - omsq)) + 1e-300
            sc_u = atol + rtol * max(nu, nu_n)
            sc_d = atol + rtol * (max(ndu, ndu_n) + 0.1 * kb * max(nu, nu_n))
            errnorm = max(math.hypot(e0, e1) / sc_u, math.hypot(e2, e3) / sc_d)
        else:
            nz = math.hypot(b2, b3)
            nz_n = math.hypot(n2, n3)
            sc_w = atol_w + 1e-3 * rtol * math.hypot(b0, b1)
            sc_z = atol + rtol * max(nz, nz_n)
            errnorm = max(math.hypot(e0, e1) / sc_w, math.hypot(e2, e3) / sc_z)
        if not math.isfinite(errnorm):
            h *= 0.25
            just_rejected = True
            if h < 1e-13 * (1.0 + abs(s)):
                return STATUS_NAN, nsteps, iout, imesh
            continue
        if errnorm <= 1.0:
            s = target if landed else s + hs
            b0, b1, b2, b3 = n0, n1, n2, n3
            k10, k11, k12, k13 = k70, k71, k72, k73
            if record_mesh:
                if imesh < cap:
                    mesh_s[imesh] = s
                    mesh_y[imesh, 0] = b0
                    mesh_y[imesh, 1] = b1
                    mesh_y[imesh, 2] = b2
                    mesh_y[imesh, 3] = b3
                    imesh += 1
            while iout < n_out and sgn * (out_s[iout] - s) <= 1e-12 * (1.0 + abs(s)):
                y_out[iout, 0] = b0
                y_out[iout, 1] = b1
                y_out[iout, 2] = b2
                y_out[iout, 3] = b3
                iout += 1
            fac = 0.9 * errnorm ** -0.2 if errnorm > 0.0 else 5.0
            if fac > 5.0:
                fac = 5.0
            if fac < 0.2:
                fac = 0.2
            if just_rejected and fac > 1.0:
                fac = 1.0
            just_rejected = False
            h *= fac
        else:
            fac = 0.9 * errnorm ** -0.2
            if fac < 0.1:
                fac = 0.1
            h *= fac
            just_rejected = True
            if h < 1e-13 * (1.0 + abs(s)):
                return STATUS_UNDERFLOW, nsteps, iout, imesh
    return STATUS_OK, nsteps, iout, imesh


@njit(cache=True, nogil=True)
def _leg_final(rep, M, m2, ll, omsq, s0, y0, s_end, out_s, y_out,
               rtol, atol, atol_w, h0, max_steps):
    """_leg plus the final state appended; returns (status, y_end)."""
    y_end = np.empty(4)
    n = out_s.shape[0]
    ext_s = np.empty(n + 1)
    for i in range(n):
        ext_s[i] = out_s[i]
    ext_s[n] = s_end
    ext_y = np.empty((n + 1, 4))
    ms = np.empty(0)
    my = np.empty((0, 4))
    st, nst, nout, nm = _leg(rep, M, m2, ll, omsq, s0, y0, s_end, ext_s, ext_y,
                             rtol, atol, atol_w, h0, max_steps,
                             ms, my, False)
    if st == STATUS_OK and nout < n + 1:
        st = STATUS_NAN
    for i in range(n):
        y_out[i, 0] = ext_y[i, 0]
        y_out[i, 1] = ext_y[i, 1]
        y_out[i, 2] = ext_y[i, 2]
        y_out[i, 3] = ext_y[i, 3]
    y_end[0] = ext_y[n, 0]
    y_end[1] = ext_y[n, 1]
    y_end[2] = ext_y[n, 2]
    y_end[3] = ext_y[n, 3]
    return st, y_end


@njit(cache=True, nogil=True, inline="always")
def _burst_hop(M, m2, ll, omsq, s_cur, za, rem):
    """Step budget for one DP54 burst out of a fast-forward stall.

    Stalls cluster around turning points, so the distance to the zero of
    Q = V - omega^2 estimated from the local gradient is the natural hop;
    the floor keeps progress when z is small, the cap bounds wasted
    stepping when the potential is locally flat.
    """
    sw = 0.0
    tw = 1e300
    V, dV, d2V, sw, tw = _potential_grad(s_cur, M, m2, ll, sw, tw)
    Q = V - omsq
    hop = 1.7 * abs(Q) / (abs(dV) + 1e-300)
    lo = 0.35 / max(za, 0.3)
    if hop < lo:
        hop = lo
    cap = 6.0 + 0.1 * rem
    if hop > cap:
        hop = cap
    if hop > rem:
        hop = rem
    return hop


@njit(cache=True, nogil=True)
def _log_span(M, m2, ll, omsq, s0, y, targets, rows, rtol, atol, atol_w,
              h0, max_steps):
    """Advance a log-rep state through targets, recording (w, z) rows.

    Alternates WKB fast-forward jumps with short DP54 bursts so smooth
    spans cost Gauss evaluations instead of steps; every target is landed
    on exactly.  targets must be monotone in the direction of travel and
    rows must have matching length.  On success y holds the state at the
    final target.  Returns status.
    """
    n = targets.shape[0]
    if n == 0:
        return STATUS_OK
    sgn = 1.0 if targets[n - 1] >= s0 else -1.0
    ms = np.empty(0)
    my = np.empty((0, 4))
    s_cur = s0
    h_next = h0
    bursts = 0
    for i in range(n):
        t = targets[i]
        while sgn * (t - s_cur) > 1e-12 * (1.0 + abs(s_cur)):
            s_new, w0_, w1_, z0_, z1_ = _ff_leg(M, m2, ll, omsq, s_cur,
                                                y[0], y[1], y[2], y[3], t)
            if sgn * (s_new - s_cur) > 0.0:
                y[0] = w0_
                y[1] = w1_
                y[2] = z0_
                y[3] = z1_
                s_cur = s_new
                h_next = 0.5 / max(math.hypot(y[2], y[3]), 0.2)
                if sgn * (t - s_cur) <= 1e-12 * (1.0 + abs(s_cur)):
                    break
            bursts += 1
            if bursts > 300:
                # acceleration is not paying here; finish by plain stepping
                st, _, nout, _ = _leg(REP_LOG, M, m2, ll, omsq, s_cur, y,
                                      targets[n - 1], targets[i:], rows[i:],
                                      rtol, atol, atol_w, h_next, max_steps,
                                      ms, my, False)
                if st == STATUS_OK and nout < n - i:
                    st = STATUS_NAN
                if st == STATUS_OK:
                    for j in range(4):
                        y[j] = rows[n - 1, j]
                return st
            za = math.hypot(y[2], y[3])
            rem = sgn * (t - s_cur)
            hop = _burst_hop(M, m2, ll, omsq, s_cur, za, rem)
            st, y_end = _leg_final(REP_LOG, M, m2, ll, omsq, s_cur, y,
                                   s_cur + sgn * hop, ms, my, rtol, atol,
                                   atol_w, min(h_next, hop), max_steps)
            if st != STATUS_OK:
                return st
            for j in range(4):
                y[j] = y_end[j]
            s_cur = s_cur + sgn * hop
            h_next = 0.5 / max(math.hypot(y[2], y[3]), 0.2)
        rows[i, 0] = y[0]
        rows[i, 1] = y[1]
        rows[i, 2] = y[2]
        rows[i, 3] = y[3]
    return STATUS_OK


@njit(cache=True, nogil=True)
def _linear_span(M, m2, ll, omsq, s0, y, targets, rows, rtol, atol, atol_w,
                 h0, max_steps):
    """Advance a linear-rep state through targets, recording (u, u') rows.

    Two-branch WKB transport covers the smooth oscillatory stretches
    between targets, DP54 bursts cross turning zones and rough spots, and
    the transport defect budget is shared across the whole span.  Returns
    status; targets monotone in the direction of travel.
    """
    n = targets.shape[0]
    if n == 0:
        return STATUS_OK
    sgn = 1.0 if targets[n - 1] >= s0 else -1.0
    ms = np.empty(0)
    my = np.empty((0, 4))
    s_cur = s0
    h_next = h0
    acc = 0.0
    bursts = 0
    for i in range(n):
        t = targets[i]
        while sgn * (t - s_cur) > 1e-12 * (1.0 + abs(s_cur)):
            s_new, u0, u1, u2, u3, acc = _ff_linear(M, m2, ll, omsq, s_cur,
                                                    y[0], y[1], y[2], y[3],
                                                    t, acc)
            if sgn * (s_new - s_cur) > 0.0:
                y[0] = u0
                y[1] = u1
                y[2] = u2
                y[3] = u3
                s_cur = s_new
                if sgn * (t - s_cur) <= 1e-12 * (1.0 + abs(s_cur)):
                    break
            bursts += 1
            if bursts > 300:
                st, _, nout, _ = _leg(REP_LINEAR, M, m2, ll, omsq, s_cur, y,
                                      targets[n - 1], targets[i:], rows[i:],
                                      rtol, atol, atol_w, h_next, max_steps,
                                      ms, my, False)
                if st == STATUS_OK and nout < n - i:
                    st = STATUS_NAN
                if st == STATUS_OK:
                    for j in range(4):
                        y[j] = rows[n - 1, j]
                return st
            V, swx, twx = _potential(s_cur, M, m2, ll, 0.0, 1e300)
            k_loc = math.sqrt(abs(omsq - V))
            rem = sgn * (t - s_cur)
            hop = _burst_hop(M, m2, ll, omsq, s_cur, k_loc, rem)
            st, y_end = _leg_final(REP_LINEAR, M, m2, ll, omsq, s_cur, y,
                                   s_cur + sgn * hop, ms, my, rtol, atol,
                                   atol_w, min(h_next, hop), max_steps)
            if st != STATUS_OK:
                return st
            for j in range(4):
                y[j] = y_end[j]
            s_cur = s_cur + sgn * hop
            h_next = 0.5 / max(k_loc, 0.2)
        rows[i, 0] = y[0]
        rows[i, 1] = y[1]
        rows[i, 2] = y[2]
        rows[i, 3] = y[3]
    return STATUS_OK


@njit(cache=True, nogil=True)
def _batch_channels(M, m2, omsq, ll_arr,
                    s_phi_seed, wphi0_re, wphi0_im, zphi0_re, zphi0_im, hphi0,
                    s_switch_phi,
                    s_psi_seed, wpsi0_re, wpsi0_im, zpsi0_re, zpsi0_im, hpsi0,
                    s_switch_psi, obs_asc,
                    rtol, atol, atol_w, max_steps,
                    phi_out, psi_out, status):
    """Solve a chunk of channels on a shared observation grid.

    Per channel c: phi integrated inward from s_phi_seed[c] (log span down
    to s_switch_phi[c], then a rescaled linear span; a switch below the
    grid means log all the way), psi integrated outward from s_psi_seed
    (log span to s_switch_psi[c], then a rescaled linear span).  The spans
    accelerate across smooth stretches with WKB jumps and land on every
    recorded point exactly.  phi_out / psi_out have shape (n_ch, n_obs, 4)
    in log form [Re w, Im w, Re z, Im z]; obs_asc ascending.
    """
    n_ch = ll_arr.shape[0]
    n_obs = obs_asc.shape[0]
    obs_desc = obs_asc[::-1].copy()
    s_top = obs_asc[n_obs - 1]
    s_bot = obs_asc[0]
    for c in range(n_ch):
        ll = ll_arr[c]
        # --- phi ---
        yw = np.empty(4)
        yw[0] = wphi0_re[c]
        yw[1] = wphi0_im[c]
        yw[2] = zphi0_re[c]
        yw[3] = zphi0_im[c]
        sp_c = s_phi_seed[c]
        sxp = s_switch_phi[c]
        if sxp > sp_c:
            sxp = sp_c
        tmp = np.empty((n_obs, 4))
        if sxp <= s_bot:
            st = _log_span(M, m2, ll, omsq, sp_c, yw, obs_desc, tmp,
                           rtol, atol, atol_w, hphi0[c], max_steps)
            if st != STATUS_OK:
                status[c] = 10 + st
                continue
        else:
            n_hi = 0
            for i in range(n_obs):
                if obs_desc[i] > sxp:
                    n_hi += 1
            tgt = np.empty(n_hi + 1)
            for i in range(n_hi):
                tgt[i] = obs_desc[i]
            tgt[n_hi] = sxp
            rows = np.empty((n_hi + 1, 4))
            st = _log_span(M, m2, ll, omsq, sp_c, yw, tgt, rows,
                           rtol, atol, atol_w, hphi0[c], max_steps)
            if st != STATUS_OK:
                status[c] = 10 + st
                continue
            for i in range(n_hi):
                for j in range(4):
                    tmp[i, j] = rows[i, j]
            # rescale: linear leg starts at u = exp(i Im w), carrying Re w
            w_off = rows[n_hi, 0]
            phase = rows[n_hi, 1]
            ure = math.cos(phase)
            uim = math.sin(phase)
            y1 = np.empty(4)
            y1[0] = ure
            y1[1] = uim
            y1[2] = rows[n_hi, 2] * ure - rows[n_hi, 3] * uim
            y1[3] = rows[n_hi, 2] * uim + rows[n_hi, 3] * ure
            lin = np.empty((n_obs - n_hi, 4))
            V, _, _ = _potential(sxp, M, m2, ll, 0.0, 1e300)
            kb = math.sqrt(abs(omsq - V)) + 1e-8
            st = _linear_span(M, m2, ll, omsq, sxp, y1, obs_desc[n_hi:],
                              lin, rtol, atol, atol_w, 0.5 / kb, max_steps)
            if st != STATUS_OK:
                status[c] = 40 + st
                continue
            for i in range(n_obs - n_hi):
                ur = lin[i, 0]
                ui = lin[i, 1]
                mag = math.hypot(ur, ui)
                tmp[n_hi + i, 0] = w_off + math.log(mag)
                tmp[n_hi + i, 1] = math.atan2(ui, ur)
                den = mag * mag
                tmp[n_hi + i, 2] = (lin[i, 2] * ur + lin[i, 3] * ui) / den
                tmp[n_hi + i, 3] = (lin[i, 3] * ur - lin[i, 2] * ui) / den
        for i in range(n_obs):
            j = n_obs - 1 - i
            phi_out[c, j, 0] = tmp[i, 0]
            phi_out[c, j, 1] = tmp[i, 1]
            phi_out[c, j, 2] = tmp[i, 2]
            phi_out[c, j, 3] = tmp[i, 3]
        # --- psi ---
        y0 = np.empty(4)
        y0[0] = wpsi0_re[c]
        y0[1] = wpsi0_im[c]
        y0[2] = zpsi0_re[c]
        y0[3] = zpsi0_im[c]
        sx = s_switch_psi[c]
        if sx >= s_top:
            st = _log_span(M, m2, ll, omsq, s_psi_seed, y0, obs_asc,
                           psi_out[c], rtol, atol, atol_w, hpsi0[c],
                           max_steps)
            if st != STATUS_OK:
                status[c] = 20 + st
            else:
                status[c] = 0
            continue
        n_low = 0
        for i in range(n_obs):
            if obs_asc[i] <= sx:
                n_low += 1
        tgt2 = np.empty(n_low + 1)
        for i in range(n_low):
            tgt2[i] = obs_asc[i]
        tgt2[n_low] = sx
        rows2 = np.empty((n_low + 1, 4))
        st = _log_span(M, m2, ll, omsq, s_psi_seed, y0, tgt2, rows2,
                       rtol, atol, atol_w, hpsi0[c], max_steps)
        if st != STATUS_OK:
            status[c] = 20 + st
            continue
        for i in range(n_low):
            for j in range(4):
                psi_out[c, i, j] = rows2[i, j]
        # rescale: linear leg starts at u = exp(i Im w), carrying offset Re w
        w_off = rows2[n_low, 0]
        phase = rows2[n_low, 1]
        ure = math.cos(phase)
        uim = math.sin(phase)
        y1 = np.empty(4)
        y1[0] = ure
        y1[1] = uim
        y1[2] = rows2[n_low, 2] * ure - rows2[n_low, 3] * uim
        y1[3] = rows2[n_low, 2] * uim + rows2[n_low, 3] * ure
        lin = np.empty((n_obs - n_low, 4))
        V, _, _ = _potential(sx, M, m2, ll, 0.0, 1e300)
        kb = math.sqrt(abs(omsq - V)) + 1e-8
        st = _linear_span(M, m2, ll, omsq, sx, y1, obs_asc[n_low:], lin,
                          rtol, atol, atol_w, 0.5 / kb, max_steps)
        if st != STATUS_OK:
            status[c] = 30 + st
            continue
        for i in range(n_obs - n_low):
            ur = lin[i, 0]
            ui = lin[i, 1]
            mag = math.hypot(ur, ui)
            psi_out[c, n_low + i, 0] = w_off + math.log(mag)
            psi_out[c, n_low + i, 1] = math.atan2(ui, ur)
            den = mag * mag
            psi_out[c, n_low + i, 2] = (lin[i, 2] * ur + lin[i, 3] * ui) / den
            psi_out[c, n_low + i, 3] = (lin[i, 3] * ur - lin[i, 2] * ui) / den
        status[c] = 0
    return 0
