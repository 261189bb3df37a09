"""Jitted hot-path kernels.

Everything here is dimensionless: tensions in units of 2*C1*h, pressure
and traction in units of 2*C1*h/r0, lengths in units of r0.
"""
import math

import numpy as np
from numba import njit

FLAT = 0
BEND = 1

EV_NONE = -1
EV_PHI = 0      # phi - target
EV_DELTA = 1    # delta - target (bending)
EV_RHO = 2      # lambda_c*sin(psi) - target (flat)


@njit(cache=True)
def tensions(a, b, al):
    """T_m, T_c, dT_m/dlambda_m, dT_m/dlambda_c for unit 2*C1*h."""
    a2 = a * a
    b2 = b * b
    inv = 1.0 / (a2 * a * b2 * b)
    tm = a / b - inv + al * (a * b - 1.0 / (a2 * a * b))
    tc = b / a - inv + al * (a * b - 1.0 / (a * b2 * b))
    f1 = 1.0 / b + 3.0 / (a2 * a2 * b2 * b) + al * (b + 3.0 / (a2 * a2 * b))
    f2 = -a / b2 + 3.0 / (a2 * a * b2 * b2) + al * (a + 1.0 / (a2 * a * b2))
    return tm, tc, f1, f2


@njit(cache=True)
def flat_rhs(psi, lm, lc, sgn, al, sig):
    s = math.sin(psi)
    # sgn*lm - lc*cos(psi), written to avoid cancellation near the poles
    if sgn > 0:
        num = (lm - lc) + 2.0 * lc * math.sin(0.5 * psi) ** 2
    else:
        num = (lc - lm) - 2.0 * lc * math.cos(0.5 * psi) ** 2
    tm, tc, f1, f2 = tensions(lm, lc, al)
    dlc = num / s
    dlm = (sgn * lm * (tc - tm) / (lc * s) - num * f2 / s - sgn * sig * lm) / f1
    return dlm, dlc


@njit(cache=True)
def bend_rhs(psi, lm, d, ph, p, al, sig):
    s = math.sin(psi)
    c = math.cos(psi)
    lc = d / s
    tm, tc, f1, f2 = tensions(lm, lc, al)
    om = lm * math.cos(ph)
    sgn = 1.0 if ph <= math.pi else -1.0
    dlm = (f2 * (d * c - om * s) / (s * s) + om * (tc - tm) / d - sgn * sig * lm) / f1
    dph = lm * (p - math.sin(ph) * tc / d) / tm
    return dlm, om, dph


@njit(cache=True)
def _deriv(kind, psi, y, prm, out):
    # prm = [alpha, p, sig, flat_sign]
    if kind == FLAT:
        a, b = flat_rhs(psi, y[0], y[1], prm[3], prm[0], prm[2])
        out[0] = a
        out[1] = b
    else:
        a, b, c = bend_rhs(psi, y[0], y[1], y[2], prm[1], prm[0], prm[2])
        out[0] = a
        out[1] = b
        out[2] = c


@njit(cache=True)
def rk4_step(kind, psi, y, h, prm):
    n = y.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    t = np.empty(n)
    _deriv(kind, psi, y, prm, k1)
    for i in range(n):
        t[i] = y[i] + 0.5 * h * k1[i]
    _deriv(kind, psi + 0.5 * h, t, prm, k2)
    for i in range(n):
        t[i] = y[i] + 0.5 * h * k2[i]
    _deriv(kind, psi + 0.5 * h, t, prm, k3)
    for i in range(n):
        t[i] = y[i] + h * k3[i]
    _deriv(kind, psi + h, t, prm, k4)
    o = np.empty(n)
    for i in range(n):
        o[i] = y[i] + h * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0
    return o


@njit(cache=True)
def event_value(ev, psi, y, target):
    if ev == EV_PHI:
        return y[2] - target
    if ev == EV_DELTA:
        return y[1] - target
    if ev == EV_RHO:
        return y[1] * math.sin(psi) - target
    return 0.0


@njit(cache=True)
def _bad(kind, y):
    for v in y:
        if not np.isfinite(v):
            return True
    if y[0] <= 0.0 or y[1] <= 0.0:
        return True
    return False


@njit(cache=True)
def run(kind, y0, psi0, psi1, n, prm, ev, target, evdir, ev_tol):
    """Fixed-step RK4 from psi0 toward psi1.

    Returns (psi, Y, status): status 1 = event located (or span completed
    when ev is EV_NONE), 0 = span completed without the event,
    -1 = blow-up (non-finite or non-positive stretch / radius).
    """
    h = (psi1 - psi0) / n
    P = np.empty(n + 1)
    Y = np.empty((n + 1, y0.shape[0]))
    P[0] = psi0
    Y[0] = y0
    y = y0.copy()
    psi = psi0
    g0 = event_value(ev, psi, y, target)
    for i in range(n):
        yn = rk4_step(kind, psi, y, h, prm)
        if _bad(kind, yn):
            return P[: i + 1], Y[: i + 1], -1
        pn = psi0 + (i + 1) * h
        if ev >= 0:
            g1 = event_value(ev, pn, yn, target)
            if g0 * evdir < 0.0 and g1 * evdir >= 0.0:
                lo = 0.0
                hi = h
                for _ in range(200):
                    if abs(hi - lo) <= ev_tol:
                        break
                    mid = 0.5 * (lo + hi)
                    ym = rk4_step(kind, psi, y, mid, prm)
                    if event_value(ev, psi + mid, ym, target) * evdir < 0.0:
                        lo = mid
                    else:
                        hi = mid
                P[i + 1] = psi + hi
                Y[i + 1] = rk4_step(kind, psi, y, hi, prm)
                return P[: i + 2], Y[: i + 2], 1
            g0 = g1
        psi = pn
        y = yn
        P[i + 1] = psi
        Y[i + 1] = y
    if ev >= 0:
        return P, Y, 0
    return P, Y, 1


@njit(cache=True)
def run_end(kind, y0, psi0, psi1, n, prm):
    """Like run() without events, returning only the end state and the
    trapezoid integrals of delta^2*lm*sin(phi) and lm*sin(phi)."""
    h = (psi1 - psi0) / n
    y = y0.copy()
    psi = psi0
    vol = 0.0
    ht = 0.0
    if kind == BEND:
        fv0 = y[1] * y[1] * y[0] * math.sin(y[2])
        fh0 = y[0] * math.sin(y[2])
    for i in range(n):
        y = rk4_step(kind, psi, y, h, prm)
        if _bad(kind, y):
            return y, vol, ht, False
        psi = psi0 + (i + 1) * h
        if kind == BEND:
            fv1 = y[1] * y[1] * y[0] * math.sin(y[2])
            fh1 = y[0] * math.sin(y[2])
            vol += 0.5 * h * (fv0 + fv1)
            ht += 0.5 * h * (fh0 + fh1)
            fv0 = fv1
            fh0 = fh1
    return y, vol, ht, True
