"""Dimensionless shooting machinery shared by the equilibrium solvers.

The bending region B..E is one ODE system in the tangent-angle form
(lambda_m, delta, phi); the segment boundaries C (phi = pi/2) and
D (phi = pi) are located afterwards.  Multiple shooting splits [psi_B,
psi_E] into M equal sub-intervals whose start states are unknowns, which
keeps the fast-growing modes of the low-tension membrane in check.

Unknown vector  u = [lambda_A, p_hat, lambda_F, y_1, ..., y_{M-1}].
Residual vector r = [continuity (3 per interior node), delta_E - rho_hat,
lambda_m(E) mismatch, closure], where closure is either V/V0 - 1 or
lambda_A - lambda_pin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K


@dataclass
class Core:
    alpha: float
    rho_hat: float          # rho0 / r0
    sig_hat: float = 0.0    # traction * r0 / (2 C1 h)
    steps: int = 2000       # per segment
    eps: float = 1e-4
    intervals: int = 40

    def __post_init__(self):
        self.nsub = max(16, int(math.ceil(3 * self.steps / self.intervals)))

    # ---- parameter vectors -------------------------------------------------
    def prm(self, p=0.0, sgn=1.0):
        return np.array([self.alpha, p, self.sig_hat, sgn])

    # ---- flat segments -----------------------------------------------------
    def ab_traj(self, la, psib, n=None):
        n = n or self.steps
        P, Y, ok = K.run(K.FLAT, np.array([la, la]), self.eps, psib, n,
                         self.prm(0.0, 1.0), K.EV_NONE, 0.0, 1.0, 1e-14)
        return P, Y, ok == 1 and len(P) == n + 1

    def ab_end(self, la, psib):
        y, _, _, ok = K.run_end(K.FLAT, np.array([la, la]), self.eps, psib,
                                self.steps, self.prm(0.0, 1.0))
        return (y[0], y[1]) if ok else None

    def _ef_span(self):
        return max(0.5 * math.pi, math.pi - 4.0 * self.rho_hat - 0.05)

    def ef_traj(self, lf, n=None):
        n = n or self.steps
        P, Y, ok = K.run(K.FLAT, np.array([lf, lf]), math.pi - self.eps, self._ef_span(), n,
                         self.prm(0.0, -1.0), K.EV_RHO, self.rho_hat, 1.0, 1e-14)
        return P, Y, ok == 1

    def ef_end(self, lf):
        P, Y, ok = self.ef_traj(lf)
        if not ok:
            return None
        return P[-1], Y[-1, 0]

    # ---- multiple shooting ---------------------------------------------------
    def size(self):
        return 3 + 3 * (self.intervals - 1)

    def grid(self, psib, psie):
        return psib + (psie - psib) * np.arange(self.intervals + 1) / self.intervals

    def _pieces(self, u, psib):
        M = self.intervals
        la, p, lf = u[0], u[1], u[2]
        b = self.ab_end(la, psib)
        e = self.ef_end(lf)
        if b is None or e is None:
            return None
        psie, lmE = e
        if not psib < psie:
            return None
        g = self.grid(psib, psie)
        starts = [np.array([b[0], b[1] * math.sin(psib), 0.0])]
        starts += [u[3 + 3 * i: 6 + 3 * i].copy() for i in range(M - 1)]
        prm = self.prm(p, 1.0)
        ends, vols, hts = [], [], []
        for i in range(M):
            y, v, h, ok = K.run_end(K.BEND, starts[i], g[i], g[i + 1], self.nsub, prm)
            if not ok:
                return None
            ends.append(y)
            vols.append(v)
            hts.append(h)
        return dict(b=b, psie=psie, lmE=lmE, starts=starts, ends=ends, vols=vols, hts=hts)

    def _assemble(self, u, pc, closure, pin):
        M = self.intervals
        r = np.empty(self.size())
        for i in range(M - 1):
            r[3 * i: 3 * i + 3] = pc["ends"][i] - pc["starts"][i + 1]
        yE = pc["ends"][M - 1]
        r[3 * M - 3] = yE[1] - self.rho_hat
        r[3 * M - 2] = yE[0] - pc["lmE"]
        if closure == "volume":
            r[3 * M - 1] = 0.75 * sum(pc["vols"]) - 1.0
        else:
            r[3 * M - 1] = u[0] - pin
        return r

    def residual(self, u, psib, closure="volume", pin=1.0):
        pc = self._pieces(u, psib)
        if pc is None:
            return None, None
        return self._assemble(u, pc, closure, pin), pc

    def jacobian(self, u, psib, pc, r, closure="volume", pin=1.0):
        """Forward-difference Jacobian exploiting the block structure."""
        M = self.intervals
        n = self.size()
        J = np.zeros((n, n))
        g = self.grid(psib, pc["psie"])
        prm = self.prm(u[1], 1.0)

        def step(x):
            return 1e-7 * max(abs(x), 1.0)

        def sub_rows(i, y, v, J_col, scale):
            # place d(end_i)/dx and d(vol_i)/dx into a column
            if i < M - 1:
                J_col[3 * i: 3 * i + 3] = (y - pc["ends"][i]) / scale
            else:
                J_col[3 * M - 3] = (y[1] - pc["ends"][i][1]) / scale
                J_col[3 * M - 2] = (y[0] - pc["ends"][i][0]) / scale
            if closure == "volume":
                J_col[3 * M - 1] += 0.75 * (v - pc["vols"][i]) / scale

        # interior node states
        for j in range(M - 1):
            for c in range(3):
                k = 3 + 3 * j + c
                hk = step(u[k])
                y0 = pc["starts"][j + 1].copy()
                y0[c] += hk
                y, v, _, ok = K.run_end(K.BEND, y0, g[j + 1], g[j + 2], self.nsub, prm)
                col = J[:, k]
                col[3 * j + c] = -1.0
                if ok:
                    sub_rows(j + 1, y, v, col, hk)
                else:
                    col[:] = np.nan
        # lambda_A: AB end feeds sub-interval 0
        hk = step(u[0])
        b = self.ab_end(u[0] + hk, psib)
        col = J[:, 0]
        if b is not None:
            y0 = np.array([b[0], b[1] * math.sin(psib), 0.0])
            y, v, _, ok = K.run_end(K.BEND, y0, g[0], g[1], self.nsub, prm)
            if ok:
                sub_rows(0, y, v, col, hk)
        if closure != "volume":
            col[3 * M - 1] = 1.0
        # p and lambda_F: full re-evaluation
        for k in (1, 2):
            uu = u.copy()
            hk = step(u[k])
            uu[k] += hk
            rr, _ = self.residual(uu, psib, closure, pin)
            J[:, k] = np.nan if rr is None else (rr - r) / hk
        return J

    def newton(self, u, psib, closure="volume", pin=1.0, tol=1e-10, max_iter=40):
        """Damped Newton.  Returns (u, r, iterations, converged)."""
        u = np.array(u, dtype=float)
        r, pc = self.residual(u, psib, closure, pin)
        if r is None:
            return u, None, 0, False
        nr = np.max(np.abs(r))
        for it in range(1, max_iter + 1):
            if nr <= tol:
                return u, r, it - 1, True
            J = self.jacobian(u, psib, pc, r, closure, pin)
            if not np.all(np.isfinite(J)):
                return u, r, it, False
            try:
                s = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError:
                s = np.linalg.lstsq(J, -r, rcond=None)[0]
            lam = 1.0
            while lam > 1e-4:
                un = u + lam * s
                rn, pcn = self.residual(un, psib, closure, pin)
                if rn is not None and np.max(np.abs(rn)) < (1.0 - 1e-4 * lam) * nr:
                    break
                lam *= 0.5
            else:
                return u, r, it, False
            u, r, pc, nr = un, rn, pcn, np.max(np.abs(rn))
        return u, r, max_iter, nr <= tol

    # ---- trajectories of a converged vector --------------------------------
    def bend_traj(self, u, psib, psie):
        M = self.intervals
        g = self.grid(psib, psie)
        b = self.ab_end(u[0], psib)
        starts = [np.array([b[0], b[1] * math.sin(psib), 0.0])]
        starts += [u[3 + 3 * i: 6 + 3 * i].copy() for i in range(M - 1)]
        prm = self.prm(u[1], 1.0)
        Ps, Ys = [], []
        for i in range(M):
            P, Y, ok = K.run(K.BEND, starts[i], g[i], g[i + 1], self.nsub, prm,
                             K.EV_NONE, 0.0, 1.0, 1e-14)
            Ps.append(P if i == 0 else P[1:])
            Ys.append(Y if i == 0 else Y[1:])
        return np.concatenate(Ps), np.vstack(Ys)

    def refine_event(self, P, Y, p, target):
        """Locate phi = target on a stored bending trajectory (bisection on the
        bracketing RK4 step).  Returns (index_before, psi*, y*)."""
        ph = Y[:, 2]
        idx = np.nonzero((ph[:-1] < target) & (ph[1:] >= target))[0]
        if len(idx) == 0:
            return None
        i = int(idx[0])
        prm = self.prm(p, 1.0)
        lo, hi = 0.0, P[i + 1] - P[i]
        while hi - lo > 1e-14:
            mid = 0.5 * (lo + hi)
            ym = K.rk4_step(K.BEND, P[i], Y[i], mid, prm)
            if ym[2] < target:
                lo = mid
            else:
                hi = mid
        return i, P[i] + hi, K.rk4_step(K.BEND, P[i], Y[i], hi, prm)

    # ---- forward cascade (nested ordering) ---------------------------------
    def cascade(self, la, p, psib, n=None):
        """Forward integration A -> E.  Returns (segments, tag) where tag names
        the first segment whose terminating event was not reached."""
        n = n or self.steps
        psimax = math.pi - 1e-3
        P1, Y1, ok = self.ab_traj(la, psib, n)
        if not ok:
            return None, "AB"
        y = np.array([Y1[-1, 0], Y1[-1, 1] * math.sin(psib), 0.0])
        prm = self.prm(p, 1.0)
        P2, Y2, ok = K.run(K.BEND, y, psib, psimax, n, prm, K.EV_PHI, 0.5 * math.pi, 1.0, 1e-14)
        if ok != 1:
            return None, "BC"
        P3, Y3, ok = K.run(K.BEND, Y2[-1].copy(), P2[-1], psimax, n, prm, K.EV_PHI, math.pi, 1.0, 1e-14)
        if ok != 1:
            return None, "CD"
        P4, Y4, ok = K.run(K.BEND, Y3[-1].copy(), P3[-1], psimax, n, prm,
                           K.EV_DELTA, self.rho_hat, -1.0, 1e-14)
        if ok != 1:
            return None, "DE"
        return (P1, Y1, P2, Y2, P3, Y3, P4, Y4), "ok"

    def lf_for(self, lm_target):
        """lambda_F whose EF segment reaches the needle edge with lambda_m = target."""
        def f(lf):
            e = self.ef_end(lf)
            if e is None:
                return 10.0
            return e[1] - lm_target
        lo, hi = 0.5 * lm_target, 2.0 * lm_target + 0.5
        return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def cascade_residual(self, la, p, psib):
        """(psi_E mismatch, lambda_m mismatch) for the forward cascade with
        lambda_F chosen so that the stretch matches; None on failure."""
        segs, tag = self.cascade(la, p, psib)
        if segs is None:
            return None, tag
        P4, Y4 = segs[6], segs[7]
        try:
            lf = self.lf_for(Y4[-1, 0])
        except ValueError:
            return None, "EF"
        psie2, lme2 = self.ef_end(lf)
        return (P4[-1] - psie2, Y4[-1, 0] - lme2, lf, segs), "ok"

    def nested_p(self, la, psib, p0, max_expand=60):
        """Bracketed root in p of the psi_E mismatch; cascade failures count
        as positive mismatch (the membrane closes over before reaching E)."""
        def f(p):
            out, _ = self.cascade_residual(la, p, psib)
            return 1.0 if out is None else out[0]

        a, fa = p0, f(p0)
        k = 0.02
        b, fb = a, fa
        for _ in range(max_expand):
            if fa > 0:
                b = a * (1.0 + k)
                fb = f(b)
                if fb < 0:
                    break
                a, fa = b, fb
            else:
                b, fb = a, fa
                a = max(b * (1.0 - k), 0.5 * b)
                fa = f(a)
                if fa > 0:
                    break
            k = min(2 * k, 1.0)
        else:
            return None
        if not (fa > 0 > fb):
            return None
        p = brentq(f, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
        out, _ = self.cascade_residual(la, p, psib)
        if out is None:
            return None
        return p, out

    def seed_vector(self, la, p, lf, segs, psib):
        """Interpolate a cascade solution onto the multiple-shooting nodes."""
        _, _, P2, Y2, P3, Y3, P4, Y4 = segs
        Ps = np.concatenate([P2, P3[1:], P4[1:]])
        Ys = np.vstack([Y2, Y3[1:], Y4[1:]])
        psie = self.ef_end(lf)[0]
        g = self.grid(psib, psie)[1:-1]
        nodes = np.column_stack([np.interp(g, Ps, Ys[:, c]) for c in range(3)])
        return np.concatenate([[la, p, lf], nodes.ravel()])
