"""Equilibrium of the indented membrane for a prescribed contact angle psi_B.

The meridian A..F is split into the flat plate contact AB, the free bending
region B..E (equator C, top D) and the flat needle contact EF.  Unknowns are
the pole stretches lambda_A, lambda_F and the pressure P; the bending region
is solved by multiple shooting (see ``_msolve``).  The forward cascade that
integrates A -> E in one sweep is kept for diagnostics and for the
``nested`` strategy.

The membrane cannot be slack, so lambda_A >= 1.  For small psi_B no taut
state conserves volume: the pinned solution (lambda_A = 1) then carries a
positive volume excess, which is reported rather than hidden.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from ._msolve import Core
from .errors import ConvergenceError, DomainError, InfeasibleError, StateError
from .geometry import MembraneSegment, axial_height, enclosed_volume
from .material import MaterialParams, SpeedState

ANCHORS = (0.2, 0.3, 0.4, 0.5)


@dataclass(frozen=True)
class ProblemSetup:
    r0: float                     # m
    rho0: float                   # m
    mat: MaterialParams
    speed: SpeedState = SpeedState()
    steps: int = 2000
    epsilon: float = 1e-4
    tol_residual: float = 1e-10
    tol_volume: float = 1e-4
    max_iter: int = 40
    strategy: str = "newton"
    intervals: int = 40

    def __post_init__(self):
        if not (0 < self.rho0 < self.r0):
            raise DomainError(f"need 0 < rho0 < r0, got rho0={self.rho0}, r0={self.r0}")
        if not (self.tol_residual > 0 and self.tol_volume > 0):
            raise DomainError("tolerances must be positive")
        if self.steps < 16 or self.max_iter < 1 or self.intervals < 2:
            raise DomainError("steps >= 16, max_iter >= 1 and intervals >= 2 required")
        if not (0 < self.epsilon <= 1e-3):
            raise DomainError("pole epsilon must lie in (0, 1e-3]")
        if self.strategy not in ("newton", "nested"):
            raise DomainError(f"unknown strategy {self.strategy!r}")

    @property
    def rho_hat(self):
        return self.rho0 / self.r0

    @property
    def pressure_unit(self):
        """Pa per unit dimensionless pressure."""
        return self.mat.tension_scale / self.r0

    @property
    def sig_hat(self):
        return self.mat.surface_traction_m / self.pressure_unit

    def core(self, steps=None) -> Core:
        return Core(alpha=self.mat.alpha, rho_hat=self.rho_hat, sig_hat=self.sig_hat,
                    steps=steps or self.steps, eps=self.epsilon, intervals=self.intervals)


@dataclass(frozen=True)
class Unknowns:
    lambda_a: float
    p: float          # Pa
    lambda_f: float


@dataclass
class EquilibriumSolution:
    psi_b: float
    unknowns: Unknowns
    psi_c: float
    psi_d: float
    psi_e: float
    segments: Dict[str, MembraneSegment]
    force: float          # N
    deformation: float    # m
    volume: float         # m^3
    residuals: Dict[str, float]
    volume_satisfied: bool
    lambda_a_bound_active: bool
    iterations: int
    setup: ProblemSetup
    strategy: str = "newton"
    _vec: Optional[np.ndarray] = field(default=None, repr=False)     # pinned branch
    _vvec: Optional[np.ndarray] = field(default=None, repr=False)    # volume branch

    @property
    def ordered_segments(self):
        return [self.segments[k] for k in ("AB", "BC", "CD", "DE", "EF")]

    @property
    def volume_error(self):
        v0 = 4.0 / 3.0 * math.pi * self.setup.r0 ** 3
        return (self.volume - v0) / v0

    @property
    def contact_radius(self):
        return self.setup.r0 * self.segments["AB"].delta[-1]


# ---- right-hand sides in physical form ------------------------------------

def _sig_hat(mat, r0):
    if mat.surface_traction_m == 0.0:
        return 0.0
    if r0 is None:
        raise DomainError("r0 is required when the surface traction is non-zero")
    return mat.surface_traction_m * r0 / mat.tension_scale


def _sign(sign):
    if sign in ("+", 1, 1.0):
        return 1.0
    if sign in ("-", -1, -1.0):
        return -1.0
    raise DomainError(f"sign must be '+' or '-', got {sign!r}")


def flat_rhs(psi, state, sign, mat: MaterialParams, r0=None):
    """(lambda_m', lambda_c') on a flat contact region."""
    lm, lc = float(state[0]), float(state[1])
    if not (lm > 0 and lc > 0):
        raise DomainError("stretches must be positive")
    if math.sin(psi) == 0.0:
        raise DomainError("flat system is singular at the poles")
    _, _, f1, _ = K.tensions(lm, lc, mat.alpha)
    if f1 == 0.0:
        raise DomainError("singular material: f1 = 0")
    a, b = K.flat_rhs(psi, lm, lc, _sign(sign), mat.alpha, _sig_hat(mat, r0))
    return np.array([a, b])


def bending_rhs(psi, state, sign, p, mat: MaterialParams, r0):
    """(lambda_m', delta', omega') on the free region; sign '+' on BC/CD and
    '-' on DE, where the meridian heads back down to the needle."""
    lm, d, om = float(state[0]), float(state[1]), float(state[2])
    if not (lm > 0 and d > 0):
        raise DomainError("lambda_m and delta must be positive")
    if abs(om) > lm * (1.0 + 1e-12):
        raise StateError(f"lambda_m < |omega| at psi={psi:.6g}")
    s = math.sin(psi)
    if s == 0.0:
        raise DomainError("bending system is singular at the poles")
    c = max(-1.0, min(1.0, om / lm))
    ph = math.acos(c)
    if _sign(sign) < 0:
        ph = 2.0 * math.pi - ph
    tm, _, f1, _ = K.tensions(lm, d / s, mat.alpha)
    if tm == 0.0 or f1 == 0.0:
        raise DomainError("singular material: T_m = 0 or f1 = 0")
    p_hat = p * r0 / mat.tension_scale
    dlm, dd, dph = K.bend_rhs(psi, lm, d, ph, p_hat, mat.alpha, _sig_hat(mat, r0))
    dom = dlm * math.cos(ph) - lm * math.sin(ph) * dph
    return np.array([dlm, dd, dom])


# ---- forward cascade (diagnostic form of the residual) -------------------

def _trapz(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def shooting_residuals(u: Unknowns, psi_b: float, setup: ProblemSetup, penalty=1e3):
    """Forward-cascade residual (psi_E mismatch, lambda_m mismatch, V/V0 - 1).

    Integrates A -> E in one pass and F -> E backwards.  The bending region
    amplifies perturbations strongly, so at a converged solution this is
    only as small as the integration round-off allows; it is a diagnostic,
    the solver itself uses multiple shooting.
    """
    core = setup.core()
    p_hat = u.p / setup.pressure_unit
    segs, tag = core.cascade(u.lambda_a, p_hat, psi_b)
    ef = core.ef_end(u.lambda_f)
    if segs is None or ef is None:
        return np.full(3, float(penalty))
    vol = 0.0
    for P, Y in zip(segs[2::2], segs[3::2]):
        vol += _trapz(Y[:, 1] ** 2 * Y[:, 0] * np.sin(Y[:, 2]), P)
    return np.array([segs[6][-1] - ef[0], segs[7][-1, 0] - ef[1], 0.75 * vol - 1.0])


# ---- solution machinery ---------------------------------------------------

class _Solver:
    """Seeding, Newton and psi_B continuation on one dimensionless core."""

    def __init__(self, setup: ProblemSetup):
        self.setup = setup
        self.core = setup.core()
        self.tol = setup.tol_residual

    def newton(self, u, pb, closure, max_iter=None):
        return self.core.newton(u, pb, closure, 1.0, tol=self.tol,
                                max_iter=max_iter or self.setup.max_iter)

    def seed(self, pb):
        c = self.core
        out = c.nested_p(1.0, pb, 1.45 * pb * pb)
        if out is None:
            return None
        p, (_, _, lf, segs) = out
        u, r, it, ok = self.newton(c.seed_vector(1.0, p, lf, segs, pb), pb, "pin")
        return u if ok else None

    def tangent(self, u, pb, closure):
        """du/dpsi_B along the solution branch (implicit function theorem)."""
        c = self.core
        r, pc = c.residual(u, pb, closure)
        dp = 1e-6
        r2, _ = c.residual(u, pb + dp, closure)
        if r is None or r2 is None:
            return None
        J = c.jacobian(u, pb, pc, r, closure, 1.0)
        if not np.all(np.isfinite(J)):
            return None
        try:
            return np.linalg.solve(J, -(r2 - r) / dp)
        except np.linalg.LinAlgError:
            return None

    def march(self, u, pb0, pb1, closure, h0=0.02):
        """Secant-predicted continuation in psi_B with step halving."""
        hist = [(pb0, np.array(u, dtype=float))]
        pb, h = pb0, h0
        sgn = 1.0 if pb1 > pb0 else -1.0
        solves = 0
        tangent = self.tangent(hist[0][1], pb0, closure)
        while abs(pb1 - pb) > 1e-12:
            nb = pb + sgn * min(h, abs(pb1 - pb))
            if abs(pb1 - nb) < 1e-4:
                nb = pb1
            if len(hist) >= 2:
                (q0, v0), (q1, v1) = hist[-2], hist[-1]
                guess = v1 + (v1 - v0) * (nb - q1) / (q1 - q0)
            elif tangent is not None:
                guess = hist[0][1] + tangent * (nb - pb0)
            else:
                guess = hist[-1][1]
            un, r, it, ok = self.newton(guess, nb, closure, max_iter=12)
            solves += 1
            if not ok or solves > 400:
                h *= 0.5
                if h < 1e-3 or solves > 400:
                    best = None if r is None else float(np.max(np.abs(r)))
                    raise ConvergenceError(
                        f"continuation stalled at psi_B={pb:.4f} towards {pb1:.4f}",
                        best_residual=best)
                continue
            hist.append((nb, un))
            pb = nb
            h = min(1.5 * h, 0.05)
        return hist[-1][1]

    def pinned(self, pb, warm=None):
        if warm is not None:
            return self.march(warm[1], warm[0], pb, "pin")
        u = self.seed(pb)
        if u is not None:
            return u
        for a in sorted(ANCHORS, key=lambda q: abs(q - pb)):
            if abs(a - pb) < 1e-9:
                continue
            ua = self.seed(a)
            if ua is not None:
                return self.march(ua, a, pb, "pin")
        raise ConvergenceError(f"no starting solution found for psi_B={pb:.4f}")

    def volume(self, pb, u_pin, warm=None):
        """Volume-closed solution with lambda_A >= 1, or None."""
        if warm is not None:
            try:
                u = self.march(warm[1], warm[0], pb, "volume")
                if u[0] >= 1.0:
                    return u
            except ConvergenceError:
                pass
        u, r, it, ok = self.newton(u_pin, pb, "volume")
        if ok and u[0] >= 1.0:
            return u
        if warm is not None:
            return None
        # cold start: walk down the pinned branch to where the volume branch
        # can be entered, then march back up on it
        q, up = pb, u_pin
        while q > 0.1:
            nq = q - 0.02
            try:
                up = self.march(up, q, nq, "pin")
            except ConvergenceError:
                return None
            q = nq
            rv, _ = self.core.residual(up, q, "volume")
            if rv is None or rv[-1] >= 0.0:
                return None
            uv, r, it, ok = self.newton(up, q, "volume")
            if ok and uv[0] >= 1.0:
                try:
                    u = self.march(uv, q, pb, "volume")
                except ConvergenceError:
                    return None
                return u if u[0] >= 1.0 else None
        return None


def _segment(kind, P, lm, lc, d, om, th):
    return MembraneSegment(kind, np.asarray(P), np.asarray(lm), np.asarray(lc),
                           np.asarray(d), np.asarray(om), np.asarray(th))


def _bend_segment(kind, P, Y):
    lm, d, ph = Y[:, 0], Y[:, 1], Y[:, 2]
    return _segment(kind, P, lm, d / np.sin(P), d, lm * np.cos(ph), ph)


def _split_bending(core, P, Y, p_hat):
    c = core.refine_event(P, Y, p_hat, 0.5 * math.pi)
    if c is None:
        raise StateError("equator (omega = 0) not found on the bending trajectory")
    i, pc, yc = c
    j = core.refine_event(P, Y, p_hat, math.pi)
    if j is None:
        raise StateError("top point (omega = -lambda_m) not found on the bending trajectory")
    j, pd, yd = j
    bc = (np.append(P[:i + 1], pc), np.vstack([Y[:i + 1], yc]))
    cd = (np.concatenate([[pc], P[i + 1:j + 1], [pd]]), np.vstack([yc, Y[i + 1:j + 1], yd]))
    de = (np.append(pd, P[j + 1:]), np.vstack([yd, Y[j + 1:]]))
    return bc, cd, de, pc, pd


def _flat_segment(kind, P, Y):
    lm, lc = Y[:, 0], Y[:, 1]
    if kind == "AB":
        return _segment(kind, P, lm, lc, lc * np.sin(P), lm, np.zeros_like(P))
    return _segment(kind, P, lm, lc, lc * np.sin(P), -lm, np.full_like(P, math.pi))


def _assemble(setup, psi_b, u, pieces, iterations, strategy, closure_vec, pin_vec, r_vec,
              lambda_bound):
    core = setup.core()
    la, p_hat, lf = pieces["la"], pieces["p"], pieces["lf"]
    ab = _flat_segment("AB", *pieces["ab"])
    bc, cd, de, pc, pd = pieces["bend"]
    ef = _flat_segment("EF", *pieces["ef"])
    segs = {"AB": ab, "BC": _bend_segment("BC", *bc), "CD": _bend_segment("CD", *cd),
            "DE": _bend_segment("DE", *de), "EF": ef}
    r0 = setup.r0
    bends = [segs["BC"], segs["CD"], segs["DE"]]
    vol = enclosed_volume(bends, r0)
    height = axial_height(bends, r0)
    p = p_hat * setup.pressure_unit
    lcb = ab.lambda_c[-1]
    force = p * math.pi * (r0 * lcb * math.sin(psi_b)) ** 2
    v0 = 4.0 / 3.0 * math.pi * r0 ** 3
    if height <= 0.0:
        raise InfeasibleError(f"psi_B={psi_b:.4f}: the needle face would pass the plate "
                              f"(height {height * 1e6:.1f} um)")
    BC, CD, DE = segs["BC"], segs["CD"], segs["DE"]
    res = {
        "shooting": float(np.max(np.abs(r_vec))) if r_vec is not None else float("nan"),
        "bc_B": abs(BC.omega[0] - BC.lambda_m[0]),
        "bc_C": abs(BC.omega[-1]),
        "bc_D": abs(CD.omega[-1] + CD.lambda_m[-1]),
        "bc_E": abs(DE.delta[-1] - setup.rho_hat),
        "joint_B": max(abs(ab.lambda_m[-1] - BC.lambda_m[0]), abs(ab.delta[-1] - BC.delta[0])),
        "joint_C": max(abs(BC.lambda_m[-1] - CD.lambda_m[0]), abs(BC.delta[-1] - CD.delta[0])),
        "joint_D": max(abs(CD.lambda_m[-1] - DE.lambda_m[0]), abs(CD.delta[-1] - DE.delta[0])),
        "joint_E": max(abs(DE.lambda_m[-1] - ef.lambda_m[-1]), abs(DE.delta[-1] - ef.delta[-1]),
                       abs(DE.psi[-1] - ef.psi[-1])),
        "volume": abs(vol - v0) / v0,
    }
    return EquilibriumSolution(
        psi_b=psi_b, unknowns=Unknowns(float(la), float(p), float(lf)),
        psi_c=float(pc), psi_d=float(pd), psi_e=float(DE.psi[-1]), segments=segs,
        force=float(force), deformation=float(2.0 * r0 - height), volume=float(vol),
        residuals=res, volume_satisfied=res["volume"] <= setup.tol_volume,
        lambda_a_bound_active=lambda_bound, iterations=iterations, setup=setup,
        strategy=strategy, _vec=pin_vec, _vvec=closure_vec)


def _pieces_ms(core, u, psi_b):
    r, pc = core.residual(u, psi_b, "volume")
    if r is None:
        raise ConvergenceError("converged vector no longer integrates")
    P, Y, _ = core.ab_traj(u[0], psi_b)
    Pb, Yb = core.bend_traj(u, psi_b, pc["psie"])
    Pe, Ye, _ = core.ef_traj(u[2])
    return dict(la=u[0], p=u[1], lf=u[2], ab=(P, Y), ef=(Pe, Ye),
                bend=_split_bending(core, Pb, Yb, u[1])), r


def _check_psi(psi_b, setup):
    if not (0.0 < psi_b < 0.5 * math.pi):
        raise DomainError(f"psi_B must lie in (0, pi/2), got {psi_b}")
    if math.sin(psi_b) <= setup.rho_hat:
        raise InfeasibleError(
            f"psi_B={psi_b:.4f}: plate contact radius {setup.r0 * math.sin(psi_b) * 1e6:.1f} um "
            f"does not exceed the needle radius {setup.rho0 * 1e6:.1f} um")


def solve_equilibrium(psi_b: float, setup: ProblemSetup,
                      warm_start: Union[None, Unknowns, EquilibriumSolution] = None
                      ) -> EquilibriumSolution:
    """Converged membrane state for a prescribed contact angle.

    ``warm_start`` may be a previous solution on the same setup (continuation
    from its psi_B) or bare ``Unknowns`` (seeds the pressure search).
    """
    _check_psi(psi_b, setup)
    if setup.strategy == "nested":
        return _solve_nested(psi_b, setup, warm_start)
    sv = _Solver(setup)
    core = sv.core
    warm = warm_vol = None
    if isinstance(warm_start, EquilibriumSolution) and warm_start._vec is not None \
            and len(warm_start._vec) == core.size():
        warm = (warm_start.psi_b, warm_start._vec)
        if warm_start._vvec is not None:
            warm_vol = (warm_start.psi_b, warm_start._vvec)
    u_pin = None
    if warm is not None:
        try:
            u_pin = sv.pinned(psi_b, warm)
        except ConvergenceError:
            u_pin = None
    if u_pin is None:
        u_pin = sv.pinned(psi_b)
    r_pin, _ = core.residual(u_pin, psi_b, "volume")
    u, bound, it = u_pin, True, 0
    if r_pin[-1] < 0.0:
        uv = sv.volume(psi_b, u_pin, warm_vol)
        if uv is not None:
            u, bound = uv, False
        elif r_pin[-1] < -setup.tol_volume:
            raise ConvergenceError(
                f"psi_B={psi_b:.4f}: no volume-conserving state with lambda_A >= 1 was found",
                best_residual=float(-r_pin[-1]))
    pieces, r = _pieces_ms(core, u, psi_b)
    rr = r.copy()
    if bound:
        rr[-1] = 0.0   # closure replaced by the active bound lambda_A = 1
    return _assemble(setup, psi_b, u, pieces, it, "newton",
                     None if bound else u, u_pin, rr, bound)


def _solve_nested(psi_b, setup, warm_start):
    """Nested shooting: pressure by bracketing for each lambda_A, then
    lambda_A by bracketing on the volume; lambda_F matched inside."""
    core = setup.core()
    p0 = 1.45 * psi_b ** 2
    if isinstance(warm_start, Unknowns):
        p0 = warm_start.p / setup.pressure_unit
    elif isinstance(warm_start, EquilibriumSolution):
        p0 = warm_start.unknowns.p / setup.pressure_unit

    def solve_p(la):
        out = core.nested_p(la, psi_b, p0)
        if out is None:
            raise ConvergenceError(f"pressure search failed at psi_B={psi_b:.4f}, lambda_A={la}")
        return out

    def vol_of(out):
        segs = out[1][3]
        v = 0.0
        for P, Y in ((segs[2], segs[3]), (segs[4], segs[5]), (segs[6], segs[7])):
            v += _trapz(Y[:, 1] ** 2 * Y[:, 0] * np.sin(Y[:, 2]), P)
        return 0.75 * v - 1.0

    la, out = 1.0, solve_p(1.0)
    bound = True
    if vol_of(out) < 0.0:
        hi = 1.0
        for _ in range(30):
            hi = 1.0 + 2.0 * (hi - 1.0) + 1e-3
            try:
                if vol_of(solve_p(hi)) > 0.0:
                    break
            except ConvergenceError:
                break
        else:
            hi = None
        if hi is not None:
            try:
                la = brentq(lambda x: vol_of(solve_p(x)), 1.0, hi, xtol=1e-12)
                out = solve_p(la)
                bound = False
            except (ValueError, ConvergenceError):
                la, out = 1.0, solve_p(1.0)
    p_hat, (dpe, dlm, lf, segs) = out
    P1, Y1, P2, Y2, P3, Y3, P4, Y4 = segs
    Pe, Ye, _ = core.ef_traj(lf)
    bend = ((P2, Y2), (P3, Y3), (P4, Y4), P2[-1], P3[-1])
    pieces = dict(la=la, p=p_hat, lf=lf, ab=(P1, Y1), ef=(Pe, Ye), bend=bend)
    r = np.array([dpe, dlm])
    return _assemble(setup, psi_b, None, pieces, 0, "nested", None, None, r, bound)


def injection_force(solution: EquilibriumSolution) -> float:
    r0 = solution.setup.r0
    lcb = solution.segments["AB"].lambda_c[-1]
    return solution.unknowns.p * math.pi * (r0 * lcb * math.sin(solution.psi_b)) ** 2


def cell_deformation(solution: EquilibriumSolution) -> float:
    bends = [solution.segments[k] for k in ("BC", "CD", "DE")]
    return 2.0 * solution.setup.r0 - axial_height(bends, solution.setup.r0)
