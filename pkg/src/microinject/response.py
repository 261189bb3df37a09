"""Force-deformation sweeps, tension/stress profiles and force at a given deformation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .equilibrium import EquilibriumSolution, ProblemSetup, solve_equilibrium
from .errors import ConvergenceError, DomainError, InfeasibleError, MicroinjectError
from .material import SpeedState, stresses, tensions


@dataclass(frozen=True)
class ResponseRecord:
    psi_b: float
    force: float          # N
    deformation: float    # m
    pressure: float       # Pa
    lambda_a: float
    lambda_f: float
    converged: bool = True
    volume_residual: float = 0.0
    note: str = ""


@dataclass
class ResponseCurve:
    speed: SpeedState
    records: List[ResponseRecord]
    skipped: List[tuple] = field(default_factory=list)     # (psi_b, reason)
    solutions: List[EquilibriumSolution] = field(default_factory=list, repr=False)

    def converged(self):
        return [r for r in self.records if r.converged]

    def arrays(self):
        ok = self.converged()
        return (np.array([r.psi_b for r in ok]), np.array([r.force for r in ok]),
                np.array([r.deformation for r in ok]))

    def force_at(self, d):
        """Monotone interpolation of F over d (for comparing curves)."""
        _, f, dd = self.arrays()
        return PchipInterpolator(dd, f, extrapolate=False)(d)


def _record(sol: EquilibriumSolution) -> ResponseRecord:
    u = sol.unknowns
    return ResponseRecord(sol.psi_b, sol.force, sol.deformation, u.p, u.lambda_a, u.lambda_f,
                          True, sol.volume_error)


def force_deformation_curve(psi_grid: Sequence[float], setup: ProblemSetup) -> ResponseCurve:
    """Continuation sweep in ascending psi_B.

    Leading points that cannot be solved (contact radius not above the
    needle radius) are skipped.  Once a point fails after a solved one, it
    and all later points are kept as unconverged records.
    """
    grid = np.asarray(psi_grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise DomainError("psi_B grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("psi_B grid must be strictly increasing")
    if grid[0] <= 0 or grid[-1] >= 0.5 * math.pi:
        raise DomainError("psi_B grid must lie inside (0, pi/2)")
    curve = ResponseCurve(setup.speed, [])
    prev = None
    stop = None
    for pb in grid:
        pb = float(pb)
        if stop is not None:
            curve.skipped.append((pb, stop))
            curve.records.append(ResponseRecord(pb, *([math.nan] * 5), False, math.nan, stop))
            continue
        try:
            sol = solve_equilibrium(pb, setup, warm_start=prev)
        except MicroinjectError as exc:
            if not isinstance(exc, (InfeasibleError, ConvergenceError)):
                raise
            curve.skipped.append((pb, str(exc)))
            if prev is None:
                continue
            curve.records.append(ResponseRecord(pb, *([math.nan] * 5), False, math.nan, str(exc)))
            # deformation grows with psi_B, so past the first failure beyond
            # the solved range the remaining points are not attempted
            stop = f"beyond the last solvable point (failed at psi_B={pb:.4f})"
            continue
        curve.records.append(_record(sol))
        curve.solutions.append(sol)
        prev = sol
    if prev is None:
        raise InfeasibleError("no point of the psi_B sweep could be solved")
    return curve


def rescale_curve(curve: ResponseCurve, setup: ProblemSetup) -> ResponseCurve:
    """Same sweep on a setup differing only in C1 (and speed).

    Without surface traction the shape is independent of C1 while force and
    pressure scale with it, so no re-solve is needed.  Solutions are not
    carried over.
    """
    if not curve.solutions:
        raise DomainError("curve has no solved points to rescale")
    ref = curve.solutions[0].setup
    if ref.mat.surface_traction_m != 0.0 or setup.mat.surface_traction_m != 0.0:
        raise DomainError("rescaling needs zero surface traction")
    if replace(ref, mat=ref.mat.with_c1(setup.mat.c1), speed=setup.speed) != setup:
        raise DomainError("setups differ in more than C1 and speed")
    k = setup.mat.c1 / ref.mat.c1
    recs = [replace(r, force=r.force * k, pressure=r.pressure * k) for r in curve.records]
    return ResponseCurve(setup.speed, recs, list(curve.skipped))


@dataclass
class DistributionProfile:
    psi: np.ndarray
    segment: np.ndarray
    lambda_m: np.ndarray
    lambda_c: np.ndarray
    t_m: np.ndarray       # N/m
    t_c: np.ndarray
    sigma_m: np.ndarray   # Pa
    sigma_c: np.ndarray

    def __len__(self):
        return len(self.psi)


def distribution_profile(solution: EquilibriumSolution) -> DistributionProfile:
    """Tensions and stresses along the meridian A -> F.  EF is stored from
    the needle edge to the pole, so psi increases throughout."""
    mat = solution.setup.mat
    cols = {k: [] for k in ("psi", "seg", "lm", "lc")}
    for seg in solution.ordered_segments:
        sl = slice(None, None, -1) if seg.psi[0] > seg.psi[-1] else slice(None)
        cols["psi"].append(seg.psi[sl])
        cols["lm"].append(seg.lambda_m[sl])
        cols["lc"].append(seg.lambda_c[sl])
        cols["seg"].append(np.full(len(seg), seg.kind))
    lm = np.concatenate(cols["lm"])
    lc = np.concatenate(cols["lc"])
    tm, tc, _, _ = tensions(lm, lc, mat)
    sm, sc = stresses(lm, lc, mat)
    return DistributionProfile(np.concatenate(cols["psi"]), np.concatenate(cols["seg"]),
                               lm, lc, tm, tc, sm, sc)


class DeformationMap:
    """Inverse of psi_B -> d for one setup, built on a coarse sweep and
    refined by root-finding.  Solved points are cached for warm starts."""

    def __init__(self, setup: ProblemSetup, psi_lo=0.05, psi_hi=0.8, points=16):
        self.setup = setup
        curve = force_deformation_curve(np.linspace(psi_lo, psi_hi, points), setup)
        self.sols = sorted(curve.solutions, key=lambda s: s.psi_b)
        if len(self.sols) < 2:
            raise ConvergenceError("deformation map needs at least two solved points")

    @property
    def d_range(self):
        return self.sols[0].deformation, self.sols[-1].deformation

    def _nearest(self, pb):
        return min(self.sols, key=lambda s: abs(s.psi_b - pb))

    def solve(self, pb):
        for s in self.sols:
            if s.psi_b == pb:
                return s
        sol = solve_equilibrium(pb, self.setup, warm_start=self._nearest(pb))
        self.sols.append(sol)
        self.sols.sort(key=lambda s: s.psi_b)
        return sol

    def at(self, d_target, rtol=1e-6):
        """Solution whose deformation equals ``d_target`` to ``rtol``."""
        lo, hi = self.d_range
        if not (lo <= d_target <= hi):
            raise DomainError(f"deformation {d_target * 1e6:.3f} um outside the solvable range "
                              f"[{lo * 1e6:.3f}, {hi * 1e6:.3f}] um")
        ps = np.array([s.psi_b for s in self.sols])
        ds = np.array([s.deformation for s in self.sols])
        if np.any(np.diff(ds) <= 0):
            raise ConvergenceError("deformation is not monotone in psi_B on this setup")
        k = int(np.clip(np.searchsorted(ds, d_target), 1, len(ds) - 1))
        a, b = self.sols[k - 1], self.sols[k]
        if abs(a.deformation - d_target) <= rtol * d_target:
            return a
        if abs(b.deformation - d_target) <= rtol * d_target:
            return b
        x = float(PchipInterpolator(ds, ps)(d_target))
        for _ in range(30):
            s = self.solve(x)
            err = s.deformation - d_target
            if abs(err) <= rtol * d_target:
                return s
            if err > 0:
                b = s if s.psi_b < b.psi_b else b
            else:
                a = s if s.psi_b > a.psi_b else a
            # secant on the bracket, bisection as a fallback
            x = a.psi_b + (d_target - a.deformation) * (b.psi_b - a.psi_b) / (b.deformation - a.deformation)
            if not (a.psi_b < x < b.psi_b) or b.psi_b - a.psi_b < 1e-12:
                x = 0.5 * (a.psi_b + b.psi_b)
        raise ConvergenceError(f"could not match deformation {d_target * 1e6:.3f} um")


def force_at_deformation(d_target: float, setup: ProblemSetup,
                         dmap: Optional[DeformationMap] = None):
    """(force N, psi_B) at which the cell deformation equals ``d_target``."""
    if d_target < 0:
        raise DomainError("target deformation must be non-negative")
    if d_target == 0:
        return 0.0, 0.0
    dmap = dmap or DeformationMap(setup)
    sol = dmap.at(d_target)
    return sol.force, sol.psi_b
