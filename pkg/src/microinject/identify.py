"""Two-step identification of the rate law from injection experiments.

Step one calibrates C1 per experiment against the forward model; step two
fits the velocity polynomial to constant-velocity experiments and the
reciprocal acceleration factor to accelerated ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .equilibrium import ProblemSetup
from .errors import CalibrationError, DomainError, FitError
from .material import MPA, MaterialParams, RateCoefficients
from .response import DeformationMap

DEFAULT_BRACKET = (0.01 * MPA, 2.0 * MPA)
IDENTITY_REDUCTION = (0.0, 1.0, 0.0)


@dataclass(frozen=True)
class VelocitySample:
    v: float      # mm/s
    c1: float     # MPa

    def __post_init__(self):
        if not (self.v >= 0 and self.c1 > 0):
            raise DomainError(f"invalid velocity sample ({self.v}, {self.c1})")


@dataclass(frozen=True)
class AccelerationSample:
    a: float        # mm/s^2
    epsilon: float

    def __post_init__(self):
        if not (self.a >= 0 and self.epsilon > 0):
            raise DomainError(f"invalid acceleration sample ({self.a}, {self.epsilon})")


@dataclass(frozen=True)
class CalibrationResult:
    c1: float          # Pa
    residual: float    # RMS force misfit, N
    iterations: int


class ReferenceModel:
    """Forward model at a reference C1, reused across calibrations.

    Without surface traction the equilibrium shape does not depend on C1 and
    the force is proportional to it, so F(d; C1) = C1/C1_ref * F(d; C1_ref).
    """

    def __init__(self, setup: ProblemSetup, c1_ref: float = 1.0 * MPA):
        if setup.mat.surface_traction_m != 0.0:
            raise DomainError("reference scaling needs zero surface traction")
        self.c1_ref = c1_ref
        self.setup = replace(setup, mat=setup.mat.with_c1(c1_ref))
        self._map: Optional[DeformationMap] = None

    @property
    def dmap(self) -> DeformationMap:
        if self._map is None:
            self._map = DeformationMap(self.setup)
        return self._map

    def unit_forces(self, d) -> np.ndarray:
        """Force per Pa of C1 at each deformation."""
        return np.array([self.dmap.at(float(x)).force for x in d]) / self.c1_ref


def _curve(measured):
    arr = np.asarray(measured, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("measured curve must be a sequence of (d, F) pairs")
    if len(arr) < 3:
        raise DomainError("calibration needs at least 3 measured points")
    if not np.all(np.isfinite(arr)) or np.any(arr[:, 0] <= 0):
        raise DomainError("measured deformations must be positive and finite")
    return arr[:, 0], arr[:, 1]


def calibrate_c1(measured: Sequence[Tuple[float, float]], setup: ProblemSetup,
                 bracket=DEFAULT_BRACKET, model: Optional[ReferenceModel] = None
                 ) -> CalibrationResult:
    """C1 (Pa) minimizing the squared force misfit at the measured
    deformations (m) and forces (N)."""
    d, f = _curve(measured)
    lo, hi = bracket
    if not (0 < lo < hi):
        raise DomainError("calibration bracket must satisfy 0 < lo < hi")
    model = model or ReferenceModel(setup)
    g = model.unit_forces(d)

    def sse(c1):
        return float(np.sum((c1 * g - f) ** 2))

    def grad(c1):
        return float(2.0 * np.sum((c1 * g - f) * g))

    if not (grad(lo) < 0 < grad(hi)):
        raise CalibrationError(f"no misfit minimum inside [{lo / MPA:g}, {hi / MPA:g}] MPa")
    res = minimize_scalar(sse, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-6 * lo, "maxiter": 500})
    if not res.success:
        raise CalibrationError(f"C1 search did not converge: {res.message}")
    return CalibrationResult(float(res.x), math.sqrt(res.fun / len(d)), int(res.nfev))


def fit_velocity_coeffs(samples: Sequence[VelocitySample]):
    """Least-squares quadratic c1(v) = k0 + k1*v + k2*v^2 (MPa)."""
    v = np.array([s.v for s in samples], dtype=float)
    c = np.array([s.c1 for s in samples], dtype=float)
    if len(np.unique(v)) < 3:
        raise FitError("need at least 3 distinct velocities")
    A = np.column_stack([np.ones_like(v), v, v * v])
    coef, _, rank, _ = np.linalg.lstsq(A, c, rcond=None)
    if rank < 3:
        raise FitError("rank-deficient velocity design")
    return tuple(float(x) for x in coef)


def _reduction(a, g):
    return g[0] + 1.0 / (g[1] + g[2] * a)


def fit_acceleration_coeffs(samples: Sequence[AccelerationSample]):
    """Fit eps(a) = g0 + 1/(g1 + g2*a).

    For fixed g0 the model is linear in (g1, g2) through 1/(eps - g0); a scan
    over g0 in [0, min eps) supplies starts for a Gauss-Newton polish.
    """
    pts = sorted(((s.a, s.epsilon) for s in samples))
    a = np.array([p[0] for p in pts])
    e = np.array([p[1] for p in pts])
    if len(np.unique(a)) < 3:
        raise FitError("need at least 3 distinct accelerations")
    if np.ptp(e) <= 1e-12 * np.max(e):
        raise FitError("constant reduction data: reciprocal model is degenerate")
    if np.any(np.diff(e) > 1e-12):
        raise FitError("reduction coefficient must decrease with acceleration")
    emin = float(e.min())
    starts = []
    for g0 in np.linspace(0.0, emin, 41)[:-1]:
        y = 1.0 / (e - g0)
        A = np.column_stack([np.ones_like(a), a])
        (g1, g2), *_ = np.linalg.lstsq(A, y, rcond=None)
        if g1 > 0 and g2 >= 0:
            starts.append((float(np.sum((_reduction(a, (g0, g1, g2)) - e) ** 2)), (g0, g1, g2)))
    if not starts:
        raise FitError("no admissible starting point for the reciprocal fit")
    starts.sort(key=lambda t: t[0])
    best = None
    for _, g in starts[:5]:
        try:
            r = least_squares(lambda g: _reduction(a, g) - e, g, method="lm",
                              xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
        except ValueError:
            continue
        if not np.all(np.isfinite(r.x)) or r.x[1] <= 0 or r.x[2] < 0:
            continue
        if best is None or r.cost < best.cost:
            best = r
    if best is None:
        raise FitError("reciprocal fit diverged")
    return tuple(float(x) for x in best.x)


def build_rate_model(constant_v: Sequence[Tuple[float, Sequence]], accelerated: Sequence[Tuple[float, float, Sequence]],
                     setup: ProblemSetup, bracket=DEFAULT_BRACKET,
                     log: Optional[list] = None) -> RateCoefficients:
    """Rate coefficients from constant-velocity experiments (v, curve) and
    accelerated ones (a, v_at_puncture, curve); curves are (d m, F N) pairs.

    If ``log`` is a list, one CalibrationResult per experiment is appended,
    constant-velocity ones first.
    """
    if len(constant_v) < 3:
        raise DomainError("need at least 3 constant-velocity experiments")
    if accelerated and len(accelerated) < 3:
        raise DomainError("need at least 3 accelerated experiments (or none)")
    model = ReferenceModel(setup)
    log = [] if log is None else log
    vs = []
    for v, curve in constant_v:
        cal = calibrate_c1(curve, setup, bracket, model)
        log.append(cal)
        vs.append(VelocitySample(v, cal.c1 / MPA))
    k0, k1, k2 = fit_velocity_coeffs(vs)
    if not accelerated:
        return RateCoefficients(k0, k1, k2, *IDENTITY_REDUCTION)
    acc = []
    for a, vp, curve in accelerated:
        cal = calibrate_c1(curve, setup, bracket, model)
        log.append(cal)
        c1 = cal.c1 / MPA
        acc.append(AccelerationSample(a, c1 / (k0 + k1 * vp + k2 * vp * vp)))
    g0, g1, g2 = fit_acceleration_coeffs(acc)
    return RateCoefficients(k0, k1, k2, g0, g1, g2)
