"""Geometry of the deformed meridian: angles, curvatures, shape, height, volume.

A segment stores the membrane state on its psi grid.  The signed slope
``s = sqrt(lambda_m**2 - omega**2)`` (negative on DE, where the meridian
turns back down towards the needle) is the axial rate d(eta)/d(psi) / r0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, StateError

SEGMENTS = ("AB", "BC", "CD", "DE", "EF")
FLAT = ("AB", "EF")
_SIGN = {"AB": 1.0, "BC": 1.0, "CD": 1.0, "DE": -1.0, "EF": -1.0}


@dataclass(frozen=True)
class MembranePoint:
    psi: float
    lambda_m: float
    lambda_c: float
    delta: float
    omega: float
    segment: str


@dataclass(frozen=True)
class ShapePoint:
    rho: float    # m
    eta: float    # m
    psi: float
    segment: str


@dataclass
class MembraneSegment:
    """Samples of one region.  ``theta`` (surface angle) is optional; when
    present it is used for the slope instead of the square root, which is
    better conditioned near the horizontal points C-D."""
    kind: str
    psi: np.ndarray
    lambda_m: np.ndarray
    lambda_c: np.ndarray
    delta: np.ndarray
    omega: np.ndarray
    theta: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in SEGMENTS:
            raise DomainError(f"unknown segment kind {self.kind!r}")

    def __len__(self):
        return len(self.psi)

    def point(self, i) -> MembranePoint:
        return MembranePoint(float(self.psi[i]), float(self.lambda_m[i]), float(self.lambda_c[i]),
                             float(self.delta[i]), float(self.omega[i]), self.kind)

    def points(self):
        return [self.point(i) for i in range(len(self))]

    @property
    def slope(self) -> np.ndarray:
        if self.kind in FLAT:
            return np.zeros_like(self.psi)
        if self.theta is not None:
            return self.lambda_m * np.sin(self.theta)
        return _SIGN[self.kind] * _root(self.lambda_m, self.omega)


def _root(lm, om, tol=1e-9):
    lm = np.asarray(lm, dtype=float)
    om = np.asarray(om, dtype=float)
    q = lm * lm - om * om
    if np.any(q < -tol * lm * lm):
        raise StateError("lambda_m < |omega|: meridian slope undefined")
    return np.sqrt(np.maximum(q, 0.0))


def surface_angle(p: MembranePoint) -> float:
    """Angle of the meridian against the axis direction, continued past pi on DE."""
    if p.segment == "AB":
        return 0.0
    if p.segment == "EF":
        return math.pi
    if p.lambda_m <= 0:
        raise StateError("lambda_m must be positive")
    c = p.omega / p.lambda_m
    if abs(c) > 1.0 + 1e-9:
        raise StateError(f"|omega| > lambda_m at psi={p.psi:.6g}")
    t = math.acos(max(-1.0, min(1.0, c)))
    return 2.0 * math.pi - t if p.segment == "DE" else t


def _diff(x, y, order=1, width=5):
    """Derivative by ``width``-point finite differences on a non-uniform grid
    (centered away from the ends).  Samples closer than 1e-9 of the typical
    spacing are merged first, as happens when an event lands on a grid node."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sc = float(np.median(np.abs(np.diff(x))))
    keep = np.concatenate([[True], np.abs(np.diff(x)) > 1e-9 * sc])
    xs, ys = x[keep], y[keep]
    n = len(xs)
    width = min(width, n)
    half = width // 2
    lo = np.clip(np.arange(n) - half, 0, n - width)
    S = lo[:, None] + np.arange(width)[None, :]
    X = (xs[S] - xs[:, None]) / sc
    V = np.stack([X ** k for k in range(width)], axis=1)
    rhs = np.zeros((n, width, 1))
    rhs[:, order, 0] = math.factorial(order)
    w = np.linalg.solve(V, rhs)[..., 0] / sc ** order
    d = np.sum(w * ys[S], axis=1)
    if n == len(x):
        return d
    return np.interp(x, xs, d) if xs[0] < xs[-1] else np.interp(x[::-1], xs[::-1], d[::-1])[::-1]


def principal_curvatures(seg: MembraneSegment, r0: float):
    """(K_m, K_c) in 1/m at every sample.

    K_m is the curvature of the meridian curve (rho, eta) = r0*(delta, int s),
    with delta', delta'' and s' from 5-point differences; K_c = s/(r0*lambda_m*delta).
    """
    if len(seg) < 3:
        raise DomainError("need at least 3 samples for curvature differences")
    if np.any(np.sin(seg.psi) == 0.0):
        raise DomainError("curvatures undefined at the poles")
    if seg.kind in FLAT:
        return np.zeros_like(seg.psi), np.zeros_like(seg.psi)
    s = seg.slope
    dd = _diff(seg.psi, seg.delta, 1)
    d2 = _diff(seg.psi, seg.delta, 2)
    ds = _diff(seg.psi, s, 1)
    km = (dd * ds - s * d2) / (r0 * (dd * dd + s * s) ** 1.5)
    kc = s / (r0 * seg.lambda_m * seg.delta)
    return km, kc


def _check_joints(segments: Sequence[MembraneSegment], r0, tol=1e-6):
    for a, b in zip(segments[:-1], segments[1:]):
        ia = -1
        ib = 0 if a.psi[-1] == b.psi[0] or b.psi[0] < b.psi[-1] else -1
        if abs(a.delta[ia] - b.delta[ib]) > tol or abs(a.lambda_m[ia] - b.lambda_m[ib]) > tol:
            raise StateError(f"discontinuity between {a.kind} and {b.kind}")


def _ordered(seg):
    if seg.psi[0] > seg.psi[-1]:
        sl = slice(None, None, -1)
        th = None if seg.theta is None else seg.theta[sl]
        return MembraneSegment(seg.kind, seg.psi[sl], seg.lambda_m[sl], seg.lambda_c[sl],
                               seg.delta[sl], seg.omega[sl], th)
    return seg


def _trapz(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def reconstruct_shape(segments: Sequence[MembraneSegment], r0: float, joint_tol=1e-6):
    """Half-meridian polyline A -> F with eta(psi_B) = 0."""
    segs = [_ordered(s) for s in segments]
    _check_joints(segs, r0, joint_tol)
    out = []
    eta = 0.0
    for seg in segs:
        s = seg.slope
        inc = np.concatenate([[0.0], np.cumsum(0.5 * (s[1:] + s[:-1]) * np.diff(seg.psi))])
        etas = eta + r0 * inc
        for i in range(len(seg)):
            out.append(ShapePoint(r0 * float(seg.delta[i]), float(etas[i]), float(seg.psi[i]), seg.kind))
        eta = float(etas[-1])
    return out


def axial_height(segments: Sequence[MembraneSegment], r0: float) -> float:
    """eta_E - eta_B.  Flat segments contribute nothing."""
    return r0 * sum(_trapz(s.slope, s.psi) for s in (_ordered(x) for x in segments)
                    if s.kind not in FLAT)


def enclosed_volume(segments: Sequence[MembraneSegment], r0: float) -> float:
    """pi*r0^3 * integral of delta^2 * slope over the bending region."""
    tot = 0.0
    for seg in (_ordered(x) for x in segments):
        if seg.kind in FLAT:
            continue
        if seg.theta is None:
            _root(seg.lambda_m, seg.omega)
        tot += _trapz(seg.delta ** 2 * seg.slope, seg.psi)
    return math.pi * r0 ** 3 * tot


def sphere_segment(psi_from, psi_to, n=2000, kind="BC"):
    """Undeformed sphere samples (identity deformation)."""
    psi = np.linspace(psi_from, psi_to, n + 1)
    one = np.ones_like(psi)
    return MembraneSegment(kind, psi, one, one.copy(), np.sin(psi), np.cos(psi), psi.copy())
