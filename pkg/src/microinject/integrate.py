"""Fixed-step RK4 over psi with event localization and pole starts.

These are the general-purpose integrators used by tests, diagnostics and
callers supplying their own right-hand side.  The equilibrium solver uses
jitted copies of the same scheme (``_kernels``) for the built-in systems.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, EventNotFound, IntegrationError

Rhs = Callable[[float, np.ndarray], np.ndarray]


@dataclass
class Trajectory:
    psi: np.ndarray
    y: np.ndarray
    segment: str = ""
    event_psi: Optional[float] = None

    def __len__(self):
        return len(self.psi)

    @property
    def end(self):
        return self.psi[-1], self.y[-1]


@dataclass(frozen=True)
class EventSpec:
    """Terminate when ``func(psi, y)`` crosses zero in ``direction``
    (+1 rising, -1 falling, 0 either way)."""
    func: Callable[[float, np.ndarray], float]
    direction: int = 0
    tol: float = 1e-10


def _rk4(rhs: Rhs, psi: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(psi, y)
    k2 = rhs(psi + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(psi + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(psi + h, y + h * k3)
    return y + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def _check(y, psi):
    if not np.all(np.isfinite(y)):
        raise IntegrationError(f"integration blow-up at psi={psi:.6g}", psi=psi)


def integrate_segment(rhs: Rhs, y0, psi_from: float, psi_to: float, n_steps: int,
                      segment: str = "") -> Trajectory:
    """Classical RK4 with uniform step; every sample is kept."""
    if n_steps < 16:
        raise DomainError("n_steps must be at least 16")
    y = np.array(y0, dtype=float)
    _check(rhs(psi_from, y), psi_from)
    h = (psi_to - psi_from) / n_steps
    P = psi_from + h * np.arange(n_steps + 1)
    P[-1] = psi_to
    Y = np.empty((n_steps + 1, y.size))
    Y[0] = y
    for i in range(n_steps):
        y = _rk4(rhs, P[i], y, h)
        _check(y, P[i] + h)
        Y[i + 1] = y
    return Trajectory(P, Y, segment)


def _crossed(g0, g1, direction):
    if direction > 0:
        return g0 < 0 <= g1
    if direction < 0:
        return g0 > 0 >= g1
    return (g0 < 0 <= g1) or (g0 > 0 >= g1)


def integrate_to_event(rhs: Rhs, y0, psi_from: float, event: EventSpec, psi_max: float,
                       n_steps_hint: int, segment: str = "") -> Trajectory:
    """Integrate until ``event`` changes sign, refining the crossing by
    bisection on the bracketing step; the trajectory ends exactly there."""
    if n_steps_hint < 16:
        raise DomainError("n_steps_hint must be at least 16")
    h = (psi_max - psi_from) / n_steps_hint
    y = np.array(y0, dtype=float)
    psi = psi_from
    Ps, Ys = [psi], [y]
    g0 = event.func(psi, y)
    for i in range(n_steps_hint):
        yn = _rk4(rhs, psi, y, h)
        _check(yn, psi + h)
        g1 = event.func(psi + h, yn)
        if _crossed(g0, g1, event.direction):
            lo, hi = 0.0, h
            sgn0 = math.copysign(1.0, g0) if g0 != 0 else -math.copysign(1.0, g1)
            while abs(hi - lo) > event.tol:
                mid = 0.5 * (lo + hi)
                gm = event.func(psi + mid, _rk4(rhs, psi, y, mid))
                if gm * sgn0 > 0:
                    lo = mid
                else:
                    hi = mid
            ys = _rk4(rhs, psi, y, hi)
            Ps.append(psi + hi)
            Ys.append(ys)
            return Trajectory(np.array(Ps), np.array(Ys), segment, event_psi=psi + hi)
        psi = psi_from + (i + 1) * h
        y = yn
        g0 = g1
        Ps.append(psi)
        Ys.append(y)
    raise EventNotFound(f"event not reached before psi={psi_max:.6g}", psi=psi_max)


def pole_start(lambda_pole: float, side: str, epsilon: float = 1e-4):
    """Regularized start next to a pole: (psi, [lambda_m, lambda_c])."""
    if not (0 < epsilon <= 1e-3):
        raise DomainError("pole epsilon must lie in (0, 1e-3]")
    if lambda_pole <= 0:
        raise DomainError("pole stretch must be positive")
    if side in ("A", "A-pole"):
        psi = epsilon
    elif side in ("F", "F-pole"):
        psi = math.pi - epsilon
    else:
        raise DomainError(f"unknown pole {side!r}")
    return psi, np.array([lambda_pole, lambda_pole], dtype=float)
