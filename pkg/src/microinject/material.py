"""Rate-dependent Mooney-Rivlin membrane material.

Strain energy  W = C1*(I1 - 3) + C2*(I2 - 3),  C2 = alpha*C1, with
in-plane stretches (lambda_m, lambda_c) and incompressibility fixing the
thickness stretch.  C1 follows the speed law

    C1 = (k2*v**2 + k1*v + k0) * (g0 + 1/(g1 + g2*a))

with k_i in MPa*(mm/s)^-i, v in mm/s and a in mm/s^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError

MPA = 1.0e6


@dataclass(frozen=True)
class RateCoefficients:
    k0: float
    k1: float
    k2: float
    g0: float = 0.0
    g1: float = 1.0
    g2: float = 0.0

    def __post_init__(self):
        if not (self.k0 > 0 and self.k2 >= 0):
            raise DomainError(f"need k0 > 0 and k2 >= 0, got k0={self.k0}, k2={self.k2}")
        if not (self.g1 > 0 and self.g2 >= 0):
            raise DomainError(f"need g1 > 0 and g2 >= 0, got g1={self.g1}, g2={self.g2}")


@dataclass(frozen=True)
class SpeedState:
    v: float = 0.0   # mm/s
    a: float = 0.0   # mm/s^2

    def __post_init__(self):
        if self.v < 0 or self.a < 0:
            raise DomainError(f"speed must be non-negative, got v={self.v}, a={self.a}")


PRESETS = {
    "sim-iv": RateCoefficients(k0=0.057, k1=0.0495, k2=0.0875,
                               g0=0.6066, g1=2.5333, g2=3.3922),
    "exp-vb": RateCoefficients(k0=0.0624, k1=0.0359, k2=0.0917,
                               g0=0.6068, g1=2.5358, g2=3.3214),
}


def preset(name: str) -> RateCoefficients:
    try:
        return PRESETS[name]
    except KeyError:
        raise DomainError(f"unknown material preset {name!r}; known: {sorted(PRESETS)}") from None


def elastic_coefficient(speed: SpeedState, coeffs: RateCoefficients) -> float:
    """C1 in Pa for the given injection speed."""
    den = coeffs.g1 + coeffs.g2 * speed.a
    if not den > 0:
        raise DomainError("g1 + g2*a must be positive")
    v = speed.v
    c1 = (coeffs.k2 * v * v + coeffs.k1 * v + coeffs.k0) * (coeffs.g0 + 1.0 / den)
    if not (math.isfinite(c1) and c1 > 0):
        raise DomainError(f"elastic coefficient not positive/finite: {c1}")
    return c1 * MPA


@dataclass(frozen=True)
class MaterialParams:
    alpha: float
    c1: float                      # Pa
    h: float                       # m
    surface_traction_m: float = 0.0  # Pa, external meridian traction

    def __post_init__(self):
        if not (self.alpha >= 0 and self.c1 > 0 and self.h > 0):
            raise DomainError(f"invalid material: alpha={self.alpha}, c1={self.c1}, h={self.h}")

    @property
    def youngs_modulus(self) -> float:
        return 6.0 * self.c1 * (1.0 + self.alpha)

    @property
    def tension_scale(self) -> float:
        """2*C1*h, the natural tension unit (N/m)."""
        return 2.0 * self.c1 * self.h

    def with_c1(self, c1: float) -> "MaterialParams":
        return replace(self, c1=c1)


def material_for_speed(alpha: float, h: float, speed: SpeedState,
                       coeffs: RateCoefficients, traction: float = 0.0) -> MaterialParams:
    return MaterialParams(alpha=alpha, c1=elastic_coefficient(speed, coeffs), h=h,
                          surface_traction_m=traction)


@dataclass(frozen=True)
class ConstitutiveState:
    i1: float
    i2: float
    w: float
    sigma_m: float
    sigma_c: float
    t_m: float
    t_c: float
    f1: float
    f2: float
    f3: float


def invariants(lm, lc):
    lm2 = np.square(lm)
    lc2 = np.square(lc)
    i1 = lm2 + lc2 + 1.0 / (lm2 * lc2)
    i2 = 1.0 / lm2 + 1.0 / lc2 + lm2 * lc2
    return i1, i2


def strain_energy(lm, lc, mat: MaterialParams):
    i1, i2 = invariants(lm, lc)
    return mat.c1 * ((i1 - 3.0) + mat.alpha * (i2 - 3.0))


def stresses(lm, lc, mat: MaterialParams):
    """Principal Cauchy stresses (Pa); works elementwise on arrays."""
    lm2 = np.square(lm)
    lc2 = np.square(lc)
    j = 1.0 / (lm2 * lc2)
    al = mat.alpha
    sm = 2.0 * mat.c1 * (lm2 - j + al * (lm2 * lc2 - 1.0 / lm2))
    sc = 2.0 * mat.c1 * (lc2 - j + al * (lm2 * lc2 - 1.0 / lc2))
    return sm, sc


def tensions(lm, lc, mat: MaterialParams):
    """Principal tensions (N/m) and dT_m/dlambda_m, dT_m/dlambda_c."""
    a = np.asarray(lm, dtype=float)
    b = np.asarray(lc, dtype=float)
    k = mat.tension_scale
    al = mat.alpha
    inv = 1.0 / (a**3 * b**3)
    tm = k * (a / b - inv + al * (a * b - 1.0 / (a**3 * b)))
    tc = k * (b / a - inv + al * (a * b - 1.0 / (a * b**3)))
    f1 = k * (1.0 / b + 3.0 / (a**4 * b**3) + al * (b + 3.0 / (a**4 * b)))
    f2 = k * (-a / b**2 + 3.0 / (a**3 * b**4) + al * (a + 1.0 / (a**3 * b**2)))
    return tm, tc, f1, f2


def constitutive_eval(lambda_m: float, lambda_c: float, mat: MaterialParams) -> ConstitutiveState:
    if not (lambda_m > 0 and lambda_c > 0):
        raise DomainError(f"stretches must be positive, got ({lambda_m}, {lambda_c})")
    i1, i2 = invariants(lambda_m, lambda_c)
    w = mat.c1 * ((i1 - 3.0) + mat.alpha * (i2 - 3.0))
    sm, sc = stresses(lambda_m, lambda_c, mat)
    tm, tc, f1, f2 = tensions(lambda_m, lambda_c, mat)
    return ConstitutiveState(i1=float(i1), i2=float(i2), w=float(w),
                             sigma_m=float(sm), sigma_c=float(sc),
                             t_m=float(tm), t_c=float(tc),
                             f1=float(f1), f2=float(f2), f3=float(tc - tm))
