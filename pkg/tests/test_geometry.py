import math

import numpy as np
import pytest

from microinject.errors import StateError
from microinject.geometry import (MembranePoint, MembraneSegment, axial_height,
                                  enclosed_volume, principal_curvatures, reconstruct_shape,
                                  sphere_segment, surface_angle)

R0 = 500e-6


def test_sphere_volume_and_height():
    seg = sphere_segment(1e-4, math.pi - 1e-4, 4000)
    assert enclosed_volume([seg], R0) == pytest.approx(4 / 3 * math.pi * R0**3, rel=1e-6)
    assert axial_height([seg], R0) == pytest.approx(2 * R0, rel=1e-6)


def test_sphere_curvatures_are_one_over_r():
    seg = sphere_segment(0.3, 2.8, 2000)
    km, kc = principal_curvatures(seg, R0)
    assert np.max(np.abs(km * R0 - 1)) < 1e-8
    assert np.max(np.abs(kc * R0 - 1)) < 1e-12


def test_curvatures_without_theta_use_root():
    s = sphere_segment(0.3, 1.4, 800)
    seg = MembraneSegment("BC", s.psi, s.lambda_m, s.lambda_c, s.delta, s.omega)
    km, _ = principal_curvatures(seg, R0)
    assert np.max(np.abs(km * R0 - 1)) < 1e-7


def test_surface_angle_branches():
    assert surface_angle(MembranePoint(0.2, 1, 1, 0.2, 1, "AB")) == 0.0
    assert surface_angle(MembranePoint(0.2, 1, 1, 0.2, 0.0, "BC")) == pytest.approx(math.pi / 2)
    assert surface_angle(MembranePoint(3.0, 1, 1, 0.1, -0.5, "DE")) == pytest.approx(
        2 * math.pi - math.acos(-0.5))
    with pytest.raises(StateError):
        surface_angle(MembranePoint(1.0, 1, 1, 1, 1.5, "BC"))


def test_reconstruct_sphere_meridian():
    a = sphere_segment(0.2, math.pi / 2, 500, "BC")
    b = sphere_segment(math.pi / 2, 3.0, 500, "CD")
    pts = reconstruct_shape([a, b], R0)
    rho = np.array([p.rho for p in pts])
    eta = np.array([p.eta for p in pts])
    psi = np.array([p.psi for p in pts])
    assert eta[0] == 0.0
    assert np.max(np.abs(rho - R0 * np.sin(psi))) < 1e-15
    # z measured from the start point: r0*(cos(0.2) - cos(psi))
    assert np.max(np.abs(eta - R0 * (math.cos(0.2) - np.cos(psi)))) < 1e-9


def test_reconstruct_rejects_gaps():
    a = sphere_segment(0.2, 1.0, 100, "BC")
    b = sphere_segment(1.1, 2.0, 100, "CD")
    with pytest.raises(StateError):
        reconstruct_shape([a, b], R0)


def test_slope_root_rejects_bad_state():
    seg = MembraneSegment("BC", np.array([0.1, 0.2]), np.array([1.0, 1.0]), np.ones(2),
                          np.array([0.1, 0.2]), np.array([1.2, 0.0]))
    with pytest.raises(StateError):
        seg.slope
