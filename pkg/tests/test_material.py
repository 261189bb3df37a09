import math

import numpy as np
import pytest

from microinject.errors import DomainError
from microinject.material import (MPA, MaterialParams, RateCoefficients, SpeedState,
                                  constitutive_eval, elastic_coefficient, invariants,
                                  material_for_speed, preset, stresses, tensions)


@pytest.fixture
def mat():
    return MaterialParams(alpha=0.2, c1=0.2 * MPA, h=3e-6)


def test_undeformed_state_is_stress_free(mat):
    st = constitutive_eval(1.0, 1.0, mat)
    assert st.i1 == pytest.approx(3.0) and st.i2 == pytest.approx(3.0)
    assert st.w == pytest.approx(0.0, abs=1e-12)
    assert abs(st.sigma_m) < 1e-9 and abs(st.t_m) < 1e-15 and abs(st.f3) < 1e-15


def test_equibiaxial_closed_form(mat):
    lam = 1.3
    sm, sc = stresses(lam, lam, mat)
    expect = 2 * mat.c1 * (lam**2 - lam**-4) * (1 + mat.alpha * lam**2)
    assert sm == pytest.approx(expect, rel=1e-14)
    assert sc == pytest.approx(sm, rel=1e-14)


def test_tension_is_stress_times_current_thickness(mat):
    lm, lc = 1.4, 0.9
    sm, sc = stresses(lm, lc, mat)
    tm, tc, _, _ = tensions(lm, lc, mat)
    thick = mat.h / (lm * lc)
    assert tm == pytest.approx(sm * thick, rel=1e-13)
    assert tc == pytest.approx(sc * thick, rel=1e-13)


def test_invariants_vectorized():
    i1, i2 = invariants(np.array([1.0, 2.0]), np.array([1.0, 0.5]))
    assert i1.tolist() == pytest.approx([3.0, 4.25 + 1.0])
    assert i2.tolist() == pytest.approx([3.0, 0.25 + 4.0 + 1.0])


def test_youngs_modulus_relation(mat):
    assert mat.youngs_modulus == pytest.approx(6 * 0.2 * MPA * 1.2)
    assert mat.tension_scale == pytest.approx(2 * 0.2 * MPA * 3e-6)


def test_rate_law_identity_reduction_at_zero_acceleration():
    c = RateCoefficients(0.05, 0.04, 0.03)
    assert elastic_coefficient(SpeedState(2.0), c) == pytest.approx((0.05 + 0.08 + 0.12) * MPA)


def test_acceleration_lowers_c1():
    c = preset("sim-iv")
    slow = [elastic_coefficient(SpeedState(1.0, a), c) for a in (0.0, 0.5, 1.0, 4.0)]
    assert all(x > y for x, y in zip(slow, slow[1:]))
    lim = elastic_coefficient(SpeedState(1.0, 1e9), c)
    assert lim == pytest.approx((c.k0 + c.k1 + c.k2) * c.g0 * MPA, rel=1e-6)


def test_material_for_speed_uses_rate_law():
    m = material_for_speed(0.2, 3e-6, SpeedState(1.0), preset("sim-iv"))
    assert m.c1 / MPA == pytest.approx(0.19426, abs=1e-5)


@pytest.mark.parametrize("bad", [
    lambda: MaterialParams(-0.1, 1.0, 1e-6),
    lambda: MaterialParams(0.2, 0.0, 1e-6),
    lambda: RateCoefficients(0.0, 0.1, 0.1),
    lambda: RateCoefficients(0.1, 0.1, 0.1, 0.5, 0.0, 1.0),
    lambda: SpeedState(-1.0),
    lambda: preset("nope"),
    lambda: constitutive_eval(0.0, 1.0, MaterialParams(0.2, 1.0, 1e-6)),
])
def test_domain_errors(bad):
    with pytest.raises(DomainError):
        bad()


def test_negative_rate_polynomial_rejected():
    with pytest.raises(DomainError):
        elastic_coefficient(SpeedState(10.0), RateCoefficients(0.01, -1.0, 0.0))
