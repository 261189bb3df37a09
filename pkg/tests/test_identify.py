import numpy as np
import pytest

from microinject.errors import CalibrationError, DomainError, FitError
from microinject.identify import (AccelerationSample, ReferenceModel, VelocitySample,
                                  build_rate_model, calibrate_c1, fit_acceleration_coeffs,
                                  fit_velocity_coeffs)
from microinject.material import MPA

G = (0.6068, 2.5358, 3.3214)


def _eps(a, g=G):
    return g[0] + 1 / (g[1] + g[2] * a)


def test_velocity_exact_interpolation():
    s = [VelocitySample(0.0, 0.0624), VelocitySample(1.0, 0.1900), VelocitySample(2.0, 0.5010)]
    assert fit_velocity_coeffs(s) == pytest.approx((0.0624, 0.0359, 0.0917), abs=1e-12)


def test_velocity_constant_and_overdetermined():
    c = fit_velocity_coeffs([VelocitySample(v, 0.3) for v in (0.1, 0.5, 1.0, 2.0)])
    assert c == pytest.approx((0.3, 0.0, 0.0), abs=1e-12)
    k = (0.05, 0.03, 0.08)
    v = np.linspace(0.1, 3.0, 20)
    c = fit_velocity_coeffs([VelocitySample(x, k[0] + k[1] * x + k[2] * x * x) for x in v])
    assert np.max(np.abs(np.array(c) - k)) <= 1e-10


def test_velocity_rank_deficient():
    with pytest.raises(FitError):
        fit_velocity_coeffs([VelocitySample(1.0, 0.2), VelocitySample(1.0, 0.21),
                             VelocitySample(2.0, 0.5)])


def test_acceleration_three_points():
    s = [AccelerationSample(0, 1.001153), AccelerationSample(1, 0.777530),
         AccelerationSample(2, 0.715749)]
    assert fit_acceleration_coeffs(s) == pytest.approx(G, abs=2e-4)


def test_acceleration_overdetermined():
    g = (0.55, 2.0, 4.0)
    s = [AccelerationSample(a, _eps(a, g)) for a in np.linspace(0, 5, 15)]
    assert np.max(np.abs(np.array(fit_acceleration_coeffs(s)) - g)) <= 1e-8


def test_acceleration_degenerate_and_increasing():
    with pytest.raises(FitError):
        fit_acceleration_coeffs([AccelerationSample(a, 0.8) for a in (0, 1, 2)])
    with pytest.raises(FitError):
        fit_acceleration_coeffs([AccelerationSample(a, 0.7 + 0.1 * a) for a in (0, 1, 2)])


def test_zero_acceleration_is_near_identity():
    assert _eps(0.0) == pytest.approx(1.0012, abs=1e-4)


def test_samples_validate():
    with pytest.raises(DomainError):
        VelocitySample(-1.0, 0.2)
    with pytest.raises(DomainError):
        AccelerationSample(1.0, 0.0)


@pytest.fixture(scope="module")
def model(setup_v1):
    return ReferenceModel(setup_v1)


def _synthetic(model, c1, n=10):
    lo, hi = model.dmap.d_range
    d = np.linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), n)
    return list(zip(d, c1 * model.unit_forces(d)))


def test_calibrate_noiseless_and_noisy(model, setup_v1):
    pts = _synthetic(model, 0.2 * MPA)
    assert calibrate_c1(pts, setup_v1, model=model).c1 == pytest.approx(0.2 * MPA, rel=1e-6)
    rng = np.random.default_rng(11)
    noisy = [(d, f * (1 + 0.02 * rng.standard_normal())) for d, f in pts]
    assert calibrate_c1(noisy, setup_v1, model=model).c1 == pytest.approx(0.2 * MPA, rel=0.05)


def test_calibrate_rejects_short_curve(setup_v1, model):
    with pytest.raises(DomainError):
        calibrate_c1([(1e-4, 1e-5)], setup_v1, model=model)


def test_calibrate_bracket_without_minimum(setup_v1, model):
    pts = _synthetic(model, 0.2 * MPA, 4)
    with pytest.raises(CalibrationError):
        calibrate_c1(pts, setup_v1, bracket=(0.5 * MPA, 1.0 * MPA), model=model)


def test_build_velocity_only(setup_v1, model):
    k = (0.06, 0.04, 0.09)
    const = [(v, _synthetic(model, (k[0] + k[1] * v + k[2] * v * v) * MPA, 5))
             for v in (0.2, 0.6, 1.0)]
    log = []
    c = build_rate_model(const, [], setup_v1, log=log)
    assert (c.g0, c.g1, c.g2) == (0.0, 1.0, 0.0)
    assert (c.k0, c.k1, c.k2) == pytest.approx(k, rel=1e-5)
    assert len(log) == 3


def test_build_requires_enough_experiments(setup_v1):
    with pytest.raises(DomainError):
        build_rate_model([(1.0, [])], [], setup_v1)
