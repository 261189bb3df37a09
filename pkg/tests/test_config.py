import json

import pytest

from microinject.config import load_config
from microinject.errors import ConfigError
from microinject.material import MPA, SpeedState


def _ini(tmp_path, text):
    p = tmp_path / "run.ini"
    p.write_text(text)
    return str(p)


def test_empty_file_gives_defaults(tmp_path):
    cfg = load_config(_ini(tmp_path, ""))
    s = cfg.setup()
    assert s.r0 == pytest.approx(500e-6) and s.rho0 == pytest.approx(40e-6)
    assert s.mat.h == pytest.approx(3e-6) and s.mat.alpha == 0.2
    assert s.mat.c1 / MPA == pytest.approx(0.19426, abs=1e-5)


def test_needle_radius_from_file(tmp_path):
    cfg = load_config(_ini(tmp_path, "[needle]\nrho0_um = 50\n"))
    assert cfg.setup().rho0 == pytest.approx(50e-6)


def test_override_beats_file(tmp_path):
    cfg = load_config(_ini(tmp_path, "[needle]\nrho0_um = 50\n"), ["needle.rho0_um=30"])
    assert cfg["needle.rho0_um"] == 30.0


@pytest.mark.parametrize("text, key", [
    ("[sweep]\npsi_b_end = 2.0\n", "sweep.psi_b_end"),
    ("[cell]\nr0_um = big\n", "cell.r0_um"),
    ("[cell]\ncolor = red\n", "cell.color"),
    ("[paint]\nx = 1\n", "paint"),
    ("[solver]\nstrategy = guess\n", "solver.strategy"),
    ("[cell]\nh_um = -3\n", "cell.h_um"),
])
def test_invalid_files_name_the_key(tmp_path, text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        load_config(_ini(tmp_path, text))


def test_bad_override_syntax():
    with pytest.raises(ConfigError):
        load_config(overrides=["rho0_um=3"])


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/no/such/file.ini")


def test_fixed_c1_ignores_speed():
    cfg = load_config(overrides=["material.c1_MPa=0.3"])
    assert cfg.setup(0.2).mat == cfg.setup(2.0, 5.0).mat


def test_explicit_coefficients():
    cfg = load_config(overrides=["material.k0=0.1", "material.k1=0", "material.k2=0"])
    assert cfg.material(SpeedState(3.0)).c1 == pytest.approx(0.1 * MPA)
    with pytest.raises(ConfigError):
        load_config(overrides=["material.k0=0.1"]).rate_coefficients()


def test_coefficient_file_preset(tmp_path):
    (tmp_path / "fit.json").write_text(json.dumps(
        dict(k0=0.0624, k1=0.0359, k2=0.0917, g0=0.6068, g1=2.5358, g2=3.3214)))
    cfg = load_config(_ini(tmp_path, "[material]\npreset = fit.json\n"))
    assert cfg.material(SpeedState(2.0)).c1 / MPA == pytest.approx(0.5016, abs=1e-4)


def test_echo_round_trip(tmp_path):
    cfg = load_config(overrides=["speed.v_mm_s=0.6", "trace.zero_phase=false"])
    again = load_config(_ini(tmp_path, cfg.to_ini()))
    assert again.values == cfg.values
    assert again.to_ini() == cfg.to_ini()


def test_psi_grid():
    g = load_config(overrides=["sweep.psi_b_points=4", "sweep.psi_b_start=0.1",
                               "sweep.psi_b_end=0.4"]).psi_grid()
    assert g.tolist() == pytest.approx([0.1, 0.2, 0.3, 0.4])
