"""Run configuration: flat INI sections, typed and validated.

Precedence is command-line override > file > default.  Defaults describe a
500 um cell with a 3 um membrane indented by a 40 um needle.
"""
from __future__ import annotations

import configparser
import json
import math
import os
from dataclasses import dataclass
from typing import Dict, Iterable, Optional

from .equilibrium import ProblemSetup
from .errors import ConfigError, DomainError
from .material import (MPA, MaterialParams, RateCoefficients, SpeedState, elastic_coefficient,
                       preset as named_preset)


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _psi(x):
    return 0 < x < 0.5 * math.pi


# section -> key -> (type, default, check)
SCHEMA = {
    "cell": {"r0_um": (float, 500.0, _pos), "h_um": (float, 3.0, _pos)},
    "needle": {"rho0_um": (float, 40.0, _pos)},
    "material": {
        "alpha": (float, 0.2, _nonneg),
        "preset": (str, "sim-iv", None),
        "k0": (float, None, _pos), "k1": (float, None, None), "k2": (float, None, _nonneg),
        "g0": (float, None, None), "g1": (float, None, _pos), "g2": (float, None, _nonneg),
        "c1_MPa": (float, None, _pos),
        "sigma_ext_Pa": (float, 0.0, None),
    },
    "speed": {"v_mm_s": (float, 1.0, _nonneg), "a_mm_s2": (float, 0.0, _nonneg)},
    "solver": {
        "steps_per_segment": (int, 2000, lambda n: n >= 16),
        "pole_epsilon_rad": (float, 1e-4, lambda e: 0 < e <= 1e-3),
        "tol_residual": (float, 1e-10, _pos),
        "tol_volume": (float, 1e-4, _pos),
        "max_iter": (int, 40, _pos),
        "strategy": (str, "newton", lambda s: s in ("newton", "nested")),
        "intervals": (int, 40, lambda n: n >= 2),
    },
    "sweep": {
        "psi_b_start": (float, 0.05, _psi),
        "psi_b_end": (float, 0.8, _psi),
        "psi_b_points": (int, 30, _pos),
    },
    "trace": {
        "sensitivity_mN_per_mV": (float, 0.0102, _pos),
        "cutoff_Hz": (float, 20.0, _pos),
        "noise_window_s": (float, 0.5, _pos),
        "zero_phase": (bool, True, None),
    },
}


def _parse(section, key, text):
    typ, _, check = SCHEMA[section][key]
    try:
        if typ is bool:
            low = str(text).strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                raise ValueError(text)
            val = low in ("true", "1", "yes", "on")
        elif typ is int:
            val = int(str(text).strip())
        elif typ is float:
            val = float(str(text).strip())
            if not math.isfinite(val):
                raise ValueError(text)
        else:
            val = str(text).strip()
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {text!r} as {typ.__name__}") from None
    if check is not None and not check(val):
        raise ConfigError(f"{section}.{key}: value {val!r} out of range")
    return val


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class RunConfig:
    values: Dict[str, Dict[str, object]]
    base_dir: str = "."

    def __getitem__(self, key):
        sec, k = key.split(".", 1)
        return self.values[sec][k]

    # ---- derived objects ---------------------------------------------------
    def rate_coefficients(self) -> RateCoefficients:
        m = self.values["material"]
        explicit = [m[k] for k in ("k0", "k1", "k2", "g0", "g1", "g2")]
        if any(x is not None for x in explicit[:3]):
            if any(x is None for x in explicit[:3]):
                raise ConfigError("material: k0, k1 and k2 must be given together")
            g = explicit[3:]
            if any(x is not None for x in g) and any(x is None for x in g):
                raise ConfigError("material: g0, g1 and g2 must be given together")
            if all(x is None for x in g):
                g = [0.0, 1.0, 0.0]
            return _coeffs(*explicit[:3], *g)
        name = m["preset"]
        path = name if os.path.isabs(name) else os.path.join(self.base_dir, name)
        if name.endswith(".json"):
            return load_coefficients(path)
        try:
            return named_preset(name)
        except DomainError as exc:
            raise ConfigError(f"material.preset: {exc}") from None

    def material(self, speed: SpeedState) -> MaterialParams:
        m = self.values["material"]
        h = self.values["cell"]["h_um"] * 1e-6
        if m["c1_MPa"] is not None:
            c1 = m["c1_MPa"] * MPA
        else:
            c1 = elastic_coefficient(speed, self.rate_coefficients())
        return MaterialParams(m["alpha"], c1, h, m["sigma_ext_Pa"])

    def speed(self, v=None, a=None) -> SpeedState:
        s = self.values["speed"]
        return SpeedState(s["v_mm_s"] if v is None else v, s["a_mm_s2"] if a is None else a)

    def setup(self, v=None, a=None) -> ProblemSetup:
        sp = self.speed(v, a)
        sv = self.values["solver"]
        try:
            return ProblemSetup(
                r0=self.values["cell"]["r0_um"] * 1e-6, rho0=self.values["needle"]["rho0_um"] * 1e-6,
                mat=self.material(sp), speed=sp, steps=sv["steps_per_segment"],
                epsilon=sv["pole_epsilon_rad"], tol_residual=sv["tol_residual"],
                tol_volume=sv["tol_volume"], max_iter=sv["max_iter"], strategy=sv["strategy"],
                intervals=sv["intervals"])
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    def psi_grid(self):
        import numpy as np
        s = self.values["sweep"]
        if s["psi_b_points"] == 1:
            return np.array([s["psi_b_start"]])
        return np.linspace(s["psi_b_start"], s["psi_b_end"], s["psi_b_points"])

    # ---- echo --------------------------------------------------------------
    def to_ini(self) -> str:
        lines = []
        for sec, keys in SCHEMA.items():
            lines.append(f"[{sec}]")
            for k in keys:
                v = self.values[sec][k]
                if v is not None:
                    lines.append(f"{k} = {_fmt(v)}")
            lines.append("")
        return "\n".join(lines)

    def as_dict(self):
        return {sec: {k: v for k, v in kv.items() if v is not None} for sec, kv in self.values.items()}


def _coeffs(*vals):
    try:
        return RateCoefficients(*vals)
    except DomainError as exc:
        raise ConfigError(f"material: {exc}") from None


def load_coefficients(path) -> RateCoefficients:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"material.preset: cannot read {path}: {exc.strerror}") from None
    except ValueError:
        raise ConfigError(f"material.preset: {path} is not valid JSON") from None
    try:
        return _coeffs(*(float(d[k]) for k in ("k0", "k1", "k2", "g0", "g1", "g2")))
    except (KeyError, TypeError, ValueError):
        raise ConfigError(f"material.preset: {path} lacks k0..k2, g0..g2") from None


def load_config(path: Optional[str] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Defaults, then the INI file at ``path``, then ``section.key=value`` overrides."""
    values = {sec: {k: spec[1] for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    base = "."
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise ConfigError(f"config {path}: {exc}") from None
        base = os.path.dirname(os.path.abspath(path))
        for sec in cp.sections():
            if sec not in SCHEMA:
                raise ConfigError(f"unknown config section [{sec}]")
            for k, v in cp.items(sec):
                if k not in SCHEMA[sec]:
                    raise ConfigError(f"unknown config key {sec}.{k}")
                values[sec][k] = _parse(sec, k, v)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        lhs, rhs = item.split("=", 1)
        sec, k = lhs.strip().split(".", 1)
        if sec not in SCHEMA or k not in SCHEMA[sec]:
            raise ConfigError(f"unknown config key {lhs.strip()}")
        values[sec][k] = _parse(sec, k, rhs)
    cfg = RunConfig(values, base)
    sw = values["sweep"]
    if sw["psi_b_end"] < sw["psi_b_start"]:
        raise ConfigError("sweep.psi_b_end must not be below sweep.psi_b_start")
    if values["needle"]["rho0_um"] >= values["cell"]["r0_um"]:
        raise ConfigError("needle.rho0_um must be smaller than cell.r0_um")
    return cfg
