"""Command-line front end.

Every command writes its files plus ``result.json`` (config echo, version,
file manifest, convergence summary) into ``--out``.  Errors go to stderr as
one JSON object; the exit status encodes the category.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import DomainError, IOFailure, MicroinjectError
from .geometry import reconstruct_shape
from .identify import build_rate_model
from .material import MPA
from .response import (DeformationMap, distribution_profile, force_deformation_curve,
                       rescale_curve)
from .trace import (FeedMotion, RawTrace, deformation_from_feed, detect_phases, lowpass_filter,
                    phase_labels, voltage_to_force)
from .equilibrium import solve_equilibrium

COMMANDS = ("solve", "curve", "profile", "shape", "identify", "ingest", "predict")
UM = 1e-6
UN = 1e-6


def _num(x):
    """Shortest round-trip text for a float; stable across runs."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dumps(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


class Output:
    """Collects written files for the manifest."""

    def __init__(self, directory, json_mirror=False):
        self.dir = directory
        self.json_mirror = json_mirror
        self.files = []
        try:
            os.makedirs(directory, exist_ok=True)
        except OSError as exc:
            raise IOFailure(f"cannot create output directory {directory}: {exc.strerror}") from None

    def _put(self, name, text):
        path = os.path.join(self.dir, name)
        try:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise IOFailure(f"cannot write {path}: {exc.strerror}") from None
        self.files.append({"file": name, "sha256": hashlib.sha256(text.encode()).hexdigest()})

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(x) for x in r])
        self._put(name, buf.getvalue())
        if self.json_mirror:
            recs = [dict(zip(header, r)) for r in rows]
            self._put(os.path.splitext(name)[0] + ".json", _dumps(recs))

    def json(self, name, obj):
        self._put(name, _dumps(obj))

    def text(self, name, text):
        self._put(name, text)


# ---- helpers ---------------------------------------------------------------

def _solution_summary(sol):
    u = sol.unknowns
    return {
        "psi_b_rad": sol.psi_b, "force_uN": sol.force / UN, "deformation_um": sol.deformation / UM,
        "pressure_Pa": u.p, "lambda_a": u.lambda_a, "lambda_f": u.lambda_f,
        "psi_c_rad": sol.psi_c, "psi_d_rad": sol.psi_d, "psi_e_rad": sol.psi_e,
        "contact_radius_um": sol.contact_radius / UM, "c1_MPa": sol.setup.mat.c1 / MPA,
        "volume_residual": sol.volume_error,
    }


def _convergence(sol):
    s = sol.setup
    r = dict(sol.residuals)
    resid = max(v for k, v in r.items() if k != "volume")
    return {
        "residuals": r, "max_residual": resid, "tol_residual": s.tol_residual,
        "tol_volume": s.tol_volume, "residual_ok": resid <= s.tol_residual,
        "volume_satisfied": sol.volume_satisfied,
        "lambda_a_bound_active": sol.lambda_a_bound_active, "strategy": sol.strategy,
    }


def _profile_rows(sol):
    p = distribution_profile(sol)
    return [(p.psi[i], p.segment[i], p.lambda_m[i], p.lambda_c[i], p.t_m[i], p.t_c[i],
             p.sigma_m[i] / MPA, p.sigma_c[i] / MPA) for i in range(len(p))]


PROFILE_COLS = ["psi_rad", "segment", "lambda_m", "lambda_c", "Tm_N_per_m", "Tc_N_per_m",
                "sigma_m_MPa", "sigma_c_MPa"]
SHAPE_COLS = ["psi_rad", "rho_um", "eta_um", "segment"]
CURVE_COLS = ["psi_b_rad", "force_uN", "deformation_um", "pressure_Pa", "lambda_a", "lambda_f",
              "converged", "volume_residual"]


def _shape_rows(sol):
    pts = reconstruct_shape(sol.ordered_segments, sol.setup.r0)
    return [(q.psi, q.rho / UM, q.eta / UM, q.segment) for q in pts]


def _speeds(args, cfg):
    vs = args.v if args.v else [cfg["speed.v_mm_s"]]
    a = cfg["speed.a_mm_s2"] if args.a is None else args.a
    return vs, a


def _tag(v, a):
    return f"v{v:g}" + (f"_a{a:g}" if a else "")


def _read_csv(path, required):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
            header = rows[0].keys() if rows else []
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc.strerror}") from None
    missing = [c for c in required if c not in header]
    if missing:
        raise DomainError(f"{path}: missing column(s) {', '.join(missing)}")
    return rows


def _floats(rows, col, path):
    try:
        return np.array([float(r[col]) for r in rows])
    except (TypeError, ValueError):
        raise DomainError(f"{path}: non-numeric value in column {col}") from None


# ---- commands --------------------------------------------------------------

def cmd_solve(args, cfg: RunConfig, out: Output):
    sol = solve_equilibrium(args.psi_b, cfg.setup())
    summ = _solution_summary(sol)
    summ.update(v_mm_s=sol.setup.speed.v, a_mm_s2=sol.setup.speed.a)
    out.json("summary.json", summ)
    if args.profile:
        out.csv("profile.csv", PROFILE_COLS, _profile_rows(sol))
    if args.shape:
        out.csv("shape.csv", SHAPE_COLS, _shape_rows(sol))
    return summ, _convergence(sol)


def cmd_profile(args, cfg, out):
    sol = solve_equilibrium(args.psi_b, cfg.setup())
    out.csv("profile.csv", PROFILE_COLS, _profile_rows(sol))
    return _solution_summary(sol), _convergence(sol)


def cmd_shape(args, cfg, out):
    sol = solve_equilibrium(args.psi_b, cfg.setup())
    out.csv("shape.csv", SHAPE_COLS, _shape_rows(sol))
    return _solution_summary(sol), _convergence(sol)


def cmd_curve(args, cfg, out):
    vs, a = _speeds(args, cfg)
    grid = cfg.psi_grid()
    summary, conv = {}, {}
    first = None
    for v in vs:
        setup = cfg.setup(v, a)
        if first is None or setup.mat.surface_traction_m != 0.0:
            curve = first = force_deformation_curve(grid, setup)
        else:
            curve = rescale_curve(first, setup)
        rows = [(r.psi_b, r.force / UN, r.deformation / UM, r.pressure, r.lambda_a, r.lambda_f,
                 r.converged, r.volume_residual) for r in curve.records]
        tag = _tag(v, a)
        out.csv(f"curve_{tag}.csv", CURVE_COLS, rows)
        ok = curve.converged()
        summary[tag] = {"v_mm_s": v, "a_mm_s2": a, "c1_MPa": setup.mat.c1 / MPA,
                        "points": len(grid), "solved": len(ok),
                        "max_force_uN": max(r.force for r in ok) / UN,
                        "max_deformation_um": max(r.deformation for r in ok) / UM}
        sols = first.solutions
        conv[tag] = {
            "skipped": [{"psi_b_rad": pb, "reason": why} for pb, why in curve.skipped],
            "max_residual": max(max(v2 for k, v2 in s.residuals.items() if k != "volume")
                                for s in sols),
            "max_volume_residual": max(abs(s.volume_error) for s in sols),
            "lambda_a_bound_points": sum(1 for s in sols if s.lambda_a_bound_active),
        }
    return summary, conv


def cmd_predict(args, cfg, out):
    vs, a = _speeds(args, cfg)
    d = args.d_um * UM
    if d < 0:
        raise DomainError("target deformation must be non-negative")
    rows, summ = [], []
    ref = None
    for v in vs:
        setup = cfg.setup(v, a)
        if d == 0:
            f, pb = 0.0, 0.0
        elif setup.mat.surface_traction_m == 0.0 and ref is not None:
            # shape independent of C1: reuse the matched state, scale the force
            f, pb = ref.force * setup.mat.c1 / ref.setup.mat.c1, ref.psi_b
        else:
            ref = DeformationMap(setup).at(d)
            f, pb = ref.force, ref.psi_b
        rows.append((args.d_um, v, a, f / UN, pb, setup.mat.c1 / MPA))
    cols = ["deformation_um", "v_mm_s", "a_mm_s2", "force_uN", "psi_b_rad", "c1_MPa"]
    out.csv("prediction.csv", cols, rows)
    summ = [dict(zip(cols, r)) for r in rows]
    return summ, {"matched_rtol": 1e-6}


def cmd_identify(args, cfg, out):
    path = args.experiments
    rows = _read_csv(path, ["id", "kind", "v_mm_s", "a_mm_s2", "curve"])
    base = os.path.dirname(os.path.abspath(path))
    const, acc, meta = [], [], []
    for r in rows:
        kind = r["kind"].strip()
        if kind not in ("const_v", "accel"):
            raise DomainError(f"{path}: experiment {r['id']}: kind must be const_v or accel")
        try:
            v = float(r["v_mm_s"])
            a = float(r["a_mm_s2"])
            vp = float(r.get("v_puncture_mm_s") or v)
        except ValueError:
            raise DomainError(f"{path}: experiment {r['id']}: non-numeric speed") from None
        cpath = r["curve"].strip()
        cpath = cpath if os.path.isabs(cpath) else os.path.join(base, cpath)
        crow = _read_csv(cpath, ["d_um", "F_uN"])
        pts = list(zip(_floats(crow, "d_um", cpath) * UM, _floats(crow, "F_uN", cpath) * UN))
        if kind == "const_v":
            const.append((r["id"], v, pts))
        else:
            acc.append((r["id"], a, vp, pts))
    log = []
    coeffs = build_rate_model([(v, p) for _, v, p in const], [(a, vp, p) for _, a, vp, p in acc],
                              cfg.setup(), log=log)
    names = ("k0", "k1", "k2", "g0", "g1", "g2")
    cj = {k: getattr(coeffs, k) for k in names}
    out.json("coefficients.json", cj)
    exps = [(i, "const_v", v, 0.0, v) for i, v, _ in const] + \
           [(i, "accel", vp, a, vp) for i, a, vp, _ in acc]
    cal = [(e[0], e[1], e[2], e[3], c.c1 / MPA, c.residual / UN) for e, c in zip(exps, log)]
    out.csv("calibration.csv", ["id", "kind", "v_mm_s", "a_mm_s2", "c1_MPa", "rms_misfit_uN"], cal)
    lines = ["[coefficients]"] + [f"{k} = {_num(cj[k])}" for k in names] + ["", "[experiments]"]
    lines += [f"{c[0]} = kind:{c[1]} v_mm_s:{_num(c[2])} a_mm_s2:{_num(c[3])} "
              f"c1_MPa:{_num(c[4])} rms_misfit_uN:{_num(c[5])}" for c in cal]
    out.text("report.txt", "\n".join(lines) + "\n")
    return cj, {"experiments": len(cal), "max_rms_misfit_uN": max(c[5] for c in cal)}


def cmd_ingest(args, cfg, out):
    rows = _read_csv(args.trace, ["time_s", "voltage_mV"])
    t = _floats(rows, "time_s", args.trace)
    u = _floats(rows, "voltage_mV", args.trace)
    if len(t) < 20 or np.any(np.diff(t) <= 0):
        raise DomainError(f"{args.trace}: need at least 20 samples with increasing time")
    fs = args.fs if args.fs else 1.0 / float(np.median(np.diff(t)))
    tr = voltage_to_force(RawTrace(fs, t, u), cfg["trace.sensitivity_mN_per_mV"])
    ft = lowpass_filter(tr, cfg["trace.cutoff_Hz"], zero_phase=cfg["trace.zero_phase"])
    m = detect_phases(ft, cfg["trace.noise_window_s"])
    lab = phase_labels(ft, m)
    out.csv("force_trace.csv", ["time_s", "force_mN", "phase"],
            [(ft.time[i], ft.force[i], lab[i]) for i in range(len(ft))])
    mk = {"t_contact_s": m.t_contact, "t_puncture_s": m.t_puncture,
          "t_relax_end_s": m.t_relax_end, "t_retract_s": m.t_retract,
          "peak_force_mN": m.peak_force, "sample_rate_Hz": fs}
    if args.feed_v is not None:
        d, vp = deformation_from_feed(m, FeedMotion(args.feed_v, args.feed_a or 0.0))
        mk.update(deformation_um=d / UM, v_puncture_mm_s=vp)
    out.text("markers.txt", "[markers]\n" + "".join(f"{k} = {_num(mk[k])}\n" for k in sorted(mk)))
    return mk, {"k_sigma": 5.0, "noise_window_s": cfg["trace.noise_window_s"]}


HANDLERS = {"solve": cmd_solve, "curve": cmd_curve, "profile": cmd_profile, "shape": cmd_shape,
            "identify": cmd_identify, "ingest": cmd_ingest, "predict": cmd_predict}


# ---- parser ----------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [cell], [needle], [material], ... sections")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--out", default="results", help="output directory (default: results)")
    common.add_argument("--json", action="store_true", help="also write a JSON mirror of each CSV")

    speed = argparse.ArgumentParser(add_help=False)
    speed.add_argument("--v", type=float, action="append", metavar="MM_S",
                       help="feed velocity in mm/s (repeatable for curve/predict)")
    speed.add_argument("--a", type=float, metavar="MM_S2", help="feed acceleration in mm/s^2")

    ap = argparse.ArgumentParser(prog="microinject",
                                 description="Rate-dependent membrane model of cell microinjection.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common, speed], help="equilibrium at one contact angle")
    p.add_argument("--psi-b", type=float, required=True, help="contact angle psi_B in rad")
    p.add_argument("--profile", action="store_true", help="also write profile.csv")
    p.add_argument("--shape", action="store_true", help="also write shape.csv")
    for name, txt in (("profile", "tension/stress distribution"), ("shape", "deformed meridian")):
        q = sub.add_parser(name, parents=[common, speed], help=txt)
        q.add_argument("--psi-b", type=float, required=True, help="contact angle psi_B in rad")
    sub.add_parser("curve", parents=[common, speed], help="force-deformation sweep per speed")
    p = sub.add_parser("predict", parents=[common, speed], help="force at a target deformation")
    p.add_argument("--d-um", type=float, required=True, help="cell deformation in um")
    p = sub.add_parser("identify", parents=[common], help="fit rate coefficients")
    p.add_argument("experiments", help="experiments CSV (id, kind, v_mm_s, a_mm_s2, curve)")
    p = sub.add_parser("ingest", parents=[common], help="filter a PVDF trace and find phases")
    p.add_argument("trace", help="trace CSV with time_s, voltage_mV")
    p.add_argument("--fs", type=float, help="sample rate in Hz (default: from time column)")
    p.add_argument("--feed-v", type=float, help="commanded feed velocity in mm/s")
    p.add_argument("--feed-a", type=float, help="commanded feed acceleration in mm/s^2")
    return ap


def _args_echo(args):
    skip = {"config", "set", "out", "json", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def dispatch(command, cfg: RunConfig, args, out: Output):
    """Run one command and write result.json; returns the envelope."""
    if command not in HANDLERS:
        raise DomainError(f"unknown command {command!r}")
    out.text("config.ini", cfg.to_ini())
    summary, conv = HANDLERS[command](args, cfg, out)
    env = {"command": command, "version": __version__, "arguments": _args_echo(args),
           "config": cfg.as_dict(), "summary": summary, "convergence": conv,
           "manifest": list(out.files)}
    env["manifest"].append({"file": "result.json"})
    out.json("result.json", env)
    return env


def _speed_overrides(args):
    """Fold a single --v and --a into the config so the echo reproduces the run."""
    extra = []
    v = getattr(args, "v", None)
    if v and len(v) == 1:
        extra.append(f"speed.v_mm_s={v[0]!r}")
        args.v = None
    if getattr(args, "a", None) is not None:
        extra.append(f"speed.a_mm_s2={args.a!r}")
        args.a = None
    return extra


def _fail(exc: MicroinjectError):
    sys.stderr.write(json.dumps({"error": exc.category, "exit_code": exc.exit_code,
                                 "message": str(exc)}) + "\n")
    return exc.exit_code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set + _speed_overrides(args))
        out = Output(args.out, args.json)
        env = dispatch(args.command, cfg, args, out)
    except MicroinjectError as exc:
        return _fail(exc)
    sys.stdout.write(_dumps({"command": env["command"], "summary": env["summary"],
                             "out": args.out}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
