"""Command-line driver: scenario files in, verification reports and trajectories out.

Exit codes are 0 when every check passes, 1 when a check fails and 2 for
usage or schema errors (in which case no report is written).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import ecm
from .ba import (bloch_wave, converged_order, dual_conditions, dual_series, recursion_defect,
                 self_dualize, self_duality_defect)
from .elliptic import InstantonData, instanton_v
from .errors import NVSigmaError
from .harmonic import (constraint_pairing, instanton_charge, instanton_map, instanton_potential_closed_form,
                       linearized_residual, moment_scales, moments, o3_inputs_from_v, o3_reconstruct, potential,
                       schrodinger_residual, transformed_instanton_map, wm_order)
from .nv import bkp_residual, current_check, dress, flow_bracket, flow_rhs, flow_step, flow_velocity
from .pdo import power
from .torus import GridFunction, TorusShape, read_csv, write_csv

SCHEMA_VERSION = "nv-sigma/1"
SUITES = ("instanton", "bloch", "flow", "ecm", "o3")

_complex = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "seed": {"type": "integer"},
        "tau": _complex,
        "grid": {"type": "integer", "minimum": 8, "multipleOf": 2},
        "order": {"type": "integer", "minimum": 2},
        "depth": {"type": "integer", "minimum": 1},
        "potential": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["kind", "value"],
                 "properties": {"kind": {"const": "constant"}, "value": _complex}},
                {"type": "object", "additionalProperties": False, "required": ["kind", "modes"],
                 "properties": {"kind": {"const": "trig"},
                                "modes": {"type": "array", "minItems": 1, "items": {
                                    "type": "object", "additionalProperties": False,
                                    "required": ["m", "n", "c"],
                                    "properties": {"m": {"type": "integer"}, "n": {"type": "integer"},
                                                   "c": _complex}}}}},
                {"type": "object", "additionalProperties": False, "required": ["kind", "zeros", "poles"],
                 "properties": {"kind": {"const": "instanton"}, "A": _complex,
                                "zeros": {"type": "array", "items": _complex, "minItems": 1},
                                "poles": {"type": "array", "items": _complex, "minItems": 1}}},
                {"type": "object", "additionalProperties": False, "required": ["kind", "path"],
                 "properties": {"kind": {"const": "csv"}, "path": {"type": "string"}}},
            ]
        },
        "o3": {"type": "object", "additionalProperties": False, "required": ["r"],
               "properties": {"r": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                              "offset": _complex,
                              "mobius": {"type": "array", "items": _complex, "minItems": 2, "maxItems": 2}}},
        "ecm": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "particles": {"type": "object", "additionalProperties": False, "required": ["z", "rho"],
                              "properties": {"z": {"type": "array", "items": _complex, "minItems": 1},
                                             "rho": {"type": "array", "items": _complex, "minItems": 1},
                                             "nu": {"type": "number"}}},
                "integrals": {"type": "array", "items": _complex, "minItems": 1},
                "check_turning": {"type": "integer", "minimum": 0},
            },
            "oneOf": [{"required": ["particles"]}, {"required": ["integrals"]}],
        },
        "flow": {"type": "object", "additionalProperties": False,
                 "properties": {"n": {"type": "integer", "minimum": 0},
                                "m": {"type": "integer", "minimum": 0},
                                "dt": {"type": "number", "exclusiveMinimum": 0},
                                "steps": {"type": "integer", "minimum": 0},
                                "tolerance": {"type": "number", "exclusiveMinimum": 0}}},
    },
}


class UsageError(Exception):
    """Bad arguments or an invalid scenario; maps to exit code 2."""


# scenario handling ------------------------------------------------------------

def _c(pair) -> complex:
    return complex(pair[0], pair[1])


def _pair(v) -> list:
    v = complex(v)
    return [v.real, v.imag]


def parse_complex(text: str) -> complex:
    """Parse '0.3', '1i', '-2+0.5i' or '1j' style numbers."""
    t = text.strip().replace(" ", "")
    if t.endswith("i"):
        t = t[:-1] + "j"
        if t in ("j", "+j", "-j"):
            t = t.replace("j", "1j")
    try:
        return complex(t)
    except ValueError as exc:
        raise UsageError(f"cannot parse complex number {text!r}") from exc


def load_scenario(path) -> dict:
    """Read and validate a scenario file.

    Raises
    ------
    UsageError
        If the file cannot be read or does not satisfy the schema.
    """
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read scenario {path}: {exc}") from exc
    try:
        jsonschema.validate(data, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise UsageError(f"scenario {path} is invalid at {where}: {exc.message}") from exc
    data["_dir"] = str(Path(path).resolve().parent)
    return data


def scenario_shape(scn: dict, grid: int | None = None) -> TorusShape:
    n = grid or scn.get("grid", 64)
    tau = _c(scn["tau"]) if "tau" in scn else 1j
    return TorusShape(tau, n, n)


def instanton_data(scn: dict) -> InstantonData:
    p = scn.get("potential")
    if not p or p["kind"] != "instanton":
        raise UsageError("this suite needs an instanton potential in the scenario")
    tau = _c(scn["tau"]) if "tau" in scn else 1j
    A = _c(p["A"]) if "A" in p else 1.0
    return InstantonData(A, [_c(a) for a in p["zeros"]], [_c(b) for b in p["poles"]], tau)


def build_potential(scn: dict, shape: TorusShape) -> GridFunction:
    """The potential u named by the scenario, sampled on ``shape``."""
    p = scn.get("potential")
    if p is None:
        raise UsageError("scenario has no potential")
    kind = p["kind"]
    if kind == "constant":
        return GridFunction.constant(shape, _c(p["value"]))
    if kind == "trig":
        u = GridFunction.zeros(shape)
        for mode in p["modes"]:
            u = u + GridFunction.fourier_mode(shape, mode["m"], mode["n"], _c(mode["c"]))
        return u
    if kind == "instanton":
        return potential(instanton_map(instanton_data(scn), shape))
    path = Path(p["path"])
    if not path.is_absolute():
        path = Path(scn["_dir"]) / path
    u = read_csv(path)
    if u.shape.nx != shape.nx or u.shape.ny != shape.ny:
        raise UsageError(f"potential file is {u.shape.nx}x{u.shape.ny}, grid is {shape.nx}x{shape.ny}")
    return u


# checks -------------------------------------------------------------------------

def _check(value, tolerance, mode: str = "le") -> dict:
    value = float(value)
    ok = value <= tolerance if mode == "le" else value >= tolerance
    return {"value": value, "tolerance": tolerance, "pass": bool(ok)}


def _thread_count() -> int:
    raw = os.environ.get("NVSIGMA_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"NVSIGMA_THREADS must be an integer, got {raw!r}")


def _run_checks(tasks: dict) -> dict:
    """Evaluate {name: callable -> dict of checks} with at most NVSIGMA_THREADS workers."""
    threads = _thread_count()
    results: dict = {}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {name: pool.submit(fn) for name, fn in tasks.items()}
    for name in tasks:
        try:
            results.update(futures[name].result())
        except NVSigmaError as exc:
            results[name] = {"value": None, "tolerance": None, "pass": False, "error": f"{type(exc).__name__}: {exc}"}
    return results


def suite_instanton(scn: dict, args) -> dict:
    d = instanton_data(scn)
    shape = scenario_shape(scn, args.grid)
    m = instanton_map(d, shape)
    u = potential(m)

    def basics():
        return {
            "unit_norm": _check(m.unit_defect(), 1e-10),
            "reality": _check(m.reality_defect(), 1e-10),
            "schrodinger": _check(schrodinger_residual(m, u), 1e-8),
        }

    def charge():
        q = instanton_charge(m)
        out = _check(abs(q - d.ell), 1e-5)
        out["value"] = q
        out["expected"] = d.ell
        return {"instanton_charge": out}

    def closed_form():
        uc = instanton_potential_closed_form(d, shape).values
        return {"potential_closed_form": _check(np.max(np.abs(u.values - uc)) / np.max(np.abs(uc)), 1e-8)}

    def moment_checks():
        T = moments(m, 6)
        sc = moment_scales(m, 6)
        out = {f"moment_T{i}": _check(np.max(np.abs(T[i].values)) / (sc[0] * sc[i]), 1e-7) for i in range(1, 7)}
        order, infinite = wm_order(m, 6)
        out["wm_infinite"] = {"value": order, "tolerance": None, "pass": bool(infinite)}
        return out

    def zero_modes():
        rng = np.random.default_rng(scn.get("seed", 0))
        A = rng.normal(size=(3, 3))
        A = A - A.T
        q = [c.values for c in m.q]
        rot = [sum(A[i, j] * q[j] for j in range(3)) for i in range(3)]
        return {
            "linearized_rotation": _check(linearized_residual(m, rot), 1e-7),
            "linearized_translation_x": _check(linearized_residual(m, [c.d("x").values for c in m.q]), 1e-7),
            "linearized_translation_y": _check(linearized_residual(m, [c.d("y").values for c in m.q]), 1e-7),
        }

    def pairings():
        w = self_dualize(bloch_wave(u, 8)).wave
        return {f"constraint_pairing_{n}": _check(constraint_pairing(m, w, n, 6), 1e-6) for n in (1, 2)}

    return _run_checks({"basics": basics, "instanton_charge": charge, "potential_closed_form": closed_form,
                        "moments": moment_checks, "zero_modes": zero_modes, "pairings": pairings})


def suite_bloch(scn: dict, args) -> dict:
    shape = scenario_shape(scn, args.grid)
    S = args.order or scn.get("order", 8)
    D = scn.get("depth", min(6, S - 1))
    u = build_potential(scn, shape)
    raw = bloch_wave(u, S)
    out = {"recursion": _check(np.max(recursion_defect(raw)), 1e-10)}
    try:
        res = self_dualize(raw)
    except NVSigmaError as exc:
        out["self_dualize"] = {"value": None, "tolerance": None, "pass": False,
                               "error": f"{type(exc).__name__}: {exc}"}
        return out
    w = res.wave
    top = converged_order(S)
    out["self_duality"] = _check(np.max(self_duality_defect(w)[:top]), 1e-8)
    out["dual_conditions"] = _check(np.max(dual_conditions(w, dual_series(w), top)), 1e-8)
    even = [abs(w.ells[s - 1]) for s in range(2, S + 1, 2)]
    out["even_ell"] = _check(max(even), 1e-8)

    def bkp():
        return {"bkp_residual": _check(bkp_residual(dress(w, D)), 1e-8)}

    def f0():
        L = dress(w, D)
        checks = {}
        for n in range(0, (D - 1) // 2 + 1):
            P = power(L, 2 * n + 1)
            checks[f"F0_{n}"] = _check(P.coeff(0).norm() / max(P.scale(), 1e-300), 1e-7)
        return checks

    def cur():
        return {f"current_{k}": v for k, v in current_check(w, D).items()}

    out.update(_run_checks({"bkp_residual": bkp, "F0": f0, "currents": cur}))
    return out


def suite_flow(scn: dict, args) -> dict:
    shape = scenario_shape(scn, args.grid)
    S = args.order or scn.get("order", 8)
    D = scn.get("depth", min(6, S - 1))
    cfg = scn.get("flow", {})
    n, m = cfg.get("n", 1), cfg.get("m", 2)
    dt = cfg.get("dt", 1e-3)
    steps = cfg.get("steps", 0)
    tol = cfg.get("tolerance", 1e-10)
    u = build_potential(scn, shape)
    out = {}

    def velocity_mean():
        V = flow_velocity(u, n, S, D)
        scale = max(V.norm(), 1.0)
        return {f"velocity_mean_{n}": _check(abs(V.mean()) / scale, 1e-12)}

    def bracket():
        return {f"bracket_{n}_{m}": _check(flow_bracket(u, n, m, 1e-3, S, D), 1e-5)}

    def drift():
        v = u
        for _ in range(steps):
            v = flow_step(v, n, dt, S, D)
        return {"mean_drift": _check(abs(v.mean() - u.mean()), tol)}

    tasks = {"velocity_mean": velocity_mean, "drift": drift}
    if max(n, m) * 2 + 1 <= D:
        tasks["bracket"] = bracket
    out.update(_run_checks(tasks))
    return out


def _ecm_integrals(block: dict, tau: complex) -> tuple:
    """(integrals, config or None, fit residual or None) from an ecm scenario block."""
    if "particles" in block:
        p = block["particles"]
        if len(p["z"]) != len(p["rho"]):
            raise UsageError("particles need as many momenta as positions")
        c = ecm.ECMConfig([_c(x) for x in p["z"]], [_c(x) for x in p["rho"]], tau, p.get("nu", 1.0))
        I, resid = ecm.fit_integrals(c)
        return I, c, resid
    return ecm.ECMIntegrals([_c(x) for x in block["integrals"]], tau), None, None


def ecm_checks(I: ecm.ECMIntegrals, c, resid) -> dict:
    out = {}
    if resid is not None:
        out["fit_residual"] = _check(resid, 1e-8)
    if I.odd_part() <= 1e-9 * max(1.0, float(np.max(np.abs(I.I)))):
        out["involution"] = _check(ecm.involution_residual(I), 1e-9)
    if c is not None and np.all(np.abs(c.rho) == 0):
        alpha = 0.31 + 0.17j
        Lm = ecm.lax(c, alpha)
        Lp = ecm.lax(c, -alpha)
        out["lax_antisymmetry"] = _check(np.max(np.abs(Lm + Lp.T)), 1e-10)
    return out


def suite_ecm(scn: dict, args) -> dict:
    if "ecm" not in scn:
        raise UsageError("scenario has no ecm block")
    tau = _c(scn["tau"]) if "tau" in scn else 1j
    I, c, resid = _ecm_integrals(scn["ecm"], tau)
    return ecm_checks(I, c, resid)


def suite_o3(scn: dict, args) -> dict:
    d = instanton_data(scn)
    cfg = scn.get("o3")
    if cfg is None:
        raise UsageError("scenario has no o3 block")
    r1, r2, r3 = cfg["r"]
    shape = scenario_shape(scn, args.grid)
    # shift the data off the grid so that f1, f2 are finite everywhere
    e = _c(cfg["offset"]) if "offset" in cfg else 0.0031 + 0.0017j
    shifted = InstantonData(d.A, [a + e for a in d.a], [b + e for b in d.b], d.tau)
    v = instanton_v(shifted, shape.z())
    f1, f2 = o3_inputs_from_v(v, r1, r2)
    out = {}
    try:
        rep = o3_reconstruct(GridFunction(shape, f1), GridFunction(shape, f2), r1, r2, r3)
        out.update({f"o3_{k}": v for k, v in rep.checks.items()})
    except NVSigmaError as exc:
        out["o3_chain"] = {"value": None, "tolerance": None, "pass": False, "error": f"{type(exc).__name__}: {exc}"}
    c, e2 = (_c(x) for x in cfg.get("mobius", [[0.6, 0.0], [0.0, 0.8]]))
    u0 = potential(instanton_map(d, shape)).values
    u1 = potential(transformed_instanton_map(d, shape, c, e2)).values
    out["mobius_invariance"] = _check(np.max(np.abs(u1 - u0)) / np.max(np.abs(u0)), 1e-8)
    return out


SUITE_FUNCS = {"instanton": suite_instanton, "bloch": suite_bloch, "flow": suite_flow,
               "ecm": suite_ecm, "o3": suite_o3}


# commands -----------------------------------------------------------------------

def _emit(obj, out) -> None:
    text = json.dumps(obj, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def cmd_verify(args) -> int:
    scn = load_scenario(args.scenario)
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        checks = SUITE_FUNCS[args.suite](scn, args)
    passed = all(v["pass"] for v in checks.values())
    report = {"meta": {"schema": SCHEMA_VERSION, "suite": args.suite, "scenario": str(args.scenario),
                       "passed": passed, "seconds": round(time.perf_counter() - t0, 3)}}
    report.update(checks)
    _emit(report, args.out)
    for name, v in checks.items():
        if not v["pass"]:
            print(f"check failed: {name} = {v['value']} (tolerance {v['tolerance']})"
                  + (f" [{v['error']}]" if "error" in v else ""), file=sys.stderr)
    return 0 if passed else 1


def cmd_flow(args) -> int:
    scn = load_scenario(args.scenario)
    cfg = scn.get("flow", {})
    n = args.n if args.n is not None else cfg.get("n", 1)
    dt = args.dt if args.dt is not None else cfg.get("dt", 1e-3)
    steps = args.steps if args.steps is not None else cfg.get("steps", 10)
    tol = args.tolerance if args.tolerance is not None else cfg.get("tolerance", 1e-10)
    S = args.order or scn.get("order", 8)
    D = scn.get("depth", min(6, S - 1))
    if 2 * n + 1 > D:
        raise UsageError(f"flow {n} needs depth at least {2 * n + 1}, scenario depth is {D}")
    shape = scenario_shape(scn, args.grid)
    u = build_potential(scn, shape)
    out = Path(args.out) if args.out else None
    profiles = Path(args.profiles) if args.profiles else None
    if profiles:
        profiles.mkdir(parents=True, exist_ok=True)
    fh = open(out, "w") if out else sys.stdout

    def record(i, v):
        rec = {"step": i, "t": i * dt, "mean_u": _pair(v.mean())}
        if profiles:
            path = profiles / f"u_{i:05d}.csv"
            write_csv(v, path)
            rec["csv"] = {"u": str(path)}
            if i and i == steps:
                w = self_dualize(bloch_wave(v, S)).wave
                _, F1, _ = flow_rhs(w, n, D)
                jpath = profiles / f"J{n}_{i:05d}.csv"
                write_csv(F1, jpath)
                rec["csv"][f"J{n}"] = str(jpath)
        fh.write(json.dumps(rec) + "\n")

    status = 0
    try:
        record(0, u)
        if steps == 0:
            return 0
        m0 = u.mean()
        worst = 0.0
        v = u
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for i in range(1, steps + 1):
                v = flow_step(v, n, dt, S, D)
                worst = max(worst, abs(v.mean() - m0))
                record(i, v)
        summary = {"summary": {"n": n, "dt": dt, "steps": steps,
                               "mean_drift": _check(worst, tol),
                               "change": float((v - u).norm())}}
        fh.write(json.dumps(summary) + "\n")
        if worst > tol:
            print(f"mean(u) drifted by {worst:.3e} (tolerance {tol:g})", file=sys.stderr)
            status = 1
    except NVSigmaError as exc:
        print(f"flow failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        status = 1
    finally:
        if out:
            fh.close()
    return status


def _parse_list(text: str, name: str) -> list:
    key, sep, rest = text.partition("=")
    if not sep or key.strip() != name:
        raise UsageError(f"expected {name}=v1,v2,..., got {text!r}")
    return [parse_complex(t) for t in rest.split(",") if t.strip()]


def cmd_ecm(args) -> int:
    try:
        return _ecm(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _ecm(args) -> int:
    tau = parse_complex(args.tau)
    if args.particles:
        z = rho = None
        for item in args.particles:
            if item.startswith("z="):
                z = _parse_list(item, "z")
            elif item.startswith("rho="):
                rho = _parse_list(item, "rho")
            else:
                raise UsageError(f"unknown particle field {item!r}")
        if z is None or rho is None or len(z) != len(rho):
            raise UsageError("--particles needs z=... and rho=... of equal length")
        c = ecm.ECMConfig(z, rho, tau)
        I, resid = ecm.fit_integrals(c)
    else:
        c, resid = None, None
        I = ecm.ECMIntegrals(_parse_list(args.integrals, "I"), tau)
    report = ecm.curve_report(I, args.check_turning)
    if resid is not None:
        report["fit_residual"] = float(resid)
    checks = ecm_checks(I, c, resid)
    report["checks"] = checks
    _emit(report, args.out)
    return 0 if all(v["pass"] for v in checks.values()) else 1


# entry point -----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nvsigma", description="Verification driver for sigma-model and hierarchy computations.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="run a check suite on a scenario")
    v.add_argument("--suite", choices=SUITES, required=True)
    v.add_argument("--scenario", required=True)
    v.add_argument("--grid", type=int)
    v.add_argument("--order", type=int)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("flow", help="integrate a hierarchy flow and record a trajectory")
    f.add_argument("--scenario", required=True)
    f.add_argument("--n", type=int)
    f.add_argument("--dt", type=float)
    f.add_argument("--steps", type=int)
    f.add_argument("--tolerance", type=float)
    f.add_argument("--grid", type=int)
    f.add_argument("--order", type=int)
    f.add_argument("--profiles", help="directory for CSV profiles of u and J_n")
    f.add_argument("--out")
    f.set_defaults(func=cmd_flow)

    e = sub.add_parser("ecm", help="spectral curve report for an elliptic Calogero-Moser system")
    group = e.add_mutually_exclusive_group(required=True)
    group.add_argument("--particles", nargs=2, metavar=("z=..", "rho=.."))
    group.add_argument("--integrals", metavar="I=..")
    e.add_argument("--tau", default="1i")
    e.add_argument("--check-turning", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_ecm)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        grid = getattr(args, "grid", None)
        if grid is not None and (grid < 8 or grid % 2):
            raise UsageError("--grid must be even and at least 8")
        return args.func(args)
    except UsageError as exc:
        print(f"nvsigma: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
