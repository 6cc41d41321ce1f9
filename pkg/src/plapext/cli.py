"""Command-line front end.

Subcommands: radial, solve, continue, figure1, verify.  Data artifacts are
deterministic: CSV with 17-significant-digit decimals and JSON reports that
echo the fully-resolved configuration.  Exit codes: 0 success, 2 config
error, 3 solver failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import continuation as cont
from . import mesh as meshmod
from . import operator_model as om
from . import radial as rad
from . import solver as solvermod


class ConfigError(ValueError):
    pass


FIGURE1_DEFAULTS = {
    "operator": {"p": 4.0, "n": 2, "family": {"kind": "constant", "value": 1.0}},
    "domain": {
        "punctures": [
            {"center": [-1.0, 0.0], "value": -1.0},
            {"center": [1.0, 0.0], "value": 1.0},
        ],
        "hole_radius": 0.4,
        "outer_radius": 4.0,
        "outer_value": 0.0,
        "spacing": 0.05,
        "split": "avg",
    },
    "solver": {},
    "continuation": {
        "r_schedule": [0.4, 0.2, 0.1],
        "R_schedule": [4.0, 8.0],
        "probe_region": [-0.5, 0.5, 0.5, 1.5],
        "h": 0.05,
    },
}


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (int, float, np.floating)) else str(v)
                              for v in row) + "\n")


def write_json(path: str, obj) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path: str | None, defaults: dict | None = None) -> dict:
    config = json.loads(json.dumps(defaults)) if defaults else {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        _deep_update(config, user)
    return config


def _deep_update(base: dict, extra: dict) -> None:
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], val)
        else:
            base[key] = val


def _build_operator(config: dict) -> om.OperatorSpec:
    try:
        block = config["operator"]
    except KeyError as exc:
        raise ConfigError("config is missing the 'operator' block") from exc
    try:
        return om.spec_from_dict(block)
    except om.OperatorError as exc:
        raise ConfigError(str(exc)) from exc


def _build_domain(config: dict) -> meshmod.DomainConfig:
    try:
        return meshmod.domain_from_dict(config["domain"])
    except KeyError as exc:
        raise ConfigError("config is missing the 'domain' block") from exc
    except meshmod.MeshError as exc:
        raise ConfigError(str(exc)) from exc


def _build_params(config: dict) -> solvermod.SolverParams:
    try:
        return solvermod.params_from_dict(config.get("solver", {}))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad solver block: {exc}") from exc


def _limit_threads(n: int | None) -> None:
    if n is None:
        return
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _resolved(config: dict, spec, domain=None, params=None) -> dict:
    out = {"operator": om.spec_to_dict(spec)}
    if domain is not None:
        out["domain"] = domain.to_dict()
    if params is not None:
        out["solver"] = params.to_dict()
    for key in ("continuation", "radial", "outputs"):
        if key in config:
            out[key] = config[key]
    return out


# ---------------------------------------------------------------------------
# Subcommands

def cmd_radial(args) -> int:
    config = load_config(args.config)
    spec = _build_operator(config)
    block = config.get("radial", {})
    try:
        a = float(block["a"])
        s = float(block.get("s", 0.0))
        grid = block["r_grid"]
        if isinstance(grid, dict):
            fn = np.geomspace if grid.get("log") else np.linspace
            radii = fn(float(grid["start"]), float(grid["stop"]), int(grid["num"]))
        else:
            radii = np.asarray(grid, dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad radial block: {exc}") from exc

    barrier = rad.RadialBarrier(spec=spec, a=a, s=s)
    values = rad.barrier_value(barrier, radii)
    rows = []
    for r, v in zip(radii, values):
        lower, upper = rad.envelope_bounds(spec, a, s, r)
        rows.append((r, v, lower, upper))
    path = os.path.join(args.out, "radial.csv")
    write_csv(path, ("r", "v", "lower", "upper"), rows)
    if args.plot:
        from . import plots
        arr = np.array(rows)
        plots.render_radial(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                            os.path.join(args.out, "radial.png"))
    print(f"wrote {path}")
    return 0


def _emit_solution(args, sol, spec, domain, params, config, extra=None) -> None:
    active = np.flatnonzero(sol.mesh.active)
    rows = ((sol.mesh.coords[i, 0], sol.mesh.coords[i, 1], sol.values[i]) for i in active)
    heat_path = os.path.join(args.out, "heatmap.csv")
    write_csv(heat_path, ("x", "y", "u"), rows)

    report = {
        "config": _resolved(config, spec, domain, params),
        "energy": sol.energy,
        "iterations": sol.iterations,
        "grad_inf_norm": sol.grad_inf_norm,
        "converged": sol.converged,
        "max_principle": solvermod.max_principle_report(sol).to_dict(),
    }
    if extra:
        report.update(extra)
    write_json(os.path.join(args.out, "report.json"), report)

    if args.trace:
        write_csv(os.path.join(args.out, "trace.csv"),
                  ("iter", "energy", "grad_norm"), sol.trace)
    if args.plot:
        from . import plots
        plots.render_heatmap(sol.mesh, sol.values, os.path.join(args.out, "heatmap.png"))
        if args.trace:
            plots.render_trace(sol.trace, os.path.join(args.out, "trace.png"))
    print(f"wrote {heat_path}")


def cmd_solve(args) -> int:
    config = load_config(args.config)
    spec = _build_operator(config)
    domain = _build_domain(config)
    params = _build_params(config)
    mesh = meshmod.build_mesh(domain)
    try:
        sol = solvermod.solve(mesh, spec, params)
    except solvermod.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    if not sol.converged:
        write_csv(os.path.join(args.out, "trace.csv"),
                  ("iter", "energy", "grad_norm"), sol.trace)
        print("solver failure: iteration budget exhausted (trace saved)", file=sys.stderr)
        return 3
    _emit_solution(args, sol, spec, domain, params, config)
    return 0


def _run_continuation(config, spec, domain, params):
    plan = cont.plan_from_dict(domain, config["continuation"])
    results = cont.run_continuation(plan, spec, params)
    return plan, results


def _continuation_report(config, spec, domain, params, plan, results) -> dict:
    final = results[-1]
    sandwich = cont.barrier_sandwich_check(final.solution, spec)
    tail_cfg = config.get("continuation", {}).get("tail", {})
    R_final = final.outer_radius
    U_radius = float(tail_cfg.get("U_radius", 1.5))
    R_list = [float(R) for R in tail_cfg.get("R_list", [R_final / 4.0, R_final / 2.0, R_final])]
    tails = cont.lp_gradient_tail(final.solution, spec, U_radius, R_list)

    deltas = [r.probe_delta for r in results[1:]]
    mp = solvermod.max_principle_report(final.solution)
    checks = {
        "probe_delta_decreasing": all(b < a for a, b in zip(deltas, deltas[1:])),
        "max_principle_violation_small": mp.violation <= 1e-8,
        "sandwich_within_budget": sandwich <= 5.0 * final.spacing,
        "all_stages_converged": all(r.solution.converged for r in results),
    }
    return {
        "config": _resolved(config, spec, domain, params),
        "stages": [
            {
                "hole_radius": r.hole_radius,
                "outer_radius": r.outer_radius,
                "spacing": r.spacing,
                "energy": r.solution.energy,
                "iterations": r.solution.iterations,
                "grad_inf_norm": r.solution.grad_inf_norm,
                "probe_delta": None if np.isnan(r.probe_delta) else r.probe_delta,
            }
            for r in results
        ],
        "sandwich_violation": sandwich,
        "tail": {"U_radius": U_radius, "R_list": R_list, "integrals": tails},
        "max_principle": mp.to_dict(),
        "checks": checks,
    }


def cmd_continue(args) -> int:
    config = load_config(args.config)
    spec = _build_operator(config)
    domain = _build_domain(config)
    params = _build_params(config)
    if "continuation" not in config:
        raise ConfigError("config is missing the 'continuation' block")
    try:
        plan, results = _run_continuation(config, spec, domain, params)
    except solvermod.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    if not all(r.solution.converged for r in results):
        print("solver failure: a continuation stage did not converge", file=sys.stderr)
        return 3
    report = _continuation_report(config, spec, domain, params, plan, results)
    write_json(os.path.join(args.out, "report.json"), report)
    final = results[-1].solution
    active = np.flatnonzero(final.mesh.active)
    write_csv(os.path.join(args.out, "heatmap.csv"), ("x", "y", "u"),
              ((final.mesh.coords[i, 0], final.mesh.coords[i, 1], final.values[i])
               for i in active))
    if args.plot:
        from . import plots
        plots.render_heatmap(final.mesh, final.values, os.path.join(args.out, "heatmap.png"))
    print(f"wrote {os.path.join(args.out, 'report.json')}")
    return 0


def _profile_rows(sol, y_target: float):
    mesh = sol.mesh
    nx = mesh.nx
    ys = mesh.coords[::nx, 1]
    iy = int(np.argmin(np.abs(ys - y_target)))
    ids = np.arange(iy * nx, (iy + 1) * nx)
    keep = ids[mesh.active[ids]]
    return [(mesh.coords[i, 0], sol.values[i]) for i in keep], float(ys[iy])


def cmd_figure1(args) -> int:
    config = load_config(args.config, defaults=FIGURE1_DEFAULTS)
    spec = _build_operator(config)
    domain = _build_domain(config)
    params = _build_params(config)
    try:
        plan, results = _run_continuation(config, spec, domain, params)
    except solvermod.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    if not all(r.solution.converged for r in results):
        print("solver failure: a continuation stage did not converge", file=sys.stderr)
        return 3
    final = results[-1].solution

    active = np.flatnonzero(final.mesh.active)
    write_csv(os.path.join(args.out, "heatmap.csv"), ("x", "y", "u"),
              ((final.mesh.coords[i, 0], final.mesh.coords[i, 1], final.values[i])
               for i in active))
    profiles = {}
    for y in (0.0, 1.0, 2.0):
        rows, y_used = _profile_rows(final, y)
        name = f"profile_y{int(y)}"
        write_csv(os.path.join(args.out, name + ".csv"), ("x", "u"), rows)
        profiles[f"y = {_fmt(y_used)}"] = (np.array([r[0] for r in rows]),
                                           np.array([r[1] for r in rows]))

    report = _continuation_report(config, spec, domain, params, plan, results)
    write_json(os.path.join(args.out, "report.json"), report)

    if args.plot:
        from . import plots
        plots.render_heatmap(final.mesh, final.values, os.path.join(args.out, "heatmap.png"))
        plots.render_profiles(profiles, os.path.join(args.out, "profiles.png"))
    print(f"wrote {os.path.join(args.out, 'heatmap.csv')} and x-profiles")
    return 0


def cmd_verify(args) -> int:
    config = load_config(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else 0
    checks = []

    def check(name, fn):
        try:
            fn()
            checks.append((name, True, ""))
        except Exception as exc:  # noqa: BLE001 - every failure must be reported
            checks.append((name, False, f"{type(exc).__name__}: {exc}"))

    spec4 = om.make_operator(4.0, 2, om.ConstantFamily(1.0))
    spec2 = om.make_operator(2.0, 2, om.ConstantFamily(1.0))

    def radial_closed_form():
        b = rad.RadialBarrier(spec=spec4, a=1.0)
        for r in (0.25, 1.0, 4.0):
            exact = 1.5 * r ** (2.0 / 3.0)
            got = rad.barrier_value(b, r)
            assert abs(got - exact) <= 1e-8 * exact, (r, got, exact)

    def flux_constants_linear():
        rep = om.verify_damascelli(spec2, 2000, seed)
        assert abs(rep.c1_est - 1.0) <= 1e-12 and abs(rep.c2_est - 1.0) <= 1e-12

    def flux_constants_quartic():
        rep = om.verify_damascelli(spec4, 5000, seed)
        assert rep.c1_est >= rep.c2_est > 0.0

    def rejects_nonmonotone():
        try:
            om.make_operator(2.0, 2, om.TableFamily((0.0, 1.0, 2.0), (1.0, 2.0, 0.5)))
        except om.OperatorError as exc:
            assert "not strictly increasing" in str(exc)
        else:
            raise AssertionError("non-monotone table accepted")

    def small_solve_gradient():
        cfg = meshmod.DomainConfig(
            punctures=(meshmod.Puncture((0.0, 0.0), 1.0),),
            hole_radius=0.4, outer_radius=2.0, outer_value=0.0, spacing=0.1)
        mesh = meshmod.build_mesh(cfg)
        sol = solvermod.solve(mesh, spec4)
        assert sol.converged
        mp = solvermod.max_principle_report(sol)
        assert mp.violation <= 1e-8

    check("radial closed form (p=4, A=1)", radial_closed_form)
    check("flux constants exact for the linear flux", flux_constants_linear)
    check("flux constants finite for p=4", flux_constants_quartic)
    check("non-monotone profile rejected", rejects_nonmonotone)
    check("one-hole solve respects the data bounds", small_solve_gradient)

    if "operator" in config:
        def configured_operator():
            spec = _build_operator(config)
            if spec.p >= 2.0:
                om.verify_damascelli(spec, 2000, seed)
            else:
                print("  (skipping flux-constant sampling: p < 2)")
        check("configured operator validates", configured_operator)

    failed = [c for c in checks if not c[1]]
    for name, ok, msg in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{msg}]" if msg else ""))
    write_json(os.path.join(args.out, "verify.json"),
               {"checks": [{"name": n, "passed": ok, "detail": msg}
                           for n, ok, msg in checks],
                "seed": seed})
    return 4 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plapext",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("radial", cmd_radial, "emit the radial profile table (r, v, lower, upper)"),
        ("solve", cmd_solve, "solve one punctured-disk problem"),
        ("continue", cmd_continue, "run the hole-shrinking / ball-growing schedule"),
        ("figure1", cmd_figure1, "two-puncture reference run with x-profiles"),
        ("verify", cmd_verify, "run the built-in verification suite"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", default=None, help="JSON configuration file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--trace", action="store_true", help="emit the solver trace CSV")
        p.add_argument("--plot", action="store_true",
                       help="also render PNG figures next to the CSV output")
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _limit_threads(args.threads)
    os.makedirs(args.out, exist_ok=True)
    try:
        return args.handler(args)
    except (ConfigError, om.OperatorError, meshmod.MeshError,
            cont.ContinuationError, rad.BarrierError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
