"""Command-line entry point.

Exit codes: 0 success, 1 obstruction / incomplete table, 2 config or usage
error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from datetime import datetime, timezone

import numpy as np

from .brockett import openness_probe
from .config import RunConfig, load_config
from .errors import ConfigError, NotSynthesizable, NumericError, SingularAtOrigin
from .lintest import hautus_test, rank_of_joint_jacobian, spectrum_plus
from .model import linearize
from .section import build_section, check_section
from .synth import ClosedLoop, check_exponential_condition, synthesize_composition_symbol, synthesize_feedback
from .verify import classify_stability, closed_loop_spectrum, non_lipschitz_flag, simulate

EXIT_OK = 0
EXIT_OBSTRUCTION = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

log = logging.getLogger("compstab")


def _clean(obj):
    """Make ``obj`` strict-JSON serializable: arrays to lists, complex to [re, im], non-finite to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(float(obj.real)), _clean(float(obj.imag))]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_report(report: dict, path=None):
    report = dict(report)
    report["meta"] = dict(report.get("meta", {}), timestamp=datetime.now(timezone.utc).isoformat())
    text = json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _meta(cfg: RunConfig, command: str) -> dict:
    s = cfg.system
    return {
        "command": command,
        "system": {"name": s.name, "n": s.n, "m": s.m, "f": s.expressions()},
        "target": cfg.target.expressions(),
        "solver": vars(cfg.solver),
        "simulate": vars(cfg.simulate),
    }


def analyze_report(cfg: RunConfig) -> dict:
    lin = linearize(cfg.system)
    hv = hautus_test(lin.A, lin.B)
    rv = rank_of_joint_jacobian(lin.J)
    op = openness_probe(
        cfg.system, cfg.solver.radius, cfg.solver.directions, cfg.solver.seed, cfg.solver.multistart, cfg.solver.max_iter
    )
    return {
        "meta": _meta(cfg, "analyze"),
        "linearization": {"A": lin.A, "B": lin.B},
        "spectrum_plus": spectrum_plus(lin.A),
        "hautus": {
            "stabilizable": hv.stabilizable,
            "checks": [{"eigenvalue": c.eigenvalue, "rank": c.rank, "required": c.required} for c in hv.checks],
        },
        "rank": {"rank": rv.rank, "full_row_rank": rv.full_row_rank, "singular_values": rv.singular_values, "n": cfg.system.n},
        "brockett": op.to_dict(),
    }


def run_analyze(cfg: RunConfig, report_path=None) -> int:
    dump_report(analyze_report(cfg), report_path)
    return EXIT_OK


def run_section(cfg: RunConfig, out="section.csv", report_path=None) -> int:
    s = cfg.solver
    table = build_section(
        cfg.system, s.radius, s.grid, s.tol, s.max_iter, s.bound, s.seed, s.multistart, strict=False
    )
    table.to_csv(out)
    report = {
        "meta": _meta(cfg, "section"),
        "section": {
            "complete": table.complete,
            "nodes": len(table.grid),
            "unsolved_count": len(table.unsolved),
            "unsolved": [table.grid.points[k] for k in table.unsolved],
            "max_residual": check_section(cfg.system, table),
            "lipschitz": table.lipschitz,
            "radius": s.radius,
            "grid": s.grid,
            "tol": s.tol,
            "csv": str(out),
        },
    }
    dump_report(report, report_path)
    return EXIT_OK if table.complete else EXIT_OBSTRUCTION


def _exponential_condition(cfg: RunConfig):
    JG = cfg.target.jacobian(np.zeros(cfg.system.n))
    try:
        # alpha_1 = G^{-1}, so J_alpha1(0) = J_G(0)^{-1}
        return check_exponential_condition(np.linalg.inv(JG)), None
    except (SingularAtOrigin, np.linalg.LinAlgError) as exc:
        return None, str(exc)


def _synthesize(cfg: RunConfig):
    s = cfg.solver
    return synthesize_feedback(
        cfg.system, cfg.target, s.radius, s.grid, s.tol, s.max_iter, s.bound, s.seed, s.multistart, strict=False
    )


def run_synthesize(cfg: RunConfig, out="feedback.csv", report_path=None, symbol_out=None) -> int:
    s = cfg.solver
    table = _synthesize(cfg)
    table.to_csv(out)
    cond, cond_note = _exponential_condition(cfg)
    synthesis = {
        "complete": table.complete,
        "nodes": len(table.grid),
        "unsolved_count": len(table.unsolved),
        "unsolved": [table.grid.points[k] for k in table.unsolved],
        "max_residual": float(np.nanmax(table.residuals)) if np.any(table.solved) else None,
        "exponential_condition": cond,
        "exponential_condition_note": cond_note,
        "csv": str(out),
    }
    if symbol_out is not None:
        sym = synthesize_composition_symbol(
            cfg.system, cfg.target, s.radius, s.grid, s.tol, s.max_iter, s.bound, s.seed, s.multistart, strict=False
        )
        sym.to_csv(symbol_out)
        synthesis["symbol"] = {
            "complete": sym.complete,
            "unsolved_count": len(sym.unsolved),
            "max_residual": float(np.nanmax(sym.residuals)),
            "csv": str(symbol_out),
        }
    report = {"meta": _meta(cfg, "synthesize"), "synthesis": synthesis}
    code = EXIT_OK
    if not table.complete:
        report["stability"] = None
        code = EXIT_OBSTRUCTION
    else:
        synthesis["closed_loop_spectrum"] = closed_loop_spectrum(cfg.system, table, s.fd_step)
        sim = cfg.simulate
        loop = ClosedLoop(cfg.system, table)
        stab = classify_stability(loop, cfg.sim_radius, sim.num_initial, sim.t_final, s.seed, sim.rel_tol, sim.abs_tol)
        stab.lipschitz_flag = non_lipschitz_flag(ClosedLoop(cfg.system, table, strict=False), cfg.system.n)
        report["stability"] = stab.to_dict()
        if stab.classification not in ("exponential", "asymptotic-only"):
            code = EXIT_OBSTRUCTION
    dump_report(report, report_path)
    return code


def run_simulate(cfg: RunConfig, x0, t_final=None, out="trajectory.csv") -> int:
    sysm = cfg.system
    if sysm.m == 0:
        def field(x):
            return sysm(x, ())
    else:
        table = _synthesize(cfg)
        if not table.complete:
            log.error("no feedback: %d grid nodes unsolved", len(table.unsolved))
            return EXIT_OBSTRUCTION
        field = ClosedLoop(sysm, table)
    sim = cfg.simulate
    traj = simulate(field, x0, t_final if t_final is not None else sim.t_final, sim.rel_tol, sim.abs_tol)
    traj.to_csv(out)
    log.info("final state %s", traj.states[-1].tolist())
    return EXIT_OK


def _parse_x0(text, n):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --x0 {text!r}") from None
    if len(vals) != n:
        raise argparse.ArgumentTypeError(f"--x0 needs {n} values, got {len(vals)}")
    return np.array(vals)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="compstab", description="Stabilizability analysis and feedback synthesis via local sections.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="linearization, Hautus, rank and openness checks")
    a.add_argument("config")
    a.add_argument("--report")

    s = sub.add_parser("section", help="tabulate a local section of f")
    s.add_argument("config")
    s.add_argument("--out", default="section.csv")
    s.add_argument("--report")

    y = sub.add_parser("synthesize", help="synthesize a feedback law for the configured target")
    y.add_argument("config")
    y.add_argument("--out", default="feedback.csv")
    y.add_argument("--report")
    y.add_argument("--symbol-out", help="also tabulate a composition symbol h with f(h(x)) = g(x)")

    m = sub.add_parser("simulate", help="integrate the closed loop from one initial state")
    m.add_argument("config")
    m.add_argument("--x0", required=True, help="comma-separated initial state")
    m.add_argument("--t-final", type=float)
    m.add_argument("--out", default="trajectory.csv")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "analyze":
            return run_analyze(cfg, args.report)
        if args.command == "section":
            return run_section(cfg, args.out, args.report)
        if args.command == "synthesize":
            return run_synthesize(cfg, args.out, args.report, args.symbol_out)
        try:
            x0 = _parse_x0(args.x0, cfg.system.n)
        except argparse.ArgumentTypeError as exc:
            parser.print_usage(sys.stderr)
            print(f"usage error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        return run_simulate(cfg, x0, args.t_final, args.out)
    except NotSynthesizable as exc:
        print(f"obstruction: {exc}", file=sys.stderr)
        return EXIT_OBSTRUCTION
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
