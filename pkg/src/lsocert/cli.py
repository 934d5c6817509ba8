"""Command-line front end: solves, hierarchy sweeps, verification, sampling.

Exit codes: 0 success, 2 problem-file parse error, 3 model validation error,
4 solver failure, 5 certificate failure, 6 bound-verification failure.
Reports are JSON documents with a schema_version field; every gamma printed
has passed the independent certificate check.
"""

from __future__ import annotations

import argparse
import csv as csv_mod
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .errors import (
    InfeasibleProgram,
    LsocertError,
    ModelValidationError,
    NonPositiveLambda,
    NoValidLambda,
    OracleError,
    ProblemFileError,
)
from .model import validate_problem, value_from_desirability
from .oracle import richardson_1d, richardson_2d, rollout, verify_bounds
from .pde import DesirabilityPDE
from .poly import Polynomial, render
from .problems import load_problem
from .sdp import dump_program
from .sos import (
    CertificateConfig,
    build_bound_program,
    sample_defect_sandwich,
    sample_positivity,
    solve_bound_certified,
    verify_certificate,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_MODEL = 3
EXIT_SOLVER = 4
EXIT_CERTIFICATE = 5
EXIT_VERIFY = 6

REPORT_SCHEMA_VERSION = 1


def _parse_degree_list(text: str) -> list[int]:
    """Accepts '8', '2,4,6' or 'a:b:step' forms."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"bad degree range {text!r}")
        a, b = int(parts[0]), int(parts[1])
        step = int(parts[2]) if len(parts) == 3 else 2
        if step <= 0 or b < a:
            raise ValueError(f"bad degree range {text!r}")
        return list(range(a, b + 1, step))
    return [int(t) for t in text.split(",") if t.strip()]


def _psi_payload(psi: Polynomial) -> dict:
    return {
        "variables": list(psi.space.names),
        "text": render(psi),
        "coefficients": [[list(m), c] for m, c in psi.terms.items()],
    }


def _psi_from_payload(payload: dict) -> Polynomial:
    from .poly import VariableSpace

    space = VariableSpace(tuple(payload["variables"]))
    return Polynomial(space, {tuple(m): c for m, c in payload["coefficients"]})


def _solve_one(problem, cfg, direction, fit_degree, enforce_positivity, dump_sdp=None):
    """Full pipeline for one direction; returns (report dict, BoundSolution)."""
    t0 = time.perf_counter()
    if dump_sdp:
        program = build_bound_program(
            problem, cfg, direction, enforce_positivity=enforce_positivity, fit_degree=fit_degree
        )
        dump_program(program.conic, dump_sdp)
    sol, cert = solve_bound_certified(
        problem, cfg, direction, enforce_positivity=enforce_positivity, fit_degree=fit_degree
    )
    if not cert.passed:
        raise CertificateFailure(sol, cert)
    sandwich = sample_defect_sandwich(sol)
    positivity = sample_positivity(sol)
    wall = time.perf_counter() - t0
    report = {
        "direction": direction,
        "config": {
            "deg_psi": cfg.deg_psi,
            "deg_mult": cfg.deg_mult,
            "deg_eq_mult": cfg.deg_eq_mult,
            "include_products": cfg.include_products,
            "fit_degree": fit_degree,
            "enforce_positivity": enforce_positivity,
        },
        "lambda": sol.lam,
        "gamma": sol.gamma,
        "psi": _psi_payload(sol.psi),
        "certificate": {
            "passed": cert.passed,
            "max_coeff_mismatch": cert.max_coeff_mismatch,
            "min_gram_eigenvalue": cert.min_gram_eigenvalue,
        },
        "solver": {
            "status": sol.status,
            "iterations": sol.iterations,
            "gap": sol.solver_gap,
            "primal_infeas": sol.primal_infeas,
            "dual_infeas": sol.dual_infeas,
        },
        "defect_sandwich": sandwich,
        "positivity": positivity,
        "boundary": {
            "unscored_faces": [f.piece_index for f in sol.program.faces if not f.scored],
            "fit_remainders": [
                {
                    "piece": f.piece_index,
                    "lower": f.fit_low.remainder,
                    "upper": f.fit_up.remainder,
                }
                for f in sol.program.faces
            ],
        },
        "flags": list(sol.program.flags),
        "wall_time_s": wall,
    }
    return report, sol


class CertificateFailure(Exception):
    def __init__(self, sol, cert):
        super().__init__(
            f"certificate verification failed: mismatch {cert.max_coeff_mismatch:.3e}, "
            f"min eigenvalue {cert.min_gram_eigenvalue:.3e}"
        )
        self.sol = sol
        self.cert = cert


def _load_and_validate(path):
    problem = load_problem(path)
    validate_problem(problem)
    return problem


def cmd_solve(args) -> int:
    problem = _load_and_validate(args.problem)
    deg_psi = args.deg_psi
    deg_mult = args.deg_mult if args.deg_mult is not None else deg_psi
    cfg = CertificateConfig(deg_psi=deg_psi, deg_mult=deg_mult)
    directions = ["lower", "upper"] if args.direction == "both" else [args.direction]
    out = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": "run_report",
        "problem": {"name": problem.name, "file": str(args.problem)},
        "runs": {},
    }
    sols = {}
    for direction in directions:
        report, sol = _solve_one(
            problem, cfg, direction, args.fit_degree, args.enforce_positivity,
            dump_sdp=args.dump_sdp,
        )
        out["runs"][direction] = report
        sols[direction] = sol
        print(
            f"{problem.name} {direction} deg_psi={cfg.deg_psi} deg_mult={cfg.deg_mult}: "
            f"gamma = {sol.gamma:.6f}  (certificate ok, solver {sol.status})"
        )

    if args.verify:
        ver, code = _run_verification(problem, sols, args)
        out["verification"] = ver
        if code != EXIT_OK:
            _write_report(out, args.out)
            return code
    _write_report(out, args.out)
    return EXIT_OK


def _write_report(doc, path):
    if path:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")


def _run_verification(problem, sols, args):
    """FD oracle sandwich + rollout consistency for solved directions."""
    ver = {}
    failed = False
    low = sols.get("lower")
    up = sols.get("upper")
    dim = problem.space.dim
    ref = None
    if dim == 1:
        ref = richardson_1d(problem, args.grid)
    elif dim == 2:
        ref = richardson_2d(problem, args.grid, args.grid)
    else:
        ver["fd"] = {"skipped": f"FD verification unsupported for dimension {dim}"}
    if ref is not None:
        low_psi = low.psi if low else None
        up_psi = up.psi if up else None
        zero = Polynomial.zero(problem.space)
        big = Polynomial.constant(problem.space, float(ref.values.max()) + 1.0)
        rep = verify_bounds(low_psi or zero, up_psi or big, ref)
        ver["fd"] = {
            "grid": [len(ax) for ax in ref.axes],
            "tol_fd": rep.tol_fd,
            "max_low_violation": rep.max_low_violation,
            "max_up_violation": rep.max_up_violation,
            "low_margin": rep.low_margin,
            "up_margin": rep.up_margin,
            "passed": rep.passed,
            "checked": {"lower": low is not None, "upper": up is not None},
        }
        failed |= not rep.passed
        if low is not None and up is not None:
            pts = ref.nodes()
            step = max(1, len(pts) // 201)
            sample = pts[::step]
            lv = low.psi.evaluate_many(sample)
            uv = up.psi.evaluate_many(sample)
            order_ok = bool(np.all(lv <= uv + 2e-6))
            ver["bound_order"] = {"passed": order_ok, "points": len(sample)}
            failed |= not order_ok

    if args.rollouts > 0:
        psi_for_policy = (low or up).psi
        x0 = np.zeros(problem.space.dim) if args.x0 is None else np.array(args.x0)
        rep = rollout(
            problem, psi_for_policy, x0, dt=args.dt, n_traj=args.rollouts, seed=args.seed
        )
        entry = {
            "mean_cost": rep.mean_cost,
            "stderr": rep.stderr,
            "n_traj": rep.n_traj,
            "exit_fractions": {str(k): v for k, v in rep.exit_fractions.items()},
            "mean_exit_time": rep.mean_exit_time,
            "capped": rep.capped,
            "clamped_steps": rep.clamped_steps,
            "seed": rep.seed,
            "kernel": rep.kernel,
        }
        if up is not None:
            vres = value_from_desirability(up.psi, up.lam, x0)
            entry["value_lower_bound_at_x0"] = None if vres.clamped else vres.value
            if not vres.clamped:
                ok = rep.mean_cost >= vres.value - 3.0 * rep.stderr - 1e-9
                entry["consistent_with_value_bound"] = bool(ok)
                failed |= not ok
        ver["rollout"] = entry
    return ver, (EXIT_VERIFY if failed else EXIT_OK)


def cmd_hierarchy(args) -> int:
    problem = _load_and_validate(args.problem)
    deg_psi_list = _parse_degree_list(args.deg_psi)
    deg_mult_list = _parse_degree_list(args.deg_mult) if args.deg_mult else list(deg_psi_list)
    directions = ["lower", "upper"] if args.direction == "both" else [args.direction]
    out = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": "hierarchy_report",
        "problem": {"name": problem.name, "file": str(args.problem)},
        "deg_psi": deg_psi_list,
        "deg_mult": deg_mult_list,
        "tables": {},
        "cells": {},
        "monotonicity_violations": {},
    }
    code = EXIT_OK
    for direction in directions:
        table = {}
        cells = []
        for dp in deg_psi_list:
            for dm in deg_mult_list:
                cfg = CertificateConfig(deg_psi=dp, deg_mult=dm)
                try:
                    report, sol = _solve_one(
                        problem, cfg, direction, args.fit_degree, args.enforce_positivity
                    )
                    table[(dp, dm)] = sol.gamma
                    cells.append(
                        {"deg_psi": dp, "deg_mult": dm, "gamma": sol.gamma,
                         "status": sol.status, "certificate_passed": True}
                    )
                except (CertificateFailure, InfeasibleProgram, LsocertError) as exc:
                    cells.append(
                        {"deg_psi": dp, "deg_mult": dm, "gamma": None, "error": str(exc)}
                    )
                    code = EXIT_SOLVER
        out["cells"][direction] = cells
        out["tables"][direction] = [
            [table.get((dp, dm)) for dm in deg_mult_list] for dp in deg_psi_list
        ]
        violations = []
        for i, dp in enumerate(deg_psi_list):
            for j, dm in enumerate(deg_mult_list):
                cur = table.get((dp, dm))
                if cur is None:
                    continue
                if i + 1 < len(deg_psi_list):
                    nxt = table.get((deg_psi_list[i + 1], dm))
                    if nxt is not None and nxt > cur + 1e-6:
                        violations.append([[dp, dm], [deg_psi_list[i + 1], dm]])
                if j + 1 < len(deg_mult_list):
                    nxt = table.get((dp, deg_mult_list[j + 1]))
                    if nxt is not None and nxt > cur + 1e-6:
                        violations.append([[dp, dm], [dp, deg_mult_list[j + 1]]])
        out["monotonicity_violations"][direction] = violations

        print(f"gamma table ({direction}), rows deg_psi {deg_psi_list}, cols deg_mult {deg_mult_list}:")
        header = "deg_psi\\deg_mult " + " ".join(f"{dm:>10d}" for dm in deg_mult_list)
        print(header)
        for i, dp in enumerate(deg_psi_list):
            row = out["tables"][direction][i]
            cellstr = " ".join("      --- " if v is None else f"{v:10.6f}" for v in row)
            print(f"{dp:>16d} {cellstr}")
        if violations:
            print(f"monotonicity violations ({direction}): {violations}")

        if args.csv:
            path = args.csv if len(directions) == 1 else f"{args.csv}.{direction}"
            with open(path, "w", newline="") as fh:
                writer = csv_mod.writer(fh)
                writer.writerow(["deg_psi"] + [f"deg_mult_{dm}" for dm in deg_mult_list])
                for i, dp in enumerate(deg_psi_list):
                    writer.writerow([dp] + out["tables"][direction][i])
    _write_report(out, args.out)
    return code


def cmd_verify(args) -> int:
    problem = _load_and_validate(args.problem)
    with open(args.report) as fh:
        doc = json.load(fh)
    runs = doc.get("runs", {})
    sols = {}
    for direction, run in runs.items():
        psi = _psi_from_payload(run["psi"])
        lam = run["lambda"]
        sols[direction] = _ReportSolution(psi=psi, lam=lam)
    if not sols:
        print("report contains no runs", file=sys.stderr)
        return EXIT_PARSE
    ver, code = _run_verification(problem, sols, args)
    out = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": "verification_report",
        "problem": {"name": problem.name, "file": str(args.problem)},
        "source_report": str(args.report),
        "verification": ver,
    }
    _write_report(out, args.out)
    ok = code == EXIT_OK
    print(f"verification {'PASS' if ok else 'FAIL'}")
    for section, content in ver.items():
        print(f"  {section}: {json.dumps(content)}")
    return code


class _ReportSolution:
    def __init__(self, psi, lam):
        self.psi = psi
        self.lam = lam


def cmd_samples(args) -> int:
    problem = _load_and_validate(args.problem)
    with open(args.report) as fh:
        doc = json.load(fh)
    runs = doc.get("runs", {})
    direction = args.direction if args.direction != "both" else None
    if direction is None:
        direction = "lower" if "lower" in runs else "upper"
    if direction not in runs:
        print(f"report has no {direction} run", file=sys.stderr)
        return EXIT_PARSE
    run = runs[direction]
    psi = _psi_from_payload(run["psi"])
    lam = run["lambda"]
    box = problem.domain.bounding_box
    axes = [np.linspace(lo, hi, args.grid) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    psi_vals = psi.evaluate_many(pts)
    with open(args.out, "w", newline="") as fh:
        writer = csv_mod.writer(fh)
        writer.writerow(list(problem.space.names) + ["psi", "value", "clamped"])
        for pt, pv in zip(pts, psi_vals):
            res = value_from_desirability(psi, lam, pt)
            writer.writerow(
                list(pt) + [pv, "inf" if math.isinf(res.value) else res.value, int(res.clamped)]
            )
    print(f"wrote {len(pts)} samples to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lsocert",
        description="Certified polynomial bounds for linearly-solvable stochastic optimal control",
    )
    parser.add_argument("--version", action="version", version=f"lsocert {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_solve(p):
        p.add_argument("problem", help="problem file (JSON)")
        p.add_argument("--fit-degree", type=int, default=8,
                       help="Chebyshev degree for non-constant boundary data (default 8)")
        p.add_argument("--enforce-positivity", action="store_true",
                       help="add the candidate >= 0 constraint on the domain")
        p.add_argument("--out", help="write the JSON report here")

    p_solve = sub.add_parser("solve", help="solve one bound program")
    add_common_solve(p_solve)
    p_solve.add_argument("--deg-psi", type=int, required=True)
    p_solve.add_argument("--deg-mult", type=int, default=None,
                         help="multiplier degree (default: matching deg-psi)")
    p_solve.add_argument("--direction", choices=["lower", "upper", "both"], default="lower")
    p_solve.add_argument("--dump-sdp", help="dump the compiled conic program (text format)")
    p_solve.add_argument("--verify", action="store_true", help="run the FD/rollout verification")
    p_solve.add_argument("--grid", type=int, default=2001, help="FD oracle nodes per axis")
    p_solve.add_argument("--rollouts", type=int, default=0, help="Monte Carlo trajectories")
    p_solve.add_argument("--dt", type=float, default=1e-4)
    p_solve.add_argument("--seed", type=int, default=42)
    p_solve.add_argument("--x0", type=float, nargs="+", default=None)
    p_solve.set_defaults(func=cmd_solve)

    p_h = sub.add_parser("hierarchy", help="sweep a degree grid and tabulate gamma")
    add_common_solve(p_h)
    p_h.add_argument("--deg-psi", required=True, help="degree list: '2:10:2' or '2,4,6'")
    p_h.add_argument("--deg-mult", default=None, help="default: same list as --deg-psi")
    p_h.add_argument("--direction", choices=["lower", "upper", "both"], default="lower")
    p_h.add_argument("--csv", help="write the gamma table as CSV")
    p_h.set_defaults(func=cmd_hierarchy)

    p_v = sub.add_parser("verify", help="verify a prior report against the oracles")
    p_v.add_argument("problem")
    p_v.add_argument("--report", required=True)
    p_v.add_argument("--grid", type=int, default=2001)
    p_v.add_argument("--rollouts", type=int, default=0)
    p_v.add_argument("--dt", type=float, default=1e-4)
    p_v.add_argument("--seed", type=int, default=42)
    p_v.add_argument("--x0", type=float, nargs="+", default=None)
    p_v.add_argument("--out")
    p_v.set_defaults(func=cmd_verify)

    p_s = sub.add_parser("samples", help="densely sample psi and V from a report")
    p_s.add_argument("problem")
    p_s.add_argument("--report", required=True)
    p_s.add_argument("--direction", choices=["lower", "upper", "both"], default="both")
    p_s.add_argument("--grid", type=int, default=201)
    p_s.add_argument("--out", required=True)
    p_s.set_defaults(func=cmd_samples)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ProblemFileError as exc:
        print(f"problem file error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (NoValidLambda, NonPositiveLambda, ModelValidationError) as exc:
        print(f"model validation error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except CertificateFailure as exc:
        print(f"certificate failure: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
    except (InfeasibleProgram, OracleError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
