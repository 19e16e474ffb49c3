"""Command-line driver.

    dwrlab solve    --config run.cfg --out outdir
    dwrlab adjoint  --config run.cfg --out outdir
    dwrlab estimate --config run.cfg --out outdir [--form primal]
    dwrlab adapt    --config run.cfg --out outdir
    dwrlab study    --config run.cfg --out outdir
    dwrlab verify   [--out outdir]

Exit status is 0 on success, 2 for usage or configuration errors and 3 for
numerical failures (singular systems, Newton divergence, failed checks).
"""
import argparse
import logging
import os
import sys

from .adapt import adapt_loop_steady, adapt_loop_unsteady
from .adjoint import (
    dual_form_output,
    solve_steady_adjoint,
    solve_unsteady_adjoint,
    solve_unsteady_adjoint_checkpointed,
    unsteady_dual_form_output,
)
from .config import ParseError, ValidationError, load_config
from .discretization import DiscreteSpace, evaluate_output, evaluate_spacetime_output, solve_primal, time_march
from .error import (
    FORMS,
    TruthTooSmall,
    build_fine_pair,
    effectivity,
    estimate,
    fine_truth,
    unsteady_estimate,
    unsteady_fine_truth,
)
from .io import fmt, history_csv, report_csv, write_state, write_trajectory
from .mesh import write_mesh
from .study import run_study, run_verify

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _save(out, name, text):
    with open(os.path.join(out, name), "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)


def _primal(cfg):
    space = DiscreteSpace(cfg.mesh())
    if cfg.problem.steady:
        U = solve_primal(space, cfg.problem)
        return space, U, evaluate_output(space, cfg.output, U, cfg.problem)
    sol = time_march(space, cfg.problem)
    return space, sol, evaluate_spacetime_output(sol, cfg.problem, cfg.output)


def cmd_solve(cfg, out, args):
    space, U, J = _primal(cfg)
    write_mesh(space.mesh, os.path.join(out, "mesh.txt"))
    if cfg.problem.steady:
        write_state(U, os.path.join(out, "state.txt"))
    else:
        write_trajectory(U.times, U.states, os.path.join(out, "spacetime.txt"))
    _save(out, "output.txt", f"J {fmt(J)}\n")
    print(f"J = {fmt(J)}")


def cmd_adjoint(cfg, out, args):
    space, U, J = _primal(cfg)
    problem, output = cfg.problem, cfg.output
    if problem.steady:
        psi = solve_steady_adjoint(space, problem, output, U)
        write_state(psi.values, os.path.join(out, "adjoint.txt"), kind="adjoint")
        J_dual = dual_form_output(space, problem, output, psi) if problem.linear and output.linear else None
    else:
        if cfg.checkpoint_interval > 0:
            adj = solve_unsteady_adjoint_checkpointed(problem, output, space, cfg.checkpoint_interval)
        else:
            adj = solve_unsteady_adjoint(U, problem, output)
        write_trajectory(adj.times, adj.adjoints, os.path.join(out, "adjoint.txt"), kind="adjoint", first_step=1)
        J_dual = unsteady_dual_form_output(U, problem, output, adj)
    _save(out, "output.txt", f"J {fmt(J)}\nJ_dual {fmt(J_dual)}\n")
    print(f"J = {fmt(J)}  dual form = {fmt(J_dual)}")


def cmd_estimate(cfg, out, args):
    problem, output = cfg.problem, cfg.output
    space = DiscreteSpace(cfg.mesh())
    if problem.steady:
        pair = build_fine_pair(
            space, problem, output,
            fine=cfg.fine_space, adjoint_mode=cfg.adjoint_mode,
            smoothing_iterations=cfg.smoothing_iterations, surrogate=cfg.surrogate,
        )
        report = estimate(pair, problem, output, args.form)
        truth = fine_truth(pair, problem, output)
    else:
        if args.form != "primal":
            raise ValidationError("--form", "unsteady estimates use the primal form")
        sol = time_march(space, problem)
        report = unsteady_estimate(sol, problem, output, fine=cfg.fine_space)
        truth = unsteady_fine_truth(sol, problem, output, fine=cfg.fine_space)
    try:
        report.effectivity = effectivity(report, truth)
    except TruthTooSmall as exc:
        logging.getLogger(__name__).warning("effectivity not reported: %s", exc)
    report_csv(report, os.path.join(out, "report.csv"))
    print(f"dJ_est = {fmt(report.estimate)}  effectivity = {fmt(report.effectivity)}")


def cmd_adapt(cfg, out, args):
    a = cfg.adaptation
    kw = dict(
        mode=a["mode"], refine_fraction=a["refine_fraction"], coarsen_fraction=a["coarsen_fraction"],
        tol=a["tol"], max_iter=a["max_iter"], dof_cap=a["dof_cap"], fine=cfg.fine_space, J_exact=cfg.J_exact,
    )
    mesh = cfg.mesh()
    snapshots = os.path.join(out, "meshes")
    os.makedirs(snapshots, exist_ok=True)
    if cfg.problem.steady:
        history = adapt_loop_steady(cfg.problem, cfg.output, mesh, indicator=a["indicator"], **kw)
        for i, m in enumerate(history.meshes):
            write_mesh(m, os.path.join(snapshots, f"mesh_{i:03d}.txt"))
    else:
        history = adapt_loop_unsteady(cfg.problem, cfg.output, mesh, **kw)
        for i, stm in enumerate(history.meshes):
            write_mesh(stm.time, os.path.join(snapshots, f"mesh_{i:03d}_time.txt"))
            for k, m in enumerate(stm.meshes):
                write_mesh(m, os.path.join(snapshots, f"mesh_{i:03d}_step_{k:03d}.txt"))
    history_csv(history, os.path.join(out, "history.csv"))
    r = history.final
    print(f"{history.status} after {len(history) - 1} refinements: dof = {r.dof}  J = {fmt(r.J)}  dJ_est = {fmt(r.dJ_est)}")


def cmd_study(cfg, out, args):
    text = run_study(cfg, os.path.join(out, "study.csv"))
    for line in text.splitlines():
        if line.startswith("slope,"):
            print(line)


def cmd_verify(cfg, out, args):
    text, ok = run_verify()
    if out is not None:
        _save(out, "verify.txt", text)
    sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_NUMERICAL


COMMANDS = {
    "solve": cmd_solve,
    "adjoint": cmd_adjoint,
    "estimate": cmd_estimate,
    "adapt": cmd_adapt,
    "study": cmd_study,
    "verify": cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="dwrlab", description="Adjoint-based output error estimation and adaptation in 1D.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "verify", help="run configuration file")
        p.add_argument("--out", required=name != "verify", help="output directory (created if absent)")
        if name == "estimate":
            p.add_argument("--form", choices=FORMS, default="primal")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else None
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            if cfg is not None:
                _save(args.out, "config.cfg", cfg.text)
        status = COMMANDS[args.command](cfg, args.out, args)
    except (ValidationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ArithmeticError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK if status is None else status


if __name__ == "__main__":
    sys.exit(main())
