"""Convergence studies and the oracle verification suite."""
import csv
from dataclasses import replace
import io
import math
import os

import numpy as np
import scipy.sparse as sp

from .adjoint import (
    checkpointed_adjoint,
    dual_form_output,
    inverse_row_oracle,
    monolithic_primal,
    monolithic_spacetime_adjoint,
    solve_steady_adjoint,
    solve_unsteady_adjoint,
    solve_unsteady_adjoint_checkpointed,
    unsteady_dual_form_output,
)
from .config import ValidationError
from .discretization import (
    BackwardEulerSystem,
    DiscreteSpace,
    assemble_jacobian,
    assemble_residual,
    evaluate_output,
    evaluate_spacetime_output,
    l2_error,
    output_linearization,
    solve_primal,
    time_march,
)
from .error import (
    TruthTooSmall,
    anisotropy_split,
    build_fine_pair,
    effectivity,
    estimate,
    fine_truth,
    primal_estimate,
    unsteady_estimate,
    unsteady_fine_truth,
)
from .io import fmt
from .mesh import uniform_mesh
from .numerics import matvec, matvec_transpose
from .problems import CATALOG, OutputFunctional


def loglog_slope(h, err):
    """Least-squares slope of log|err| against log h; None if any error is at round-off level."""
    err = np.abs(np.asarray(err, dtype=float))
    if len(err) < 2 or np.any(~np.isfinite(err)) or np.any(err < 1e-14):
        return None
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def study_rows(cfg):
    """One dict per mesh in ``cfg.study['meshes']``."""
    problem, output = cfg.problem, cfg.output
    if not problem.steady:
        raise ValidationError("study", "convergence studies cover steady problems")
    if cfg.J_exact is None:
        raise ValidationError("study", "needs a catalog case and output with a known exact value")
    rows = []
    for n in cfg.study["meshes"]:
        space = DiscreteSpace(uniform_mesh(problem.x_L, problem.x_R, n, cfg.p))
        pair = build_fine_pair(
            space, problem, output,
            fine=cfg.fine_space, adjoint_mode=cfg.adjoint_mode,
            smoothing_iterations=cfg.smoothing_iterations, surrogate=cfg.surrogate,
        )
        J_H = evaluate_output(space, output, pair.U_H, problem)
        truth = fine_truth(pair, problem, output)
        row = {
            "n_elem": n,
            "h": (problem.x_R - problem.x_L) / n,
            "dof": space.n_dofs,
            "J_H": J_H,
            "true_error": cfg.J_exact - J_H,
            "fine_truth": truth,
        }
        for form in cfg.study["forms"]:
            rep = estimate(pair, problem, output, form)
            try:
                eff = effectivity(rep, truth)
            except TruthTooSmall:
                eff = None
            row[f"dJ_{form}"] = rep.estimate
            row[f"J_corrected_{form}"] = J_H + rep.estimate
            row[f"effectivity_{form}"] = eff
            row[f"corrected_error_{form}"] = cfg.J_exact - (J_H + rep.estimate)
            row[f"remainder_{form}"] = truth - rep.estimate
        rows.append(row)
    return rows


def error_columns(forms):
    cols = ["true_error"]
    for f in forms:
        cols += [f"corrected_error_{f}", f"remainder_{f}"]
    return cols


def run_study(cfg, path=None):
    """Convergence CSV: one row per mesh, then ``slope,<column>,<value>`` footer rows."""
    rows = study_rows(cfg)
    header = list(rows[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([r[k] if k in ("n_elem", "dof") else fmt(r[k]) for k in header])
    h = [r["h"] for r in rows]
    for col in error_columns(cfg.study["forms"]):
        w.writerow(["slope", col, fmt(loglog_slope(h, [r[col] for r in rows]))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    return text


# ------------------------------------------------------------------ verify


def _rng():
    return np.random.default_rng(int(os.environ.get("DWRLAB_SEED", "0")))


def _linear_pairs(kinds=("advection", "diffusion")):
    for name, case in CATALOG.items():
        if case.problem.kind in kinds:
            for oname, out in case.outputs.items():
                if out.linear:
                    yield name, case.problem, out


def check_transpose_identity():
    rng = _rng()
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 51))
        A = sp.random(n, n, density=0.3, random_state=rng, format="csr") + sp.eye(n)
        U, V = rng.standard_normal(n), rng.standard_normal(n)
        lhs = np.dot(matvec(A, U), V)
        rhs = np.dot(U, matvec_transpose(A, V))
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    return worst


def check_inverse_rows():
    worst = 0.0
    for _, problem, out in _linear_pairs():
        for n in (8, 16):
            for p in (1, 2):
                space = DiscreteSpace(uniform_mesh(problem.x_L, problem.x_R, n, p))
                psi = solve_steady_adjoint(space, problem, out).values
                ref = inverse_row_oracle(space, problem, out).values
                worst = max(worst, np.max(np.abs(psi - ref)) / max(1.0, np.max(np.abs(ref))))
    return worst


def check_dual_form_steady():
    worst = 0.0
    for _, problem, out in _linear_pairs():
        for p in (1, 2):
            space = DiscreteSpace(uniform_mesh(problem.x_L, problem.x_R, 8, p))
            U = solve_primal(space, problem)
            J = evaluate_output(space, out, U, problem)
            psi = solve_steady_adjoint(space, problem, out)
            worst = max(worst, abs(dual_form_output(space, problem, out, psi) - J))
    return worst


def check_dual_form_unsteady():
    worst = 0.0
    for name, case in CATALOG.items():
        if case.problem.steady:
            continue
        problem = case.problem
        space = DiscreteSpace(uniform_mesh(problem.x_L, problem.x_R, 8, 1))
        sol = time_march(space, problem)
        windowed = OutputFunctional(g=lambda x, t=0.0: np.cos(t) * np.asarray(x), window=(0.0, problem.T))
        outs = list(case.outputs.values()) + [windowed]
        for out in outs:
            J = evaluate_spacetime_output(sol, problem, out)
            adj = solve_unsteady_adjoint(sol, problem, out)
            worst = max(worst, abs(unsteady_dual_form_output(sol, problem, out, adj) - J))
    return worst


def _fd_rel(apply_jac, func, U, rng, eps=1e-4):
    worst = 0.0
    for _ in range(20):
        d = rng.standard_normal(len(U))
        fd = (func(U + eps * d) - func(U - eps * d)) / (2 * eps)
        exact = apply_jac(d)
        worst = max(worst, np.max(np.abs(fd - exact)) / max(1e-12, np.max(np.abs(exact))))
    return worst


def check_fd_jacobian():
    rng = _rng()
    worst = 0.0
    for name, case in CATALOG.items():
        problem = case.problem
        if not problem.steady:
            continue
        space = DiscreteSpace(uniform_mesh(problem.x_L, problem.x_R, 6, 2))
        U = solve_primal(space, problem) + 0.1 * rng.standard_normal(space.n_dofs)
        J = assemble_jacobian(space, problem, U)
        worst = max(worst, _fd_rel(lambda d: J @ d, lambda V: assemble_residual(space, problem, V), U, rng))
    return worst


def check_fd_output():
    rng = _rng()
    worst = 0.0
    for name, case in CATALOG.items():
        problem = case.problem
        if not problem.steady:
            continue
        space = DiscreteSpace(uniform_mesh(problem.x_L, problem.x_R, 6, 2))
        U = solve_primal(space, problem) + 0.1 * rng.standard_normal(space.n_dofs)
        for out in case.outputs.values():
            G = output_linearization(space, out, U, problem)
            f = lambda V: np.array([evaluate_output(space, out, V, problem)])
            worst = max(worst, _fd_rel(lambda d: np.array([G @ d]), f, U, rng))
    return worst


def _advection_diffusion():
    problem = CATALOG["steady_sine"].problem
    return replace(problem, N_t=10), CATALOG["steady_sine"].outputs["mean"]


def check_monolithic_adjoint():
    problem, out = _advection_diffusion()
    sol = time_march(DiscreteSpace(uniform_mesh(0.0, 1.0, 8, 1)), problem)
    march = np.concatenate(solve_unsteady_adjoint(sol, problem, out).adjoints)
    mono = np.concatenate(monolithic_spacetime_adjoint(sol, problem, out).adjoints)
    return float(np.max(np.abs(march - mono)) / max(1.0, np.max(np.abs(mono))))


def check_monolithic_primal():
    problem, _ = _advection_diffusion()
    sol = time_march(DiscreteSpace(uniform_mesh(0.0, 1.0, 8, 1)), problem)
    mono = monolithic_primal(sol.system)
    return float(max(np.max(np.abs(a - b)) for a, b in zip(sol.states, mono)))


def check_checkpointing():
    problem, out = _advection_diffusion()
    space = DiscreteSpace(uniform_mesh(0.0, 1.0, 8, 1))
    full = np.concatenate(solve_unsteady_adjoint(time_march(space, problem), problem, out).adjoints)
    worst = 0.0
    for k in (1, 3, problem.N_t):
        ck = np.concatenate(solve_unsteady_adjoint_checkpointed(problem, out, space, interval=k).adjoints)
        worst = max(worst, float(np.max(np.abs(ck - full))))
    return worst


def one_dof_adjoint(lam, dt, n_steps):
    """Adjoint of u' + lam u = 0 under backward Euler, output u(T), one unknown."""
    lhs = [np.array([[1.0 / dt + lam]])] * n_steps
    coupling = [np.array([[1.0 / dt]])] * n_steps
    system = BackwardEulerSystem(lhs, coupling, [np.zeros(1)] * n_steps, np.ones(1))
    loads = [np.zeros(1)] * (n_steps - 1) + [np.ones(1)]

    def loads_fn(k, U):
        return loads[k]

    psi, _ = checkpointed_adjoint(system, loads_fn, 1)
    return np.array([p[0] for p in psi])


def check_one_dof():
    worst = 0.0
    for lam in (0.0, 0.7, 3.0):
        n, dt = 10, 0.1
        psi = one_dof_adjoint(lam, dt, n)
        m = np.arange(1, n + 1)
        worst = max(worst, float(np.max(np.abs(psi - dt * (1 + lam * dt) ** (-(n - m + 1.0))))))
    return worst


def _pairs_linear():
    for _, problem, out in _linear_pairs():
        space = DiscreteSpace(uniform_mesh(problem.x_L, problem.x_R, 6, 1))
        for fine in ("p_enrich", "h_refine"):
            yield problem, out, build_fine_pair(space, problem, out, fine=fine)


def check_linear_exactness():
    return max(abs(primal_estimate(pair, pr).estimate - fine_truth(pair, pr, out)) for pr, out, pair in _pairs_linear())


def check_effectivity():
    worst = 0.0
    for pr, out, pair in _pairs_linear():
        try:
            worst = max(worst, abs(effectivity(primal_estimate(pair, pr), fine_truth(pair, pr, out)) - 1.0))
        except TruthTooSmall:
            pass
    return worst


def check_galerkin_orthogonality():
    worst = 0.0
    for pr, out, pair in _pairs_linear():
        a = estimate(pair, pr, out, "primal").estimate
        b = estimate(pair, pr, out, "fe_orthogonalized").estimate
        z = primal_estimate(pair, pr, psi=pair.psi_hH).estimate
        worst = max(worst, abs(a - b), abs(z))
    return worst


def check_primal_dual():
    worst = 0.0
    for pr, out, pair in _pairs_linear():
        worst = max(worst, abs(estimate(pair, pr, out, "primal").estimate - estimate(pair, pr, out, "dual").estimate))
    return worst


def check_third_order_quadratic():
    case = CATALOG["linear_advection"]
    pr, out = case.problem, case.outputs["flux"]
    worst = 0.0
    for p in (1, 2):
        pair = build_fine_pair(DiscreteSpace(uniform_mesh(0.0, 1.0, 5, p)), pr, out)
        worst = max(worst, abs(estimate(pair, pr, out, "third_order").estimate - fine_truth(pair, pr, out)))
    return worst


def check_unsteady_localization():
    problem, out = _advection_diffusion()
    sol = time_march(DiscreteSpace(uniform_mesh(0.0, 1.0, 8, 1)), problem)
    rep = unsteady_estimate(sol, problem, out)
    beta_gap = float(np.max(np.abs(rep.beta_space + rep.beta_time - 1.0)))
    return max(abs(float(np.sum(rep.contributions)) - rep.estimate), beta_gap)


def check_unsteady_exactness():
    worst = 0.0
    for name in ("steady_sine", "temporal_ramp", "late_inflow"):
        case = CATALOG[name]
        problem = replace(case.problem, N_t=min(case.problem.N_t, 8))
        sol = time_march(DiscreteSpace(uniform_mesh(0.0, 1.0, 6, 1)), problem)
        for out in case.outputs.values():
            rep = unsteady_estimate(sol, problem, out, with_anisotropy=False)
            worst = max(worst, abs(rep.estimate - unsteady_fine_truth(sol, problem, out)))
    return worst


def check_adjoint_convergence():
    """Smallest (measured L2 rate - p) over adjoints not represented exactly."""
    worst = math.inf
    meshes = (8, 16, 32, 64)
    for name, case in CATALOG.items():
        if case.problem.kind not in ("advection", "diffusion"):
            continue
        for oname, psi in case.adjoints.items():
            if oname == "point":
                continue
            for p in (1, 2):
                errs = []
                for n in meshes:
                    space = DiscreteSpace(uniform_mesh(0.0, 1.0, n, p))
                    errs.append(l2_error(space, solve_steady_adjoint(space, case.problem, case.outputs[oname]).values, psi))
                if errs[-1] < 1e-9:
                    continue
                worst = min(worst, loglog_slope([1.0 / n for n in meshes], errs) - p)
    return worst


def check_point_adjoint_downstream():
    """Max |psi_h| on elements entirely downstream of the output point, finest mesh."""
    case = CATALOG["smooth_advection"]
    out = case.outputs["point"]
    worst = 0.0
    for p in (1, 2):
        space = DiscreteSpace(uniform_mesh(0.0, 1.0, 64, p))
        vals = space.quadrature_values(solve_steady_adjoint(space, case.problem, out).values)
        down = space.mesh.boundaries[:-1] >= out.x_p
        worst = max(worst, float(np.max(np.abs(vals[down]))))
    return worst


def check_anisotropy_dominance():
    """Smaller of the mean dominant fractions on a space-dominated and a time-dominated case."""
    fractions = []
    for name, dominant in (("steady_sine", "space"), ("temporal_ramp", "time")):
        case = CATALOG[name]
        sol = time_march(DiscreteSpace(uniform_mesh(0.0, 1.0, 8, 1)), case.problem)
        beta = np.concatenate(anisotropy_split(sol, case.problem, case.outputs["mean"])[0])
        fractions.append(float(np.mean(beta if dominant == "space" else 1.0 - beta)))
    return min(fractions)


CHECKS = (
    ("transpose_identity", 1e-12, check_transpose_identity),
    ("adjoint_inverse_rows", 1e-10, check_inverse_rows),
    ("dual_form_steady", 1e-11, check_dual_form_steady),
    ("dual_form_unsteady", 1e-11, check_dual_form_unsteady),
    ("fd_jacobian", 1e-6, check_fd_jacobian),
    ("fd_output_linearization", 1e-6, check_fd_output),
    ("monolithic_adjoint", 1e-10, check_monolithic_adjoint),
    ("monolithic_primal", 1e-10, check_monolithic_primal),
    ("checkpointed_adjoint", 1e-14, check_checkpointing),
    ("one_dof_adjoint", 1e-13, check_one_dof),
    ("linear_exactness", 1e-10, check_linear_exactness),
    ("effectivity", 1e-9, check_effectivity),
    ("galerkin_orthogonality", 1e-11, check_galerkin_orthogonality),
    ("primal_dual_equivalence", 1e-10, check_primal_dual),
    ("third_order_quadratic_output", 1e-10, check_third_order_quadratic),
    ("unsteady_localization", 1e-12, check_unsteady_localization),
    ("unsteady_exactness", 1e-10, check_unsteady_exactness),
    ("adjoint_l2_rate_minus_p", 0.7, check_adjoint_convergence, "min"),
    ("point_adjoint_downstream", 0.05, check_point_adjoint_downstream),
    ("anisotropy_dominant_fraction", 0.8, check_anisotropy_dominance, "min"),
)


def run_verify(names=None):
    """Run every oracle check; returns (report text, all passed).

    Most checks measure a discrepancy that must not exceed the tolerance;
    checks tagged "min" measure a rate or fraction that must reach it.
    """
    lines, ok = [], True
    for name, tol, fn, *kind in CHECKS:
        if names is not None and name not in names:
            continue
        try:
            measured = float(fn())
        except Exception as exc:  # a crashing check is a failed check
            measured = math.nan
            lines.append(f"# {name}: {type(exc).__name__}: {exc}")
        passed = measured >= tol if kind == ["min"] else measured <= tol
        ok = ok and passed
        lines.append(f"CHECK {name} {measured:.3e} {tol:.3g} {'PASS' if passed else 'FAIL'}")
    return "\n".join(lines) + "\n", ok
