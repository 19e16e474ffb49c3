"""Marking by figure of merit and the steady and unsteady adaptive loops."""
from dataclasses import dataclass, field
import math

import numpy as np

from .discretization import DiscreteSpace, assemble_residual, evaluate_output, evaluate_spacetime_output, solve_primal, time_march
from .error import build_fine_pair, fe_orthogonalized_estimate, localize, primal_estimate, unsteady_estimate
from .mesh import MAX_ORDER, Mesh1D, coarsen_h, enrich_p, refine_h, uniform_mesh

REFINE, KEEP, COARSEN = 1, 0, -1


class InvalidFraction(ValueError):
    pass


class MaxIterations(RuntimeError):
    pass


def figure_of_merit(indicators, dof_costs):
    """Error per added degree of freedom."""
    ind = np.asarray(indicators, dtype=float)
    cost = np.asarray(dof_costs, dtype=float)
    if np.any(cost <= 0):
        raise ValueError("refinement costs must be positive")
    return ind / cost


@dataclass
class AdaptationPlan:
    marks: np.ndarray
    scores: np.ndarray
    time_marks: np.ndarray = None
    mode: str = "h"

    @property
    def refine(self):
        return np.nonzero(self.marks == REFINE)[0]

    @property
    def coarsen(self):
        return np.nonzero(self.marks == COARSEN)[0]


def mark_fixed_fraction(scores, refine_frac, coarsen_frac, mode="h", weights=None):
    """Mark the top scores for refinement and the bottom of the rest for coarsening.

    With unit weights this marks the top ceil(rf n) entities and the bottom
    floor(cf n) of the remainder. ``weights`` measures each entity in units of
    the marked quantity (a time step counts as all of its space-time
    elements): refinement takes entities in score order until ceil(rf W) units
    are covered, coarsening never exceeds floor(cf W) units. Ties are broken
    by the lower index in both directions.
    """
    if not (0.0 <= refine_frac and 0.0 <= coarsen_frac and refine_frac + coarsen_frac <= 1.0):
        raise InvalidFraction(f"invalid fractions ({refine_frac}, {coarsen_frac})")
    s = np.asarray(scores, dtype=float)
    n = len(s)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    total = float(np.sum(w))
    ref_target = math.ceil(refine_frac * total - 1e-9)
    coa_target = math.floor(coarsen_frac * total + 1e-9)
    marks = np.zeros(n, dtype=int)
    idx = np.arange(n)
    order_desc = np.lexsort((idx, -s))
    covered, taken = 0.0, 0
    for i in order_desc:
        if covered >= ref_target:
            break
        marks[i] = REFINE
        covered += w[i]
        taken += 1
    rest = order_desc[taken:]
    order_asc = rest[np.lexsort((rest, s[rest]))]
    covered = 0.0
    for i in order_asc:
        if covered + w[i] > coa_target:
            break
        marks[i] = COARSEN
        covered += w[i]
    return AdaptationPlan(marks, s, mode=mode)


@dataclass
class IterationRecord:
    iteration: int
    dof: int
    J: float
    dJ_est: float
    J_corrected: float
    true_error: float = None
    refined: list = field(default_factory=list)


@dataclass
class AdaptiveHistory:
    records: list = field(default_factory=list)
    meshes: list = field(default_factory=list)
    status: str = "running"

    def __len__(self):
        return len(self.records)

    @property
    def final(self):
        return self.records[-1]


def spatial_costs(mesh, mode):
    if mode == "h":
        return (mesh.orders + 1).astype(float)
    return np.ones(mesh.n_elem)


def apply_spatial_marks(mesh, marks, mode):
    marks = np.asarray(marks)
    if mode == "h":
        if np.any(marks == COARSEN):
            # coarsening acts on the current mesh first; refinement then uses surviving marks
            kept = mesh
            refine = marks == REFINE
            merged = coarsen_h(mesh, marks == COARSEN)
            if merged.n_elem != mesh.n_elem:
                # carry refine marks through the merge by lineage
                ref_paths = {mesh.lineage[e] for e in np.nonzero(refine)[0]}
                refine = np.array([path in ref_paths for path in merged.lineage])
                kept = merged
            return refine_h(kept, refine)
        return refine_h(mesh, marks == REFINE)
    if mode == "p":
        inc = np.where(marks == REFINE, 1, 0) - np.where(marks == COARSEN, 1, 0)
        new = np.clip(mesh.orders + inc, 0, MAX_ORDER)
        return enrich_p(mesh, new - mesh.orders)
    raise ValueError(f"unknown adaptation mode {mode!r}")


def adapt_loop_steady(
    problem,
    output,
    mesh,
    mode="h",
    refine_fraction=0.2,
    coarsen_fraction=0.0,
    tol=1e-8,
    max_iter=12,
    dof_cap=200000,
    fine="p_enrich",
    indicator="dwr",
    J_exact=None,
    raise_on_max=False,
):
    """Solve, estimate, correct, localize, mark, refine; repeat.

    Iteration i records the state on mesh i. The loop stops when
    |dJ_est| <= tol (status "converged"), when the DOF count reaches the
    cap ("dof_cap"), or after max_iter refinements ("max_iter").
    """
    history = AdaptiveHistory()
    for it in range(max_iter + 1):
        space = DiscreteSpace(mesh)
        U_H = solve_primal(space, problem)
        J_H = evaluate_output(space, output, U_H, problem)
        pair = build_fine_pair(space, problem, output, U_H, fine=fine, surrogate="none")
        dJ = primal_estimate(pair, problem).estimate
        local = fe_orthogonalized_estimate(pair, problem)
        if indicator == "residual":
            R = assemble_residual(pair.fine, problem, pair.U_hH)
            ind = localize(pair.fine, np.abs(R), pair.parent, space.n_elem)
        else:
            ind = local.indicators
        true_error = None if J_exact is None else J_exact - J_H
        rec = IterationRecord(it, space.n_dofs, J_H, dJ, J_H + dJ, true_error)
        history.records.append(rec)
        history.meshes.append(mesh)
        if abs(dJ) <= tol:
            history.status = "converged"
            return history
        if space.n_dofs >= dof_cap:
            history.status = "dof_cap"
            return history
        if it == max_iter:
            break
        scores = figure_of_merit(ind, spatial_costs(mesh, mode))
        if mode == "p":
            scores = np.where(mesh.orders >= MAX_ORDER, 0.0, scores)
        plan = mark_fixed_fraction(scores, refine_fraction, coarsen_fraction, mode)
        rec.refined = [float(mesh.centers[e]) for e in plan.refine]
        mesh = apply_spatial_marks(mesh, plan.marks, mode)
    history.status = "max_iter"
    if raise_on_max:
        raise MaxIterations(f"|dJ_est| = {abs(history.final.dJ_est):.3g} > {tol:g} after {max_iter} iterations")
    return history


def uniform_refinement_history(problem, output, n_elem, p, levels, J_exact=None):
    """Reference sequence of uniformly bisected meshes."""
    history = AdaptiveHistory(status="uniform")
    n = n_elem
    for it in range(levels):
        mesh = uniform_mesh(problem.x_L, problem.x_R, n, p)
        space = DiscreteSpace(mesh)
        U = solve_primal(space, problem)
        J = evaluate_output(space, output, U, problem)
        err = None if J_exact is None else J_exact - J
        history.records.append(IterationRecord(it, space.n_dofs, J, float("nan"), float("nan"), err))
        history.meshes.append(mesh)
        n *= 2
    return history


# ------------------------------------------------------------------ unsteady


@dataclass
class SpaceTimeMesh:
    """Time grid (a p=0 Mesh1D, so steps can be bisected and merged) plus one spatial mesh per step."""

    time: Mesh1D
    meshes: list

    @property
    def n_steps(self):
        return self.time.n_elem

    def spaces(self):
        cache = {}
        out = []
        for m in self.meshes:
            if m not in cache:
                cache[m] = DiscreteSpace(m)
            out.append(cache[m])
        return out

    @property
    def dof(self):
        return int(sum(m.n_dofs for m in self.meshes))


def _apply_spacetime_plan(stm, cell_marks, step_marks, mode):
    meshes = [apply_spatial_marks(m, cm, mode) for m, cm in zip(stm.meshes, cell_marks)]
    step_marks = np.asarray(step_marks)
    # merges first (sibling pairs with both marked), then bisections
    time = stm.time
    merged_time = coarsen_h(time, step_marks == COARSEN)
    new_meshes, new_bisect = [], []
    k = 0
    for j in range(merged_time.n_elem):
        if merged_time.lineage[j] == time.lineage[k]:
            new_meshes.append(meshes[k])
            new_bisect.append(step_marks[k] == REFINE)
            k += 1
        else:
            a, b = meshes[k], meshes[k + 1]
            new_meshes.append(a if a.n_elem >= b.n_elem else b)
            new_bisect.append(False)
            k += 2
    new_time = refine_h(merged_time, np.array(new_bisect))
    final_meshes = []
    for m, bis in zip(new_meshes, new_bisect):
        final_meshes.extend([m, m] if bis else [m])
    return SpaceTimeMesh(new_time, final_meshes)


def adapt_loop_unsteady(
    problem,
    output,
    mesh,
    n_steps=None,
    mode="h",
    refine_fraction=0.35,
    coarsen_fraction=0.05,
    tol=1e-8,
    max_iter=12,
    dof_cap=200000,
    fine="p_enrich",
    J_exact=None,
    raise_on_max=False,
):
    """Space-time adaptation with per-step spatial meshes and bisect/merge in time.

    Candidates are the (element, step) cells, scored by their spatial share
    of the indicator per added DOF, and the steps, scored by the temporal
    share summed over the step per added DOF (one new step of N_k DOFs).
    """
    n_steps = problem.N_t if n_steps is None else n_steps
    time = Mesh1D(np.linspace(0.0, problem.T, n_steps + 1), [0] * n_steps)
    stm = SpaceTimeMesh(time, [mesh] * n_steps)
    history = AdaptiveHistory()
    for it in range(max_iter + 1):
        spaces = stm.spaces()
        sol = time_march(spaces, problem, stm.time.boundaries)
        J_H = evaluate_spacetime_output(sol, problem, output)
        report = unsteady_estimate(sol, problem, output, fine=fine)
        dJ = report.estimate
        true_error = None if J_exact is None else J_exact - J_H
        rec = IterationRecord(it, stm.dof, J_H, dJ, J_H + dJ, true_error)
        history.records.append(rec)
        history.meshes.append(stm)
        if abs(dJ) <= tol:
            history.status = "converged"
            return history
        if stm.dof >= dof_cap:
            history.status = "dof_cap"
            return history
        if it == max_iter:
            break
        eps = report.indicators
        beta = report.beta_space
        cell_scores = []
        step_scores = np.zeros(stm.n_steps)
        for k in range(stm.n_steps):
            sel = report.steps == k
            m = stm.meshes[k]
            cell_scores.append(figure_of_merit(eps[sel] * beta[sel], spatial_costs(m, mode)))
            step_scores[k] = np.sum(eps[sel] * (1.0 - beta[sel])) / m.n_dofs
        flat = np.concatenate(cell_scores + [step_scores])
        weights = np.concatenate([np.ones(len(c)) for c in cell_scores] + [[m.n_elem for m in stm.meshes]])
        plan = mark_fixed_fraction(flat, refine_fraction, coarsen_fraction, mode, weights)
        splits = np.cumsum([len(c) for c in cell_scores])
        parts = np.split(plan.marks, splits)
        cell_marks, step_marks = parts[:-1], parts[-1]
        t_mid = stm.time.centers
        rec.refined = [("space", float(t_mid[k])) for k in range(stm.n_steps) for _ in range(int(np.sum(cell_marks[k] == REFINE)))]
        rec.refined += [("time", float(t_mid[k])) for k in np.nonzero(step_marks == REFINE)[0]]
        stm = _apply_spacetime_plan(stm, cell_marks, step_marks, mode)
    history.status = "max_iter"
    if raise_on_max:
        raise MaxIterations(f"|dJ_est| = {abs(history.final.dJ_est):.3g} > {tol:g} after {max_iter} iterations")
    return history
