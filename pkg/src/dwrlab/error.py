"""Adjoint-weighted residual estimates of the output error J_h(U_h) - J_H(U_H).

The fine space is the coarse space enriched by one polynomial order (default)
or uniformly bisected. All pairings are plain dot products between residual
vectors (which live in the dual of the test space) and adjoint coefficients.
"""
from dataclasses import dataclass, field

import numpy as np

from .adjoint import (
    backward_march,
    block_jacobi_adjoint,
    rhs_sign,
    solve_steady_adjoint,
)
from .discretization import (
    DiscreteSpace,
    SpaceTimeSolution,
    evaluate_spacetime_output,
    assemble_jacobian,
    assemble_residual,
    build_system,
    evaluate_output,
    l2_project,
    output_linearization,
    output_time_weights,
    solve_primal,
    _linear_output_parts,
)
from .mesh import build_injection, enrich_p, refine_h
from .numerics import DimensionMismatch

FORMS = ("primal", "fe_orthogonalized", "dual", "third_order")


class TruthTooSmall(ValueError):
    pass


@dataclass
class ErrorReport:
    """Global estimate plus signed per-cell contributions.

    Steady reports have one entry per coarse element. Unsteady reports have
    one entry per (element, step) cell, listed step by step, with ``steps``
    giving the step index and ``beta_space`` the spatial share.
    """

    estimate: float
    contributions: np.ndarray
    form: str
    elements: np.ndarray = None
    steps: np.ndarray = None
    beta_space: np.ndarray = None
    effectivity: float = None

    def __post_init__(self):
        self.contributions = np.asarray(self.contributions, dtype=float)
        if self.elements is None:
            self.elements = np.arange(len(self.contributions))

    @property
    def indicators(self):
        return np.abs(self.contributions)

    @property
    def beta_time(self):
        return None if self.beta_space is None else 1.0 - self.beta_space


def fine_mesh(mesh, fine="p_enrich"):
    if fine == "p_enrich":
        return enrich_p(mesh, 1)
    if fine == "h_refine":
        return refine_h(mesh, np.ones(mesh.n_elem, dtype=bool))
    raise ValueError(f"unknown fine space {fine!r}")


def fine_space(coarse, fine="p_enrich"):
    return DiscreteSpace(fine_mesh(coarse.mesh, fine), penalty_mesh=coarse.mesh)


def coarse_parent(coarse_mesh, fine_mesh_):
    return coarse_mesh.locate(fine_mesh_.centers, side="right")


def localize(space, weighted, parent=None, n_coarse=None):
    """Sum a per-DOF vector over each element, then over coarse parents."""
    per_elem = np.add.reduceat(weighted, space.offsets[:-1]) if space.n_dofs else np.zeros(0)
    if parent is None:
        return per_elem
    return np.bincount(parent, weights=per_elem, minlength=n_coarse)


@dataclass
class FinePair:
    coarse: DiscreteSpace
    fine: DiscreteSpace
    injection: object
    U_H: np.ndarray
    U_hH: np.ndarray
    psi_H: np.ndarray
    psi_hH: np.ndarray
    psi_h: np.ndarray
    parent: np.ndarray
    U_h: np.ndarray = None
    psi_h_at_U_h: np.ndarray = None
    extras: dict = field(default_factory=dict)


def smoothed_state(space, problem, U_start, sweeps=5):
    """Block-Jacobi preconditioned Richardson (linear) or Newton-Jacobi (Burgers) sweeps."""
    U = np.array(U_start, dtype=float)
    for _ in range(sweeps):
        R = assemble_residual(space, problem, U)
        J = assemble_jacobian(space, problem, U)
        for e in range(space.n_elem):
            s = space.dofs(e)
            U[s] -= np.linalg.solve(J[s, s].toarray(), R[s])
    return U


def build_fine_pair(
    coarse,
    problem,
    output,
    U_H=None,
    fine="p_enrich",
    adjoint_mode="exact",
    smoothing_iterations=5,
    surrogate="exact",
):
    """Everything the steady estimates need on the fine space."""
    if U_H is None:
        U_H = solve_primal(coarse, problem)
    fspace = fine_space(coarse, fine)
    inj = build_injection(coarse.mesh, fspace.mesh)
    U_hH = inj(U_H)
    psi_H = solve_steady_adjoint(coarse, problem, output, U_H).values
    psi_hH = inj(psi_H)
    if adjoint_mode == "exact":
        psi_h = solve_steady_adjoint(fspace, problem, output, U_hH).values
    elif adjoint_mode == "smoothed":
        J = assemble_jacobian(fspace, problem, U_hH)
        G = rhs_sign() * output_linearization(fspace, output, U_hH, problem)
        psi_h = block_jacobi_adjoint(fspace, J, G, psi_hH, smoothing_iterations)
    else:
        raise ValueError(f"unknown adjoint mode {adjoint_mode!r}")
    if surrogate == "exact":
        U_h = solve_primal(fspace, problem, U_init=U_hH)
    elif surrogate == "smoothed":
        U_h = smoothed_state(fspace, problem, U_hH, smoothing_iterations)
    elif surrogate == "none":
        U_h = None
    else:
        raise ValueError(f"unknown surrogate {surrogate!r}")
    if U_h is None:
        psi_h_at_U_h = None
    elif problem.linear and output.linear:
        psi_h_at_U_h = psi_h
    else:
        psi_h_at_U_h = solve_steady_adjoint(fspace, problem, output, U_h).values
    return FinePair(
        coarse, fspace, inj, U_H, U_hH, psi_H, psi_hH, psi_h,
        coarse_parent(coarse.mesh, fspace.mesh), U_h, psi_h_at_U_h,
    )


def _report(pair, weighted, form):
    contrib = localize(pair.fine, weighted, pair.parent, pair.coarse.n_elem)
    return ErrorReport(float(np.sum(weighted)), contrib, form)


def _check(pair, *vecs):
    for v in vecs:
        if v is None or np.shape(v) != (pair.fine.n_dofs,):
            raise DimensionMismatch("vector does not conform to the fine space")


def primal_estimate(pair, problem, psi=None):
    """-Psi_h . R_h(U_h^H), localized element by element."""
    psi = pair.psi_h if psi is None else psi
    _check(pair, psi)
    R = assemble_residual(pair.fine, problem, pair.U_hH)
    return _report(pair, -psi * R, "primal")


def fe_orthogonalized_estimate(pair, problem, psi=None):
    """-(Psi_h - Psi_h^H) . R_h(U_h^H): same total, different local indicators."""
    psi = pair.psi_h if psi is None else psi
    _check(pair, psi)
    R = assemble_residual(pair.fine, problem, pair.U_hH)
    return _report(pair, -(psi - pair.psi_hH) * R, "fe_orthogonalized")


def adjoint_residual(space, problem, output, psi, U):
    """R* = J(U)^T psi - G(U)."""
    J = assemble_jacobian(space, problem, U)
    G = output_linearization(space, output, U, problem)
    return J.T @ np.asarray(psi, dtype=float) - G


def dual_estimate(pair, problem, output, u_surrogate=None):
    """-R*(Psi_h^H) . (u - U_h^H) with u the fine-state surrogate."""
    u = pair.U_h if u_surrogate is None else u_surrogate
    _check(pair, u)
    Rstar = adjoint_residual(pair.fine, problem, output, pair.psi_hH, pair.U_hH)
    return _report(pair, -Rstar * (u - pair.U_hH), "dual")


def third_order_estimate(pair, problem, output, u_surrogate=None, psi_surrogate=None):
    """Average of the primal and dual forms.

    -1/2 (Psi - Psi_h^H) . R_h(U_h^H) - 1/2 R*(Psi_h^H) . (u - U_h^H),
    where Psi is the fine adjoint linearized about the fine-state surrogate u.
    """
    u = pair.U_h if u_surrogate is None else u_surrogate
    psi = pair.psi_h_at_U_h if psi_surrogate is None else psi_surrogate
    _check(pair, u, psi)
    R = assemble_residual(pair.fine, problem, pair.U_hH)
    Rstar = adjoint_residual(pair.fine, problem, output, pair.psi_hH, pair.U_hH)
    weighted = -0.5 * (psi - pair.psi_hH) * R - 0.5 * Rstar * (u - pair.U_hH)
    return _report(pair, weighted, "third_order")


def estimate(pair, problem, output, form="primal"):
    if form == "primal":
        return primal_estimate(pair, problem)
    if form == "fe_orthogonalized":
        return fe_orthogonalized_estimate(pair, problem)
    if form == "dual":
        return dual_estimate(pair, problem, output)
    if form == "third_order":
        return third_order_estimate(pair, problem, output)
    raise ValueError(f"unknown estimate form {form!r}")


def effectivity(report, truth, threshold=1e-10):
    """Estimate over truth; undefined when the truth is at round-off level."""
    if abs(truth) <= threshold:
        raise TruthTooSmall(f"|truth| = {abs(truth):.3g} is below {threshold:g}")
    return report.estimate / truth


def fine_truth(pair, problem, output):
    """J_h(U_h) - J_H(U_H) from an actual fine solve."""
    U_h = pair.U_h if pair.U_h is not None else solve_primal(pair.fine, problem, U_init=pair.U_hH)
    return evaluate_output(pair.fine, output, U_h, problem) - evaluate_output(
        pair.coarse, output, pair.U_H, problem
    )


# ------------------------------------------------------------------ unsteady


@dataclass
class SpaceTimeRefinement:
    """Fine system obtained by refining a coarse space-time discretization."""

    times: np.ndarray
    spaces: list
    system: object
    states: list
    parent_step: np.ndarray
    parents: list
    injections: list


def refine_spacetime(solution, problem, refine_space=True, refine_time=True, fine="p_enrich"):
    """Fine space-time discretization and the injected coarse trajectory.

    Time refinement bisects every step; both halves reuse the coarse state of
    the parent step (piecewise constant injection in time). The fine initial
    state is the projection of u0 onto the fine space of the first step.
    """
    fine_of = {}
    for space in solution.spaces:
        if id(space) not in fine_of:
            if refine_space:
                fs = fine_space(space, fine)
            else:
                fs = space
            fine_of[id(space)] = (fs, build_injection(space.mesh, fs.mesh), coarse_parent(space.mesh, fs.mesh))
    t = solution.times
    if refine_time:
        times = np.empty(2 * len(t) - 1)
        times[0::2] = t
        times[1::2] = 0.5 * (t[:-1] + t[1:])
        parent_step = np.repeat(np.arange(solution.n_steps), 2)
    else:
        times = t.copy()
        parent_step = np.arange(solution.n_steps)
    spaces, parents, injections, states = [], [], [], []
    for k in parent_step:
        fs, inj, par = fine_of[id(solution.spaces[k])]
        spaces.append(fs)
        parents.append(par)
        injections.append(inj)
    U0 = l2_project(spaces[0], problem.u0, times[0])
    system = build_system(problem, spaces, times, U0)
    states = [U0] + [injections[j](solution.states[k + 1]) for j, k in enumerate(parent_step)]
    return SpaceTimeRefinement(times, spaces, system, states, parent_step, parents, injections)


def _element_output(space, output, U, problem, t):
    """Per-element split of the spatial output J(U), summing to J(U)."""
    G, J0 = _linear_output_parts(space, output, problem, t)
    per = localize(space, G * U)
    per[0] += J0
    if output.flux:
        n = space.n_elem
        um = space.ref(n - 1).phi_right @ U[space.dofs(n - 1)]
        per[-1] += 0.5 * um * um
    return per


def _spacetime_contributions(solution, problem, output, ref):
    """Signed (element, step) contributions of the fine-space estimate, per coarse step."""
    w_f = output_time_weights(ref.times, output)
    loads = []
    for j, space in enumerate(ref.spaces):
        if w_f[j] == 0.0:
            loads.append(np.zeros(space.n_dofs))
        else:
            loads.append(w_f[j] * output_linearization(space, output, ref.states[j + 1], problem, ref.times[j + 1]))
    psi = backward_march(ref.system, loads)
    res = ref.system.residual(ref.states)
    contrib = [np.zeros(s.n_elem) for s in solution.spaces]
    for j, k in enumerate(ref.parent_step):
        n_c = solution.spaces[k].n_elem
        contrib[k] += localize(ref.spaces[j], -psi[j] * res[j], ref.parents[j], n_c)
        if w_f[j] != 0.0:
            per = _element_output(ref.spaces[j], output, ref.states[j + 1], problem, ref.times[j + 1])
            contrib[k] += w_f[j] * np.bincount(ref.parents[j], weights=per, minlength=n_c)
    w_c = output_time_weights(solution.times, output)
    for k, space in enumerate(solution.spaces):
        if w_c[k] != 0.0:
            contrib[k] -= w_c[k] * _element_output(space, output, solution.states[k + 1], problem, solution.times[k + 1])
    return contrib, psi


def anisotropy_split(solution, problem, output, fine="p_enrich"):
    """Per-cell spatial share of the error from two semi-refined estimates.

    eps_space comes from refining only in space, eps_time from refining only
    in time; beta_space = eps_space / (eps_space + eps_time), with 1/2 when both
    vanish, and beta_time = 1 - beta_space.
    """
    c_s, _ = _spacetime_contributions(solution, problem, output, refine_spacetime(solution, problem, True, False, fine))
    c_t, _ = _spacetime_contributions(solution, problem, output, refine_spacetime(solution, problem, False, True, fine))
    betas = []
    for s, t in zip(c_s, c_t):
        es, et = np.abs(s), np.abs(t)
        tot = es + et
        b = np.full_like(tot, 0.5)
        np.divide(es, tot, out=b, where=tot > 0.0)
        betas.append(b)
    return betas, c_s, c_t


def unsteady_estimate(solution, problem, output, fine="p_enrich", with_anisotropy=True):
    """Space-time primal estimate on the fully refined space, localized to (element, step) cells."""
    ref = refine_spacetime(solution, problem, True, True, fine)
    contrib, _ = _spacetime_contributions(solution, problem, output, ref)
    steps = np.concatenate([np.full(len(c), k) for k, c in enumerate(contrib)])
    elements = np.concatenate([np.arange(len(c)) for c in contrib])
    flat = np.concatenate(contrib)
    beta = None
    if with_anisotropy:
        beta = np.concatenate(anisotropy_split(solution, problem, output, fine)[0])
    return ErrorReport(float(np.sum(flat)), flat, "primal", elements, steps, beta)


def unsteady_fine_truth(solution, problem, output, fine="p_enrich"):
    ref = refine_spacetime(solution, problem, True, True, fine)
    states = ref.system.march()
    fine_sol = SpaceTimeSolution(ref.times, ref.spaces, states, ref.system)
    return evaluate_spacetime_output(fine_sol, problem, output) - evaluate_spacetime_output(solution, problem, output)
