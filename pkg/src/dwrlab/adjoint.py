"""Discrete adjoints: steady transpose solves, the backward-in-time march,
its checkpointed variant, and two brute-force oracles.
"""
from dataclasses import dataclass
import hashlib
import math
import os

import numpy as np

from .discretization import (
    DiscreteSpace,
    assemble_jacobian,
    build_system,
    load_vector,
    output_linearization,
    output_time_weights,
    spatial_operator,
    uniform_times,
    _linear_output_parts,
)
from .numerics import LUFactor, as_sparse, solve

ORACLE_LIMIT = 400
MONOLITHIC_LIMIT = 20000


class SizeLimitExceeded(ValueError):
    pass


class MissingTrajectory(ValueError):
    pass


def rhs_sign():
    # mutation hook used to check that the verification suite notices a sign error
    return -1.0 if os.environ.get("DWRLAB_MUTATE") == "adjoint_rhs_sign" else 1.0


def fingerprint(U):
    return hashlib.sha1(np.ascontiguousarray(U, dtype=float).tobytes()).hexdigest()[:16]


@dataclass
class AdjointVector:
    space: DiscreteSpace
    values: np.ndarray
    state_fingerprint: str = None


def solve_steady_adjoint(space, problem, output, U=None):
    """Solve (dR/dU)^T Psi = (dJ/dU)^T at the state U."""
    if U is None:
        if not (problem.linear and output.linear):
            raise MissingTrajectory("nonlinear problems and outputs need the linearization state")
        U = np.zeros(space.n_dofs)
    J = assemble_jacobian(space, problem, U)
    G = rhs_sign() * output_linearization(space, output, U, problem)
    psi = LUFactor(J).solve_transpose(G)
    fp = None if problem.linear and output.linear else fingerprint(U)
    return AdjointVector(space, psi, fp)


def inverse_row_oracle(space, problem, output, U=None):
    """Psi^T = (dJ/dU) A^{-1}, forming A^{-1} one column at a time."""
    if not problem.linear:
        raise ValueError("the inverse-row oracle is defined for linear problems")
    N = space.n_dofs
    if N > ORACLE_LIMIT:
        raise SizeLimitExceeded(f"{N} DOFs exceeds the oracle limit {ORACLE_LIMIT}")
    A = spatial_operator(space, problem)
    Ainv = np.column_stack([solve(A, col) for col in np.eye(N)])
    U = np.zeros(N) if U is None else U
    G = output_linearization(space, output, U, problem)
    return AdjointVector(space, G @ Ainv)


def dual_form_output(space, problem, output, psi):
    """J evaluated from the adjoint and the data alone: Psi . F + J(0)."""
    psi = psi.values if isinstance(psi, AdjointVector) else psi
    _, J0 = _linear_output_parts(space, output, problem, 0.0)
    return float(np.dot(psi, load_vector(space, problem))) + J0


def block_jacobi_adjoint(space, J, G, psi0, iterations=5):
    """Approximate adjoint by block-Jacobi sweeps on J^T psi = G (element blocks)."""
    Jt = as_sparse(J.T)
    blocks = []
    for e in range(space.n_elem):
        s = space.dofs(e)
        blocks.append((s, np.linalg.inv(Jt[s, s].toarray())))
    psi = np.array(psi0, dtype=float)
    for _ in range(iterations):
        r = G - Jt @ psi
        for s, Binv in blocks:
            psi[s] += Binv @ r[s]
    return psi


# ------------------------------------------------------------------ unsteady


@dataclass
class SpaceTimeAdjoint:
    times: np.ndarray
    spaces: list
    adjoints: list
    recomputed: int = 0

    @property
    def n_steps(self):
        return len(self.adjoints)


def adjoint_loads(solution, problem, output, states=None):
    """Per-step right-hand sides w_k (dJ_k/dU_k)^T."""
    states = solution.states if states is None else states
    w = output_time_weights(solution.times, output)
    out = []
    for k in range(solution.n_steps):
        space = solution.spaces[k]
        if w[k] == 0.0:
            out.append(np.zeros(space.n_dofs))
        else:
            out.append(w[k] * output_linearization(space, output, states[k + 1], problem, solution.times[k + 1]))
    return out


def backward_march(system, loads):
    """Solve the transposed block-bidiagonal system by marching from the last step to the first."""
    n = system.n_steps
    sign = rhs_sign()
    psi = [None] * n
    for k in range(n - 1, -1, -1):
        rhs = sign * loads[k]
        if k + 1 < n:
            rhs = rhs + system.coupling[k + 1].T @ psi[k + 1]
        psi[k] = system.factor(k).solve_transpose(rhs)
    return psi


def solve_unsteady_adjoint(solution, problem, output):
    if solution.states is None or len(solution.states) != solution.n_steps + 1:
        raise MissingTrajectory("the full primal trajectory is required")
    system = solution.system or build_system(problem, solution.spaces, solution.times, solution.states[0])
    psi = backward_march(system, adjoint_loads(solution, problem, output))
    return SpaceTimeAdjoint(solution.times, solution.spaces, psi)


def monolithic_spacetime_adjoint(solution, problem, output):
    """Assemble the whole space-time Jacobian and solve its transpose at once."""
    system = solution.system or build_system(problem, solution.spaces, solution.times, solution.states[0])
    Abar, sizes = system.monolithic_matrix()
    if Abar.shape[0] > MONOLITHIC_LIMIT:
        raise SizeLimitExceeded(f"space-time system of size {Abar.shape[0]} exceeds {MONOLITHIC_LIMIT}")
    G = rhs_sign() * np.concatenate(adjoint_loads(solution, problem, output))
    flat = LUFactor(Abar).solve_transpose(G)
    return SpaceTimeAdjoint(solution.times, solution.spaces, np.split(flat, np.cumsum(sizes)[:-1]))


def monolithic_primal(system):
    """Solve the all-at-once forward system (oracle for the time march)."""
    Abar, sizes = system.monolithic_matrix()
    if Abar.shape[0] > MONOLITHIC_LIMIT:
        raise SizeLimitExceeded(f"space-time system of size {Abar.shape[0]} exceeds {MONOLITHIC_LIMIT}")
    flat = LUFactor(Abar).solve(system.stacked_load())
    return [system.U0] + np.split(flat, np.cumsum(sizes)[:-1])


def default_checkpoint_interval(n_steps):
    return max(1, math.ceil(math.sqrt(n_steps)))


def checkpointed_adjoint(system, loads_fn, interval):
    """Backward march storing states only at checkpoints.

    ``loads_fn(k, U)`` returns the adjoint load of step k given the state after
    step k. Stored: U_0, every ``interval``-th state and the final state;
    segments between checkpoints are recomputed once each with the same step
    routine, so the result equals the full-storage march bit for bit.
    """
    if interval < 1:
        raise ValueError("checkpoint interval must be >= 1")
    n = system.n_steps
    stored = {0: system.U0}
    U = system.U0
    for k in range(n):
        U = system.step(k, U)
        if (k + 1) % interval == 0 or k + 1 == n:
            stored[k + 1] = U
    recomputed = 0
    sign = rhs_sign()
    psi = [None] * n
    seg_end = n
    while seg_end > 0:
        seg_start = ((seg_end - 1) // interval) * interval
        states = {seg_start: stored[seg_start], seg_end: stored[seg_end]}
        U = stored[seg_start]
        for m in range(seg_start + 1, seg_end):
            U = system.step(m - 1, U)
            states[m] = U
            recomputed += 1
        for m in range(seg_end, seg_start, -1):
            k = m - 1
            rhs = sign * loads_fn(k, states[m])
            if k + 1 < n:
                rhs = rhs + system.coupling[k + 1].T @ psi[k + 1]
            psi[k] = system.factor(k).solve_transpose(rhs)
        seg_end = seg_start
    return psi, recomputed


def solve_unsteady_adjoint_checkpointed(problem, output, spaces, interval=None, times=None):
    times = uniform_times(problem) if times is None else np.asarray(times, dtype=float)
    n = len(times) - 1
    system = build_system(problem, spaces, times)
    spaces = [spaces] * n if isinstance(spaces, DiscreteSpace) else list(spaces)
    interval = default_checkpoint_interval(n) if interval is None else interval
    w = output_time_weights(times, output)

    def loads_fn(k, U):
        if w[k] == 0.0:
            return np.zeros(spaces[k].n_dofs)
        return w[k] * output_linearization(spaces[k], output, U, problem, times[k + 1])

    psi, recomputed = checkpointed_adjoint(system, loads_fn, interval)
    return SpaceTimeAdjoint(times, spaces, psi, recomputed)


def unsteady_dual_form_output(solution, problem, output, adjoint):
    """Psi . F_bar, with the initial state entering the first step's load."""
    system = solution.system or build_system(problem, solution.spaces, solution.times, solution.states[0])
    return float(np.dot(np.concatenate(adjoint.adjoints), system.stacked_load()))
