"""Discontinuous Galerkin discretization of the model problems.

Residual sign convention: ``R(U) = A U - F`` for linear problems, so the
discrete solution satisfies ``R(U) = 0``. Interior faces use upwinding for
advection, symmetric interior penalty (SIP) for diffusion and a local
Lax-Friedrichs flux for Burgers. The inflow value is imposed weakly through the
numerical flux at x_L; the diffusive right boundary is a Neumann condition.

Every element is integrated with the same fixed Gauss rule. Nested spaces
therefore see identical quadrature, which keeps the coarse output and the
fine output of an injected coarse state equal to roundoff.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import ReferenceElement, shape_derivatives, shape_values
from .mesh import element_offsets
from .numerics import DimensionMismatch, LUFactor, as_sparse, gauss_rule
from .problems import boundary_value

QUAD_POINTS = 16
SIGMA = 4.0
NEWTON_TOL = 1e-12
NEWTON_MAXIT = 50


class NewtonDivergence(ArithmeticError):
    pass


class DiscreteSpace:
    """Broken polynomial space on a mesh with element-major nodal DOFs.

    ``penalty_mesh`` fixes the SIP penalty of every face that also exists in
    that mesh. Fine spaces built for error estimation pass the coarse mesh here
    so that the fine bilinear form restricted to coarse functions equals the
    coarse form.
    """

    def __init__(self, mesh, penalty_mesh=None):
        self.mesh = mesh
        self.offsets = element_offsets(mesh)
        self.n_dofs = int(self.offsets[-1])
        self.n_elem = mesh.n_elem
        self.rule = gauss_rule(QUAD_POINTS)
        self.refs = {int(p): ReferenceElement(int(p), self.rule) for p in np.unique(mesh.orders)}
        self.h = mesh.sizes
        self.xq = mesh.centers[:, None] + 0.5 * self.h[:, None] * self.rule.points[None, :]
        self.penalty = _face_penalties(mesh)
        if penalty_mesh is not None:
            ref = _face_penalties(penalty_mesh)
            tol = 1e-12 * (mesh.x_R - mesh.x_L)
            j = np.clip(np.searchsorted(penalty_mesh.boundaries, mesh.boundaries), 0, penalty_mesh.n_elem)
            jm = np.clip(j - 1, 0, penalty_mesh.n_elem)
            for i, xb in enumerate(mesh.boundaries):
                for c in (j[i], jm[i]):
                    if abs(penalty_mesh.boundaries[c] - xb) <= tol:
                        self.penalty[i] = ref[c]
                        break
        self.penalty_mesh = penalty_mesh
        self._cache = {}

    def ref(self, e):
        return self.refs[int(self.mesh.orders[e])]

    def dofs(self, e):
        return slice(self.offsets[e], self.offsets[e + 1])

    def element_of_dof(self):
        return np.repeat(np.arange(self.n_elem), self.mesh.orders + 1)

    def check(self, U):
        U = np.asarray(U, dtype=float)
        if U.shape != (self.n_dofs,):
            raise DimensionMismatch(f"vector has shape {U.shape}, space has {self.n_dofs} DOFs")
        return U

    def evaluate(self, U, x, derivative=False):
        """Point values (or x-derivatives) using the left-element convention at interfaces."""
        U = self.check(U)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        els = self.mesh.locate(x, side="left")
        out = np.empty_like(x)
        for i, (xi, e) in enumerate(zip(x, els)):
            xl, xr = self.mesh.boundaries[e], self.mesh.boundaries[e + 1]
            ref_x = (2.0 * xi - xl - xr) / (xr - xl)
            p = int(self.mesh.orders[e])
            if derivative:
                row = shape_derivatives(p, ref_x)[0] * 2.0 / (xr - xl)
            else:
                row = shape_values(p, ref_x)[0]
            out[i] = row @ U[self.dofs(e)]
        return out

    def quadrature_values(self, U):
        """Values of U at the quadrature points, shape (n_elem, n_q)."""
        U = self.check(U)
        out = np.empty_like(self.xq)
        for e in range(self.n_elem):
            out[e] = self.ref(e).phi @ U[self.dofs(e)]
        return out


def _face_penalties(mesh):
    """sigma (p+1)^2 / h per face, using max p and min h of the adjacent elements."""
    p, h = mesh.orders, mesh.sizes
    pen = np.empty(mesh.n_elem + 1)
    pen[0] = SIGMA * (p[0] + 1) ** 2 / h[0]
    pen[-1] = SIGMA * (p[-1] + 1) ** 2 / h[-1]
    if mesh.n_elem > 1:
        pm = np.maximum(p[:-1], p[1:])
        hm = np.minimum(h[:-1], h[1:])
        pen[1:-1] = SIGMA * (pm + 1) ** 2 / hm
    return pen


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, rs, cs, block):
        r = np.arange(rs.start, rs.stop)
        c = np.arange(cs.start, cs.stop)
        self.rows.append(np.repeat(r, len(c)))
        self.cols.append(np.tile(c, len(r)))
        self.vals.append(np.asarray(block, dtype=float).ravel())

    def matrix(self, n, m=None):
        m = n if m is None else m
        if not self.rows:
            return as_sparse(sp.csr_matrix((n, m)))
        A = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(n, m),
        )
        return as_sparse(A.tocsr())


def _traces(space, e):
    """Values and x-derivatives of the basis at the left and right ends of element e."""
    ref = space.ref(e)
    s = 2.0 / space.h[e]
    return ref.phi_left, ref.phi_right, ref.dphi_left * s, ref.dphi_right * s


def mass_matrix(space):
    if "mass" not in space._cache:
        T = _Triplets()
        for e in range(space.n_elem):
            T.add(space.dofs(e), space.dofs(e), 0.5 * space.h[e] * space.ref(e).mass)
        space._cache["mass"] = T.matrix(space.n_dofs)
    return space._cache["mass"]


def transfer_matrix(test_space, trial_space):
    """Mixed mass matrix (phi_i^test, phi_j^trial) between two meshes of one domain."""
    if test_space is trial_space or (
        test_space.mesh.same_geometry(trial_space.mesh)
        and np.array_equal(test_space.mesh.orders, trial_space.mesh.orders)
    ):
        return mass_matrix(test_space)
    a, b = test_space.mesh, trial_space.mesh
    cuts = np.union1d(a.boundaries, b.boundaries)
    rule = test_space.rule
    T = _Triplets()
    for xl, xr in zip(cuts[:-1], cuts[1:]):
        if xr - xl <= 1e-14 * (a.x_R - a.x_L):
            continue
        xm = 0.5 * (xl + xr)
        ea, eb = int(a.locate(xm, "right")), int(b.locate(xm, "right"))
        xq = xm + 0.5 * (xr - xl) * rule.points
        pa = shape_values(a.orders[ea], (2 * xq - a.boundaries[ea] - a.boundaries[ea + 1]) / (a.boundaries[ea + 1] - a.boundaries[ea]))
        pb = shape_values(b.orders[eb], (2 * xq - b.boundaries[eb] - b.boundaries[eb + 1]) / (b.boundaries[eb + 1] - b.boundaries[eb]))
        T.add(test_space.dofs(ea), trial_space.dofs(eb), 0.5 * (xr - xl) * (pa * rule.weights[:, None]).T @ pb)
    return T.matrix(test_space.n_dofs, trial_space.n_dofs)


def l2_project(space, func, t=0.0):
    """Element-wise L2 projection of ``func(x, t)`` onto the space."""
    fq = np.asarray(func(space.xq, t), dtype=float) * np.ones_like(space.xq)
    U = np.empty(space.n_dofs)
    for e in range(space.n_elem):
        ref = space.ref(e)
        rhs = ref.phi.T @ (space.rule.weights * fq[e])
        U[space.dofs(e)] = np.linalg.solve(ref.mass, rhs)
    return U


def l2_error(space, U, func, t=0.0):
    """||U - func||_L2 by the element quadrature."""
    diff = space.quadrature_values(U) - np.asarray(func(space.xq, t), dtype=float)
    w = space.rule.weights * (space.h[:, None] / 2.0)
    return float(np.sqrt(np.sum(w * diff**2)))


def _source(space, problem, t):
    fq = np.asarray(problem.f(space.xq, t), dtype=float) * np.ones_like(space.xq)
    F = np.empty(space.n_dofs)
    for e in range(space.n_elem):
        F[space.dofs(e)] = 0.5 * space.h[e] * (space.ref(e).phi.T @ (space.rule.weights * fq[e]))
    return F


def spatial_operator(space, problem):
    """Matrix A of the linear spatial operator (advection and/or SIP diffusion)."""
    if not problem.linear:
        raise ValueError("spatial_operator is for linear problems; use assemble_jacobian")
    key = ("A", problem.kind, problem.a, problem.nu)
    if key in space._cache:
        return space._cache[key]
    a = problem.a if problem.has_advection else 0.0
    nu = problem.nu if problem.has_diffusion else 0.0
    n = space.n_elem
    T = _Triplets()
    for e in range(n):
        ref = space.ref(e)
        W = ref.qweights[:, None]
        block = np.zeros((ref.p + 1, ref.p + 1))
        if a:
            block -= a * (ref.dphi * W).T @ ref.phi
        if nu:
            block += nu * (2.0 / space.h[e]) * (ref.dphi * W).T @ ref.dphi
        T.add(space.dofs(e), space.dofs(e), block)
    for i in range(1, n):
        L, R = i - 1, i
        _, aL, _, dL = _traces(space, L)
        bR, _, dR, _ = _traces(space, R)
        sL, sR = space.dofs(L), space.dofs(R)
        if a:
            T.add(sL, sL, a * np.outer(aL, aL))
            T.add(sR, sL, -a * np.outer(bR, aL))
        if nu:
            eta = nu * space.penalty[i]
            jump = {0: (sL, aL), 1: (sR, -bR)}
            avg = {0: 0.5 * nu * dL, 1: 0.5 * nu * dR}
            for s in (0, 1):
                for q in (0, 1):
                    blk = (
                        -np.outer(jump[s][1], avg[q])
                        - np.outer(avg[s], jump[q][1])
                        + eta * np.outer(jump[s][1], jump[q][1])
                    )
                    T.add(jump[s][0], jump[q][0], blk)
    b0, _, d0, _ = _traces(space, 0)
    _, aN, _, _ = _traces(space, n - 1)
    s0, sN = space.dofs(0), space.dofs(n - 1)
    if a:
        T.add(sN, sN, a * np.outer(aN, aN))
    if nu:
        eta = nu * space.penalty[0]
        T.add(s0, s0, nu * np.outer(b0, d0) + nu * np.outer(d0, b0) + eta * np.outer(b0, b0))
    A = T.matrix(space.n_dofs)
    space._cache[key] = A
    return A


def load_vector(space, problem, t=0.0):
    """Load F of the linear problem: source plus weakly imposed boundary data."""
    F = _source(space, problem, t)
    n = space.n_elem
    b0, _, d0, _ = _traces(space, 0)
    _, aN, _, _ = _traces(space, n - 1)
    uL = boundary_value(problem.u_L, t)
    if problem.has_advection:
        F[space.dofs(0)] += problem.a * uL * b0
    if problem.has_diffusion:
        nu = problem.nu
        F[space.dofs(0)] += nu * uL * d0 + nu * space.penalty[0] * uL * b0
        F[space.dofs(n - 1)] += nu * boundary_value(problem.ux_R, t) * aN
    return F


def _lf_flux(um, up):
    """Local Lax-Friedrichs flux for f(u) = u^2/2 and its partial derivatives.

    The dissipation speed is that of the averaged state, |u- + u+| / 2, which
    is smooth wherever the averaged state is nonzero.
    """
    s = um + up
    lam = 0.5 * abs(s)
    dlam = 0.5 * np.sign(s)
    flux = 0.25 * (um * um + up * up) - 0.5 * lam * (up - um)
    d_m = 0.5 * um + 0.5 * lam - 0.5 * (up - um) * dlam
    d_p = 0.5 * up - 0.5 * lam - 0.5 * (up - um) * dlam
    return flux, d_m, d_p


def _burgers(space, problem, U, want_jacobian):
    U = space.check(U)
    n = space.n_elem
    R = -_source(space, problem, 0.0)
    T = _Triplets() if want_jacobian else None
    for e in range(n):
        ref = space.ref(e)
        s = space.dofs(e)
        uq = ref.phi @ U[s]
        w = ref.qweights
        R[s] += -(ref.dphi.T @ (w * 0.5 * uq**2)) + 0.5 * space.h[e] * (ref.phi.T @ (w * uq**3))
        if want_jacobian:
            J = -(ref.dphi * (w * uq)[:, None]).T @ ref.phi
            J += 0.5 * space.h[e] * (ref.phi * (w * 3.0 * uq**2)[:, None]).T @ ref.phi
            T.add(s, s, J)
    uL = boundary_value(problem.u_L)
    for i in range(n + 1):
        if i == 0:
            b0 = space.ref(0).phi_left
            s0 = space.dofs(0)
            up = b0 @ U[s0]
            flux, _, d_p = _lf_flux(uL, up)
            R[s0] -= flux * b0
            if want_jacobian:
                T.add(s0, s0, -d_p * np.outer(b0, b0))
        elif i == n:
            aN = space.ref(n - 1).phi_right
            sN = space.dofs(n - 1)
            um = aN @ U[sN]
            R[sN] += 0.5 * um * um * aN
            if want_jacobian:
                T.add(sN, sN, um * np.outer(aN, aN))
        else:
            aL = space.ref(i - 1).phi_right
            bR = space.ref(i).phi_left
            sL, sR = space.dofs(i - 1), space.dofs(i)
            um, up = aL @ U[sL], bR @ U[sR]
            flux, d_m, d_p = _lf_flux(um, up)
            R[sL] += flux * aL
            R[sR] -= flux * bR
            if want_jacobian:
                T.add(sL, sL, d_m * np.outer(aL, aL))
                T.add(sL, sR, d_p * np.outer(aL, bR))
                T.add(sR, sL, -d_m * np.outer(bR, aL))
                T.add(sR, sR, -d_p * np.outer(bR, bR))
    if want_jacobian:
        return R, T.matrix(space.n_dofs)
    return R


def assemble_residual(space, problem, U, t=0.0):
    """Spatial residual; for unsteady problems this is A U - F(t) without the time derivative."""
    U = space.check(U)
    if problem.linear:
        return spatial_operator(space, problem) @ U - load_vector(space, problem, t)
    return _burgers(space, problem, U, False)


def assemble_jacobian(space, problem, U=None):
    if problem.linear:
        if U is not None:
            space.check(U)
        return spatial_operator(space, problem)
    return _burgers(space, problem, U, True)[1]


def solve_primal(space, problem, U_init=None):
    """Discrete steady solution; Newton's method with the analytic Jacobian for Burgers."""
    if not problem.steady:
        raise ValueError("use time_march for unsteady problems")
    if problem.linear:
        return LUFactor(spatial_operator(space, problem)).solve(load_vector(space, problem))
    if U_init is None:
        U = np.full(space.n_dofs, boundary_value(problem.u_L))
    else:
        U = np.array(space.check(U_init), dtype=float)
    for _ in range(NEWTON_MAXIT):
        R, J = _burgers(space, problem, U, True)
        if np.max(np.abs(R)) <= NEWTON_TOL:
            return U
        U = U - LUFactor(J).solve(R)
    R = _burgers(space, problem, U, False)
    if np.max(np.abs(R)) <= NEWTON_TOL:
        return U
    raise NewtonDivergence(f"Newton did not reach {NEWTON_TOL:g} in {NEWTON_MAXIT} iterations")


def _point_row(space, x):
    e = int(space.mesh.locate(x, side="left"))
    xl, xr = space.mesh.boundaries[e], space.mesh.boundaries[e + 1]
    return e, shape_values(space.mesh.orders[e], (2.0 * x - xl - xr) / (xr - xl))[0]


def _linear_output_parts(space, output, problem, t):
    """Gradient of the affine part of the output and its constant term J(0)."""
    key = ("G", output, float(t))
    if key in space._cache:
        return space._cache[key]
    n = space.n_elem
    G = np.zeros(space.n_dofs)
    J0 = 0.0
    if output.g is not None:
        gq = np.asarray(output.g(space.xq, t), dtype=float) * np.ones_like(space.xq)
        for e in range(n):
            G[space.dofs(e)] += 0.5 * space.h[e] * (space.ref(e).phi.T @ (space.rule.weights * gq[e]))
    if output.x_p is not None:
        e, row = _point_row(space, output.x_p)
        G[space.dofs(e)] += row
    if output.g_R:
        G[space.dofs(n - 1)] += output.g_R * space.ref(n - 1).phi_right
    if output.g_L:
        b0, _, d0, _ = _traces(space, 0)
        pen = space.penalty[0]
        G[space.dofs(0)] += output.g_L * (d0 + pen * b0)
        J0 -= output.g_L * pen * boundary_value(problem.u_L, t)
    space._cache[key] = (G, J0)
    return G, J0


def evaluate_output(space, output, U, problem, t=0.0):
    """Spatial output J(U) at time t; the g_L term uses the penalty-corrected derivative trace."""
    U = space.check(U)
    G, J0 = _linear_output_parts(space, output, problem, t)
    J = float(G @ U) + J0
    if output.flux:
        n = space.n_elem
        um = space.ref(n - 1).phi_right @ U[space.dofs(n - 1)]
        J += 0.5 * um * um
    return J


def output_linearization(space, output, U, problem, t=0.0):
    U = space.check(U)
    G, _ = _linear_output_parts(space, output, problem, t)
    if output.flux:
        G = G.copy()
        n = space.n_elem
        aN = space.ref(n - 1).phi_right
        G[space.dofs(n - 1)] += (aN @ U[space.dofs(n - 1)]) * aN
    return G


# ---------------------------------------------------------------- time march


class BackwardEulerSystem:
    """Block lower-bidiagonal system of a backward Euler march.

    Step k (0-based) solves ``lhs[k] U_{k+1} = loads[k] + coupling[k] U_k``.
    For the DG discretization ``lhs = M/dt + A`` and ``coupling = T/dt`` with
    ``T`` the mixed mass matrix between consecutive step spaces.
    """

    def __init__(self, lhs, coupling, loads, U0):
        if not (len(lhs) == len(coupling) == len(loads)):
            raise DimensionMismatch("lhs, coupling and loads need one entry per step")
        self.lhs = [as_sparse(A) for A in lhs]
        self.coupling = [as_sparse(C) for C in coupling]
        self.loads = [np.asarray(b, dtype=float) for b in loads]
        self.U0 = np.asarray(U0, dtype=float)
        self._factors = {}
        self._ids = [id(A) for A in lhs]
        self.step_count = 0

    @property
    def n_steps(self):
        return len(self.lhs)

    def factor(self, k):
        key = self._ids[k]
        if key not in self._factors:
            self._factors[key] = LUFactor(self.lhs[k])
        return self._factors[key]

    def step(self, k, U_prev):
        self.step_count += 1
        return self.factor(k).solve(self.loads[k] + self.coupling[k] @ U_prev)

    def march(self):
        states = [self.U0]
        for k in range(self.n_steps):
            states.append(self.step(k, states[-1]))
        return states

    def residual(self, states):
        """Per-step residuals lhs U_{k+1} - coupling U_k - load, for a trajectory of N_t + 1 states."""
        return [
            self.lhs[k] @ states[k + 1] - self.coupling[k] @ states[k] - self.loads[k]
            for k in range(self.n_steps)
        ]

    def stacked_load(self):
        """Right-hand side of the all-at-once system; the initial state enters step 0."""
        F = [b.copy() for b in self.loads]
        F[0] = F[0] + self.coupling[0] @ self.U0
        return np.concatenate(F)

    def monolithic_matrix(self):
        sizes = [A.shape[0] for A in self.lhs]
        blocks = [[None] * self.n_steps for _ in range(self.n_steps)]
        for k in range(self.n_steps):
            blocks[k][k] = self.lhs[k]
            if k > 0:
                blocks[k][k - 1] = -self.coupling[k]
        return as_sparse(sp.bmat(blocks, format="csr")), sizes


@dataclass
class SpaceTimeSolution:
    times: np.ndarray
    spaces: list
    states: list
    system: BackwardEulerSystem = None

    @property
    def n_steps(self):
        return len(self.times) - 1

    @property
    def dts(self):
        return np.diff(self.times)


def as_step_spaces(spaces, n_steps):
    if isinstance(spaces, DiscreteSpace):
        return [spaces] * n_steps
    spaces = list(spaces)
    if len(spaces) != n_steps:
        raise DimensionMismatch(f"need {n_steps} step spaces, got {len(spaces)}")
    return spaces


def build_system(problem, spaces, times, U0=None):
    """Backward Euler system of a linear unsteady problem on per-step spaces."""
    if not problem.linear:
        raise ValueError("the time march covers linear problems")
    times = np.asarray(times, dtype=float)
    spaces = as_step_spaces(spaces, len(times) - 1)
    if U0 is None:
        U0 = l2_project(spaces[0], problem.u0, times[0])
    lhs, coupling, loads = [], [], []
    for k, space in enumerate(spaces):
        dt = times[k + 1] - times[k]
        key = ("lhs", problem.kind, problem.a, problem.nu, dt)
        if key not in space._cache:
            space._cache[key] = as_sparse(mass_matrix(space) / dt + spatial_operator(space, problem))
        lhs.append(space._cache[key])
        prev = spaces[k - 1] if k > 0 else space
        if prev is space:
            ckey = ("coupling", dt)
            if ckey not in space._cache:
                space._cache[ckey] = as_sparse(mass_matrix(space) / dt)
            coupling.append(space._cache[ckey])
        else:
            coupling.append(as_sparse(transfer_matrix(space, prev) / dt))
        loads.append(load_vector(space, problem, times[k + 1]))
    return BackwardEulerSystem(lhs, coupling, loads, U0)


def uniform_times(problem, n_steps=None):
    n = problem.N_t if n_steps is None else n_steps
    t = np.linspace(0.0, problem.T, n + 1)
    t[-1] = problem.T
    return t


def time_march(spaces, problem, times=None, U0=None):
    """March the linear unsteady problem with backward Euler; U0 defaults to the L2 projection."""
    if problem.steady:
        raise ValueError("time_march needs an unsteady problem")
    times = uniform_times(problem) if times is None else np.asarray(times, dtype=float)
    spaces = as_step_spaces(spaces, len(times) - 1)
    system = build_system(problem, spaces, times, U0)
    return SpaceTimeSolution(times, spaces, system.march(), system)


def output_time_weights(times, output):
    """Rectangle weights per step; a final-time output puts weight 1 on the last step."""
    n = len(times) - 1
    w = np.zeros(n)
    if output.window is None:
        w[-1] = 1.0
        return w
    t_a, t_b = output.window
    lo = np.maximum(times[:-1], t_a)
    hi = np.minimum(times[1:], t_b)
    return np.maximum(hi - lo, 0.0)


def evaluate_spacetime_output(solution, problem, output):
    w = output_time_weights(solution.times, output)
    total = 0.0
    for k in range(solution.n_steps):
        if w[k] != 0.0:
            total += w[k] * evaluate_output(
                solution.spaces[k], output, solution.states[k + 1], problem, solution.times[k + 1]
            )
    return total
