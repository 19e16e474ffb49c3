"""Model problems, output functionals and the manufactured-solution catalog.

Data functions are called as ``f(x, t)`` with ``x`` an array; steady problems
pass ``t = 0``. Boundary values ``u_L`` and ``ux_R`` may be numbers or
functions of time.
"""
from dataclasses import dataclass, field, replace
import math

import numpy as np

from .numerics import gauss_rule

KINDS = ("advection", "diffusion", "burgers", "unsteady")


class IncompatibleOutput(ValueError):
    pass


class NotAvailable(LookupError):
    pass


def boundary_value(v, t=0.0):
    return float(v(t)) if callable(v) else float(v)


def _zero(x, t=0.0):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class PrimalProblem:
    kind: str
    x_L: float = 0.0
    x_R: float = 1.0
    a: float = 0.0
    nu: float = 0.0
    f: object = _zero
    u_L: object = 0.0
    ux_R: object = 0.0
    u0: object = None
    T: float = 1.0
    N_t: int = 1
    name: str = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if not self.x_L < self.x_R:
            raise ValueError("need x_L < x_R")
        if self.kind == "advection" and not self.a > 0:
            raise ValueError("advection needs a > 0")
        if self.kind == "diffusion" and not self.nu > 0:
            raise ValueError("diffusion needs nu > 0")
        if self.kind == "unsteady":
            if self.a < 0 or self.nu < 0 or (self.a == 0 and self.nu == 0):
                raise ValueError("unsteady problem needs a >= 0, nu >= 0, not both zero")
            if not self.T > 0 or self.N_t < 1:
                raise ValueError("need T > 0 and N_t >= 1")
            if self.u0 is None:
                raise ValueError("unsteady problem needs an initial condition")

    @property
    def linear(self):
        return self.kind != "burgers"

    @property
    def steady(self):
        return self.kind != "unsteady"

    @property
    def has_advection(self):
        return self.kind in ("advection", "burgers") or (self.kind == "unsteady" and self.a > 0)

    @property
    def has_diffusion(self):
        return self.kind == "diffusion" or (self.kind == "unsteady" and self.nu > 0)


@dataclass(frozen=True)
class OutputFunctional:
    """J(u) = (g, u) + g_R u(x_R) + g_L u_x(x_L) + u(x_p) + flux * u(x_R)^2 / 2.

    ``u_left_weight`` and ``dudx_right_weight`` describe boundary outputs whose
    value is already fixed by the boundary conditions; they exist so that such
    requests can be represented and rejected. For unsteady problems the output
    is taken at the final time unless ``window = (t_a, t_b)`` is given, in which
    case the spatial functional is integrated over that window.
    """

    g: object = None
    x_p: float = None
    g_R: float = 0.0
    g_L: float = 0.0
    flux: bool = False
    u_left_weight: float = 0.0
    dudx_right_weight: float = 0.0
    window: tuple = None
    name: str = None

    @property
    def linear(self):
        return not self.flux

    def scaled(self, c):
        g = self.g
        return replace(
            self,
            g=None if g is None else (lambda x, t=0.0, g=g: c * np.asarray(g(x, t))),
            g_R=c * self.g_R,
            g_L=c * self.g_L,
            name=None,
        )


def output_compatibility_check(problem, output):
    """Raise :class:`IncompatibleOutput` naming the first violated rule."""
    weights = (output.g_R, output.g_L, output.u_left_weight, output.dudx_right_weight)
    if not all(math.isfinite(w) for w in weights):
        raise IncompatibleOutput("output weights must be finite")
    if output.u_left_weight != 0.0:
        raise IncompatibleOutput(
            "u at x_L is prescribed by the Dirichlet inflow condition and cannot be an output"
        )
    if output.g_L != 0.0 and problem.kind != "diffusion":
        raise IncompatibleOutput(
            "a left-boundary derivative output is only compatible with steady diffusion"
        )
    if output.dudx_right_weight != 0.0:
        raise IncompatibleOutput(
            "u_x at x_R is prescribed (Neumann) or not part of the boundary flux; use g_R"
        )
    if output.x_p is not None and not problem.x_L < output.x_p < problem.x_R:
        raise IncompatibleOutput("point output location must lie strictly inside the domain")
    if output.window is not None:
        if problem.steady:
            raise IncompatibleOutput("a time window needs an unsteady problem")
        t_a, t_b = output.window
        if not 0.0 <= t_a < t_b <= problem.T:
            raise IncompatibleOutput("time window must satisfy 0 <= t_a < t_b <= T")
    active = (
        output.g is not None
        or output.x_p is not None
        or output.g_R != 0.0
        or output.g_L != 0.0
        or output.flux
    )
    if not active:
        raise IncompatibleOutput("output has no active term")
    return True


@dataclass(frozen=True)
class AnalyticSolution:
    u: object = None
    psi: object = None
    J: float = None


@dataclass(frozen=True)
class CatalogCase:
    problem: PrimalProblem
    u: object
    outputs: dict = field(default_factory=dict)
    adjoints: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)


def _const(c):
    return lambda x, t=0.0: np.full_like(np.asarray(x, dtype=float), c)


def _step(x_p, height):
    return lambda x, t=0.0: np.where(np.asarray(x) < x_p, height, 0.0)


def _build_catalog():
    e = math.e
    cases = {}

    p = PrimalProblem("advection", a=1.0, f=_const(1.0), u_L=0.0, name="linear_advection")
    cases[p.name] = CatalogCase(
        p,
        u=lambda x, t=0.0: np.asarray(x, dtype=float),
        outputs={
            "mean": OutputFunctional(g=_const(1.0), name="mean"),
            "point": OutputFunctional(x_p=0.5, name="point"),
            "right": OutputFunctional(g_R=1.0, name="right"),
            "flux": OutputFunctional(flux=True, name="flux"),
        },
        adjoints={
            "mean": lambda x, t=0.0: 1.0 - np.asarray(x),
            "point": _step(0.5, 1.0),
            "right": _const(1.0),
        },
        values={"mean": 0.5, "point": 0.5, "right": 1.0, "flux": 0.5},
    )

    p = PrimalProblem("advection", a=1.0, f=lambda x, t=0.0: np.exp(x), u_L=1.0, name="smooth_advection")
    cases[p.name] = CatalogCase(
        p,
        u=lambda x, t=0.0: np.exp(x),
        outputs={
            "mean": OutputFunctional(g=_const(1.0), name="mean"),
            "weighted": OutputFunctional(g=lambda x, t=0.0: np.exp(-np.asarray(x)), name="weighted"),
            "point": OutputFunctional(x_p=0.3, name="point"),
            "right": OutputFunctional(g_R=1.0, name="right"),
            "flux": OutputFunctional(flux=True, name="flux"),
        },
        adjoints={
            "mean": lambda x, t=0.0: 1.0 - np.asarray(x),
            "weighted": lambda x, t=0.0: np.exp(-np.asarray(x)) - math.exp(-1.0),
            "point": _step(0.3, 1.0),
            "right": _const(1.0),
        },
        values={"mean": e - 1.0, "weighted": 1.0, "point": math.exp(0.3), "right": e, "flux": 0.5 * e * e},
    )

    p = PrimalProblem(
        "diffusion", nu=1.0, f=_const(2.0), u_L=0.0, ux_R=0.0, name="quadratic_diffusion"
    )
    cases[p.name] = CatalogCase(
        p,
        u=lambda x, t=0.0: 2.0 * np.asarray(x) - np.asarray(x) ** 2,
        outputs={
            "mean": OutputFunctional(g=_const(1.0), name="mean"),
            "right": OutputFunctional(g_R=1.0, name="right"),
            "left_flux": OutputFunctional(g_L=1.0, name="left_flux"),
        },
        adjoints={
            "mean": lambda x, t=0.0: np.asarray(x) - 0.5 * np.asarray(x) ** 2,
            "right": lambda x, t=0.0: np.asarray(x, dtype=float),
            "left_flux": _const(1.0),
        },
        values={"mean": 2.0 / 3.0, "right": 1.0, "left_flux": 2.0},
    )

    p = PrimalProblem(
        "diffusion", nu=1.0, f=lambda x, t=0.0: -np.exp(x), u_L=1.0, ux_R=e, name="smooth_diffusion"
    )
    cases[p.name] = CatalogCase(
        p,
        u=lambda x, t=0.0: np.exp(x),
        outputs={
            "mean": OutputFunctional(g=_const(1.0), name="mean"),
            "weighted": OutputFunctional(g=lambda x, t=0.0: np.exp(-np.asarray(x)), name="weighted"),
            "right": OutputFunctional(g_R=1.0, name="right"),
            "left_flux": OutputFunctional(g_L=1.0, name="left_flux"),
        },
        adjoints={
            "mean": lambda x, t=0.0: np.asarray(x) - 0.5 * np.asarray(x) ** 2,
            "weighted": lambda x, t=0.0: 1.0 - np.exp(-np.asarray(x)) - np.asarray(x) / math.e,
            "right": lambda x, t=0.0: np.asarray(x, dtype=float),
            "left_flux": _const(1.0),
        },
        values={"mean": e - 1.0, "weighted": 1.0, "right": e, "left_flux": 1.0},
    )

    p = PrimalProblem(
        "burgers",
        f=lambda x, t=0.0: (1.0 + np.asarray(x)) + (1.0 + np.asarray(x)) ** 3,
        u_L=1.0,
        name="linear_burgers",
    )
    cases[p.name] = CatalogCase(
        p,
        u=lambda x, t=0.0: 1.0 + np.asarray(x),
        outputs={"flux": OutputFunctional(flux=True, name="flux")},
        values={"flux": 2.0},
    )

    p = PrimalProblem(
        "burgers",
        f=lambda x, t=0.0: 0.5 * np.exp(x) + np.exp(1.5 * np.asarray(x)),
        u_L=1.0,
        name="smooth_burgers",
    )
    cases[p.name] = CatalogCase(
        p,
        u=lambda x, t=0.0: np.exp(0.5 * np.asarray(x)),
        outputs={
            "flux": OutputFunctional(flux=True, name="flux"),
            "mean": OutputFunctional(g=_const(1.0), name="mean"),
        },
        values={"flux": 0.5 * e, "mean": 2.0 * (math.exp(0.5) - 1.0)},
    )

    # steady in time: u = sin(pi x), so only spatial error remains
    pi = math.pi
    p = PrimalProblem(
        "unsteady",
        a=1.0,
        nu=0.01,
        f=lambda x, t: pi * np.cos(pi * np.asarray(x)) + 0.01 * pi**2 * np.sin(pi * np.asarray(x)),
        u_L=0.0,
        ux_R=-pi,
        u0=lambda x, t=0.0: np.sin(pi * np.asarray(x)),
        T=1.0,
        N_t=40,
        name="steady_sine",
    )
    cases[p.name] = CatalogCase(
        p,
        u=lambda x, t=0.0: np.sin(pi * np.asarray(x)),
        outputs={"mean": OutputFunctional(g=_const(1.0), name="mean")},
        values={"mean": 2.0 / pi},
    )

    # linear in space, nonlinear in time: only temporal error remains for p >= 1
    p = PrimalProblem(
        "unsteady",
        a=1.0,
        nu=0.0,
        f=lambda x, t: np.asarray(x) * 2.0 * pi * np.cos(2.0 * pi * t) + np.sin(2.0 * pi * t) + 1.0,
        u_L=0.0,
        u0=lambda x, t=0.0: np.asarray(x, dtype=float),
        T=1.0,
        N_t=8,
        name="temporal_ramp",
    )
    cases[p.name] = CatalogCase(
        p,
        u=lambda x, t=0.0: np.asarray(x) * (1.0 + np.sin(2.0 * pi * t)),
        outputs={"mean": OutputFunctional(g=_const(1.0), name="mean")},
        values={"mean": 0.5},
    )

    # late inflow pulse observed at a point at the final time
    p = PrimalProblem(
        "unsteady",
        a=1.0,
        nu=0.005,
        f=lambda x, t: np.zeros_like(np.asarray(x, dtype=float)),
        u_L=lambda t: t**3,
        ux_R=0.0,
        u0=lambda x, t=0.0: np.zeros_like(np.asarray(x, dtype=float)),
        T=1.0,
        N_t=12,
        name="late_inflow",
    )
    cases[p.name] = CatalogCase(
        p,
        u=None,
        outputs={"point": OutputFunctional(x_p=0.5, name="point")},
    )
    return cases


CATALOG = _build_catalog()


def catalog_case(name):
    try:
        return CATALOG[name]
    except KeyError:
        raise NotAvailable(f"no catalog case named {name!r}") from None


def _case_for(problem):
    if problem.name is None or problem.name not in CATALOG:
        raise NotAvailable("problem is not a catalog case")
    case = CATALOG[problem.name]
    if replace(case.problem, N_t=problem.N_t) != problem:
        raise NotAvailable("problem data differ from the catalog case of the same name")
    return case


def analytic_primal(problem):
    case = _case_for(problem)
    if case.u is None:
        raise NotAvailable(f"no closed-form solution for {problem.name}")
    return AnalyticSolution(u=case.u)


def analytic_adjoint(problem, output):
    case = _case_for(problem)
    if not problem.linear or output.name not in case.adjoints:
        raise NotAvailable("no closed-form adjoint for this problem/output pair")
    if case.outputs[output.name] != output:
        raise NotAvailable("output differs from the catalog output of the same name")
    return AnalyticSolution(u=case.u, psi=case.adjoints[output.name], J=case.values.get(output.name))


def exact_output(problem, output):
    case = _case_for(problem)
    if output.name not in case.values or case.outputs.get(output.name) != output:
        raise NotAvailable("no exact output value for this pair")
    return case.values[output.name]


def continuous_residual(problem, u, du, d2u, x, t=0.0):
    """Strong residual r(u) = L u - f for the steady variants."""
    x = np.asarray(x, dtype=float)
    if problem.kind == "advection":
        return problem.a * du(x) - problem.f(x, t)
    if problem.kind == "diffusion":
        return -problem.nu * d2u(x) - problem.f(x, t)
    if problem.kind == "burgers":
        return u(x) * du(x) + u(x) ** 3 - problem.f(x, t)
    raise ValueError("continuous_residual covers steady problems only")


def dual_form_value(problem, output, psi, dpsi=None, n_points=16, n_cells=256):
    """(psi, f) plus the prescribed boundary-data terms.

    Advection adds ``psi(x_L) a u_L``; diffusion adds
    ``nu u_L psi'(x_L) + nu ux_R psi(x_R)`` (``dpsi`` required).
    """

    if not problem.linear or not problem.steady:
        raise ValueError("dual form is defined for linear steady problems")
    rule = gauss_rule(n_points)
    edges = np.linspace(problem.x_L, problem.x_R, n_cells + 1)
    if output.x_p is not None:
        edges = np.union1d(edges, [output.x_p])
    total = 0.0
    for xl, xr in zip(edges[:-1], edges[1:]):
        xq = 0.5 * (xl + xr) + 0.5 * (xr - xl) * rule.points
        total += 0.5 * (xr - xl) * np.dot(rule.weights, psi(xq) * problem.f(xq, 0.0))
    xL = np.array([problem.x_L])
    xR = np.array([problem.x_R])
    if problem.kind == "advection":
        total += float(psi(xL)[0]) * problem.a * boundary_value(problem.u_L)
    else:
        total += problem.nu * boundary_value(problem.u_L) * float(dpsi(xL)[0])
        total += problem.nu * boundary_value(problem.ux_R) * float(psi(xR)[0])
    return total
