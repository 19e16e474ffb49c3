import math

import numpy as np
import pytest

from dwrlab.problems import (
    CATALOG,
    IncompatibleOutput,
    NotAvailable,
    OutputFunctional,
    PrimalProblem,
    analytic_adjoint,
    analytic_primal,
    catalog_case,
    continuous_residual,
    dual_form_value,
    exact_output,
    output_compatibility_check,
)

E = math.e

# (u', u'') by hand for every steady catalog solution
DERIVS = {
    "linear_advection": (lambda x: np.ones_like(x), lambda x: np.zeros_like(x)),
    "smooth_advection": (np.exp, np.exp),
    "quadratic_diffusion": (lambda x: 2 - 2 * x, lambda x: -2 * np.ones_like(x)),
    "smooth_diffusion": (np.exp, np.exp),
    "linear_burgers": (lambda x: np.ones_like(x), lambda x: np.zeros_like(x)),
    "smooth_burgers": (lambda x: 0.5 * np.exp(x / 2), lambda x: 0.25 * np.exp(x / 2)),
}

# psi' by hand for the diffusion adjoints
ADJOINT_DERIVS = {
    ("quadratic_diffusion", "mean"): lambda x: 1 - x,
    ("quadratic_diffusion", "right"): lambda x: np.ones_like(x),
    ("quadratic_diffusion", "left_flux"): lambda x: np.zeros_like(x),
    ("smooth_diffusion", "mean"): lambda x: 1 - x,
    ("smooth_diffusion", "weighted"): lambda x: np.exp(-x) - 1 / E,
    ("smooth_diffusion", "right"): lambda x: np.ones_like(x),
    ("smooth_diffusion", "left_flux"): lambda x: np.zeros_like(x),
}


def test_compatibility_examples():
    adv = catalog_case("linear_advection").problem
    dif = catalog_case("quadratic_diffusion").problem
    assert output_compatibility_check(adv, OutputFunctional(g=lambda x, t=0.0: np.ones_like(x)))
    with pytest.raises(IncompatibleOutput, match="Dirichlet"):
        output_compatibility_check(adv, OutputFunctional(u_left_weight=1.0))
    assert output_compatibility_check(dif, OutputFunctional(g_R=1.0, g_L=2.0))


@pytest.mark.parametrize(
    "kind,output",
    [
        ("advection", OutputFunctional(g_L=1.0)),
        ("diffusion", OutputFunctional(dudx_right_weight=1.0)),
        ("diffusion", OutputFunctional(u_left_weight=1.0)),
        ("advection", OutputFunctional(x_p=1.0)),
        ("advection", OutputFunctional(x_p=0.0)),
        ("advection", OutputFunctional()),
        ("advection", OutputFunctional(g_R=math.inf)),
        ("advection", OutputFunctional(g_R=1.0, window=(0.0, 0.5))),
    ],
)
def test_incompatible_outputs(kind, output):
    problem = PrimalProblem(kind, a=1.0, nu=1.0 if kind == "diffusion" else 0.0)
    with pytest.raises(IncompatibleOutput):
        output_compatibility_check(problem, output)


def test_problem_invariants():
    with pytest.raises(ValueError):
        PrimalProblem("advection", a=-1.0)
    with pytest.raises(ValueError):
        PrimalProblem("diffusion", nu=0.0)
    with pytest.raises(ValueError):
        PrimalProblem("unsteady", a=1.0, u0=None)
    with pytest.raises(ValueError):
        PrimalProblem("unsteady", a=1.0, u0=lambda x, t=0.0: x, N_t=0)


def test_analytic_primal_examples():
    x = np.linspace(0, 1, 7)
    assert np.allclose(analytic_primal(CATALOG["linear_advection"].problem).u(x), x)
    assert np.allclose(analytic_primal(CATALOG["quadratic_diffusion"].problem).u(x), 2 * x - x**2)
    assert np.allclose(analytic_primal(CATALOG["linear_burgers"].problem).u(x), 1 + x)


def test_analytic_adjoint_examples():
    x = np.array([0.1, 0.4, 0.6, 0.9])
    adv = CATALOG["linear_advection"]
    assert np.allclose(analytic_adjoint(adv.problem, adv.outputs["mean"]).psi(x), 1 - x)
    assert np.allclose(analytic_adjoint(adv.problem, adv.outputs["point"]).psi(x), [1, 1, 0, 0])
    dif = CATALOG["quadratic_diffusion"]
    assert np.allclose(analytic_adjoint(dif.problem, dif.outputs["right"]).psi(x), x)


def test_not_available():
    other = PrimalProblem("advection", a=2.0, name="linear_advection")
    with pytest.raises(NotAvailable):
        analytic_primal(other)
    with pytest.raises(NotAvailable):
        analytic_primal(PrimalProblem("advection", a=1.0))
    case = CATALOG["smooth_burgers"]
    with pytest.raises(NotAvailable):
        analytic_adjoint(case.problem, case.outputs["flux"])
    with pytest.raises(NotAvailable):
        analytic_primal(CATALOG["late_inflow"].problem)


@pytest.mark.parametrize("name", list(DERIVS))
def test_manufactured_residual_vanishes(name):
    case = CATALOG[name]
    du, d2u = DERIVS[name]
    x = np.random.default_rng(3).uniform(case.problem.x_L, case.problem.x_R, 30)
    assert np.max(np.abs(continuous_residual(case.problem, case.u, du, d2u, x))) <= 1e-12


def test_manufactured_boundary_data():
    for name, case in CATALOG.items():
        p = case.problem
        if case.u is None:
            continue
        if p.steady:
            assert abs(case.u(np.array([p.x_L]))[0] - p.u_L) <= 1e-15
        if p.kind == "diffusion":
            assert abs(DERIVS[name][0](np.array([p.x_R]))[0] - p.ux_R) <= 1e-15


def _steady_linear_pairs():
    for name, case in CATALOG.items():
        if case.problem.kind in ("advection", "diffusion"):
            for oname in case.adjoints:
                yield name, oname


@pytest.mark.parametrize("name,oname", list(_steady_linear_pairs()))
def test_dual_form_equals_exact_output(name, oname):
    case = CATALOG[name]
    problem, output = case.problem, case.outputs[oname]
    psi = case.adjoints[oname]
    J = dual_form_value(problem, output, psi, ADJOINT_DERIVS.get((name, oname)))
    assert abs(J - exact_output(problem, output)) <= 1e-12


def test_dual_form_examples():
    case = CATALOG["linear_advection"]
    assert abs(dual_form_value(case.problem, case.outputs["mean"], case.adjoints["mean"]) - 0.5) <= 1e-14
    assert abs(dual_form_value(case.problem, case.outputs["point"], case.adjoints["point"]) - 0.5) <= 1e-14
    zero = PrimalProblem("advection", a=1.0)
    assert dual_form_value(zero, case.outputs["mean"], case.adjoints["mean"]) == 0.0


def test_exact_output_values_by_hand():
    assert exact_output(CATALOG["linear_advection"].problem, CATALOG["linear_advection"].outputs["mean"]) == 0.5
    sa = CATALOG["smooth_advection"]
    assert abs(exact_output(sa.problem, sa.outputs["point"]) - math.exp(0.3)) <= 1e-15
    sb = CATALOG["smooth_burgers"]
    assert abs(exact_output(sb.problem, sb.outputs["flux"]) - E / 2) <= 1e-15
    qd = CATALOG["quadratic_diffusion"]
    assert abs(exact_output(qd.problem, qd.outputs["mean"]) - 2 / 3) <= 1e-15


def test_point_adjoint_vanishes_downstream():
    case = CATALOG["smooth_advection"]
    psi = analytic_adjoint(case.problem, case.outputs["point"]).psi
    x = np.linspace(0.3001, 1.0, 50)
    assert np.all(psi(x) == 0.0)


def test_unsteady_catalog_solutions():
    # u = x (1 + sin 2 pi t) satisfies u_t + u_x = f with the catalog source
    case = CATALOG["temporal_ramp"]
    x, t = np.linspace(0, 1, 9), 0.3
    ut = x * 2 * np.pi * np.cos(2 * np.pi * t)
    ux = 1 + np.sin(2 * np.pi * t)
    assert np.allclose(ut + ux, case.problem.f(x, t), atol=1e-14)
    assert np.allclose(case.u(x, t), x * (1 + np.sin(2 * np.pi * t)))
    s = CATALOG["steady_sine"]
    ux = np.pi * np.cos(np.pi * x)
    uxx = -np.pi**2 * np.sin(np.pi * x)
    assert np.allclose(ux - 0.01 * uxx, s.problem.f(x, 0.0), atol=1e-13)
