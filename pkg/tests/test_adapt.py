import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dwrlab.adapt import (
    COARSEN,
    KEEP,
    REFINE,
    InvalidFraction,
    MaxIterations,
    adapt_loop_steady,
    adapt_loop_unsteady,
    apply_spatial_marks,
    figure_of_merit,
    mark_fixed_fraction,
    spatial_costs,
    uniform_refinement_history,
)
from dwrlab.discretization import DiscreteSpace, evaluate_output, solve_primal
from dwrlab.mesh import enrich_p, uniform_mesh
from dwrlab.problems import CATALOG, exact_output


def test_figure_of_merit_hand_case():
    scores = figure_of_merit([4.0, 1.0], [2, 1])
    assert list(scores) == [2.0, 1.0]
    assert np.argmax(scores) == 0


def test_figure_of_merit_inverse_cost_and_zero():
    scores = figure_of_merit([1.0, 1.0, 1.0, 0.0], [3, 1, 2, 5])
    assert list(np.argsort(-scores[:3])) == [1, 2, 0]
    assert scores[3] == 0.0
    with pytest.raises(ValueError):
        figure_of_merit([1.0], [0])


def test_mark_hand_case():
    plan = mark_fixed_fraction([3, 1, 2, 0], 0.25, 0.25)
    assert list(plan.marks) == [REFINE, KEEP, KEEP, COARSEN]
    assert list(plan.refine) == [0]
    assert list(plan.coarsen) == [3]


def test_mark_zero_fraction_and_ties():
    assert not np.any(mark_fixed_fraction([5, 4, 3], 0.0, 0.0).marks)
    plan = mark_fixed_fraction([1, 1, 1, 1, 1], 0.4, 0.2)
    assert list(plan.refine) == [0, 1]
    assert list(plan.coarsen) == [2]


@pytest.mark.parametrize("fracs", [(-0.1, 0.0), (0.0, -0.1), (0.7, 0.4)])
def test_invalid_fractions(fracs):
    with pytest.raises(InvalidFraction):
        mark_fixed_fraction([1, 2, 3], *fracs)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=40),
    st.floats(0, 1),
    st.floats(0, 1),
)
def test_mark_counts_and_order(scores, rf, cf):
    if rf + cf > 1:
        rf, cf = rf / (rf + cf), cf / (rf + cf) * 0.999
    n = len(scores)
    plan = mark_fixed_fraction(scores, rf, cf)
    s = np.asarray(scores)
    assert len(plan.refine) == min(n, math.ceil(rf * n - 1e-9))
    assert len(plan.coarsen) <= math.floor(cf * n + 1e-9)
    assert not set(plan.refine) & set(plan.coarsen)
    rest = plan.marks != REFINE
    if len(plan.refine) and rest.any():
        assert s[plan.refine].min() >= s[rest].max()
    kept = plan.marks == KEEP
    if len(plan.coarsen) and kept.any():
        assert s[plan.coarsen].max() <= s[kept].min()


def test_weighted_marking_budget():
    # the heavy entity covers the whole refinement budget on its own
    plan = mark_fixed_fraction([9, 1, 1, 1, 1], 0.3, 0.0, weights=[4, 1, 1, 1, 1])
    assert list(plan.refine) == [0]
    plan = mark_fixed_fraction([0, 1, 1, 1, 1], 0.0, 0.5, weights=[4, 1, 1, 1, 1])
    assert list(plan.coarsen) == [0]
    # budget floor(0.4 * 8) = 3 cannot hold the lowest-scored entity
    plan = mark_fixed_fraction([0, 1, 1, 1, 1], 0.0, 0.4, weights=[4, 1, 1, 1, 1])
    assert list(plan.coarsen) == []


def test_spatial_costs():
    mesh = enrich_p(uniform_mesh(0, 1, 3, 1), [0, 1, 2])
    assert list(spatial_costs(mesh, "h")) == [2, 3, 4]
    assert list(spatial_costs(mesh, "p")) == [1, 1, 1]


def test_apply_marks_changes_dofs_by_cost():
    mesh = enrich_p(uniform_mesh(0, 1, 4, 1), [0, 1, 0, 2])
    marks = np.array([REFINE, KEEP, REFINE, KEEP])
    for mode in ("h", "p"):
        new = apply_spatial_marks(mesh, marks, mode)
        assert new.n_dofs - mesh.n_dofs == np.sum(spatial_costs(mesh, mode)[marks == REFINE])
    with pytest.raises(ValueError):
        apply_spatial_marks(mesh, marks, "r")


def test_h_coarsen_then_refine():
    mesh = uniform_mesh(0, 1, 2, 1)
    fine = apply_spatial_marks(mesh, [REFINE, REFINE], "h")
    back = apply_spatial_marks(fine, [COARSEN, COARSEN, KEEP, KEEP], "h")
    assert back.n_elem == 3
    assert np.allclose(back.boundaries, [0, 0.5, 0.75, 1])


def _point_case():
    case = CATALOG["smooth_advection"]
    return case.problem, case.outputs["point"]


def test_steady_loop_point_output():
    problem, out = _point_case()
    h = adapt_loop_steady(problem, out, uniform_mesh(0, 1, 8, 1), tol=1e-8, max_iter=30,
                          J_exact=exact_output(problem, out))
    assert h.status == "converged"
    assert abs(h.final.dJ_est) <= 1e-8
    refined = np.array([x for r in h.records for x in r.refined])
    assert np.mean(refined < out.x_p) >= 0.8
    assert [r.iteration for r in h.records] == list(range(len(h)))
    assert all(r.dof > 0 for r in h.records)
    for r in h.records[1:]:
        assert abs(r.J_corrected - exact_output(problem, out)) <= abs(r.true_error)


def test_replay_of_final_mesh():
    problem, out = _point_case()
    h = adapt_loop_steady(problem, out, uniform_mesh(0, 1, 8, 1), tol=1e-7, max_iter=20)
    space = DiscreteSpace(h.meshes[-1])
    J = evaluate_output(space, out, solve_primal(space, problem), problem)
    assert abs(J - h.final.J) <= 1e-12


def test_exact_case_stops_at_iteration_zero():
    case = CATALOG["linear_advection"]
    h = adapt_loop_steady(case.problem, case.outputs["mean"], uniform_mesh(0, 1, 4, 1))
    assert len(h) == 1
    assert h.status == "converged"


@pytest.mark.parametrize("name,oname", [
    ("smooth_advection", "point"),
    ("quadratic_diffusion", "mean"),
    ("smooth_diffusion", "weighted"),
    ("smooth_burgers", "flux"),
])
def test_estimate_trend(name, oname):
    case = CATALOG[name]
    h = adapt_loop_steady(case.problem, case.outputs[oname], uniform_mesh(0, 1, 4, 1), tol=1e-12, max_iter=8)
    est = [abs(r.dJ_est) for r in h.records]
    assert all(est[i + 2] < est[i] for i in range(len(est) - 2))


def test_max_iterations_and_caps():
    case = CATALOG["smooth_diffusion"]
    out = case.outputs["weighted"]
    h = adapt_loop_steady(case.problem, out, uniform_mesh(0, 1, 4, 1), tol=1e-14, max_iter=2)
    assert h.status == "max_iter" and len(h) == 3
    with pytest.raises(MaxIterations):
        adapt_loop_steady(case.problem, out, uniform_mesh(0, 1, 4, 1), tol=1e-14, max_iter=2, raise_on_max=True)
    h = adapt_loop_steady(case.problem, out, uniform_mesh(0, 1, 4, 1), tol=1e-14, dof_cap=12)
    assert h.status == "dof_cap"
    assert h.final.dof >= 12


def test_p_mode_and_residual_indicator():
    problem, out = _point_case()
    for mode, indicator in (("p", "dwr"), ("h", "residual")):
        h = adapt_loop_steady(problem, out, uniform_mesh(0, 1, 8, 1), mode=mode, indicator=indicator, max_iter=4, tol=1e-14)
        assert all(b.dof > a.dof for a, b in zip(h.records, h.records[1:]))


def test_steady_loop_is_deterministic():
    problem, out = _point_case()
    a = adapt_loop_steady(problem, out, uniform_mesh(0, 1, 8, 1), max_iter=5, tol=1e-14)
    b = adapt_loop_steady(problem, out, uniform_mesh(0, 1, 8, 1), max_iter=5, tol=1e-14)
    assert [vars(r) for r in a.records] == [vars(r) for r in b.records]


def test_uniform_history():
    problem, out = _point_case()
    h = uniform_refinement_history(problem, out, 4, 1, 3, J_exact=exact_output(problem, out))
    assert [r.dof for r in h.records] == [8, 16, 32]
    assert h.status == "uniform"


# ----------------------------------------------------------------- unsteady


def _unsteady(name, max_iter=3):
    case = CATALOG[name]
    out = next(iter(case.outputs.values()))
    return adapt_loop_unsteady(case.problem, out, uniform_mesh(0, 1, 8, 1), max_iter=max_iter), case.problem


def test_final_time_output_refines_late_slabs():
    h, problem = _unsteady("late_inflow")
    t = np.array([x[1] for r in h.records for x in r.refined])
    late = np.sum(t > 2 * problem.T / 3)
    early = np.sum(t < problem.T / 3)
    assert late >= 1.5 * max(early, 1)
    final = h.meshes[-1]
    assert len(set(final.meshes)) > 1
    assert final.dof == sum(m.n_dofs for m in final.meshes)


def test_temporal_error_case_refines_in_time():
    h, _ = _unsteady("temporal_ramp")
    kinds = [x[0] for r in h.records for x in r.refined]
    assert np.mean([k == "time" for k in kinds]) >= 0.8
    assert h.meshes[-1].n_steps > h.meshes[0].n_steps


def test_unsteady_estimates_shrink():
    h, _ = _unsteady("late_inflow")
    est = [abs(r.dJ_est) for r in h.records]
    assert all(est[i + 1] < est[i] for i in range(len(est) - 1))


def test_unsteady_time_grid_stays_consistent():
    h, problem = _unsteady("temporal_ramp")
    for stm in h.meshes:
        b = stm.time.boundaries
        assert b[0] == 0.0 and b[-1] == problem.T
        assert np.all(np.diff(b) > 0)
        assert len(stm.meshes) == stm.n_steps
