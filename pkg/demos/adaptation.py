"""Goal-oriented refinement for a point value against uniform bisection."""
from dwrlab.adapt import adapt_loop_steady, uniform_refinement_history
from dwrlab.mesh import uniform_mesh
from dwrlab.problems import CATALOG, exact_output

case = CATALOG["smooth_advection"]
problem, out = case.problem, case.outputs["point"]
J = exact_output(problem, out)

history = adapt_loop_steady(problem, out, uniform_mesh(0.0, 1.0, 8, 1), tol=1e-8, max_iter=30, J_exact=J)
print(f"adaptive ({history.status})")
print(f"{'iter':>4} {'dof':>5} {'error':>11} {'corrected':>11}  refined centres")
for r in history.records:
    centres = " ".join(f"{x:.3f}" for x in r.refined)
    print(f"{r.iteration:4d} {r.dof:5d} {r.true_error: .3e} {J - r.J_corrected: .3e}  {centres}")

print("\nuniform")
for r in uniform_refinement_history(problem, out, 8, 1, 7, J_exact=J).records:
    print(f"     {r.dof:5d} {r.true_error: .3e}")
