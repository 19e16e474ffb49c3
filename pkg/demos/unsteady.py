"""Space-time estimation and adaptation for a point value at the final time.

Information reaches x = 0.5 at t = 1 only from late inflow, so the estimate
concentrates on the last time slabs.
"""
import numpy as np

from dwrlab.adapt import adapt_loop_unsteady
from dwrlab.discretization import DiscreteSpace, time_march
from dwrlab.error import unsteady_estimate, unsteady_fine_truth
from dwrlab.mesh import uniform_mesh
from dwrlab.problems import CATALOG

case = CATALOG["late_inflow"]
problem, out = case.problem, case.outputs["point"]
sol = time_march(DiscreteSpace(uniform_mesh(0.0, 1.0, 8, 1)), problem)
rep = unsteady_estimate(sol, problem, out)
print(f"estimate {rep.estimate:.6e}, fine truth {unsteady_fine_truth(sol, problem, out):.6e}")

print("\nper-step share of the indicator, and its spatial fraction")
for k in range(sol.n_steps):
    sel = rep.steps == k
    share = np.sum(rep.indicators[sel]) / np.sum(rep.indicators)
    beta = np.sum(rep.indicators[sel] * rep.beta_space[sel]) / max(np.sum(rep.indicators[sel]), 1e-300)
    print(f"  t = {sol.times[k + 1]:.3f}  {share:6.1%}  {beta:5.2f}  {'#' * int(60 * share)}")

history = adapt_loop_unsteady(problem, out, uniform_mesh(0.0, 1.0, 8, 1), max_iter=4)
final = history.meshes[-1]
print(f"\nafter {len(history) - 1} adaptations: {final.n_steps} steps, {final.dof} space-time DOF")
centres = final.time.centers
for lo in (0.0, 1 / 3, 2 / 3):
    sel = (centres >= lo * problem.T) & (centres < (lo + 1 / 3) * problem.T)
    elems = [m.n_elem for m, s in zip(final.meshes, sel) if s]
    print(f"  t in [{lo:.2f}, {lo + 1 / 3:.2f}): {len(elems):3d} steps, {min(elems)}-{max(elems)} elements per step")
