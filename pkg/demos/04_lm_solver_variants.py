"""Three routes to the same nonlinear trajectory estimate.

On the quadratic-model problem, the damped Gauss-Newton (LM) iteration is
solved three ways:

* ``exact``           - the linearized subproblem solved by the Kalman
                        smoother, Jacobians required;
* ``tangent``         - the subproblem solved by an ensemble smoother,
                        Jacobians applied to ensemble deviations;
* ``finite-difference`` - same ensemble solver, but every Jacobian-vector
                        product replaced by a forward difference, no
                        derivatives needed anywhere.

The two ensemble runs share every noise draw, so at matching seeds the
finite-difference trace hugs the tangent trace to O(tau).
"""

import numpy as np

from ensvar import LMConfig, PerturbationStream, lm_run, make_toy_problem

problem = make_toy_problem("w2-quadratic")
iterations = 6
n_members = 2000

runs = {}
runs["exact"] = lm_run(problem, LMConfig(gamma=1.0, max_iterations=iterations, mode="exact"))
runs["tangent"] = lm_run(
    problem,
    LMConfig(gamma=1.0, max_iterations=iterations, mode="tangent", ensemble_sizes=(n_members,)),
    PerturbationStream(5),
)
runs["finite-difference"] = lm_run(
    problem,
    LMConfig(gamma=1.0, max_iterations=iterations, mode="finite-difference",
             ensemble_sizes=(n_members,), tau=1e-4),
    PerturbationStream(5),
)

print(f"objective traces (gamma=1, N={n_members}, tau=1e-4)\n")
header = f"{'iter':>4}" + "".join(f"{name:>20}" for name in runs)
print(header)
for j in range(iterations + 1):
    row = f"{j:>4}" + "".join(f"{runs[name].objectives[j]:>20.8f}" for name in runs)
    print(row)

print("\nfinal trajectories (x_0, x_1):")
for name, run in runs.items():
    print(f"  {name:>17}: {np.array2string(run.iterates[-1].composite, precision=6)}")

gap = np.linalg.norm(
    runs["finite-difference"].iterates[-1].composite - runs["tangent"].iterates[-1].composite
)
print(f"\nfd-vs-tangent gap under shared noise: {gap:.2e}  (first order in tau)")
