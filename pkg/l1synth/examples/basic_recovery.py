"""
Example: Basic Recovery

Demonstrates the l1-synthesis pipeline:
- Sampling a heavy-tailed measurement matrix
- Drawing a random dictionary
- Solving the quadratically constrained program
- Comparing the error with the robust-NSP bound
"""

import os
import sys

import numpy as np

# Add repository root to path for local imports
sys.path.insert(
    0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
)

from l1synth import (
    ConeSpec,
    EnsembleSpec,
    EntryLaw,
    estimate_robust_tau,
    make_problem,
    make_random_dict,
    sample_matrix,
    synthesize,
)
from l1synth.matcore import op_norm
from l1synth.smallball import adaptive_dof
from l1synth.solver import best_s_term_error, recovery_bound


def main():
    n, d, m, s = 256, 64, 120, 5
    eps = 0.01

    print("=" * 70)
    print("L1SYNTH - BASIC RECOVERY EXAMPLE")
    print("=" * 70)

    law = EntryLaw.student_t(adaptive_dof(n, s))
    phi = sample_matrix(EnsembleSpec.measurement(law, m, d), seed=1)
    dictionary = make_random_dict(EnsembleSpec.dictionary(EntryLaw.rademacher(), d, n), seed=2)
    print(f"\nPhi: {m}x{d} {law.tag}, D: {d}x{n} rademacher")

    rng = np.random.default_rng(3)
    x0 = np.zeros(n)
    x0[rng.permutation(n)[:s]] = rng.choice([-1.0, 1.0], size=s)
    e = rng.standard_normal(m)
    e *= eps / np.linalg.norm(e)

    report = synthesize(make_problem(phi, dictionary, x0, e, eps=eps))
    print(f"\nSolver: {report.iterations} iterations, converged={report.converged}")
    print(f"  err_x = {report.err_x:.3e}")
    print(f"  err_z = {report.err_z:.3e}")

    a = phi @ dictionary.mat
    tau = estimate_robust_tau(a, ConeSpec(n, s, 0.5), 200, 20, seed=4).tau_hat
    x_bound, z_bound = recovery_bound(
        0.5, tau, best_s_term_error(x0, s), s, eps, op_norm(dictionary.mat)
    )
    print(f"\nEstimated tau = {tau:.3f}")
    print(f"  bound on err_x = {x_bound:.3e}")
    print(f"  bound on err_z = {z_bound:.3e}")


if __name__ == "__main__":
    main()
