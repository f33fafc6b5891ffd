"""Uniqueness of the large solution for a discontinuous operator.

The coefficient matrix alternates between diag(1, 2) and diag(2, 1) on a
checkerboard of cell 1/8.  The blow-up solution of a_ij D_ij u = u^2 on the
unit square is computed three ways (increasing boundary data, exhaustion by
interior domains, and a perturbed start) and the pairwise relative
differences on {d >= 0.1} are printed.  Agreement of the three limits is
numerical evidence that the large solution is unique.

    python3 demos/checkerboard_uniqueness.py [h]
"""
import sys

import numpy as np

from blowuplab.analysis import BlowupProblem, fit_boundary_rate, uniqueness_experiment
from blowuplab.geometry import Rectangle, build_grid
from blowuplab.nonlinearity import NonlinearitySpec
from blowuplab.operators import CheckerboardField, ConstantField, OperatorSpec, discretize
from blowuplab.solver import solve_blowup_ladder


def main(h=1 / 32):
    field = CheckerboardField(ConstantField(((1.0, 0.0), (0.0, 2.0))),
                              ConstantField(((2.0, 0.0), (0.0, 1.0))), 0.125)
    op = OperatorSpec(field, 1.0, 2.0, 0.0)
    nl = NonlinearitySpec.power(2)
    square = Rectangle((0.0, 0.0), (1.0, 1.0))
    ladder = {"factor": 16.0, "finalize": True, "rho": max(0.1, 4 * h)}
    problem = BlowupProblem(square, op, nl, h, ladder=ladder, offsets=(0.01, 1e-3, 1e-4, 1e-5),
                            exhaustion_ladder={"factor": 16.0, "finalize": True})
    res = uniqueness_experiment(problem, rho=0.1)
    print(f"checkerboard operator, h = {h}, {res.n_nodes} comparison nodes with d >= 0.1")
    for pair in res.pairs():
        print(f"  {pair['a']:>10} vs {pair['b']:<10} relative difference {pair['difference']:.3e}")

    grid = build_grid(square, h)
    sol, rep = solve_blowup_ladder(grid, discretize(op, grid), nl, **ladder)
    fit = fit_boundary_rate(sol, nl=nl, window=(4 * h, 0.2))
    print(f"boundary rate: gamma_hat = {fit.gamma_hat:.4f} (expected {nl.gamma:g})")
    print(f"ladder: {len(rep.labels)} rungs, monotonicity violations {rep.monotone_violations}")
    print(f"centre value u(1/2, 1/2) = {sol.values[np.argmin(np.abs(sol.points - 0.5).sum(axis=1))]:.8f}")


if __name__ == "__main__":
    main(float(sys.argv[1]) if len(sys.argv) > 1 else 1 / 32)
