#!/usr/bin/env python3
"""Step-size study for the heat flow: terminal error against the exact
semigroup under dt halving, for both time-stepping schemes.

The observed order should approach 1 for implicit Euler and 2 for
Crank-Nicolson.
"""

import argparse
import math

import numpy as np

from ncpde import backends as bk
from ncpde.dirichlet import build_space
from ncpde.evolution import EvolutionProblem, solve_evolution

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)


def problem_for(name: str):
    if name == "qubit":
        desc = bk.MatrixAlgebra(2, (SIGMA_Z,))
        return build_space(desc), bk.element(desc, SIGMA_X)
    desc = bk.NCTorus(1, 0.41421356237309515)
    space = build_space(desc)
    u0 = bk.monomial(desc, 1, 0) + bk.scale(0.5, bk.monomial(desc, 1, 1))
    return space, u0


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--backend", choices=["qubit", "torus"], default="qubit")
    parser.add_argument("--horizon", type=float, default=1.0)
    parser.add_argument("--coarsest-dt", type=float, default=1e-2)
    parser.add_argument("--halvings", type=int, default=3)
    args = parser.parse_args()

    space, u0 = problem_for(args.backend)
    print(f"backend={args.backend}  horizon={args.horizon}")
    for scheme in ("implicit-euler", "crank-nicolson"):
        print(f"\n{scheme}")
        print(f"{'dt':>10s} {'terminal error':>16s} {'observed order':>15s}")
        prev = None
        dt = args.coarsest_dt
        for _ in range(args.halvings + 1):
            prob = EvolutionProblem(space, "heat", u0, horizon=args.horizon,
                                    dt=dt, scheme=scheme)
            err = solve_evolution(prob).terminal_error_vs_oracle
            order = "" if prev is None else f"{math.log2(prev / err):15.3f}"
            print(f"{dt:10.2e} {err:16.6e} {order:>15s}")
            prev = err
            dt /= 2.0


if __name__ == "__main__":
    main()
