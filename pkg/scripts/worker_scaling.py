#!/usr/bin/env python3
"""Strong-scaling table for the parallel matvec.

Discretizes one sphere problem, then repeats the same GMRES solve at each
requested worker count, reporting wall time, parallel efficiency
T1/(w*Tw), and the max absolute difference of the solution vector against
the single-worker run. The matvec partitions collocation rows into
contiguous blocks with no cross-worker reductions, so that difference
must be exactly zero at any worker count.

Example:
    python scripts/worker_scaling.py --level 3 --workers 1 2 4 8 --out scaling.csv
"""

import argparse
import csv
import os
import time

import numpy as np

from pbbem.kernels import PhysicalParams
from pbbem.mesh import ChargeSystem, icosahedral_sphere
from pbbem.solver import (
    SolverConfig,
    assemble_rhs,
    discretize,
    gmres_solve,
    make_operator,
)

COLUMNS = ("workers", "time_solve_s", "efficiency", "max_solution_diff")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--level", type=int, default=3)
    ap.add_argument("--radius", type=float, default=2.0)
    ap.add_argument("--scheme", choices=["hobi", "lobi"], default="hobi")
    ap.add_argument("--kappa", type=float, default=0.0)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--out", default=None, help="write rows as CSV")
    args = ap.parse_args(argv)

    mesh = icosahedral_sphere(args.level, radius=args.radius)
    params = PhysicalParams(eps1=1.0, eps2=80.0, kappa=args.kappa)
    charges = ChargeSystem(positions=[[0.0, 0.0, 0.0]], charges=[1.0])
    config = SolverConfig(scheme=args.scheme, workers=1)
    problem = discretize(mesh, params, charges, config)
    b = assemble_rhs(problem)
    print(f"{args.scheme} level {args.level}: {mesh.n_faces} faces, "
          f"{problem.n_unknowns} unknowns, host has {os.cpu_count()} cpu")

    def timed_solve(workers):
        cfg = SolverConfig(scheme=args.scheme, workers=workers)
        t0 = time.monotonic()
        with make_operator(problem, cfg) as op:
            solution = gmres_solve(op, b, cfg)
        return solution, time.monotonic() - t0

    reference, t1 = timed_solve(1)
    results = {1: (reference, t1)}
    for w in args.workers:
        if w not in results:
            results[w] = timed_solve(w)

    rows = []
    print(f"{'workers':>7s} {'t[s]':>8s} {'efficiency':>10s} {'max diff':>10s}")
    for w in args.workers:
        solution, tw = results[w]
        efficiency = 1.0 if w == 1 else t1 / (w * tw)
        diff = float(np.abs(solution.vector - reference.vector).max())
        rows.append((w, tw, efficiency, diff))
        print(f"{w:7d} {tw:8.2f} {efficiency:10.2f} {diff:10.1e}")

    if args.out is not None:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(COLUMNS)
            writer.writerows(rows)
        print(f"wrote {len(rows)} rows to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
