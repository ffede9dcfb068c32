"""Mesh-refinement study of the optimal control problem.

Solves the regularized optimality system on six meshes and prints errors
with experimental orders of convergence. Pass a directory to also write CSV.
"""
import sys

from vicontrol import ProblemData, default_params, emit_results, make_exact, run_h_study

ex = make_exact(default_params())
table = run_h_study(ProblemData.from_exact(ex), ex, workers=2)

print(f"{'h':>10} {'e_y':>11} {'eoc':>7} {'e_p':>11} {'eoc':>7} {'e_u':>11} {'eoc':>7}")
for r in table.rows:
    rates = [f"{v:7.4f}" if v is not None else " " * 7 for v in (r.eoc_y, r.eoc_p, r.eoc_u)]
    print(f"{r.h:10.4e} {r.e_y:11.4e} {rates[0]} {r.e_p:11.4e} {rates[1]} {r.e_u:11.4e} {rates[2]}")

if len(sys.argv) > 1:
    for path in emit_results(table, f"{sys.argv[1]}/eoc_table.csv"):
        print("wrote", path)
