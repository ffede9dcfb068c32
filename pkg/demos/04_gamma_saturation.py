"""Error in the state as a function of gamma on fixed meshes.

For small gamma the smoothing error dominates; past some gamma the curve
flattens at the discretization error of the mesh.
"""
from vicontrol import ProblemData, default_params, make_exact, run_gamma_study
from vicontrol.analysis import default_gamma_grid

ex = make_exact(default_params())
grid = default_gamma_grid()
study = run_gamma_study(ProblemData.from_exact(ex), ex, (1 / 50, 1 / 100, 1 / 200), grid)

for h in study.series:
    g, e = study.gammas(h), study.errors(h)
    print(f"h = 1/{round(1 / h)}")
    for k in range(0, len(g), 12):
        print(f"  gamma {g[k]:9.3e}  e_y {e[k]:.4e}")
    print(f"  gamma {g[-1]:9.3e}  e_y {e[-1]:.4e}  (plateau)")
