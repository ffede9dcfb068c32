"""Regularized forward problem with continuation in gamma.

Feeds the optimal control into the state equation and watches the discrete
state approach the exact one as gamma grows and the mesh is refined.
"""
import numpy as np

from vicontrol import Mesh, default_params, error_norm, make_exact, state_path
from vicontrol.forward import geometric_gammas

ex = make_exact(default_params())
gammas = geometric_gammas(1.0, 1e12, 1.5)

hs, errs = [], []
for n in (50, 100, 200, 400):
    y, reports = state_path(ex.u, gammas, Mesh(n), breakpoints=ex.breakpoints)
    e = error_norm(y, ex.y, "Linf", breakpoints=ex.breakpoints)
    its = sum(r.iterations for r in reports)
    print(f"n = {n:4d}  max error {e:.4e}  Newton iterations over {len(gammas)} gammas: {its}")
    hs.append(2 / n)
    errs.append(e)

slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
print(f"observed max-norm rate: {slope:.3f}")
