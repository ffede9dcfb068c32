"""Sampling the quadratic growth condition around the optimum.

Draws seeded control perturbations, some of which push the state below zero
near the origin, and checks that the second-order expression stays nonnegative.
"""
from vicontrol import Mesh, check_growth_condition, default_params, make_exact

ex = make_exact(default_params())
rep = check_growth_condition(ex, Mesh(400), gamma_oracle=1e12, n_samples=32, radius=0.5, seed=0)

print(f"samples: {len(rep.samples)}  passed: {rep.passed}")
print(f"smallest total: {rep.min_total:.3e}  (tolerance {rep.tolerance:.1e})")
print(f"samples with negative state at 0: {rep.negative_state_samples}")
for s in sorted(rep.samples, key=lambda s: s.total)[:5]:
    print(f"  {s.descriptor['kind']:11s} |v| = {s.perturbation_norm:.3f}  y(0) = {s.y_at_zero:+.3e}  total = {s.total:.3e}")
