"""Why the modified fast update is worth the trouble.

The fast component is an Ornstein-Uhlenbeck process whose equilibrium law
has variance 1/lambda_j per mode.  The modified update keeps that variance
as an exact fixed point of its one-step variance map for EVERY step size;
the plain semi-implicit Euler update does not.  This script prints the
fixed-point residuals for both maps across nine orders of magnitude of tau,
then backs the algebra with a long sampled chain.
"""

import numpy as np

from slowfast import dirichlet_spectrum, invariant_measure_check

spec = dirichlet_spectrum(16)
taus = [1e-4, 1e-2, 1.0, 1e2, 1e4]

report = invariant_measure_check(spec, taus, empirical_steps=200_000, master_seed=1)

print("relative residual of the equilibrium variance under one step")
print(f"{'tau':>10} {'modified (worst mode)':>22} {'standard (worst mode)':>22}")
for i, tau in enumerate(report.tau_list):
    print(f"{tau:10.0e} {report.residual_modified[i].max():22.3e} "
          f"{report.residual_standard[i].max():22.3e}")

print("\nstandard map residual with tau*lambda = 1 per mode "
      f"(should be exactly 1/4): {report.standard_at_unit[0]:.6f}")

print("\nsampled long-run variance of mode 1 under the modified update")
print(f"{'tau':>10} {'time average of y^2':>20} {'target 1/lambda':>18} {'std err':>10}")
for tau, mean_sq, target, se in report.empirical:
    print(f"{tau:10.2f} {mean_sq:20.6e} {target:18.6e} {se:10.1e}")
