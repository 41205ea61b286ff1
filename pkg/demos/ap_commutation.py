"""The commutation diagram, measured.

At a fixed step size the coupled scheme should land on the limiting scheme
as eps -> 0 (asymptotic preserving), and the limiting scheme should land on
the averaged equation as dt -> 0.  Both legs are measured here without any
sampling noise through the moment recursions.
"""

import numpy as np

from slowfast import (
    FunctionalKind,
    FunctionalSpec,
    LinearInY,
    RunConfig,
    SchemeKind,
    ap_diagram,
    dirichlet_spectrum,
    evaluate_functional,
    fit_rate,
    oracle_weak_value,
    solve_averaged_reference,
)

spec = dirichlet_spectrum(16)
nl = LinearInY(c=1.0)
phi = FunctionalSpec(kind=FunctionalKind.NORM_SQUARED)
x0 = 1.0 / spec.lambdas
y0 = np.ones(16)

print("leg 1: coupled(eps) -> limiting at fixed dt = 2^-6")
cfg = RunConfig(T=1.0, N=64, eps=1.0, scheme=SchemeKind.COUPLED_MODIFIED, x0=x0, y0=y0)
for eps, gap, _ in ap_diagram(cfg, [4.0**-k for k in range(0, 7)], phi, spec, nl):
    print(f"  eps = {eps:9.2e}   |E phi(coupled) - E phi(limiting)| = {gap:.3e}")

print("\nleg 2: limiting(dt) -> averaged equation (linear coupling: Fbar = 0)")
xbar = solve_averaged_reference(spec, nl, x0, 1.0)
target = float(evaluate_functional(phi, xbar))
pts = []
for k in range(3, 10):
    dt = 2.0**-k
    lim = RunConfig(T=1.0, N=int(round(1.0 / dt)), eps=1.0, scheme=SchemeKind.LIMITING,
                    x0=x0, y0=y0)
    gap = abs(oracle_weak_value(lim, phi, spec, nl) - target)
    pts.append((dt, gap))
    print(f"  dt = 2^{-k}   |E phi(limiting) - phi(averaged)| = {gap:.3e}")
fit = fit_rate(pts)
print(f"  fitted order {fit.slope:.3f} (first order, as it should be)")
