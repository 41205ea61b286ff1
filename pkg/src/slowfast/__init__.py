"""Spectral-Galerkin simulation lab for slow-fast stochastic evolution systems.

The package simulates the coupled system

    dX = -Lambda X dt + F(X, Y) dt
    dY = -(1/eps) Lambda Y dt + sqrt(2/eps) dW

projected on the first J eigenmodes of Lambda, together with its averaging
limit, and measures weak errors of the time discretizations, uniformly in the
time-scale separation eps.
"""

from .spectral import (
    SpectrumSpec,
    SpectralField,
    dirichlet_spectrum,
    quadratic_spectrum,
    field_norm,
    apply_resolvent,
    apply_semigroup,
    apply_fractional_power,
    ModifiedOperators,
    modified_operators,
    eigenvalue_error_bounds,
    log_ratio_constant,
)
from .noise import (
    StreamTag,
    SeedContext,
    sample_cylindrical,
    sample_cylindrical_batch,
    sample_invariant_measure,
    sample_invariant_measure_batch,
)
from .nonlinearity import (
    GridTransform,
    LinearInY,
    Affine,
    PointwiseSquare,
    PointwiseGeneral,
    saturating_square,
    pointwise_variance,
    eval_F,
    eval_Fbar,
)
from .integrators import (
    SchemeKind,
    CoupledState,
    RunConfig,
    step_coupled_modified,
    step_coupled_expo,
    step_limiting,
    step_averaged,
    run_trajectory,
    run_trajectory_batch,
    reference_weak_value,
    solve_averaged_reference,
)
from .moments import (
    ModeMoments,
    step_factors,
    continuous_mean,
    scheme_mean_recursion,
    second_moment_recursion,
    continuous_second_moment,
)
from .harness import (
    FunctionalKind,
    FunctionalSpec,
    McEstimate,
    RateFit,
    OracleMode,
    evaluate_functional,
    gaussian_expectation,
    mc_estimate,
    oracle_weak_value,
    continuous_weak_value,
    weak_error_curve,
    fit_rate,
    ap_diagram,
    averaging_curve,
    invariant_measure_check,
    uniform_sweep,
)
from .cli import run_cli

__version__ = "0.1.0"
