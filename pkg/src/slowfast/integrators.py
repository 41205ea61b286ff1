"""Time-stepping schemes for the two-time-scale system.

All steps act per mode on coefficient arrays; batched states of shape
(n_samples, J) advance all Monte Carlo samples at once.  The slow component
is always advanced by the semi-implicit update

    x' = (x + dt * F(x, y')) / (1 + dt * lambda)

with the nonlinearity explicit in the slow variable and implicit in the fast
one (the freshly updated y' enters F).  The schemes differ in how y' is
produced:

* COUPLED_MODIFIED  y' = a_tau y + sqrt(2 dt/eps) (B1 g1 + B2 g2), the
  modified update whose one-step variance map has the equilibrium variance
  1/lambda as an exact fixed point for every step size.
* COUPLED_EXPO      exact Ornstein-Uhlenbeck transition, y' ~ N(e^(-dt lam/eps) y,
  (1 - e^(-2 dt lam/eps))/lam).
* LIMITING          y' is a fresh equilibrium draw Lambda^(-1/2) Gamma; the
  eps -> 0 limit of the coupled scheme at fixed dt.
* AVERAGED          deterministic: F is replaced by its Gaussian average.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .noise import StreamTag, sample_cylindrical_batch
from .nonlinearity import GridTransform, LinearInY, Nonlinearity, PointwiseSquare, eval_F, eval_Fbar
from .spectral import ModifiedOperators, SpectrumSpec, check_field, modified_operators

__all__ = [
    "SchemeKind",
    "CoupledState",
    "RunConfig",
    "step_coupled_modified",
    "step_coupled_expo",
    "step_limiting",
    "step_averaged",
    "run_trajectory",
    "run_trajectory_batch",
    "reference_weak_value",
    "solve_averaged_reference",
]


class SchemeKind(Enum):
    COUPLED_MODIFIED = "COUPLED_MODIFIED"
    COUPLED_EXPO = "COUPLED_EXPO"
    LIMITING = "LIMITING"
    AVERAGED = "AVERAGED"
    REFERENCE = "REFERENCE"


@dataclass
class CoupledState:
    """Slow/fast coefficient pair; arrays of identical shape (..., J)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape:
            raise ValueError(f"slow/fast shapes differ: {self.x.shape} vs {self.y.shape}")


@dataclass(frozen=True)
class RunConfig:
    """One time-integration setup; dt is derived as T/N, never stored."""

    T: float
    N: int
    eps: float
    scheme: SchemeKind
    x0: np.ndarray
    y0: np.ndarray

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.N < 1:
            raise ValueError("N must be a positive integer")
        if self.scheme in (SchemeKind.COUPLED_MODIFIED, SchemeKind.COUPLED_EXPO,
                           SchemeKind.REFERENCE) and self.eps <= 0:
            raise ValueError("eps must be positive for coupled schemes")
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "y0", np.asarray(self.y0, dtype=float))

    @property
    def dt(self) -> float:
        return self.T / self.N


def _slow_update(spec, dt, nl, gt, x, y_new):
    return (x + dt * eval_F(nl, gt, x, y_new)) / (1.0 + dt * spec.lambdas)


def step_coupled_modified(
    spec: SpectrumSpec,
    dt: float,
    eps: float,
    ops: ModifiedOperators,
    nl: Nonlinearity,
    gt: Optional[GridTransform],
    state: CoupledState,
    g1: np.ndarray,
    g2: np.ndarray,
) -> CoupledState:
    """One step of the coupled scheme with the modified fast update.

    ops must be the ModifiedOperators at tau = dt/eps; g1, g2 are independent
    cylindrical draws.
    """
    if dt <= 0 or eps <= 0:
        raise ValueError("dt and eps must be positive")
    check_field(spec, state.x)
    scale = np.sqrt(2.0 * dt / eps)
    y_new = ops.a_tau * state.y + scale * (ops.b1 * g1 + ops.b2 * g2)
    x_new = _slow_update(spec, dt, nl, gt, state.x, y_new)
    return CoupledState(x=x_new, y=y_new)


def step_coupled_expo(
    spec: SpectrumSpec,
    dt: float,
    eps: float,
    nl: Nonlinearity,
    gt: Optional[GridTransform],
    state: CoupledState,
    g: np.ndarray,
) -> CoupledState:
    """One step with the exact Ornstein-Uhlenbeck transition for the fast part."""
    if dt <= 0 or eps <= 0:
        raise ValueError("dt and eps must be positive")
    check_field(spec, state.x)
    z = dt * spec.lambdas / eps
    with np.errstate(under="ignore"):
        decay = np.exp(-z)
        sd = np.sqrt(-np.expm1(-2.0 * z) / spec.lambdas)
    y_new = decay * state.y + sd * g
    x_new = _slow_update(spec, dt, nl, gt, state.x, y_new)
    return CoupledState(x=x_new, y=y_new)


def step_limiting(
    spec: SpectrumSpec,
    dt: float,
    nl: Nonlinearity,
    gt: Optional[GridTransform],
    x: np.ndarray,
    g: np.ndarray,
) -> np.ndarray:
    """One step of the limiting scheme: F sees a fresh equilibrium draw."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    check_field(spec, x)
    y_draw = g / np.sqrt(spec.lambdas)
    return _slow_update(spec, dt, nl, gt, x, y_draw)


def step_averaged(
    spec: SpectrumSpec,
    dt: float,
    nl: Nonlinearity,
    gt: Optional[GridTransform],
    x: np.ndarray,
) -> np.ndarray:
    """One deterministic step of the implicit Euler scheme for the averaged equation."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    check_field(spec, x)
    return (x + dt * eval_Fbar(nl, gt, spec, x)) / (1.0 + dt * spec.lambdas)


def run_trajectory_batch(
    config: RunConfig,
    spec: SpectrumSpec,
    nl: Nonlinearity,
    gt: Optional[GridTransform],
    master_seed: int,
    first_sample: int,
    count: int,
    refinement: int = 1,
):
    """Advance samples first_sample..first_sample+count-1 to time T.

    Returns a CoupledState with (count, J) arrays for coupled schemes, or a
    (count, J) array of slow states for LIMITING/AVERAGED.  The noise draw of
    sample i at step n depends only on (master_seed, i, n, tag), so any batch
    partition reproduces the same trajectories.  refinement multiplies the
    step count (used by the reference solver); step indices then run over the
    refined grid.
    """
    if refinement < 1:
        raise ValueError("refinement must be >= 1")
    n_steps = config.N * refinement
    dt = config.T / n_steps
    scheme = config.scheme
    ones = np.ones((count, 1))
    x = ones * check_field(spec, config.x0)[None, :]

    if scheme == SchemeKind.AVERAGED:
        for _ in range(n_steps):
            x = step_averaged(spec, dt, nl, gt, x)
        return x

    if scheme == SchemeKind.LIMITING:
        for n in range(n_steps):
            g = sample_cylindrical_batch(spec, master_seed, StreamTag.GAMMA_1, n, first_sample, count)
            x = step_limiting(spec, dt, nl, gt, x, g)
        return x

    y = ones * check_field(spec, config.y0)[None, :]
    state = CoupledState(x=x, y=y)
    if scheme == SchemeKind.COUPLED_MODIFIED:
        ops = modified_operators(spec, dt / config.eps)
        for n in range(n_steps):
            g1 = sample_cylindrical_batch(spec, master_seed, StreamTag.GAMMA_1, n, first_sample, count)
            g2 = sample_cylindrical_batch(spec, master_seed, StreamTag.GAMMA_2, n, first_sample, count)
            state = step_coupled_modified(spec, dt, config.eps, ops, nl, gt, state, g1, g2)
        return state
    if scheme in (SchemeKind.COUPLED_EXPO, SchemeKind.REFERENCE):
        for n in range(n_steps):
            g = sample_cylindrical_batch(spec, master_seed, StreamTag.OU_EXACT, n, first_sample, count)
            state = step_coupled_expo(spec, dt, config.eps, nl, gt, state, g)
        return state
    raise ValueError(f"unknown scheme {scheme!r}")


def run_trajectory(
    config: RunConfig,
    spec: SpectrumSpec,
    nl: Nonlinearity,
    gt: Optional[GridTransform] = None,
    master_seed: int = 0,
    sample_index: int = 0,
):
    """Single trajectory to time T; final CoupledState, or slow field only
    for LIMITING/AVERAGED."""
    out = run_trajectory_batch(config, spec, nl, gt, master_seed, sample_index, 1)
    if isinstance(out, CoupledState):
        return CoupledState(x=out.x[0], y=out.y[0])
    return out[0]


def reference_weak_value(
    config: RunConfig,
    phi,
    refinement: int,
    n_samples: int,
    master_seed: int,
    spec: SpectrumSpec,
    nl: Nonlinearity,
    gt: Optional[GridTransform] = None,
    batch: int = 20000,
):
    """Monte Carlo proxy for E[phi(X(T))]: exact-transition scheme, refined grid.

    Returns (mean, stderr).  phi maps an (n, J) slow-state array to n values.
    The exact fast transition removes the fast-discretization error terms, so
    with a large refinement this is the natural stand-in for the mild
    solution.
    """
    if refinement < 16:
        raise ValueError("refinement must be >= 16 for a reference run")
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    ref_cfg = RunConfig(T=config.T, N=config.N, eps=config.eps,
                        scheme=SchemeKind.COUPLED_EXPO, x0=config.x0, y0=config.y0)
    vals = np.empty(n_samples)
    for a in range(0, n_samples, batch):
        b = min(a + batch, n_samples)
        st = run_trajectory_batch(ref_cfg, spec, nl, gt, master_seed, a, b - a, refinement=refinement)
        vals[a:b] = phi(st.x)
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / np.sqrt(n_samples))
    return mean, stderr


def solve_averaged_reference(
    spec: SpectrumSpec,
    nl: Nonlinearity,
    x0: np.ndarray,
    T: float,
    gt: Optional[GridTransform] = None,
    n_fallback: int = 2**14,
) -> np.ndarray:
    """Solution of the averaged evolution equation at time T.

    Closed forms where the catalog admits them:
      * linear-in-y coupling: Fbar = 0, pure semigroup decay;
      * pointwise square: Fbar is a constant field g, variation of constants
        x_j(T) = e^(-lam T) x0_j + (1 - e^(-lam T)) g_j / lam_j.
    Anything else falls back to the averaged implicit Euler scheme on a fine
    grid (order one, n_fallback steps).
    """
    x0 = check_field(spec, x0)
    if T < 0:
        raise ValueError("T must be nonnegative")
    with np.errstate(under="ignore"):
        decay = np.exp(-T * spec.lambdas)
    if isinstance(nl, LinearInY):
        return x0 * decay
    if isinstance(nl, PointwiseSquare):
        g = eval_Fbar(nl, gt, spec, np.zeros_like(x0))
        return x0 * decay + (1.0 - decay) * g / spec.lambdas
    x = x0.copy()
    dt = T / n_fallback
    for _ in range(n_fallback):
        x = step_averaged(spec, dt, nl, gt, x)
    return x
