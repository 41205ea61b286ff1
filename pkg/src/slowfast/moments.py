"""Exact first and second moments for the linear-in-y coupling.

When F(x, y) = c*y the modes decouple and every scheme in the catalog has
Gaussian iterates whose per-mode moments obey constant-coefficient affine
recursions.  This module propagates those recursions exactly, which turns
weak-error measurement into a noise-free computation: repeated runs give bit
identical errors.

The continuous-time counterparts serve as the truth side: the mean comes
from the variation-of-constants formula, the second moments from the 3x3
covariance ODE

    d var_x / dt = -2 lam var_x + 2 c cov
    d cov   / dt = -(lam + lam/eps) cov + c var_y
    d var_y / dt = -(2 lam / eps) var_y + 2 / eps

solved either by matrix exponential (exact, default) or by an implicit
step-control integrator (the brute-force oracle used in tests).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .integrators import SchemeKind

__all__ = [
    "ModeMoments",
    "step_factors",
    "continuous_mean",
    "scheme_mean_recursion",
    "second_moment_recursion",
    "continuous_second_moment",
]

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class ModeMoments:
    """Per-mode Gaussian moments; fields are scalars or arrays over modes."""

    mean_x: ArrayLike = 0.0
    mean_y: ArrayLike = 0.0
    var_x: ArrayLike = 0.0
    var_y: ArrayLike = 0.0
    cov_xy: ArrayLike = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.var_x) < 0) or np.any(np.asarray(self.var_y) < 0):
            raise ValueError("variances must be nonnegative")
        c2 = np.asarray(self.cov_xy) ** 2
        bound = np.asarray(self.var_x) * np.asarray(self.var_y)
        if np.any(c2 > bound * (1 + 1e-12) + 1e-300):
            raise ValueError("cov_xy^2 may not exceed var_x*var_y")


def step_factors(kind: SchemeKind, lam: ArrayLike, eps: float, dt: float):
    """Per-step fast decay factor a and fast noise variance s2 for one scheme.

    COUPLED_MODIFIED: a = 1/(1+tau*lam), s2 = 2*tau*(b1^2+b2^2)
                        = tau*(2+tau*lam)/(1+tau*lam)^2,   tau = dt/eps
    COUPLED_EXPO:     a = exp(-tau*lam), s2 = (1-exp(-2*tau*lam))/lam
    LIMITING:         y is replaced by a fresh draw each step: a = 0, s2 = 1/lam
    AVERAGED:         no fast variable: a = 0, s2 = 0
    """
    lam = np.asarray(lam, dtype=float)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if kind in (SchemeKind.COUPLED_MODIFIED, SchemeKind.COUPLED_EXPO) and eps <= 0:
        raise ValueError("eps must be positive for coupled schemes")
    if kind == SchemeKind.COUPLED_MODIFIED:
        tau = dt / eps
        a = 1.0 / (1.0 + tau * lam)
        s2 = tau * (2.0 + tau * lam) * a * a
    elif kind in (SchemeKind.COUPLED_EXPO, SchemeKind.REFERENCE):
        tau = dt / eps
        with np.errstate(under="ignore"):
            a = np.exp(-tau * lam)
            s2 = -np.expm1(-2.0 * tau * lam) / lam
    elif kind == SchemeKind.LIMITING:
        a = np.zeros_like(lam)
        s2 = 1.0 / lam
    elif kind == SchemeKind.AVERAGED:
        a = np.zeros_like(lam)
        s2 = np.zeros_like(lam)
    else:
        raise ValueError(f"unknown scheme kind {kind!r}")
    return a, s2


def _phi1(u: np.ndarray) -> np.ndarray:
    """(e^u - 1)/u with the removable singularity filled in."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 1e-6
    safe = np.where(small, 1.0, u)
    with np.errstate(over="ignore", invalid="ignore"):
        exact = np.expm1(safe) / safe
    return np.where(small, 1.0 + u / 2.0 + u * u / 6.0, exact)


def continuous_mean(
    lam: ArrayLike, c: float, eps: float, T: float, x0: ArrayLike, y0: ArrayLike
) -> np.ndarray:
    """E X(T) per mode for the exact dynamics with F = c*y.

    Equals e^(-lam T) x0 + c y0 (e^(-lam T/eps) - e^(-lam T)) / (lam (1 - 1/eps))
    for eps != 1; the eps = 1 limit c y0 T e^(-lam T) is obtained from the same
    stable form, so no separate branch is visible to the caller.
    """
    lam = np.asarray(lam, dtype=float)
    if eps <= 0 or T < 0:
        raise ValueError("need eps > 0 and T >= 0")
    u = lam * T * (1.0 - 1.0 / eps)
    with np.errstate(under="ignore"):
        return np.exp(-lam * T) * (np.asarray(x0, float) + c * np.asarray(y0, float) * T * _phi1(u))


def _mean_matrices(kind, lam, c, eps, dt):
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    a, _ = step_factors(kind, lam, eps, dt)
    r = 1.0 / (1.0 + dt * lam)
    M = np.zeros((n, 2, 2))
    M[:, 0, 0] = a
    M[:, 1, 0] = r * dt * c * a
    M[:, 1, 1] = r
    return M


def scheme_mean_recursion(
    kind: SchemeKind,
    lam: ArrayLike,
    c: float,
    eps: float,
    dt: float,
    N: int,
    x0: ArrayLike,
    y0: ArrayLike,
    return_mean_y: bool = False,
):
    """Exact E X_N (optionally also E Y_N) of the scheme with F = c*y.

    The per-step map is m_y <- a m_y; m_x <- (m_x + dt c m_y') / (1 + dt lam),
    with m_y' the updated fast mean (the nonlinearity sees the new iterate).
    Noise terms are centered so they do not enter.  Small step counts iterate
    the map literally; large ones use an exact matrix power of the same map.
    """
    lam = np.asarray(lam, dtype=float)
    if N < 0:
        raise ValueError("N must be nonnegative")
    mx = np.asarray(x0, dtype=float) * np.ones_like(lam)
    my = np.asarray(y0, dtype=float) * np.ones_like(lam)
    if N == 0:
        return (mx, my) if return_mean_y else mx
    a, _ = step_factors(kind, lam, eps, dt)
    one_plus = 1.0 + dt * lam
    if N <= 4096:
        for _ in range(N):
            my = a * my
            mx = (mx + dt * c * my) / one_plus
    else:
        mpow = np.linalg.matrix_power(_mean_matrices(kind, lam, c, eps, dt), N)
        out = np.einsum("nij,nj->ni", mpow, np.stack([my, mx], axis=1))
        my, mx = out[:, 0], out[:, 1]
    return (mx, my) if return_mean_y else mx


def _second_matrices(kind, lam, c, eps, dt):
    # homogeneous affine map on (var_y, cov_xy, var_x, 1)
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    a, s2 = step_factors(kind, lam, eps, dt)
    r = 1.0 / (1.0 + dt * lam)
    M = np.zeros((n, 4, 4))
    M[:, 0, 0] = a * a
    M[:, 0, 3] = s2
    M[:, 1, 0] = r * dt * c * a * a
    M[:, 1, 1] = r * a
    M[:, 1, 3] = r * dt * c * s2
    M[:, 2, 0] = r * r * dt * dt * c * c * a * a
    M[:, 2, 1] = 2.0 * r * r * dt * c * a
    M[:, 2, 2] = r * r
    M[:, 2, 3] = r * r * dt * dt * c * c * s2
    M[:, 3, 3] = 1.0
    return M


def second_moment_recursion(
    kind: SchemeKind,
    lam: ArrayLike,
    c: float,
    eps: float,
    dt: float,
    N: int,
    start: ModeMoments,
) -> ModeMoments:
    """Exact Gaussian moments of the scheme after N steps, F = c*y.

    With y' = a y + xi (xi centered, variance s2, independent of the state),
    x' = (x + dt c y')/(1 + dt lam), the centered second moments obey

        var_y' = a^2 var_y + s2
        cov'   = (a cov + dt c var_y') / (1 + dt lam)
        var_x' = (var_x + 2 dt c a cov + dt^2 c^2 var_y') / (1 + dt lam)^2

    For the LIMITING scheme the fresh draw leaves no cross correlation, which
    is the a = 0, s2 = 1/lam case of the same map.
    """
    lam = np.asarray(lam, dtype=float)
    if N < 0:
        raise ValueError("N must be nonnegative")
    ones = np.ones_like(lam)
    mx, my = scheme_mean_recursion(kind, lam, c, eps, dt, N, start.mean_x, start.mean_y, True)
    vy = np.asarray(start.var_y, float) * ones
    cv = np.asarray(start.cov_xy, float) * ones
    vx = np.asarray(start.var_x, float) * ones
    if N == 0:
        return ModeMoments(mean_x=mx, mean_y=my, var_x=vx, var_y=vy, cov_xy=cv)
    a, s2 = step_factors(kind, lam, eps, dt)
    one_plus = 1.0 + dt * lam
    if N <= 4096:
        for _ in range(N):
            vy_new = a * a * vy + s2
            cv_new = (a * cv + dt * c * vy_new) / one_plus
            vx = (vx + 2.0 * dt * c * a * cv + dt * dt * c * c * vy_new) / (one_plus * one_plus)
            vy, cv = vy_new, cv_new
    else:
        spow = np.linalg.matrix_power(_second_matrices(kind, lam, c, eps, dt), N)
        v = np.einsum("nij,nj->ni", spow, np.stack([vy, cv, vx, ones], axis=1))
        vy, cv, vx = v[:, 0], v[:, 1], v[:, 2]
    vx = np.maximum(vx, 0.0)
    vy = np.maximum(vy, 0.0)
    return ModeMoments(mean_x=mx, mean_y=my, var_x=vx, var_y=vy, cov_xy=cv)


def continuous_second_moment(
    lam: ArrayLike,
    c: float,
    eps: float,
    T: float,
    start: ModeMoments,
    method: str = "expm",
) -> ModeMoments:
    """Second moments of the exact dynamics at time T, per mode.

    method="expm" evaluates the matrix exponential of the (upper triangular)
    covariance generator exactly.  method="ode" integrates the same system
    with an implicit step-control solver at tolerance 1e-10; it is the
    brute-force oracle the expm path is validated against, and is the one to
    reach for when in doubt.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if eps <= 0 or T < 0:
        raise ValueError("need eps > 0 and T >= 0")
    ones = np.ones_like(lam)
    mx = continuous_mean(lam, c, eps, T, start.mean_x, start.mean_y)
    with np.errstate(under="ignore"):
        my = np.exp(-lam * T / eps) * (np.asarray(start.mean_y, float) * ones)
    vx0 = np.asarray(start.var_x, float) * ones
    cv0 = np.asarray(start.cov_xy, float) * ones
    vy0 = np.asarray(start.var_y, float) * ones
    vx = np.empty_like(lam)
    cv = np.empty_like(lam)
    vy = np.empty_like(lam)
    for i, L in enumerate(lam):
        if method == "expm":
            gen = np.array(
                [
                    [-2.0 * L, 2.0 * c, 0.0, 0.0],
                    [0.0, -(L + L / eps), c, 0.0],
                    [0.0, 0.0, -2.0 * L / eps, 2.0 / eps],
                    [0.0, 0.0, 0.0, 0.0],
                ]
            )
            out = expm(gen * T) @ np.array([vx0[i], cv0[i], vy0[i], 1.0])
            vx[i], cv[i], vy[i] = out[:3]
        elif method == "ode":
            def rhs(t, v, L=L):
                return [
                    -2.0 * L * v[0] + 2.0 * c * v[1],
                    -(L + L / eps) * v[1] + c * v[2],
                    -2.0 * L * v[2] / eps + 2.0 / eps,
                ]

            sol = solve_ivp(
                rhs,
                (0.0, T),
                [vx0[i], cv0[i], vy0[i]],
                method="Radau",
                rtol=1e-10,
                atol=1e-13,
            )
            if not sol.success:
                raise RuntimeError(f"covariance ODE solve failed: {sol.message}")
            vx[i], cv[i], vy[i] = sol.y[:, -1]
        else:
            raise ValueError(f"unknown method {method!r}")
    vx = np.maximum(vx, 0.0)
    vy = np.maximum(vy, 0.0)
    return ModeMoments(mean_x=mx, mean_y=my, var_x=vx, var_y=vy, cov_xy=cv)
