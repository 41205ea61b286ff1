"""Catalog of coupling nonlinearities and their Gaussian averages.

Four variants are provided:

* ``LinearInY(c)``        F(x, y) = c*y            Fbar = 0
* ``Affine(c_x, c_y)``    F(x, y) = c_x*x + c_y*y  Fbar = c_x*x
* ``PointwiseSquare(c)``  f(u, v) = c*v^2 applied pointwise on a collocation
  grid; Fbar is the deterministic field c*sigma^2(xi) where sigma^2 is the
  pointwise variance of the fast equilibrium.
* ``PointwiseGeneral(f, quadrature_order)``  arbitrary smooth f(u, v) applied
  pointwise; Fbar averages v over N(0, sigma^2(xi)) by Gauss-Hermite
  quadrature.

PointwiseSquare has unbounded second-derivative growth at large amplitude, so
it sits outside the strict bounded-derivative class; it is kept because its
average is in closed form, which makes it the natural test oracle.  Use
``saturating_square`` for a bounded stand-in with the same small-amplitude
behavior.

All evaluation helpers accept coefficient arrays of shape (J,) or (n, J) and
return the same shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .spectral import SpectrumSpec

__all__ = [
    "GridTransform",
    "LinearInY",
    "Affine",
    "PointwiseSquare",
    "PointwiseGeneral",
    "Nonlinearity",
    "saturating_square",
    "pointwise_variance",
    "eval_F",
    "eval_Fbar",
    "nonlinearity_from_config",
]

_SQRT2 = np.sqrt(2.0)


class GridTransform:
    """Sine-collocation transform between coefficients and grid values.

    Nodes are xi_m = m/(M+1), m = 1..M, and the basis functions are
    e_j(xi) = sqrt(2) sin(j pi xi).  M >= 4J is enforced so that quadratic
    products of resolved modes do not alias back onto the first J modes.

    At the truncation levels this package targets the transforms are small
    dense matrix products (a 16-mode field lives on a 64-point grid), so the
    synthesis/analysis matrices are cached once instead of going through an
    FFT-based transform.  Analysis is the exact inverse of synthesis on the
    span of the first J modes, by discrete sine orthogonality.
    """

    def __init__(self, J: int, M: Optional[int] = None):
        if J < 1:
            raise ValueError("J must be >= 1")
        if M is None:
            M = 4 * J
        if M < 4 * J:
            raise ValueError(f"need M >= 4*J = {4 * J} collocation points, got {M}")
        self.J = J
        self.M = M
        self.nodes = np.arange(1, M + 1, dtype=float) / (M + 1)
        j = np.arange(1, J + 1, dtype=float)
        # (J, M): e_j evaluated at the nodes
        self._synth = _SQRT2 * np.sin(np.pi * np.outer(j, self.nodes))
        self._analyze = self._synth.T / (M + 1)

    def to_grid(self, coeffs: np.ndarray) -> np.ndarray:
        """Evaluate sum_j c_j e_j at the collocation nodes (last axis J -> M)."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.J:
            raise ValueError(f"expected {self.J} coefficients, got {coeffs.shape[-1]}")
        return coeffs @ self._synth

    def to_coeffs(self, grid: np.ndarray) -> np.ndarray:
        """Project grid values back onto the first J modes (last axis M -> J)."""
        grid = np.asarray(grid, dtype=float)
        if grid.shape[-1] != self.M:
            raise ValueError(f"expected {self.M} grid values, got {grid.shape[-1]}")
        return grid @ self._analyze


@dataclass(frozen=True)
class LinearInY:
    c: float

    def lipschitz_constant(self) -> float:
        return abs(self.c)


@dataclass(frozen=True)
class Affine:
    c_x: float
    c_y: float

    def lipschitz_constant(self) -> float:
        return float(np.hypot(self.c_x, self.c_y))


@dataclass(frozen=True)
class PointwiseSquare:
    c: float

    def lipschitz_constant(self) -> None:
        # not globally Lipschitz; see module docstring
        return None


@dataclass(frozen=True)
class PointwiseGeneral:
    """Pointwise nonlinearity f(u, v) with Gauss-Hermite averaged counterpart.

    f must be vectorized (ufunc-compatible) and smooth with bounded
    derivatives up to order 3 for the theory to apply; the default quadrature
    order 12 integrates polynomial v-dependence exactly up to degree 23.
    """

    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    quadrature_order: int = 12
    lipschitz: Optional[float] = None

    def __post_init__(self):
        if self.quadrature_order < 1:
            raise ValueError("quadrature_order must be >= 1")

    def lipschitz_constant(self) -> Optional[float]:
        return self.lipschitz


Nonlinearity = Union[LinearInY, Affine, PointwiseSquare, PointwiseGeneral]


def saturating_square(c: float) -> PointwiseGeneral:
    """Bounded variant of the pointwise square: f(u, v) = c*v^2/(1 + v^2)."""

    def f(u, v):
        v2 = v * v
        return c * v2 / (1.0 + v2)

    return PointwiseGeneral(f=f, quadrature_order=12, lipschitz=abs(c))


def pointwise_variance(spec: SpectrumSpec, gt: GridTransform) -> np.ndarray:
    """Grid values of sigma^2(xi) = sum_{j<=J} 2 sin(j pi xi)^2 / lambda_j.

    This is the pointwise variance of a draw from N(0, Lambda^-1) truncated
    to J modes; as J grows it approaches xi*(1 - xi).
    """
    if gt.J != spec.J:
        raise ValueError("grid transform and spectrum disagree on J")
    j = np.arange(1, spec.J + 1, dtype=float)
    s = np.sin(np.outer(gt.nodes, j) * np.pi)
    return (2.0 * s * s / spec.lambdas).sum(axis=1)


def _check_pair(x: np.ndarray, y: np.ndarray, J: int):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != J or y.shape[-1] != J:
        raise ValueError(f"fields must have {J} modes, got {x.shape[-1]} and {y.shape[-1]}")
    if x.shape != y.shape:
        x, y = np.broadcast_arrays(x, y)
    return x, y


def eval_F(nl: Nonlinearity, gt: Optional[GridTransform], x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Coefficients of F(x, y), truncated to the first J modes."""
    if isinstance(nl, LinearInY):
        y = np.asarray(y, dtype=float)
        return nl.c * y
    if isinstance(nl, Affine):
        x, y = _check_pair(x, y, np.asarray(x).shape[-1])
        return nl.c_x * x + nl.c_y * y
    if gt is None:
        raise ValueError("pointwise nonlinearities need a GridTransform")
    x, y = _check_pair(x, y, gt.J)
    if isinstance(nl, PointwiseSquare):
        gy = gt.to_grid(y)
        return gt.to_coeffs(nl.c * gy * gy)
    if isinstance(nl, PointwiseGeneral):
        gx = gt.to_grid(x)
        gy = gt.to_grid(y)
        return gt.to_coeffs(nl.f(gx, gy))
    raise TypeError(f"unknown nonlinearity {nl!r}")


def eval_Fbar(
    nl: Nonlinearity,
    gt: Optional[GridTransform],
    spec: SpectrumSpec,
    x: np.ndarray,
) -> np.ndarray:
    """Coefficients of the averaged nonlinearity Fbar(x) = E F(x, Y), Y ~ N(0, Lambda^-1)."""
    x = np.asarray(x, dtype=float)
    if isinstance(nl, LinearInY):
        return np.zeros_like(x)
    if isinstance(nl, Affine):
        return nl.c_x * x
    if gt is None:
        raise ValueError("pointwise nonlinearities need a GridTransform")
    if x.shape[-1] != gt.J:
        raise ValueError(f"field must have {gt.J} modes, got {x.shape[-1]}")
    sig2 = pointwise_variance(spec, gt)
    if isinstance(nl, PointwiseSquare):
        coeffs = gt.to_coeffs(nl.c * sig2)
        return np.broadcast_to(coeffs, x.shape).copy()
    if isinstance(nl, PointwiseGeneral):
        t, w = np.polynomial.hermite.hermgauss(nl.quadrature_order)
        gx = gt.to_grid(x)
        sig = np.sqrt(sig2)
        # E f(u, V) for V ~ N(0, sig^2): Gauss-Hermite with v = sqrt(2)*sig*t
        acc = np.zeros_like(gx)
        for tk, wk in zip(t, w):
            acc += wk * nl.f(gx, _SQRT2 * sig * tk)
        return gt.to_coeffs(acc / np.sqrt(np.pi))
    raise TypeError(f"unknown nonlinearity {nl!r}")


def nonlinearity_from_config(cfg: dict) -> Nonlinearity:
    """Build a catalog member from a JSON-style {variant, params} mapping."""
    variant = cfg.get("variant")
    params = cfg.get("params", {})
    if variant == "LINEAR_IN_Y":
        return LinearInY(c=float(params.get("c", 1.0)))
    if variant == "AFFINE":
        return Affine(c_x=float(params.get("c_x", 0.0)), c_y=float(params.get("c_y", 0.0)))
    if variant == "POINTWISE_SQUARE":
        return PointwiseSquare(c=float(params.get("c", 1.0)))
    if variant == "SATURATING_SQUARE":
        return saturating_square(c=float(params.get("c", 1.0)))
    raise ValueError(f"unknown nonlinearity variant {variant!r}")
