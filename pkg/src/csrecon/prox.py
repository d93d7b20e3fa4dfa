"""Proximal operator of the separable lp penalty (0 < p <= 1) and the data
fidelity gradient.

The penalty is lam * sum_i |x_i|^p on complex coefficients; its prox acts on
magnitudes and preserves phase. For p < 1 the scalar subproblem

    min_{x >= 0}  t * x^p + (x - a)^2 / 2,      t = eta * lam,  a = |v|

is solved by the standard dichotomy: compare the objective at 0 against the
interior stationary point found by safeguarded Newton on
t*p*x^(p-1) + x - a = 0. Ties go to 0 (the sparser choice).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .transforms import apply_mask, dwt2, fft2_centered, idwt2, ifft2_centered

_NEWTON_TOL = 1e-12
_NEWTON_MAX_ITERS = 100


@dataclass(frozen=True)
class ProxParams:
    """Scalars of one prox application: weight lam, exponent p, step eta."""

    lam: float
    p: float
    eta: float

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterError(f"lam must be >= 0, got {self.lam}")
        if not (0.0 < self.p <= 1.0):
            raise ParameterError(f"p must be in (0, 1], got {self.p}")
        if self.eta <= 0:
            raise ParameterError(f"eta must be > 0, got {self.eta}")

    @property
    def weight(self) -> float:
        return self.eta * self.lam


def _shrink_magnitudes(a: np.ndarray, t: float, p: float) -> np.ndarray:
    """Elementwise minimizer of t*x^p + (x-a)^2/2 over x >= 0 (a >= 0)."""
    if t == 0.0:
        return a.copy()
    if p == 1.0:
        return np.maximum(a - t, 0.0)

    out = np.zeros_like(a)
    # below x_bar the objective slope is dominated by the penalty; an interior
    # minimum can only exist past the inflection of the derivative
    x_bar = (t * p * (1.0 - p)) ** (1.0 / (2.0 - p))
    a_min = x_bar + t * p * x_bar ** (p - 1.0)
    active = a > a_min
    if not np.any(active):
        return out

    aa = a[active]
    lo = np.full_like(aa, x_bar)
    hi = aa.copy()
    x = aa.copy()
    for _ in range(_NEWTON_MAX_ITERS):
        g = t * p * x ** (p - 1.0) + x - aa
        lo = np.where(g < 0.0, x, lo)
        hi = np.where(g >= 0.0, x, hi)
        gp = t * p * (p - 1.0) * x ** (p - 2.0) + 1.0
        x_new = x - g / gp
        bad = ~np.isfinite(x_new) | (x_new <= lo) | (x_new >= hi)
        x_new = np.where(bad, 0.5 * (lo + hi), x_new)
        done = np.abs(x_new - x) < _NEWTON_TOL
        x = x_new
        if done.all():
            break

    interior = t * x ** p + 0.5 * (x - aa) ** 2
    at_zero = 0.5 * aa ** 2
    out[active] = np.where(interior < at_zero, x, 0.0)
    return out


def prox_lp(v, params: ProxParams) -> np.ndarray:
    """Elementwise prox of params.weight * sum |.|^p; phase is preserved."""
    v = np.asarray(v, dtype=np.complex128)
    a = np.abs(v)
    m = _shrink_magnitudes(a, params.weight, params.p)
    scale = np.divide(m, a, out=np.zeros_like(a), where=a > 0)
    return v * scale


def prox_lp_scalar(v: complex, params: ProxParams) -> complex:
    """Scalar form of :func:`prox_lp`."""
    return complex(prox_lp(np.array([v]), params)[0])


def prox_objective(x, v, params: ProxParams) -> float:
    """Value of params.weight * |x|^p + |x - v|^2 / 2 (the prox objective)."""
    x = np.asarray(x, dtype=np.complex128)
    v = np.asarray(v, dtype=np.complex128)
    return float(params.weight * np.sum(np.abs(x) ** params.p)
                 + 0.5 * np.sum(np.abs(x - v) ** 2))


def grad_f(alpha, problem) -> np.ndarray:
    """Gradient of the fidelity term 0.5*||mask o (F A alpha) - y||^2.

    Equals A^H F^H P^T (P F A alpha - y) with y stored zero-filled on the
    grid. Lipschitz with constant 1 (the composite forward map has unit
    spectral norm).
    """
    alpha = np.asarray(alpha, dtype=np.complex128)
    if alpha.shape != problem.y.shape:
        raise DimensionError(f"coeffs {alpha.shape} vs data {problem.y.shape}")
    k = fft2_centered(idwt2(alpha, problem.levels))
    residual = apply_mask(k, problem.mask) - problem.y
    return dwt2(ifft2_centered(residual), problem.levels)


def estimate_grad_lipschitz(problem, iters: int = 100, seed: int = 0) -> float:
    """Power-iteration estimate of ||P F A||^2 (diagnostic; analytically <= 1)."""
    from .transforms import power_iteration

    def normal_op(v):
        k = apply_mask(fft2_centered(idwt2(v, problem.levels)), problem.mask)
        return dwt2(ifft2_centered(k), problem.levels)

    return power_iteration(normal_op, problem.y.shape, iters=iters, seed=seed)
