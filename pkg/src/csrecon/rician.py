"""Reconstruction under Rician noise.

A magnitude image acquired with iid Gaussian noise n1, n2 in the real and
imaginary channels observes z = sqrt((x + n1)^2 + n2^2). The model is split
into two subproblems solved alternately, each by one pass of the safeguarded
iteration: a k-space fidelity solve for the noisy magnitude z, and a
noise-removal solve for the clean image x whose fidelity module is an
algebraic two-stage inversion (strip n2^2 in the squared domain, then
subtract n1).

Noise fields are either the simulator's own (oracle mode, which validates
the algebra exactly) or estimated blind as n1=0, n2^2 = max(z^2 - x^2, 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, ParameterError
from .solver import (IterateTrace, IterationModel, SolverConfig,
                     run_iterations)
from .transforms import (SamplingMask, dwt2, fft2_centered, idwt2,
                         ifft2_centered, power_iteration)

_EPS_DENOM = 1e-12

NOISE_MODES = ("oracle", "blind")


@dataclass
class RicianParams:
    """Scalars of the split model and its outer loop."""

    rho1: float = 0.01
    rho2: float = 0.01
    lam1: float = 1.0
    lam2: float = 1.0
    outer_iters: int = 10
    inner_iters: int = 20
    noise_mode: str = "oracle"

    def __post_init__(self):
        if self.rho1 <= 0 or self.rho2 <= 0:
            raise ParameterError("rho1 and rho2 must be > 0")
        if self.lam1 < 0 or self.lam2 < 0:
            raise ParameterError("lam1 and lam2 must be >= 0")
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ParameterError("iteration counts must be >= 1")
        if self.noise_mode not in NOISE_MODES:
            raise ParameterError(f"noise_mode must be one of {NOISE_MODES}")


@dataclass
class RicianTrace:
    """Outer-loop record: one inner trace per subproblem pass plus the
    constraint residual ||z - sqrt((x+n1)^2 + n2^2)|| per round."""

    z_traces: list[IterateTrace] = field(default_factory=list)
    x_traces: list[IterateTrace] = field(default_factory=list)
    consistency: list[float] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def outer_rounds(self) -> int:
        return len(self.consistency)


def rician_forward(x, sigma: float, seed: int = 0):
    """Corrupt a real-valued magnitude image with Rician noise.

    Draws n1, n2 ~ N(0, sigma^2) and returns (z, n1, n2) with
    z = sqrt((x + n1)^2 + n2^2). sigma=0 gives z = |x| exactly.
    """
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")
    xr = np.asarray(x)
    xr = xr.real if np.iscomplexobj(xr) else xr.astype(np.float64)
    rng = np.random.default_rng(seed)
    n1 = rng.normal(0.0, sigma, xr.shape)
    n2 = rng.normal(0.0, sigma, xr.shape)
    z = np.sqrt((xr + n1) ** 2 + n2 ** 2)
    return z, n1, n2


def rician_z_fidelity(z_prev, x_prev, y, mask: SamplingMask,
                      rho1: float, rho2: float) -> np.ndarray:
    """Closed-form minimizer of
    0.5*||mask o (F u) - y||^2 + rho1/2*||u - z_prev||^2 + rho2/2*||u - x_prev||^2.

    Diagonal in k-space: sampled bins (y + rho1 Fz + rho2 Fx)/(1+rho1+rho2),
    unsampled bins (rho1 Fz + rho2 Fx)/(rho1+rho2).
    """
    if rho1 <= 0 or rho2 <= 0:
        raise ParameterError("rho1 and rho2 must be > 0")
    kz = fft2_centered(np.asarray(z_prev, dtype=np.complex128))
    kx = fft2_centered(np.asarray(x_prev, dtype=np.complex128))
    num = rho1 * kz + rho2 * kx
    blended = np.where(mask.keep, (y + num) / (1.0 + rho1 + rho2),
                       num / (rho1 + rho2))
    return ifft2_centered(blended)


def rician_z_grad(z, y, mask: SamplingMask, z_prev, rho1: float) -> np.ndarray:
    """Gradient of 0.5*||mask o (F z) - y||^2 + rho1/2*||z - z_prev||^2.

    Lipschitz constant 1 + rho1 (unit-norm Fourier part plus the diagonal
    proximity term).
    """
    z = np.asarray(z, dtype=np.complex128)
    k = np.where(mask.keep, fft2_centered(z), 0.0)
    return ifft2_centered(k - y) + rho1 * (z - np.asarray(z_prev))


def rician_x_fidelity(z_new, n1, n2) -> np.ndarray:
    """Two-stage algebraic noise stripping.

    Stage 1 removes the quadrature noise in the squared domain,
    (x + n1)^2 ~ max(z^2 - n2^2, 0); stage 2 takes the square root and
    subtracts n1. With the exact noise fields this inverts
    :func:`rician_forward` wherever x + n1 >= 0.
    """
    z = np.abs(np.asarray(z_new))
    stage1 = np.maximum(z * z - np.asarray(n2) ** 2, 0.0)
    return np.sqrt(stage1) - np.asarray(n1)


def rician_x_grad(x, z_new, n1, n2) -> np.ndarray:
    """Gradient of 0.5*||sqrt((x+n1)^2 + n2^2) - z||^2 in x.

    Pointwise (x + n1) * (1 - z / r) with r = sqrt((x+n1)^2 + n2^2); the
    denominator is clamped below at 1e-12. Complex iterates are differentiated
    through their real part only (the model is about real magnitudes).
    """
    xr = np.asarray(x)
    xr = xr.real if np.iscomplexobj(xr) else xr.astype(np.float64)
    shifted = xr + np.asarray(n1)
    r = np.sqrt(shifted ** 2 + np.asarray(n2) ** 2)
    r = np.maximum(r, _EPS_DENOM)
    return (shifted * (1.0 - np.abs(np.asarray(z_new)) / r)).astype(np.complex128)


def rician_x_fidelity_value(x, z_new, n1, n2) -> float:
    xr = np.asarray(x)
    xr = xr.real if np.iscomplexobj(xr) else xr.astype(np.float64)
    r = np.sqrt((xr + np.asarray(n1)) ** 2 + np.asarray(n2) ** 2)
    return 0.5 * float(np.sum((r - np.abs(np.asarray(z_new))) ** 2))


def estimate_noise_fields(z, x_est):
    """Blind noise-field estimate: n1 = 0, n2 = sqrt(max(z^2 - x^2, 0))."""
    zm = np.abs(np.asarray(z))
    xm = np.abs(np.asarray(x_est))
    n2 = np.sqrt(np.maximum(zm * zm - xm * xm, 0.0))
    return np.zeros_like(n2), n2


def x_pass_lipschitz(x0, z_new, n1, n2, safety: float = 1.5) -> float:
    """Estimate of the x-subproblem gradient Lipschitz constant.

    Power iteration on the (diagonal) Hessian linearized at the pass start:
    d = 1 - z * n2^2 / r^3. Floored at 1 and inflated by ``safety``.
    """
    xr = np.asarray(x0)
    xr = xr.real if np.iscomplexobj(xr) else xr.astype(np.float64)
    r = np.maximum(np.sqrt((xr + np.asarray(n1)) ** 2 + np.asarray(n2) ** 2),
                   _EPS_DENOM)
    diag = 1.0 - np.abs(np.asarray(z_new)) * np.asarray(n2) ** 2 / r ** 3
    est = power_iteration(lambda v: diag * v, diag.shape, iters=50)
    return max(1.0, safety * float(est))


def _z_pass_model(y, mask, z_anchor, x_anchor, params: RicianParams,
                  levels: int) -> IterationModel:
    L_f = 1.0 + params.rho1

    def f_value(zc):
        z = idwt2(zc, levels)
        k = np.where(mask.keep, fft2_centered(z), 0.0)
        fid = 0.5 * float(np.linalg.norm(k - y) ** 2)
        prox_term = 0.5 * params.rho1 * float(np.linalg.norm(z - z_anchor) ** 2)
        return fid + prox_term

    return IterationModel(
        grad=lambda zc: dwt2(rician_z_grad(idwt2(zc, levels), y, mask,
                                           z_anchor, params.rho1), levels),
        f_value=f_value,
        fidelity=lambda zc: dwt2(rician_z_fidelity(idwt2(zc, levels), x_anchor,
                                                   y, mask, params.rho1,
                                                   params.rho2), levels),
        to_image=lambda zc: idwt2(zc, levels),
        levels=levels,
        L_f=L_f,
        rho_momentum=4.0 * L_f,
    )


def _x_pass_model(z_new, n1, n2, L_x: float, levels: int) -> IterationModel:
    u_x = dwt2(rician_x_fidelity(z_new, n1, n2).astype(np.complex128), levels)
    return IterationModel(
        grad=lambda xc: dwt2(rician_x_grad(idwt2(xc, levels), z_new, n1, n2),
                             levels),
        f_value=lambda xc: rician_x_fidelity_value(idwt2(xc, levels), z_new,
                                                   n1, n2),
        fidelity=lambda xc: u_x,
        to_image=lambda xc: idwt2(xc, levels),
        levels=levels,
        L_f=L_x,
        rho_momentum=4.0 * L_x,
    )


def rician_reconstruct(y, mask: SamplingMask, sigma: float,
                       config: SolverConfig, params: RicianParams | None = None,
                       denoiser=None, n1=None, n2=None, levels: int = 3,
                       ref=None) -> tuple[np.ndarray, RicianTrace]:
    """Alternate safeguarded passes on the z- and x-subproblems.

    Oracle mode requires the simulator's noise fields n1, n2; blind mode
    re-estimates them each outer round from the current iterates. Terminates
    on joint relative change <= config.stop_tol or after outer_iters rounds.
    """
    params = params or RicianParams()
    if denoiser is None:
        from .denoisers import IdentityDenoiser
        denoiser = IdentityDenoiser()
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != mask.shape:
        raise DimensionError(f"y {y.shape} vs mask {mask.shape}")
    if params.noise_mode == "oracle":
        if n1 is None or n2 is None:
            raise ParameterError("oracle noise_mode requires n1 and n2 fields")
        n1 = np.asarray(n1, dtype=np.float64)
        n2 = np.asarray(n2, dtype=np.float64)

    trace = RicianTrace(meta={
        "sigma": sigma, "noise_mode": params.noise_mode,
        "rho1": params.rho1, "rho2": params.rho2,
        "lam1": params.lam1, "lam2": params.lam2,
    })

    z = ifft2_centered(y)
    if params.noise_mode == "oracle":
        x = rician_x_fidelity(np.abs(z), n1, n2).astype(np.complex128)
    else:
        x = np.abs(z).astype(np.complex128)

    inner_common = dict(max_iters=params.inner_iters, eta1=None, eta2=None)
    for outer in range(params.outer_iters):
        if params.noise_mode == "blind":
            n1, n2 = estimate_noise_fields(z, x)

        z_cfg = replace(config, lam=params.lam1, **inner_common)
        z_model = _z_pass_model(y, mask, z, x, params, levels)
        zc, z_trace = run_iterations(dwt2(z, levels), z_model, z_cfg, denoiser,
                                     ref=ref, meta={"task": "rician_z",
                                                    "outer": outer})
        z_new = idwt2(zc, levels)

        z_mag = np.abs(z_new)
        L_x = x_pass_lipschitz(x, z_mag, n1, n2)
        x_cfg = replace(config, lam=params.lam2, **inner_common)
        x_model = _x_pass_model(z_mag, n1, n2, L_x, levels)
        xc, x_trace = run_iterations(dwt2(x, levels), x_model, x_cfg, denoiser,
                                     ref=ref, meta={"task": "rician_x",
                                                    "outer": outer,
                                                    "L_x": L_x})
        x_new = idwt2(xc, levels)

        rel_z = float(np.linalg.norm(z_new - z)) / max(
            float(np.linalg.norm(z)), np.finfo(float).tiny)
        rel_x = float(np.linalg.norm(x_new - x)) / max(
            float(np.linalg.norm(x)), np.finfo(float).tiny)
        z, x = z_new, x_new

        resid = np.abs(z) - np.sqrt((x.real + n1) ** 2 + n2 ** 2)
        trace.consistency.append(float(np.linalg.norm(resid)))
        trace.z_traces.append(z_trace)
        trace.x_traces.append(x_trace)
        if max(rel_z, rel_x) <= config.stop_tol:
            trace.meta["converged"] = True
            break

    trace.meta.setdefault("converged", False)
    trace.meta["outer_iterations"] = trace.outer_rounds
    return x, trace
