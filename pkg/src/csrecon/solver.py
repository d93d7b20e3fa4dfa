"""Safeguarded four-module reconstruction iteration.

Each iteration cascades: closed-form fidelity solve -> pluggable denoiser ->
first-order optimality check (accept or fall back to the previous iterate) ->
proximal gradient step on the lp prior. The check makes the energy

    Phi(alpha) = 0.5 * ||mask o (F A alpha) - y||^2 + lam * sum |alpha_i|^p

monotonically nonincreasing no matter what the denoiser returns, which is the
whole point: a denoiser is a suggestion, never a commitment. The per-iteration
record keeps enough to verify the descent inequalities after the fact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, ParameterError
from .prox import ProxParams, grad_f, prox_lp
from .transforms import (SamplingMask, apply_mask, dwt2, fft2_centered,
                         idwt2, ifft2_centered)
from . import metrics

logger = logging.getLogger("csrecon")

DESCENT_SLACK = 1e-9

CHECK_FORMS = ("anchor_prev", "anchor_candidate")


# ---------------------------------------------------------------------------
# Problem and configuration
# ---------------------------------------------------------------------------

@dataclass
class Problem:
    """Single-coil reconstruction data: zero-filled k-space y and its mask."""

    y: np.ndarray
    mask: SamplingMask
    levels: int = 3

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.complex128)
        if self.y.shape != self.mask.shape:
            raise DimensionError(
                f"y {self.y.shape} vs mask {self.mask.shape}")
        if np.any(self.y[~self.mask.keep] != 0):
            raise ParameterError("y must be zero at unsampled positions")

    @property
    def shape(self) -> tuple[int, int]:
        return self.y.shape


@dataclass
class SolverConfig:
    """All scalars the iteration needs.

    ``eta1``/``eta2`` default to safe values derived from ``L_f``: eta2 is
    0.9/L_f (the prior-step descent requires eta2 < 1/L_f) and eta1 is
    min(0.9/L_f, 1/rho). Putting eta1 at 1/rho zeroes the momentum
    coefficient |rho - 1/eta1|, which maximizes the tolerance the optimality
    check can grant while keeping its descent constant positive; larger eta1
    would force the tolerance so small that the check rejects every denoiser.

    ``eps_mode`` "auto" picks the tolerance eps that leaves exactly 10% of
    the available descent margin, i.e. C_k = 0.1*(1/(2*eta1) - L_f/2);
    "fixed" uses ``eps_value`` as a constant.
    """

    lam: float = 1e-5
    p: float = 0.8
    rho: float = 5.0
    eta1: float | None = None
    eta2: float | None = None
    L_f: float = 1.0
    eps_mode: str = "auto"
    eps_value: float | None = None
    max_iters: int = 50
    stop_tol: float = 1e-4
    noise_hi: float = 49.0 / 255.0
    noise_lo: float = 3.0 / 255.0
    check_form: str = "anchor_prev"
    allow_unsafe_steps: bool = False
    fidelity_mode: str = "closed_form"

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterError("lam must be >= 0")
        if not (0.0 < self.p <= 1.0):
            raise ParameterError("p must be in (0, 1]")
        if self.rho <= 0:
            raise ParameterError("rho must be > 0")
        if self.L_f <= 0:
            raise ParameterError("L_f must be > 0")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be >= 1")
        if self.stop_tol <= 0:
            raise ParameterError("stop_tol must be > 0")
        if self.check_form not in CHECK_FORMS:
            raise ParameterError(f"check_form must be one of {CHECK_FORMS}")
        if self.eps_mode not in ("auto", "fixed"):
            raise ParameterError("eps_mode must be 'auto' or 'fixed'")
        if self.eps_mode == "fixed" and (self.eps_value is None or self.eps_value <= 0):
            raise ParameterError("fixed eps_mode requires eps_value > 0")
        if self.fidelity_mode not in ("closed_form", "cg"):
            raise ParameterError("fidelity_mode must be 'closed_form' or 'cg'")
        # fail fast on the construction-time Lipschitz constant
        self.resolve()

    def noise_sigma(self, k: int) -> float:
        """Linear decay from noise_hi to noise_lo across max_iters."""
        if self.max_iters == 1:
            return self.noise_hi
        frac = k / (self.max_iters - 1)
        return self.noise_hi + (self.noise_lo - self.noise_hi) * frac

    def resolve(self, L_f: float | None = None,
                rho_momentum: float | None = None) -> "ResolvedSteps":
        """Concrete step sizes/tolerance for a model with the given L_f."""
        L = self.L_f if L_f is None else L_f
        rho = self.rho if rho_momentum is None else rho_momentum
        eta1 = self.eta1 if self.eta1 is not None else min(0.9 / L, 1.0 / rho if rho > 0 else np.inf)
        eta2 = self.eta2 if self.eta2 is not None else 0.9 / L

        if eta2 >= 1.0 / L:
            msg = (f"eta2={eta2:g} violates the descent bound eta2 < 1/L_f"
                   f"={1.0 / L:g}")
            if not self.allow_unsafe_steps:
                raise ParameterError(msg + " (set allow_unsafe_steps to override)")
            logger.warning("%s; descent guarantees lapse", msg)

        margin = 1.0 / (2.0 * eta1) - L / 2.0
        coeff = L + abs(rho - 1.0 / eta1)
        if self.eps_mode == "auto":
            eps = 0.9 * margin / coeff if margin > 0 else 0.0
        else:
            eps = float(self.eps_value)
        C_k = margin - coeff * eps
        if C_k <= 0 or eps <= 0:
            msg = (f"optimality-check constant must be positive: eta1={eta1:g}"
                   f", eps={eps:g}, C_k={C_k:g}")
            if not self.allow_unsafe_steps:
                raise ParameterError(msg + " (set allow_unsafe_steps to override)")
            logger.warning("%s; descent guarantees lapse", msg)
        return ResolvedSteps(eta1=eta1, eta2=eta2, eps=eps, C_k=C_k, L_f=L,
                             rho_momentum=rho)


@dataclass(frozen=True)
class ResolvedSteps:
    eta1: float
    eta2: float
    eps: float
    C_k: float
    L_f: float
    rho_momentum: float

    @property
    def prop2_coeff(self) -> float:
        return 1.0 / (2.0 * self.eta2) - self.L_f / 2.0


# ---------------------------------------------------------------------------
# Iterate trace
# ---------------------------------------------------------------------------

TRACE_HEADER = "k,phi_alpha,phi_w,accepted,step_norm,sq_step,C_k,psnr,rlne"


@dataclass
class IterateRecord:
    k: int
    phi_alpha: float
    phi_w: float
    accepted: bool
    step_norm: float
    sq_step: float
    C_k: float
    psnr: float | None = None
    rlne: float | None = None


@dataclass
class IterateTrace:
    """Per-iteration accounting plus run-level metadata.

    ``records[k].phi_alpha`` is Phi(alpha^{k+1}) and ``phi_w`` is
    Phi(w^{k+1}); the starting value Phi(alpha^0) lives in ``meta['phi0']``.
    """

    records: list[IterateRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def phi0(self) -> float:
        return self.meta["phi0"]

    @property
    def phi_final(self) -> float:
        return self.records[-1].phi_alpha if self.records else self.phi0

    def phi_sequence(self) -> list[float]:
        return [self.phi0] + [r.phi_alpha for r in self.records]

    def acceptance_rate(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.accepted for r in self.records) / len(self.records)

    def descent_violation(self) -> float:
        """Worst violation of Phi(alpha^{k+1}) <= Phi(w^{k+1}) <= Phi(alpha^k).

        Nonpositive when the trace is a clean descent chain.
        """
        worst = -np.inf
        prev = self.phi0
        for r in self.records:
            worst = max(worst, r.phi_w - prev, r.phi_alpha - r.phi_w)
            prev = r.phi_alpha
        return worst

    def square_step_sum(self) -> float:
        return float(sum(r.sq_step for r in self.records))

    def square_step_bound(self) -> float:
        """Telescoped upper bound (Phi(alpha^0) - Phi_final) / (1/(2 eta2) - L_f/2)."""
        coeff = 1.0 / (2.0 * self.meta["eta2"]) - self.meta["L_f"] / 2.0
        return (self.phi0 - self.phi_final) / coeff

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.csv_text())

    def csv_text(self) -> str:
        lines = [TRACE_HEADER]
        for r in self.records:
            psnr = "" if r.psnr is None else repr(r.psnr)
            rlne = "" if r.rlne is None else repr(r.rlne)
            lines.append(f"{r.k},{r.phi_alpha!r},{r.phi_w!r},{int(r.accepted)},"
                         f"{r.step_norm!r},{r.sq_step!r},{r.C_k!r},{psnr},{rlne}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Energy and the four modules (single coil)
# ---------------------------------------------------------------------------

def data_fidelity(alpha, problem: Problem) -> float:
    """f(alpha) = 0.5 * ||mask o (F A alpha) - y||^2 on the zero-filled grid."""
    k = apply_mask(fft2_centered(idwt2(alpha, problem.levels)), problem.mask)
    return 0.5 * float(np.linalg.norm(k - problem.y) ** 2)


def penalty(alpha, lam: float, p: float) -> float:
    return float(lam * np.sum(np.abs(alpha) ** p))


def objective(alpha, problem: Problem, config: SolverConfig) -> float:
    """Phi(alpha): fidelity plus the separable lp penalty."""
    return data_fidelity(alpha, problem) + penalty(alpha, config.lam, config.p)


def zero_fill(problem: Problem) -> np.ndarray:
    """Naive reconstruction: inverse transform of the zero-filled k-space."""
    return ifft2_centered(problem.y)


def fidelity_solve(alpha, problem: Problem, rho: float) -> np.ndarray:
    """Exact minimizer of 0.5*||P F A u - y||^2 + rho/2*||u - alpha||^2.

    Diagonal in k-space: sampled bins blend the data with the current
    estimate as (y + rho*k)/(1 + rho); unsampled bins pass through.
    """
    if rho <= 0:
        raise ParameterError("rho must be > 0")
    k = fft2_centered(idwt2(alpha, problem.levels))
    blended = np.where(problem.mask.keep, (problem.y + rho * k) / (1.0 + rho), k)
    return dwt2(ifft2_centered(blended), problem.levels)


def _check_candidate(v, alpha_prev, grad_total: Callable[[np.ndarray], np.ndarray],
                     lam: float, p: float, steps: ResolvedSteps,
                     check_form: str):
    """Momentum prox candidate and the accept/reject decision."""
    beta = prox_lp(v - steps.eta1 * grad_total(v), ProxParams(lam, p, steps.eta1))
    if check_form == "anchor_prev":
        lhs = float(np.linalg.norm(v - alpha_prev))
        rhs = steps.eps * float(np.linalg.norm(beta - alpha_prev))
    else:
        lhs = float(np.linalg.norm(v - beta))
        rhs = steps.eps * float(np.linalg.norm(alpha_prev - beta))
    accepted = lhs <= rhs
    return (beta if accepted else alpha_prev), accepted, beta


def check_and_select(v, alpha_prev, problem: Problem, config: SolverConfig):
    """Optimality-check module: returns (w, accepted, beta).

    beta is the momentum proximal-gradient candidate built from the denoiser
    output v; it is adopted only when the denoiser stayed within the
    tolerance eps of the implied step, otherwise the previous iterate is
    kept. Acceptance implies the descent inequality
    Phi(beta) <= Phi(alpha_prev) - C_k ||beta - alpha_prev||^2.
    """
    steps = config.resolve()

    def grad_total(z):
        return grad_f(z, problem) + steps.rho_momentum * (z - alpha_prev)

    return _check_candidate(v, alpha_prev, grad_total, config.lam, config.p,
                            steps, config.check_form)


def prior_step(w, problem: Problem, config: SolverConfig) -> np.ndarray:
    """Proximal gradient step on the lp prior from the checked iterate."""
    steps = config.resolve()
    return prox_lp(w - steps.eta2 * grad_f(w, problem),
                   ProxParams(config.lam, config.p, steps.eta2))


# ---------------------------------------------------------------------------
# Generic iteration driver
# ---------------------------------------------------------------------------

@dataclass
class IterationModel:
    """The pieces one safeguarded iteration needs, independent of the task.

    The iterate always lives in the (orthonormal) coefficient domain so the
    lp prox applies elementwise; ``to_image`` maps it back for stopping and
    quality metrics. ``fidelity`` may be any map whatsoever: the optimality
    check quarantines it together with the denoiser.
    """

    grad: Callable[[np.ndarray], np.ndarray]
    f_value: Callable[[np.ndarray], float]
    fidelity: Callable[[np.ndarray], np.ndarray]
    to_image: Callable[[np.ndarray], np.ndarray]
    levels: int
    L_f: float
    rho_momentum: float


def run_iterations(alpha0: np.ndarray, model: IterationModel,
                   config: SolverConfig, denoiser, ref=None,
                   meta: dict | None = None) -> tuple[np.ndarray, IterateTrace]:
    """Run the F -> N -> C -> P loop from alpha0 until stopping.

    Stops on relative image-domain change <= stop_tol, on max_iters, or
    defensively if the energy ever increases beyond numerical slack (which
    the theory rules out).
    """
    steps = config.resolve(model.L_f, model.rho_momentum)
    lam, p = config.lam, config.p
    prox2 = ProxParams(lam, p, steps.eta2)

    def phi(a: np.ndarray) -> float:
        return model.f_value(a) + penalty(a, lam, p)

    alpha = np.asarray(alpha0, dtype=np.complex128)
    phi_alpha = phi(alpha)
    trace = IterateTrace(meta={
        "phi0": phi_alpha, "eta1": steps.eta1, "eta2": steps.eta2,
        "eps": steps.eps, "C_k": steps.C_k, "L_f": steps.L_f,
        "rho_momentum": steps.rho_momentum, "lam": lam, "p": p,
        "stop_tol": config.stop_tol, "max_iters": config.max_iters,
        "denoiser": getattr(denoiser, "name", "?"),
        "normalization": "reference normalized to unit peak magnitude",
        "converged": False, "defensive_stop": False,
    })
    if meta:
        trace.meta.update(meta)

    x_prev = model.to_image(alpha)
    for k in range(config.max_iters):
        u = model.fidelity(alpha)
        v = denoiser.denoise(u, config.noise_sigma(k), model.levels)

        alpha_anchor = alpha

        def grad_total(z):
            return model.grad(z) + steps.rho_momentum * (z - alpha_anchor)

        w, accepted, beta = _check_candidate(
            v, alpha, grad_total, lam, p, steps, config.check_form)
        phi_w = phi(w) if accepted else phi_alpha

        alpha_next = prox_lp(w - steps.eta2 * model.grad(w), prox2)
        phi_next = phi(alpha_next)

        x_next = model.to_image(alpha_next)
        rec = IterateRecord(
            k=k, phi_alpha=phi_next, phi_w=phi_w, accepted=accepted,
            step_norm=float(np.linalg.norm(beta - alpha)),
            sq_step=float(np.linalg.norm(alpha_next - w) ** 2), C_k=steps.C_k)
        if ref is not None:
            rec.psnr = metrics.psnr(ref, x_next)
            rec.rlne = metrics.rlne(ref, x_next)
        trace.records.append(rec)

        rel_change = float(np.linalg.norm(x_next - x_prev)) \
            / max(float(np.linalg.norm(x_prev)), np.finfo(float).tiny)
        if phi_next > phi_alpha + DESCENT_SLACK:
            logger.warning("energy increased at iteration %d (%.3e > %.3e); "
                           "stopping defensively", k, phi_next, phi_alpha)
            trace.meta["defensive_stop"] = True
            alpha, phi_alpha, x_prev = alpha_next, phi_next, x_next
            break
        alpha, phi_alpha, x_prev = alpha_next, phi_next, x_next
        if rel_change <= config.stop_tol:
            trace.meta["converged"] = True
            break

    residual = alpha - prox_lp(alpha - steps.eta2 * model.grad(alpha), prox2)
    trace.meta["criticality_residual"] = float(
        np.linalg.norm(residual) / max(1.0, np.linalg.norm(alpha)))
    trace.meta["iterations"] = trace.iterations
    return alpha, trace


def single_coil_model(problem: Problem, config: SolverConfig) -> IterationModel:
    return IterationModel(
        grad=lambda a: grad_f(a, problem),
        f_value=lambda a: data_fidelity(a, problem),
        fidelity=lambda a: fidelity_solve(a, problem, config.rho),
        to_image=lambda a: idwt2(a, problem.levels),
        levels=problem.levels,
        L_f=config.L_f,
        rho_momentum=config.rho,
    )


def reconstruct(problem: Problem, config: SolverConfig, denoiser,
                ref=None) -> tuple[np.ndarray, IterateTrace]:
    """Full reconstruction from zero-filled k-space data.

    Returns the image-domain estimate and the iteration trace. The trace's
    descent chain holds for any plugin passed as ``denoiser``.
    """
    model = single_coil_model(problem, config)
    alpha0 = dwt2(ifft2_centered(problem.y), problem.levels)
    alpha, trace = run_iterations(alpha0, model, config, denoiser, ref=ref,
                                  meta={"task": "single_coil"})
    return idwt2(alpha, problem.levels), trace
