"""Compressed-sensing MRI reconstruction with a convergence-safeguarded
plug-and-play solver, plus multi-coil and Rician-noise extensions."""

__version__ = "0.1.0"

from .errors import DimensionError, ParameterError
from .transforms import (SamplingMask, apply_mask, dwt2, fft2_centered,
                         idwt2, ifft2_centered, make_mask, power_iteration)
from .prox import ProxParams, grad_f, prox_lp, prox_lp_scalar
from .solver import (IterateRecord, IterateTrace, Problem, SolverConfig,
                     check_and_select, data_fidelity, fidelity_solve,
                     objective, prior_step, reconstruct, zero_fill)
from .denoisers import get_denoiser
from .parallel import (PIProblem, SensitivityMaps, pi_fidelity_solve,
                       pi_grad_f, pi_reconstruct, synth_sensitivity_maps,
                       zero_fill_sos)
from .rician import (RicianParams, rician_forward, rician_reconstruct,
                     rician_x_fidelity, rician_x_grad, rician_z_fidelity,
                     rician_z_grad)
from .metrics import MetricReport, metric_report, psnr, rlne, shepp_logan, ssim

__all__ = [
    "__version__",
    "DimensionError", "ParameterError",
    "SamplingMask", "apply_mask", "dwt2", "fft2_centered", "idwt2",
    "ifft2_centered", "make_mask", "power_iteration",
    "ProxParams", "grad_f", "prox_lp", "prox_lp_scalar",
    "IterateRecord", "IterateTrace", "Problem", "SolverConfig",
    "check_and_select", "data_fidelity", "fidelity_solve", "objective",
    "prior_step", "reconstruct", "zero_fill",
    "PIProblem", "SensitivityMaps", "pi_fidelity_solve", "pi_grad_f",
    "pi_reconstruct", "synth_sensitivity_maps", "zero_fill_sos",
    "RicianParams", "rician_forward", "rician_reconstruct",
    "rician_x_fidelity", "rician_x_grad", "rician_z_fidelity",
    "rician_z_grad",
    "MetricReport", "metric_report", "psnr", "rlne", "shepp_logan", "ssim",
]
