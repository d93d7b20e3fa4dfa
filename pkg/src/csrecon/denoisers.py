"""Built-in denoiser plugins for the data-driven module.

A plugin is any object with a ``name`` and a method
``denoise(coeffs, sigma, levels) -> coeffs`` mapping wavelet coefficients to
wavelet coefficients of the same shape. Image-domain denoisers are lifted to
this contract by :class:`ImageDomainDenoiser`, which converts to the image
domain, applies the wrapped function to the real and imaginary parts
independently, and converts back.

None of these are learned models; they are classical stand-ins plus a
deliberately harmful plugin used to exercise the solver's safeguard. The
safeguard makes the solver's descent guarantees hold for arbitrary plugins,
so a weights-backed neural denoiser can be dropped in behind the same
interface without touching the iteration.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ParameterError
from .transforms import approx_band, dwt2, idwt2

DENOISER_NAMES = ("identity", "gaussian", "shrink", "adversarial")


class ImageDomainDenoiser:
    """Lift a real-image denoising function to the coefficient contract."""

    def __init__(self, name: str, fn: Callable[[np.ndarray, float], np.ndarray]):
        self.name = name
        self._fn = fn

    def denoise(self, coeffs: np.ndarray, sigma: float, levels: int) -> np.ndarray:
        img = idwt2(coeffs, levels)
        den = self._fn(img.real, sigma) + 1j * self._fn(img.imag, sigma)
        return dwt2(den, levels)


class IdentityDenoiser:
    """Degenerate plugin; reduces the iteration to safeguarded prox-gradient."""

    name = "identity"

    def denoise(self, coeffs: np.ndarray, sigma: float, levels: int) -> np.ndarray:
        return coeffs


def _gaussian_blur(img: np.ndarray, stddev: float) -> np.ndarray:
    if stddev <= 0:
        return img.copy()
    radius = int(np.ceil(3.0 * stddev))
    radius = max(1, min(radius, min(img.shape) // 2 - 1))
    t = np.arange(-radius, radius + 1)
    k1 = np.exp(-(t * t) / (2.0 * stddev * stddev))
    kernel = np.outer(k1, k1)
    kernel /= kernel.sum()
    pad = np.zeros(img.shape)
    pad[: 2 * radius + 1, : 2 * radius + 1] = kernel
    pad = np.roll(pad, (-radius, -radius), axis=(0, 1))  # center at (0, 0)
    return np.real(np.fft.ifft2(np.fft.fft2(img) * np.fft.fft2(pad)))


class GaussianDenoiser(ImageDomainDenoiser):
    """Circular FFT convolution with a normalized truncated Gaussian kernel.

    Kernel stddev is ``scale * sigma`` pixels (the noise scale is a fraction
    of the intensity range, so it must be mapped to a spatial width).
    """

    def __init__(self, scale: float = 10.0):
        if scale <= 0:
            raise ParameterError("scale must be > 0")
        self.scale = scale
        super().__init__("gaussian", self._blur)

    def _blur(self, img: np.ndarray, sigma: float) -> np.ndarray:
        return _gaussian_blur(img, self.scale * sigma)


class WaveletShrinkDenoiser:
    """Soft-threshold detail coefficients at gain*sigma; approximation kept."""

    name = "shrink"

    def __init__(self, gain: float = 1.0):
        if gain < 0:
            raise ParameterError("gain must be >= 0")
        self.gain = gain

    def denoise(self, coeffs: np.ndarray, sigma: float, levels: int) -> np.ndarray:
        tau = self.gain * sigma
        if tau <= 0:
            return coeffs
        mag = np.abs(coeffs)
        scale = np.divide(np.maximum(mag - tau, 0.0), mag,
                          out=np.zeros_like(mag), where=mag > 0)
        out = coeffs * scale
        rs, cs = approx_band(coeffs.shape, levels)
        out[rs, cs] = coeffs[rs, cs]
        return out


class AdversarialDenoiser:
    """Returns the input plus seeded uniform noise of amplitude 10*sigma.

    Deliberately harmful: stresses the solver's accept/reject safeguard. The
    same seed gives bit-identical output for a given input shape and sigma.
    """

    name = "adversarial"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def denoise(self, coeffs: np.ndarray, sigma: float, levels: int) -> np.ndarray:
        if sigma == 0:
            return coeffs
        rng = np.random.default_rng(self.seed)
        amp = 10.0 * sigma
        noise = rng.uniform(-amp, amp, coeffs.shape) \
            + 1j * rng.uniform(-amp, amp, coeffs.shape)
        return coeffs + noise


def get_denoiser(name: str, seed: int = 0):
    """Construct a built-in plugin by name."""
    if name == "identity":
        return IdentityDenoiser()
    if name == "gaussian":
        return GaussianDenoiser()
    if name == "shrink":
        return WaveletShrinkDenoiser()
    if name == "adversarial":
        return AdversarialDenoiser(seed=seed)
    raise ParameterError(f"unknown denoiser {name!r}; choose from {DENOISER_NAMES}")
