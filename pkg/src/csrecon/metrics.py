"""Image quality metrics (PSNR, RLNE, SSIM) and the test phantom.

Metrics are computed on magnitude images; complex inputs are therefore
invariant to global phase. PSNR uses the reference maximum as peak and is
capped at 99 dB so identical images stay finite in CSV exports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError

PSNR_CAP = 99.0

# (intensity, semi-axis a, semi-axis b, x0, y0, angle deg) -- modified
# Shepp-Logan contrast; off-center ellipses come in mirrored pairs so the
# phantom is exactly symmetric about the vertical axis.
_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1100, 0.3100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.07, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0460, 0.0230, 0.07, -0.605, 0.0),
)


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    rlne: float
    ssim: float


def _magnitudes(ref, test) -> tuple[np.ndarray, np.ndarray]:
    ref = np.abs(np.asarray(ref))
    test = np.abs(np.asarray(test))
    if ref.shape != test.shape:
        raise DimensionError(f"shape mismatch: {ref.shape} vs {test.shape}")
    return ref.astype(np.float64), test.astype(np.float64)


def psnr(ref, test) -> float:
    """10*log10(max|ref|^2 / MSE) on magnitude images, capped at 99 dB."""
    r, t = _magnitudes(ref, test)
    peak = r.max()
    if peak <= 0:
        raise ParameterError("reference image has zero maximum magnitude")
    mse = float(np.mean((r - t) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, float(10.0 * np.log10(peak * peak / mse)))


def rlne(ref, test) -> float:
    """Relative l2 norm error ||test - ref|| / ||ref|| on magnitudes."""
    r, t = _magnitudes(ref, test)
    denom = float(np.linalg.norm(r))
    if denom == 0.0:
        raise ParameterError("reference image has zero norm")
    return float(np.linalg.norm(t - r)) / denom


def ssim(ref, test) -> float:
    """Mean structural similarity, 11x11 Gaussian window (sigma 1.5),
    K1=0.01, K2=0.03, dynamic range max|ref|."""
    from skimage.metrics import structural_similarity

    r, t = _magnitudes(ref, test)
    peak = r.max()
    if peak <= 0:
        raise ParameterError("reference image has zero maximum magnitude")
    return float(structural_similarity(
        r, t, data_range=peak, gaussian_weights=True, sigma=1.5,
        use_sample_covariance=False, K1=0.01, K2=0.03))


def metric_report(ref, test) -> MetricReport:
    return MetricReport(psnr=psnr(ref, test), rlne=rlne(ref, test),
                        ssim=ssim(ref, test))


def shepp_logan(rows: int, cols: int) -> np.ndarray:
    """Ten-ellipse head phantom with intensities in [0, 1] (max exactly 1)."""
    if rows != cols:
        raise DimensionError(f"phantom must be square, got {rows}x{cols}")
    from .transforms import _require_pow2

    _require_pow2(rows, cols)
    n = rows
    ax = (np.arange(n) - (n - 1) / 2.0) / ((n - 1) / 2.0)
    x = ax[None, :]
    y = -ax[:, None]  # row 0 is the top of the image
    img = np.zeros((n, n))
    for amp, a, b, x0, y0, deg in _ELLIPSES:
        phi = np.deg2rad(deg)
        xr = (x - x0) * np.cos(phi) + (y - y0) * np.sin(phi)
        yr = (y - y0) * np.cos(phi) - (x - x0) * np.sin(phi)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += amp
    return img.astype(np.complex128)
