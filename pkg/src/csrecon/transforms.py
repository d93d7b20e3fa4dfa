"""Linear operators of the measurement model: centered unitary 2-D FFT,
orthonormal multi-level Haar wavelet transform, and k-space sampling masks.

All operators are norm-preserving (or contractions, for masking), which is
what lets the solver fix the gradient Lipschitz constant to 1. Grids are
restricted to power-of-two sizes so the wavelet levels divide exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError

_SQRT2 = np.sqrt(2.0)

MASK_KINDS = ("cartesian", "radial", "gaussian", "full")


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _as_complex_2d(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D array, got shape {arr.shape}")
    return arr


def _require_pow2(rows: int, cols: int) -> None:
    if not (_is_pow2(rows) and _is_pow2(cols)):
        raise DimensionError(f"grid must be power-of-two sized, got {rows}x{cols}")


# ---------------------------------------------------------------------------
# Fourier
# ---------------------------------------------------------------------------

def fft2_centered(img) -> np.ndarray:
    """Unitary 2-D DFT with the DC bin at the grid center."""
    img = _as_complex_2d(img)
    _require_pow2(*img.shape)
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(img), norm="ortho"))


def ifft2_centered(k) -> np.ndarray:
    """Inverse of :func:`fft2_centered`."""
    k = _as_complex_2d(k)
    _require_pow2(*k.shape)
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(k), norm="ortho"))


# ---------------------------------------------------------------------------
# Haar wavelets
# ---------------------------------------------------------------------------

def _haar_down(x: np.ndarray, axis: int) -> np.ndarray:
    lo = (x.take(range(0, x.shape[axis], 2), axis=axis)
          + x.take(range(1, x.shape[axis], 2), axis=axis)) / _SQRT2
    hi = (x.take(range(0, x.shape[axis], 2), axis=axis)
          - x.take(range(1, x.shape[axis], 2), axis=axis)) / _SQRT2
    return np.concatenate([lo, hi], axis=axis)


def _haar_up(x: np.ndarray, axis: int) -> np.ndarray:
    half = x.shape[axis] // 2
    lo = x.take(range(half), axis=axis)
    hi = x.take(range(half, x.shape[axis]), axis=axis)
    out = np.empty_like(x)
    even = (lo + hi) / _SQRT2
    odd = (lo - hi) / _SQRT2
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(0, None, 2)
    out[tuple(sl)] = even
    sl[axis] = slice(1, None, 2)
    out[tuple(sl)] = odd
    return out


def _check_levels(rows: int, cols: int, levels: int) -> None:
    if levels < 1:
        raise ParameterError(f"levels must be >= 1, got {levels}")
    if rows % (1 << levels) or cols % (1 << levels):
        raise DimensionError(
            f"grid {rows}x{cols} not divisible by 2^{levels}")


def dwt2(img, levels: int = 3) -> np.ndarray:
    """Forward multi-level Haar transform (image -> coefficients).

    The result is packed in the usual multiresolution layout: the
    approximation band occupies the top-left ``rows/2^levels x cols/2^levels``
    corner, detail bands fill the rest. Exactly orthonormal, so this realizes
    the adjoint/inverse of :func:`idwt2`.
    """
    img = _as_complex_2d(img)
    rows, cols = img.shape
    _check_levels(rows, cols, levels)
    out = img.copy()
    for lev in range(levels):
        m, n = rows >> lev, cols >> lev
        block = out[:m, :n]
        block = _haar_down(block, axis=0)
        block = _haar_down(block, axis=1)
        out[:m, :n] = block
    return out


def idwt2(coeffs, levels: int = 3) -> np.ndarray:
    """Inverse multi-level Haar transform (coefficients -> image)."""
    coeffs = _as_complex_2d(coeffs)
    rows, cols = coeffs.shape
    _check_levels(rows, cols, levels)
    out = coeffs.copy()
    for lev in range(levels - 1, -1, -1):
        m, n = rows >> lev, cols >> lev
        block = out[:m, :n]
        block = _haar_up(block, axis=1)
        block = _haar_up(block, axis=0)
        out[:m, :n] = block
    return out


def approx_band(shape: tuple[int, int], levels: int) -> tuple[slice, slice]:
    """Slices of the approximation band in the packed coefficient layout."""
    rows, cols = shape
    return slice(0, rows >> levels), slice(0, cols >> levels)


# ---------------------------------------------------------------------------
# Sampling masks
# ---------------------------------------------------------------------------

@dataclass
class SamplingMask:
    """Binary k-space selection pattern on the centered grid.

    ``ratio`` records the achieved sampling fraction, i.e. exactly
    ``keep.sum() / keep.size``.
    """

    keep: np.ndarray
    kind: str
    ratio: float = field(default=0.0)

    def __post_init__(self):
        self.keep = np.asarray(self.keep, dtype=bool)
        if self.keep.ndim != 2:
            raise DimensionError("mask must be 2-D")
        achieved = float(self.keep.sum()) / self.keep.size
        if self.ratio == 0.0:
            self.ratio = achieved
        elif abs(self.ratio - achieved) > 1.0 / self.keep.size:
            raise ParameterError(
                f"recorded ratio {self.ratio} inconsistent with mask "
                f"({achieved:.6f} kept)")

    @property
    def rows(self) -> int:
        return self.keep.shape[0]

    @property
    def cols(self) -> int:
        return self.keep.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.keep.shape


def apply_mask(k, mask: SamplingMask) -> np.ndarray:
    """Zero out unsampled k-space bins (realizes the diagonal 0/1 operator)."""
    k = _as_complex_2d(k)
    if k.shape != mask.shape:
        raise DimensionError(f"k-space {k.shape} vs mask {mask.shape}")
    return np.where(mask.keep, k, 0.0 + 0.0j)


def _spoke_pixels(rows: int, cols: int, angle: float) -> np.ndarray:
    """Row-major flat indices of one discretized spoke through the center."""
    cr, cc = rows // 2, cols // 2
    reach = int(np.ceil(np.hypot(rows, cols)))
    t = np.arange(-reach, reach + 1)
    rr = np.rint(cr + t * np.sin(angle)).astype(int)
    cc_ = np.rint(cc + t * np.cos(angle)).astype(int)
    ok = (rr >= 0) & (rr < rows) & (cc_ >= 0) & (cc_ < cols)
    return np.unique(rr[ok] * cols + cc_[ok])


def _radial_keep(rows: int, cols: int, target: int, rng: np.random.Generator) -> np.ndarray:
    offset = rng.uniform(0.0, np.pi)

    def union(n_spokes: int) -> np.ndarray:
        angles = offset + np.pi * np.arange(n_spokes) / n_spokes
        return np.unique(np.concatenate([
            _spoke_pixels(rows, cols, a) for a in angles]))

    # bisect the spoke count to the smallest union covering the target
    hi = 4
    while union(hi).size < target:
        hi *= 2
        if hi > 4 * max(rows, cols):
            break
    lo = 1
    while lo < hi:
        mid = (lo + hi) // 2
        if union(mid).size >= target:
            hi = mid
        else:
            lo = mid + 1
    idx = union(lo)
    cap = 4 * max(rows, cols)
    while idx.size < target and lo < cap:  # union is not strictly monotone in count
        lo += 1
        idx = union(lo)
    if idx.size < target:
        # spokes saturate below the budget at high ratios; top up from the center out
        r = np.arange(rows)[:, None] - rows // 2
        c = np.arange(cols)[None, :] - cols // 2
        radius = (r * r + c * c).ravel()
        extra = np.setdiff1d(np.argsort(radius, kind="stable"), idx, assume_unique=False)
        flat = np.zeros(rows * cols, dtype=bool)
        flat[idx] = True
        order = np.argsort(radius[extra], kind="stable")
        flat[extra[order[: target - idx.size]]] = True
        idx = np.flatnonzero(flat)

    # trim outermost pixels (never the DC bin) down to the exact target
    keep = np.zeros(rows * cols, dtype=bool)
    keep[idx] = True
    if idx.size > target:
        r = idx // cols - rows // 2
        c = idx % cols - cols // 2
        order = idx[np.argsort(r * r + c * c, kind="stable")]
        keep[order[target:]] = False
    keep = keep.reshape(rows, cols)
    keep[rows // 2, cols // 2] = True
    return keep


def _gaussian_keep(rows: int, cols: int, target: int, rng: np.random.Generator) -> np.ndarray:
    sigma = rows / 6.0
    r = np.arange(rows) - rows // 2
    c = np.arange(cols) - cols // 2
    w = np.exp(-(r[:, None] ** 2 + c[None, :] ** 2) / (2.0 * sigma * sigma)).ravel()
    center = (rows // 2) * cols + cols // 2
    w[center] = 0.0  # DC forced in separately
    keep = np.zeros(rows * cols, dtype=bool)
    keep[center] = True
    if target > 1:
        idx = rng.choice(rows * cols, size=target - 1, replace=False, p=w / w.sum())
        keep[idx] = True
    return keep.reshape(rows, cols)


def _cartesian_keep(rows: int, cols: int, target_lines: int, rng: np.random.Generator) -> np.ndarray:
    n_center = max(1, int(round(0.2 * target_lines)))
    n_center = min(n_center, target_lines)
    start = rows // 2 - n_center // 2
    center_lines = np.arange(start, start + n_center)
    remaining = np.setdiff1d(np.arange(rows), center_lines)
    n_rand = target_lines - n_center
    rand_lines = rng.choice(remaining, size=n_rand, replace=False) if n_rand else []
    keep = np.zeros((rows, cols), dtype=bool)
    keep[center_lines] = True
    keep[np.asarray(rand_lines, dtype=int)] = True
    return keep


def make_mask(kind: str, rows: int, cols: int, ratio: float, seed: int = 0) -> SamplingMask:
    """Generate a sampling pattern.

    cartesian keeps whole rows (a centered block plus random others), radial
    keeps rasterized spokes through the center trimmed at the tips to the
    exact sample budget, gaussian draws points without replacement with
    density decaying from the center. The DC bin is always kept. Deterministic
    for a given seed.
    """
    if kind not in MASK_KINDS:
        raise ParameterError(f"unknown mask kind {kind!r}")
    if not (0.0 < ratio <= 1.0):
        raise ParameterError(f"ratio must be in (0, 1], got {ratio}")
    _require_pow2(rows, cols)
    rng = np.random.default_rng(seed)

    if kind == "full":
        return SamplingMask(np.ones((rows, cols), dtype=bool), "full")

    n = rows * cols
    if kind == "cartesian":
        lines = min(rows, max(1, int(round(ratio * rows))))
        keep = _cartesian_keep(rows, cols, lines, rng)
    elif kind == "radial":
        target = min(n, max(1, int(round(ratio * n))))
        keep = _radial_keep(rows, cols, target, rng)
    else:
        target = min(n, max(1, int(round(ratio * n))))
        keep = _gaussian_keep(rows, cols, target, rng)
    return SamplingMask(keep, kind)


# ---------------------------------------------------------------------------
# Spectral diagnostics
# ---------------------------------------------------------------------------

def power_iteration(apply_normal, shape: tuple[int, int], iters: int = 100,
                    seed: int = 0) -> float:
    """Dominant eigenvalue magnitude of a self-adjoint PSD operator.

    ``apply_normal`` maps a complex 2-D array to another of the same shape
    (typically the normal operator K^H K of some forward map K, in which case
    the returned value is ||K||^2).
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = apply_normal(v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    return lam
