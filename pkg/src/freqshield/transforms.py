"""Pure numeric kernels: 2-D DCT/FFT, colorspace conversion, Gaussian kernels
and 2-D convolution.

Conventions
-----------
* planes are 2-D float64 arrays, images are (3, H, W) float64 arrays wrapped
  in :class:`Image` with a colorspace tag
* the DCT is the orthonormal DCT-II, so ``idct2`` is the transpose map and
  Parseval holds exactly (up to rounding)
* the FFT pair is the standard unnormalized forward / 1/(HW) inverse
* all arithmetic is double precision
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    ColorspaceError,
    InvalidInputError,
    ParameterError,
    ShapeError,
    SpectralAsymmetryError,
)

RGB = "rgb"
YUV = "yuv"

# BT.709 luma weights; the chroma rows are the matching color-difference
# scalings U = 0.5 (B'-Y')/(1-Kb), V = 0.5 (R'-Y')/(1-Kr).
KR, KG, KB = 0.2126, 0.7152, 0.0722

RGB_TO_YUV = np.array(
    [
        [KR, KG, KB],
        [-0.5 * KR / (1.0 - KB), -0.5 * KG / (1.0 - KB), 0.5],
        [0.5, -0.5 * KG / (1.0 - KR), -0.5 * KB / (1.0 - KR)],
    ]
)
YUV_TO_RGB = np.linalg.inv(RGB_TO_YUV)


@dataclass
class Image:
    """3-channel image tensor, channel-major, with a colorspace tag.

    RGB images live in [0,1] once clamped; YUV chroma planes may be negative.
    """

    data: np.ndarray
    colorspace: str = RGB

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[0] != 3:
            raise ShapeError(f"image must be (3, H, W), got {self.data.shape}")
        if self.data.shape[1] < 1 or self.data.shape[2] < 1:
            raise ShapeError(f"image must be (3, H, W), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise InvalidInputError("image contains non-finite values")
        if self.colorspace not in (RGB, YUV):
            raise ColorspaceError(f"unknown colorspace tag {self.colorspace!r}")

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def copy(self) -> "Image":
        return Image(self.data.copy(), self.colorspace)


def _check_plane(plane: np.ndarray) -> np.ndarray:
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or plane.shape[0] < 1 or plane.shape[1] < 1:
        raise ShapeError(f"plane must be 2-D and non-empty, got shape {plane.shape}")
    if not np.all(np.isfinite(plane)):
        raise InvalidInputError("plane contains non-finite values")
    return plane


@lru_cache(maxsize=64)
def _dct_basis(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis: row k is the k-th cosine mode."""
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    basis = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * x + 1) * k / (2 * n))
    basis[0, :] = np.sqrt(1.0 / n)
    return basis


def dct2(plane: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II coefficients of a plane."""
    plane = _check_plane(plane)
    h, w = plane.shape
    return _dct_basis(h) @ plane @ _dct_basis(w).T


def idct2(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dct2` (the transpose map, since the basis is orthonormal)."""
    coeffs = _check_plane(coeffs)
    h, w = coeffs.shape
    return _dct_basis(h).T @ coeffs @ _dct_basis(w)


def fft2(plane: np.ndarray) -> np.ndarray:
    """Unnormalized forward 2-D DFT of a real plane."""
    return np.fft.fft2(_check_plane(plane))


def ifft2(spectrum: np.ndarray, imag_tol: float = 1e-6) -> np.ndarray:
    """1/(HW)-normalized inverse DFT, returning the real plane.

    The spectrum must be conjugate-symmetric; an imaginary residue above
    ``imag_tol`` raises :class:`SpectralAsymmetryError` instead of silently
    discarding signal.
    """
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    if spectrum.ndim != 2:
        raise ShapeError(f"spectrum must be 2-D, got shape {spectrum.shape}")
    if not np.all(np.isfinite(spectrum.real)) or not np.all(np.isfinite(spectrum.imag)):
        raise InvalidInputError("spectrum contains non-finite values")
    out = np.fft.ifft2(spectrum)
    residue = float(np.abs(out.imag).max()) if out.size else 0.0
    if residue > imag_tol:
        raise SpectralAsymmetryError(
            f"inverse FFT imaginary residue {residue:.3e} exceeds {imag_tol:.1e}"
        )
    return out.real


def rgb_to_yuv(image: Image) -> Image:
    """BT.709 R'G'B' -> Y'UV. Requires an RGB-tagged image."""
    if image.colorspace != RGB:
        raise ColorspaceError(f"rgb_to_yuv needs an {RGB!r} image, got {image.colorspace!r}")
    flat = image.data.reshape(3, -1)
    out = (RGB_TO_YUV @ flat).reshape(image.data.shape)
    return Image(out, YUV)


def yuv_to_rgb(image: Image) -> Image:
    """Inverse of :func:`rgb_to_yuv`. Output is not clamped."""
    if image.colorspace != YUV:
        raise ColorspaceError(f"yuv_to_rgb needs a {YUV!r} image, got {image.colorspace!r}")
    flat = image.data.reshape(3, -1)
    out = (YUV_TO_RGB @ flat).reshape(image.data.shape)
    return Image(out, RGB)


def luma(image: Image) -> np.ndarray:
    """Y' plane of an RGB image (BT.709 weighted sum)."""
    if image.colorspace != RGB:
        raise ColorspaceError(f"luma needs an {RGB!r} image, got {image.colorspace!r}")
    r, g, b = image.data
    return KR * r + KG * g + KB * b


def clamp_unit(image: Image) -> Image:
    """Clamp every value into [0,1]; in-range values pass through unchanged."""
    return Image(np.clip(image.data, 0.0, 1.0), image.colorspace)


def gaussian_kernel(sigma: float, size: int) -> np.ndarray:
    """Discretized isotropic Gaussian, normalized to sum exactly 1.

    ``size`` must be odd; the kernel is symmetric under reflection and 90°
    rotation by construction. Tiny sigmas degrade gracefully to a delta.
    """
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"kernel size must be odd and positive, got {size}")
    if not (sigma > 0):
        raise ParameterError(f"sigma must be positive, got {sigma}")
    c = size // 2
    r = np.arange(size) - c
    with np.errstate(under="ignore"):
        profile = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2.0 * sigma * sigma))
    total = profile.sum()
    if total <= 0.0 or not np.isfinite(total):
        # sigma so small that even the center underflows: fall back to a delta
        profile = np.zeros((size, size))
        profile[c, c] = 1.0
        total = 1.0
    return profile / total


def kernel_size_for(sigma_max: float) -> int:
    """Smallest odd size covering ±3 sigma of the widest kernel in use."""
    size = int(np.ceil(6.0 * sigma_max))
    return max(3, size + 1 if size % 2 == 0 else size)


def convolve2d(plane: np.ndarray, kernel: np.ndarray, boundary: str = "reflect") -> np.ndarray:
    """2-D convolution of a plane with a small kernel.

    ``circular`` boundary is exact circular convolution (matches the spectral
    product); ``reflect`` is the practical augmentation path. The kernel must
    fit inside the plane.
    """
    plane = _check_plane(plane)
    kernel = _check_plane(kernel)
    kh, kw = kernel.shape
    h, w = plane.shape
    if kh > h or kw > w:
        raise ParameterError(f"kernel {kernel.shape} larger than plane {plane.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ParameterError(f"kernel sides must be odd, got {kernel.shape}")
    cy, cx = kh // 2, kw // 2

    out = np.zeros_like(plane)
    if boundary == "circular":
        for u in range(kh):
            for v in range(kw):
                out += kernel[u, v] * np.roll(plane, (u - cy, v - cx), axis=(0, 1))
    elif boundary == "reflect":
        padded = np.pad(plane, ((cy, cy), (cx, cx)), mode="reflect")
        for u in range(kh):
            for v in range(kw):
                out += kernel[u, v] * padded[2 * cy - u : 2 * cy - u + h, 2 * cx - v : 2 * cx - v + w]
    else:
        raise ParameterError(f"boundary must be 'circular' or 'reflect', got {boundary!r}")
    return out


def convolve_image(image: Image, kernel: np.ndarray, boundary: str = "reflect") -> Image:
    """Per-channel :func:`convolve2d`."""
    out = np.stack([convolve2d(ch, kernel, boundary) for ch in image.data])
    return Image(out, image.colorspace)
