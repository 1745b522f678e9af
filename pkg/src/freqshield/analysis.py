"""Numerical checks behind the defense story.

The blur identity ``blur(poisoned) == blur(clean) + blur(trigger residual)``
holds exactly while the poisoning pipeline stays linear; the clamp to [0,1]
is the one non-linearity, and these helpers measure how it breaks the
identity and how much image-dependence (variance) it injects into the
residual. ``compaction_error`` quantifies why zeroing a small non-DC DCT
patch barely distorts a smooth image.
"""

from dataclasses import dataclass

import numpy as np

from .attacks import CtrlSpec, ctrl_poison, residual
from .defenses import AugmentConfig, FreqMask
from .errors import ContractError, ParameterError, ShapeError
from .seeding import rng_for
from .transforms import Image, convolve2d, dct2, gaussian_kernel, idct2, kernel_size_for

VARIANCE_EPS = 1e-15  # guards the constant-residual denominator


@dataclass(frozen=True)
class ResidualStats:
    """Per-pixel moments of a set of residuals plus scalar summaries."""

    per_pixel_mean: np.ndarray
    per_pixel_variance: np.ndarray
    total_variance: float
    energy: float


@dataclass(frozen=True)
class AmplificationResult:
    """Variance ratio with its raw numerator/denominator, so an eps-guarded
    division never hides a degenerate (constant-residual) denominator."""

    ratio: float
    blurred_variance: float
    raw_variance: float


def residual_stats(residuals: list) -> ResidualStats:
    """Unbiased per-pixel variance across the set; energy is the mean squared
    L2 norm of a residual."""
    if len(residuals) < 2:
        raise ParameterError(f"need at least 2 residuals, got {len(residuals)}")
    shape = residuals[0].shape
    for r in residuals:
        if r.shape != shape:
            raise ShapeError(f"residual shapes differ: {r.shape} vs {shape}")
    stack = np.stack(residuals)
    per_pixel_mean = stack.mean(axis=0)
    # shifted-data estimator: identical sets give exactly zero variance
    per_pixel_variance = (stack - stack[0]).var(axis=0, ddof=1)
    return ResidualStats(
        per_pixel_mean=per_pixel_mean,
        per_pixel_variance=per_pixel_variance,
        total_variance=float(per_pixel_variance.mean()),
        energy=float(np.mean([np.sum(r**2) for r in residuals])),
    )


def _circular_blur(data: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return np.stack([convolve2d(ch, kernel, "circular") for ch in data])


def blur_identity_check(images: list, spec: CtrlSpec, sigma: float) -> float:
    """Max deviation of blur(poisoned) from blur(clean) + blur(trigger).

    The trigger here is the linear (pre-clamp) residual, so the deviation is
    numerically zero while everything stays in range and grows once the
    clamp bites.
    """
    if not images:
        raise ParameterError("need at least one image")
    kernel = gaussian_kernel(sigma, kernel_size_for(sigma))
    worst = 0.0
    for img in images:
        poisoned = ctrl_poison(img, spec)
        trigger = residual(img, ctrl_poison(img, spec, clamp=False))
        lhs = _circular_blur(poisoned.data, kernel)
        rhs = _circular_blur(img.data, kernel) + _circular_blur(trigger, kernel)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst


def variance_amplification(
    images: list,
    spec: CtrlSpec,
    blur_config: AugmentConfig,
    rng_seed: int = 0,
) -> AmplificationResult:
    """Total variance of blurred-poison residuals (one sampled blur strength
    per image) over total variance of the raw residuals.

    With ``blur_sigma`` collapsed to a point the blur adds no variance of its
    own; a genuine range makes the blurred residual strength-dependent.
    """
    if len(images) < 10:
        raise ParameterError(f"need at least 10 images, got {len(images)}")
    smin, smax = blur_config.blur_sigma
    size = kernel_size_for(smax)

    raw = [residual(img, ctrl_poison(img, spec)) for img in images]
    blurred = []
    for i, img in enumerate(images):
        sigma = float(rng_for(rng_seed, "amp-sigma", i).uniform(smin, smax))
        kernel = gaussian_kernel(sigma, size)
        blurred.append(
            _circular_blur(ctrl_poison(img, spec).data, kernel)
            - _circular_blur(img.data, kernel)
        )

    blurred_variance = residual_stats(blurred).total_variance
    raw_variance = residual_stats(raw).total_variance
    return AmplificationResult(
        ratio=blurred_variance / max(raw_variance, VARIANCE_EPS),
        blurred_variance=blurred_variance,
        raw_variance=raw_variance,
    )


def compaction_error(image: Image, mask: FreqMask) -> float:
    """Relative L2 distortion of masking DCT coefficients, max over channels.

    By Parseval this equals the energy fraction sitting inside the zeroed
    patch, which is small for smooth images as long as (0,0) survives.
    """
    if mask.values[0, 0] != 1.0:
        raise ContractError("mask must keep the DC coefficient (0,0)")
    if mask.values.shape != (image.height, image.width):
        raise ShapeError(
            f"mask shape {mask.values.shape} does not match image {image.height}x{image.width}"
        )
    if np.all(mask.values == 1.0):  # nothing removed
        return 0.0
    worst = 0.0
    for ch in image.data:
        denom = float(np.linalg.norm(ch))
        if denom == 0.0:
            continue
        recon = idct2(mask.values * dct2(ch))
        worst = max(worst, float(np.linalg.norm(recon - ch)) / denom)
    return worst
