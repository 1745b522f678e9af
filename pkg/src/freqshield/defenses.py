"""Defenses and the stochastic view pipeline for contrastive training.

Three defenses live here: randomized Gaussian blur, frequency patching
(zeroing a random non-DC rectangle of DCT coefficients), and the luma-only
inference view. ``make_views`` composes the usual contrastive augmentations
(crop-resize, flip, jitter, grayscale) with the frequency-space defenses,
each gated by its own probability.

Determinism: every step draws from its own stream derived from the call
seed, so e.g. ``blur_augment(x, cfg, s)`` reproduces exactly the blur a view
sampled from the same stream would apply.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, ParameterError
from .seeding import derive_seed, rng_for
from .transforms import (
    Image,
    clamp_unit,
    convolve_image,
    dct2,
    gaussian_kernel,
    idct2,
    kernel_size_for,
    luma,
    rgb_to_yuv,
    yuv_to_rgb,
)


@dataclass(frozen=True)
class AugmentConfig:
    """Probabilities and parameter ranges for the view/defense pipeline.

    Defaults are the plain contrastive recipe with both frequency defenses
    switched off; use :meth:`with_blur` / :meth:`with_freq_patch` to enable
    them at their standard strengths.
    """

    crop_probability: float = 1.0
    crop_scale: tuple = (0.2, 1.0)
    flip_probability: float = 0.5
    jitter_probability: float = 0.8
    jitter_strength: float = 0.4
    grayscale_probability: float = 0.2
    blur_probability: float = 0.0
    blur_sigma: tuple = (0.3, 1.5)
    freq_patch_probability: float = 0.0
    freq_patch_side: tuple = (1, 4)
    freq_patch_colorspace: str = "rgb"

    def __post_init__(self):
        for name in (
            "crop_probability",
            "flip_probability",
            "jitter_probability",
            "grayscale_probability",
            "blur_probability",
            "freq_patch_probability",
        ):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ParameterError(f"{name} must be in [0,1], got {p}")
        smin, smax = self.crop_scale
        if not (0.0 < smin <= smax <= 1.0):
            raise ParameterError(f"crop_scale must satisfy 0 < min <= max <= 1, got {self.crop_scale}")
        bmin, bmax = self.blur_sigma
        if not (0.0 < bmin <= bmax):
            raise ParameterError(f"blur_sigma must satisfy 0 < min <= max, got {self.blur_sigma}")
        pmin, pmax = self.freq_patch_side
        if not (1 <= pmin <= pmax):
            raise ParameterError(f"freq_patch_side must satisfy 1 <= min <= max, got {self.freq_patch_side}")
        if self.jitter_strength < 0:
            raise ParameterError(f"jitter_strength must be >= 0, got {self.jitter_strength}")
        if self.freq_patch_colorspace not in ("rgb", "yuv"):
            raise ParameterError(f"freq_patch_colorspace must be 'rgb' or 'yuv', got {self.freq_patch_colorspace!r}")

    @classmethod
    def vanilla(cls) -> "AugmentConfig":
        return cls()

    def with_blur(self, probability: float = 0.5) -> "AugmentConfig":
        return replace(self, blur_probability=probability)

    def with_freq_patch(self, probability: float = 0.5) -> "AugmentConfig":
        return replace(self, freq_patch_probability=probability)

    @classmethod
    def identity(cls) -> "AugmentConfig":
        """All probabilities zero: views pass through unchanged."""
        return cls(
            crop_probability=0.0,
            flip_probability=0.0,
            jitter_probability=0.0,
            grayscale_probability=0.0,
        )


@dataclass(frozen=True)
class FreqMask:
    """Binary DCT-coefficient mask: ones everywhere except a zero rectangle
    that never covers the DC coefficient (0,0)."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ParameterError(f"mask must be 2-D, got shape {vals.shape}")
        if not np.all((vals == 0.0) | (vals == 1.0)):
            raise ParameterError("mask values must be 0 or 1")
        if vals[0, 0] != 1.0:
            raise ContractError("mask must not zero the DC coefficient (0,0)")
        zr, zc = np.nonzero(vals == 0.0)
        if len(zr):
            block = vals[zr.min() : zr.max() + 1, zc.min() : zc.max() + 1]
            if np.any(block != 0.0):
                raise ParameterError("zero region must be a single solid rectangle")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_rect(cls, height: int, width: int, top: int, left: int, rect_h: int, rect_w: int) -> "FreqMask":
        if top < 0 or left < 0 or top + rect_h > height or left + rect_w > width:
            raise ParameterError("rectangle does not fit inside the mask")
        vals = np.ones((height, width))
        vals[top : top + rect_h, left : left + rect_w] = 0.0
        return cls(vals)

    @classmethod
    def all_ones(cls, height: int, width: int) -> "FreqMask":
        return cls(np.ones((height, width)))


def sample_freq_mask(height: int, width: int, side_range: tuple, rng: np.random.Generator) -> FreqMask:
    """Uniform rectangle over positions/sides that exclude (0,0).

    A rectangle covers (0,0) only when its top-left corner is (0,0), so
    rejection sampling stays uniform over the valid set.
    """
    smin, smax = side_range
    if smax >= min(height, width):
        raise ParameterError(
            f"freq_patch_side max {smax} must be smaller than the image side {min(height, width)}"
        )
    while True:
        rect_h = int(rng.integers(smin, smax + 1))
        rect_w = int(rng.integers(smin, smax + 1))
        top = int(rng.integers(0, height - rect_h + 1))
        left = int(rng.integers(0, width - rect_w + 1))
        if (top, left) != (0, 0):
            return FreqMask.from_rect(height, width, top, left, rect_h, rect_w)


def apply_freq_mask(image: Image, mask: FreqMask, colorspace: str = "rgb") -> Image:
    """Zero the masked DCT coefficients of every channel, then clamp."""
    work = rgb_to_yuv(image) if colorspace == "yuv" else image
    out = np.stack([idct2(mask.values * dct2(ch)) for ch in work.data])
    result = Image(out, work.colorspace)
    if colorspace == "yuv":
        result = yuv_to_rgb(result)
    return clamp_unit(result)


def luma_view(image: Image) -> Image:
    """Replicate the Y' channel into all three channels (inference defense)."""
    y = luma(image)
    return Image(np.stack([y, y, y]), "rgb")


def blur_augment(image: Image, config: AugmentConfig, rng_seed: int) -> Image:
    """With the configured probability, blur with a uniformly sampled strength."""
    rng = rng_for(rng_seed, "blur")
    if rng.random() >= config.blur_probability:
        return image
    return _blur_with(image, config, rng)


def _blur_with(image: Image, config: AugmentConfig, rng: np.random.Generator) -> Image:
    smin, smax = config.blur_sigma
    sigma = float(rng.uniform(smin, smax))
    size = kernel_size_for(smax)
    largest = min(image.height, image.width)
    if size > largest:  # tiny images: shrink to the largest odd kernel that fits
        size = largest if largest % 2 == 1 else largest - 1
    kernel = gaussian_kernel(sigma, size)
    return clamp_unit(convolve_image(image, kernel, boundary="reflect"))


def freq_patch(image: Image, config: AugmentConfig, rng_seed: int) -> Image:
    """With the configured probability, zero a random non-DC DCT rectangle."""
    rng = rng_for(rng_seed, "freq-patch")
    if rng.random() >= config.freq_patch_probability:
        return image
    return _freq_patch_with(image, config, rng)


def _freq_patch_with(image: Image, config: AugmentConfig, rng: np.random.Generator) -> Image:
    mask = sample_freq_mask(image.height, image.width, config.freq_patch_side, rng)
    return apply_freq_mask(image, mask, config.freq_patch_colorspace)


def _resize_bilinear(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-aligned bilinear resize; identity when sizes match."""
    h, w = plane.shape
    if (h, w) == (out_h, out_w):
        return plane.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = plane[np.ix_(y0, x0)] * (1 - wx) + plane[np.ix_(y0, x1)] * wx
    bot = plane[np.ix_(y1, x0)] * (1 - wx) + plane[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def _crop_resize(image: Image, config: AugmentConfig, rng: np.random.Generator) -> Image:
    smin, smax = config.crop_scale
    scale = float(rng.uniform(smin, smax))
    side_frac = np.sqrt(scale)
    crop_h = max(1, int(round(image.height * side_frac)))
    crop_w = max(1, int(round(image.width * side_frac)))
    top = int(rng.integers(0, image.height - crop_h + 1))
    left = int(rng.integers(0, image.width - crop_w + 1))
    crop = image.data[:, top : top + crop_h, left : left + crop_w]
    out = np.stack([_resize_bilinear(ch, image.height, image.width) for ch in crop])
    return clamp_unit(Image(out, image.colorspace))


def _jitter(image: Image, config: AugmentConfig, rng: np.random.Generator) -> Image:
    j = config.jitter_strength
    out = image.data
    # brightness, contrast, saturation, each by a factor in [1-j, 1+j]
    out = out * float(rng.uniform(max(0.0, 1 - j), 1 + j))
    out = np.clip(out, 0.0, 1.0)
    mean = out.mean()
    out = (out - mean) * float(rng.uniform(max(0.0, 1 - j), 1 + j)) + mean
    out = np.clip(out, 0.0, 1.0)
    gray = luma(Image(out, "rgb"))
    out = (out - gray) * float(rng.uniform(max(0.0, 1 - j), 1 + j)) + gray
    return clamp_unit(Image(out, image.colorspace))


def _grayscale(image: Image) -> Image:
    return luma_view(image)


def apply_view(image: Image, config: AugmentConfig, rng_seed: int) -> Image:
    """One sampled augmentation composition, each step gated by its probability."""
    out = image
    rng = rng_for(rng_seed, "crop")
    if rng.random() < config.crop_probability:
        out = _crop_resize(out, config, rng)
    rng = rng_for(rng_seed, "flip")
    if rng.random() < config.flip_probability:
        out = Image(out.data[:, :, ::-1].copy(), out.colorspace)
    rng = rng_for(rng_seed, "jitter")
    if rng.random() < config.jitter_probability:
        out = _jitter(out, config, rng)
    rng = rng_for(rng_seed, "grayscale")
    if rng.random() < config.grayscale_probability:
        out = _grayscale(out)
    rng = rng_for(rng_seed, "blur")
    if rng.random() < config.blur_probability:
        out = _blur_with(out, config, rng)
    rng = rng_for(rng_seed, "freq-patch")
    if rng.random() < config.freq_patch_probability:
        out = _freq_patch_with(out, config, rng)
    return out


def view_seed(rng_seed: int, which: int) -> int:
    """Seed for view 0 or 1 of a ``make_views`` call."""
    return derive_seed(rng_seed, "view", which)


def make_views(image: Image, config: AugmentConfig, rng_seed: int) -> tuple:
    """Two independently sampled augmentation compositions of the input."""
    return (
        apply_view(image, config, view_seed(rng_seed, 0)),
        apply_view(image, config, view_seed(rng_seed, 1)),
    )
