"""Poisoning procedures: CTRL (frequency diagonal trigger), FIBA (amplitude
injection), HTBA (spatial patch), and the pixel-space residual operator.

Trigger magnitudes are given on the familiar 0-255 pixel scale and divided by
255 internally, since images here live in [0,1].
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ParameterError, ShapeError
from .seeding import rng_for
from .transforms import (
    Image,
    clamp_unit,
    dct2,
    fft2,
    idct2,
    ifft2,
    rgb_to_yuv,
    yuv_to_rgb,
)

DCT = "dct"
FFT = "fft"

# channel indices in a Y'UV image
_YUV_INDEX = {"y": 0, "u": 1, "v": 2}


@dataclass(frozen=True)
class CtrlSpec:
    """Constant trigger added at two diagonal positions of the chroma spectra.

    ``magnitude`` is in 0-255 pixel units. The trigger lands at 0-based
    positions (s/2-1, s/2-1) and (s-1, s-1) of each selected channel's
    frequency plane (mid-range and highest diagonal frequencies).
    """

    magnitude: float = 100.0
    transform: str = DCT
    channels: tuple = ("u", "v")

    def __post_init__(self):
        if self.magnitude < 0:
            raise ParameterError(f"magnitude must be >= 0, got {self.magnitude}")
        if self.transform not in (DCT, FFT):
            raise ParameterError(f"transform must be {DCT!r} or {FFT!r}, got {self.transform!r}")
        if not self.channels or any(c not in ("u", "v") for c in self.channels):
            raise ParameterError(f"channels must be a non-empty subset of ('u','v'), got {self.channels}")


@dataclass(frozen=True)
class FibaSpec:
    """Blend a trigger image's FFT amplitude into the target's low frequencies.

    ``alpha`` weighs the target's own amplitude inside the mask (1 = no
    injection); ``beta`` is the masked fraction of the spectrum side.
    """

    trigger_image: Image
    alpha: float = 0.15
    beta: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ParameterError(f"alpha must be in [0,1], got {self.alpha}")
        if not (0.0 < self.beta < 1.0):
            raise ParameterError(f"beta must be in (0,1), got {self.beta}")


@dataclass(frozen=True)
class HtbaSpec:
    """Opaque patch pasted at a fixed or seeded-random position."""

    patch: Image
    placement: Union[tuple, str] = "random"

    def __post_init__(self):
        if self.placement != "random":
            row, col = self.placement
            if row < 0 or col < 0:
                raise ParameterError(f"fixed placement must be non-negative, got {self.placement}")

    @property
    def patch_size(self) -> int:
        return max(self.patch.height, self.patch.width)


TriggerSpec = Union[CtrlSpec, FibaSpec, HtbaSpec]


def ctrl_trigger_positions(side: int) -> list:
    """0-based diagonal positions receiving the trigger for an s-by-s image."""
    return [(side // 2 - 1, side // 2 - 1), (side - 1, side - 1)]


def ctrl_poison(image: Image, spec: CtrlSpec, clamp: bool = True) -> Image:
    """Inject the constant chroma-spectrum trigger and return the RGB result.

    The luma channel is untouched before the final clamp. With ``clamp=False``
    the linear (pre-clamp) poisoned image is returned, which is what the
    defense analysis compares against.
    """
    if image.height != image.width:
        raise ShapeError(f"trigger needs a square image, got {image.height}x{image.width}")
    s = image.height
    c = spec.magnitude / 255.0
    if c == 0.0:  # zero trigger is a strict no-op, not a transform round trip
        return clamp_unit(image) if clamp else image.copy()

    yuv = rgb_to_yuv(image)
    planes = yuv.data.copy()
    for name in spec.channels:
        idx = _YUV_INDEX[name]
        if spec.transform == DCT:
            coeffs = dct2(planes[idx])
            for i, j in ctrl_trigger_positions(s):
                coeffs[i, j] += c
            planes[idx] = idct2(coeffs)
        else:
            spectrum = fft2(planes[idx])
            for i, j in ctrl_trigger_positions(s):
                spectrum[i, j] += c
                mi, mj = (s - i) % s, (s - j) % s
                if (mi, mj) != (i, j):  # mirror keeps the spectrum conjugate-symmetric
                    spectrum[mi, mj] += c
            planes[idx] = ifft2(spectrum)
    out = yuv_to_rgb(Image(planes, "yuv"))
    return clamp_unit(out) if clamp else out


def _low_freq_mask(height: int, width: int, beta: float) -> np.ndarray:
    """Square low-frequency mask around DC, wrap-aware and symmetric in signed
    frequency so amplitude surgery keeps the inverse FFT real.

    Side = round(beta * s); even sides are widened by one to stay symmetric.
    """
    s = min(height, width)
    side = int(np.floor(beta * s + 0.5))
    if side <= 0:
        return np.zeros((height, width))
    if side % 2 == 0:
        side += 1
    half = side // 2
    fi = np.abs(np.fft.fftfreq(height) * height)[:, None]
    fj = np.abs(np.fft.fftfreq(width) * width)[None, :]
    return ((fi <= half) & (fj <= half)).astype(np.float64)


def fiba_poison(image: Image, spec: FibaSpec, clamp: bool = True) -> Image:
    """Blend the trigger's FFT amplitude into the low-frequency band, keeping
    the target's phase, per channel."""
    trigger = spec.trigger_image
    if trigger.data.shape != image.data.shape:
        raise ShapeError(
            f"trigger shape {trigger.data.shape} does not match image {image.data.shape}"
        )
    mask = _low_freq_mask(image.height, image.width, spec.beta)
    out = np.empty_like(image.data)
    for ch in range(3):
        spectrum = fft2(image.data[ch])
        amplitude = np.abs(spectrum)
        phase = np.angle(spectrum)
        amp_trigger = np.abs(fft2(trigger.data[ch]))
        blended = ((1.0 - spec.alpha) * amp_trigger + spec.alpha * amplitude) * mask + amplitude * (1.0 - mask)
        out[ch] = ifft2(blended * np.exp(1j * phase), imag_tol=1e-9)
    result = Image(out, image.colorspace)
    return clamp_unit(result) if clamp else result


def htba_poison(image: Image, spec: HtbaSpec, rng_seed: int = 0) -> Image:
    """Paste the patch opaquely; random placement is uniform over valid
    top-left corners and deterministic per seed."""
    ph, pw = spec.patch.height, spec.patch.width
    if ph > image.height or pw > image.width:
        raise ParameterError(
            f"patch {ph}x{pw} does not fit inside image {image.height}x{image.width}"
        )
    if spec.placement == "random":
        rng = rng_for(rng_seed, "htba-placement")
        row = int(rng.integers(0, image.height - ph + 1))
        col = int(rng.integers(0, image.width - pw + 1))
    else:
        row, col = spec.placement
        if row + ph > image.height or col + pw > image.width:
            raise ParameterError(
                f"placement ({row},{col}) pushes patch outside the {image.height}x{image.width} image"
            )
    out = image.data.copy()
    out[:, row : row + ph, col : col + pw] = spec.patch.data
    return Image(out, image.colorspace)


def poison_image(image: Image, spec: TriggerSpec, rng_seed: int = 0) -> Image:
    """Apply whichever attack the spec describes."""
    if isinstance(spec, CtrlSpec):
        return ctrl_poison(image, spec)
    if isinstance(spec, FibaSpec):
        return fiba_poison(image, spec)
    if isinstance(spec, HtbaSpec):
        return htba_poison(image, spec, rng_seed)
    raise ParameterError(f"unknown trigger spec {type(spec).__name__}")


def residual(clean: Image, poisoned: Image) -> np.ndarray:
    """Pixel-space trigger: poisoned minus clean. May be negative."""
    if clean.data.shape != poisoned.data.shape:
        raise ShapeError(
            f"shape mismatch: {clean.data.shape} vs {poisoned.data.shape}"
        )
    return poisoned.data - clean.data


def trigger_spec_to_dict(spec: TriggerSpec) -> dict:
    """JSON-ready tagged representation (inverse of trigger_spec_from_dict)."""
    if isinstance(spec, CtrlSpec):
        return {
            "variant": "ctrl",
            "magnitude": spec.magnitude,
            "transform": spec.transform,
            "channels": list(spec.channels),
        }
    if isinstance(spec, FibaSpec):
        return {
            "variant": "fiba",
            "alpha": spec.alpha,
            "beta": spec.beta,
            "trigger_image": spec.trigger_image.data.tolist(),
        }
    if isinstance(spec, HtbaSpec):
        return {
            "variant": "htba",
            "patch": spec.patch.data.tolist(),
            "placement": "random" if spec.placement == "random" else list(spec.placement),
        }
    raise ParameterError(f"unknown trigger spec {type(spec).__name__}")


def trigger_spec_from_dict(payload: dict) -> TriggerSpec:
    variant = payload.get("variant")
    if variant == "ctrl":
        return CtrlSpec(
            magnitude=float(payload["magnitude"]),
            transform=payload.get("transform", DCT),
            channels=tuple(payload.get("channels", ("u", "v"))),
        )
    if variant == "fiba":
        return FibaSpec(
            trigger_image=Image(np.array(payload["trigger_image"])),
            alpha=float(payload["alpha"]),
            beta=float(payload["beta"]),
        )
    if variant == "htba":
        placement = payload.get("placement", "random")
        if placement != "random":
            placement = tuple(int(v) for v in placement)
        return HtbaSpec(patch=Image(np.array(payload["patch"])), placement=placement)
    raise ParameterError(f"unknown trigger variant {variant!r}")
