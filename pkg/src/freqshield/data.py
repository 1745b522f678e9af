"""Dataset ingestion, synthetic generation, poisoning, and on-disk format.

Poisoning is label-consistent: triggers land only in genuine target-class
samples (no label flipping), with the poison count taken as a fraction of
the full dataset size. The export format is a raw little-endian float64
tensor (``data.f64``) plus a JSON sidecar (``meta.json``) holding shape,
labels and the poison manifest; round trips are bit-exact.
"""

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .attacks import TriggerSpec, poison_image, trigger_spec_from_dict, trigger_spec_to_dict
from .errors import (
    CapacityError,
    FormatError,
    FreqShieldError,
    InvalidInputError,
    ParameterError,
    ShapeError,
)
from .seeding import derive_seed, rng_for
from .transforms import Image

DATA_FILE = "data.f64"
META_FILE = "meta.json"

_CIFAR10_RECORD = 3073  # 1 label byte + 3072 pixel bytes
_CIFAR100_RECORD = 3074  # coarse + fine label bytes + 3072 pixel bytes


@dataclass
class Dataset:
    """Images as one (N, 3, H, W) float64 tensor in [0,1] plus integer labels."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or self.images.shape[1] != 3:
            raise ShapeError(f"images must be (N, 3, H, W), got {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise ShapeError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if self.num_classes < 1:
            raise ParameterError(f"num_classes must be >= 1, got {self.num_classes}")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InvalidInputError(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )
        if self.images.size and not np.all(np.isfinite(self.images)):
            raise InvalidInputError("images contain non-finite values")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise InvalidInputError("image values must lie in [0,1]")

    def __len__(self) -> int:
        return len(self.images)

    def image(self, index: int) -> Image:
        return Image(self.images[index])

    def copy(self) -> "Dataset":
        return Dataset(self.images.copy(), self.labels.copy(), self.num_classes, self.name)


@dataclass
class PoisonManifest:
    """Reproducible record of which samples were poisoned and how."""

    attack: TriggerSpec
    target_class: int
    poison_ratio: float
    seed: int
    poisoned_indices: list = field(default_factory=list)

    def __post_init__(self):
        self.poisoned_indices = sorted(int(i) for i in set(self.poisoned_indices))

    def to_dict(self) -> dict:
        return {
            "attack": trigger_spec_to_dict(self.attack),
            "target_class": self.target_class,
            "poison_ratio": self.poison_ratio,
            "seed": self.seed,
            "poisoned_indices": self.poisoned_indices,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PoisonManifest":
        return cls(
            attack=trigger_spec_from_dict(payload["attack"]),
            target_class=int(payload["target_class"]),
            poison_ratio=float(payload["poison_ratio"]),
            seed=int(payload["seed"]),
            poisoned_indices=payload["poisoned_indices"],
        )


def _load_cifar_records(path: str, record_size: int, label_offset: int, num_classes: int, name: str) -> Dataset:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) % record_size != 0:
        raise FormatError(
            f"{path}: {len(raw)} bytes is not a multiple of the {record_size}-byte record",
            byte_offset=(len(raw) // record_size) * record_size,
        )
    n = len(raw) // record_size
    if n == 0:
        return Dataset(np.zeros((0, 3, 32, 32)), np.zeros(0, dtype=np.int64), num_classes, name)
    records = np.frombuffer(raw, dtype=np.uint8).reshape(n, record_size)
    labels = records[:, label_offset].astype(np.int64)
    bad = np.nonzero(labels >= num_classes)[0]
    if len(bad):
        raise FormatError(
            f"{path}: label {labels[bad[0]]} out of range for {num_classes} classes",
            byte_offset=int(bad[0]) * record_size + label_offset,
        )
    pixels = records[:, label_offset + 1 :].reshape(n, 3, 32, 32).astype(np.float64) / 255.0
    return Dataset(pixels, labels, num_classes, name)


def load_cifar10(path: str) -> Dataset:
    """Parse a CIFAR-10 binary batch file (3073-byte records)."""
    return _load_cifar_records(path, _CIFAR10_RECORD, 0, 10, "cifar10")


def load_cifar100(path: str) -> Dataset:
    """Parse a CIFAR-100 binary file (3074-byte records, coarse+fine labels);
    the fine label is used."""
    return _load_cifar_records(path, _CIFAR100_RECORD, 1, 100, "cifar100")


def gen_synthetic(num_classes: int, per_class: int, side: int, rng_seed: int = 0) -> Dataset:
    """Smooth, well-separated classes: one Gaussian blob per class with a
    class-specific center and color, plus seeded per-sample jitter and noise.

    Classes are separable enough that pixel-space 1-NN across two seeds of
    the same family scores well above 0.9.
    """
    if side < 8:
        raise ParameterError(f"side must be >= 8, got {side}")
    if num_classes < 1 or per_class < 1:
        raise ParameterError("num_classes and per_class must be positive")
    rng = rng_for(rng_seed, "synthetic")
    yy, xx = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")

    images = np.empty((num_classes * per_class, 3, side, side))
    labels = np.empty(num_classes * per_class, dtype=np.int64)
    for k in range(num_classes):
        angle = 2.0 * np.pi * k / num_classes
        center = (
            side / 2 + 0.28 * side * np.sin(angle),
            side / 2 + 0.28 * side * np.cos(angle),
        )
        color = 0.55 + 0.35 * np.cos(angle + np.array([0.0, 2.1, 4.2]))
        for i in range(per_class):
            idx = k * per_class + i
            cy = center[0] + rng.normal(0.0, side / 20.0)
            cx = center[1] + rng.normal(0.0, side / 20.0)
            width = side / 5.0 * rng.uniform(0.85, 1.15)
            bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * width**2))
            brightness = rng.uniform(0.85, 1.15)
            img = 0.12 + brightness * color[:, None, None] * bump[None, :, :]
            img += rng.normal(0.0, 0.02, size=img.shape)
            images[idx] = np.clip(img, 0.0, 1.0)
            labels[idx] = k
    return Dataset(images, labels, num_classes, f"synthetic-{num_classes}x{per_class}")


def poison_dataset(
    dataset: Dataset,
    attack: TriggerSpec,
    target_class: int,
    ratio: float,
    seed: int = 0,
) -> tuple:
    """Poison round(ratio * N) samples drawn uniformly from the target class.

    Label-consistent: only genuine target-class samples receive the trigger
    and no labels change. Returns (poisoned dataset, manifest); the input
    dataset is left untouched.
    """
    if not (0.0 <= ratio < 1.0):
        raise ParameterError(f"ratio must be in [0,1), got {ratio}")
    if len(dataset) and not (0 <= target_class < dataset.num_classes):
        raise ParameterError(f"target class {target_class} not in dataset")
    count = int(np.floor(ratio * len(dataset) + 0.5))
    eligible = np.nonzero(dataset.labels == target_class)[0]
    if count > len(eligible):
        raise CapacityError(
            f"need {count} poison samples but target class {target_class} has only {len(eligible)}"
        )
    poisoned = dataset.copy()
    if count == 0:
        return poisoned, PoisonManifest(attack, target_class, ratio, seed, [])
    chosen = rng_for(seed, "poison-selection").choice(eligible, size=count, replace=False)
    for idx in sorted(int(i) for i in chosen):
        item_seed = derive_seed(seed, "poison-item", idx)
        poisoned.images[idx] = poison_image(dataset.image(idx), attack, rng_seed=item_seed).data
    manifest = PoisonManifest(attack, target_class, ratio, seed, [int(i) for i in chosen])
    return poisoned, manifest


def write_atomic(path: str, payload: bytes):
    """Write to a temp file in the target directory, then rename."""
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def export_dataset(dataset: Dataset, manifest, out_dir: str):
    """Write ``data.f64`` + ``meta.json`` into ``out_dir`` (created if needed)."""
    os.makedirs(out_dir, exist_ok=True)
    write_atomic(os.path.join(out_dir, DATA_FILE), dataset.images.astype("<f8").tobytes())
    meta = {
        "shape": list(dataset.images.shape),
        "labels": dataset.labels.tolist(),
        "num_classes": dataset.num_classes,
        "name": dataset.name,
        "manifest": manifest.to_dict() if manifest is not None else None,
    }
    payload = json.dumps(meta, sort_keys=True, indent=1).encode()
    write_atomic(os.path.join(out_dir, META_FILE), payload)


def import_dataset(in_dir: str) -> tuple:
    """Inverse of :func:`export_dataset`; returns (dataset, manifest or None)."""
    meta_path = os.path.join(in_dir, META_FILE)
    data_path = os.path.join(in_dir, DATA_FILE)
    if not os.path.exists(meta_path):
        raise FormatError(f"missing sidecar {meta_path}")
    if not os.path.exists(data_path):
        raise FormatError(f"missing tensor file {data_path}")
    try:
        with open(meta_path) as f:
            meta = json.load(f)
        shape = tuple(int(v) for v in meta["shape"])
        labels = meta["labels"]
        num_classes = int(meta["num_classes"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"corrupt sidecar {meta_path}: {exc}") from exc
    raw = np.fromfile(data_path, dtype="<f8")
    expected = int(np.prod(shape)) if shape else 0
    if raw.size != expected:
        raise FormatError(
            f"{data_path}: holds {raw.size} float64 values but sidecar shape {shape} needs {expected}",
            byte_offset=min(raw.size, expected) * 8,
        )
    try:
        dataset = Dataset(raw.reshape(shape), np.array(labels), num_classes, meta.get("name", "dataset"))
    except FreqShieldError as exc:
        raise FormatError(f"sidecar {meta_path} disagrees with tensor contents: {exc}") from exc
    manifest = PoisonManifest.from_dict(meta["manifest"]) if meta.get("manifest") else None
    return dataset, manifest
