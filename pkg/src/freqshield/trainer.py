"""Desk-scale contrastive trainer.

A linear or one-hidden-layer encoder on flattened pixels, trained with the
normalized temperature-scaled cross-entropy objective (positives are the two
views of a sample, negatives everything else in the batch) under SGD with
momentum and weight decay. Gradients are analytic, including the path
through the embedding normalization, and are checked against central finite
differences in the test suite.

The equivariance / augmentation-invariance losses are provided as forward
computations with a finite-difference gradient helper; an optional config
weight folds the invariance penalty into training.
"""

import json
import os
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .data import Dataset, PoisonManifest, write_atomic
from .defenses import AugmentConfig, luma_view, make_views
from .errors import (
    ContractError,
    DegenerateInputError,
    FormatError,
    ParameterError,
    ShapeError,
    TrainingError,
)
from .evaluation import EmbeddingSet
from .seeding import derive_seed, rng_for
from .transforms import Image

LINEAR = "linear"
MLP = "mlp"

ENCODER_DATA_FILE = "params.f64"
ENCODER_META_FILE = "encoder.json"


@dataclass
class EncoderParams:
    """Weights of the toy encoder: {'W'} for linear, {'W1','b1','W2','b2'} for mlp."""

    architecture: str
    tensors: dict

    def __post_init__(self):
        expected = ("W",) if self.architecture == LINEAR else ("W1", "b1", "W2", "b2")
        if self.architecture not in (LINEAR, MLP):
            raise ParameterError(f"architecture must be {LINEAR!r} or {MLP!r}")
        if tuple(self.tensors) != expected:
            raise ParameterError(f"{self.architecture} encoder needs tensors {expected}, got {tuple(self.tensors)}")
        for name, t in self.tensors.items():
            self.tensors[name] = np.asarray(t, dtype=np.float64)
            if not np.all(np.isfinite(self.tensors[name])):
                raise ParameterError(f"tensor {name} contains non-finite values")

    @property
    def input_dim(self) -> int:
        return self.tensors["W" if self.architecture == LINEAR else "W1"].shape[1]

    @property
    def output_dim(self) -> int:
        return self.tensors["W" if self.architecture == LINEAR else "W2"].shape[0]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.architecture, {k: v.copy() for k, v in self.tensors.items()})


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters: lr/momentum/weight-decay/temperature follow the usual
    contrastive recipe; epochs and batch size are desk-scale."""

    learning_rate: float = 0.06
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 30
    batch_size: int = 64
    temperature: float = 0.5
    rng_seed: int = 0
    architecture: str = LINEAR
    embed_dim: int = 32
    hidden_dim: int = 64
    c_task: float = 1.0
    c_equi: float = 0.0
    c_reg: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.temperature <= 0:
            raise ParameterError(f"temperature must be > 0, got {self.temperature}")
        if self.batch_size < 2:
            raise ParameterError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 0:
            raise ParameterError(f"epochs must be >= 0, got {self.epochs}")
        if min(self.c_task, self.c_equi, self.c_reg) < 0:
            raise ParameterError("loss weights must be >= 0")
        if self.architecture not in (LINEAR, MLP):
            raise ParameterError(f"architecture must be {LINEAR!r} or {MLP!r}")


@dataclass
class TrainResult:
    params: EncoderParams
    loss_trace: list  # mean combined loss per epoch


def init_encoder(architecture: str, input_dim: int, config: TrainConfig) -> EncoderParams:
    """Seeded uniform init in +-1/sqrt(fan_in) for weights and biases."""
    rng = rng_for(config.rng_seed, "init")
    if architecture == LINEAR:
        bound = 1.0 / np.sqrt(input_dim)
        return EncoderParams(LINEAR, {"W": rng.uniform(-bound, bound, (config.embed_dim, input_dim))})
    b1 = 1.0 / np.sqrt(input_dim)
    b2 = 1.0 / np.sqrt(config.hidden_dim)
    return EncoderParams(
        MLP,
        {
            "W1": rng.uniform(-b1, b1, (config.hidden_dim, input_dim)),
            "b1": rng.uniform(-b1, b1, config.hidden_dim),
            "W2": rng.uniform(-b2, b2, (config.embed_dim, config.hidden_dim)),
            "b2": rng.uniform(-b2, b2, config.embed_dim),
        },
    )


def encoder_forward(params: EncoderParams, inputs: np.ndarray) -> np.ndarray:
    """Batch forward pass: (B, d_in) -> (B, d_out)."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if inputs.shape[1] != params.input_dim:
        raise ShapeError(f"inputs have {inputs.shape[1]} features, encoder expects {params.input_dim}")
    if params.architecture == LINEAR:
        return inputs @ params.tensors["W"].T
    hidden = np.maximum(0.0, inputs @ params.tensors["W1"].T + params.tensors["b1"])
    return hidden @ params.tensors["W2"].T + params.tensors["b2"]


def _forward_cached(params: EncoderParams, inputs: np.ndarray):
    if params.architecture == LINEAR:
        return inputs @ params.tensors["W"].T, {"inputs": inputs}
    pre = inputs @ params.tensors["W1"].T + params.tensors["b1"]
    hidden = np.maximum(0.0, pre)
    return hidden @ params.tensors["W2"].T + params.tensors["b2"], {
        "inputs": inputs,
        "hidden": hidden,
    }


def _backward(params: EncoderParams, cache: dict, grad_out: np.ndarray) -> dict:
    if params.architecture == LINEAR:
        return {"W": grad_out.T @ cache["inputs"]}
    grad_hidden = (grad_out @ params.tensors["W2"]) * (cache["hidden"] > 0.0)
    return {
        "W1": grad_hidden.T @ cache["inputs"],
        "b1": grad_hidden.sum(axis=0),
        "W2": grad_out.T @ cache["hidden"],
        "b2": grad_out.sum(axis=0),
    }


def _normalize_rows(vectors: np.ndarray):
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateInputError("zero-norm embedding")
    return vectors / norms, norms


def ntxent_loss(view_a: np.ndarray, view_b: np.ndarray, temperature: float):
    """NT-Xent over 2N anchors with analytic gradients w.r.t. the raw
    (pre-normalization) embeddings.

    Returns (loss, grad_a, grad_b). With a single pair there are no
    negatives and the loss is identically zero.
    """
    view_a = np.atleast_2d(np.asarray(view_a, dtype=np.float64))
    view_b = np.atleast_2d(np.asarray(view_b, dtype=np.float64))
    if view_a.shape != view_b.shape:
        raise ShapeError(f"view shapes differ: {view_a.shape} vs {view_b.shape}")
    if temperature <= 0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    n = view_a.shape[0]

    za, norm_a = _normalize_rows(view_a)
    zb, norm_b = _normalize_rows(view_b)
    z = np.vstack([za, zb])
    m = 2 * n
    positives = np.concatenate([np.arange(n) + n, np.arange(n)])

    sim = z @ z.T / temperature
    np.fill_diagonal(sim, -np.inf)  # anchors never match themselves
    row_max = sim.max(axis=1, keepdims=True)
    exp = np.exp(sim - row_max)
    denom = exp.sum(axis=1, keepdims=True)
    log_prob = sim - row_max - np.log(denom)
    loss = float(-log_prob[np.arange(m), positives].mean()) + 0.0  # avoid -0.0

    softmax = exp / denom
    grad_sim = softmax
    grad_sim[np.arange(m), positives] -= 1.0
    grad_sim /= m
    grad_z = (grad_sim + grad_sim.T) @ z / temperature

    # back through the row normalization: u -> u/|u|
    def through_norm(grad_hat, z_hat, norms):
        radial = np.sum(grad_hat * z_hat, axis=1, keepdims=True)
        return (grad_hat - radial * z_hat) / norms

    grad_a = through_norm(grad_z[:n], za, norm_a)
    grad_b = through_norm(grad_z[n:], zb, norm_b)
    return loss, grad_a, grad_b


@dataclass(frozen=True)
class EquiTransform:
    """A transform with an input-space action and (optionally) an action on
    the encoder output, needed for the equivariance losses.

    Vector embeddings have no natural spatial action, so only transforms
    that declare how they act on the output (and, for the inverse form, the
    inverse of that action) are admissible.
    """

    name: str
    on_input: Callable
    on_output: Optional[Callable] = None
    on_output_inverse: Optional[Callable] = None


def _as_encoder_fn(encoder) -> Callable:
    if isinstance(encoder, EncoderParams):
        return lambda img: encoder_forward(encoder, img.data.reshape(1, -1))[0]
    return encoder


def equi_loss(encoder, image: Image, transforms: list, form: str = "commute") -> float:
    """Sum of squared-L2 equivariance defects over the transform list.

    ``commute`` compares f(g(x)) with g(f(x)); ``inverse`` compares
    g^{-1}(f(g(x))) with f(x). Transforms missing the needed output action
    raise :class:`ContractError`.
    """
    if form not in ("commute", "inverse"):
        raise ParameterError(f"form must be 'commute' or 'inverse', got {form!r}")
    f = _as_encoder_fn(encoder)
    total = 0.0
    for t in transforms:
        f_gx = np.asarray(f(t.on_input(image)), dtype=np.float64)
        if form == "commute":
            if t.on_output is None:
                raise ContractError(f"transform {t.name!r} declares no output action")
            other = np.asarray(t.on_output(f(image)), dtype=np.float64)
            total += float(np.sum((f_gx - other) ** 2))
        else:
            if t.on_output_inverse is None:
                raise ContractError(f"transform {t.name!r} declares no inverse output action")
            pulled_back = np.asarray(t.on_output_inverse(f_gx), dtype=np.float64)
            total += float(np.sum((pulled_back - np.asarray(f(image))) ** 2))
    return total


def aug_invariance_loss(encoder, image: Image, transforms: list) -> float:
    """Sum of squared-L2 distances between f(x) and f(g(x)); only the input
    action of each transform is used."""
    f = _as_encoder_fn(encoder)
    base = np.asarray(f(image), dtype=np.float64)
    total = 0.0
    for t in transforms:
        total += float(np.sum((base - np.asarray(f(t.on_input(image)), dtype=np.float64)) ** 2))
    return total


def finite_difference_grads(loss_fn: Callable, params: EncoderParams, epsilon: float = 1e-6) -> dict:
    """Central-difference gradients of a scalar loss w.r.t. every tensor entry."""
    grads = {}
    for name, tensor in params.tensors.items():
        grad = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            plus = loss_fn(params)
            flat[i] = original - epsilon
            minus = loss_fn(params)
            flat[i] = original
            gflat[i] = (plus - minus) / (2.0 * epsilon)
        grads[name] = grad
    return grads


def sgd_step(tensors: dict, grads: dict, velocity: dict, lr: float, momentum: float, weight_decay: float):
    """In-place SGD with momentum and (coupled) weight decay."""
    for name in tensors:
        velocity[name] = momentum * velocity[name] + grads[name] + weight_decay * tensors[name]
        tensors[name] -= lr * velocity[name]


def train_encoder(dataset: Dataset, augment_config: AugmentConfig, config: TrainConfig) -> TrainResult:
    """Contrastive training over two sampled views per image.

    Deterministic for a fixed config seed: shuffling and per-sample view
    seeds derive from (epoch, index). Raises :class:`TrainingError` if the
    loss leaves the finite range.
    """
    if len(dataset) == 0:
        raise ParameterError("dataset is empty")
    if config.batch_size > len(dataset):
        raise ParameterError(f"batch_size {config.batch_size} exceeds dataset size {len(dataset)}")
    input_dim = int(np.prod(dataset.images.shape[1:]))
    params = init_encoder(config.architecture, input_dim, config)
    velocity = {name: np.zeros_like(t) for name, t in params.tensors.items()}
    trace = []

    for epoch in range(config.epochs):
        order = rng_for(config.rng_seed, "shuffle", epoch).permutation(len(dataset))
        epoch_losses = []
        for start in range(0, len(order) - config.batch_size + 1, config.batch_size):
            batch = order[start : start + config.batch_size]
            xa = np.empty((len(batch), input_dim))
            xb = np.empty((len(batch), input_dim))
            base = np.empty((len(batch), input_dim))
            for row, idx in enumerate(batch):
                image = dataset.image(int(idx))
                va, vb = make_views(image, augment_config, derive_seed(config.rng_seed, "views", epoch, int(idx)))
                xa[row] = va.data.reshape(-1)
                xb[row] = vb.data.reshape(-1)
                base[row] = image.data.reshape(-1)

            ea, cache_a = _forward_cached(params, xa)
            eb, cache_b = _forward_cached(params, xb)
            loss, grad_ea, grad_eb = ntxent_loss(ea, eb, config.temperature)
            loss *= config.c_task
            grad_ea = config.c_task * grad_ea
            grad_eb = config.c_task * grad_eb

            caches = [(cache_a, grad_ea), (cache_b, grad_eb)]
            if config.c_equi > 0.0:
                # invariance penalty: tie each view embedding to the clean-image embedding
                e0, cache_0 = _forward_cached(params, base)
                scale = config.c_equi / (len(batch) * 2)
                inv = scale * float(np.sum((ea - e0) ** 2) + np.sum((eb - e0) ** 2))
                loss += inv
                caches = [
                    (cache_a, grad_ea + scale * 2.0 * (ea - e0)),
                    (cache_b, grad_eb + scale * 2.0 * (eb - e0)),
                    (cache_0, scale * -2.0 * ((ea - e0) + (eb - e0))),
                ]

            grads = {name: np.zeros_like(t) for name, t in params.tensors.items()}
            for cache, grad_out in caches:
                for name, g in _backward(params, cache, grad_out).items():
                    grads[name] += g
            if config.c_reg > 0.0:
                loss += config.c_reg * 0.5 * sum(float(np.sum(t**2)) for t in params.tensors.values())
                for name, t in params.tensors.items():
                    grads[name] += config.c_reg * t

            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            sgd_step(params.tensors, grads, velocity, config.learning_rate, config.momentum, config.weight_decay)
            epoch_losses.append(loss)
        trace.append(float(np.mean(epoch_losses)) if epoch_losses else float("nan"))
    return TrainResult(params=params, loss_trace=trace)


def embed_dataset(
    params: EncoderParams,
    dataset: Dataset,
    inference_transform: str = "none",
    manifest: Optional[PoisonManifest] = None,
) -> EmbeddingSet:
    """Encode every image (optionally through the luma view) and unit-normalize."""
    if inference_transform not in ("none", "luma"):
        raise ParameterError(f"inference_transform must be 'none' or 'luma', got {inference_transform!r}")
    n = len(dataset)
    inputs = np.empty((n, params.input_dim))
    for i in range(n):
        image = dataset.image(i)
        if inference_transform == "luma":
            image = luma_view(image)
        flat = image.data.reshape(-1)
        if flat.size != params.input_dim:
            raise ShapeError(f"image of {flat.size} values, encoder expects {params.input_dim}")
        inputs[i] = flat
    vectors = encoder_forward(params, inputs) if n else np.zeros((0, params.output_dim))
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    vectors = vectors / np.where(norms == 0.0, 1.0, norms)
    flags = np.zeros(n, dtype=bool)
    if manifest is not None:
        flags[np.asarray(manifest.poisoned_indices, dtype=int)] = True
    return EmbeddingSet(vectors, dataset.labels.copy(), flags, unit_norm=True)


def export_encoder(params: EncoderParams, out_dir: str):
    """Raw-tensor + JSON sidecar scheme, same as datasets."""
    os.makedirs(out_dir, exist_ok=True)
    names = list(params.tensors)
    blob = b"".join(params.tensors[n].astype("<f8").tobytes() for n in names)
    write_atomic(os.path.join(out_dir, ENCODER_DATA_FILE), blob)
    meta = {
        "architecture": params.architecture,
        "tensors": [{"name": n, "shape": list(params.tensors[n].shape)} for n in names],
    }
    write_atomic(os.path.join(out_dir, ENCODER_META_FILE), json.dumps(meta, sort_keys=True, indent=1).encode())


def import_encoder(in_dir: str) -> EncoderParams:
    meta_path = os.path.join(in_dir, ENCODER_META_FILE)
    data_path = os.path.join(in_dir, ENCODER_DATA_FILE)
    if not os.path.exists(meta_path) or not os.path.exists(data_path):
        raise FormatError(f"missing encoder files in {in_dir}")
    try:
        with open(meta_path) as f:
            meta = json.load(f)
        entries = [(e["name"], tuple(int(v) for v in e["shape"])) for e in meta["tensors"]]
        architecture = meta["architecture"]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"corrupt encoder sidecar {meta_path}: {exc}") from exc
    raw = np.fromfile(data_path, dtype="<f8")
    expected = sum(int(np.prod(s)) for _, s in entries)
    if raw.size != expected:
        raise FormatError(f"{data_path}: {raw.size} values but sidecar needs {expected}")
    tensors = {}
    offset = 0
    for name, shape in entries:
        size = int(np.prod(shape))
        tensors[name] = raw[offset : offset + size].reshape(shape).copy()
        offset += size
    return EncoderParams(architecture, tensors)
