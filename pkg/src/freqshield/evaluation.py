"""KNN classification over embeddings, clean-accuracy / attack-success
metrics, and a PCA exporter for cluster-structure inspection."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InvalidInputError, ParameterError, ShapeError

EUCLIDEAN = "euclidean"
COSINE = "cosine"


@dataclass
class EmbeddingSet:
    """N embedding vectors with labels and per-sample poisoned flags."""

    vectors: np.ndarray
    labels: np.ndarray
    poisoned_flags: np.ndarray = None
    unit_norm: bool = False

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.vectors.ndim != 2:
            raise ShapeError(f"vectors must be (N, d), got {self.vectors.shape}")
        if len(self.labels) != len(self.vectors):
            raise ShapeError(
                f"{len(self.vectors)} vectors but {len(self.labels)} labels"
            )
        if not np.all(np.isfinite(self.vectors)):
            raise InvalidInputError("embedding vectors contain non-finite values")
        if self.poisoned_flags is None:
            self.poisoned_flags = np.zeros(len(self.vectors), dtype=bool)
        self.poisoned_flags = np.asarray(self.poisoned_flags, dtype=bool)
        if len(self.poisoned_flags) != len(self.vectors):
            raise ShapeError("poisoned_flags length mismatch")

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass
class MetricsReport:
    acc: float
    asr: float
    per_class_correct: list
    n_eval: int
    n_poison_eval: int

    def to_dict(self) -> dict:
        return {
            "acc": self.acc,
            "asr": self.asr,
            "per_class_correct": list(self.per_class_correct),
            "n_eval": self.n_eval,
            "n_poison_eval": self.n_poison_eval,
        }


def default_k(n_train: int) -> int:
    """Desk-scale default: min(20, ceil(N/10)), at least 1."""
    return max(1, min(20, int(np.ceil(n_train / 10))))


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return vectors / safe


def knn_classify(train: EmbeddingSet, queries: np.ndarray, k: int, metric: str = EUCLIDEAN) -> np.ndarray:
    """Exact k-nearest-neighbor majority vote.

    Distance ties resolve by training index (stable sort); vote ties resolve
    to the smallest class id.
    """
    if len(train) == 0:
        raise DegenerateInputError("empty training set")
    if not (1 <= k <= len(train)):
        raise ParameterError(f"k must be in [1, {len(train)}], got {k}")
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != train.vectors.shape[1]:
        raise ShapeError(
            f"queries must be (M, {train.vectors.shape[1]}), got {queries.shape}"
        )
    if metric == EUCLIDEAN:
        ref, q = train.vectors, queries
        dists = (
            np.sum(q**2, axis=1)[:, None]
            - 2.0 * q @ ref.T
            + np.sum(ref**2, axis=1)[None, :]
        )
    elif metric == COSINE:
        ref, q = _unit_rows(train.vectors), _unit_rows(queries)
        dists = 1.0 - q @ ref.T
    else:
        raise ParameterError(f"metric must be {EUCLIDEAN!r} or {COSINE!r}, got {metric!r}")

    order = np.argsort(dists, axis=1, kind="stable")[:, :k]
    num_classes = int(train.labels.max()) + 1
    predictions = np.empty(len(queries), dtype=np.int64)
    for i, neighbors in enumerate(order):
        votes = np.bincount(train.labels[neighbors], minlength=num_classes)
        predictions[i] = int(np.argmax(votes))  # argmax picks the smallest class on ties
    return predictions


def compute_acc(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if len(predictions) != len(labels):
        raise ShapeError(f"{len(predictions)} predictions vs {len(labels)} labels")
    if len(labels) == 0:
        raise DegenerateInputError("no samples to score")
    return float(np.mean(predictions == labels))


def compute_asr(predictions: np.ndarray, target_class: int, true_labels: np.ndarray) -> float:
    """Fraction of poisoned queries (excluding genuine target-class samples)
    that land in the target class."""
    predictions = np.asarray(predictions)
    true_labels = np.asarray(true_labels)
    if len(predictions) != len(true_labels):
        raise ShapeError(f"{len(predictions)} predictions vs {len(true_labels)} labels")
    eligible = true_labels != target_class
    if not np.any(eligible):
        raise DegenerateInputError("no eligible (non-target-class) poisoned queries")
    return float(np.mean(predictions[eligible] == target_class))


def metrics_report(
    clean_predictions: np.ndarray,
    clean_labels: np.ndarray,
    poison_predictions: np.ndarray,
    poison_true_labels: np.ndarray,
    target_class: int,
    num_classes: int,
) -> MetricsReport:
    acc = compute_acc(clean_predictions, clean_labels)
    asr = compute_asr(poison_predictions, target_class, poison_true_labels)
    per_class = [
        int(np.sum((clean_predictions == c) & (np.asarray(clean_labels) == c)))
        for c in range(num_classes)
    ]
    eligible = int(np.sum(np.asarray(poison_true_labels) != target_class))
    return MetricsReport(
        acc=acc,
        asr=asr,
        per_class_correct=per_class,
        n_eval=len(clean_labels),
        n_poison_eval=eligible,
    )


def pca_project(embeddings: EmbeddingSet, dims: int) -> np.ndarray:
    """Mean-centered projection onto the top-``dims`` covariance eigenvectors.

    Components come in descending-eigenvalue order with a fixed sign
    convention (largest-magnitude loading positive); components with
    (numerically) zero variance project to zero instead of rotation noise.
    """
    x = embeddings.vectors
    n, d = x.shape
    if n < 2:
        raise ParameterError(f"need at least 2 samples, got {n}")
    if not (1 <= dims <= d):
        raise ParameterError(f"dims must be in [1, {d}], got {dims}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals, kind="stable")[::-1][:dims]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    for j in range(eigvecs.shape[1]):
        lead = np.argmax(np.abs(eigvecs[:, j]))
        if eigvecs[lead, j] < 0:
            eigvecs[:, j] = -eigvecs[:, j]
    coords = centered @ eigvecs
    tol = max(float(eigvals[0]), 0.0) * 1e-10
    coords[:, eigvals <= tol] = 0.0
    return coords
