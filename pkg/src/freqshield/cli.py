"""Command-line front end: reproducible poison / defend / analyze / train /
eval / project pipelines driven by one JSON config plus flag overrides.

Every command is a pure function of (config, input files): all randomness
derives from the single global seed, outputs are written atomically, and
re-running with the same inputs reproduces every output byte for byte.

Exit codes: 1 usage, 2 file format, 3 contract violation.
"""

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from .analysis import blur_identity_check, residual_stats, variance_amplification
from .analysis import compaction_error as compaction_error_of
from .attacks import (
    CtrlSpec,
    TriggerSpec,
    poison_image,
    residual,
    trigger_spec_from_dict,
)
from .data import (
    Dataset,
    export_dataset,
    gen_synthetic,
    import_dataset,
    load_cifar10,
    load_cifar100,
    poison_dataset,
    write_atomic,
)
from .defenses import (
    AugmentConfig,
    FreqMask,
    apply_freq_mask,
    luma_view,
    sample_freq_mask,
)
from .errors import FormatError, FreqShieldError
from .evaluation import compute_acc, compute_asr, default_k, knn_classify, pca_project
from .seeding import derive_seed, rng_for
from .trainer import (
    TrainConfig,
    embed_dataset,
    export_encoder,
    import_encoder,
    train_encoder,
)
from .transforms import clamp_unit, convolve_image, gaussian_kernel, kernel_size_for

DATA_ROOT_ENV = "FREQSHIELD_DATA_ROOT"


class UsageError(FreqShieldError):
    """Bad flags, malformed config keys, or missing inputs."""


_DATASET_DEFAULT = {
    "source": "synthetic",
    "num_classes": 3,
    "per_class": 200,
    "side": 16,
    "test_per_class": 50,
    "path": None,
    "test_path": None,
}
_ATTACK_DEFAULT = {"variant": "ctrl", "magnitude": 100.0, "transform": "dct", "channels": ["u", "v"]}
_EVAL_DEFAULT = {"k": None, "metric": "euclidean", "inference_transform": "none"}
_DEFEND_DEFAULT = {"method": "blur"}
_ANALYZE_DEFAULT = {"num_images": 20, "sigma": 1.0, "compaction_patch": 2}


@dataclass
class RunConfig:
    """One experiment: dataset source, attack, defenses, training and eval
    settings, all keyed off a single global seed.

    ``ratio=None`` resolves per dataset source: 1% for cifar10, 0.5% for
    cifar100 (one hundred classes make 1% a whole class), 5% for the
    desk-scale synthetic fixture.
    """

    seed: int = 0
    out_dir: str = "runs/out"
    target_class: int = 1
    ratio: "float | None" = None
    dataset: dict = field(default_factory=lambda: dict(_DATASET_DEFAULT))
    attack: dict = field(default_factory=lambda: dict(_ATTACK_DEFAULT))
    augment: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    eval: dict = field(default_factory=lambda: dict(_EVAL_DEFAULT))
    defend: dict = field(default_factory=lambda: dict(_DEFEND_DEFAULT))
    analyze: dict = field(default_factory=lambda: dict(_ANALYZE_DEFAULT))

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        config = cls()
        for name, value in payload.items():
            if isinstance(getattr(config, name), dict):
                section = dict(getattr(config, name))
                if not isinstance(value, dict):
                    raise UsageError(f"config section {name!r} must be a table, got {value!r}")
                section.update(value)
                setattr(config, name, section)
            else:
                setattr(config, name, value)
        return config

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "target_class": self.target_class,
            "ratio": self.ratio,
            "dataset": self.dataset,
            "attack": self.attack,
            "augment": self.augment,
            "train": self.train,
            "eval": self.eval,
            "defend": self.defend,
            "analyze": self.analyze,
        }

    def digest(self) -> str:
        """Experiment identity: every config key except the output location."""
        payload = self.to_dict()
        payload.pop("out_dir")
        canonical = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]

    def augment_config(self) -> AugmentConfig:
        valid = {f.name for f in fields(AugmentConfig)}
        unknown = set(self.augment) - valid
        if unknown:
            raise UsageError(f"unknown augment keys: {sorted(unknown)}")
        kwargs = {
            k: tuple(v) if isinstance(v, list) else v for k, v in self.augment.items()
        }
        return AugmentConfig(**kwargs)

    def train_config(self) -> TrainConfig:
        valid = {f.name for f in fields(TrainConfig)} - {"rng_seed"}
        unknown = set(self.train) - valid
        if unknown:
            raise UsageError(f"unknown train keys: {sorted(unknown)}")
        return TrainConfig(rng_seed=derive_seed(self.seed, "train"), **self.train)

    def trigger_spec(self) -> TriggerSpec:
        return trigger_spec_from_dict(self.attack)

    def resolved_ratio(self) -> float:
        if self.ratio is not None:
            return self.ratio
        source = self.dataset.get("source", "synthetic")
        return {"cifar10": 0.01, "cifar100": 0.005}.get(source, 0.05)


def _resolve_path(path: str) -> str:
    root = os.environ.get(DATA_ROOT_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def build_train_dataset(config: RunConfig):
    """Returns (dataset, manifest). Synthetic/cifar sources are poisoned per
    config; exported datasets are used verbatim with their stored manifest."""
    ds = dict(_DATASET_DEFAULT)
    ds.update(config.dataset)
    source = ds["source"]
    if source == "synthetic":
        base = gen_synthetic(
            ds["num_classes"], ds["per_class"], ds["side"], rng_seed=derive_seed(config.seed, "train-data")
        )
    elif source == "cifar10":
        base = load_cifar10(_resolve_path(ds["path"]))
    elif source == "cifar100":
        base = load_cifar100(_resolve_path(ds["path"]))
    elif source == "exported":
        return import_dataset(_resolve_path(ds["path"]))
    else:
        raise UsageError(f"unknown dataset source {source!r}")
    ratio = config.resolved_ratio()
    if ratio > 0.0:
        return poison_dataset(
            base, config.trigger_spec(), config.target_class, ratio,
            seed=derive_seed(config.seed, "poison"),
        )
    return base, None


def build_test_dataset(config: RunConfig) -> Dataset:
    ds = dict(_DATASET_DEFAULT)
    ds.update(config.dataset)
    source = ds["source"]
    if source == "synthetic":
        return gen_synthetic(
            ds["num_classes"], ds["test_per_class"], ds["side"], rng_seed=derive_seed(config.seed, "test-data")
        )
    if source in ("cifar10", "cifar100", "exported"):
        if not ds.get("test_path"):
            raise UsageError(f"dataset source {source!r} needs a test_path for evaluation")
        if source == "cifar10":
            return load_cifar10(_resolve_path(ds["test_path"]))
        if source == "cifar100":
            return load_cifar100(_resolve_path(ds["test_path"]))
        dataset, _ = import_dataset(_resolve_path(ds["test_path"]))
        return dataset
    raise UsageError(f"unknown dataset source {source!r}")


def poison_test_queries(config: RunConfig, test_ds: Dataset):
    """Poison every non-target test sample (the ASR evaluation split)."""
    spec = config.trigger_spec()
    mask = test_ds.labels != config.target_class
    indices = np.nonzero(mask)[0]
    images = np.stack(
        [
            poison_image(test_ds.image(int(i)), spec, rng_seed=derive_seed(config.seed, "eval-poison", int(i))).data
            for i in indices
        ]
    ) if len(indices) else np.zeros((0,) + test_ds.images.shape[1:])
    return Dataset(images, test_ds.labels[indices], test_ds.num_classes, "poisoned-queries")


def evaluate_encoder(config: RunConfig, params, train_ds: Dataset, manifest, test_ds: Dataset) -> dict:
    """ACC on the clean test split, ASR on the poisoned non-target split."""
    ev = dict(_EVAL_DEFAULT)
    ev.update(config.eval)
    transform = ev["inference_transform"]
    reference = embed_dataset(params, train_ds, inference_transform=transform, manifest=manifest)
    k = ev["k"] if ev["k"] else default_k(len(reference))
    clean = embed_dataset(params, test_ds, inference_transform=transform)
    acc = compute_acc(knn_classify(reference, clean.vectors, k, ev["metric"]), test_ds.labels)
    queries = poison_test_queries(config, test_ds)
    poisoned = embed_dataset(params, queries, inference_transform=transform)
    predictions = knn_classify(reference, poisoned.vectors, k, ev["metric"])
    asr = compute_asr(predictions, config.target_class, queries.labels)
    return {
        "acc": acc,
        "asr": asr,
        "n_eval": len(test_ds),
        "n_poison_eval": len(queries),
        "config_digest": config.digest(),
    }


def train_and_evaluate(config: RunConfig) -> dict:
    """The train+eval pipeline as one deterministic in-memory run."""
    train_ds, manifest = build_train_dataset(config)
    result = train_encoder(train_ds, config.augment_config(), config.train_config())
    test_ds = build_test_dataset(config)
    metrics = evaluate_encoder(config, result.params, train_ds, manifest, test_ds)
    metrics["loss_trace"] = result.loss_trace
    return metrics


def _emit_json(payload: dict, path: str = None) -> str:
    text = json.dumps(payload, sort_keys=True, indent=1)
    if path is not None:
        write_atomic(path, (text + "\n").encode())
    return text


def cmd_poison(config: RunConfig) -> int:
    dataset, manifest = build_train_dataset(config)
    out = os.path.join(config.out_dir, "dataset")
    export_dataset(dataset, manifest, out)
    summary = {
        "n": len(dataset),
        "n_poisoned": len(manifest.poisoned_indices) if manifest else 0,
        "target_class": config.target_class,
        "ratio": config.resolved_ratio(),
        "out": out,
        "config_digest": config.digest(),
    }
    print(_emit_json(summary))
    return 0


def _defend_image(image, method: str, config: RunConfig, item_seed: int):
    augment = config.augment_config()
    if method == "luma":
        return luma_view(image)
    rng = rng_for(item_seed, "defend", method)
    if method == "blur":
        smin, smax = augment.blur_sigma
        sigma = float(rng.uniform(smin, smax))
        size = min(kernel_size_for(smax), image.height if image.height % 2 else image.height - 1)
        return clamp_unit(convolve_image(image, gaussian_kernel(sigma, size), "reflect"))
    if method == "freq_patch":
        mask = sample_freq_mask(image.height, image.width, augment.freq_patch_side, rng)
        return apply_freq_mask(image, mask, augment.freq_patch_colorspace)
    raise UsageError(f"unknown defense method {method!r}")


def cmd_defend(config: RunConfig) -> int:
    dataset, manifest = build_train_dataset(config)
    method = {**_DEFEND_DEFAULT, **config.defend}["method"]
    defended = dataset.copy()
    for i in range(len(defended)):
        item_seed = derive_seed(config.seed, "defend-item", i)
        defended.images[i] = _defend_image(dataset.image(i), method, config, item_seed).data
    defended.name = f"{dataset.name}-{method}"
    out = os.path.join(config.out_dir, "defended")
    export_dataset(defended, manifest, out)
    print(_emit_json({"n": len(defended), "method": method, "out": out, "config_digest": config.digest()}))
    return 0


def cmd_analyze(config: RunConfig) -> int:
    an = dict(_ANALYZE_DEFAULT)
    an.update(config.analyze)
    dataset, _ = build_train_dataset(config)
    n = min(int(an["num_images"]), len(dataset))
    images = [dataset.image(i) for i in range(n)]
    spec = config.trigger_spec()
    if not isinstance(spec, CtrlSpec):
        raise UsageError("analyze requires a ctrl attack spec")

    residuals = [residual(img, poison_image(img, spec)) for img in images]
    stats = residual_stats(residuals)
    amplification = variance_amplification(
        images, spec, config.augment_config(), rng_seed=derive_seed(config.seed, "amplification")
    )
    side = images[0].height
    patch = int(an["compaction_patch"])
    mask = FreqMask.from_rect(side, side, side // 2 - 1, side // 2 - 1, patch, patch)
    compaction = [compaction_error_of(img, mask) for img in images]
    report = {
        "blur_identity_deviation": blur_identity_check(images, spec, float(an["sigma"])),
        "residual_total_variance": stats.total_variance,
        "residual_energy": stats.energy,
        "amplification_ratio": amplification.ratio,
        "amplification_blurred_variance": amplification.blurred_variance,
        "amplification_raw_variance": amplification.raw_variance,
        "compaction_error_max": max(compaction),
        "compaction_error_mean": float(np.mean(compaction)),
        "config_digest": config.digest(),
    }
    os.makedirs(config.out_dir, exist_ok=True)
    print(_emit_json(report, os.path.join(config.out_dir, "analysis.json")))
    return 0


def cmd_train(config: RunConfig) -> int:
    train_ds, manifest = build_train_dataset(config)
    result = train_encoder(train_ds, config.augment_config(), config.train_config())
    export_encoder(result.params, os.path.join(config.out_dir, "encoder"))
    export_dataset(train_ds, manifest, os.path.join(config.out_dir, "train_dataset"))
    lines = ["epoch,loss"] + [f"{e},{loss!r}" for e, loss in enumerate(result.loss_trace)]
    write_atomic(os.path.join(config.out_dir, "loss_trace.csv"), ("\n".join(lines) + "\n").encode())
    summary = {
        "epochs": len(result.loss_trace),
        "final_loss": result.loss_trace[-1] if result.loss_trace else None,
        "out": config.out_dir,
        "config_digest": config.digest(),
    }
    print(_emit_json(summary, os.path.join(config.out_dir, "train_summary.json")))
    return 0


def _load_run_artifacts(config: RunConfig):
    encoder_dir = os.path.join(config.out_dir, "encoder")
    dataset_dir = os.path.join(config.out_dir, "train_dataset")
    if not os.path.isdir(encoder_dir):
        raise UsageError(f"no trained encoder under {config.out_dir}; run `train` first")
    params = import_encoder(encoder_dir)
    if os.path.isdir(dataset_dir):
        train_ds, manifest = import_dataset(dataset_dir)
    else:
        train_ds, manifest = build_train_dataset(config)
    return params, train_ds, manifest


def cmd_eval(config: RunConfig) -> int:
    params, train_ds, manifest = _load_run_artifacts(config)
    test_ds = build_test_dataset(config)
    metrics = evaluate_encoder(config, params, train_ds, manifest, test_ds)
    print(_emit_json(metrics, os.path.join(config.out_dir, "metrics.json")))
    return 0


def cmd_project(config: RunConfig) -> int:
    params, train_ds, manifest = _load_run_artifacts(config)
    ev = dict(_EVAL_DEFAULT)
    ev.update(config.eval)
    embeddings = embed_dataset(params, train_ds, inference_transform=ev["inference_transform"], manifest=manifest)
    coords = pca_project(embeddings, dims=2)
    lines = ["index,label,poisoned,c1,c2"]
    for i in range(len(embeddings)):
        lines.append(
            f"{i},{int(embeddings.labels[i])},{int(embeddings.poisoned_flags[i])},"
            f"{float(coords[i, 0])!r},{float(coords[i, 1])!r}"
        )
    path = os.path.join(config.out_dir, "pca.csv")
    os.makedirs(config.out_dir, exist_ok=True)
    write_atomic(path, ("\n".join(lines) + "\n").encode())
    print(_emit_json({"rows": len(embeddings), "out": path, "config_digest": config.digest()}))
    return 0


COMMANDS = {
    "poison": cmd_poison,
    "defend": cmd_defend,
    "analyze": cmd_analyze,
    "train": cmd_train,
    "eval": cmd_eval,
    "project": cmd_project,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _parse_override(raw: str):
    if "=" not in raw:
        raise UsageError(f"--set expects key.path=value, got {raw!r}")
    key, value = raw.split("=", 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value  # bare strings are fine
    return key.split("."), parsed


def _apply_override(payload: dict, path: list, value):
    node = payload
    for part in path[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise UsageError(f"cannot override inside non-table key {part!r}")
    node[path[-1]] = value


def load_config(args) -> RunConfig:
    payload = {}
    if args.config:
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        try:
            with open(args.config) as f:
                payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise FormatError(f"config {args.config} is not valid JSON: {exc}") from exc
    for raw in args.set or []:
        path, value = _parse_override(raw)
        _apply_override(payload, path, value)
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.out is not None:
        payload["out_dir"] = args.out
    return RunConfig.from_dict(payload)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="freqshield", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="global seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY.PATH=VALUE",
            help="override any config key, e.g. --set attack.magnitude=200",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        return COMMANDS[args.command](config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 2
    except FreqShieldError as exc:
        print(f"contract error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
