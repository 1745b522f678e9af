#!/usr/bin/env python3
"""Desk-scale attack/defense comparison.

Trains the toy contrastive encoder on a poisoned synthetic dataset under
several defense arms and reports ACC/ASR per arm: vanilla / blur /
freq-patch / blur+freq-patch training pipelines, plus luma-channel
inference on the vanilla encoder.

Example:
    python scripts/run_desk_experiment.py --seeds 0 1 2 --magnitude 255
"""

import argparse
import json
import sys

import numpy as np

from freqshield.cli import RunConfig, train_and_evaluate

BASE = {
    "dataset": {"source": "synthetic", "num_classes": 3, "per_class": 200, "side": 16, "test_per_class": 50},
    "attack": {"variant": "ctrl", "magnitude": 255.0, "transform": "dct", "channels": ["u", "v"]},
    "target_class": 1,
    "ratio": 0.05,
    "augment": {
        "crop_probability": 0.0,
        "flip_probability": 0.0,
        "jitter_probability": 0.8,
        "jitter_strength": 0.2,
        "grayscale_probability": 0.0,
    },
    "train": {"epochs": 30, "batch_size": 64},
}

ARMS = {
    "vanilla": {},
    "blur": {"augment": {"blur_probability": 0.5}},
    "freq_patch": {"augment": {"freq_patch_probability": 0.5, "freq_patch_side": [1, 4]}},
    "blur+freq_patch": {
        "augment": {"blur_probability": 0.5, "freq_patch_probability": 0.5, "freq_patch_side": [1, 4]}
    },
    "luma_inference": {"eval": {"inference_transform": "luma"}},
}


def build_config(seed, arm, magnitude, ratio):
    payload = json.loads(json.dumps(BASE))
    payload["seed"] = seed
    payload["attack"]["magnitude"] = magnitude
    payload["ratio"] = ratio
    for section, values in ARMS[arm].items():
        payload.setdefault(section, {}).update(values)
    return RunConfig.from_dict(payload)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--magnitude", type=float, default=255.0)
    parser.add_argument("--ratio", type=float, default=0.05)
    parser.add_argument("--arms", nargs="+", default=list(ARMS), choices=list(ARMS))
    parser.add_argument("--json", action="store_true", help="emit a JSON record instead of the table")
    args = parser.parse_args(argv)

    results = {}
    for arm in args.arms:
        accs, asrs = [], []
        for seed in args.seeds:
            metrics = train_and_evaluate(build_config(seed, arm, args.magnitude, args.ratio))
            accs.append(metrics["acc"])
            asrs.append(metrics["asr"])
        results[arm] = {
            "acc_mean": float(np.mean(accs)),
            "asr_mean": float(np.mean(asrs)),
            "acc": accs,
            "asr": asrs,
        }
        if not args.json:
            print(f"{arm:>16}: ACC {np.mean(accs)*100:6.2f}%  ASR {np.mean(asrs)*100:6.2f}%   "
                  f"(per-seed ASR {', '.join(f'{a*100:.1f}' for a in asrs)})")
    if args.json:
        print(json.dumps({"magnitude": args.magnitude, "ratio": args.ratio,
                          "seeds": args.seeds, "results": results}, indent=1, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
