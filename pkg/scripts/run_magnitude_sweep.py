#!/usr/bin/env python3
"""Sweep trigger magnitude (and optionally poison ratio) against the blur
defense, desk scale: the stronger the trigger, the more of it survives
blurring, at the cost of visibility.

Example:
    python scripts/run_magnitude_sweep.py --magnitudes 50 100 200 --seeds 0 1
    python scripts/run_magnitude_sweep.py --ratios 0.01 0.05 0.1
"""

import argparse
import json
import sys

import numpy as np

from run_desk_experiment import build_config
from freqshield.cli import train_and_evaluate


def sweep(values, kind, seeds, magnitude, ratio):
    rows = []
    for value in values:
        mag = value if kind == "magnitude" else magnitude
        rat = value if kind == "ratio" else ratio
        row = {kind: value}
        for arm in ("vanilla", "blur"):
            asrs = [train_and_evaluate(build_config(s, arm, mag, rat))["asr"] for s in seeds]
            row[f"asr_{arm}"] = float(np.mean(asrs))
        rows.append(row)
        print(f"{kind} {value:>6}: vanilla ASR {row['asr_vanilla']*100:6.2f}%  "
              f"blur ASR {row['asr_blur']*100:6.2f}%")
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--magnitudes", type=float, nargs="+", default=None)
    parser.add_argument("--ratios", type=float, nargs="+", default=None)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0])
    parser.add_argument("--magnitude", type=float, default=255.0, help="fixed magnitude for ratio sweeps")
    parser.add_argument("--ratio", type=float, default=0.05, help="fixed ratio for magnitude sweeps")
    parser.add_argument("--json", action="store_true")
    args = parser.parse_args(argv)

    if not args.magnitudes and not args.ratios:
        args.magnitudes = [50.0, 100.0, 200.0]

    record = {"seeds": args.seeds, "rows": []}
    if args.magnitudes:
        record["rows"] += sweep(args.magnitudes, "magnitude", args.seeds, args.magnitude, args.ratio)
    if args.ratios:
        record["rows"] += sweep(args.ratios, "ratio", args.seeds, args.magnitude, args.ratio)
    if args.json:
        print(json.dumps(record, indent=1, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
