"""Adapter template for real models: all protocol I/O around a user hook.

Wrap a model by supplying a hook with the signature::

    def hook(image, sparse, known, intrinsics):
        # image: (H, W, 3) uint8; sparse: (H, W) float64, 0 = hole;
        # known: (H, W) bool; intrinsics: dict with fx/fy/cx/cy/width/height
        return dense_depth  # (H, W), every value > 0 and finite

and a three-line script::

    from depth_adapters.wrapper import adapter_main
    from my_model import hook
    raise SystemExit(adapter_main(hook))

The wrapper parses and validates the sample directory (or batch manifest),
calls the hook, and validates the returned array before anything is
written, so protocol violations surface without leaving partial outputs.
The request files are never modified.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from depth_adapters.protocol import (
    ProtocolError,
    Sample,
    iter_manifest,
    load_sample,
    write_prediction,
)

ModelHook = Callable[[np.ndarray, np.ndarray, np.ndarray, dict], np.ndarray]


def run_adapter(directory, hook: ModelHook) -> Path:
    """Process a single sample directory with the supplied model hook."""
    sample: Sample = load_sample(directory)
    prediction = hook(sample.image, sample.sparse, sample.known, sample.intrinsics)
    return write_prediction(sample, prediction)


def adapter_main(hook: ModelHook, argv=None) -> int:
    parser = argparse.ArgumentParser(description="sample-directory depth adapter")
    parser.add_argument("path", help="sample directory or batch manifest.json")
    args = parser.parse_args(argv)
    target = Path(args.path)
    try:
        if target.is_file():
            for directory, _ in iter_manifest(target):
                run_adapter(directory, hook)
        else:
            run_adapter(target, hook)
    except (ProtocolError, ValueError) as exc:
        print(f"adapter: {exc}", file=sys.stderr)
        return 1
    return 0
