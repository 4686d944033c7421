"""Bundled protocol adapters, runnable as a subprocess:

    python -m scenegeom.adapters nn-fill [--monocular-value V] <sample-dir-or-manifest>
    python -m scenegeom.adapters gray-fill [--color R,G,B] <generator-dir>

``nn-fill`` is the echo completer: it keeps the sparse input and fills every
hole with its nearest known value, matching the in-process baseline
bit-for-bit. Monocular requests fail unless ``--monocular-value`` supplies a
constant fallback depth. A ``manifest.json`` path instead of a sample
directory processes every listed sample in one invocation.

``gray-fill`` is the trivial image generator: it copies the canvas and
paints hole pixels with a constant color.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from scenegeom.rasters import (
    ColorImage,
    DepthMap,
    load_color,
    load_depth,
    load_mask,
    nearest_valid_indices,
    save_color,
    save_depth,
)


def _complete_sample(sample_dir: Path, monocular_value: float | None) -> None:
    sparse = load_depth(sample_dir / "sparse.dpt")
    known = load_mask(sample_dir / "mask.png").values
    if not known.any():
        if monocular_value is None:
            raise RuntimeError("no sparse input: this adapter cannot run in monocular mode")
        pred = np.full((sparse.height, sparse.width), monocular_value)
    else:
        rows, cols = nearest_valid_indices(known)
        pred = sparse.values[rows, cols]
    save_depth(DepthMap(pred), sample_dir / "pred.dpt")


def _run_nn_fill(args) -> None:
    target = Path(args.path)
    if target.is_file():
        manifest = json.loads(target.read_text())
        for entry in manifest["samples"]:
            _complete_sample(Path(entry["dir"]), args.monocular_value)
    else:
        _complete_sample(target, args.monocular_value)


def _run_gray_fill(args) -> None:
    gen_dir = Path(args.path)
    canvas = load_color(gen_dir / "canvas.png")
    holes = load_mask(gen_dir / "hole_mask.png").values
    color = np.array([int(c) for c in args.color.split(",")], np.uint8)
    if color.shape != (3,):
        raise RuntimeError("--color must be R,G,B")
    out = canvas.values.copy()
    out[holes] = color
    save_color(ColorImage(out), gen_dir / "inpainted.png")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="scenegeom.adapters", description=__doc__)
    sub = parser.add_subparsers(dest="kind", required=True)

    nn = sub.add_parser("nn-fill", help="nearest-neighbor depth completion")
    nn.add_argument("--monocular-value", type=float, default=None)
    nn.add_argument("path")
    nn.set_defaults(run=_run_nn_fill)

    gray = sub.add_parser("gray-fill", help="constant-color hole inpainting")
    gray.add_argument("--color", default="128,128,128")
    gray.add_argument("path")
    gray.set_defaults(run=_run_gray_fill)

    args = parser.parse_args(argv)
    try:
        args.run(args)
    except Exception as exc:
        print(f"adapter error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
