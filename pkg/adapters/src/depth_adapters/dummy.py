"""Deterministic completion-only adapter: nearest-neighbor depth fill.

Usage::

    depth-adapter-dummy <sample-dir>
    depth-adapter-dummy <manifest.json>     # batch mode, one process

The adapter keeps every known sparse value and assigns each hole its
nearest known value. It has no monocular capability: requests without any
sparse depth fail with exit status 1. It is stateless and fully
deterministic, which makes it the reference for protocol plumbing tests.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from depth_adapters.nnfill import fill_depth
from depth_adapters.protocol import ProtocolError, iter_manifest, load_sample, write_prediction


def complete_sample(directory) -> Path:
    sample = load_sample(directory)
    if sample.mode == "monocular" or not sample.known.any():
        raise ProtocolError("no sparse input: the dummy completer cannot run in monocular mode")
    return write_prediction(sample, fill_depth(sample.sparse, sample.known))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="depth-adapter-dummy", description=__doc__)
    parser.add_argument("path", help="sample directory or batch manifest.json")
    args = parser.parse_args(argv)
    target = Path(args.path)
    try:
        if target.is_file():
            for directory, _ in iter_manifest(target):
                complete_sample(directory)
        else:
            complete_sample(target)
    except (ProtocolError, ValueError) as exc:
        print(f"depth-adapter-dummy: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
