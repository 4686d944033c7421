"""Reference implementations of the depth-completion adapter protocol.

The harness side of the protocol writes a sample directory (image.png,
sparse.dpt, mask.png, intrinsics.json, request.json) and invokes an adapter
command with the directory path; the adapter answers by writing pred.dpt.
This package provides:

- :mod:`depth_adapters.protocol` -- parsing, validation, and prediction
  writing for sample directories and batch manifests;
- :mod:`depth_adapters.dummy`    -- a deterministic completion-only adapter
  (nearest-neighbor fill), handy for plumbing tests;
- :mod:`depth_adapters.wrapper`  -- a template that handles all protocol
  I/O and validation around a user-supplied model hook.

Adapters read and write only the documented files; the protocol is the
single source of truth between harness and model.
"""

from depth_adapters.protocol import ProtocolError, Sample, load_sample, write_prediction

__all__ = ["ProtocolError", "Sample", "load_sample", "write_prediction"]

__version__ = "0.1.0"
