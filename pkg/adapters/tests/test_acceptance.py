"""Adapter acceptance: protocol parity with the harness, checked end to end.

These tests drive the adapters through the harness's external-predictor
interface (the `scenegeom` package), which is the protocol's reference
consumer.
"""

import sys

import numpy as np
import pytest

from scenegeom.geometry import Intrinsics
from scenegeom.predictors import (
    AdapterProcessError,
    PredictRequest,
    ResponseDensityError,
    ResponseShapeError,
    predict_external,
    predict_nn_fill,
)
from scenegeom.rasters import ColorImage, DepthMap, mask_of, save_depth

DUMMY_CMD = [sys.executable, "-m", "depth_adapters.dummy"]


def random_request(rng, width=16, height=12):
    intr = Intrinsics(fx=16.0, fy=16.0, cx=width / 2, cy=height / 2, width=width, height=height)
    image = ColorImage(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))
    sparse_vals = rng.uniform(0.5, 6.0, (height, width)).astype(np.float32).astype(np.float64)
    sparse_vals[rng.random((height, width)) >= 0.5] = 0.0
    if not (sparse_vals > 0).any():
        sparse_vals[0, 0] = 1.0
    sparse = DepthMap(sparse_vals)
    return PredictRequest(image, sparse, mask_of(sparse), intr)


def test_dummy_adapter_bit_exact_parity_on_50_fixtures(tmp_path):
    rng = np.random.default_rng(2024)
    for i in range(50):
        req = random_request(rng)
        resp = predict_external(req, DUMMY_CMD, tmp_path, sample_id=f"fix-{i:03d}")
        reference = predict_nn_fill(req)
        # Bit-exact: the pred.dpt bytes must equal the file the harness
        # would write for the in-process baseline.
        save_depth(reference.depth, tmp_path / "reference.dpt")
        written = (tmp_path / f"fix-{i:03d}" / "pred.dpt").read_bytes()
        assert written == (tmp_path / "reference.dpt").read_bytes()
        assert np.array_equal(resp.depth.values, reference.depth.values)
    print("ACCEPTANCE PASS: dummy adapter bit-exact with nn-fill baseline on 50 fixtures")


def write_violating_adapter(tmp_path, name, body):
    path = tmp_path / name
    path.write_text(body)
    return [sys.executable, str(path)]


def test_wrong_shape_surfaces_as_shape_error(tmp_path):
    cmd = write_violating_adapter(
        tmp_path,
        "wrong_shape.py",
        "import sys, struct, numpy as np\n"
        "from pathlib import Path\n"
        "vals = np.ones((4, 4), dtype='<f4')\n"
        "header = struct.pack('<4sIII', b'DPT1', 4, 4, 0)\n"
        "(Path(sys.argv[1]) / 'pred.dpt').write_bytes(header + vals.tobytes())\n",
    )
    req = random_request(np.random.default_rng(1))
    with pytest.raises(ResponseShapeError):
        predict_external(req, cmd, tmp_path / "w1")
    print("ACCEPTANCE PASS: wrong-shape prediction raises the shape error")


def test_zero_pixel_surfaces_as_density_error(tmp_path):
    cmd = write_violating_adapter(
        tmp_path,
        "zero_pixel.py",
        "import sys, struct, numpy as np\n"
        "from pathlib import Path\n"
        "vals = np.ones((12, 16), dtype='<f4'); vals[0, 0] = 0.0\n"
        "header = struct.pack('<4sIII', b'DPT1', 16, 12, 0)\n"
        "(Path(sys.argv[1]) / 'pred.dpt').write_bytes(header + vals.tobytes())\n",
    )
    req = random_request(np.random.default_rng(2))
    with pytest.raises(ResponseDensityError):
        predict_external(req, cmd, tmp_path / "w2")
    print("ACCEPTANCE PASS: zero-pixel prediction raises the density error")


def test_nonzero_exit_surfaces_as_process_error(tmp_path):
    req = random_request(np.random.default_rng(3))
    # Monocular-incapable dummy on a monocular request exits 1 with a message.
    mono = PredictRequest.monocular(req.image, req.intrinsics)
    with pytest.raises(AdapterProcessError, match="no sparse input"):
        predict_external(mono, DUMMY_CMD, tmp_path)
    print("ACCEPTANCE PASS: nonzero adapter exit raises the process error with stderr")
