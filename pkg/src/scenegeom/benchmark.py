"""Scene-geometry evaluation: view pairs, the evaluation loop, and reports.

For a view pair (source, target) the harness lifts the source view's
ground-truth depth into a point cloud, renders it from the target camera to
obtain sparse depth plus coverage mask, asks the predictor under test for a
dense completion, and scores the mean absolute depth error over the
extrapolated region (pixels without coverage that have valid ground truth).

Datasets are consumed through a neutral manifest::

    {"dataset": "name",
     "scenes": [{"id": "scene0",
                 "views": [{"image": "path.png", "depth": "path.dpt",
                            "frame": 0, "camera": {...camera JSON...}}]}]}

Paths are relative to the manifest file. Reports are written as JSON plus a
CSV (scene, src, tgt, count, mae) and, on the CLI path, a pair of summary
figures. Reports carry no timestamps, so reruns with the same configuration
are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from scenegeom.geometry import Camera, camera_from_json
from scenegeom.metrics import mae_extrapolated, overlap
from scenegeom.pointcloud import PointCloud, lift, render_depth
from scenegeom.predictors import (
    PredictRequest,
    PredictResponse,
    predict_gt_passthrough,
    predict_nn_fill,
)
from scenegeom.rasters import DepthMap, load_color, load_depth, mask_of

logger = logging.getLogger(__name__)

# predictor(request, target ground truth, sample id) -> response. The ground
# truth is passed so harness oracles can use it; honest predictors ignore it.
PairPredictor = Callable[[PredictRequest, DepthMap, str], PredictResponse]

DEFAULT_SEQUENTIAL_SCENE_CAP = 50


class PairEvaluationError(Exception):
    def __init__(self, pair_id: str, cause: Exception):
        self.pair_id = pair_id
        self.cause = cause
        super().__init__(f"pair {pair_id}: {cause}")


@dataclass(frozen=True)
class ViewRecord:
    image_path: Path
    depth_path: Path
    camera: Camera
    frame: int


@dataclass(frozen=True)
class SceneViews:
    scene_id: str
    views: tuple[ViewRecord, ...]


@dataclass(frozen=True)
class PairSpec:
    scene_id: str
    source: ViewRecord
    target: ViewRecord
    overlap: float | None = None

    def __post_init__(self):
        if self.source is self.target:
            raise ValueError("source and target must be distinct views")

    @property
    def pair_id(self) -> str:
        return f"{self.scene_id}:{self.source.frame}->{self.target.frame}"


@dataclass(frozen=True)
class PairRecord:
    scene: str
    src: int
    tgt: int
    count: int
    mae: float | None
    overlap: float | None = None


@dataclass(frozen=True)
class PairingRule:
    kind: str = "sequential"  # "sequential" | "overlap"
    block: int = 50
    src_offset: int = 0
    tgt_offset: int = 9
    tau: float = 0.8

    def __post_init__(self):
        if self.kind not in ("sequential", "overlap"):
            raise ValueError(f"unknown pairing rule {self.kind!r}")
        if self.kind == "sequential" and self.block <= max(self.src_offset, self.tgt_offset):
            raise ValueError("block must exceed both frame offsets")
        if self.kind == "overlap" and not 0 < self.tau <= 1:
            raise ValueError("tau must be in (0, 1]")


@dataclass(frozen=True)
class BenchmarkReport:
    dataset: str
    predictor: str
    config: dict
    config_hash: str
    records: tuple[PairRecord, ...]
    failures: tuple[dict, ...]
    aggregate_mae: float | None

    @property
    def included_pairs(self) -> int:
        return sum(1 for r in self.records if r.count > 0)


def load_manifest(path) -> tuple[str, list[SceneViews], list[dict]]:
    """Load a dataset manifest; returns (dataset, scenes, per-scene failures).

    Views whose image or depth file is missing are dropped and reported, and
    the run continues with whatever remains.
    """
    path = Path(path)
    data = json.loads(path.read_text())
    base = path.parent
    scenes: list[SceneViews] = []
    failures: list[dict] = []
    for scene in data.get("scenes", []):
        scene_id = scene["id"]
        views = []
        for entry in scene["views"]:
            record = ViewRecord(
                image_path=base / entry["image"],
                depth_path=base / entry["depth"],
                camera=camera_from_json(entry["camera"]),
                frame=int(entry["frame"]),
            )
            missing = [
                str(p) for p in (record.image_path, record.depth_path) if not p.is_file()
            ]
            if missing:
                failures.append(
                    {"scene": scene_id, "frame": record.frame,
                     "error": f"missing files: {', '.join(missing)}"}
                )
            else:
                views.append(record)
        scenes.append(SceneViews(scene_id, tuple(views)))
    return str(data.get("dataset", path.stem)), scenes, failures


def select_pairs_sequential(
    scene: SceneViews, block: int = 50, src_offset: int = 0, tgt_offset: int = 9
) -> list[PairSpec]:
    """One pair per frame block: (block_start + src_offset, block_start + tgt_offset)."""
    if block <= max(src_offset, tgt_offset):
        raise ValueError("block must exceed both frame offsets")
    views = scene.views
    pairs = []
    for start in range(0, len(views), block):
        i, j = start + src_offset, start + tgt_offset
        if i < len(views) and j < len(views):
            pairs.append(PairSpec(scene.scene_id, views[i], views[j]))
    return pairs


def _load_view(record: ViewRecord):
    image = load_color(record.image_path)
    depth = load_depth(record.depth_path)
    intr = record.camera.intrinsics
    if (depth.height, depth.width) != (intr.height, intr.width):
        raise ValueError(
            f"depth {record.depth_path} is {depth.height}x{depth.width}, camera says "
            f"{intr.height}x{intr.width}"
        )
    return image, depth


def _lift_view(record: ViewRecord) -> PointCloud:
    image, depth = _load_view(record)
    return lift(image, depth, record.camera, mask_of(depth))


def select_pairs_overlap(scene: SceneViews, tau: float = 0.8) -> list[PairSpec]:
    """All ordered pairs whose source geometry covers >= tau of the target view."""
    if not 0 < tau <= 1:
        raise ValueError("tau must be in (0, 1]")
    clouds = [_lift_view(v) for v in scene.views]
    pairs = []
    for i, src in enumerate(scene.views):
        for j, tgt in enumerate(scene.views):
            if i == j:
                continue
            phi = overlap(clouds[i], tgt.camera)
            if phi >= tau:
                pairs.append(PairSpec(scene.scene_id, src, tgt, overlap=phi))
    return pairs


def evaluate_pair(pair: PairSpec, predictor: PairPredictor) -> PairRecord:
    """Score one view pair; predictor errors carry the pair identity."""
    try:
        cloud = _lift_view(pair.source)
        tgt_image, tgt_depth = _load_view(pair.target)
        sparse, known = render_depth(cloud, pair.target.camera)
        request = PredictRequest(tgt_image, sparse, known, pair.target.camera.intrinsics)
        response = predictor(request, tgt_depth, pair.pair_id)
        mae, count = mae_extrapolated(response.depth, tgt_depth, known)
    except Exception as exc:
        raise PairEvaluationError(pair.pair_id, exc) from exc
    return PairRecord(
        scene=pair.scene_id,
        src=pair.source.frame,
        tgt=pair.target.frame,
        count=count,
        mae=mae,
        overlap=pair.overlap,
    )


def passthrough_predictor(req: PredictRequest, target_gt: DepthMap, sample_id: str) -> PredictResponse:
    """Harness oracle: answer with the target's ground truth."""
    return predict_gt_passthrough(req, target_gt)


def nn_fill_predictor(req: PredictRequest, target_gt: DepthMap, sample_id: str) -> PredictResponse:
    return predict_nn_fill(req)


def make_offset_predictor(delta: float) -> PairPredictor:
    """Harness oracle returning ground truth plus a constant offset."""

    def predictor(req: PredictRequest, target_gt: DepthMap, sample_id: str) -> PredictResponse:
        return PredictResponse(DepthMap(target_gt.values + delta))

    return predictor


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def run_benchmark(
    manifest_path,
    rule: PairingRule,
    predictor: PairPredictor,
    predictor_name: str,
    *,
    jobs: int = 1,
    scene_cap: int | None = None,
) -> BenchmarkReport:
    """Evaluate every selected pair; failures are recorded, not fatal.

    The aggregate is the unweighted mean of per-pair MAE over pairs with at
    least one extrapolated pixel. ``scene_cap`` defaults to 50 for the
    sequential rule and to all scenes for the overlap rule.
    """
    dataset, scenes, failures = load_manifest(manifest_path)
    if scene_cap is None and rule.kind == "sequential":
        scene_cap = DEFAULT_SEQUENTIAL_SCENE_CAP
    if scene_cap is not None:
        scenes = scenes[:scene_cap]

    pairs: list[PairSpec] = []
    for scene in scenes:
        if rule.kind == "sequential":
            pairs.extend(
                select_pairs_sequential(scene, rule.block, rule.src_offset, rule.tgt_offset)
            )
        else:
            pairs.extend(select_pairs_overlap(scene, rule.tau))

    results: list[PairRecord | None] = [None] * len(pairs)
    failures = list(failures)

    def run_one(index: int):
        try:
            results[index] = evaluate_pair(pairs[index], predictor)
        except PairEvaluationError as exc:
            pair = pairs[index]
            failures.append(
                {"scene": pair.scene_id, "src": pair.source.frame,
                 "tgt": pair.target.frame, "error": str(exc.cause)}
            )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run_one, range(len(pairs))))
    else:
        for i in range(len(pairs)):
            run_one(i)

    records = tuple(r for r in results if r is not None)
    included = [r.mae for r in records if r.count > 0]
    aggregate = float(np.mean(included)) if included else None
    config = {
        "manifest": str(manifest_path),
        "predictor": predictor_name,
        "pairing": {
            "kind": rule.kind,
            "block": rule.block,
            "src_offset": rule.src_offset,
            "tgt_offset": rule.tgt_offset,
            "tau": rule.tau,
        },
        "scene_cap": scene_cap,
    }
    return BenchmarkReport(
        dataset=dataset,
        predictor=predictor_name,
        config=config,
        config_hash=config_hash(config),
        records=records,
        failures=tuple(failures),
        aggregate_mae=aggregate,
    )


def report_to_json_bytes(report: BenchmarkReport) -> bytes:
    body = {
        "dataset": report.dataset,
        "predictor": report.predictor,
        "config": report.config,
        "config_hash": report.config_hash,
        "error_units": "meters",
        "aggregate_mae": report.aggregate_mae,
        "evaluated_pairs": len(report.records),
        "included_pairs": report.included_pairs,
        "pairs": [
            {
                "scene": r.scene,
                "src": r.src,
                "tgt": r.tgt,
                "count": r.count,
                "mae": r.mae,
                "overlap": r.overlap,
            }
            for r in report.records
        ],
        "failures": list(report.failures),
    }
    return (json.dumps(body, indent=2, sort_keys=True) + "\n").encode()


def report_to_csv_bytes(report: BenchmarkReport) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scene", "src", "tgt", "count", "mae"])
    for r in report.records:
        writer.writerow([r.scene, r.src, r.tgt, r.count, "" if r.mae is None else repr(r.mae)])
    return buf.getvalue().encode()


def write_report(report: BenchmarkReport, outdir) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {"json": outdir / "report.json", "csv": outdir / "report.csv"}
    paths["json"].write_bytes(report_to_json_bytes(report))
    paths["csv"].write_bytes(report_to_csv_bytes(report))
    return paths


def render_report_figures(report: BenchmarkReport, outdir) -> list[Path]:
    """Render summary figures (per-pair MAE histogram, per-scene means)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    maes = [r.mae for r in report.records if r.mae is not None]
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    if maes:
        ax.hist(maes, bins=min(30, max(5, len(maes))), color="#4878cf", edgecolor="black")
    ax.set_xlabel("per-pair MAE [m]")
    ax.set_ylabel("pairs")
    ax.set_title(f"{report.dataset}: {report.predictor}")
    fig.tight_layout()
    path = outdir / "mae_histogram.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    by_scene: dict[str, list[float]] = {}
    for r in report.records:
        if r.mae is not None:
            by_scene.setdefault(r.scene, []).append(r.mae)
    fig, ax = plt.subplots(figsize=(6, 4))
    if by_scene:
        names = sorted(by_scene)
        ax.bar(range(len(names)), [float(np.mean(by_scene[n])) for n in names], color="#6acc65")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("mean MAE [m]")
    ax.set_title("per-scene mean extrapolation error")
    fig.tight_layout()
    path = outdir / "scene_mae.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
