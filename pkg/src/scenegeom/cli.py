"""Operator command line. Subcommands wrap the library one-to-one:

    warp             reproject a depth map between two cameras
    maskgen          build an occlusion-mask dataset from a view manifest
    export-training  write pseudo-labelled training sample directories
    align            fit scale-and-shift between two depth maps
    snap             snap high-gradient depth pixels to their neighbors
    eval             run the scene-geometry benchmark and write the report
    scenegen         run the orbit scene-generation loop with plugins
    export-splat     package a generated scene for splat optimization

Every subcommand accepts ``--config FILE`` with a JSON object whose keys
match the long flag names; explicit flags win over the file. Each run
writes the fully resolved configuration next to its outputs, so any run can
be reproduced from its artifacts alone.

Exit codes: 0 success, 1 runtime failure, 2 usage error. ``eval`` exits 0
even when individual pairs failed unless ``--strict`` is given.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
import threading
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from scenegeom.alignment import AlignConfig, SnapConfig, align_closed_form, align_iterative, snap_depth
from scenegeom.benchmark import (
    PairingRule,
    make_offset_predictor,
    nn_fill_predictor,
    passthrough_predictor,
    render_report_figures,
    run_benchmark,
    write_report,
)
from scenegeom.geometry import load_camera, save_camera
from scenegeom.pointcloud import load_ply, save_ply
from scenegeom.predictors import (
    load_capabilities,
    predict_aligned_external,
    predict_external,
)
from scenegeom.rasters import load_color, load_depth, save_color, save_depth, save_mask
from scenegeom.scenegen import (
    OrbitConfig,
    SupportConfig,
    ViewArtifact,
    build_scene,
    export_splat_inputs,
    external_completer,
    external_generator,
)
from scenegeom.warping import (
    ViewpointSampler,
    export_training_sample,
    generate_mask_set,
    load_mask_set,
    save_mask_set,
    save_training_sample,
    warp_depth,
)

logger = logging.getLogger("scenegeom")


class UsageError(Exception):
    """Bad arguments or missing inputs; maps to exit code 2."""


def _require_file(path, what: str) -> Path:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{what} not found: {path}")
    return path


def _require_dir(path, what: str) -> Path:
    path = Path(path)
    if not path.is_dir():
        raise UsageError(f"{what} not found: {path}")
    return path


def _resolve_config(args, defaults: dict) -> dict:
    """defaults <- config file <- explicit flags (flags win)."""
    cfg = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path is not None:
        data = json.loads(_require_file(config_path, "config file").read_text())
        unknown = set(data) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(data)
    for key in defaults:
        if key in args.__dict__:
            cfg[key] = args.__dict__[key]
    missing = [k for k, v in cfg.items() if v is _REQUIRED]
    if missing:
        raise UsageError(f"missing required options: {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return cfg


def _write_snapshot(cfg: dict, anchor: Path) -> None:
    """Store the resolved configuration next to the outputs."""
    target = anchor / "resolved_config.json" if anchor.is_dir() else anchor.parent / "resolved_config.json"
    target.parent.mkdir(parents=True, exist_ok=True)
    serializable = {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}
    target.write_text(json.dumps(serializable, indent=2, sort_keys=True) + "\n")


_REQUIRED = object()


def _add_options(parser: argparse.ArgumentParser, defaults: dict) -> None:
    parser.add_argument("--config", default=None, help="JSON file overriding defaults; flags win")
    for key, value in defaults.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            parser.add_argument(flag, action="store_true", default=argparse.SUPPRESS)
        elif isinstance(value, int) and value is not _REQUIRED:
            parser.add_argument(flag, type=int, default=argparse.SUPPRESS)
        elif isinstance(value, float):
            parser.add_argument(flag, type=float, default=argparse.SUPPRESS)
        else:
            parser.add_argument(flag, default=argparse.SUPPRESS)


# ---------------------------------------------------------------------------
# warp

WARP_DEFAULTS = {
    "depth": _REQUIRED,
    "src_camera": _REQUIRED,
    "dst_camera": _REQUIRED,
    "out_depth": _REQUIRED,
    "out_mask": _REQUIRED,
}


def cmd_warp(args) -> int:
    cfg = _resolve_config(args, WARP_DEFAULTS)
    depth = load_depth(_require_file(cfg["depth"], "depth map"))
    src = load_camera(_require_file(cfg["src_camera"], "source camera"))
    dst = load_camera(_require_file(cfg["dst_camera"], "destination camera"))
    warped, mask = warp_depth(depth, src, dst)
    out_depth = Path(cfg["out_depth"])
    out_depth.parent.mkdir(parents=True, exist_ok=True)
    save_depth(warped, out_depth)
    save_mask(mask, Path(cfg["out_mask"]))
    _write_snapshot(cfg, out_depth)
    logger.info("warped depth written to %s", out_depth)
    return 0


# ---------------------------------------------------------------------------
# maskgen

MASKGEN_DEFAULTS = {
    "manifest": _REQUIRED,
    "out": _REQUIRED,
    "views_per_image": 1,
    "azimuth_range": 15.0,
    "elevation_range": 5.0,
    "translation_range": 0.3,
    "seed": 0,
}


def cmd_maskgen(args) -> int:
    from scenegeom.benchmark import load_manifest

    cfg = _resolve_config(args, MASKGEN_DEFAULTS)
    manifest = _require_file(cfg["manifest"], "dataset manifest")
    _, scenes, failures = load_manifest(manifest)
    for failure in failures:
        logger.warning("skipping view: %s", failure)
    items = []
    ids = []
    for scene in scenes:
        for view in scene.views:
            items.append((load_depth(view.depth_path), view.camera))
            ids.append(f"{scene.scene_id}_{view.frame:04d}")
    if not items:
        raise UsageError("manifest contains no usable views")
    sampler = ViewpointSampler(
        azimuth_range=cfg["azimuth_range"],
        elevation_range=cfg["elevation_range"],
        translation_range=cfg["translation_range"],
        rng_seed=cfg["seed"],
    )
    mask_set = generate_mask_set(items, cfg["views_per_image"], sampler, source_ids=ids)
    out = Path(cfg["out"])
    save_mask_set(mask_set, out)
    _write_snapshot(cfg, out)
    logger.info("%d masks written to %s", len(mask_set), out)
    return 0


# ---------------------------------------------------------------------------
# export-training

EXPORT_TRAINING_DEFAULTS = {
    "image": _REQUIRED,
    "teacher_depth": _REQUIRED,
    "mask_set": _REQUIRED,
    "out": _REQUIRED,
    "count": 1,
    "task_probability": 0.5,
    "seed": 0,
}


def cmd_export_training(args) -> int:
    cfg = _resolve_config(args, EXPORT_TRAINING_DEFAULTS)
    image = load_color(_require_file(cfg["image"], "image"))
    teacher = load_depth(_require_file(cfg["teacher_depth"], "teacher depth"))
    mask_set = load_mask_set(_require_dir(cfg["mask_set"], "mask-set directory"))
    out = Path(cfg["out"])
    rng = np.random.default_rng(cfg["seed"])
    for i in range(cfg["count"]):
        sample = export_training_sample(image, teacher, mask_set, cfg["task_probability"], rng)
        save_training_sample(out / f"sample_{i:05d}", *sample)
    _write_snapshot(cfg, out)
    logger.info("%d samples written to %s", cfg["count"], out)
    return 0


# ---------------------------------------------------------------------------
# align / snap

ALIGN_DEFAULTS = {
    "pred": _REQUIRED,
    "sparse": _REQUIRED,
    "method": "iterative",
    "learning_rate": 0.01,
    "max_steps": 100,
    "patience": 10,
    "out": None,
}


def cmd_align(args) -> int:
    cfg = _resolve_config(args, ALIGN_DEFAULTS)
    pred = load_depth(_require_file(cfg["pred"], "prediction"))
    sparse = load_depth(_require_file(cfg["sparse"], "sparse depth"))
    if cfg["method"] == "closed":
        s, t = align_closed_form(pred, sparse)
    elif cfg["method"] == "iterative":
        s, t = align_iterative(
            pred,
            sparse,
            AlignConfig(cfg["learning_rate"], cfg["max_steps"], cfg["patience"]),
        )
    else:
        raise UsageError(f"unknown alignment method {cfg['method']!r}")
    result = {"scale": s, "shift": t, "method": cfg["method"]}
    print(json.dumps(result, sort_keys=True))
    if cfg["out"]:
        out = Path(cfg["out"])
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
        _write_snapshot(cfg, out)
    return 0


SNAP_DEFAULTS = {
    "depth": _REQUIRED,
    "out": _REQUIRED,
    "gradient_threshold": None,
    "max_region_radius": None,
}


def cmd_snap(args) -> int:
    cfg = _resolve_config(args, SNAP_DEFAULTS)
    depth = load_depth(_require_file(cfg["depth"], "depth map"))
    threshold = cfg["gradient_threshold"]
    radius = cfg["max_region_radius"]
    snapped = snap_depth(
        depth,
        SnapConfig(
            gradient_threshold=float(threshold) if threshold is not None else None,
            max_region_radius=float(radius) if radius is not None else None,
        ),
    )
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_depth(snapped, out)
    _write_snapshot(cfg, out)
    return 0


# ---------------------------------------------------------------------------
# eval

EVAL_DEFAULTS = {
    "manifest": _REQUIRED,
    "out": _REQUIRED,
    "pairing": "sequential",
    "block": 50,
    "src_offset": 0,
    "tgt_offset": 9,
    "tau": 0.8,
    "scene_cap": None,
    "predictor": "passthrough",
    "command": None,
    "workdir": None,
    "timeout": 300.0,
    "jobs": 1,
    "strict": False,
    "no_figures": False,
    "offset": 0.0,
}


def _make_pair_predictor(cfg: dict, outdir: Path):
    name = cfg["predictor"]
    if name == "passthrough":
        return passthrough_predictor, "passthrough"
    if name == "nn-fill":
        return nn_fill_predictor, "nn-fill"
    if name == "offset":
        return make_offset_predictor(cfg["offset"]), f"offset:{cfg['offset']}"
    if name in ("external", "aligned-external"):
        if not cfg["command"]:
            raise UsageError(f"--command is required for the {name} predictor")
        command = shlex.split(cfg["command"])
        workdir = Path(cfg["workdir"]) if cfg["workdir"] else outdir / "adapter-work"
        caps = load_capabilities(command)
        lock = nullcontext() if caps.stateless else threading.Lock()
        timeout = float(cfg["timeout"])
        aligned = name == "aligned-external"

        def predictor(req, target_gt, sample_id):
            sid = sample_id.replace(":", "_").replace("->", "_to_")
            with lock:
                if aligned:
                    return predict_aligned_external(
                        req, command, workdir, sample_id=sid, timeout=timeout
                    )
                return predict_external(req, command, workdir, sample_id=sid, timeout=timeout)

        return predictor, f"{name}:{cfg['command']}"
    raise UsageError(f"unknown predictor {name!r}")


def cmd_eval(args) -> int:
    cfg = _resolve_config(args, EVAL_DEFAULTS)
    manifest = _require_file(cfg["manifest"], "dataset manifest")
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    predictor, predictor_name = _make_pair_predictor(cfg, outdir)
    rule = PairingRule(
        kind=cfg["pairing"],
        block=int(cfg["block"]),
        src_offset=int(cfg["src_offset"]),
        tgt_offset=int(cfg["tgt_offset"]),
        tau=float(cfg["tau"]),
    )
    scene_cap = cfg["scene_cap"]
    report = run_benchmark(
        manifest,
        rule,
        predictor,
        predictor_name,
        jobs=int(cfg["jobs"]),
        scene_cap=int(scene_cap) if scene_cap is not None else None,
    )
    paths = write_report(report, outdir)
    if not cfg["no_figures"]:
        render_report_figures(report, outdir)
    _write_snapshot(cfg, outdir)
    logger.info(
        "evaluated %d pairs (%d scored); aggregate MAE: %s m; report at %s",
        len(report.records),
        report.included_pairs,
        "n/a" if report.aggregate_mae is None else f"{report.aggregate_mae:.6f}",
        paths["json"],
    )
    for failure in report.failures:
        logger.error("pair failure: %s", failure)
    if report.failures and cfg["strict"]:
        return 1
    return 0


# ---------------------------------------------------------------------------
# scenegen / export-splat

SCENEGEN_DEFAULTS = {
    "image": _REQUIRED,
    "camera": _REQUIRED,
    "generator_cmd": _REQUIRED,
    "completer_cmd": _REQUIRED,
    "out": _REQUIRED,
    "azimuth_step": 25.0,
    "taper_steps": 3,
    "taper_after": 225.0,
    "support_views": 8,
    "support_angle": 5.0,
    "gradient_threshold": None,
    "max_region_radius": None,
    "seed": 0,
    "prompt": "",
    "timeout": 300.0,
}


def cmd_scenegen(args) -> int:
    cfg = _resolve_config(args, SCENEGEN_DEFAULTS)
    image = load_color(_require_file(cfg["image"], "input image"))
    camera = load_camera(_require_file(cfg["camera"], "camera"))
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    workdir = outdir / "plugin-work"
    generator = external_generator(
        shlex.split(cfg["generator_cmd"]), workdir / "generator",
        prompt=cfg["prompt"], timeout=float(cfg["timeout"]),
    )
    completer = external_completer(
        shlex.split(cfg["completer_cmd"]), workdir / "completer", timeout=float(cfg["timeout"])
    )
    threshold = cfg["gradient_threshold"]
    radius = cfg["max_region_radius"]
    cloud, views = build_scene(
        image,
        camera,
        generator,
        completer,
        orbit=OrbitConfig(
            azimuth_step=float(cfg["azimuth_step"]),
            taper_steps=int(cfg["taper_steps"]),
            taper_after=float(cfg["taper_after"]),
        ),
        support=SupportConfig(int(cfg["support_views"]), float(cfg["support_angle"])),
        snap=SnapConfig(
            gradient_threshold=float(threshold) if threshold is not None else None,
            max_region_radius=float(radius) if radius is not None else None,
        ),
        seed=int(cfg["seed"]),
    )
    save_ply(cloud, outdir / "cloud.ply")
    views_dir = outdir / "views"
    index = []
    for i, view in enumerate(views):
        vdir = views_dir / f"view_{i:04d}"
        vdir.mkdir(parents=True, exist_ok=True)
        save_color(view.image, vdir / "image.png")
        save_depth(view.depth, vdir / "depth.dpt")
        save_camera(view.camera, vdir / "camera.json")
        index.append(
            {"dir": f"views/view_{i:04d}", "kind": view.kind, "step": view.step}
        )
    (outdir / "views.json").write_text(json.dumps({"views": index}, indent=2, sort_keys=True) + "\n")
    _write_snapshot(cfg, outdir)
    logger.info("scene with %d points and %d views written to %s", len(cloud), len(views), outdir)
    return 0


EXPORT_SPLAT_DEFAULTS = {"scene": _REQUIRED, "out": _REQUIRED}


def cmd_export_splat(args) -> int:
    cfg = _resolve_config(args, EXPORT_SPLAT_DEFAULTS)
    scene_dir = _require_dir(cfg["scene"], "scenegen output directory")
    cloud = load_ply(_require_file(scene_dir / "cloud.ply", "point cloud"))
    index = json.loads(_require_file(scene_dir / "views.json", "view index").read_text())
    views = []
    for entry in index["views"]:
        vdir = scene_dir / entry["dir"]
        views.append(
            ViewArtifact(
                camera=load_camera(vdir / "camera.json"),
                image=load_color(vdir / "image.png"),
                depth=load_depth(vdir / "depth.dpt"),
                kind=entry["kind"],
                step=int(entry["step"]),
            )
        )
    out = Path(cfg["out"])
    manifest = export_splat_inputs(cloud, views, out)
    _write_snapshot(cfg, out)
    logger.info("splat inputs written to %s", manifest)
    return 0


# ---------------------------------------------------------------------------

_COMMANDS = {
    "warp": (cmd_warp, WARP_DEFAULTS, "reproject a depth map between cameras"),
    "maskgen": (cmd_maskgen, MASKGEN_DEFAULTS, "generate an occlusion-mask dataset"),
    "export-training": (
        cmd_export_training,
        EXPORT_TRAINING_DEFAULTS,
        "write pseudo-labelled training samples",
    ),
    "align": (cmd_align, ALIGN_DEFAULTS, "fit scale-and-shift between depth maps"),
    "snap": (cmd_snap, SNAP_DEFAULTS, "snap high-gradient depth pixels"),
    "eval": (cmd_eval, EVAL_DEFAULTS, "run the scene-geometry benchmark"),
    "scenegen": (cmd_scenegen, SCENEGEN_DEFAULTS, "run the orbit scene-generation loop"),
    "export-splat": (cmd_export_splat, EXPORT_SPLAT_DEFAULTS, "package splat-optimization inputs"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenegeom", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (func, defaults, help_text) in _COMMANDS.items():
        cmd = sub.add_parser(name, help=help_text)
        _add_options(cmd, defaults)
        cmd.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
