"""``cpscan`` command line: one subcommand per pipeline stage, files in between.

Exit codes: 0 success, 2 usage error, 3 data/schema error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, raster_io
from .calibration import (
    calibrate_intrinsics,
    camera_to_board,
    projector_view_from_camera,
    stereo_extrinsics,
)
from .decode import CorrespondenceMap, DecodeOptions, decode_stack
from .documents import (
    load_calibration,
    load_plan,
    load_scene,
    load_views,
    read_json,
    rig_to_dict,
    save_plan,
    sensor_from_dict,
    views_to_dict,
    write_json,
)
from .errors import CPScanError, ConfigError, FormatError, NumericalError
from .geometry import SensorModel, StereoRig
from .metrology import evaluate
from .patterns import HORIZONTAL, VERTICAL, PatternManifest, PatternSpec, full_pattern_stack
from .pipeline import DEFAULT_MAX_GAP, triangulate_correspondence
from .raster_io import PointCloud, write_ply
from .simulator import RenderOptions, default_calibration_boards, plan_for_board, render_scan, synthesize_calibration_view

log = logging.getLogger("cpscan")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(CPScanError):
    pass


def _write_run_manifest(out_dir: Path, stage: str, inputs: dict, outputs: list, params: dict, t0: float) -> None:
    doc = {
        "stage": stage,
        "tool_version": __version__,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": sorted(str(p) for p in outputs),
        "parameters": params,
        "wall_clock_s": round(time.perf_counter() - t0, 3),
        "python": platform.python_version(),
    }
    write_json(doc, out_dir / f"run_{stage}.json")


# ---------------------------------------------------------------- gen-patterns
def cmd_gen_patterns(args) -> int:
    t0 = time.perf_counter()
    w_h = args.fringe_width_h or args.fringe_width
    common = dict(i_dc=args.idc, i_mod=args.imod, code_kind=args.code)
    try:
        spec_v = PatternSpec(args.width, args.height, args.fringe_width, VERTICAL, **common) if args.orientation in ("v", "both") else None
        spec_h = PatternSpec(args.width, args.height, w_h, HORIZONTAL, **common) if args.orientation in ("h", "both") else None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    stack = full_pattern_stack(spec_v, spec_h)
    out = Path(args.out_dir)
    manifest = stack.write(out)
    outputs = [out / e.file for e in stack.manifest.entries] + [manifest]
    print(f"wrote {len(stack.images)} patterns + {manifest}")
    _write_run_manifest(out, "gen_patterns", {}, outputs, vars_clean(args), t0)
    return EXIT_OK


def vars_clean(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func" and not callable(v)}


def _load_manifest(path: Path) -> PatternManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise ConfigError(f"pattern manifest {path} not found")
    try:
        return PatternManifest.load(path)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _load_stack_images(folder: Path, manifest: PatternManifest) -> list:
    missing = [e.file for e in manifest.entries if not (folder / e.file).exists()]
    if missing:
        raise ConfigError(f"stack incomplete in {folder}: missing {', '.join(missing)}")
    return [raster_io.read_image(folder / e.file) for e in manifest.entries]


# ---------------------------------------------------------------- simulate
def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    scene = load_scene(args.scene)
    rig = load_calibration(args.calib)
    pat_dir = Path(args.patterns)
    manifest = _load_manifest(pat_dir)
    patterns = _load_stack_images(pat_dir if pat_dir.is_dir() else pat_dir.parent, manifest)
    from .patterns import PatternStack

    stack = PatternStack(manifest, patterns)
    opts = RenderOptions(blur_radius=args.blur, seed=args.seed)
    captures, truth = render_scan(rig, scene, stack, opts)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for entry, img in zip(manifest.entries, captures):
        raster_io.write_image(img, out / entry.file)
        outputs.append(out / entry.file)
    manifest.save(out / "manifest.json")
    outputs.append(out / "manifest.json")
    if args.emit_ground_truth:
        gt = out / "ground_truth"
        gt.mkdir(exist_ok=True)
        raster_io.write_image(truth.depth.astype(np.float32), gt / "depth.pfm")
        raster_io.write_image(truth.xp.astype(np.float32), gt / "true_xp.pfm")
        raster_io.write_image(truth.yp.astype(np.float32), gt / "true_yp.pfm")
        write_json(truth.to_dict(), gt / "corners.json")
        save_plan(plan_for_board(rig, scene.board), gt / "plan.json")
        outputs += [gt / n for n in ("depth.pfm", "true_xp.pfm", "true_yp.pfm", "corners.json", "plan.json")]
    print(f"rendered {len(captures)} frames into {out}")
    _write_run_manifest(out, "simulate", {"scene": args.scene, "calib": args.calib, "patterns": args.patterns}, outputs, vars_clean(args), t0)
    return EXIT_OK


def cmd_simulate_views(args) -> int:
    rig = load_calibration(args.calib)
    if args.no_distortion:
        rig = StereoRig(rig.camera.without_distortion(), rig.projector.without_distortion(), rig.projector_to_camera)
    views = [synthesize_calibration_view(rig, b) for b in default_calibration_boards(rig)][: args.n_views]
    doc = views_to_dict(views, (rig.camera.width, rig.camera.height), (rig.projector.width, rig.projector.height))
    write_json(doc, args.out)
    print(f"wrote {len(views)} views to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- decode
def cmd_decode(args) -> int:
    t0 = time.perf_counter()
    cap = Path(args.captures)
    if not cap.is_dir():
        raise ConfigError(f"capture directory {cap} not found")
    manifest = _load_manifest(Path(args.manifest) if args.manifest else cap)
    images = _load_stack_images(cap, manifest)
    opts = DecodeOptions(m_min=args.m_min, median_filter=args.median_filter, fix_jumps=not args.no_fix_jumps)
    result = decode_stack(images, manifest, opts)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []

    def put(arr, name):
        raster_io.write_image(arr, out / name)
        outputs.append(out / name)

    for orientation, dec in result.orientations.items():
        tag = orientation[0]
        put(dec.wrapped.astype(np.float32), f"wrapped_{tag}.pfm")
        put(dec.unwrapped.astype(np.float32), f"unwrapped_{tag}.pfm")
        put(np.where(dec.valid, dec.codes, np.nan).astype(np.float32), f"codes_{tag}.pfm")
        put(dec.modulation.astype(np.float32), f"modulation_{tag}.pfm")
    corr = result.correspondence
    if corr is not None:
        put(corr.xp.astype(np.float32), "xp.pfm")
        put(corr.yp.astype(np.float32), "yp.pfm")
        put(np.where(corr.valid, 255, 0).astype(np.uint8), "mask.pgm")
        spec = manifest.specs[VERTICAL]
        write_json(
            {
                "w_fringe_v": corr.w_fringe_v,
                "w_fringe_h": corr.w_fringe_h,
                "proj_width": spec.proj_width,
                "proj_height": spec.proj_height,
                "xp": "xp.pfm",
                "yp": "yp.pfm",
                "mask": "mask.pgm",
            },
            out / "correspondence.json",
        )
        outputs.append(out / "correspondence.json")
        print(f"decoded {int(corr.valid.sum())} valid pixels into {out}")
    else:
        print(f"decoded single orientation into {out} (no correspondence map)")
    _write_run_manifest(out, "decode", {"captures": cap}, outputs, vars_clean(args), t0)
    return EXIT_OK


def _load_correspondence(path: Path) -> CorrespondenceMap:
    path = Path(path)
    folder = path if path.is_dir() else path.parent
    meta_path = folder / "correspondence.json" if path.is_dir() else path
    meta = read_json(meta_path)
    xp = raster_io.read_image(folder / meta["xp"]).astype(np.float64)
    yp = raster_io.read_image(folder / meta["yp"]).astype(np.float64)
    mask = raster_io.read_image(folder / meta["mask"]) > 0
    valid = mask & np.isfinite(xp) & np.isfinite(yp)
    return CorrespondenceMap(np.where(valid, xp, np.nan), np.where(valid, yp, np.nan), valid, meta["w_fringe_v"], meta["w_fringe_h"])


# ---------------------------------------------------------------- calibrate
def _sizes(sizes: dict, key: str, flag):
    if flag:
        return tuple(flag)
    if key in sizes:
        return sizes[key]
    raise UsageError(f"{key} missing from the views document; pass it explicitly")


def cmd_calibrate(args) -> int:
    t0 = time.perf_counter()
    views, sizes = load_views(args.views)
    mode = args.mode
    diagnostics = {}
    doc = {}

    if mode in ("camera", "projector", "full"):
        if len(views) < 5:
            log.warning("only %d views; at least 5 are recommended", len(views))
        cam_res = calibrate_intrinsics([v["camera"] for v in views], _sizes(sizes, "camera_size", args.camera_size))
        diagnostics["camera_rms_px"] = cam_res.rms
        doc["camera"] = cam_res.model.to_dict()
    if mode in ("projector", "full"):
        pviews = []
        for i, v in enumerate(views):
            if "projected" not in v:
                raise ConfigError(f"views[{i}] has no 'projected' block")
            H = camera_to_board(v["camera"], SensorModel(**doc["camera"]))
            pviews.append(projector_view_from_camera(H, *v["projected"], board_bounds=v.get("board_bounds")))
        proj_res = calibrate_intrinsics(pviews, _sizes(sizes, "projector_size", args.projector_size))
        diagnostics["projector_rms_px"] = proj_res.rms
        diagnostics["projector_points_dropped"] = [pv.dropped for pv in pviews]
        doc["projector"] = proj_res.model.to_dict()
        if mode == "projector":
            doc.pop("camera")
    if mode in ("stereo", "full"):
        if mode == "stereo":
            if not args.intrinsics:
                raise UsageError("--mode stereo needs --intrinsics")
            intr = read_json(args.intrinsics)
            cam = sensor_from_dict(intr.get("camera"), "camera.")
            prj = sensor_from_dict(intr.get("projector"), "projector.")
        else:
            cam, prj = SensorModel(**doc["camera"]), SensorModel(**doc["projector"])
        v = views[args.stereo_view]
        if "projected" not in v:
            raise ConfigError(f"views[{args.stereo_view}] has no 'projected' block")
        pview = projector_view_from_camera(camera_to_board(v["camera"], cam), *v["projected"], board_bounds=v.get("board_bounds"))
        pose = stereo_extrinsics(v["camera"], cam, pview, prj)
        doc = rig_to_dict(StereoRig(cam, prj, pose))
        diagnostics["baseline_m"] = float(np.linalg.norm(pose.translation))
    doc["diagnostics"] = diagnostics
    write_json(doc, args.out)
    print(f"wrote {mode} calibration to {args.out}")
    _write_run_manifest(Path(args.out).parent, "calibrate", {"views": args.views}, [args.out], vars_clean(args), t0)
    return EXIT_OK


# ---------------------------------------------------------------- triangulate
def cmd_triangulate(args) -> int:
    t0 = time.perf_counter()
    rig = load_calibration(args.calib)
    corr = _load_correspondence(Path(args.correspondence))
    recon = triangulate_correspondence(rig, corr, args.max_gap)
    pts, px = recon.cloud_arrays()
    write_ply(PointCloud(pts, px), args.out)
    outputs = [args.out]
    if args.out_map:
        raster_io.write_image(recon.points.astype(np.float32), args.out_map)
        outputs.append(args.out_map)
    print(f"triangulated {len(pts)} points -> {args.out}")
    _write_run_manifest(Path(args.out).parent, "triangulate", {"correspondence": args.correspondence, "calib": args.calib}, outputs, vars_clean(args), t0)
    return EXIT_OK


# ---------------------------------------------------------------- evaluate
def cmd_evaluate(args) -> int:
    t0 = time.perf_counter()
    plan = load_plan(args.plan)
    maps = []
    for p in args.point_maps:
        pm = raster_io.read_image(p)
        if pm.ndim != 3:
            raise ConfigError(f"{p} is not a 3-channel point map")
        maps.append(pm.astype(np.float64))
    xp = None
    if args.xp_map:
        xp = raster_io.read_image(args.xp_map).astype(np.float64)
        if xp.shape != maps[0].shape[:2]:
            raise ConfigError(f"{args.xp_map} does not match the point map size")
    report = evaluate(maps, plan, xp_map=xp, expected_period=args.fringe_width)
    doc = report.to_dict()
    if args.metric == "accuracy":
        doc["precision_percent"] = None
    elif args.metric == "precision":
        doc["accuracy_percent"] = None
    doc["reference_hardware_percent"] = {"accuracy": 0.61, "precision": 0.29}
    write_json(doc, args.out)
    if args.tsv:
        Path(args.tsv).write_text(report.to_tsv())
    if doc["accuracy_percent"] is not None:
        print(f"accuracy  {doc['accuracy_percent']:.4f} %  (N={report.n_measurements})")
    if doc["precision_percent"] is not None:
        print(f"precision {doc['precision_percent']:.4f} %  (vp={report.vp})")
    _write_run_manifest(Path(args.out).parent, "evaluate", {"plan": args.plan}, [args.out], vars_clean(args), t0)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cpscan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"cpscan {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-patterns", help="write fringe + code pattern PGMs and a manifest")
    g.add_argument("--width", type=int, default=1024)
    g.add_argument("--height", type=int, default=768)
    g.add_argument("--fringe-width", type=int, default=64)
    g.add_argument("--fringe-width-h", type=int, default=None, help="horizontal fringe width (defaults to --fringe-width)")
    g.add_argument("--orientation", choices=["v", "h", "both"], default="both")
    g.add_argument("--code", choices=["gray", "binary"], default="gray")
    g.add_argument("--idc", type=float, default=127.5)
    g.add_argument("--imod", type=float, default=127.5)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_gen_patterns)

    s = sub.add_parser("simulate", help="render a capture stack of a scene")
    s.add_argument("--scene", required=True)
    s.add_argument("--calib", required=True)
    s.add_argument("--patterns", required=True, help="pattern directory (or its manifest.json)")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--blur", type=int, default=0, help="box-blur radius applied to patterns")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--emit-ground-truth", action="store_true")
    s.set_defaults(func=cmd_simulate)

    sv = sub.add_parser("simulate-views", help="synthesize calibration board observations")
    sv.add_argument("--calib", required=True)
    sv.add_argument("--n-views", type=int, default=5)
    sv.add_argument("--no-distortion", action="store_true")
    sv.add_argument("--out", required=True)
    sv.set_defaults(func=cmd_simulate_views)

    d = sub.add_parser("decode", help="captures -> phase maps and correspondence")
    d.add_argument("--captures", required=True)
    d.add_argument("--manifest", default=None)
    d.add_argument("--m-min", type=float, default=DecodeOptions.m_min)
    d.add_argument("--median-filter", action="store_true")
    d.add_argument("--no-fix-jumps", action="store_true", help="keep fringe-order slips at stripe boundaries")
    d.add_argument("--out-dir", required=True)
    d.set_defaults(func=cmd_decode)

    c = sub.add_parser("calibrate", help="closed-form camera/projector/stereo calibration")
    c.add_argument("--views", required=True)
    c.add_argument("--mode", choices=["camera", "projector", "stereo", "full"], default="full")
    c.add_argument("--intrinsics", default=None, help="calibration document with camera+projector (stereo mode)")
    c.add_argument("--stereo-view", type=int, default=0)
    c.add_argument("--camera-size", type=int, nargs=2, default=None)
    c.add_argument("--projector-size", type=int, nargs=2, default=None)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_calibrate)

    t = sub.add_parser("triangulate", help="correspondence -> point cloud")
    t.add_argument("--correspondence", required=True, help="decode output directory")
    t.add_argument("--calib", required=True)
    t.add_argument("--max-gap", type=float, default=DEFAULT_MAX_GAP, help="meters")
    t.add_argument("--out", required=True)
    t.add_argument("--out-map", default=None)
    t.set_defaults(func=cmd_triangulate)

    e = sub.add_parser("evaluate", help="length accuracy / precision report")
    e.add_argument("metric", choices=["accuracy", "precision", "both"])
    e.add_argument("--point-maps", nargs="+", required=True)
    e.add_argument("--plan", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--tsv", default=None)
    e.add_argument("--xp-map", default=None, help="xp.pfm of the first scan; adds plane RMS and waviness diagnostics")
    e.add_argument("--fringe-width", type=float, default=None, help="vertical fringe width, sets the minimum waviness span")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cpscan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"cpscan: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, FormatError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"cpscan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
