"""bevbench command line: gen-labels, eval, voxelize, synth, consistency, report, serve.

Exit codes: 0 success, 1 usage/config/manifest error, 2 one or more frames failed.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple
from pydantic import ValidationError

from config import load_tool_config, settings, setup_logging, tomllib
from bev.consistency import score_sequence, sequence_from_predictions
from bev.metrics import evaluate_sequence
from bev.pseudolidar import voxel_indices, voxelize
from bev.geom import backproject_depth
from bev.synth import write_dataset
from bev.weaksup import generate_labels, paint_cloud, sequence_lane_ids
from dataio.bevg import read_grid, write_grid
from dataio.images import export_png, read_depth, read_semantic_image
from dataio.kitti import load_calibration, load_cloud, load_poses
from dataio.manifest import describe_errors, load_manifest, missing_paths
from models.grid import ConfidenceGrid, GridSpec, LabelGrid
from models.manifest import SequenceManifest
from models.report import EvalReport, FrameError
from models.scene import SceneParams
from models.sequence import ConsistencyWeights
from models.settings import ToolConfig
from utils.errors import BevBenchError, ConfigError, DataError, ManifestError
from utils.files import read_json, write_atomic, write_json, write_text
from utils.report_generator import ReportGenerator

logger = logging.getLogger("bevbench")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2


class BevArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ==============================
# SHARED HELPERS
# ==============================
def _config(args) -> ToolConfig:
    cfg = load_tool_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg


def _manifest(path: str) -> SequenceManifest:
    manifest = load_manifest(path)
    if not manifest.frames:
        raise ManifestError(f"{path}: no frames")
    return manifest


def _require(manifest: SequenceManifest, *fields: str) -> None:
    problems = [p for field in fields for p in missing_paths(manifest, field)]
    if problems:
        raise ManifestError("manifest is missing inputs:\n  " + "\n  ".join(problems))


def _grid(cfg: ToolConfig, manifest: SequenceManifest) -> GridSpec:
    """The manifest's grid wins over the configured one when the manifest names one."""
    if "grid" not in manifest.model_fields_set:
        return cfg.grid
    if manifest.grid != cfg.grid:
        logger.warning(
            f"⚠️ Using manifest grid {manifest.grid.rows}x{manifest.grid.cols} @ {manifest.grid.resolution} m "
            f"instead of configured {cfg.grid.rows}x{cfg.grid.cols} @ {cfg.grid.resolution} m"
        )
    return manifest.grid


def _name(index: int) -> str:
    return f"{index:06d}"


def _as_confidence(grid) -> ConfidenceGrid:
    if isinstance(grid, LabelGrid):
        return ConfidenceGrid.one_hot(grid)
    if isinstance(grid, ConfidenceGrid):
        return grid
    raise DataError(f"expected a label or confidence grid, got {type(grid).__name__}")


# ==============================
# gen-labels
# ==============================
def cmd_gen_labels(args) -> int:
    cfg = _config(args)
    manifest = _manifest(args.manifest)
    _require(manifest, "cloud", "semantic")
    grid = _grid(cfg, manifest)
    if manifest.poses is None or manifest.calibration is None:
        raise ManifestError("gen-labels needs 'poses' and 'calibration' in the manifest")

    poses = load_poses(manifest.resolve(manifest.poses))
    first = read_semantic_image(manifest.resolve(manifest.frames[0].semantic))
    K, cam_from_lidar = load_calibration(manifest.resolve(manifest.calibration), image_size=first.shape[::-1])

    out = Path(args.out)
    frames, errors = [], []
    for record in manifest.frames:
        pose_index = record.index if record.pose_index is None else record.pose_index
        try:
            if pose_index >= len(poses):
                raise DataError(f"pose index {pose_index} beyond {len(poses)} poses")
            cloud = load_cloud(manifest.resolve(record.cloud))
            seg = read_semantic_image(manifest.resolve(record.semantic), shape=(K.height, K.width))
            frames.append((record.index, paint_cloud(cloud, seg, K, cam_from_lidar, record.index), poses[pose_index]))
        except BevBenchError as e:
            logger.error(f"❌ Frame {record.index}: {e}")
            errors.append(FrameError(index=record.index, error=f"{type(e).__name__}: {e}"))
    if not frames:
        raise ManifestError("no frame could be loaded")

    results = generate_labels(
        [(painted, pose) for _, painted, pose in frames], grid, cfg.weaksup, jobs=args.jobs
    )
    side_ids = sequence_lane_ids([r.lanes for r in results if r.ok])

    summary_frames = []
    for (index, _, _), result in zip(frames, results):
        entry = {"index": index, "status": "ok" if result.ok else "failed"}
        if result.ok:
            write_grid(out / "labels" / f"{_name(index)}.bevg", result.grid)
            if cfg.io.write_png:
                export_png(result.grid, out / "png" / f"{_name(index)}.png", manifest.palette)
            entry.update({
                "residuals": [b.residual for b in result.boundaries],
                "max_residual": result.max_residual,
                "needs_review": result.needs_review,
                "lanes": [
                    {"lane_id": lane.lane_id, "side": lane.side, "sequence_lane_id": side_ids[lane.side]}
                    for lane in result.lanes
                ],
            })
        else:
            entry["error"] = result.error
            errors.append(FrameError(index=index, error=result.error))
        summary_frames.append(entry)

    summary = {
        "command": "gen-labels",
        "sequence_id": manifest.sequence_id,
        "frames": summary_frames,
        "load_errors": [e.model_dump() for e in errors if e.index not in {f["index"] for f in summary_frames}],
        "sequence_lane_ids": {str(side): lane_id for side, lane_id in sorted(side_ids.items())},
        "grid": grid.model_dump(),
        "config": cfg.echo(),
    }
    write_json(out / "summary.json", summary)
    failed = len(errors)
    logger.info(f"✅ Labeled {len(frames) - sum(1 for r in results if not r.ok)} frames, {failed} failed")
    return EXIT_PARTIAL if failed else EXIT_OK


# ==============================
# eval
# ==============================
def load_eval_pairs(manifest: SequenceManifest) -> Tuple[List[Tuple[ConfidenceGrid, LabelGrid]], List[int], List[FrameError]]:
    pairs, indices, errors = [], [], []
    for record in manifest.frames:
        try:
            if record.label is None or record.prediction is None:
                raise DataError("frame needs both label and prediction paths")
            gt = read_grid(manifest.resolve(record.label))
            if not isinstance(gt, LabelGrid):
                raise DataError(f"{record.label} is not a label grid")
            pred = _as_confidence(read_grid(manifest.resolve(record.prediction)))
            pairs.append((pred, gt))
            indices.append(record.index)
        except BevBenchError as e:
            logger.error(f"❌ Frame {record.index}: {e}")
            errors.append(FrameError(index=record.index, error=f"{type(e).__name__}: {e}"))
    return pairs, indices, errors


def cmd_eval(args) -> int:
    cfg = _config(args)
    manifest = _manifest(args.manifest)
    pairs, indices, errors = load_eval_pairs(manifest)

    report = evaluate_sequence(
        pairs,
        cfg.metrics,
        jobs=args.jobs,
        frame_errors=errors,
        method=args.method,
        sequence_id=manifest.sequence_id,
        config=cfg.echo(),
        indices=indices,
    )
    out = Path(args.out)
    table = ReportGenerator.eval_table(report)
    write_json(out / "eval.json", report.model_dump(mode="json"))
    write_text(out / "eval.md", table)
    print(table)
    return EXIT_PARTIAL if errors else EXIT_OK


# ==============================
# voxelize
# ==============================
def cmd_voxelize(args) -> int:
    cfg = _config(args)
    manifest = _manifest(args.manifest)
    _require(manifest, "depth")
    if manifest.calibration is None:
        raise ManifestError("voxelize needs 'calibration' in the manifest")
    first = read_depth(manifest.resolve(manifest.frames[0].depth))
    K, _ = load_calibration(manifest.resolve(manifest.calibration), image_size=first.shape[::-1])
    vspec = cfg.voxel.voxel_spec(_grid(cfg, manifest))

    out = Path(args.out)
    frames, failed = [], 0
    for record in manifest.frames:
        try:
            cloud = backproject_depth(read_depth(manifest.resolve(record.depth)), K)
            _, keep = voxel_indices(cloud, vspec)
            volume = voxelize(cloud, vspec)
            in_range = int(keep.sum())
            if in_range != volume.total_count:
                raise DataError(f"voxel counts {volume.total_count} do not add up to {in_range} in-range points")
            write_grid(out / "voxels" / f"{_name(record.index)}.bevg", volume)
            frames.append({
                "index": record.index, "status": "ok", "points": len(cloud),
                "in_range": in_range, "total_count": volume.total_count, "conserved": True,
            })
        except BevBenchError as e:
            logger.error(f"❌ Frame {record.index}: {e}")
            frames.append({"index": record.index, "status": "failed", "error": f"{type(e).__name__}: {e}"})
            failed += 1

    write_json(out / "summary.json", {
        "command": "voxelize",
        "sequence_id": manifest.sequence_id,
        "voxel_spec": {
            "resolution": vspec.bev.resolution,
            "rows": vspec.bev.rows,
            "cols": vspec.bev.cols,
            "channels": vspec.channels,
            "y_min": vspec.y_min,
            "y_max": vspec.y_max,
        },
        "frames": frames,
        "config": cfg.echo(),
    })
    return EXIT_PARTIAL if failed else EXIT_OK


# ==============================
# synth
# ==============================
def load_scene_params(path: Optional[str], default: SceneParams) -> SceneParams:
    if path is None:
        return default
    if path.endswith(".json"):
        data = read_json(path)
    else:
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"cannot read scene params {path}: {e}")
    try:
        return SceneParams.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{path}: invalid scene params", describe_errors(e))


def cmd_synth(args) -> int:
    cfg = _config(args)
    params = load_scene_params(args.params, cfg.synth)
    if args.seed is not None:
        params = params.model_copy(update={"seed": args.seed})
    path = write_dataset(params, args.out, cfg.grid, sequence_id=args.sequence_id)
    print(path)
    return EXIT_OK


# ==============================
# consistency
# ==============================
def cmd_consistency(args) -> int:
    cfg = _config(args)
    manifest = _manifest(args.manifest)
    _require(manifest, "prediction")

    preds = [_as_confidence(read_grid(manifest.resolve(r.prediction))) for r in manifest.frames]
    gts = None
    if all(r.label is not None for r in manifest.frames):
        gts = [read_grid(manifest.resolve(r.label)) for r in manifest.frames]
        if not all(isinstance(g, LabelGrid) for g in gts):
            raise DataError("label paths must point to label grids")
    poses = None
    if cfg.consistency.warp:
        if manifest.poses is None:
            raise ManifestError("warp mode needs 'poses' in the manifest")
        all_poses = load_poses(manifest.resolve(manifest.poses))
        poses = [all_poses[r.index if r.pose_index is None else r.pose_index] for r in manifest.frames]

    c = cfg.consistency
    report = score_sequence(
        sequence_from_predictions(preds, poses),
        ConsistencyWeights(lambda_sup=c.lambda_sup, lambda_short=c.lambda_short, lambda_long=c.lambda_long),
        ground_truth=gts,
        predictions=preds if gts is not None else None,
        epsilon=c.epsilon,
        warp=c.warp,
        config=cfg.echo(),
    )
    write_json(Path(args.out) / "consistency.json", report.model_dump(mode="json"))
    print(json.dumps({k: getattr(report, k) for k in ("sup", "short", "long", "total")}))
    return EXIT_OK


# ==============================
# report
# ==============================
def cmd_report(args) -> int:
    reports = []
    for path in args.reports:
        try:
            reports.append(EvalReport.model_validate(read_json(path)))
        except ValidationError as e:
            raise ConfigError(f"{path}: not an eval report", describe_errors(e))
    out = Path(args.out)
    table = ReportGenerator.to_markdown(reports)
    write_text(out / "comparison.md", table)
    write_json(out / "comparison.json", {"rows": ReportGenerator.comparison_rows(reports)})
    write_atomic(out / "comparison.pdf", ReportGenerator.generate_comparison_pdf(reports))
    for grid_path in args.render or []:
        grid = read_grid(grid_path)
        export_png(grid, out / "png" / f"{Path(grid_path).stem}.png")
    print(table)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn
    level = "warning" if settings.LOG_LEVEL == "warn" else settings.LOG_LEVEL
    uvicorn.run("main:app", host=args.host, port=args.port, log_level=level)
    return EXIT_OK


# ==============================
# PARSER
# ==============================
def build_parser() -> argparse.ArgumentParser:
    common = BevArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="TOML tool configuration")
    common.add_argument("--jobs", type=int, default=settings.JOBS, help="frame-level worker processes")
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--out", default=".", help="output directory")

    parser = BevArgumentParser(prog="bevbench", description="BEV amodal layout benchmarking toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-labels", parents=[common], help="weak-supervision label grids from lidar + semantics")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_gen_labels)

    p = sub.add_parser("eval", parents=[common], help="score predictions against ground truth")
    p.add_argument("manifest")
    p.add_argument("--method", default="prediction", help="method name in the report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("voxelize", parents=[common], help="pseudo-lidar voxel volumes from depth maps")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_voxelize)

    p = sub.add_parser("synth", parents=[common], help="synthetic dataset with ground truth")
    p.add_argument("params", nargs="?", default=None, help="scene params (TOML or JSON)")
    p.add_argument("--sequence-id", default="synth")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("consistency", parents=[common], help="temporal consistency scores of predictions")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("report", parents=[common], help="merge eval reports into a comparison table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--render", nargs="*", help="BEVG grids to render as PNG")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the benchmark service")
    p.add_argument("--host", default=settings.HOST)
    p.add_argument("--port", type=int, default=settings.PORT)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        logger.error("❌ --jobs must be >= 1")
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, ManifestError) as e:
        logger.error(f"❌ {e}")
        return EXIT_USAGE
    except DataError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_USAGE
    except BevBenchError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
