"""Command-line surface: build -> stylize -> render -> evaluate, plus an
all-in-one pipeline command driven by a JSON config.

Every source of randomness sits behind --seed, so identical inputs and
options produce byte-identical artifacts. Values from --config override
command-line flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import aggregation, evaluation, point_cloud, renderer, scene_io, style_transform
from .errors import PointStyleError

DEFAULT_STAGES = "4096:0.05,2048:0.1,1024:0.2"


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _parse_stages(text: str, k: int, pooling: str) -> aggregation.AggregationPipelineConfig:
    stages = []
    for part in text.split(","):
        p, _, r = part.strip().partition(":")
        stages.append(
            aggregation.AggregationStageConfig(
                num_samples=int(p), radius=float(r), max_group_size=k, pooling=pooling
            )
        )
    return aggregation.AggregationPipelineConfig(stages=tuple(stages))


def _load_style(path: Path) -> scene_io.FeatureMap:
    """Style input: FMAP container, or a plain image taken as RGB statistics."""
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == scene_io.FMAP_MAGIC:
        return scene_io.load_feature_map(path)
    return scene_io.FeatureMap(scene_io.load_image(path))


def _camera_from_args(args) -> tuple[scene_io.CameraIntrinsics, scene_io.CameraPose]:
    if args.manifest is not None:
        manifest = scene_io.load_manifest(args.manifest)
        if not 0 <= args.view < len(manifest.views):
            raise PointStyleError(
                f"view index {args.view} out of range for {len(manifest.views)}-view scene"
            )
        data = scene_io.load_view_data(manifest, args.view)
        return data.intrinsics, data.pose
    if args.camera is None:
        raise PointStyleError("need either --manifest with --view, or --camera")
    return _parse_camera_file(Path(args.camera))


def _parse_camera_file(path: Path) -> tuple[scene_io.CameraIntrinsics, scene_io.CameraPose]:
    if not path.is_file():
        raise PointStyleError(f"no such camera file: {path}")
    kv: dict[str, str] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition(":")
        kv[key.strip()] = value.strip()
    try:
        intr = scene_io.CameraIntrinsics(
            fx=float(kv["fx"]),
            fy=float(kv["fy"]),
            cx=float(kv["cx"]),
            cy=float(kv["cy"]),
            width=int(kv["width"]),
            height=int(kv["height"]),
        )
        rotation = np.array([float(x) for x in kv["rotation"].split()]).reshape(3, 3)
        translation = np.array([float(x) for x in kv["translation"].split()])
        pose = scene_io.CameraPose(rotation=rotation, translation=translation)
    except KeyError as exc:
        raise PointStyleError(f"{path}: missing camera key {exc}") from exc
    except ValueError as exc:
        raise PointStyleError(f"{path}: {exc}") from exc
    return intr, pose


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    """Values in the --config JSON file take precedence over flags."""
    if getattr(args, "config", None) is None:
        return args
    path = Path(args.config)
    if not path.is_file():
        raise PointStyleError(f"no such config file: {path}")
    try:
        overrides = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PointStyleError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(overrides, dict):
        raise PointStyleError(f"{path}: config must be a JSON object")
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise PointStyleError(f"{path}: unknown config key {key!r}")
        setattr(args, attr, value)
    return args


def _splat_config(args) -> renderer.SplatConfig:
    return renderer.SplatConfig(
        splat_radius_px=args.splat_radius,
        zbuffer_size=args.zbuffer_size,
        blend=args.blend,
        background=args.background,
    )


def _add_splat_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--splat-radius", type=float, default=2.0, help="splat radius in pixels")
    p.add_argument("--zbuffer-size", type=int, default=128, help="depth candidates kept per pixel")
    p.add_argument("--blend", choices=["nearest", "weighted"], default="nearest")
    p.add_argument("--background", type=float, default=0.0, help="fill value for uncovered pixels")


def _add_transform_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps", type=float, default=None, help="eigenvalue regularizer (default: auto)")
    p.add_argument("--compress-dim", type=int, default=None, help="PCA dim; omit to disable")
    p.add_argument("--alpha", type=float, default=1.0, help="stylization strength in [0, 1]")
    p.add_argument("--stages", default=DEFAULT_STAGES, help="aggregation schedule P:r,P:r,...")
    p.add_argument("--group-size", type=int, default=64, help="max points per radius group")
    p.add_argument("--pooling", choices=["mean", "max"], default="mean")


# ------------------------------------------------------------------
# Subcommands
# ------------------------------------------------------------------


def cmd_build(args) -> int:
    manifest = scene_io.load_manifest(args.manifest)
    clouds = []
    for i in range(len(manifest.views)):
        view = scene_io.load_view_data(manifest, i)
        clouds.append(point_cloud.back_project_view(view))
    cloud = point_cloud.merge(clouds)
    if args.target_points is not None:
        cloud = point_cloud.uniform_downsample(cloud, args.target_points, seed=args.seed)
    point_cloud.save_cloud(cloud, args.out)
    print(f"built cloud: {len(cloud)} points, {cloud.channels} channels -> {args.out}")
    return 0


def cmd_stylize(args) -> int:
    cloud = point_cloud.load_cloud(args.cloud)
    style = _load_style(Path(args.style))
    pipeline_cfg = _parse_stages(args.stages, args.group_size, args.pooling)
    aggregated = aggregation.aggregate_pipeline(cloud, pipeline_cfg, seed=args.seed)
    xf = style_transform.build_transform(
        aggregated, style, eps=args.eps, compress_dim=args.compress_dim, alpha=args.alpha
    )
    styled = style_transform.apply_transform(cloud, xf)
    point_cloud.save_cloud(styled, args.out)
    if args.save_transform:
        style_transform.save_transform(xf, args.save_transform)
    cond = float(np.linalg.cond(xf.matrix))
    print(
        f"stylized {len(cloud)} points via {len(aggregated)} aggregated samples -> {args.out}"
    )
    print(f"transform: size {xf.matrix.shape[0]}, condition number {cond:.4g}, alpha {xf.alpha}")
    return 0


def cmd_render(args) -> int:
    cloud = point_cloud.load_cloud(args.cloud)
    intrinsics, pose = _camera_from_args(args)
    view = renderer.render_view(cloud, intrinsics, pose, _splat_config(args))
    if not np.any(view.mask):
        print("warning: render has empty coverage (is the scene behind the camera?)", file=sys.stderr)

    out = Path(args.out)
    if out.suffix == ".fmap":
        scene_io.save_feature_map(scene_io.FeatureMap(view.data), out)
    elif view.data.shape[2] != 3:
        raise PointStyleError(
            f"cloud has {view.data.shape[2]} channels; write an .fmap output instead of PNG"
        )
    else:
        scene_io.save_image(view.data, out)
    if args.depth_out:
        depth = np.where(view.mask, view.depth, 0.0).astype(np.float32)
        scene_io.save_depth_map(scene_io.DepthMap(depth), args.depth_out)
    if args.mask_out:
        scene_io.save_image(np.repeat(view.mask[:, :, None], 3, axis=2).astype(np.float64), args.mask_out)
    print(f"rendered {intrinsics.width}x{intrinsics.height} view -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    cloud = point_cloud.load_cloud(args.cloud)
    manifest = scene_io.load_manifest(args.manifest)
    offsets = [int(x) for x in str(args.offsets).split(",")]
    cfg = evaluation.ProtocolConfig(
        splat=_splat_config(args),
        tau=args.tau,
        clamp=(0.0, 1.0) if manifest.mode == "rgb" else None,
    )
    report = evaluation.run_protocol(manifest, cloud, offsets, cfg)
    Path(args.out).write_text(report.to_text(), encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    print(report.to_text(), end="")
    return 0


def cmd_pipeline(args) -> int:
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    build_args = argparse.Namespace(
        manifest=args.manifest,
        out=out_dir / "scene.fpcl",
        target_points=args.target_points,
        seed=args.seed,
    )
    status = cmd_build(build_args)
    if status:
        return status

    stylize_args = argparse.Namespace(
        cloud=out_dir / "scene.fpcl",
        style=args.style,
        out=out_dir / "stylized.fpcl",
        save_transform=out_dir / "style.stfm",
        eps=args.eps,
        compress_dim=args.compress_dim,
        alpha=args.alpha,
        stages=args.stages,
        group_size=args.group_size,
        pooling=args.pooling,
        seed=args.seed,
    )
    status = cmd_stylize(stylize_args)
    if status:
        return status

    manifest = scene_io.load_manifest(args.manifest)
    cloud = point_cloud.load_cloud(out_dir / "stylized.fpcl")
    splat = _splat_config(args)
    for i in range(len(manifest.views)):
        data = scene_io.load_view_data(manifest, i)
        view = renderer.render_view(cloud, data.intrinsics, data.pose, splat)
        scene_io.save_image(view.data, out_dir / f"render_{i:03d}.png")
    print(f"rendered {len(manifest.views)} views -> {out_dir}")

    offsets = [int(x) for x in str(args.offsets).split(",")]
    cfg = evaluation.ProtocolConfig(
        splat=splat, tau=args.tau, clamp=(0.0, 1.0) if manifest.mode == "rgb" else None
    )
    report = evaluation.run_protocol(manifest, cloud, offsets, cfg)
    (out_dir / "consistency.txt").write_text(report.to_text(), encoding="utf-8")
    (out_dir / "consistency.csv").write_text(report.to_csv(), encoding="utf-8")
    print(report.to_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pointstyle",
        description="Stylize a 3D scene once in point-cloud space and render consistent novel views.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="back-project all manifest views into one cloud")
    p.add_argument("manifest")
    p.add_argument("out")
    p.add_argument("--target-points", type=int, default=None, help="uniform downsample target")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="JSON file whose values override flags")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("stylize", help="aggregate, fit the transform, stylize the full cloud")
    p.add_argument("cloud")
    p.add_argument("style", help="style image (RGB mode) or FMAP file (feature mode)")
    p.add_argument("out")
    p.add_argument("--save-transform", default=None, help="also write the fitted STFM file")
    p.add_argument("--seed", type=int, default=None)
    _add_transform_flags(p)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_stylize)

    p = sub.add_parser("render", help="splat a cloud into a camera")
    p.add_argument("cloud")
    p.add_argument("out", help="output PNG, or FMAP if the path ends in .fmap")
    p.add_argument("--manifest", default=None, help="take the camera from this manifest")
    p.add_argument("--view", type=int, default=0, help="view index within --manifest")
    p.add_argument("--camera", default=None, help="camera spec file (key: value lines)")
    p.add_argument("--depth-out", default=None)
    p.add_argument("--mask-out", default=None)
    _add_splat_flags(p)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("evaluate", help="cross-view warping-error protocol")
    p.add_argument("cloud")
    p.add_argument("manifest")
    p.add_argument("out", help="report text file")
    p.add_argument("--csv", default=None, help="also write machine-readable CSV")
    p.add_argument("--offsets", default="1", help="comma-separated frame gaps, e.g. 1,7")
    p.add_argument("--tau", type=float, default=0.01, help="relative depth tolerance for warps")
    _add_splat_flags(p)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="build, stylize, render all views, evaluate")
    p.add_argument("manifest")
    p.add_argument("style")
    p.add_argument("output_dir")
    p.add_argument("--target-points", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--offsets", default="1")
    p.add_argument("--tau", type=float, default=0.01)
    _add_transform_flags(p)
    _add_splat_flags(p)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config(args)
        return args.func(args)
    except PointStyleError as exc:
        return _fail(str(exc))
    except FileNotFoundError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
