"""Command-line surface.

Subcommands: init, optimize, render-turntable, consistency-report,
validate-config.  Every run of randomness flows from one --seed flag;
no wall-clock seeding anywhere.  Exit codes: 0 ok, 2 config error,
3 guidance-service error, 4 numerical failure, 5 I/O error.

The SPLATOPT_ENDPOINT environment variable supplies the default guidance
service endpoint.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .camera import (
    camera_to_text,
    default_intrinsics,
    sample_orbit_camera,
    turntable_azimuths,
)
from .cloud import PointSet, init_from_points
from .config import load_settings, settings_to_text
from .errors import (
    ConfigError,
    EmptyCloudError,
    GuidanceUnavailableError,
    NumericalError,
    ProtocolError,
    SplatoptError,
    SplatParseError,
)
from .io import (
    load_point_ply,
    load_splat,
    save_depth,
    save_png,
    save_scene_coords,
    save_splat,
)
from .pipeline import run
from .protocol import procedural_pointcloud
from .renderer import RenderConfig, render
from .scene_coords import render_scene_coordinates, view_consistency_loss

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GUIDANCE = 3
EXIT_NUMERICAL = 4
EXIT_IO = 5

ENDPOINT_ENV = "SPLATOPT_ENDPOINT"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatopt",
        description="Differentiable Gaussian-splatting optimizer with pluggable guidance",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="build an initial Gaussian cloud")
    p_init.add_argument("--source", required=True,
                        help="ply:<path>, sphere:<n>, cube:<n>, or service")
    p_init.add_argument("--count", type=int, default=2000)
    p_init.add_argument("--seed", type=int, default=0)
    p_init.add_argument("--prompt", default="an object",
                        help="prompt for the service point-cloud endpoint")
    p_init.add_argument("--endpoint", default=os.environ.get(ENDPOINT_ENV, ""))
    p_init.add_argument("--out", required=True, help="output .splat path")

    p_opt = sub.add_parser("optimize", help="run the two-stage optimization")
    p_opt.add_argument("--config", help="INI configuration file")
    p_opt.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       dest="overrides", help="override a config key (repeatable)")
    p_opt.add_argument("--seed", type=int, help="override run.seed")
    p_opt.add_argument("--out", required=True, help="output directory")
    p_opt.add_argument("--resume", help="checkpoint to resume from")

    p_turn = sub.add_parser("render-turntable", help="render evenly spaced azimuths")
    p_turn.add_argument("--splat", required=True)
    p_turn.add_argument("--frames", type=int, default=120)
    p_turn.add_argument("--elevation", type=float, default=15.0)
    p_turn.add_argument("--radius", type=float, default=4.0)
    p_turn.add_argument("--width", type=int, default=128)
    p_turn.add_argument("--height", type=int, default=128)
    p_turn.add_argument("--background", default="0,0,0")
    p_turn.add_argument("--depth", action="store_true", help="also write depth planes")
    p_turn.add_argument("--scene-coords", action="store_true",
                        help="also write scene-coordinate planes")
    p_turn.add_argument("--out", required=True, help="output directory")

    p_rep = sub.add_parser("consistency-report", help="pairwise view-consistency metrics")
    p_rep.add_argument("--splat", required=True)
    p_rep.add_argument("--pairs", type=int, default=8)
    p_rep.add_argument("--seed", type=int, default=0)
    p_rep.add_argument("--separation", type=float, default=30.0,
                       help="azimuth separation within each pair (degrees)")
    p_rep.add_argument("--threshold", type=float, default=1e-3,
                       help="flag pairs whose loss exceeds this")
    p_rep.add_argument("--width", type=int, default=96)
    p_rep.add_argument("--height", type=int, default=96)
    p_rep.add_argument("--radius", type=float, default=4.0)
    p_rep.add_argument("--elevation", type=float, default=15.0)
    p_rep.add_argument("--out", required=True, help="output report JSON path")

    p_val = sub.add_parser("validate-config", help="validate and echo a configuration")
    p_val.add_argument("--config", help="INI configuration file")
    p_val.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       dest="overrides")
    return parser


def cmd_init(args) -> int:
    if args.source == "service":
        from .guidance import remote_denoiser

        if not args.endpoint:
            raise ConfigError("init from service requires --endpoint or SPLATOPT_ENDPOINT")
        client = remote_denoiser(args.endpoint, prompt_text=args.prompt)
        pts, cols = client.fetch_pointcloud(args.prompt, count=args.count)
        points = PointSet(pts, cols)
        cloud = init_from_points(points, args.count, seed=args.seed)
    elif args.source.startswith("ply:"):
        points = load_point_ply(args.source[4:])
        cloud = init_from_points(points, args.count, seed=args.seed)
    else:
        pts, cols = procedural_pointcloud(args.source)
        cloud = init_from_points(PointSet(pts, cols), args.count, seed=args.seed)
    save_splat(cloud, args.out)
    lo = cloud.positions.min(axis=0)
    hi = cloud.positions.max(axis=0)
    print(f"wrote {cloud.count} Gaussians to {args.out}")
    print(f"bounding box: [{lo[0]:.4g}, {lo[1]:.4g}, {lo[2]:.4g}] "
          f"to [{hi[0]:.4g}, {hi[1]:.4g}, {hi[2]:.4g}]")
    return EXIT_OK


def cmd_optimize(args) -> int:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    settings = load_settings(path=args.config, overrides=overrides)
    report = run(settings, args.out, resume_from=args.resume)
    print(f"finished {report.iterations} iterations, {report.gaussians} Gaussians")
    print(f"splat: {report.splat_path}")
    print(f"metrics: {report.metrics_path}")
    return EXIT_OK


def _parse_background(raw: str):
    parts = [float(p) for p in raw.replace(",", " ").split()]
    if len(parts) != 3:
        raise ConfigError(f"background must be three values, got {raw!r}")
    return tuple(parts)


def cmd_render_turntable(args) -> int:
    cloud = load_splat(args.splat)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rc = RenderConfig(background=_parse_background(args.background))
    intr = default_intrinsics(args.width, args.height)
    records = []
    for i, az in enumerate(turntable_azimuths(args.frames)):
        cam = sample_orbit_camera(
            float(az), args.elevation, args.radius, (0, 0, 0),
            intr, args.width, args.height,
        )
        records.append(camera_to_text(cam))
        view = render(cloud, cam, rc)
        save_png(view.rgb, out / f"frame_{i:03d}.png")
        if args.depth:
            save_depth(view.depth, out / f"depth_{i:03d}.bin")
        if args.scene_coords:
            smap = render_scene_coordinates(view)
            save_scene_coords(smap.coords, smap.valid, out / f"coords_{i:03d}.bin")
    (out / "cameras.txt").write_text("\n".join(records), encoding="utf-8")
    print(f"wrote {args.frames} frames to {out}")
    return EXIT_OK


def consistency_report(
    cloud, n_pairs: int, seed: int = 0, separation: float = 30.0,
    threshold: float = 1e-3, width: int = 96, height: int = 96,
    radius: float = 4.0, elevation: float = 15.0, view_transform=None,
) -> dict:
    """Pairwise stabilized view-consistency metrics over sampled view pairs.

    ``view_transform(index, rgb) -> rgb`` lets tests inject per-view
    inconsistencies that the color model itself cannot produce.
    """
    rng = np.random.default_rng(seed)
    rc = RenderConfig()
    intr = default_intrinsics(width, height)
    rows = []
    for k in range(n_pairs):
        az_a = float(rng.uniform(-180.0, 180.0))
        az_b = az_a + separation
        views = []
        maps = []
        for i, az in enumerate((az_a, az_b)):
            cam = sample_orbit_camera(az, elevation, radius, (0, 0, 0),
                                      intr, width, height)
            view = render(cloud, cam, rc)
            if view_transform is not None:
                view.rgb = np.clip(view_transform(i, view.rgb), 0.0, 1.0)
            views.append(view)
            maps.append(render_scene_coordinates(view))
        loss, _, _ = view_consistency_loss(
            views[0].rgb, views[1].rgb, maps[0], maps[1], variant="stabilized"
        )
        from .scene_coords import associate_overlap, scene_radius

        assoc = associate_overlap(maps[0], maps[1],
                                  eps_depth=0.02 * scene_radius(maps[0], maps[1]))
        rows.append({
            "pair": k,
            "azimuth_a": az_a,
            "azimuth_b": az_b,
            "loss": loss,
            "overlap_fraction": float(assoc.mask.mean()),
            "flagged": bool(loss > threshold),
        })
    losses = [r["loss"] for r in rows]
    return {
        "pairs": rows,
        "mean_loss": float(np.mean(losses)) if rows else 0.0,
        "max_loss": float(np.max(losses)) if rows else 0.0,
        "threshold": threshold,
        "flagged_pairs": [r["pair"] for r in rows if r["flagged"]],
    }


def cmd_consistency_report(args) -> int:
    cloud = load_splat(args.splat)
    report = consistency_report(
        cloud, args.pairs, seed=args.seed, separation=args.separation,
        threshold=args.threshold, width=args.width, height=args.height,
        radius=args.radius, elevation=args.elevation,
    )
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    print(f"mean loss {report['mean_loss']:.6g}, max {report['max_loss']:.6g}, "
          f"{len(report['flagged_pairs'])} of {args.pairs} pairs flagged")
    return EXIT_OK


def cmd_validate_config(args) -> int:
    settings = load_settings(path=args.config, overrides=args.overrides)
    sys.stdout.write(settings_to_text(settings))
    return EXIT_OK


_HANDLERS = {
    "init": cmd_init,
    "optimize": cmd_optimize,
    "render-turntable": cmd_render_turntable,
    "consistency-report": cmd_consistency_report,
    "validate-config": cmd_validate_config,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GuidanceUnavailableError, ProtocolError) as exc:
        print(f"guidance-service error: {exc}", file=sys.stderr)
        return EXIT_GUIDANCE
    except (NumericalError, EmptyCloudError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (SplatParseError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SplatoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
