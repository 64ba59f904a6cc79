"""Exit codes: 0 success, 1 self-test violation, 2 bad input data, 3 bad configuration."""

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from loguru import logger
from pydantic import ValidationError

from src.config import Settings
from src.enums import CdNorm, Frame, HallucinatorType, OcsScale
from src.errors import ConfigError, IoFailure, ParseError, StereoShapeError
from src.instance import Box3D, PointCloud
from src.metrics import TemplateLibrary, evaluate, find_frames, write_report
from src.occupancy import (
    AnalyticField,
    TabulatedField,
    UniformGridSpec,
    concatenate_meshes,
    extract_regions,
    marching_cubes,
)
from src.pipeline import InstancePipeline
from src.selftest import CHECKS, box_noise_study, run_selftest
from src.utils.mesh_io import read_cloud, write_cloud, write_mesh

EXIT_OK = 0
EXIT_SELFTEST_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_BAD_CONFIG = 3


def _load_settings(args: argparse.Namespace) -> Settings:
    return Settings.load_settings(
        args.config,
        seed=args.seed,
        workers=args.workers,
        cd_norm=args.cd_norm,
        mmdtp_beta=args.mmdtp_beta,
        completion_points=getattr(args, "points", None),
        ocs_scale=getattr(args, "ocs_scale", None),
        hallucinator=getattr(args, "hallucinator", None),
        iso_level=getattr(args, "iso", None),
    )


def cmd_evaluate(args: argparse.Namespace) -> int:
    settings = _load_settings(args)
    sources = find_frames(args.gt_dir, args.pred_dir, args.calib_dir)
    library = None
    if args.templates is not None:
        library = TemplateLibrary.load(args.templates, settings.template_points)

    report = evaluate(sources, settings, library)
    for path in write_report(args.out, report, settings):
        print(path)
    return EXIT_OK


def cmd_complete(args: argparse.Namespace) -> int:
    settings = _load_settings(args)
    x, y, z, h, w, l, yaw = args.box  # noqa: E741
    box = Box3D(x=x, y=y, z=z, h=h, w=w, l=l, yaw=yaw)
    cloud = PointCloud(points=read_cloud(args.cloud), frame=Frame.ccs)

    completed = InstancePipeline.from_settings(settings).complete_cloud(cloud, box)
    write_cloud(args.out, completed.points)
    print(f"points={len(completed)} input={cloud.real_count} out={args.out}")
    return EXIT_OK


def _region(values: Sequence[float]) -> UniformGridSpec:
    lower, upper, counts = values[0:3], values[3:6], values[6:9]
    if any(count != int(count) for count in counts):
        raise ConfigError(f"Region node counts must be integers, got {counts}")
    return UniformGridSpec(
        lower=tuple(lower), upper=tuple(upper), counts=tuple(int(c) for c in counts)
    )


def cmd_reconstruct(args: argparse.Namespace) -> int:
    settings = _load_settings(args)
    lower, upper = (args.bounds[0],) * 3, (args.bounds[1],) * 3
    if args.field is not None:
        field = TabulatedField.from_tensor(args.field, lower=lower, upper=upper)
    else:
        field = AnalyticField.from_spec(args.analytic, softness=settings.field_softness)

    if args.region:
        meshes = extract_regions(field, [_region(r) for r in args.region], settings.iso_level)
        for i, region_mesh in enumerate(meshes):
            print(
                f"region={i} vertices={region_mesh.vertices.shape[0]} "
                f"triangles={len(region_mesh)}"
            )
        mesh = concatenate_meshes(meshes)
    else:
        spec = UniformGridSpec(lower=lower, upper=upper, counts=tuple(args.nodes))
        mesh = marching_cubes(field, spec, settings.iso_level)

    write_mesh(args.out, mesh)
    print(f"vertices={mesh.vertices.shape[0]} triangles={len(mesh)}")
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    settings = _load_settings(args)
    results = run_selftest(settings.seed, args.corrupt)
    for result in results:
        verdict = "PASS" if result.passed else "FAIL"
        print(f"{verdict} {result.name}" + (f": {result.detail}" if result.detail else ""))

    if args.noise_study:
        for sigma, value in box_noise_study(settings.seed):
            print(f"box_noise sigma={sigma:g} mmd={value:.6f}")

    failed = [result.name for result in results if not result.passed]
    if failed:
        logger.error(f"Self-test failed: {', '.join(failed)}")
        return EXIT_SELFTEST_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stereo-shape", description=__doc__)
    parser.add_argument("--config", type=Path, default=None, help="key=value settings file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None, help="frames evaluated in parallel")
    parser.add_argument("--cd-norm", type=CdNorm, default=None, choices=list(CdNorm))
    parser.add_argument("--mmdtp-beta", type=float, default=None)
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    evaluate_parser = commands.add_parser("evaluate", help="detection and shape metrics")
    evaluate_parser.add_argument("--pred-dir", type=Path, required=True)
    evaluate_parser.add_argument("--gt-dir", type=Path, required=True)
    evaluate_parser.add_argument("--calib-dir", type=Path, default=None)
    evaluate_parser.add_argument("--templates", type=Path, default=None, help="template cloud dir")
    evaluate_parser.add_argument("--out", type=Path, required=True, help="report directory")
    evaluate_parser.set_defaults(handler=cmd_evaluate)

    complete_parser = commands.add_parser("complete", help="normalize and complete a cloud")
    complete_parser.add_argument("--cloud", type=Path, required=True, help="camera-frame cloud")
    complete_parser.add_argument(
        "--box",
        type=float,
        nargs=7,
        required=True,
        metavar=("X", "Y", "Z", "H", "W", "L", "YAW"),
        help="box center, size and yaw in the camera frame",
    )
    complete_parser.add_argument("--out", type=Path, required=True)
    complete_parser.add_argument("--points", type=int, default=None, help="completed cloud size")
    complete_parser.add_argument("--ocs-scale", type=OcsScale, default=None, choices=list(OcsScale))
    complete_parser.add_argument(
        "--hallucinator", type=HallucinatorType, default=None, choices=list(HallucinatorType)
    )
    complete_parser.set_defaults(handler=cmd_complete)

    reconstruct_parser = commands.add_parser("reconstruct", help="mesh an occupancy field")
    source = reconstruct_parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--field", type=Path, help="tabulated occupancy tensor")
    source.add_argument("--analytic", help="analytic field, e.g. 'sphere:radius=0.4'")
    reconstruct_parser.add_argument(
        "--bounds", type=float, nargs=2, default=(-0.5, 0.5), metavar=("LO", "HI")
    )
    reconstruct_parser.add_argument(
        "--nodes", type=int, nargs=3, default=(32, 32, 32), metavar=("NX", "NY", "NZ")
    )
    reconstruct_parser.add_argument(
        "--region",
        type=float,
        nargs=9,
        action="append",
        metavar="V",
        help="x0 y0 z0 x1 y1 z1 nx ny nz; repeat to tile the volume at mixed resolution",
    )
    reconstruct_parser.add_argument("--iso", type=float, default=None)
    reconstruct_parser.add_argument("--out", type=Path, required=True, help=".obj or .stl path")
    reconstruct_parser.set_defaults(handler=cmd_reconstruct)

    selftest_parser = commands.add_parser("selftest", help="synthetic property suite")
    selftest_parser.add_argument(
        "--corrupt", choices=list(CHECKS), default=None, help="break the fixture of one check"
    )
    selftest_parser.add_argument(
        "--noise-study", action="store_true", help="also report MMD under box noise"
    )
    selftest_parser.set_defaults(handler=cmd_selftest)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if args.verbose else "INFO")

    try:
        return args.handler(args)
    except (ConfigError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_BAD_CONFIG
    except (ParseError, IoFailure) as e:
        logger.error(f"Input error: {e}")
        return EXIT_BAD_INPUT
    except (StereoShapeError, ValueError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_BAD_INPUT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
