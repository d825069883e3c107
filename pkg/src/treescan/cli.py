"""Command line front end.

Subcommands mirror the pipeline stages so each artifact can be produced or
reproduced in isolation. `pipeline` and `batch` read a JSON config; any flag
given on the command line wins over the config file value.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .cloud import read_ply, write_ply
from .degrade import (
    NoiseParams,
    OcclusionParams,
    UnevenParams,
    add_noise,
    default_region,
    density_variants,
    occlude,
    uneven_density,
)
from .implicit import FitConfig, build_surface, cell_markers, load_surface, save_surface
from .mesh import load_obj, save_obj, sweep_mesh
from .metrics import evaluate, report_json
from .pipeline import (
    PipelineConfig,
    batch,
    default_workers,
    load_config,
    run_pipeline,
)
from .scanner import ScanConfig, scan_surface
from .skeleton import TreeParams, generate_skeleton, load_skeleton, save_skeleton

# (flag, dataclass field, type); shared between subcommands and pipeline overrides
_TREE_FLAGS = [
    ("size-class", "size_class", str),
    ("trunk-length", "trunk_length", float),
    ("trunk-radius", "trunk_radius", float),
    ("branch-levels", "branch_levels", int),
    ("radius-decay", "radius_decay", float),
    ("length-decay", "length_decay", float),
    ("gravity", "gravity", float),
    ("bend", "bend", float),
    ("nodes-per-curve", "nodes_per_curve", int),
    ("seed", "seed", int),
]
_FIT_FLAGS = [
    ("epsilon", "epsilon", float),
    ("max-depth", "max_depth", int),
    ("max-triangles-per-cell", "max_triangles_per_cell", int),
    ("min-triangles-for-fit", "min_triangles_for_fit", int),
    ("quadrature-order", "quadrature_order", int),
    ("sphere-radius-scale", "sphere_radius_scale", float),
]
_SCAN_FLAGS = [
    ("resolution", "resolution", int),
    ("views", "views", int),
    ("standoff", "standoff", float),
    ("march-step", "march_step", float),
    ("hit-tolerance", "hit_tolerance", float),
    ("normal-mode", "normal_mode", str),
    ("pca-k", "pca_k", int),
    ("scan-seed", "seed", int),
]


def _add_flags(parser: argparse.ArgumentParser, flags, prefix: str = "") -> None:
    for flag, _, typ in flags:
        parser.add_argument(f"--{prefix}{flag}", type=typ, default=None)


def _apply_flags(obj, args: argparse.Namespace, flags, prefix: str = ""):
    for flag, attr, _ in flags:
        value = getattr(args, f"{prefix}{flag}".replace("-", "_"))
        if value is not None:
            setattr(obj, attr, value)
    return obj


def _tree_params(args) -> TreeParams:
    if args.size_class is not None:
        params = TreeParams.preset(args.size_class, seed=args.seed or 0)
    else:
        params = TreeParams()
    return _apply_flags(params, args, _TREE_FLAGS)


def _range_flag(parser, name):
    parser.add_argument(name, type=float, nargs=2, default=None, metavar=("LO", "HI"))


def _cmd_skeleton(args) -> int:
    params = _tree_params(args)
    if args.branch_angle_range is not None:
        params.branch_angle_range = tuple(args.branch_angle_range)
    if args.branches_per_node_range is not None:
        params.branches_per_node_range = tuple(int(x) for x in args.branches_per_node_range)
    skeleton = generate_skeleton(params)
    save_skeleton(skeleton, args.out)
    print(f"wrote {args.out} ({len(skeleton.nodes)} nodes)")
    return 0


def _cmd_mesh(args) -> int:
    skeleton = load_skeleton(args.skeleton)
    mesh = sweep_mesh(skeleton, sides=args.sides)
    save_obj(mesh, args.out)
    print(f"wrote {args.out} ({len(mesh.vertices)} vertices, {len(mesh.triangles)} triangles)")
    return 0


def _cmd_fit(args) -> int:
    mesh = load_obj(args.mesh)
    cfg = _apply_flags(FitConfig(), args, _FIT_FLAGS)
    surface = build_surface(mesh, cfg)
    save_surface(surface, args.out)
    print(f"wrote {args.out} ({len(surface.centers)} cells)")
    if args.dump_debug_obj:
        save_obj(cell_markers(surface), args.dump_debug_obj)
        print(f"wrote {args.dump_debug_obj}")
    return 0


def _min_feature(args, surface) -> float | None:
    if getattr(args, "min_feature", None) is not None:
        return args.min_feature
    if getattr(args, "skeleton", None):
        return load_skeleton(args.skeleton).min_radius()
    return None


def _cmd_scan(args) -> int:
    surface = load_surface(args.surface)
    cfg = _apply_flags(ScanConfig(), args, _SCAN_FLAGS)
    cloud = scan_surface(surface, cfg, _min_feature(args, surface))
    write_ply(cloud, args.out)
    print(f"wrote {args.out} ({len(cloud)} points)")
    return 0


def _cmd_degrade_noise(args) -> int:
    cloud = read_ply(args.input)
    out = add_noise(cloud, NoiseParams(s=args.s, d=args.d, seed=args.seed))
    write_ply(out, args.out)
    print(f"wrote {args.out} ({len(out)} points)")
    return 0


def _cmd_degrade_occlude(args) -> int:
    cloud = read_ply(args.input)
    if args.skeleton:
        bbox = load_skeleton(args.skeleton).bbox()
    else:
        bbox = cloud.bbox()
    out, balls = occlude(cloud, bbox, OcclusionParams(N=args.n, lam=args.lam, seed=args.seed))
    write_ply(out, args.out)
    print(f"wrote {args.out} ({len(out)} points, {len(balls)} balls)")
    if args.balls_out:
        payload = [{"center": [float(x) for x in c], "radius": float(r)} for c, r in balls]
        with open(args.balls_out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        print(f"wrote {args.balls_out}")
    return 0


def _cmd_degrade_uneven(args) -> int:
    cloud = read_ply(args.input)
    if args.region is not None:
        r = np.asarray(args.region, dtype=np.float64)
        region = (r[:3], r[3:])
    else:
        region = default_region(cloud.bbox(), args.seed)
    params = UnevenParams(
        region=region,
        r=args.r,
        lambda1_range=tuple(args.lambda1_range) if args.lambda1_range else None,
        lambda2_range=tuple(args.lambda2_range) if args.lambda2_range else None,
        seed=args.seed,
    )
    out = uneven_density(cloud, params)
    write_ply(out, args.out)
    print(f"wrote {args.out} ({len(out)} points)")
    return 0


def _cmd_degrade_density(args) -> int:
    surface = load_surface(args.surface)
    cfg = _apply_flags(ScanConfig(), args, _SCAN_FLAGS)
    clouds = density_variants(surface, cfg, _min_feature(args, surface))
    for res, cloud in zip((50, 100, 150), clouds):
        path = f"{args.out_prefix}_density_{res:03d}.ply"
        write_ply(cloud, path)
        print(f"wrote {path} ({len(cloud)} points)")
    return 0


def _cmd_eval(args) -> int:
    g = load_skeleton(args.ground_truth)
    s = load_skeleton(args.extracted)
    report = evaluate(g, s, spacing=args.spacing)
    text = report_json(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _pipeline_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    if args.size_class is not None:
        config.tree = TreeParams.preset(args.size_class, seed=config.tree.seed)
    _apply_flags(config.tree, args, _TREE_FLAGS)
    _apply_flags(config.fit, args, _FIT_FLAGS)
    _apply_flags(config.scan, args, _SCAN_FLAGS)
    if args.output_dir is not None:
        config.output_dir = args.output_dir
    if args.name is not None:
        config.name = args.name
    if args.master_seed is not None:
        config.master_seed = args.master_seed
    if args.sides is not None:
        config.sides = args.sides
    if args.cache_surface:
        config.cache_surface = True
    if args.dump_debug_obj:
        config.debug_obj = True
    if args.degradations is not None:
        config.degradations = [{"kind": k} for k in args.degradations]
    return config


def _cmd_pipeline(args) -> int:
    manifest = run_pipeline(_pipeline_config(args))
    out = Path(manifest.config["output_dir"])
    print(f"wrote {out / 'manifest.json'} ({len(manifest.files)} artifacts)")
    for warning in manifest.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def _cmd_batch(args) -> int:
    configs = [load_config(p) for p in args.configs]
    records, failed = batch(configs, workers=args.workers, index_path=args.index)
    for record in records:
        status = "ok" if record["ok"] else f"FAILED: {record['error']}"
        print(f"{record['name']}: {status}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treescan",
        description="Synthetic tree point clouds with exact ground-truth skeletons.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("skeleton", help="generate a ground-truth skeleton")
    _add_flags(p, _TREE_FLAGS)
    _range_flag(p, "--branch-angle-range")
    p.add_argument("--branches-per-node-range", type=int, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_skeleton)

    p = sub.add_parser("mesh", help="sweep a tube mesh along a skeleton")
    p.add_argument("--skeleton", required=True)
    p.add_argument("--sides", type=int, default=24)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mesh)

    p = sub.add_parser("fit", help="fit an implicit surface to a mesh")
    p.add_argument("--mesh", required=True)
    _add_flags(p, _FIT_FLAGS)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-debug-obj", default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("scan", help="virtual-scan a fitted surface")
    p.add_argument("--surface", required=True)
    _add_flags(p, _SCAN_FLAGS)
    p.add_argument("--skeleton", default=None, help="skeleton file for the march feature size")
    p.add_argument("--min-feature", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("degrade", help="degrade a point cloud")
    dsub = p.add_subparsers(dest="degrade_kind", required=True)

    d = dsub.add_parser("noise", help="Gaussian noise along normals")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--s", type=float, default=0.02)
    d.add_argument("--d", type=int, default=10)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=_cmd_degrade_noise)

    d = dsub.add_parser("occlude", help="remove occlusion-ball interiors")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--skeleton", default=None, help="bbox source; defaults to the cloud bbox")
    d.add_argument("--n", type=int, default=2)
    d.add_argument("--lambda", dest="lam", type=float, default=0.05)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.add_argument("--balls-out", default=None)
    d.set_defaults(func=_cmd_degrade_occlude)

    d = dsub.add_parser("uneven", help="locally uneven density by PCA insertion")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--r", type=float, default=0.05)
    d.add_argument("--region", type=float, nargs=6, default=None, metavar=("X0", "Y0", "Z0", "X1", "Y1", "Z1"))
    _range_flag(d, "--lambda1-range")
    _range_flag(d, "--lambda2-range")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=_cmd_degrade_uneven)

    d = dsub.add_parser("density", help="rescan at resolutions 50/100/150")
    d.add_argument("--surface", required=True)
    _add_flags(d, _SCAN_FLAGS)
    d.add_argument("--skeleton", default=None)
    d.add_argument("--min-feature", type=float, default=None)
    d.add_argument("--out-prefix", required=True)
    d.set_defaults(func=_cmd_degrade_density)

    p = sub.add_parser("eval", help="Hausdorff comparison of two skeletons")
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--extracted", required=True)
    p.add_argument("--spacing", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("pipeline", help="run the full generation pipeline")
    p.add_argument("--config", default=None)
    _add_flags(p, _TREE_FLAGS)
    _add_flags(p, _FIT_FLAGS)
    _add_flags(p, _SCAN_FLAGS)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--name", default=None)
    p.add_argument("--master-seed", type=int, default=None)
    p.add_argument("--sides", type=int, default=None)
    p.add_argument("--cache-surface", action="store_true")
    p.add_argument("--dump-debug-obj", action="store_true")
    p.add_argument(
        "--degradations",
        nargs="*",
        default=None,
        choices=["noise", "occlusion", "uneven", "density"],
        help="replace the config's degradation list",
    )
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("batch", help="run many pipeline configs")
    p.add_argument("--configs", nargs="+", required=True)
    p.add_argument("--workers", type=int, default=None, help="default: TREESCAN_WORKERS or CPU count")
    p.add_argument("--index", default=None)
    p.set_defaults(func=_cmd_batch)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
