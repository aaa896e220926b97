"""Command-line entry point: plan regrasps, export workspaces, check plans.

Summary output on stdout is stable ``key=value`` lines; everything else
(logging, tracebacks, usage) goes to stderr. Exit codes: 0 success /
goal reached, 2 finished without reaching the goal (or hard validation
failures), 3 input error, 4 internal numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import NumericEvalError, RegraspError, SceneLoadError
from .planner import STATUS_REACHED, plan_regrasp, validate_plan
from .scene_io import load_hand, load_plan, load_scene, save_obj_mesh, save_plan, scene_params_with, write_metrics_csv
from .workspace import estimate_workspace

EXIT_OK = 0
EXIT_NOT_REACHED = 2
EXIT_INPUT = 3
EXIT_NUMERIC = 4

log = logging.getLogger("regrasp")


def _setup_logging():
    level = os.environ.get("REGRASP_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        stream=sys.stderr, level=levels.get(level, logging.INFO), format="%(levelname)s %(name)s: %(message)s"
    )


def _build_parser():
    parser = argparse.ArgumentParser(prog="regrasp", description="In-hand regrasp planning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan a regrasp for a scene")
    p.add_argument("--scene", required=True, help="scene JSON file")
    p.add_argument("--variant", required=True, choices=["sd", "svd"], help="object reposing goal term")
    p.add_argument("--out", required=True, help="output plan JSON file")
    p.add_argument("--metrics", required=True, help="output per-iteration metrics CSV")
    p.add_argument("--max-iters", type=int, default=None, help="override the iteration cap (1..50)")
    p.add_argument("--seed-config", default=None, help="JSON file with replacement initial joint angles")

    w = sub.add_parser("workspace", help="export a fingertip reachable-workspace hull as OBJ")
    w.add_argument("--hand", required=True, help="hand JSON file")
    w.add_argument("--finger", required=True, type=int, help="finger index")
    w.add_argument("--out", required=True, help="output OBJ file")
    w.add_argument("--voxel", type=float, default=5.0, help="voxel size in millimeters (default 5)")
    w.add_argument("--samples", type=int, default=9, help="grid samples per joint (default 9)")

    c = sub.add_parser("check", help="validate a plan against its scene")
    c.add_argument("--plan", required=True, help="plan JSON file")
    c.add_argument("--scene", required=True, help="scene JSON file")
    c.add_argument("--strict", action="store_true", help="treat warnings as failures")
    return parser


def _cmd_plan(args) -> int:
    scene = load_scene(args.scene)
    params = scene_params_with(scene, variant=args.variant, max_iterations=args.max_iters)

    if args.seed_config is not None:
        import json

        import numpy as np

        from .kinematics import JointConfig

        with open(args.seed_config) as fh:
            raw = json.load(fh)
        if not isinstance(raw, list) or len(raw) != scene.hand.num_fingers:
            raise SceneLoadError(f"{args.seed_config}: need one angle list per finger")
        scene.initial_joint_config = JointConfig(tuple(np.asarray(a, dtype=float) for a in raw))
        if not scene.initial_joint_config.within_limits(scene.hand, slack=1e-12):
            raise SceneLoadError(f"{args.seed_config}: an angle violates its joint limits")

    log.info("planning scene '%s' with variant %s", scene.name, args.variant)
    plan = plan_regrasp(scene, params=params)
    save_plan(plan, args.out, params=params)
    rows = write_metrics_csv(plan, scene.hand.num_fingers, args.metrics)
    final = plan.steps[-1]
    print(f"scene={scene.name}")
    print(f"variant={plan.variant}")
    print(f"status={plan.status}")
    print(f"iterations={plan.iterations}")
    print(f"max_error_mm={final.max_error * 1e3:.3f}")
    print(f"avg_error_mm={final.avg_error * 1e3:.3f}")
    print(f"wall_time_s={plan.wall_time:.2f}")
    print(f"plan={args.out}")
    print(f"metrics={args.metrics} rows={rows}")
    return EXIT_OK if plan.status == STATUS_REACHED else EXIT_NOT_REACHED


def _cmd_workspace(args) -> int:
    if args.voxel <= 0:
        print("error: --voxel must be > 0 mm", file=sys.stderr)
        return EXIT_INPUT
    if args.samples < 2:
        print("error: --samples must be >= 2", file=sys.stderr)
        return EXIT_INPUT
    hand = load_hand(args.hand)
    if not (0 <= args.finger < hand.num_fingers):
        print(f"error: finger index {args.finger} out of range (hand has {hand.num_fingers})", file=sys.stderr)
        return EXIT_INPUT
    ws = estimate_workspace(hand, args.finger, voxel_size=args.voxel * 1e-3, samples_per_joint=args.samples)
    save_obj_mesh(ws.hull, args.out, comment=f"reachable workspace, finger {args.finger} of {hand.name}")
    print(f"finger={args.finger}")
    print(f"samples={ws.sample_count}")
    print(f"hull_vertices={len(ws.hull.vertices)}")
    print(f"hull_faces={len(ws.hull.faces)}")
    print(f"out={args.out}")
    return EXIT_OK


def _cmd_check(args) -> int:
    plan = load_plan(args.plan)
    scene = load_scene(args.scene)
    report = validate_plan(plan, scene)
    for v in report.violations:
        print(f"violation step={v.step} kind={v.kind}: {v.message}")
    for w in report.warnings:
        print(f"warning step={w.step} kind={w.kind}: {w.message}")
    print(f"violations={len(report.violations)}")
    print(f"warnings={len(report.warnings)}")
    failed = bool(report.violations) or (args.strict and report.warnings)
    print(f"check={'fail' if failed else 'pass'}")
    return EXIT_NOT_REACHED if failed else EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 for --help, 2 for usage errors; map the latter
        # onto the input-error code
        return EXIT_OK if e.code == 0 else EXIT_INPUT

    try:
        if args.command == "plan":
            return _cmd_plan(args)
        if args.command == "workspace":
            return _cmd_workspace(args)
        return _cmd_check(args)
    except (SceneLoadError, RegraspError) as e:
        if isinstance(e, NumericEvalError):
            print(f"numeric failure: {e}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
