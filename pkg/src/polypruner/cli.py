"""Command-line interface.

Subcommands: run (full cycle), track (mask -> disks), plan (disks +
heatmap -> prune point), servo (global image + target -> trace), metrics
(mask -> coverage/diversity), compare (two run summaries). Every flag can
be defaulted through an environment variable named POLYPRUNER_<FLAG>.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import pipeline, planner, servoing, tracking
from .errors import PolyprunerError
from .garden import coverage_report, load_garden_config
from .grids import read_grid_file, read_mask_image
from .servoing import CameraConfig, GantryPose, ServoConfig
from .tracking import TrackerConfig

ENV_PREFIX = "POLYPRUNER_"


def _env(name: str, default):
    return os.environ.get(ENV_PREFIX + name.upper(), default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polypruner",
        description="Polyculture garden simulation and autonomous pruning")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a full garden cycle")
    config_default = _env("config", None)
    run.add_argument("--config", default=config_default,
                     required=config_default is None)
    run.add_argument("--out", default=_env("out", "cycle_out"))
    run.add_argument("--days", type=int, default=int(_env("days", 60)))
    run.add_argument("--seed", type=int, default=int(_env("seed", 0)))
    run.add_argument("--tool", default=_env("tool", "shears"),
                     choices=pipeline.TOOLS)
    run.add_argument("--tracker", default=_env("tracker", "bfs"),
                     choices=pipeline.TRACKERS)
    run.add_argument("--prune-start", type=int,
                     default=int(_env("prune_start", 30)))
    run.add_argument("--prune-interval", type=int,
                     default=int(_env("prune_interval", 5)))
    run.add_argument("--likelihood-dir", default=_env("likelihood_dir", None))
    run.add_argument("--heatmap-dir", default=_env("heatmap_dir", None))
    run.add_argument("--plots", action="store_true")

    track = sub.add_parser("track", help="estimate bounding disks from a mask")
    track.add_argument("--config", required=True)
    track.add_argument("--mask", required=True)
    track.add_argument("--tracker", default="kmeans",
                       choices=pipeline.TRACKERS)
    track.add_argument("--prev", help="previous-day disks CSV (bfs/mixed)")
    track.add_argument("--day", type=int, default=0)
    track.add_argument("--out", default="-")

    plan = sub.add_parser("plan", help="select a prune point for a plant")
    plan.add_argument("--config", required=True)
    plan.add_argument("--mask", required=True)
    plan.add_argument("--heatmap", help="PLG1 heatmap; synthetic when omitted")
    plan.add_argument("--disks", required=True, help="disks CSV for the day")
    plan.add_argument("--day", type=int,
                      help="day to read from the CSV; latest when omitted")
    plan.add_argument("--target", type=int, required=True)
    plan.add_argument("--seed", type=int, default=0)

    servo = sub.add_parser("servo", help="servo to a target on a global image")
    servo.add_argument("--image", required=True, help="grayscale global image")
    servo.add_argument("--ppc", type=float, default=2.0, help="px per cm")
    servo.add_argument("--start", required=True, help="x,y cm")
    servo.add_argument("--target", required=True, help="x,y cm")
    servo.add_argument("--search-radius", type=float, default=16.0)
    servo.add_argument("--out", default="-")

    metrics = sub.add_parser("metrics", help="coverage/diversity of a mask")
    metrics.add_argument("--config", required=True)
    metrics.add_argument("--mask", required=True)

    compare = sub.add_parser("compare", help="compare two run summaries")
    compare.add_argument("summary_a")
    compare.add_argument("summary_b")
    compare.add_argument("--out", default="-")
    return parser


def _load_disks_csv(path, day=None):
    """Disks for one day from a disks CSV; latest day when unspecified."""
    import csv
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise PolyprunerError(f"no disk rows in {path}")
    if day is None:
        day = max(int(r["day"]) for r in rows)
    disks = tuple(
        tracking.BoundingDisk(
            int(r["plant_index"]), int(r["type_id"]),
            (float(r["cx_cm"]), float(r["cy_cm"])),
            float(r["r_cm"]), r.get("tracker", "csv"))
        for r in rows if int(r["day"]) == day)
    if not disks:
        raise PolyprunerError(f"no disk rows for day {day} in {path}")
    return tracking.DiskSet(day, disks)


def cmd_run(args) -> int:
    cfg = pipeline.CycleConfig(
        garden_config=args.config, out_dir=args.out, total_days=args.days,
        prune_start_day=args.prune_start,
        prune_interval_days=args.prune_interval, tool=args.tool,
        tracker=args.tracker, seed=args.seed,
        likelihood_dir=args.likelihood_dir, heatmap_dir=args.heatmap_dir,
        plots=args.plots)
    summary = pipeline.run_cycle(cfg)
    print(f"cycle complete: {cfg.total_days} days, "
          f"{summary.prunes_done}/{summary.prunes_attempted} prunes, "
          f"final coverage {summary.final_coverage:.3f}, "
          f"final diversity {summary.final_diversity:.3f}")
    print(f"outputs in {cfg.out_dir}")
    return 0


def cmd_track(args) -> int:
    import dataclasses
    state, catalog, ppc, _ = load_garden_config(args.config)
    mask = read_mask_image(args.mask, px_per_cm=ppc)
    tcfg = TrackerConfig()
    state = dataclasses.replace(state, day=args.day)
    prev = _load_disks_csv(args.prev, args.day - 1) if args.prev \
        else tracking.initial_disks(state)
    if args.tracker == "kmeans":
        disks = tracking.kmeans_track(mask, state, tcfg)
    elif args.tracker == "bfs":
        disks = tracking.bfs_track(mask, prev, state, catalog, tcfg)
    else:
        disks = tracking.mixed_track(mask, prev, state, catalog, tcfg)
    out = sys.stdout if args.out == "-" else open(args.out, "w")
    try:
        out.write("day,plant_index,type_id,cx_cm,cy_cm,r_cm,tracker\n")
        for d in disks.disks:
            out.write(f"{disks.day},{d.plant_index},{d.type_id},"
                      f"{d.center[0]:.4f},{d.center[1]:.4f},"
                      f"{d.radius:.4f},{d.tracker}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_plan(args) -> int:
    import dataclasses
    state, catalog, ppc, _ = load_garden_config(args.config)
    mask = read_mask_image(args.mask, px_per_cm=ppc)
    disks = _load_disks_csv(args.disks, args.day)
    if args.target not in disks.by_index:
        raise PolyprunerError(f"no disk for plant {args.target} on day "
                              f"{disks.day}")
    pcfg = planner.PlannerConfig()
    if args.heatmap:
        values = read_grid_file(args.heatmap)[:, :, 0].astype(float)
        peak = values.max()
        heatmap = planner.PruneHeatmap(
            values / peak if peak > 0 else values, px_per_cm=ppc)
    else:
        # synthesize from the tracked disks, not the day-0 seed state
        by_index = disks.by_index
        plants = tuple(
            dataclasses.replace(p, center=by_index[p.plant_index].center,
                                radius=by_index[p.plant_index].radius)
            if p.plant_index in by_index else p
            for p in state.plants)
        tracked = dataclasses.replace(state, day=disks.day, plants=plants)
        heatmap = planner.synthetic_heatmap(tracked, mask, seed=args.seed)
    candidates = planner.extract_prune_points(heatmap, mask, disks, pcfg)
    mine = [c for c in candidates if c.plant_index == args.target]
    if not mine:
        point = planner.baseline_prune_point(mask,
                                             disks.by_index[args.target])
        print(json.dumps({"plant_index": args.target, "method": "baseline",
                          "x_cm": round(point[0], 4),
                          "y_cm": round(point[1], 4)}))
        return 0
    best = max(mine, key=lambda c: c.confidence)
    print(json.dumps({"plant_index": args.target, "method": "learned",
                      "x_cm": round(best.position[0], 4),
                      "y_cm": round(best.position[1], 4),
                      "confidence": round(best.confidence, 4),
                      "n_candidates": len(mine)}))
    return 0


def cmd_servo(args) -> int:
    from PIL import Image
    img = np.asarray(Image.open(args.image).convert("L"), dtype=float) / 255.0
    sx, sy = (float(v) for v in args.start.split(","))
    tx, ty = (float(v) for v in args.target.split(","))
    cam = servoing.SimulatedCamera(img, args.ppc, CameraConfig())
    cfg = ServoConfig(search_radius=args.search_radius)
    outcome = servoing.servo_loop(cam, img, GantryPose(sx, sy, 40.0),
                                  (tx, ty), cfg)
    out = sys.stdout if args.out == "-" else open(args.out, "w")
    try:
        out.write("iteration,pose_x,pose_y,localized_x,localized_y,"
                  "scale,score,step_len_cm\n")
        for r in outcome.trace:
            out.write(f"{r.iteration},{r.pose_x:.4f},{r.pose_y:.4f},"
                      f"{r.localized_x:.4f},{r.localized_y:.4f},"
                      f"{r.scale:.2f},{r.score:.4f},{r.step_len_cm:.4f}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"servo outcome: {outcome.status.value} "
          f"after {outcome.iterations} iterations", file=sys.stderr)
    return 0 if outcome.converged else 1


def cmd_metrics(args) -> int:
    _, catalog, ppc, _ = load_garden_config(args.config)
    mask = read_mask_image(args.mask, px_per_cm=ppc)
    report = coverage_report(mask, catalog)
    print(json.dumps({
        "total_coverage": round(report.total_coverage, 6),
        "diversity": round(report.diversity, 6),
        "per_type_coverage": {
            catalog.params(tid).name: round(c, 6)
            for tid, c in report.per_type_coverage.items()},
        "normalized_vector": {
            catalog.params(tid).name: round(v, 6)
            for tid, v in report.normalized_vector.items()},
    }, indent=2, sort_keys=True))
    return 0


def cmd_compare(args) -> int:
    a = pipeline.read_summary_json(args.summary_a)
    b = pipeline.read_summary_json(args.summary_b)
    comparison = pipeline.compare_cycles(a, b)
    if args.out == "-":
        print(comparison.format_table())
    else:
        pipeline.write_comparison_csv(args.out, comparison)
        print(f"comparison written to {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "track": cmd_track, "plan": cmd_plan,
                "servo": cmd_servo, "metrics": cmd_metrics,
                "compare": cmd_compare}
    try:
        return handlers[args.command](args)
    except PolyprunerError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
