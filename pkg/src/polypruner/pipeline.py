"""Daily-cycle orchestration: simulate, observe, track, plan, servo, cut.

One run covers ``total_days`` days. Every day the garden advances, an
overhead mask is produced (rendered from the simulator, or ingested and
fused with the location prior when likelihood files are supplied), and the
tracker updates the disk estimates. On prune days the planner picks
targets and points, the servo loop positions the gantry on the rendered
overhead image, and the chosen tool's cut is applied to the state and
mask. Failures of individual prune actions are logged and skipped; they
never abort the cycle.
"""

import csv
import json
import os
from dataclasses import dataclass, field

from . import actuation, planner, servoing, tracking
from .errors import (CatalogMismatchError, InvalidInputError,
                     NoPrunePointError, NoTargetTissueError,
                     PolyprunerError)
from .garden import (advance_day, area_equivalent_radius,
                     coverage_report, load_garden_config,
                     max_next_radius_value, render_mask, snapshot_records)
from .grids import read_grid_file, LikelihoodGrid, SegmentationMask
from .phenotype import apply_prior, argmax_label, build_occupancy_grid
from .planner import PlannerConfig, RadiusHistory
from .servoing import CameraConfig, GantryPose, ServoConfig
from .tracking import TrackerConfig

TRACKERS = ("bfs", "kmeans", "mixed")
TOOLS = ("none", "rotary", "shears")


@dataclass(frozen=True)
class CycleConfig:
    garden_config: str                  # path to the garden JSON
    out_dir: str
    total_days: int = 60
    prune_start_day: int = 30
    prune_interval_days: int = 5
    tool: str = "shears"                # none | rotary | shears
    tracker: str = "bfs"                # bfs | kmeans | mixed
    seed: int = 0                       # master seed; overrides the garden file
    max_prunes_per_day: int | None = None
    likelihood_dir: str | None = None   # ingest L grids instead of rendering
    heatmap_dir: str | None = None      # ingest heatmaps instead of synthesizing
    plots: bool = False                 # emit SVG coverage/diversity charts
    tracker_cfg: TrackerConfig = field(default_factory=TrackerConfig)
    planner_cfg: PlannerConfig = field(default_factory=PlannerConfig)
    servo_cfg: ServoConfig | None = None
    camera_cfg: CameraConfig | None = None
    actuation_cfg: actuation.ActuationConfig = field(
        default_factory=actuation.ActuationConfig)

    def __post_init__(self):
        if self.tool not in TOOLS:
            raise InvalidInputError(f"tool must be one of {TOOLS}")
        if self.tracker not in TRACKERS:
            raise InvalidInputError(f"tracker must be one of {TRACKERS}")
        if self.total_days < 1:
            raise InvalidInputError("total_days must be >= 1")
        if self.prune_start_day > self.total_days:
            raise InvalidInputError("prune_start_day must be <= total_days")
        if self.prune_interval_days < 1:
            raise InvalidInputError("prune_interval_days must be >= 1")
        if self.seed < 0:
            raise InvalidInputError("seed must be >= 0")


@dataclass(frozen=True)
class DailyRecord:
    day: int
    total_coverage: float
    diversity: float
    per_type_coverage: dict[int, float]
    prunes_attempted: int
    prunes_done: int
    servo_failures: int


@dataclass(frozen=True)
class CycleSummary:
    label: str
    catalog_names: tuple[str, ...]
    days: tuple[int, ...]
    coverage_series: tuple[float, ...]
    diversity_series: tuple[float, ...]
    final_normalized: dict[str, float]    # type name -> c_i * (R/R_i)^2 on the last day
    final_coverage: float
    final_diversity: float
    prunes_attempted: int
    prunes_done: int
    servo_failures: int


def prune_schedule(cfg: CycleConfig) -> list[int]:
    """Days on which pruning runs: start day plus every interval after."""
    return list(range(cfg.prune_start_day, cfg.total_days + 1,
                      cfg.prune_interval_days))


def _day_seed(master: int, day: int) -> int:
    return master * 100003 + day


def _observe(state, catalog, ppc, day_seed, cfg) -> SegmentationMask:
    """Overhead mask for the day: fused likelihood files when provided,
    otherwise a rendered view of the simulator state."""
    if cfg.likelihood_dir:
        path = os.path.join(cfg.likelihood_dir, f"day_{state.day:03d}.plg")
        if os.path.exists(path):
            grid = LikelihoodGrid(read_grid_file(path), px_per_cm=ppc)
            # R_k is the day's maximum-radius estimate, not the type ceiling
            placements = [
                (p.center, p.type_id,
                 max_next_radius_value(p.radius, catalog.params(p.type_id)))
                for p in state.plants]
            prior = build_occupancy_grid(
                placements, grid.values.shape[:2], ppc,
                n_channels=catalog.i_total + 1)
            return argmax_label(apply_prior(grid, prior))
    return render_mask(state, ppc, seed=day_seed)


def _heatmap_for(state, mask, day_seed, cfg):
    if cfg.heatmap_dir:
        path = os.path.join(cfg.heatmap_dir, f"day_{state.day:03d}.plg")
        if os.path.exists(path):
            values = read_grid_file(path)[:, :, 0].astype(float)
            peak = values.max()
            if peak > 0:
                values = values / peak
            return planner.PruneHeatmap(values, day=state.day,
                                        px_per_cm=mask.px_per_cm)
    return planner.synthetic_heatmap(state, mask, seed=day_seed)


def run_cycle(cfg: CycleConfig) -> CycleSummary:
    """Run one full garden cycle and write all logs to ``cfg.out_dir``."""
    state, catalog, ppc, _garden_seed = load_garden_config(cfg.garden_config)
    os.makedirs(cfg.out_dir, exist_ok=True)
    servo_cfg = cfg.servo_cfg or ServoConfig()
    camera_cfg = cfg.camera_cfg or CameraConfig()

    disks = tracking.initial_disks(state)
    history = RadiusHistory()
    history.record(disks)
    schedule = set(prune_schedule(cfg))

    daily: list[DailyRecord] = []
    disk_sets = [disks]
    snapshots = snapshot_records(state)
    prune_rows: list[dict] = []
    tool_rows: list[dict] = []
    servo_rows: list[tuple[int, servoing.ServoTraceRow]] = []

    for _ in range(cfg.total_days):
        state = advance_day(state, catalog)
        day_seed = _day_seed(cfg.seed, state.day)
        mask = _observe(state, catalog, ppc, day_seed, cfg)

        if cfg.tracker == "bfs":
            disks = tracking.bfs_track(mask, disks, state, catalog,
                                       cfg.tracker_cfg)
        elif cfg.tracker == "kmeans":
            disks = tracking.kmeans_track(mask, state, cfg.tracker_cfg)
        else:
            disks = tracking.mixed_track(mask, disks, state, catalog,
                                         cfg.tracker_cfg)
        history.record(disks)
        disk_sets.append(disks)

        attempted = done = servo_failures = 0
        if state.day in schedule and cfg.tool != "none":
            report = coverage_report(mask, catalog)
            targets = planner.select_plants_to_prune(
                report, disks, catalog, cfg.planner_cfg)
            if cfg.max_prunes_per_day is not None:
                targets = targets[:cfg.max_prunes_per_day]
            if targets:
                global_image = servoing.render_overhead_image(
                    mask, seed=day_seed)
                camera = servoing.SimulatedCamera(global_image, ppc,
                                                  camera_cfg)
                heatmap = _heatmap_for(state, mask, day_seed, cfg)
                candidates = planner.extract_prune_points(
                    heatmap, mask, disks, cfg.planner_cfg)
                for target in targets:
                    attempted += 1
                    ok, state, mask, rows = _prune_one(
                        state, mask, disks, history, candidates, camera,
                        global_image, target, catalog, cfg, servo_cfg)
                    prune_rows.extend(rows["prune"])
                    tool_rows.extend(rows["tool"])
                    servo_rows.extend(rows["servo"])
                    if ok:
                        done += 1
                    elif rows["servo_failed"]:
                        servo_failures += 1

        report = coverage_report(mask, catalog)
        final_report = report
        daily.append(DailyRecord(
            day=state.day, total_coverage=report.total_coverage,
            diversity=report.diversity,
            per_type_coverage=report.per_type_coverage,
            prunes_attempted=attempted, prunes_done=done,
            servo_failures=servo_failures))
        snapshots.extend(snapshot_records(state))

    garden_name = os.path.splitext(os.path.basename(cfg.garden_config))[0]
    summary = CycleSummary(
        label=f"{garden_name}-{cfg.tool}-seed{cfg.seed}",
        catalog_names=tuple(t.name for t in catalog.types),
        days=tuple(r.day for r in daily),
        coverage_series=tuple(r.total_coverage for r in daily),
        diversity_series=tuple(r.diversity for r in daily),
        final_normalized={
            t.name: final_report.normalized_vector[t.type_id]
            for t in catalog.types},
        final_coverage=daily[-1].total_coverage if daily else 0.0,
        final_diversity=daily[-1].diversity if daily else 0.0,
        prunes_attempted=sum(r.prunes_attempted for r in daily),
        prunes_done=sum(r.prunes_done for r in daily),
        servo_failures=sum(r.servo_failures for r in daily),
    )
    _write_outputs(cfg, catalog, daily, disk_sets, snapshots, prune_rows,
                   tool_rows, servo_rows, summary)
    return summary


def _prune_one(state, mask, disks, history, candidates, camera, global_image,
               target, catalog, cfg, servo_cfg):
    """One prune action; returns (success, state, mask, log rows)."""
    rows = {"prune": [], "tool": [], "servo": [], "servo_failed": False}
    tdisk = disks.by_index[target]
    neighbor = planner.strongest_decay_neighbor(
        disks, history, target, cfg.planner_cfg
    ) if history.spans(disks.day) else None
    method = "learned"
    try:
        point = planner.select_prune_point(
            candidates, disks, history, target, cfg.planner_cfg).position
    except (NoPrunePointError, InvalidInputError):
        method = "baseline"
        try:
            point = planner.baseline_prune_point(mask, tdisk)
        except NoPrunePointError:
            rows["prune"].append(_prune_row(disks.day, target, None,
                                            neighbor, "skipped_no_point"))
            return False, state, mask, rows

    start = GantryPose(tdisk.center[0], tdisk.center[1],
                       camera.cfg.ref_height_cm)
    outcome = servoing.servo_loop(camera, global_image, start, point,
                                  servo_cfg)
    rows["servo"].extend((disks.day, r) for r in outcome.trace)
    if not outcome.converged:
        rows["servo_failed"] = True
        rows["prune"].append(_prune_row(
            disks.day, target, point, neighbor,
            f"skipped_servo_{outcome.status.value}"))
        return False, state, mask, rows

    cut_at = (outcome.pose.x, outcome.pose.y)
    depth = actuation.read_depth(state, cut_at, cfg.actuation_cfg)
    if cfg.tool == "shears":
        command = actuation.shear_command(tdisk.center, point, depth,
                                          cfg.actuation_cfg)
    else:
        command = actuation.rotary_command(tdisk.center, point, depth,
                                           cfg.actuation_cfg)
    try:
        state, mask, effect = actuation.apply_cut(
            state, mask, cut_at, command.tool, cfg.actuation_cfg,
            target_index=target)
    except (NoTargetTissueError, PolyprunerError):
        rows["prune"].append(_prune_row(disks.day, target, point, neighbor,
                                        "skipped_no_tissue"))
        return False, state, mask, rows

    # growth response: the canopy re-renders as a disk with the area that
    # actually remains, so removed leaves stay removed
    state = state.with_radius(
        target, min(effect.new_radius,
                    area_equivalent_radius(effect.remaining_area)))
    rows["prune"].append(_prune_row(disks.day, target, point, neighbor,
                                    method))
    rows["tool"].append({
        "day": disks.day, "plant_index": target,
        "tool": command.tool.value,
        "cut_angle_deg": "" if command.cut_angle is None
        else f"{command.cut_angle:.2f}",
        "depth_z_cm": f"{command.depth_z:.2f}",
        "removed_area_cm2": f"{effect.removed_area:.2f}",
        "collateral_count": len(effect.collateral)})
    return True, state, mask, rows


def _prune_row(day, target, point, neighbor, method):
    return {"day": day, "plant_index": target,
            "point_x_cm": "" if point is None else f"{point[0]:.4f}",
            "point_y_cm": "" if point is None else f"{point[1]:.4f}",
            "chosen_neighbor": "" if neighbor is None else neighbor[0],
            "decay_rate_cm_per_day": "" if neighbor is None
            else f"{neighbor[1]:.4f}",
            "method": method}


# ---------------------------------------------------------------------------
# Outputs
# ---------------------------------------------------------------------------

def _write_outputs(cfg, catalog, daily, disk_sets, snapshots, prune_rows,
                   tool_rows, servo_rows, summary):
    out = cfg.out_dir
    with open(os.path.join(out, "daily.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        type_cols = [f"coverage_{t.name}" for t in catalog.types]
        writer.writerow(["day", "total_coverage", "diversity",
                         *type_cols, "prunes_attempted", "prunes_done",
                         "servo_failures"])
        for r in daily:
            writer.writerow([
                r.day, f"{r.total_coverage:.6f}", f"{r.diversity:.6f}",
                *(f"{r.per_type_coverage[t.type_id]:.6f}"
                  for t in catalog.types),
                r.prunes_attempted, r.prunes_done, r.servo_failures])
    with open(os.path.join(out, "snapshots.jsonl"), "w") as f:
        for rec in snapshots:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    tracking.write_disks_csv(os.path.join(out, "disks.csv"), disk_sets)
    planner.write_prune_log_csv(os.path.join(out, "prunes.csv"), prune_rows)
    actuation.write_tool_log_csv(os.path.join(out, "tool_commands.csv"),
                                 tool_rows)
    servoing.write_servo_trace_csv(os.path.join(out, "servo_trace.csv"),
                                   servo_rows)
    write_summary_json(os.path.join(out, "summary.json"), summary)
    if cfg.plots:
        _write_svg_chart(os.path.join(out, "coverage.svg"), summary.days,
                         summary.coverage_series, "total coverage")
        _write_svg_chart(os.path.join(out, "diversity.svg"), summary.days,
                         summary.diversity_series, "normalized diversity")


def write_summary_json(path, summary: CycleSummary) -> None:
    with open(path, "w") as f:
        json.dump({
            "label": summary.label,
            "catalog_names": list(summary.catalog_names),
            "days": list(summary.days),
            "coverage_series": [round(v, 6) for v in summary.coverage_series],
            "diversity_series": [round(v, 6) for v in summary.diversity_series],
            "final_normalized": {k: round(v, 6) for k, v
                                 in summary.final_normalized.items()},
            "final_coverage": round(summary.final_coverage, 6),
            "final_diversity": round(summary.final_diversity, 6),
            "prunes_attempted": summary.prunes_attempted,
            "prunes_done": summary.prunes_done,
            "servo_failures": summary.servo_failures,
        }, f, indent=2, sort_keys=True)
        f.write("\n")


def read_summary_json(path) -> CycleSummary:
    with open(path) as f:
        d = json.load(f)
    return CycleSummary(
        label=d["label"], catalog_names=tuple(d["catalog_names"]),
        days=tuple(d["days"]),
        coverage_series=tuple(d["coverage_series"]),
        diversity_series=tuple(d["diversity_series"]),
        final_normalized=dict(d["final_normalized"]),
        final_coverage=d["final_coverage"],
        final_diversity=d["final_diversity"],
        prunes_attempted=d["prunes_attempted"],
        prunes_done=d["prunes_done"],
        servo_failures=d["servo_failures"])


# ---------------------------------------------------------------------------
# Cycle comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonRow:
    name: str
    value_a: float
    value_b: float
    percent_change: float | None    # None when value_a is 0 (N/A)


@dataclass(frozen=True)
class CycleComparison:
    rows: tuple[ComparisonRow, ...]              # per-type + diversity + coverage
    day_deltas: tuple[tuple[int, float, float], ...]   # (day, d_coverage, d_diversity)

    def format_table(self) -> str:
        lines = [f"{'metric':<16}{'A':>10}{'B':>10}{'% change':>12}"]
        for r in self.rows:
            pct = "N/A" if r.percent_change is None \
                else f"{r.percent_change:.2f}%"
            lines.append(f"{r.name:<16}{r.value_a:>10.3f}{r.value_b:>10.3f}"
                         f"{pct:>12}")
        return "\n".join(lines)


def percent_change(a: float, b: float) -> float | None:
    """(b - a) / a in percent; None when a is 0."""
    if a == 0:
        return None
    return (b - a) / a * 100.0


def compare_cycles(a: CycleSummary, b: CycleSummary) -> CycleComparison:
    """Per-day coverage/diversity deltas and final-day percent changes."""
    if a.catalog_names != b.catalog_names:
        raise CatalogMismatchError("summaries use different catalogs")
    rows = [ComparisonRow(name, a.final_normalized[name],
                          b.final_normalized[name],
                          percent_change(a.final_normalized[name],
                                         b.final_normalized[name]))
            for name in a.catalog_names]
    rows.append(ComparisonRow("DIVERSITY", a.final_diversity,
                              b.final_diversity,
                              percent_change(a.final_diversity,
                                             b.final_diversity)))
    rows.append(ComparisonRow("COVERAGE", a.final_coverage, b.final_coverage,
                              percent_change(a.final_coverage,
                                             b.final_coverage)))
    b_days = set(b.days)
    common = [d for d in a.days if d in b_days]
    ai = {d: i for i, d in enumerate(a.days)}
    bi = {d: i for i, d in enumerate(b.days)}
    deltas = tuple(
        (d, b.coverage_series[bi[d]] - a.coverage_series[ai[d]],
         b.diversity_series[bi[d]] - a.diversity_series[ai[d]])
        for d in common)
    return CycleComparison(tuple(rows), deltas)


def write_comparison_csv(path, comparison: CycleComparison) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "value_a", "value_b", "percent_change"])
        for r in comparison.rows:
            writer.writerow([r.name, f"{r.value_a:.6f}", f"{r.value_b:.6f}",
                             "N/A" if r.percent_change is None
                             else f"{r.percent_change:.2f}"])
        writer.writerow([])
        writer.writerow(["day", "coverage_delta", "diversity_delta"])
        for day, dc, dd in comparison.day_deltas:
            writer.writerow([day, f"{dc:.6f}", f"{dd:.6f}"])


# ---------------------------------------------------------------------------
# Minimal SVG line chart (deterministic output, no plotting dependency)
# ---------------------------------------------------------------------------

def _write_svg_chart(path, days, values, title,
                     width=640, height=360, margin=48):
    if not days:
        return
    vmax = max(max(values), 1e-9)
    xs = [margin + (d - days[0]) / max(1, days[-1] - days[0])
          * (width - 2 * margin) for d in days]
    ys = [height - margin - v / vmax * (height - 2 * margin) for v in values]
    points = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(xs, ys))
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" '
        f'font-size="14">{title}</text>\n'
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>\n'
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>\n'
        f'<text x="{margin}" y="{height - margin + 16}" font-size="10">'
        f'day {days[0]}</text>\n'
        f'<text x="{width - margin:.0f}" y="{height - margin + 16}" '
        f'text-anchor="end" font-size="10">day {days[-1]}</text>\n'
        f'<text x="{margin - 4}" y="{margin}" text-anchor="end" '
        f'font-size="10">{vmax:.3f}</text>\n'
        f'<polyline fill="none" stroke="#2a6f4e" stroke-width="1.5" '
        f'points="{points}"/>\n'
        f'</svg>\n')
    with open(path, "w") as f:
        f.write(svg)
