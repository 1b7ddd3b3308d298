"""Tool geometry for the two pruning tools and simulated cut effects.

Cut orientation is the perpendicular of the center-to-prune-point vector.
The rotary pruners are fixed to the bed axes, so the axis closest to that
perpendicular is mounted; the shears rotate freely and take the angle
directly. Cuts erase mask pixels: the rotary head clears everything in its
radius (collateral damage included), the shears only the target's tissue.
"""

import csv
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (DegenerateGeometryError, InvalidInputError,
                     NoTargetTissueError, OutOfBoundsError)
from .garden import GardenState
from .grids import SegmentationMask, disk_bbox, pixel_centers_cm
from .tracking import smallest_enclosing_disk


class Tool(Enum):
    ROTARY_X = "rotary_x"
    ROTARY_Y = "rotary_y"
    SHEARS = "shears"


@dataclass(frozen=True)
class ToolCommand:
    tool: Tool
    depth_z: float                       # cm descend target
    cut_angle: float | None = None       # degrees in [0, 180); shears only
    tilt: str | None = None              # shears gimbal: horizontal/vertical
    closure_sequence: tuple[str, ...] = ()   # shears actuation states


@dataclass(frozen=True)
class DepthReading:
    distance_to_canopy: float            # cm from the sensor plane


@dataclass(frozen=True)
class CutEffect:
    removed_area: float                  # cm^2 erased from the mask
    new_radius: float                    # target plant, post-cut
    collateral: tuple[tuple[int, float], ...]   # (plant_index, removed cm^2)
    remaining_area: float = 0.0          # target tissue left, cm^2


@dataclass(frozen=True)
class ActuationConfig:
    rotary_cut_radius: float = 4.0       # cm, aggressive, damages neighbors
    shears_cut_radius: float = 2.0       # cm, clean, target only
    depth_overshoot: float = 5.0         # cm beyond the sensed distance
    sensor_height: float = 40.0          # cm, IR sensor above soil
    canopy_height_factor: float = 0.5    # plant height as fraction of radius
    remove_distal_leaf: bool = True      # cuts detach tissue beyond the cut


def cut_vector(center: tuple[float, float],
               prune_point: tuple[float, float]) -> float:
    """Cut direction in degrees [0, 180): perpendicular to the vector from
    the plant center to the prune point."""
    dx = prune_point[0] - center[0]
    dy = prune_point[1] - center[1]
    if dx == 0 and dy == 0:
        raise DegenerateGeometryError("prune point coincides with center")
    return (math.degrees(math.atan2(dy, dx)) + 90.0) % 180.0


def choose_rotary_tool(cut_angle: float) -> Tool:
    """Rotary head whose fixed axis is closest to the cut direction.

    Exact 45-degree ties go to the X head.
    """
    if not 0 <= cut_angle < 180:
        raise InvalidInputError("cut_angle must be in [0, 180)")
    dist_x = min(cut_angle, 180.0 - cut_angle)
    dist_y = abs(90.0 - cut_angle)
    return Tool.ROTARY_X if dist_x <= dist_y else Tool.ROTARY_Y


def _descend_target(depth: DepthReading, cfg: ActuationConfig) -> float:
    # overshoot to guarantee the cut; travel bottoms out at soil level
    return min(depth.distance_to_canopy + cfg.depth_overshoot,
               cfg.sensor_height)


def shear_command(center: tuple[float, float],
                  prune_point: tuple[float, float], depth: DepthReading,
                  cfg: ActuationConfig | None = None) -> ToolCommand:
    """Shears command: rotate to the cut angle, tilt vertical, descend past
    the sensed canopy distance, close, reopen. Rest state is horizontal-open."""
    cfg = cfg or ActuationConfig()
    return ToolCommand(
        tool=Tool.SHEARS,
        depth_z=_descend_target(depth, cfg),
        cut_angle=cut_vector(center, prune_point),
        tilt="vertical",
        closure_sequence=("open", "closed", "open"),
    )


def rotary_command(center: tuple[float, float],
                   prune_point: tuple[float, float], depth: DepthReading,
                   cfg: ActuationConfig | None = None) -> ToolCommand:
    """Rotary command: mount the head nearest the cut direction and descend."""
    cfg = cfg or ActuationConfig()
    return ToolCommand(
        tool=choose_rotary_tool(cut_vector(center, prune_point)),
        depth_z=_descend_target(depth, cfg),
    )


def read_depth(state: GardenState, pose_xy: tuple[float, float],
               cfg: ActuationConfig | None = None) -> DepthReading:
    """Simulated IR reading: sensor height minus the canopy height at the
    pose. Canopy height is ``canopy_height_factor`` times the radius of the
    tallest plant whose disk contains the pose; bare soil reads the full
    sensor height."""
    cfg = cfg or ActuationConfig()
    x, y = pose_xy
    if not (0 <= x <= state.bed_width and 0 <= y <= state.bed_height):
        raise OutOfBoundsError(f"pose {pose_xy} outside bed")
    height = 0.0
    for p in state.plants:
        if p.radius > 0 and math.dist(p.center, pose_xy) <= p.radius:
            height = max(height, cfg.canopy_height_factor * p.radius)
    return DepthReading(max(0.0, cfg.sensor_height - height))


def _nearest_plant_of_type(state: GardenState, type_id: int,
                           point: tuple[float, float]) -> int:
    best = None
    for p in state.plants:
        if p.type_id != type_id:
            continue
        key = (math.dist(p.center, point), p.plant_index)
        if best is None or key < best[0]:
            best = (key, p.plant_index)
    if best is None:
        raise NoTargetTissueError(f"no plant of type {type_id} in state")
    return best[1]


def apply_cut(state: GardenState, mask: SegmentationMask,
              prune_point: tuple[float, float], tool: Tool,
              cfg: ActuationConfig | None = None,
              target_index: int | None = None
              ) -> tuple[GardenState, SegmentationMask, CutEffect]:
    """Erase cut pixels from the mask and update the target's radius.

    The erase region is a disk around the prune point (rotary: any plant's
    pixels; shears: target type only). With ``remove_distal_leaf`` the
    target tissue radially beyond the cut, inside the angular shadow of the
    cut disk as seen from the plant center, detaches as well — cutting a
    leaf removes everything distal to the cut. The target's new radius is
    the minimal enclosing disk of its remaining tissue, never larger than
    before.
    """
    cfg = cfg or ActuationConfig()
    ppc = mask.px_per_cm
    label = mask.label_at(prune_point)
    if label == 0:
        raise NoTargetTissueError(f"no plant tissue at {prune_point}")
    target = target_index if target_index is not None \
        else _nearest_plant_of_type(state, label, prune_point)
    tplant = state.plant(target)
    if tplant.type_id != label:
        raise NoTargetTissueError(
            f"tissue at {prune_point} is type {label}, target plant "
            f"{target} is type {tplant.type_id}")
    cut_r = cfg.shears_cut_radius if tool is Tool.SHEARS \
        else cfg.rotary_cut_radius

    labels = mask.labels.copy()
    shape = labels.shape
    removed_px: dict[int, int] = {}

    # immediate cut zone around the prune point
    rows, cols = disk_bbox(shape, prune_point, cut_r, ppc)
    ys = pixel_centers_cm(shape[0], ppc)[rows] - prune_point[1]
    xs = pixel_centers_cm(shape[1], ppc)[cols] - prune_point[0]
    zone = np.hypot(ys[:, None], xs[None, :]) <= cut_r
    sub = labels[rows, cols]
    if tool is Tool.SHEARS:
        zone &= sub == tplant.type_id
    else:
        zone &= sub > 0
    _attribute_removed(state, sub, zone, rows, cols, ppc, removed_px)
    sub[zone] = 0

    # distal leaf detachment: target tissue beyond the cut, within the
    # angular shadow of the cut disk
    if cfg.remove_distal_leaf:
        cvec = (prune_point[0] - tplant.center[0],
                prune_point[1] - tplant.center[1])
        cdist = math.hypot(*cvec)
        if cdist > 1e-9:
            half_angle = math.pi / 2 if cdist <= cut_r \
                else math.asin(cut_r / cdist)
            rady = max(tplant.radius, cdist + cut_r)
            rows2, cols2 = disk_bbox(shape, tplant.center, rady, ppc)
            ys2 = pixel_centers_cm(shape[0], ppc)[rows2] - tplant.center[1]
            xs2 = pixel_centers_cm(shape[1], ppc)[cols2] - tplant.center[0]
            dist2 = np.hypot(ys2[:, None], xs2[None, :])
            with np.errstate(invalid="ignore", divide="ignore"):
                cosang = (xs2[None, :] * cvec[0] + ys2[:, None] * cvec[1]) \
                    / (dist2 * cdist)
            wedge = (dist2 >= cdist) & (np.nan_to_num(cosang, nan=1.0)
                                        >= math.cos(half_angle))
            sub2 = labels[rows2, cols2]
            wedge &= sub2 == tplant.type_id
            _attribute_removed(state, sub2, wedge, rows2, cols2, ppc,
                               removed_px)
            sub2[wedge] = 0

    new_mask = SegmentationMask(labels, px_per_cm=ppc)
    target_removed = removed_px.pop(target, 0)
    collateral = tuple(sorted(
        (k, n / ppc ** 2) for k, n in removed_px.items() if n > 0))
    removed_area = (target_removed + sum(n for _, n in removed_px.items())) \
        / ppc ** 2

    remaining = _target_pixels(state, new_mask, target)
    if remaining.size:
        disk = smallest_enclosing_disk(remaining)
        new_radius = min(tplant.radius, disk.r)
        remaining_area = remaining.shape[0] / ppc ** 2
    else:
        new_radius = 0.0
        remaining_area = 0.0
    new_state = state.with_radius(target, new_radius)
    effect = CutEffect(removed_area=removed_area, new_radius=new_radius,
                       collateral=collateral, remaining_area=remaining_area)
    return new_state, new_mask, effect


def _attribute_removed(state: GardenState, sub: np.ndarray, zone: np.ndarray,
                       rows: slice, cols: slice, ppc: float,
                       removed: dict[int, int]) -> None:
    """Attribute erased pixels to plants: each pixel belongs to the nearest
    same-type plant center."""
    if not zone.any():
        return
    rr, cc = np.nonzero(zone)
    ys = (np.arange(rows.start, rows.stop)[rr] + 0.5) / ppc
    xs = (np.arange(cols.start, cols.stop)[cc] + 0.5) / ppc
    lab = sub[rr, cc]
    for type_id in np.unique(lab):
        plants = [p for p in state.plants if p.type_id == type_id]
        if not plants:
            continue
        sel = lab == type_id
        px = np.column_stack((xs[sel], ys[sel]))
        centers = np.array([p.center for p in plants])
        d2 = ((px[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        owners = d2.argmin(axis=1)
        for j, p in enumerate(plants):
            n = int(np.count_nonzero(owners == j))
            if n:
                removed[p.plant_index] = removed.get(p.plant_index, 0) + n


def _target_pixels(state: GardenState, mask: SegmentationMask,
                   target: int) -> np.ndarray:
    """cm positions of the target's remaining tissue: same-type pixels whose
    nearest same-type plant center is the target's."""
    tplant = state.plant(target)
    same = [p for p in state.plants if p.type_id == tplant.type_id]
    rows, cols = np.nonzero(mask.labels == tplant.type_id)
    if rows.size == 0:
        return np.empty((0, 2))
    ppc = mask.px_per_cm
    pts = np.column_stack(((cols + 0.5) / ppc, (rows + 0.5) / ppc))
    if len(same) > 1:
        centers = np.array([p.center for p in same])
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        owner = d2.argmin(axis=1)
        mine = [j for j, p in enumerate(same)
                if p.plant_index == target][0]
        pts = pts[owner == mine]
    return pts


def write_tool_log_csv(path, rows: list[dict]) -> None:
    """CSV export of executed tool commands."""
    columns = ["day", "plant_index", "tool", "cut_angle_deg", "depth_z_cm",
               "removed_area_cm2", "collateral_count"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
