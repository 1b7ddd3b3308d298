"""Prune planning: which plants to cut, and where on each plant.

Candidate prune points come from a leaf-center heatmap: threshold the
normalized map, take connected components, keep each component's peak,
blank a small exclusion disk around every accepted peak, renormalize and
repeat. Selection then filters points too close to the disk edge and picks
the one nearest the neighbor whose tracked radius is shrinking fastest.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import (InvalidInputError, NoPrunePointError,
                     ShapeMismatchError)
from .garden import CoverageReport, GardenState, PlantTypeCatalog
from .grids import SegmentationMask, disk_bbox, pixel_centers_cm
from .tracking import BoundingDisk, DiskSet

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class PlannerConfig:
    initial_threshold: float = 0.3   # normalized heatmap cutoff per round
    edge_margin: float = 3.0         # cm, disk-edge exclusion and peak spacing
    renorm_rounds: int = 3           # max renormalization passes
    dominance_factor: float = 1.2    # type is dominant above factor * mean coverage
    neighbor_gap: float = 15.0       # cm, max disk gap to count addressing as neighbor
    min_confidence: float = 0.05     # absolute heatmap floor; stops renorm noise

    def __post_init__(self):
        if not 0 < self.initial_threshold < 1:
            raise InvalidInputError("initial_threshold must be in (0, 1)")
        if self.edge_margin < 0:
            raise InvalidInputError("edge_margin must be >= 0")


@dataclass(frozen=True)
class PruneHeatmap:
    """Leaf-center confidence map, normalized so the max is 1."""

    values: np.ndarray          # (H, W) floats in [0, 1]
    day: int = 0
    px_per_cm: float = 1.0

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.size == 0:
            raise InvalidInputError("heatmap must be a non-empty 2-D grid")


@dataclass(frozen=True)
class PrunePointCandidate:
    position: tuple[float, float]   # (x, y) cm
    plant_index: int
    confidence: float               # original heatmap value at the peak


@dataclass
class RadiusHistory:
    """Per-plant tracked radii by day, for neighbor decay-rate estimates."""

    series: dict[int, dict[int, float]] = field(default_factory=dict)

    def record(self, disks: DiskSet) -> None:
        for d in disks.disks:
            per_day = self.series.setdefault(d.plant_index, {})
            if per_day and disks.day <= max(per_day):
                raise InvalidInputError("history days must strictly increase")
            per_day[disks.day] = d.radius

    def radius(self, plant_index: int, day: int) -> float:
        try:
            return self.series[plant_index][day]
        except KeyError:
            raise InvalidInputError(
                f"no radius recorded for plant {plant_index} day {day}") from None

    def spans(self, day: int, window: int = 5) -> bool:
        return all(day - window in s and day in s
                   for s in self.series.values()) and bool(self.series)

    def decay_rate(self, plant_index: int, day: int, window: int = 5) -> float:
        """cm/day of radius shrinkage over the window; positive = shrinking."""
        r_then = self.radius(plant_index, day - window)
        r_now = self.radius(plant_index, day)
        return (r_then - r_now) / window


def select_plants_to_prune(report: CoverageReport, disks: DiskSet,
                           catalog: PlantTypeCatalog,
                           cfg: PlannerConfig) -> list[int]:
    """Plants of over-represented types that overlap a smaller neighbor.

    A type is dominant when its size-normalized coverage exceeds
    ``dominance_factor`` times the mean over types that are present at all.
    Within a dominant type, a plant is selected when its disk overlaps a
    smaller-radius disk of a different type.
    """
    if set(report.per_type_coverage) != {t.type_id for t in catalog.types}:
        raise InvalidInputError("coverage report does not match catalog")
    active = {tid: report.normalized_vector[tid]
              for tid, c in report.per_type_coverage.items() if c > 0}
    if not active:
        return []
    mean_v = sum(active.values()) / len(active)
    dominant = {tid for tid, v in active.items()
                if v > cfg.dominance_factor * mean_v}
    selected = []
    for d in disks.disks:
        if d.type_id not in dominant:
            continue
        for other in disks.disks:
            if other.plant_index == d.plant_index or other.type_id == d.type_id:
                continue
            if other.radius < d.radius and \
                    math.dist(d.center, other.center) < d.radius + other.radius:
                selected.append(d.plant_index)
                break
    return sorted(selected)


def extract_prune_points(heatmap: PruneHeatmap, mask: SegmentationMask,
                         disks: DiskSet,
                         cfg: PlannerConfig) -> list[PrunePointCandidate]:
    """Peak extraction with renormalization.

    Per round: scale the working map so its max is 1, label 8-connected
    components above the threshold, accept each component's peak (skipping
    peaks within ``edge_margin`` of one already accepted), blank an
    exclusion disk around every accepted peak, repeat. Peaks on soil, on
    the wrong type, or outside every disk are discarded at the end.
    """
    if heatmap.values.shape != mask.labels.shape:
        raise ShapeMismatchError(
            f"heatmap {heatmap.values.shape} vs mask {mask.labels.shape}")
    ppc = heatmap.px_per_cm
    base_max = float(heatmap.values.max())
    if base_max <= 0:
        return []
    base = heatmap.values / base_max
    work = base.copy()
    accepted: list[tuple[float, float, float]] = []   # (x, y, confidence)

    for _ in range(cfg.renorm_rounds):
        peak = float(work.max())
        if peak < cfg.min_confidence:
            break
        labeled, n = ndimage.label(work >= cfg.initial_threshold * peak,
                                   structure=_EIGHT_CONNECTED)
        if n == 0:
            break
        peaks = []
        for comp in range(1, n + 1):
            rows, cols = np.nonzero(labeled == comp)
            best = int(np.argmax(work[rows, cols]))
            r, c = int(rows[best]), int(cols[best])
            peaks.append((float(work[r, c]), r, c))
        peaks.sort(key=lambda t: (-t[0], t[1], t[2]))
        for value, r, c in peaks:
            x = (c + 0.5) / ppc
            y = (r + 0.5) / ppc
            if any(math.hypot(x - ax, y - ay) < cfg.edge_margin
                   for ax, ay, _ in accepted):
                continue
            accepted.append((x, y, float(base[r, c])))
            rows_s, cols_s = disk_bbox(work.shape, (x, y), cfg.edge_margin, ppc)
            ys = pixel_centers_cm(work.shape[0], ppc)[rows_s] - y
            xs = pixel_centers_cm(work.shape[1], ppc)[cols_s] - x
            work[rows_s, cols_s][np.hypot(ys[:, None], xs[None, :])
                                 <= cfg.edge_margin] = 0.0

    candidates = []
    for x, y, conf in accepted:
        label = mask.label_at((x, y))
        if label == 0:
            continue
        containing = [d for d in disks.disks
                      if d.radius > 0 and d.contains((x, y))]
        if not containing:
            continue
        owner = min(containing, key=lambda d: (d.radius, d.plant_index))
        if owner.type_id != label:
            continue
        candidates.append(PrunePointCandidate((x, y), owner.plant_index, conf))
    candidates.sort(key=lambda c: (c.plant_index, -c.confidence,
                                   c.position[0], c.position[1]))
    return candidates


def baseline_prune_point(mask: SegmentationMask,
                         disk: BoundingDisk) -> tuple[float, float]:
    """Geometric fallback: centroid of plant extremum, the disk-boundary
    point in the extremum's direction, and the plant center. Can land off
    the plant for concave shapes, which is why the heatmap path exists."""
    ppc = mask.px_per_cm
    rows, cols = disk_bbox(mask.shape, disk.center, max(disk.radius, 1.0), ppc)
    sub = mask.labels[rows, cols]
    ys = pixel_centers_cm(mask.shape[0], ppc)[rows]
    xs = pixel_centers_cm(mask.shape[1], ppc)[cols]
    dist = np.hypot(ys[:, None] - disk.center[1], xs[None, :] - disk.center[0])
    inside = (sub == disk.type_id) & (dist <= max(disk.radius, 0.5))
    if not inside.any():
        raise NoPrunePointError(
            f"plant {disk.plant_index} has no pixels in the mask")
    masked = np.where(inside, dist, -1.0)
    r, c = np.unravel_index(int(np.argmax(masked)), masked.shape)
    extremum = (float(xs[c]), float(ys[r]))
    dx = extremum[0] - disk.center[0]
    dy = extremum[1] - disk.center[1]
    norm = math.hypot(dx, dy)
    if norm > 0:
        tip = (disk.center[0] + disk.radius * dx / norm,
               disk.center[1] + disk.radius * dy / norm)
    else:
        tip = disk.center
    return (float((extremum[0] + tip[0] + disk.center[0]) / 3.0),
            float((extremum[1] + tip[1] + disk.center[1]) / 3.0))


def strongest_decay_neighbor(disks: DiskSet, history: RadiusHistory,
                             target: int, cfg: PlannerConfig,
                             window: int = 5) -> tuple[int, float] | None:
    """Neighbor (plant_index, decay cm/day) with the fastest shrinking
    radius, or None when no disk lies within ``neighbor_gap`` of the target."""
    tdisk = disks.by_index[target]
    neighbors = [d for d in disks.disks
                 if d.plant_index != target
                 and math.dist(d.center, tdisk.center) - d.radius - tdisk.radius
                 < cfg.neighbor_gap]
    if not neighbors:
        return None
    scored = [(history.decay_rate(d.plant_index, disks.day, window),
               d.plant_index) for d in neighbors]
    decay, idx = max(scored, key=lambda t: (t[0], -t[1]))
    return idx, decay


def select_prune_point(candidates: list[PrunePointCandidate], disks: DiskSet,
                       history: RadiusHistory, target: int,
                       cfg: PlannerConfig) -> PrunePointCandidate:
    """Pick the target's prune point.

    Candidates within ``edge_margin`` of the disk edge are dropped. With
    neighbors in range, the point nearest the fastest-shrinking neighbor's
    center wins; otherwise the most interior point does. Ties fall back to
    higher confidence, then lower x, then lower y.
    """
    try:
        tdisk = disks.by_index[target]
    except KeyError:
        raise InvalidInputError(f"no disk for target plant {target}") from None
    depth = {c.position: tdisk.radius - math.dist(c.position, tdisk.center)
             for c in candidates if c.plant_index == target}
    survivors = [c for c in candidates if c.plant_index == target
                 and depth[c.position] >= cfg.edge_margin - 1e-9]
    if not survivors:
        raise NoPrunePointError(
            f"no candidate at least {cfg.edge_margin} cm inside plant "
            f"{target}'s disk edge")
    neighbor = strongest_decay_neighbor(disks, history, target, cfg)
    if neighbor is None:
        return min(survivors,
                   key=lambda c: (-depth[c.position], -c.confidence,
                                  c.position[0], c.position[1]))
    ncenter = disks.by_index[neighbor[0]].center
    return min(survivors,
               key=lambda c: (math.dist(c.position, ncenter), -c.confidence,
                              c.position[0], c.position[1]))


def synthetic_heatmap(state: GardenState, mask: SegmentationMask,
                      seed: int = 0, sigma_cm: float = 1.0,
                      amp_range: tuple[float, float] = (0.4, 1.0)) -> PruneHeatmap:
    """Leaf-center heatmap stand-in: Gaussian bumps scattered on each plant.

    Bump count scales with radius; bump centers resample until they land on
    a pixel of the plant's own type (up to 8 tries). Deterministic for a
    fixed (state, mask, seed).
    """
    ppc = mask.px_per_cm
    values = np.zeros(mask.shape, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence((seed, state.day)))
    for p in sorted(state.plants, key=lambda q: q.plant_index):
        if p.radius < 2.0:
            continue
        n_leaves = max(1, int(p.radius / 3.0))
        for _ in range(n_leaves):
            for _try in range(8):
                ang = rng.uniform(0, 2 * math.pi)
                rad = rng.uniform(0.3, 0.8) * p.radius
                x = p.center[0] + rad * math.cos(ang)
                y = p.center[1] + rad * math.sin(ang)
                if mask.label_at((x, y)) == p.type_id:
                    break
            else:
                continue
            amp = rng.uniform(*amp_range)
            rows, cols = disk_bbox(values.shape, (x, y), 4 * sigma_cm, ppc)
            ys = pixel_centers_cm(values.shape[0], ppc)[rows] - y
            xs = pixel_centers_cm(values.shape[1], ppc)[cols] - x
            d2 = ys[:, None] ** 2 + xs[None, :] ** 2
            values[rows, cols] = np.maximum(
                values[rows, cols], amp * np.exp(-d2 / (2 * sigma_cm ** 2)))
    peak = values.max()
    if peak > 0:
        values /= peak
    return PruneHeatmap(values, day=state.day, px_per_cm=ppc)


def write_prune_log_csv(path, rows: list[dict]) -> None:
    """CSV export of prune decisions."""
    columns = ["day", "plant_index", "point_x_cm", "point_y_cm",
               "chosen_neighbor", "decay_rate_cm_per_day", "method"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
