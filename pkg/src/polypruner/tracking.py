"""Bounding-disk estimation from segmentation masks and disk quality metrics.

Two trackers share the disk representation: a ring-expansion search that
grows each plant's disk outward between simulator-derived bounds, and a
per-type K-Means clustering that turns pixel clusters into minimal
enclosing disks. A mixed selector picks per plant based on type size and
an occlusion estimate.
"""

import csv
import math
import random
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import InvalidInputError
from .garden import GardenState, PlantTypeCatalog, max_next_radius_value
from .grids import SegmentationMask, disk_bbox, pixel_centers_cm


class Circle(NamedTuple):
    x: float
    y: float
    r: float


@dataclass(frozen=True)
class BoundingDisk:
    plant_index: int
    type_id: int
    center: tuple[float, float]   # (x, y) cm
    radius: float                 # cm
    tracker: str = "init"         # which algorithm produced this disk

    def contains(self, point: tuple[float, float]) -> bool:
        return math.dist(point, self.center) <= self.radius


@dataclass(frozen=True)
class DiskSet:
    day: int
    disks: tuple[BoundingDisk, ...]

    def __post_init__(self):
        idx = [d.plant_index for d in self.disks]
        if len(set(idx)) != len(idx):
            raise InvalidInputError("duplicate plant_index in disk set")

    @property
    def by_index(self) -> dict[int, BoundingDisk]:
        return {d.plant_index: d for d in self.disks}

    def of_type(self, type_id: int) -> list[BoundingDisk]:
        return [d for d in self.disks if d.type_id == type_id]


@dataclass(frozen=True)
class TrackerConfig:
    ring_width: int = 1                 # px, annulus width for ring expansion
    accept_fraction: float = 0.10       # min correct-type share in a new ring
    kmeans_max_iters: int = 100
    kmeans_tolerance: float = 0.05      # cm, centroid movement stop criterion
    mixed_size_threshold: float = 20.0  # cm, type max radius above which K-Means is preferred
    recenter: bool = True               # move centers to accepted-pixel centroid
    occlusion_max: float = 0.4          # mixed tracker: K-Means only below this
    seed: int = 0                       # enclosing-disk shuffle seed

    def __post_init__(self):
        if not 0 < self.accept_fraction < 1:
            raise InvalidInputError("accept_fraction must be in (0, 1)")
        if self.ring_width < 1:
            raise InvalidInputError("ring_width must be >= 1 px")


# ---------------------------------------------------------------------------
# Minimal enclosing disk (randomized incremental construction)
# ---------------------------------------------------------------------------

_REL_EPS = 1.0 + 1e-14


def _in_circle(c: Circle, p: tuple[float, float]) -> bool:
    return math.hypot(p[0] - c.x, p[1] - c.y) <= c.r * _REL_EPS + 1e-14


def _diameter_circle(a, b) -> Circle:
    cx = (a[0] + b[0]) / 2.0
    cy = (a[1] + b[1]) / 2.0
    r = max(math.hypot(a[0] - cx, a[1] - cy), math.hypot(b[0] - cx, b[1] - cy))
    return Circle(cx, cy, r)


def _circumcircle(a, b, c) -> Circle | None:
    # offset toward the bbox center for numerical stability
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2.0
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2.0
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by)) * 2.0
    if d == 0:
        return None
    ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay)
          + (cx * cx + cy * cy) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx)
          + (cx * cx + cy * cy) * (bx - ax)) / d
    x, y = ux + ox, uy + oy
    r = max(math.hypot(x - p[0], y - p[1]) for p in (a, b, c))
    return Circle(x, y, r)


def _cross(o, a, p) -> float:
    return (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0])


def _circle_two_fixed(points, p, q) -> Circle:
    circ = _diameter_circle(p, q)
    left: Circle | None = None
    right: Circle | None = None
    for r in points:
        if _in_circle(circ, r):
            continue
        cross = _cross(p, q, r)
        c = _circumcircle(p, q, r)
        if c is None:
            continue
        if cross > 0 and (left is None
                          or _cross(p, q, (c.x, c.y)) > _cross(p, q, (left.x, left.y))):
            left = c
        elif cross < 0 and (right is None
                            or _cross(p, q, (c.x, c.y)) < _cross(p, q, (right.x, right.y))):
            right = c
    if left is None and right is None:
        return circ
    if left is None:
        return right  # type: ignore[return-value]
    if right is None:
        return left
    return left if left.r <= right.r else right


def _circle_one_fixed(points, p) -> Circle:
    c = Circle(p[0], p[1], 0.0)
    for i, q in enumerate(points):
        if not _in_circle(c, q):
            if c.r == 0.0:
                c = _diameter_circle(p, q)
            else:
                c = _circle_two_fixed(points[: i + 1], p, q)
    return c


def smallest_enclosing_disk(points, seed: int = 0) -> Circle:
    """Exact minimal enclosing circle of 2-D points.

    Randomized incremental construction, deterministic for a fixed shuffle
    seed. Inputs larger than 64 points are first reduced to their convex
    hull, which carries the same enclosing circle.
    """
    pts = [(float(p[0]), float(p[1])) for p in points]
    if not pts:
        raise InvalidInputError("smallest_enclosing_disk of empty point set")
    if len(pts) > 64:
        arr = np.asarray(pts)
        try:
            hull = ConvexHull(arr)
            pts = [tuple(arr[i]) for i in hull.vertices]
        except QhullError:
            pts = sorted(set(pts))  # degenerate (collinear) input
    random.Random(seed).shuffle(pts)
    c: Circle | None = None
    for i, p in enumerate(pts):
        if c is None or not _in_circle(c, p):
            c = _circle_one_fixed(pts[: i + 1], p)
    assert c is not None
    return c


# ---------------------------------------------------------------------------
# Trackers
# ---------------------------------------------------------------------------

def initial_disks(state: GardenState) -> DiskSet:
    """Tracker start state: seed locations, all radii 0."""
    return DiskSet(state.day, tuple(
        BoundingDisk(p.plant_index, p.type_id, p.center, 0.0, "init")
        for p in state.plants))


def _mask_positions_cm(mask: SegmentationMask, selector: np.ndarray) -> np.ndarray:
    rows, cols = np.nonzero(selector)
    ppc = mask.px_per_cm
    return np.column_stack(((cols + 0.5) / ppc, (rows + 0.5) / ppc))


def bfs_track(mask: SegmentationMask, prev: DiskSet, state: GardenState,
              catalog: PlantTypeCatalog, cfg: TrackerConfig) -> DiskSet:
    """Ring-expansion tracker.

    Each plant's radius starts at its wilting lower bound and grows ring by
    ring while at least ``accept_fraction`` of the newly visited pixels carry
    the plant's type, never past the one-day growth bound derived from the
    previous radius.
    """
    prev_by_index = prev.by_index
    ppc = mask.px_per_cm
    ring_cm = cfg.ring_width / ppc
    labels = mask.labels
    disks = []
    for plant in state.plants:
        try:
            before = prev_by_index[plant.plant_index]
        except KeyError:
            raise InvalidInputError(
                f"no previous disk for plant {plant.plant_index}") from None
        params = catalog.params(plant.type_id)
        min_r = max(0.0, before.radius - params.wilting_rate)
        max_r = max_next_radius_value(before.radius, params)
        center = before.center

        rows, cols = disk_bbox(labels.shape, center, max_r + ring_cm, ppc)
        sub = labels[rows, cols]
        ys = pixel_centers_cm(labels.shape[0], ppc)[rows] - center[1]
        xs = pixel_centers_cm(labels.shape[1], ppc)[cols] - center[0]
        dist = np.hypot(ys[:, None], xs[None, :])
        correct = sub == plant.type_id

        r = min_r
        accepted_rings = 0
        while r < max_r - 1e-9:
            outer = min(r + ring_cm, max_r)
            ring = (dist > r) & (dist <= outer)
            n_ring = int(np.count_nonzero(ring))
            if n_ring == 0:
                break
            frac = np.count_nonzero(correct & ring) / n_ring
            if frac < cfg.accept_fraction:
                break
            r = outer
            accepted_rings += 1

        if cfg.recenter and accepted_rings > 0:
            inside = correct & (dist <= r)
            if inside.any():
                rr, cc = np.nonzero(inside)
                cy = float(np.mean(ys[rr] + center[1]))
                cx = float(np.mean(xs[cc] + center[0]))
                center = (cx, cy)
        disks.append(BoundingDisk(plant.plant_index, plant.type_id,
                                  center, float(r), "bfs"))
    return DiskSet(state.day, tuple(disks))


def kmeans_track(mask: SegmentationMask, state: GardenState,
                 cfg: TrackerConfig) -> DiskSet:
    """Per-type Lloyd clustering; each cluster becomes its minimal enclosing disk.

    Centroids start at the plants' seed locations. Types with fewer pixels
    than plants fall back to radius-0 disks at the seed locations.
    """
    disks: list[BoundingDisk] = []
    type_ids = sorted({p.type_id for p in state.plants})
    for tid in type_ids:
        plants_t = sorted((p for p in state.plants if p.type_id == tid),
                          key=lambda p: p.plant_index)
        pts = _mask_positions_cm(mask, mask.labels == tid)
        k = len(plants_t)
        if len(pts) < k:
            disks.extend(
                BoundingDisk(p.plant_index, tid, p.center, 0.0, "kmeans")
                for p in plants_t)
            continue
        centroids = np.array([p.center for p in plants_t], dtype=float)
        assign = np.zeros(len(pts), dtype=int)
        for _ in range(cfg.kmeans_max_iters):
            d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
            assign = d2.argmin(axis=1)
            # empty-cluster repair: reseed at the pixel farthest from any centroid
            for j in range(k):
                if not (assign == j).any():
                    far = int(d2.min(axis=1).argmax())
                    centroids[j] = pts[far]
                    d2[:, j] = ((pts - centroids[j]) ** 2).sum(axis=1)
                    assign = d2.argmin(axis=1)
            new_centroids = np.array([
                pts[assign == j].mean(axis=0) if (assign == j).any()
                else centroids[j]      # repair cascade left it empty
                for j in range(k)])
            move = float(np.max(np.hypot(*(new_centroids - centroids).T)))
            centroids = new_centroids
            if move < cfg.kmeans_tolerance:
                break

        clusters = []
        for j in range(k):
            members = pts[assign == j]
            clusters.append(
                smallest_enclosing_disk(members, seed=cfg.seed) if len(members)
                else Circle(float(centroids[j][0]), float(centroids[j][1]), 0.0))
        # one-to-one cluster -> plant matching by distance to seed location
        pairs = sorted(
            (math.dist((c.x, c.y), p.center), p.plant_index, j)
            for j, c in enumerate(clusters) for p in plants_t)
        used_p: set[int] = set()
        used_c: set[int] = set()
        for _, p_idx, j in pairs:
            if p_idx in used_p or j in used_c:
                continue
            used_p.add(p_idx)
            used_c.add(j)
            c = clusters[j]
            disks.append(BoundingDisk(p_idx, tid, (float(c.x), float(c.y)),
                                      float(c.r), "kmeans"))
    disks.sort(key=lambda d: d.plant_index)
    return DiskSet(state.day, tuple(disks))


def type_occlusion(mask: SegmentationMask, prev: DiskSet, type_id: int) -> float:
    """1 - (visible pixels / pixels expected from previous radii), in [0, 1]."""
    ppc = mask.px_per_cm
    expected = sum(math.pi * d.radius ** 2 * ppc ** 2
                   for d in prev.of_type(type_id))
    if expected <= 0:
        return 0.0
    visible = mask.count(type_id)
    return float(min(1.0, max(0.0, 1.0 - visible / expected)))


def mixed_track(mask: SegmentationMask, prev: DiskSet, state: GardenState,
                catalog: PlantTypeCatalog, cfg: TrackerConfig) -> DiskSet:
    """Per-plant tracker selection: K-Means for large, mostly visible types;
    ring expansion for small or heavily occluded ones."""
    bfs = bfs_track(mask, prev, state, catalog, cfg).by_index
    km = kmeans_track(mask, state, cfg).by_index
    occl = {tid: type_occlusion(mask, prev, tid)
            for tid in {p.type_id for p in state.plants}}
    disks = []
    for plant in sorted(state.plants, key=lambda p: p.plant_index):
        params = catalog.params(plant.type_id)
        use_kmeans = (params.max_radius >= cfg.mixed_size_threshold
                      and occl[plant.type_id] < cfg.occlusion_max)
        disks.append(km[plant.plant_index] if use_kmeans
                     else bfs[plant.plant_index])
    return DiskSet(state.day, tuple(disks))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _disk_union(disks: list[BoundingDisk], shape: tuple[int, int],
                ppc: float) -> np.ndarray:
    union = np.zeros(shape, dtype=bool)
    for d in disks:
        if d.radius <= 0:
            continue
        rows, cols = disk_bbox(shape, d.center, d.radius, ppc)
        ys = pixel_centers_cm(shape[0], ppc)[rows] - d.center[1]
        xs = pixel_centers_cm(shape[1], ppc)[cols] - d.center[0]
        union[rows, cols] |= np.hypot(ys[:, None], xs[None, :]) <= d.radius
    return union


def acu(disks: DiskSet, mask: SegmentationMask, type_id: int) -> float:
    """Average circle utility: correct-type pixels inside the type's disk
    union divided by the union's pixel area. 0 when no disk has area."""
    union = _disk_union(disks.of_type(type_id), mask.shape, mask.px_per_cm)
    p_c = int(np.count_nonzero(union))
    if p_c == 0:
        return 0.0
    p_i = int(np.count_nonzero(union & (mask.labels == type_id)))
    return p_i / p_c


def ppi(disks: DiskSet, mask: SegmentationMask, type_id: int) -> float:
    """Percentage of pixels included: correct-type pixels inside the disk
    union divided by all pixels of the type. 1 when the type is absent."""
    p_t = mask.count(type_id)
    if p_t == 0:
        return 1.0
    union = _disk_union(disks.of_type(type_id), mask.shape, mask.px_per_cm)
    p_i = int(np.count_nonzero(union & (mask.labels == type_id)))
    return p_i / p_t


def circle_iou(a: BoundingDisk, b: BoundingDisk) -> float:
    """Closed-form intersection-over-union of two circles."""
    r1, r2 = a.radius, b.radius
    if r1 < 0 or r2 < 0:
        raise InvalidInputError("circle radii must be >= 0")
    d = math.dist(a.center, b.center)
    if r1 == 0.0 and r2 == 0.0:
        return 1.0 if d == 0.0 else 0.0
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        inner, outer = min(r1, r2), max(r1, r2)
        return (inner / outer) ** 2
    cos1 = min(1.0, max(-1.0, (d * d + r1 * r1 - r2 * r2) / (2 * d * r1)))
    cos2 = min(1.0, max(-1.0, (d * d + r2 * r2 - r1 * r1) / (2 * d * r2)))
    a1 = r1 * r1 * math.acos(cos1)
    a2 = r2 * r2 * math.acos(cos2)
    tri = 0.5 * math.sqrt(max(0.0, (-d + r1 + r2) * (d + r1 - r2)
                              * (d - r1 + r2) * (d + r1 + r2)))
    inter = a1 + a2 - tri
    union = math.pi * r1 * r1 + math.pi * r2 * r2 - inter
    return inter / union


def write_disks_csv(path, disk_sets: list[DiskSet]) -> None:
    """CSV export: one row per tracked disk per day."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["day", "plant_index", "type_id",
                         "cx_cm", "cy_cm", "r_cm", "tracker"])
        for ds in disk_sets:
            for d in ds.disks:
                writer.writerow([ds.day, d.plant_index, d.type_id,
                                 f"{d.center[0]:.4f}", f"{d.center[1]:.4f}",
                                 f"{d.radius:.4f}", d.tracker])
