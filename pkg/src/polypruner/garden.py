"""Garden model: plant lifecycle simulation, mask rendering, coverage metrics.

The growth law is first-order: during the growth stage a plant's radius
increases linearly by max_radius / (maturation - germination) per day, so it
reaches max_radius exactly at maturation. Wilting shrinks the radius by a
per-type rate. All radii and positions are cm; time is whole days.
"""

import json
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import (CatalogMismatchError, InvalidInputError,
                     InvalidScaleError, OutOfBoundsError)
from .grids import SegmentationMask, disk_bbox


class Stage(Enum):
    GERMINATION = "germination"
    GROWTH = "growth"
    WAITING = "waiting"
    WILTING = "wilting"


@dataclass(frozen=True)
class PlantTypeParams:
    """Lifecycle constants for one plant type."""

    type_id: int                    # 1..i_total (0 reserved for soil)
    name: str
    germination_days: float
    maturation_days: float
    max_radius: float               # cm
    wilting_rate: float = 0.5       # cm/day radius decrease while wilting
    wilt_start: float | None = None  # day wilting begins; default maturation + 15

    def __post_init__(self):
        if self.type_id < 1:
            raise InvalidInputError("type_id must be >= 1 (0 is soil)")
        if not (0 < self.germination_days < self.maturation_days):
            raise InvalidInputError(
                f"{self.name}: need 0 < germination < maturation")
        if self.max_radius <= 0 or self.wilting_rate < 0:
            raise InvalidInputError(f"{self.name}: bad radius/wilting params")

    @property
    def growth_duration(self) -> float:
        return self.maturation_days - self.germination_days

    @property
    def daily_growth(self) -> float:
        """Radius gained per day during the growth stage."""
        return self.max_radius / self.growth_duration

    @property
    def wilt_onset(self) -> float:
        return self.wilt_start if self.wilt_start is not None \
            else self.maturation_days + 15.0

    def stage_at(self, day: float) -> Stage:
        if day < self.germination_days:
            return Stage.GERMINATION
        if day < self.maturation_days:
            return Stage.GROWTH
        if day < self.wilt_onset:
            return Stage.WAITING
        return Stage.WILTING


@dataclass(frozen=True)
class PlantTypeCatalog:
    """Ordered plant-type table; ids must be contiguous from 1."""

    types: tuple[PlantTypeParams, ...]

    def __post_init__(self):
        ids = [t.type_id for t in self.types]
        if ids != list(range(1, len(ids) + 1)):
            raise InvalidInputError(
                "catalog type_ids must be unique and contiguous from 1")

    @property
    def i_total(self) -> int:
        return len(self.types)

    @property
    def avg_max_radius(self) -> float:
        """Mean of all per-type max radii; always recomputed."""
        return float(np.mean([t.max_radius for t in self.types]))

    def params(self, type_id: int) -> PlantTypeParams:
        if not 1 <= type_id <= len(self.types):
            raise CatalogMismatchError(f"unknown type_id {type_id}")
        return self.types[type_id - 1]

    def by_name(self, name: str) -> PlantTypeParams:
        for t in self.types:
            if t.name == name:
                return t
        raise CatalogMismatchError(f"unknown type name {name!r}")


@dataclass(frozen=True)
class PlantState:
    plant_index: int
    type_id: int
    center: tuple[float, float]     # (x, y) cm
    radius: float                   # cm
    stage: Stage = Stage.GERMINATION


@dataclass(frozen=True)
class GardenState:
    """Snapshot of every plant on one day."""

    day: int
    bed_width: float                # cm
    bed_height: float               # cm
    plants: tuple[PlantState, ...]

    def __post_init__(self):
        if self.day < 0:
            raise InvalidInputError("day must be >= 0")
        idx = [p.plant_index for p in self.plants]
        if sorted(idx) != list(range(len(idx))):
            raise InvalidInputError("plant_index values must be 0..n-1")
        for p in self.plants:
            x, y = p.center
            if not (0 <= x <= self.bed_width and 0 <= y <= self.bed_height):
                raise OutOfBoundsError(
                    f"plant {p.plant_index} center {p.center} outside bed")

    def plant(self, plant_index: int) -> PlantState:
        for p in self.plants:
            if p.plant_index == plant_index:
                return p
        raise InvalidInputError(f"no plant with index {plant_index}")

    def with_radius(self, plant_index: int, radius: float) -> "GardenState":
        plants = tuple(
            replace(p, radius=radius) if p.plant_index == plant_index else p
            for p in self.plants)
        return replace(self, plants=plants)


@dataclass(frozen=True)
class CoverageReport:
    """Per-type canopy coverage plus the size-normalized diversity metric."""

    per_type_coverage: dict[int, float]     # type_id -> fraction of bed area
    total_coverage: float
    normalized_vector: dict[int, float]     # type_id -> c_i * (R/R_i)^2
    diversity: float


def new_garden(bed_width: float, bed_height: float,
               placements: list[tuple[int, float, float]],
               catalog: PlantTypeCatalog) -> GardenState:
    """Day-0 garden from (type_id, x, y) seed placements, all radii 0."""
    plants = []
    for k, (type_id, x, y) in enumerate(placements):
        params = catalog.params(type_id)
        plants.append(PlantState(k, type_id, (x, y), 0.0, params.stage_at(0)))
    return GardenState(0, bed_width, bed_height, tuple(plants))


def advance_day(state: GardenState, catalog: PlantTypeCatalog) -> GardenState:
    """Step the garden one day forward.

    The radius delta for the day is driven by the stage at the state's
    current day; the returned plants carry the stage of the new day. Growth
    is clamped to max_radius, wilting to zero.
    """
    new_day = state.day + 1
    plants = []
    for p in state.plants:
        params = catalog.params(p.type_id)
        stage_today = params.stage_at(state.day)
        r = p.radius
        if stage_today is Stage.GROWTH:
            r = min(params.max_radius, r + params.daily_growth)
        elif stage_today is Stage.WILTING:
            r = max(0.0, r - params.wilting_rate)
        plants.append(replace(p, radius=r, stage=params.stage_at(new_day)))
    return replace(state, day=new_day, plants=tuple(plants))


def max_next_radius(plant: PlantState, catalog: PlantTypeCatalog) -> float:
    """Upper bound on tomorrow's radius: one growth step, clamped to R_i."""
    params = catalog.params(plant.type_id)
    return max_next_radius_value(plant.radius, params)


def max_next_radius_value(radius: float, params: PlantTypeParams) -> float:
    return min(params.max_radius, radius + params.daily_growth)


def render_mask(state: GardenState, px_per_cm: float, seed: int = 0,
                jitter_amplitude: float = 0.0) -> SegmentationMask:
    """Rasterize the garden: each plant a filled disk of its type_id.

    Overlaps resolve with the larger current radius on top; equal radii put
    the lower plant_index on top. jitter_amplitude > 0 perturbs each disk
    boundary with a smooth per-plant angular noise profile drawn from seed.
    """
    if px_per_cm <= 0:
        raise InvalidScaleError("px_per_cm must be > 0")
    h = int(round(state.bed_height * px_per_cm))
    w = int(round(state.bed_width * px_per_cm))
    if h <= 0 or w <= 0:
        raise InvalidScaleError(f"zero-area output grid {h}x{w}")
    labels = np.zeros((h, w), dtype=np.int32)

    # paint order: smaller radii first so larger plants occlude them;
    # among equal radii, paint higher indices first so lower index wins
    order = sorted(state.plants, key=lambda p: (p.radius, -p.plant_index))
    for p in order:
        if p.radius <= 0:
            continue
        rows, cols = disk_bbox((h, w), p.center, p.radius + jitter_amplitude,
                               px_per_cm)
        if rows.stop <= rows.start or cols.stop <= cols.start:
            continue
        ys = (np.arange(rows.start, rows.stop) + 0.5) / px_per_cm - p.center[1]
        xs = (np.arange(cols.start, cols.stop) + 0.5) / px_per_cm - p.center[0]
        dist = np.hypot(ys[:, None], xs[None, :])
        if jitter_amplitude > 0:
            rng = np.random.default_rng(np.random.SeedSequence(
                (seed, p.plant_index)))
            coeffs = rng.normal(size=(2, 4)) / np.arange(1, 5)
            theta = np.arctan2(ys[:, None], xs[None, :])
            wave = sum(coeffs[0, k] * np.cos((k + 1) * theta)
                       + coeffs[1, k] * np.sin((k + 1) * theta)
                       for k in range(4))
            r_eff = np.maximum(0.0, p.radius + jitter_amplitude * wave / 2.0)
        else:
            r_eff = p.radius
        inside = dist <= r_eff
        labels[rows, cols][inside] = p.type_id
    return SegmentationMask(labels, px_per_cm=px_per_cm)


def normalized_diversity(values, n_types: int | None = None) -> float:
    """Shannon entropy (natural log) of the renormalized vector, divided by
    ln(n_types). Zero vectors and single-type catalogs score 0."""
    v = np.asarray(values, dtype=float)
    if (v < 0).any():
        raise InvalidInputError("coverage values must be >= 0")
    n = n_types if n_types is not None else v.size
    total = v.sum()
    if total <= 0 or n < 2:
        return 0.0
    p = v / total
    p = p[p > 0]
    return float(-(p * np.log(p)).sum() / math.log(n))


def coverage_report(mask: SegmentationMask,
                    catalog: PlantTypeCatalog) -> CoverageReport:
    """Per-type coverage fractions and the entropy diversity of the
    size-normalized coverage vector."""
    mask.validate_labels(catalog.i_total)
    counts = np.bincount(mask.labels.ravel(), minlength=catalog.i_total + 1)
    total_px = mask.labels.size
    r_avg = catalog.avg_max_radius
    per_type = {}
    norm = {}
    for t in catalog.types:
        c_i = counts[t.type_id] / total_px
        per_type[t.type_id] = float(c_i)
        norm[t.type_id] = float(c_i * (r_avg / t.max_radius) ** 2)
    return CoverageReport(
        per_type_coverage=per_type,
        total_coverage=float(sum(per_type.values())),
        normalized_vector=norm,
        diversity=normalized_diversity(list(norm.values()), catalog.i_total),
    )


def area_equivalent_radius(area_cm2: float) -> float:
    """Radius of the disk with the given area; pruning response model."""
    return math.sqrt(max(0.0, area_cm2) / math.pi)


# ---------------------------------------------------------------------------
# Config / snapshot I/O
# ---------------------------------------------------------------------------

def load_garden_config(path) -> tuple[GardenState, PlantTypeCatalog, float, int]:
    """Read a garden config (JSON): bed dims, catalog, seed placements.

    Returns (day-0 state, catalog, px_per_cm, simulation seed).
    """
    with open(path) as f:
        cfg = json.load(f)
    try:
        types = tuple(
            PlantTypeParams(
                type_id=t["type_id"],
                name=t["name"],
                germination_days=t["germination_days"],
                maturation_days=t["maturation_days"],
                max_radius=t["max_radius_cm"],
                wilting_rate=t.get("wilting_rate_cm_per_day", 0.5),
                wilt_start=t.get("wilt_start_day"),
            ) for t in cfg["types"])
        catalog = PlantTypeCatalog(types)
        placements = [(p["type_id"], p["x_cm"], p["y_cm"])
                      for p in cfg["plants"]]
        state = new_garden(cfg["bed_width_cm"], cfg["bed_height_cm"],
                           placements, catalog)
        return state, catalog, float(cfg.get("px_per_cm", 2.0)), \
            int(cfg.get("seed", 0))
    except KeyError as e:
        raise InvalidInputError(f"garden config missing key {e}") from e


def snapshot_records(state: GardenState) -> list[dict]:
    """One JSON-ready record per plant for the day."""
    return [
        {"day": state.day, "plant_index": p.plant_index, "type_id": p.type_id,
         "cx": round(p.center[0], 4), "cy": round(p.center[1], 4),
         "r": round(p.radius, 4), "stage": p.stage.value}
        for p in state.plants
    ]
