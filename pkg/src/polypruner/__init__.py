"""Polyculture garden simulation, state estimation, and autonomous pruning."""

from .garden import (CoverageReport, GardenState, PlantState, PlantTypeCatalog,
                     PlantTypeParams, Stage, advance_day, coverage_report,
                     max_next_radius, new_garden, normalized_diversity,
                     render_mask)
from .grids import LikelihoodGrid, OccupancyGrid, SegmentationMask
from .phenotype import apply_prior, argmax_label, build_occupancy_grid, mean_iou
from .pipeline import CycleConfig, CycleSummary, compare_cycles, run_cycle
from .planner import (PlannerConfig, PruneHeatmap, PrunePointCandidate,
                      RadiusHistory, baseline_prune_point,
                      extract_prune_points, select_plants_to_prune,
                      select_prune_point)
from .servoing import (CameraConfig, GantryPose, LocalizationResult,
                       ServoConfig, ServoOutcome, ServoStatus,
                       SimulatedCamera, localize, servo_loop, servo_step)
from .actuation import (ActuationConfig, CutEffect, DepthReading, Tool,
                        ToolCommand, apply_cut, choose_rotary_tool,
                        cut_vector, read_depth, shear_command)
from .tracking import (BoundingDisk, DiskSet, TrackerConfig, acu, bfs_track,
                       circle_iou, kmeans_track, mixed_track, ppi,
                       smallest_enclosing_disk)

__version__ = "0.1.0"
