"""The two external file surfaces: likelihood grids and prune heatmaps.

Segmentation and leaf-center networks live outside this package; their
outputs arrive as PLG1 files. These tests drive run_cycle through both
ingestion paths.
"""

import csv
import os

import numpy as np
import pytest

from polypruner.garden import load_garden_config
from polypruner.grids import write_grid_file
from polypruner.pipeline import CycleConfig, run_cycle

CONFIG = os.path.join(os.path.dirname(__file__), "..", "configs",
                      "garden_small.json")


def one_hot_likelihood(labels: np.ndarray, channels: int) -> np.ndarray:
    return np.eye(channels, dtype=np.float32)[labels]


def test_likelihood_files_drive_the_observed_mask(tmp_path):
    _, catalog, ppc, _ = load_garden_config(CONFIG)
    h = w = 100
    # day-2 observation claims a single type-2 square, soil elsewhere
    labels = np.zeros((h, w), dtype=np.int32)
    labels[40:60, 20:40] = 2
    ldir = tmp_path / "likelihoods"
    ldir.mkdir()
    write_grid_file(ldir / "day_002.plg",
                    one_hot_likelihood(labels, catalog.i_total + 1))
    cfg = CycleConfig(garden_config=CONFIG, out_dir=str(tmp_path / "out"),
                      total_days=3, prune_start_day=3, tool="none", seed=0,
                      likelihood_dir=str(ldir))
    run_cycle(cfg)
    with open(os.path.join(cfg.out_dir, "daily.csv")) as f:
        rows = {int(r["day"]): r for r in csv.DictReader(f)}
    # day 2 coverage comes from the file: 400 px of type 2 out of 100x100
    assert float(rows[2]["coverage_chard"]) == pytest.approx(0.04)
    assert float(rows[2]["coverage_kale"]) == 0.0
    assert float(rows[2]["total_coverage"]) == pytest.approx(0.04)
    # days without a file fall back to the rendered simulator view
    assert float(rows[3]["total_coverage"]) == 0.0   # nothing germinated yet


def test_heatmap_files_drive_prune_point_choice(tmp_path):
    # Discover a prune day and target from a plain run, then replay the
    # same seeded run with a one-bump heatmap file for that day: the chosen
    # point must be the bump.
    plain = CycleConfig(garden_config=CONFIG, out_dir=str(tmp_path / "plain"),
                        total_days=40, tool="shears", seed=3)
    run_cycle(plain)
    with open(os.path.join(plain.out_dir, "prunes.csv")) as f:
        prune_rows = list(csv.DictReader(f))
    assert prune_rows, "expected at least one prune attempt"
    day = int(prune_rows[0]["day"])
    target = int(prune_rows[0]["plant_index"])
    with open(os.path.join(plain.out_dir, "disks.csv")) as f:
        disk_row = next(r for r in csv.DictReader(f)
                        if int(r["day"]) == day
                        and int(r["plant_index"]) == target)
    cx, cy = float(disk_row["cx_cm"]), float(disk_row["cy_cm"])

    _, catalog, ppc, _ = load_garden_config(CONFIG)
    h = w = 100
    values = np.zeros((h, w), dtype=np.float32)
    ys, xs = np.mgrid[0:h, 0:w]
    bump = np.exp(-(((ys + 0.5) / ppc - cy) ** 2
                    + ((xs + 0.5) / ppc - cx) ** 2) / 2.0)
    values[:] = bump
    hdir = tmp_path / "heatmaps"
    hdir.mkdir()
    write_grid_file(hdir / f"day_{day:03d}.plg", values)

    fed = CycleConfig(garden_config=CONFIG, out_dir=str(tmp_path / "fed"),
                      total_days=40, tool="shears", seed=3,
                      heatmap_dir=str(hdir))
    run_cycle(fed)
    with open(os.path.join(fed.out_dir, "prunes.csv")) as f:
        fed_rows = [r for r in csv.DictReader(f)
                    if int(r["day"]) == day
                    and int(r["plant_index"]) == target]
    assert fed_rows and fed_rows[0]["method"] == "learned"
    got = (float(fed_rows[0]["point_x_cm"]), float(fed_rows[0]["point_y_cm"]))
    # the bump peak is the only candidate on the target
    assert abs(got[0] - cx) <= 1.0 and abs(got[1] - cy) <= 1.0
