"""Acceptance criteria, one test per criterion.

Each test prints a "PASS criterion N" line after its assertions; run with
``pytest tests/test_acceptance.py -v -s`` to see them. The whole module is
budgeted to finish in well under two minutes.
"""

import math
import os
import time

import numpy as np
import pytest

from polypruner.garden import (PlantTypeCatalog, PlantTypeParams, new_garden,
                               normalized_diversity, render_mask)
from polypruner.grids import SegmentationMask
from polypruner.phenotype import build_occupancy_grid
from polypruner.pipeline import (CycleConfig, CycleSummary, compare_cycles,
                                 run_cycle)
from polypruner.planner import (PlannerConfig, extract_prune_points,
                                select_prune_point)
from polypruner.servoing import (CameraConfig, GantryPose, ServoConfig,
                                 ServoStatus, SimulatedCamera, servo_loop)
from polypruner.tracking import (BoundingDisk, DiskSet, TrackerConfig, acu,
                                 bfs_track, circle_iou, kmeans_track, ppi,
                                 smallest_enclosing_disk)
from conftest import grown
from test_planner import gaussian_heatmap, history_with
from oracles import (brute_force_enclosing_circle, monte_carlo_circle_iou,
                     pixel_disk_metrics)

CONFIG = os.path.join(os.path.dirname(__file__), "..", "configs",
                      "garden_small.json")

REF_TYPE_NAMES = ("kale", "turnip", "borage", "swiss_chard", "arugula",
               "radicchio", "red_lettuce", "cilantro", "green_lettuce",
               "sorrel")
REF_FREE = (0.158, 0.085, 0.122, 0.105, 0.098, 0.034, 0.000, 0.062, 0.028,
            0.002)
REF_PRUNED = (0.102, 0.043, 0.076, 0.102, 0.121, 0.059, 0.057, 0.078, 0.095,
            0.031)
REF_PCT_CHANGE = (-35.44, -49.41, -37.70, -2.86, 23.47, 73.53, None, 25.81,
             239.29, 1450.00)


def test_c01_diversity_reproduction():
    assert normalized_diversity(REF_FREE) == pytest.approx(0.856, abs=0.002)
    assert normalized_diversity(REF_PRUNED) == pytest.approx(0.970, abs=0.002)
    best = min(
        _timed(lambda: normalized_diversity(REF_FREE)) for _ in range(50))
    assert best < 1e-3, f"diversity took {best * 1e3:.3f} ms"
    print("\nPASS criterion 1: diversity 0.856/0.970 within ±0.002, "
          f"runtime {best * 1e6:.0f} us")


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def test_c02_percent_change_reproduction():
    a = CycleSummary("left", REF_TYPE_NAMES, (60,), (0.924,), (0.856,),
                     dict(zip(REF_TYPE_NAMES, REF_FREE)), 0.924, 0.856, 0, 0, 0)
    b = CycleSummary("right", REF_TYPE_NAMES, (60,), (0.784,), (0.970,),
                     dict(zip(REF_TYPE_NAMES, REF_PRUNED)), 0.784, 0.970, 0, 0, 0)
    rows = {r.name: r.percent_change for r in compare_cycles(a, b).rows}
    for name, want in zip(REF_TYPE_NAMES, REF_PCT_CHANGE):
        if want is None:
            assert rows[name] is None
        else:
            assert round(rows[name], 2) == want, name
    assert round(rows["DIVERSITY"], 2) == 13.32
    assert round(rows["COVERAGE"], 2) == -15.15
    print("\nPASS criterion 2: all reference percent-change entries "
          "reproduced to 2 decimals")


def test_c03_occupancy_grid_formula():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(40):
        cx, cy = (int(rng.integers(20, 80)) for _ in range(2))
        radius = float(rng.integers(3, 15))
        tid = int(rng.integers(1, 4))
        center = (cx + 0.5, cy + 0.5)      # on a pixel center
        grid = build_occupancy_grid([(center, tid, radius)], (100, 100),
                                    1.0, alpha=5.0, n_channels=4)
        v = grid.values
        assert v[cy, cx, tid] == 10.0
        assert v[cy, cx + int(radius), tid] == 5.0
        far = (cx + int(radius) + 2) % 100
        assert v[cy, far, tid] == 1.0 or math.hypot(far - cx, 0) <= radius
        outside = (((np.arange(100) - cx) ** 2)[None, :]
                   + ((np.arange(100) - cy) ** 2)[:, None]) > radius ** 2
        assert (v[:, :, tid][outside] == 1.0).all()
        inside = ~outside
        assert ((v[:, :, tid][inside] >= 5.0 - 1e-9)
                & (v[:, :, tid][inside] <= 10.0)).all()
        checked += 1
    assert checked == 40
    print("\nPASS criterion 3: occupancy values exactly 10/5/1 over "
          f"{checked} randomized placements")


def test_c04_bfs_tracker_oracle():
    catalog = PlantTypeCatalog((PlantTypeParams(
        1, "subject", 5, 35, 42.0, wilting_rate=0.5),))   # growth 1.4 cm/day
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    hits = 0
    trials = 200
    for trial in range(trials):
        r_true = float(rng.uniform(5.0, 40.0))
        g = new_garden(100, 100, [(1, 50.0, 50.0)], catalog)
        g = grown(g, {0: r_true})
        mask = render_mask(g, 2.0, seed=trial)
        prev_r = max(0.0, r_true - float(rng.uniform(0.0, 0.8)))
        prev = DiskSet(0, (BoundingDisk(0, 1, (50.0, 50.0), prev_r, "t"),))
        got = bfs_track(mask, prev, g, catalog, TrackerConfig())
        radius = got.disks[0].radius
        bound = min(42.0, prev_r + 42.0 / 30.0)
        assert radius <= bound + 1e-9, "radius exceeded the simulator bound"
        if abs(radius - r_true) <= 0.5:
            hits += 1
    elapsed = time.perf_counter() - t0
    assert hits >= 0.95 * trials, f"only {hits}/{trials} within 0.5 cm"
    assert elapsed < 5.0, f"tracker oracle took {elapsed:.2f} s"
    print(f"\nPASS criterion 4: {hits}/{trials} tracked within 0.5 cm, "
          f"bound never exceeded, {elapsed:.2f} s")


def test_c05_kmeans_tracker_oracle():
    # Separation >= sum of radii keeps the disks disjoint; the trials also
    # keep each disk's far edge nearest its own seed (separation >= twice
    # the larger radius), which is the clustering model's own same-size
    # assumption. Equal-radius pairs exercise exact tangency.
    catalog = PlantTypeCatalog((PlantTypeParams(1, "pair", 5, 35, 30.0),))
    rng = np.random.default_rng(99)
    for trial in range(100):
        if trial % 2 == 0:
            r1 = r2 = float(rng.uniform(5, 14))
            sep = r1 + r2 + float(rng.uniform(0.0, 12))
        else:
            r1 = float(rng.uniform(5, 14))
            r2 = float(rng.uniform(5, 14))
            sep = max(r1 + r2, 2 * max(r1, r2)) + float(rng.uniform(1.0, 12))
        c1 = (float(rng.uniform(16, 40)), float(rng.uniform(25, 75)))
        c2 = (c1[0] + sep, c1[1])
        g = new_garden(150, 100, [(1, *c1), (1, *c2)], catalog)
        g = grown(g, {0: r1, 1: r2})
        mask = render_mask(g, 2.0, seed=trial)
        got = kmeans_track(mask, g, TrackerConfig())
        assert math.dist(got.by_index[0].center, c1) <= 1.0   # 2 px at 2 px/cm
        assert math.dist(got.by_index[1].center, c2) <= 1.0
    print("\nPASS criterion 5: K-Means centers within 2 px in 100/100 trials")


def test_c06_smallest_enclosing_disk_exactness():
    rng = np.random.default_rng(4242)
    worst = 0.0
    for trial in range(500):
        n = int(rng.integers(2, 51))
        pts = rng.uniform(-10.0, 10.0, size=(n, 2))
        got = smallest_enclosing_disk(pts.tolist(), seed=trial)
        _, _, want = brute_force_enclosing_circle(pts)
        worst = max(worst, abs(got.r - want))
    assert worst <= 1e-9
    print(f"\nPASS criterion 6: 500 sets vs brute force, worst |dr| = "
          f"{worst:.2e}")


def test_c07_acu_ppi_brute_force_equivalence():
    rng = np.random.default_rng(31)
    ppc = 2.0
    for _ in range(200):
        labels = np.zeros((128, 128), dtype=np.int32)
        ys, xs = np.mgrid[0:128, 0:128]
        for _ in range(int(rng.integers(1, 4))):
            cx, cy = rng.uniform(8, 56, size=2)
            r = float(rng.uniform(2, 14))
            labels[((ys + 0.5) / ppc - cy) ** 2
                   + ((xs + 0.5) / ppc - cx) ** 2 <= r * r] = 1
        disks = tuple(
            BoundingDisk(i, 1, (float(rng.uniform(8, 56)),
                                float(rng.uniform(8, 56))),
                         float(rng.uniform(0, 12)), "t")
            for i in range(int(rng.integers(1, 4))))
        mask = SegmentationMask(labels, ppc)
        ds = DiskSet(0, disks)
        plain = [(d.center[0], d.center[1], d.radius) for d in disks]
        p_i, p_c, p_t = pixel_disk_metrics(labels, ppc, plain, 1)
        want_acu = p_i / p_c if p_c else 0.0
        want_ppi = p_i / p_t if p_t else 1.0
        assert acu(ds, mask, 1) == want_acu
        assert ppi(ds, mask, 1) == want_ppi
    print("\nPASS criterion 7: ACU/PPI exactly match pixel enumeration on "
          "200 scenes")


def test_c08_circle_iou_monte_carlo():
    rng = np.random.default_rng(17)
    worst = 0.0
    for trial in range(50):
        c1 = (float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3)),
              float(rng.uniform(0.5, 4.0)))
        c2 = (float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3)),
              float(rng.uniform(0.5, 4.0)))
        a = BoundingDisk(0, 1, c1[:2], c1[2], "t")
        b = BoundingDisk(1, 1, c2[:2], c2[2], "t")
        got = circle_iou(a, b)
        mc = monte_carlo_circle_iou(c1, c2, 1_000_000, seed=trial)
        worst = max(worst, abs(got - mc))
    assert worst <= 1e-2
    same = BoundingDisk(0, 1, (1.0, 1.0), 2.0, "t")
    assert circle_iou(same, same) == 1.0
    apart = BoundingDisk(1, 1, (9.0, 1.0), 2.0, "t")
    assert circle_iou(same, apart) == 0.0
    print(f"\nPASS criterion 8: analytic vs Monte-Carlo IoU, worst "
          f"|error| = {worst:.4f}")


def test_c09_servo_contract():
    rng = np.random.default_rng(5)
    glob = rng.uniform(0.0, 1.0, size=(240, 240))
    ppc = 2.0
    cfg = ServoConfig(search_radius=24.0)
    target = (60.0, 60.0)
    cam = SimulatedCamera(glob, ppc, CameraConfig())
    offsets = [(20.0, ang) for ang in np.linspace(0, 2 * math.pi, 16)]
    offsets += [(float(rng.uniform(0, 20)), float(rng.uniform(0, 2 * math.pi)))
                for _ in range(24)]
    for dist0, ang in offsets:
        start = GantryPose(target[0] + dist0 * math.cos(ang),
                           target[1] + dist0 * math.sin(ang), 40.0)
        out = servo_loop(cam, glob, start, target, cfg, search_center=target)
        assert out.status is ServoStatus.CONVERGED, f"offset {dist0:.2f}"
        assert out.iterations <= 6
        for row in out.trace:
            assert row.step_len_cm <= 4.0 + 1e-9
        final = out.trace[-1]
        assert math.dist((final.localized_x, final.localized_y), target) <= 1.0
    blurred = SimulatedCamera(glob, ppc, CameraConfig(blur_sigma=16.0))
    out = servo_loop(blurred, glob, GantryPose(66.0, 60.0, 40.0), target, cfg,
                     search_center=target)
    assert out.status is ServoStatus.LOCALIZATION_FAILED
    print("\nPASS criterion 9: converged <= 6 iterations for 40 offsets "
          "<= 20 cm, steps <= 4 cm, final error <= 1 cm; blur fails loudly")


def test_c10_prune_point_rules():
    rng = np.random.default_rng(23)
    cfg = PlannerConfig()
    mask = SegmentationMask(np.ones((80, 80), dtype=np.int32), 1.0)
    for trial in range(20):
        bumps = [(float(rng.uniform(10, 70)), float(rng.uniform(10, 70)),
                  float(rng.uniform(0.2, 1.0))) for _ in range(10)]
        heatmap = gaussian_heatmap((80, 80), bumps, sigma=1.5)
        disks = DiskSet(10, (BoundingDisk(0, 1, (40.0, 40.0), 38.0, "t"),))
        candidates = extract_prune_points(
            heatmap, mask, disks, PlannerConfig(renorm_rounds=1))
        for c in candidates:   # round-1 confidences clear the 0.3 threshold
            assert c.confidence >= cfg.initial_threshold - 1e-9
        history = history_with(disks, {0: 38.0})
        if candidates:
            chosen = select_prune_point(candidates, disks, history, 0, cfg)
            depth = 38.0 - math.dist(chosen.position, (40.0, 40.0))
            assert depth >= cfg.edge_margin - 1e-9
    # the renormalization fixture: strong and weak bump -> exactly two points
    heatmap = gaussian_heatmap((80, 80), [(25.5, 25.5, 1.0),
                                          (55.5, 55.5, 0.25)], sigma=1.0)
    disks = DiskSet(10, (BoundingDisk(0, 1, (40.0, 40.0), 55.0, "t"),))
    got = extract_prune_points(heatmap, mask, disks, cfg)
    assert len(got) == 2
    print("\nPASS criterion 10: 0.3 threshold and 3 cm edge filter hold; "
          "two-bump fixture yields exactly 2 candidates")


def test_c11_directional_end_to_end(tmp_path):
    t0 = time.perf_counter()
    finals = {"none": [], "shears": [], "rotary": []}
    for seed in range(20):
        for tool in finals:
            cfg = CycleConfig(
                garden_config=CONFIG,
                out_dir=str(tmp_path / f"{tool}{seed}"),
                total_days=60, tool=tool, seed=seed)
            summary = run_cycle(cfg)
            finals[tool].append((summary.final_coverage,
                                 summary.final_diversity))
    mean_div = {t: float(np.mean([d for _, d in v]))
                for t, v in finals.items()}
    mean_cov = {t: float(np.mean([c for c, _ in v]))
                for t, v in finals.items()}
    elapsed = time.perf_counter() - t0
    assert mean_div["shears"] > mean_div["none"], mean_div
    assert mean_cov["shears"] > mean_cov["rotary"], mean_cov
    print(f"\nPASS criterion 11: over 20 paired runs, shears diversity "
          f"{mean_div['shears']:.3f} > unpruned {mean_div['none']:.3f}; "
          f"shears coverage {mean_cov['shears']:.3f} > rotary "
          f"{mean_cov['rotary']:.3f} ({elapsed:.1f} s)")


def test_c12_run_determinism(tmp_path):
    # separate OS processes, so no shared interpreter state can leak in
    import subprocess
    import sys
    out_a = str(tmp_path / "first")
    out_b = str(tmp_path / "second")
    args = [sys.executable, "-m", "polypruner.cli", "run", "--config",
            CONFIG, "--days", "40", "--tool", "shears", "--seed", "9"]
    for out in (out_a, out_b):
        proc = subprocess.run(args + ["--out", out], capture_output=True,
                              text=True)
        assert proc.returncode == 0, proc.stderr
    names = ["daily.csv", "snapshots.jsonl", "disks.csv", "prunes.csv",
             "tool_commands.csv", "servo_trace.csv", "summary.json"]
    for name in names:
        with open(os.path.join(out_a, name), "rb") as f:
            first = f.read()
        with open(os.path.join(out_b, name), "rb") as f:
            second = f.read()
        assert first == second, f"{name} not byte-identical"
    print("\nPASS criterion 12: identical config + seed reproduce "
          "byte-identical outputs across processes")
