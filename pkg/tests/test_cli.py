import json
import os

import pytest

from polypruner import cli
from polypruner.garden import load_garden_config, render_mask
from polypruner.grids import write_mask_image
from conftest import grown

CONFIG = os.path.join(os.path.dirname(__file__), "..", "configs",
                      "garden_small.json")


def write_state_mask(tmp_path):
    state, catalog, ppc, _ = load_garden_config(CONFIG)
    g = grown(state, {i: 10.0 - i for i in range(len(state.plants))})
    mask = render_mask(g, ppc)
    path = tmp_path / "mask.png"
    write_mask_image(path, mask)
    return str(path)


def test_run_and_compare(tmp_path, capsys):
    out_a = str(tmp_path / "a")
    out_b = str(tmp_path / "b")
    assert cli.main(["run", "--config", CONFIG, "--out", out_a, "--days",
                     "35", "--tool", "none", "--seed", "1"]) == 0
    assert cli.main(["run", "--config", CONFIG, "--out", out_b, "--days",
                     "35", "--tool", "shears", "--seed", "1"]) == 0
    capsys.readouterr()
    assert cli.main(["compare", os.path.join(out_a, "summary.json"),
                     os.path.join(out_b, "summary.json")]) == 0
    table = capsys.readouterr().out
    assert "DIVERSITY" in table and "COVERAGE" in table


def test_metrics_subcommand(tmp_path, capsys):
    mask_path = write_state_mask(tmp_path)
    assert cli.main(["metrics", "--config", CONFIG, "--mask", mask_path]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert 0.0 < payload["total_coverage"] < 1.0
    assert set(payload["per_type_coverage"]) == \
        {"kale", "chard", "cilantro", "sorrel"}


def test_track_subcommand(tmp_path, capsys):
    mask_path = write_state_mask(tmp_path)
    assert cli.main(["track", "--config", CONFIG, "--mask", mask_path,
                     "--tracker", "kmeans"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("day,plant_index")
    assert len(lines) == 1 + 8


def test_plan_subcommand(tmp_path, capsys):
    mask_path = write_state_mask(tmp_path)
    disks_path = tmp_path / "disks.csv"
    assert cli.main(["track", "--config", CONFIG, "--mask", mask_path,
                     "--tracker", "kmeans", "--out", str(disks_path)]) == 0
    capsys.readouterr()
    assert cli.main(["plan", "--config", CONFIG, "--mask", mask_path,
                     "--disks", str(disks_path), "--target", "0"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["plant_index"] == 0
    assert payload["method"] in ("learned", "baseline")


def test_plan_reads_latest_day_from_multiday_csv(tmp_path, capsys):
    mask_path = write_state_mask(tmp_path)
    disks_path = tmp_path / "disks.csv"
    with open(disks_path, "w") as f:
        f.write("day,plant_index,type_id,cx_cm,cy_cm,r_cm,tracker\n")
        f.write("1,0,1,30.0,32.0,0.0,bfs\n")      # stale: radius still zero
        f.write("40,0,1,30.0,32.0,10.0,bfs\n")
    assert cli.main(["plan", "--config", CONFIG, "--mask", mask_path,
                     "--disks", str(disks_path), "--target", "0"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["method"] in ("learned", "baseline")
    # explicit day selection of an empty day fails cleanly
    assert cli.main(["plan", "--config", CONFIG, "--mask", mask_path,
                     "--disks", str(disks_path), "--day", "7",
                     "--target", "0"]) == 2


def test_env_defaults(tmp_path, monkeypatch):
    monkeypatch.setenv("POLYPRUNER_TOOL", "none")
    monkeypatch.setenv("POLYPRUNER_DAYS", "31")
    parser = cli.build_parser()
    args = parser.parse_args(["run", "--config", CONFIG,
                              "--out", str(tmp_path / "env")])
    assert args.tool == "none"
    assert args.days == 31


def test_unknown_tool_rejected(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["run", "--config", CONFIG, "--out", str(tmp_path),
                  "--tool", "flamethrower"])
