import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from trendoco import harness, svgplot
from trendoco.config import ConfigError, parse_config

CONFIG_TEXT = """
# five-cell smoke grid
[experiment]
ns = [16, 24]
budgets = [1.0]
seeds = [0, 1]
d = 1
kinks = 3
noise = 0.05

[algorithms.flh_trend]
[algorithms.ogd]
steps = [0.1, 0.5]

[oracle]
tol = 0.001
inner_tol = 1e-7
"""


@pytest.fixture()
def config(tmp_path):
    path = tmp_path / "grid.toml"
    path.write_text(CONFIG_TEXT)
    return harness.load_experiment_config(path)


# -- config parsing ------------------------------------------------------------


def test_parse_config_subset():
    tree = parse_config(CONFIG_TEXT)
    assert tree["experiment"]["ns"] == [16, 24]
    assert tree["algorithms"]["ogd"]["steps"] == [0.1, 0.5]
    assert tree["oracle"]["inner_tol"] == 1e-7


def test_parse_config_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("[experiment]\nns 16\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("x = [1, [2]]\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("a = 1\na = 2\n")


def test_config_values_and_strings():
    tree = parse_config('a = "hi # there"\nb = true\nc = -2.5e-3\n')
    assert tree == {"a": "hi # there", "b": True, "c": -2.5e-3}


def test_experiment_validation(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[experiment]\nns = [4]\nbudgets = [1.0]\n[algorithms.ogd]\n")
    with pytest.raises(ConfigError, match="at least 8"):
        harness.load_experiment_config(bad)
    bad.write_text("[experiment]\nns = [16]\nbudgets = [1.0]\n")
    with pytest.raises(ConfigError, match="algorithms"):
        harness.load_experiment_config(bad)
    bad.write_text("[experiment]\nns = [16]\nbudgets = [1.0]\n[algorithms.mystery]\n")
    with pytest.raises(ConfigError, match="unknown algorithm"):
        harness.load_experiment_config(bad)


# -- cells ---------------------------------------------------------------------


def test_empty_grid_is_empty_success(tmp_path):
    cfg = harness.ExperimentConfig(ns=(), budgets=(), seeds=(),
                                   algorithms=(harness.AlgorithmSpec("ogd"),))
    records = harness.run_cells(cfg, out_dir=tmp_path, workers=1)
    assert records == []
    assert (tmp_path / "records.csv").exists()


def test_single_cell_smoke(config, tmp_path):
    cfg = harness.ExperimentConfig(
        ns=(64,), budgets=(1.0,), seeds=(0,), d=1, kinks=3,
        algorithms=(harness.AlgorithmSpec("flh_trend"),),
        oracle_tol=1e-3, oracle_inner_tol=1e-7)
    records = harness.run_cells(cfg, workers=1)
    assert len(records) == 1
    r = records[0]
    assert r.status == "ok"
    assert np.isfinite(r.regret_offline)
    assert r.wall_time_s > 0
    # offline optimal is the strongest comparator of its budget
    assert r.regret_offline >= r.regret_comparator - 1e-8


def test_grid_runs_and_csv_schema(config, tmp_path):
    records = harness.run_cells(config, out_dir=tmp_path, workers=1)
    assert len(records) == 2 * 2 * 2  # ns x seeds x algorithms
    lines = (tmp_path / "records.csv").read_text().splitlines()
    assert lines[0] == ",".join(harness.RECORD_COLUMNS)
    assert len(lines) == 1 + len(records)
    for r in records:
        assert r.status == "ok"
        assert r.regret_offline >= r.regret_comparator - 1e-8


def test_serial_and_parallel_match(config, tmp_path):
    serial = harness.run_cells(config, workers=1)
    parallel = harness.run_cells(config, workers=4)
    for a, b in zip(serial, parallel):
        assert a.cell_id == b.cell_id
        assert a.total_loss == b.total_loss
        assert a.regret_offline == b.regret_offline
        assert a.note == b.note


def test_rerun_is_deterministic_apart_from_wall_time(config, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    harness.run_cells(config, out_dir=out1, workers=1)
    harness.run_cells(config, out_dir=out2, workers=1)

    def strip(path):
        lines = (path / "records.csv").read_text().splitlines()
        idx = harness.RECORD_COLUMNS.index("wall_time_s")
        return [",".join(line.split(",")[:idx]) for line in lines]

    assert strip(out1) == strip(out2)


def test_worker_env_var(monkeypatch):
    monkeypatch.setenv(harness.WORKERS_ENV_VAR, "3")
    assert harness._worker_count(None) == 3
    monkeypatch.delenv(harness.WORKERS_ENV_VAR)
    assert harness._worker_count(2) == 2


# -- scaling fit ---------------------------------------------------------------


def synthetic_records(regrets_by_n, algorithm="flh_trend"):
    records = []
    for n, regrets in regrets_by_n.items():
        for seed, regret in enumerate(regrets):
            records.append(harness.RegretRecord(
                cell_id=f"n{n}-s{seed}", algorithm=algorithm, n=n, d=1,
                budget=1.0, seed=seed, regret_offline=regret, status="ok"))
    return records


def test_fit_recovers_exact_power_law():
    records = synthetic_records({n: [3.0 * n ** 0.2] for n in (64, 128, 256, 512)})
    slope, intercept, r2 = harness.fit_scaling_slope(records)
    assert slope == pytest.approx(0.2, abs=1e-9)
    assert intercept == pytest.approx(np.log(3.0), abs=1e-9)
    assert r2 == pytest.approx(1.0)


def test_fit_constant_regret_has_zero_slope():
    records = synthetic_records({n: [7.0] for n in (64, 128, 256, 512)})
    slope, _, _ = harness.fit_scaling_slope(records)
    assert slope == pytest.approx(0.0, abs=1e-12)


def test_fit_excludes_nonpositive_with_warning():
    records = synthetic_records(
        {64: [1.0], 128: [2.0], 256: [3.0], 512: [4.0], 1024: [-1.0]})
    with pytest.warns(UserWarning, match="nonpositive"):
        slope, _, _ = harness.fit_scaling_slope(records)
    records = synthetic_records({64: [-1.0], 128: [1.0], 256: [1.0], 512: [1.0]})
    with pytest.warns(UserWarning):
        with pytest.raises(ValueError, match="4 distinct"):
            harness.fit_scaling_slope(records)


def test_fit_uses_medians():
    records = synthetic_records(
        {n: [n ** 0.25, n ** 0.25 * 1e3, n ** 0.25 / 1e3] for n in (16, 64, 256, 1024)})
    slope, _, _ = harness.fit_scaling_slope(records)
    assert slope == pytest.approx(0.25, abs=1e-9)


# -- svg ------------------------------------------------------------------------


def test_scaling_svg_single_point_has_marker():
    svg = svgplot.scaling_svg({"algo": ([128], [2.5])})
    root = ET.fromstring(svg)
    ns = "{http://www.w3.org/2000/svg}"
    assert len(root.findall(f"{ns}circle")) == 1


def test_scaling_svg_with_fit_lines():
    svg = svgplot.scaling_svg(
        {"a": ([64, 128, 256], [1.0, 1.4, 2.0]), "b": ([64, 128, 256], [2.0, 3.5, 6.0])},
        fits={"a": (0.25, -0.4), "b": (0.5, -0.8)})
    root = ET.fromstring(svg)
    ns = "{http://www.w3.org/2000/svg}"
    fit_lines = [p for p in root.findall(f"{ns}polyline") if p.get("class") == "fit"]
    assert len(fit_lines) == 2
    assert len(root.findall(f"{ns}circle")) == 6


def test_overlay_svg_contains_both_polylines():
    svg = svgplot.overlay_svg([0.0, 1.0, 0.5, 0.2], [0.1, 0.8, 0.6, 0.3])
    root = ET.fromstring(svg)
    ns = "{http://www.w3.org/2000/svg}"
    kinds = {p.get("class") for p in root.findall(f"{ns}polyline")}
    assert kinds == {"series", "trend"}


def test_svg_empty_inputs_rejected():
    with pytest.raises(ValueError):
        svgplot.scaling_svg({})
    with pytest.raises(ValueError):
        svgplot.overlay_svg([], [])
