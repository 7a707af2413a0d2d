import csv
import shutil
import subprocess
import sys

import numpy as np
import pytest

from glucb_plots.cli import main as plots_main
from glucb_plots.figures import BREAKPOINT_STYLE, PlotSpec, build_figure, render
from glucb_plots.io import SchemaError, load_regret_quantiles, load_theta_snapshots


def write_regret_csv(path, policies=("SW-GLUCB",), rounds=10, collapse_band=False, seed=0):
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["round", "policy", "mean", "q05", "q95"])
        for policy in policies:
            cum = np.cumsum(rng.uniform(0.0, 1.0, rounds))
            for t in range(1, rounds + 1):
                mean = cum[t - 1]
                lo = mean if collapse_band else mean * 0.9
                hi = mean if collapse_band else mean * 1.1
                writer.writerow([t, policy, f"{mean:.17g}", f"{lo:.17g}", f"{hi:.17g}"])
    return path


def write_snapshot_csv(path, policies=("SW-GLUCB", "GLUCB"), rounds=(100, 200), runs=3, seed=1):
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["run", "round", "policy", "component_index", "value"])
        for policy in policies:
            for round_no in rounds:
                for run in range(runs):
                    for comp in range(2):
                        writer.writerow([run, round_no, policy, comp, f"{rng.normal():.17g}"])
    return path


def test_regret_band_renders(tmp_path):
    csv_path = write_regret_csv(tmp_path / "regret.csv")
    out = tmp_path / "regret.png"
    spec = PlotSpec("regret_band", (str(csv_path),), str(out))
    render(spec)
    assert out.exists() and out.stat().st_size > 0


def test_breakpoint_lines_appear(tmp_path):
    csv_path = write_regret_csv(tmp_path / "regret.csv", rounds=3500)
    spec = PlotSpec("regret_band", (str(csv_path),), str(tmp_path / "x.png"), breakpoints=(1000, 2000, 3000))
    fig, ax, _ = build_figure(spec)
    dashed = [
        line
        for line in ax.lines
        if line.get_linestyle() == "--" and line.get_color() == BREAKPOINT_STYLE["color"]
    ]
    assert len(dashed) == 3
    assert sorted(line.get_xdata()[0] for line in dashed) == [1000, 2000, 3000]


def test_band_collapses_when_quantiles_equal_mean(tmp_path):
    csv_path = write_regret_csv(tmp_path / "regret.csv", collapse_band=True)
    spec = PlotSpec("regret_band", (str(csv_path),), str(tmp_path / "c.png"))
    _, _, data = build_figure(spec)
    series = data["SW-GLUCB"]
    np.testing.assert_array_equal(series.q05, series.mean)
    np.testing.assert_array_equal(series.q95, series.mean)
    render(spec)
    assert (tmp_path / "c.png").stat().st_size > 0


def test_round_trip_full_precision(tmp_path):
    csv_path = write_regret_csv(tmp_path / "regret.csv", rounds=25, seed=9)
    data = load_regret_quantiles(csv_path)
    with open(csv_path, newline="", encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    raw_mean = np.array([float(r["mean"]) for r in rows])
    np.testing.assert_array_equal(data["SW-GLUCB"].mean, raw_mean)
    rounds = np.array([int(r["round"]) for r in rows])
    np.testing.assert_array_equal(data["SW-GLUCB"].rounds, rounds)


def test_theta_scatter_renders_with_truth(tmp_path):
    csv_path = write_snapshot_csv(tmp_path / "snaps.csv")
    out = tmp_path / "scatter.png"
    spec = PlotSpec(
        "theta_scatter",
        (str(csv_path),),
        str(out),
        truth_points=((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)),
    )
    fig, ax, data = build_figure(spec)
    assert set(data) == {"SW-GLUCB", "GLUCB"}
    assert data["SW-GLUCB"][100].shape == (3, 2)
    render(spec)
    assert out.stat().st_size > 0


def test_replay_proportion_renders(tmp_path):
    csv_path = write_regret_csv(tmp_path / "regret.csv", policies=("GLUCB", "SW-GLUCB"), rounds=50)
    out = tmp_path / "prop.png"
    spec = PlotSpec("replay_proportion", (str(csv_path),), str(out), breakpoints=(25,))
    _, ax, data = build_figure(spec)
    series = data["GLUCB"]
    np.testing.assert_allclose(
        1.0 - series.mean / series.rounds, 1.0 - series.mean / np.arange(1, 51), atol=1e-15
    )
    render(spec)
    assert out.stat().st_size > 0


def test_unknown_column_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["round", "policy", "mean", "q05", "q95", "extra"])
        writer.writerow([1, "GLUCB", 0.5, 0.4, 0.6, 1.0])
    with pytest.raises(SchemaError, match="extra"):
        load_regret_quantiles(path)


def test_missing_column_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["round", "policy", "mean", "q05"])
        writer.writerow([1, "GLUCB", 0.5, 0.4])
    with pytest.raises(SchemaError, match="q95"):
        load_regret_quantiles(path)


def test_missing_file_names_path(tmp_path):
    missing = tmp_path / "nope.csv"
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_regret_quantiles(missing)


def test_snapshot_schema_enforced(tmp_path):
    path = tmp_path / "bad_snaps.csv"
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["run", "round", "policy", "value"])
        writer.writerow([0, 100, "GLUCB", 0.5])
    with pytest.raises(SchemaError, match="component_index"):
        load_theta_snapshots(path)


def test_cli_renders_and_reports(tmp_path, capsys):
    csv_path = write_regret_csv(tmp_path / "regret.csv")
    out = tmp_path / "cli.png"
    code = plots_main(["regret_band", "--in", str(csv_path), "--out", str(out), "--breakpoints", "5"])
    assert code == 0
    assert out.exists()
    assert "wrote" in capsys.readouterr().out


def test_cli_schema_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    with open(path, "w", newline="", encoding="utf-8") as handle:
        handle.write("round,policy,mean,q05,q95,extra\n1,G,0,0,0,0\n")
    code = plots_main(["regret_band", "--in", str(path), "--out", str(tmp_path / "x.png")])
    assert code == 2
    assert "extra" in capsys.readouterr().err


def test_cli_missing_file_exit_code(tmp_path, capsys):
    code = plots_main(["regret_band", "--in", str(tmp_path / "absent.csv"), "--out", str(tmp_path / "x.png")])
    assert code == 2
    capsys.readouterr()


@pytest.mark.skipif(shutil.which("bench") is None, reason="benchmark harness CLI not installed")
def test_end_to_end_from_harness_output(tmp_path):
    """Render every figure kind from CSVs produced by an actual harness run."""
    cfg = tmp_path / "bench.cfg"
    cfg.write_text(
        "experiment = sim2d\nruns = 2\nhorizon = 30\ntuning = manual\ntau = 10\ngamma = 0.9\n"
        "snapshot_interval = 10\nworkers = 1\npolicies = GLUCB, SW-GLUCB\n",
        encoding="utf-8",
    )
    out_dir = tmp_path / "bench_out"
    subprocess.run(
        ["bench", "run", "--config", str(cfg), "--out", str(out_dir)],
        check=True,
        capture_output=True,
        text=True,
    )
    regret_csv = out_dir / "regret_mean_quantiles.csv"
    snaps_csv = out_dir / "theta_snapshots.csv"
    for kind, source, extra in [
        ("regret_band", regret_csv, ["--breakpoints", "10,20"]),
        ("theta_scatter", snaps_csv, ["--truth", "1,0;-1,0"]),
        ("replay_proportion", regret_csv, []),
    ]:
        out = tmp_path / f"{kind}.png"
        code = plots_main([kind, "--in", str(source), "--out", str(out)] + extra)
        assert code == 0
        assert out.stat().st_size > 0
