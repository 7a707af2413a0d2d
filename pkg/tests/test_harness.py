import csv
import json
import math

import numpy as np
import pytest

from glucb.cli import main as bench_main
from glucb.environments import write_synthetic_replay_csv
from glucb.harness import (
    ConfigError,
    ExperimentConfig,
    concentration_threshold,
    config_hash,
    emit_csv,
    load_config,
    run_experiment,
    validate_concentration,
)

SMALL_SIM = dict(
    experiment="sim2d",
    runs=3,
    horizon=40,
    policies=("GLUCB", "SW-GLUCB", "D-GLUCB", "LinUCB"),
    tuning="manual",
    tau=10,
    gamma=0.9,
    snapshot_interval=20,
    workers=1,
    base_seed=7,
)


def small_config(**overrides):
    params = dict(SMALL_SIM)
    params.update(overrides)
    return ExperimentConfig(**params)


@pytest.fixture(scope="module")
def small_result(tmp_path_factory):
    out = tmp_path_factory.mktemp("small_run")
    config = small_config(output_dir=str(out))
    result = run_experiment(config)
    return config, result, out


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "bench.cfg"
    path.write_text(
        "# sample config\n"
        "experiment = sim2d\n"
        "runs = 4\n"
        "horizon = 50\n"
        "lambda = 2.0   # alias for lam\n"
        "delta = 0.1\n"
        "policies = SW-GLUCB, D-GLUCB\n"
        "tuning = manual\n"
        "tau = 12\n"
        "gamma = 0.95\n"
        "conc_gammas = 0.9,0.99\n",
        encoding="utf-8",
    )
    config = load_config(path)
    assert config.runs == 4
    assert config.lam == 2.0
    assert config.policies == ("SW-GLUCB", "D-GLUCB")
    assert config.conc_gammas == (0.9, 0.99)


def test_config_overrides_win(tmp_path):
    path = tmp_path / "bench.cfg"
    path.write_text("experiment = sim2d\nruns = 4\n", encoding="utf-8")
    config = load_config(path, {"runs": 9, "policies": ("GLUCB",), "base_seed": 3})
    assert config.runs == 9
    assert config.policies == ("GLUCB",)
    assert config.base_seed == 3


def test_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("experiment = sim2d\nwibble = 3\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="wibble"):
        load_config(path)


def test_config_rejects_unknown_policy():
    with pytest.raises(ConfigError, match="unknown policies"):
        small_config(policies=("GLUCB", "MYSTERY")).validate()


def test_config_rejects_missing_manual_knobs():
    with pytest.raises(ConfigError):
        small_config(tau=None).validate()
    with pytest.raises(ConfigError):
        small_config(gamma=None).validate()


def test_cumulative_regret_monotone(small_result):
    _, result, _ = small_result
    for name in result.policies:
        diffs = np.diff(result.per_run[name], axis=1)
        assert np.all(diffs >= -1e-12)


def test_quantiles_bracket_mean(small_result):
    _, result, _ = small_result
    for name in result.policies:
        assert np.all(result.q05[name] <= result.mean[name] + 1e-12)
        assert np.all(result.mean[name] <= result.q95[name] + 1e-12)


def test_csv_schemas_and_row_counts(small_result):
    config, result, out = small_result
    with open(out / "regret_mean_quantiles.csv", newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["round", "policy", "mean", "q05", "q95"]
    assert len(rows) - 1 == len(result.policies) * config.horizon
    per_policy_rounds = {}
    for round_no, policy, *_ in rows[1:]:
        per_policy_rounds.setdefault(policy, []).append(int(round_no))
    for rounds in per_policy_rounds.values():
        assert rounds == sorted(rounds)
        assert len(set(rounds)) == len(rounds)

    with open(out / "theta_snapshots.csv", newline="", encoding="utf-8") as handle:
        snap_rows = list(csv.reader(handle))
    assert snap_rows[0] == ["run", "round", "policy", "component_index", "value"]
    snaps_per_policy = config.horizon // config.snapshot_interval
    assert len(snap_rows) - 1 == len(result.policies) * config.runs * snaps_per_policy * 2

    with open(out / "regret.csv", newline="", encoding="utf-8") as handle:
        run_rows = list(csv.reader(handle))
    assert run_rows[0] == ["run", "round", "policy", "cum_regret"]
    assert len(run_rows) - 1 == len(result.policies) * config.runs * config.horizon


def test_csv_line_endings_are_lf(small_result):
    _, _, out = small_result
    raw = (out / "regret_mean_quantiles.csv").read_bytes()
    assert b"\r" not in raw


def test_aggregate_matches_independent_recompute(small_result):
    config, result, out = small_result
    per_run = {}
    with open(out / "regret.csv", newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            key = (row["policy"], int(row["run"]))
            per_run.setdefault(key, {})[int(row["round"])] = float(row["cum_regret"])
    for name in result.policies:
        matrix = np.array(
            [
                [per_run[(name, run)][round_no] for round_no in range(1, config.horizon + 1)]
                for run in result.run_indices
            ]
        )
        np.testing.assert_allclose(matrix.mean(axis=0), result.mean[name], atol=1e-12, rtol=0)
        np.testing.assert_allclose(
            np.quantile(matrix, 0.05, axis=0, method="linear"), result.q05[name], atol=1e-12, rtol=0
        )
        np.testing.assert_allclose(
            np.quantile(matrix, 0.95, axis=0, method="linear"), result.q95[name], atol=1e-12, rtol=0
        )


def test_manifest_contents(small_result):
    config, result, out = small_result
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_hash"] == config_hash(config)
    assert manifest["base_seed"] == config.base_seed
    assert manifest["runs_completed"] == config.runs
    assert manifest["failures"] == []
    assert manifest["tau"] == config.tau


def test_identical_config_gives_byte_identical_output(tmp_path):
    first = tmp_path / "a"
    second = tmp_path / "b"
    run_experiment(small_config(runs=2, output_dir=str(first)))
    run_experiment(small_config(runs=2, output_dir=str(second)))
    for name in ("regret_mean_quantiles.csv", "theta_snapshots.csv", "regret.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_parallel_degree_does_not_change_output(tmp_path):
    serial = tmp_path / "serial"
    parallel = tmp_path / "parallel"
    run_experiment(small_config(runs=3, workers=1, output_dir=str(serial)))
    run_experiment(small_config(runs=3, workers=3, output_dir=str(parallel)))
    for name in ("regret_mean_quantiles.csv", "theta_snapshots.csv", "regret.csv"):
        assert (serial / name).read_bytes() == (parallel / name).read_bytes()


def test_single_run_collapses_quantiles(tmp_path):
    config = small_config(runs=1, output_dir=str(tmp_path / "one"))
    result = run_experiment(config)
    for name in result.policies:
        np.testing.assert_array_equal(result.q05[name], result.mean[name])
        np.testing.assert_array_equal(result.q95[name], result.mean[name])


def test_single_round_run_bounds(tmp_path):
    config = small_config(runs=1, horizon=1, snapshot_interval=1, output_dir=str(tmp_path / "tiny"))
    result = run_experiment(config)
    for name in result.policies:
        assert 0.0 <= result.mean[name][0] <= 1.0


def test_full_precision_round_trip(tmp_path):
    config = small_config(runs=2, output_dir=str(tmp_path / "prec"))
    result = run_experiment(config)
    with open(tmp_path / "prec" / "regret_mean_quantiles.csv", newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        rows = [row for row in reader if row["policy"] == result.policies[0]]
    parsed = np.array([float(row["mean"]) for row in rows])
    np.testing.assert_array_equal(parsed, result.mean[result.policies[0]])


def test_replay_experiment_runs(tmp_path):
    csv_path = tmp_path / "synthetic.csv"
    write_synthetic_replay_csv(csv_path, np.random.default_rng(99), n_per_class=80, separation=2.5)
    config = ExperimentConfig(
        experiment="replay",
        replay_csv=str(csv_path),
        horizon=60,
        invert_at=30,
        runs=2,
        workers=1,
        policies=("GLUCB", "SW-GLUCB"),
        tuning="manual",
        tau=15,
        snapshot_interval=30,
        output_dir=str(tmp_path / "replay_out"),
    )
    result = run_experiment(config)
    for name in result.policies:
        assert result.per_run[name].shape == (2, 60)
        assert np.all(np.diff(result.per_run[name], axis=1) >= 0.0)
        assert result.snapshots[name][30].shape == (2, 9)


def test_replay_requires_csv():
    with pytest.raises(ConfigError):
        ExperimentConfig(experiment="replay").validate()


def test_concentration_zero_noise_never_violates():
    config = ExperimentConfig(
        experiment="concentration", conc_noise="zero", conc_replications=50, conc_horizon=100, base_seed=5
    )
    report = validate_concentration(config)
    assert all(freq == 0.0 for freq in report.frequencies.values())
    assert report.passed


def test_concentration_threshold_monotone_in_t():
    args = dict(gamma=0.95, delta=0.1, sigma=0.5, d=2, L=1.0, c_mu=0.19661193324148185, lam=1.0)
    values = [concentration_threshold(t, **args) for t in range(1, 200)]
    assert all(a <= b + 1e-15 for a, b in zip(values, values[1:]))


def test_concentration_report_threshold_formula():
    config = ExperimentConfig(experiment="concentration", conc_replications=1000, conc_horizon=10, conc_delta=0.1)
    report = validate_concentration(config)
    assert report.threshold == pytest.approx(0.1 + 2.0 * math.sqrt(0.1 / 1000.0), rel=1e-12)


def test_cli_run_and_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text(
        "experiment = sim2d\nruns = 1\nhorizon = 10\npolicies = GLUCB\n"
        "tuning = manual\nsnapshot_interval = 5\nworkers = 1\n",
        encoding="utf-8",
    )
    out_dir = tmp_path / "cli_out"
    code = bench_main(["run", "--config", str(cfg), "--out", str(out_dir), "--seed", "11", "--runs", "1"])
    assert code == 0
    assert (out_dir / "regret_mean_quantiles.csv").exists()
    captured = capsys.readouterr()
    assert "GLUCB" in captured.out


def test_cli_policy_filter(tmp_path):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text(
        "experiment = sim2d\nruns = 1\nhorizon = 10\ntuning = manual\ntau = 5\ngamma = 0.9\n"
        "snapshot_interval = 5\nworkers = 1\n",
        encoding="utf-8",
    )
    out_dir = tmp_path / "filtered"
    code = bench_main(["run", "--config", str(cfg), "--policy", "LinUCB", "--out", str(out_dir)])
    assert code == 0
    with open(out_dir / "regret_mean_quantiles.csv", newline="", encoding="utf-8") as handle:
        policies = {row["policy"] for row in csv.DictReader(handle)}
    assert policies == {"LinUCB"}


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("experiment = warp\n", encoding="utf-8")
    assert bench_main(["run", "--config", str(cfg)]) == 2
    assert bench_main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    capsys.readouterr()


def test_cli_runtime_error_exit_code(tmp_path, capsys):
    bad_csv = tmp_path / "broken.csv"
    bad_csv.write_text("a,b\n1,2\n", encoding="utf-8")
    cfg = tmp_path / "replay.cfg"
    cfg.write_text(
        f"experiment = replay\nreplay_csv = {bad_csv}\nruns = 1\nhorizon = 10\n"
        "policies = GLUCB\ntuning = manual\nworkers = 1\n",
        encoding="utf-8",
    )
    assert bench_main(["run", "--config", str(cfg)]) == 3
    capsys.readouterr()


def test_cli_validate_concentration(tmp_path, capsys):
    cfg = tmp_path / "conc.cfg"
    cfg.write_text(
        "experiment = concentration\nconc_replications = 50\nconc_horizon = 50\nconc_gammas = 0.9\n",
        encoding="utf-8",
    )
    assert bench_main(["validate-concentration", "--config", str(cfg)]) == 0
    assert "gamma=0.9" in capsys.readouterr().out
