"""Benchmark harness: experiment config, multi-run orchestration, aggregation, CSV output."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .environments import (
    ReplayDataset,
    abrupt_2d_schedule,
    load_replay_dataset,
    replay_round,
    sample_round,
    sample_unit_ball,
)
from .links import LOGISTIC, GlmConstants, sigma_from_bounded_rewards
from .policies import POLICY_NAMES, PolicyConfig, make_policy, tune_gamma, tune_tau


class ConfigError(ValueError):
    """Invalid experiment configuration; reported before any run starts."""


EXPERIMENTS = ("sim2d", "replay", "concentration")
TUNING_MODES = ("known-breaks", "unknown-breaks", "manual")
NOISE_KINDS = ("gaussian", "zero")


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; every field maps 1:1 to a config-file key."""

    experiment: str = "sim2d"
    policies: tuple[str, ...] = POLICY_NAMES
    runs: int = 100
    base_seed: int = 20240
    horizon: int = 6000
    delta: float = 0.05
    lam: float = 1.0
    tuning: str = "known-breaks"
    tau: int | None = None
    gamma: float | None = None
    gamma_t: int | None = None
    k_actions: int = 6
    dim: int = 2
    snapshot_interval: int = 1000
    output_dir: str = "out"
    workers: int = 0
    replay_csv: str | None = None
    invert_at: int = 1000
    s_bound: float = 1.0
    conc_gammas: tuple[float, ...] = (0.9, 0.99)
    conc_replications: int = 1000
    conc_horizon: int = 400
    conc_delta: float = 0.1
    conc_noise: str = "gaussian"

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.tuning not in TUNING_MODES:
            raise ConfigError(f"tuning must be one of {TUNING_MODES}, got {self.tuning!r}")
        if self.conc_noise not in NOISE_KINDS:
            raise ConfigError(f"conc_noise must be one of {NOISE_KINDS}, got {self.conc_noise!r}")
        unknown = [p for p in self.policies if p not in POLICY_NAMES]
        if unknown:
            raise ConfigError(f"unknown policies {unknown}; choose from {POLICY_NAMES}")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        if self.runs < 1 or self.horizon < 1:
            raise ConfigError("runs and horizon must be >= 1")
        if self.base_seed < 0:
            raise ConfigError("base_seed must be non-negative")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.lam <= 0:
            raise ConfigError("lambda must be strictly positive")
        if self.snapshot_interval < 1:
            raise ConfigError("snapshot_interval must be >= 1")
        if self.tuning == "manual":
            needs_tau = any(p.startswith("SW-") for p in self.policies)
            needs_gamma = any(p.startswith("D-") for p in self.policies)
            if needs_tau and self.tau is None:
                raise ConfigError("manual tuning with a sliding-window policy requires tau")
            if needs_gamma and self.gamma is None:
                raise ConfigError("manual tuning with a discounted policy requires gamma")
        if self.experiment == "replay" and self.replay_csv is None:
            raise ConfigError("replay experiment requires replay_csv")
        if self.conc_replications < 1 or self.conc_horizon < 1:
            raise ConfigError("conc_replications and conc_horizon must be >= 1")
        if any(not 0.0 < g < 1.0 for g in self.conc_gammas):
            raise ConfigError("conc_gammas must lie in (0, 1)")
        if not 0.0 < self.conc_delta < 1.0:
            raise ConfigError("conc_delta must lie in (0, 1)")


def _parse_bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


_LIST_FIELDS = {"policies": str, "conc_gammas": float}
_OPTIONAL_INT = {"tau", "gamma_t"}
_OPTIONAL_FLOAT = {"gamma"}
_OPTIONAL_STR = {"replay_csv"}
_KEY_ALIASES = {"lambda": "lam"}


def _coerce(name: str, raw: str):
    raw = raw.strip()
    if name in _LIST_FIELDS:
        cast = _LIST_FIELDS[name]
        return tuple(cast(part.strip()) for part in raw.split(",") if part.strip())
    if name in _OPTIONAL_STR:
        return raw or None
    if name in _OPTIONAL_INT:
        return None if raw.lower() in ("", "none") else int(raw)
    if name in _OPTIONAL_FLOAT:
        return None if raw.lower() in ("", "none") else float(raw)
    default = getattr(ExperimentConfig, name)
    if isinstance(default, bool):
        return _parse_bool(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a flat ``key = value`` config file; ``overrides`` (CLI flags) win over the file."""
    values: dict = {}
    try:
        with open(path, encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                if "=" not in text:
                    raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {text!r}")
                key, raw = (part.strip() for part in text.split("=", 1))
                key = _KEY_ALIASES.get(key, key)
                if key not in ExperimentConfig.__dataclass_fields__:
                    raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
                try:
                    values[key] = _coerce(key, raw)
                except ValueError as exc:
                    raise ConfigError(f"{path}:{line_no}: bad value for {key!r}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    config = ExperimentConfig(**values)
    config.validate()
    return config


def _policy_seed(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "big")


def resolve_policy_params(config: ExperimentConfig, d: int, L: float, S: float, m: float) -> PolicyConfig:
    """Fill the forgetting parameters from the tuning mode and build the shared PolicyConfig."""
    if config.tuning == "manual":
        tau = config.tau
        gamma = config.gamma
        d_gamma = None if gamma is None else -math.log(1.0 - gamma) / (1.0 - gamma)
    else:
        gamma_t = config.gamma_t if config.tuning == "known-breaks" else None
        tau = tune_tau(d, config.horizon, gamma_t)
        gamma, d_gamma = tune_gamma(d, config.horizon, gamma_t)
    return PolicyConfig(
        d=d,
        horizon=config.horizon,
        delta=config.delta,
        lam=config.lam,
        L=L,
        S=S,
        m=m,
        tau=tau,
        gamma=gamma,
        d_gamma=d_gamma,
    )


def policy_view(base: PolicyConfig, name: str) -> PolicyConfig:
    """Strip the forgetting knobs a given policy must not see (stationary uses min(t, tau) = t)."""
    if name in ("GLUCB", "LinUCB"):
        return replace(base, tau=None, gamma=None, d_gamma=None)
    if name.startswith("SW-"):
        return replace(base, gamma=None, d_gamma=None)
    if name.startswith("D-"):
        return replace(base, tau=None)
    return base


@dataclass
class RunResult:
    """One policy's trace for one run: cumulative regret per round plus estimator snapshots."""

    run_index: int
    policy: str
    cum_regret: np.ndarray
    snapshots: dict[int, np.ndarray]


_DATASET_CACHE: dict = {}


def _cached_dataset(path: str) -> ReplayDataset:
    if path not in _DATASET_CACHE:
        _DATASET_CACHE[path] = load_replay_dataset(path)
    return _DATASET_CACHE[path]


def _sim2d_setup(config: ExperimentConfig):
    schedule = abrupt_2d_schedule(config.horizon)
    gamma_t = config.gamma_t if config.gamma_t is not None else schedule.num_changes
    effective = replace(config, gamma_t=gamma_t)
    base = resolve_policy_params(effective, d=schedule.dim, L=1.0, S=1.0, m=1.0)
    return schedule, base


def _replay_setup(config: ExperimentConfig):
    dataset = _cached_dataset(config.replay_csv)
    gamma_t = config.gamma_t if config.gamma_t is not None else 1
    effective = replace(config, gamma_t=gamma_t)
    base = resolve_policy_params(effective, d=dataset.dim, L=dataset.l_bound, S=config.s_bound, m=1.0)
    return dataset, base


def _simulate_sim2d_run(config: ExperimentConfig, run_index: int) -> list[RunResult]:
    schedule, base = _sim2d_setup(config)
    link = LOGISTIC
    env_rng = np.random.default_rng([config.base_seed + run_index, 0])
    rounds = [
        sample_round(schedule, t, config.k_actions, env_rng, link) for t in range(1, config.horizon + 1)
    ]
    mus = [np.asarray(link.evaluate(r.action_set @ r.theta_star), dtype=float) for r in rounds]
    results = []
    for name in config.policies:
        policy = make_policy(name, link, policy_view(base, name))
        reward_rng = np.random.default_rng([config.base_seed + run_index, 1, _policy_seed(name)])
        cum = np.empty(config.horizon)
        snapshots: dict[int, np.ndarray] = {}
        total = 0.0
        for t, (round_, mu_values) in enumerate(zip(rounds, mus), start=1):
            decision = policy.start_round(round_.action_set)
            idx = decision.chosen_index
            reward = 1.0 if reward_rng.random() < mu_values[idx] else 0.0
            policy.observe(round_.action_set[idx], reward)
            total += round_.best_mean - mu_values[idx]
            cum[t - 1] = total
            if t % config.snapshot_interval == 0:
                snapshots[t] = np.array(policy.last_solution.theta_hat)
        results.append(RunResult(run_index, name, cum, snapshots))
    return results


def _simulate_replay_run(config: ExperimentConfig, run_index: int) -> list[RunResult]:
    dataset, base = _replay_setup(config)
    link = LOGISTIC
    env_rng = np.random.default_rng([config.base_seed + run_index, 0])
    rounds = [replay_round(dataset, t, config.invert_at, env_rng) for t in range(1, config.horizon + 1)]
    results = []
    for name in config.policies:
        policy = make_policy(name, link, policy_view(base, name))
        cum = np.empty(config.horizon)
        snapshots: dict[int, np.ndarray] = {}
        total = 0.0
        for t, round_ in enumerate(rounds, start=1):
            decision = policy.start_round(round_.action_set)
            idx = decision.chosen_index
            reward = 1.0 if idx == round_.target_index else 0.0
            policy.observe(round_.action_set[idx], reward)
            total += 1.0 - reward
            cum[t - 1] = total
            if t % config.snapshot_interval == 0:
                snapshots[t] = np.array(policy.last_solution.theta_hat)
        results.append(RunResult(run_index, name, cum, snapshots))
    return results


def _run_one(config: ExperimentConfig, run_index: int):
    try:
        if config.experiment == "sim2d":
            return _simulate_sim2d_run(config, run_index)
        if config.experiment == "replay":
            return _simulate_replay_run(config, run_index)
        raise ConfigError(f"experiment {config.experiment!r} is not runnable per-run")
    except ConfigError:
        raise
    except Exception as exc:  # noqa: BLE001 - reported with the run's seed, run is dropped
        return (run_index, config.base_seed + run_index, f"{type(exc).__name__}: {exc}")


@dataclass
class AggregateResult:
    """Across-run aggregates: per-round mean and 5%/95% quantiles of cumulative regret."""

    config: ExperimentConfig
    policies: tuple[str, ...]
    rounds: np.ndarray
    mean: dict[str, np.ndarray]
    q05: dict[str, np.ndarray]
    q95: dict[str, np.ndarray]
    per_run: dict[str, np.ndarray]
    run_indices: list[int]
    snapshots: dict[str, dict[int, np.ndarray]]
    failures: list[tuple[int, int, str]]
    elapsed_seconds: float
    policy_params: PolicyConfig


def run_experiment(config: ExperimentConfig, write_output: bool = True) -> AggregateResult:
    """Run every (policy, run) pair deterministically, aggregate, and emit the CSV set."""
    config.validate()
    if config.experiment == "concentration":
        raise ConfigError("use validate_concentration for the concentration experiment")
    if config.experiment == "sim2d":
        _, base = _sim2d_setup(config)
    else:
        _, base = _replay_setup(config)

    started = time.perf_counter()
    workers = config.workers if config.workers > 0 else (os.cpu_count() or 1)
    workers = max(1, min(workers, config.runs))
    outcomes = []
    if workers == 1:
        for run_index in range(config.runs):
            outcomes.append(_run_one(config, run_index))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_one, [config] * config.runs, range(config.runs)))

    failures = [item for item in outcomes if isinstance(item, tuple)]
    successes = [item for item in outcomes if not isinstance(item, tuple)]
    if not successes:
        raise RuntimeError(f"all {config.runs} runs failed; first failure: {failures[0]}")

    run_indices = sorted(r[0].run_index for r in successes)
    by_policy: dict[str, list[RunResult]] = {name: [] for name in config.policies}
    for run_results in successes:
        for result in run_results:
            by_policy[result.policy].append(result)
    for name in config.policies:
        by_policy[name].sort(key=lambda r: r.run_index)

    rounds = np.arange(1, config.horizon + 1)
    mean, q05, q95, per_run, snapshots = {}, {}, {}, {}, {}
    for name in config.policies:
        matrix = np.vstack([r.cum_regret for r in by_policy[name]])
        per_run[name] = matrix
        mean[name] = matrix.mean(axis=0)
        q05[name] = np.quantile(matrix, 0.05, axis=0, method="linear")
        q95[name] = np.quantile(matrix, 0.95, axis=0, method="linear")
        snap_rounds = sorted(by_policy[name][0].snapshots)
        snapshots[name] = {
            r: np.vstack([res.snapshots[r] for res in by_policy[name]]) for r in snap_rounds
        }

    result = AggregateResult(
        config=config,
        policies=config.policies,
        rounds=rounds,
        mean=mean,
        q05=q05,
        q95=q95,
        per_run=per_run,
        run_indices=run_indices,
        snapshots=snapshots,
        failures=failures,
        elapsed_seconds=time.perf_counter() - started,
        policy_params=base,
    )
    if write_output:
        emit_csv(result, config.output_dir)
    return result


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def emit_csv(result: AggregateResult, output_dir) -> dict[str, str]:
    """Write the aggregate, snapshot and per-run CSVs plus a manifest; returns the paths."""
    os.makedirs(output_dir, exist_ok=True)
    paths = {
        "aggregate": os.path.join(output_dir, "regret_mean_quantiles.csv"),
        "snapshots": os.path.join(output_dir, "theta_snapshots.csv"),
        "per_run": os.path.join(output_dir, "regret.csv"),
        "manifest": os.path.join(output_dir, "manifest.json"),
    }
    try:
        with open(paths["aggregate"], "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["round", "policy", "mean", "q05", "q95"])
            for name in result.policies:
                for i, round_no in enumerate(result.rounds):
                    writer.writerow(
                        [round_no, name, _fmt(result.mean[name][i]), _fmt(result.q05[name][i]), _fmt(result.q95[name][i])]
                    )
        with open(paths["snapshots"], "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["run", "round", "policy", "component_index", "value"])
            for name in result.policies:
                for round_no, matrix in sorted(result.snapshots[name].items()):
                    for row, run_index in enumerate(result.run_indices):
                        for comp in range(matrix.shape[1]):
                            writer.writerow([run_index, round_no, name, comp, _fmt(matrix[row, comp])])
        with open(paths["per_run"], "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["run", "round", "policy", "cum_regret"])
            for name in result.policies:
                matrix = result.per_run[name]
                for row, run_index in enumerate(result.run_indices):
                    writer.writerows(
                        (run_index, round_no, name, _fmt(matrix[row, i]))
                        for i, round_no in enumerate(result.rounds)
                    )
        manifest = {
            "version": _package_version(),
            "config_hash": config_hash(result.config),
            "base_seed": result.config.base_seed,
            "experiment": result.config.experiment,
            "policies": list(result.policies),
            "runs_requested": result.config.runs,
            "runs_completed": len(result.run_indices),
            "failures": [
                {"run_index": idx, "seed": seed, "error": message} for idx, seed, message in result.failures
            ],
            "tau": result.policy_params.tau,
            "gamma": result.policy_params.gamma,
            "d_gamma": result.policy_params.d_gamma,
            "elapsed_seconds": result.elapsed_seconds,
        }
        with open(paths["manifest"], "w", encoding="utf-8") as handle:
            json.dump(manifest, handle, indent=2, sort_keys=True)
            handle.write("\n")
    except OSError as exc:
        raise IOError(f"cannot write results under {output_dir}: {exc}") from exc
    return paths


def _package_version() -> str:
    from . import __version__

    return __version__


def config_hash(config: ExperimentConfig) -> str:
    payload = json.dumps(asdict(config), sort_keys=True, default=list)
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class ConcentrationReport:
    """Anytime violation frequencies of the self-normalized deviation bound per gamma."""

    delta: float
    replications: int
    horizon: int
    noise: str
    frequencies: dict[float, float]
    threshold: float = field(init=False)

    def __post_init__(self):
        self.threshold = self.delta + 2.0 * math.sqrt(self.delta / self.replications)

    @property
    def passed(self) -> bool:
        return all(freq <= self.threshold for freq in self.frequencies.values())


def concentration_threshold(t: int, gamma: float, delta: float, sigma: float, d: int, L: float, c_mu: float, lam: float) -> float:
    """Deviation threshold for || sum_s gamma^{-s} A_s eta_s || in the scaled inverse-Gram norm."""
    log_gamma = math.log1p(gamma - 1.0)
    ratio = math.expm1(2.0 * t * log_gamma) / math.expm1(2.0 * log_gamma)
    return sigma * math.sqrt(2.0 * math.log(1.0 / delta) + d * math.log(1.0 + c_mu * L**2 * ratio / (d * lam)))


def validate_concentration(config: ExperimentConfig) -> ConcentrationReport:
    """Monte-Carlo check of the anytime self-normalized bound under a fixed sampling policy.

    Simulates the discounted noise martingale and its square-weighted Gram matrix; the
    violation indicator uses the identity ||S_t|| in the (gamma^{-2t} W_tilde_t)^{-1} norm
    == ||gamma^t S_t|| in the W_tilde_t^{-1} norm, which keeps every quantity bounded.
    """
    config.validate()
    d = config.dim
    L = 1.0
    m = 1.0
    sigma = sigma_from_bounded_rewards(m)
    constants = GlmConstants.for_link(LOGISTIC, L, 1.0, m)
    lam_over_cmu = config.lam / constants.c_mu
    delta = config.conc_delta
    R, T = config.conc_replications, config.conc_horizon
    frequencies: dict[float, float] = {}
    for g_index, gamma in enumerate(config.conc_gammas):
        rng = np.random.default_rng([config.base_seed, 2, g_index])
        violated = np.zeros(R, dtype=bool)
        s = np.zeros((R, d))
        gram = np.tile(lam_over_cmu * np.eye(d), (R, 1, 1))
        one_minus_gamma_sq = (1.0 - gamma) * (1.0 + gamma)
        diag = np.arange(d)
        for t in range(1, T + 1):
            actions = sample_unit_ball(rng, R, d, radius=L)
            if config.conc_noise == "gaussian":
                noise = sigma * rng.standard_normal(R)
            else:
                noise = np.zeros(R)
            s = gamma * s + actions * noise[:, None]
            gram *= gamma * gamma
            gram += actions[:, :, None] * actions[:, None, :]
            gram[:, diag, diag] += lam_over_cmu * one_minus_gamma_sq
            solved = np.linalg.solve(gram, s[:, :, None])[:, :, 0]
            norm_sq = np.einsum("ij,ij->i", s, solved)
            threshold = concentration_threshold(t, gamma, delta, sigma, d, L, constants.c_mu, config.lam)
            violated |= norm_sq > threshold * threshold
        frequencies[gamma] = float(violated.mean())
    return ConcentrationReport(delta, R, T, config.conc_noise, frequencies)
