"""Reward-generating environments: abrupt 2D simulation and binary-outcome dataset replay."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .links import LinkFunction


class ChosenNotInSetError(ValueError):
    """Regret was requested for an action that was never offered."""


class MalformedCsvError(ValueError):
    """A replay CSV row could not be parsed."""


class MissingColumnsError(ValueError):
    """The replay CSV does not carry 8 feature columns plus one outcome column."""


class ZeroVarianceColumnError(ValueError):
    """A feature column is constant, so standardization is undefined."""


N_REPLAY_FEATURES = 8


@dataclass(frozen=True)
class PiecewiseParameterSchedule:
    """Piecewise-constant true parameter: each segment starts at a round and holds until the next."""

    segments: tuple[tuple[int, np.ndarray], ...]
    horizon: int
    s_bound: float | None = None

    def __post_init__(self):
        if not self.segments:
            raise ValueError("schedule needs at least one segment")
        starts = [start for start, _ in self.segments]
        if starts[0] != 1:
            raise ValueError("first segment must start at round 1")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment starts must be strictly increasing")
        if self.s_bound is not None:
            for start, theta in self.segments:
                if np.linalg.norm(theta) > self.s_bound + 1e-12:
                    raise ValueError(f"segment at round {start} has ||theta|| > {self.s_bound}")

    @property
    def dim(self) -> int:
        return len(self.segments[0][1])

    @property
    def num_changes(self) -> int:
        return sum(1 for start, _ in self.segments[1:] if start <= self.horizon)

    @property
    def breakpoints(self) -> list[int]:
        """Last round of each segment but the final one (where the dashed lines go)."""
        return [start - 1 for start, _ in self.segments[1:] if start - 1 <= self.horizon]

    def theta_at(self, t: int) -> np.ndarray:
        if t < 1:
            raise ValueError("rounds start at 1")
        theta = self.segments[0][1]
        for start, candidate in self.segments[1:]:
            if t >= start:
                theta = candidate
            else:
                break
        return theta


def abrupt_2d_schedule(horizon: int = 6000) -> PiecewiseParameterSchedule:
    """Four unit-vector segments with breaks after rounds 1000, 2000 and 3000."""
    segments = (
        (1, np.array([1.0, 0.0])),
        (1001, np.array([-1.0, 0.0])),
        (2001, np.array([0.0, 1.0])),
        (3001, np.array([0.0, -1.0])),
    )
    return PiecewiseParameterSchedule(segments, horizon, s_bound=1.0)


def sample_unit_ball(rng: np.random.Generator, n: int, d: int, radius: float = 1.0) -> np.ndarray:
    """Exactly uniform draws from the d-ball: Gaussian direction, radius U^(1/d)."""
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    u = rng.random((n, 1))
    return radius * (u ** (1.0 / d)) * g / norms


@dataclass(frozen=True)
class SimulatedRound:
    """One round's offer: the action set, the active parameter, and the best achievable mean."""

    t: int
    action_set: np.ndarray
    theta_star: np.ndarray
    best_mean: float


def sample_round(
    schedule: PiecewiseParameterSchedule,
    t: int,
    k: int,
    rng: np.random.Generator,
    link: LinkFunction,
    radius: float = 1.0,
) -> SimulatedRound:
    theta = schedule.theta_at(t)
    actions = sample_unit_ball(rng, k, schedule.dim, radius=radius)
    means = np.asarray(link.evaluate(actions @ theta), dtype=float)
    return SimulatedRound(t, actions, theta, float(np.max(means)))


def sample_reward(
    action: np.ndarray,
    theta_star: np.ndarray,
    link: LinkFunction,
    rng: np.random.Generator,
    m: float = 1.0,
    noise_scale: float = 0.0,
) -> float:
    """Bounded reward in [0, m] with conditional mean mu(a^T theta).

    Logistic links draw m * Bernoulli(mu / m); the identity link adds symmetric uniform
    noise truncated so the reward cannot leave [0, m].
    """
    mean = float(link.evaluate(float(np.dot(action, theta_star))))
    if link.kind == "logistic":
        return m if rng.random() < mean / m else 0.0
    if not 0.0 <= mean <= m:
        raise ValueError(f"identity-link mean {mean} outside [0, {m}]; rewards cannot stay bounded")
    width = min(noise_scale, mean, m - mean)
    if width <= 0.0:
        return mean
    return mean + width * (2.0 * rng.random() - 1.0)


def instantaneous_regret(
    round_: SimulatedRound, chosen: np.ndarray, theta_star: np.ndarray, link: LinkFunction
) -> float:
    chosen = np.asarray(chosen, dtype=float)
    if not np.any(np.all(round_.action_set == chosen, axis=1)):
        raise ChosenNotInSetError("chosen action is not part of the round's action set")
    return round_.best_mean - float(link.evaluate(float(chosen @ theta_star)))


@dataclass(frozen=True)
class ReplayDataset:
    """Standardized feature rows with binary outcomes, ready to serve as 9-dim actions.

    Actions are the 8 standardized features plus a constant intercept component, globally
    rescaled so the largest action norm is exactly ``l_bound`` (1 by default): the norm
    bound has to hold for the confidence radius to mean anything.
    """

    actions: np.ndarray
    labels: np.ndarray
    feature_means: np.ndarray
    feature_stds: np.ndarray
    scale: float
    l_bound: float = 1.0
    positive_rows: np.ndarray = field(init=False, default=None)
    negative_rows: np.ndarray = field(init=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "positive_rows", np.flatnonzero(self.labels == 1))
        object.__setattr__(self, "negative_rows", np.flatnonzero(self.labels == 0))
        if len(self.positive_rows) == 0 or len(self.negative_rows) == 0:
            raise MalformedCsvError("replay needs at least one row of each outcome class")

    @property
    def dim(self) -> int:
        return self.actions.shape[1]


def load_replay_dataset(path, l_bound: float = 1.0) -> ReplayDataset:
    """Parse a replay CSV: header, 8 numeric feature columns, then a binary outcome column."""
    rows = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedCsvError(f"{path}: file is empty") from None
        if len(header) < N_REPLAY_FEATURES + 1:
            raise MissingColumnsError(
                f"{path}: expected {N_REPLAY_FEATURES} feature columns plus one outcome column, "
                f"found {len(header)}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedCsvError(f"{path}: row {line_no} has {len(row)} fields, expected {len(header)}")
            if any(cell.strip() == "" for cell in row):
                raise MalformedCsvError(f"{path}: row {line_no} has a missing field")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise MalformedCsvError(f"{path}: row {line_no} has a non-numeric field") from None
    if not rows:
        raise MalformedCsvError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=float)
    features = data[:, :N_REPLAY_FEATURES]
    labels = data[:, -1]
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise MalformedCsvError(f"{path}: outcome column must be binary 0/1")
    means = features.mean(axis=0)
    stds = features.std(axis=0)
    flat = np.flatnonzero(stds == 0.0)
    if flat.size:
        raise ZeroVarianceColumnError(f"{path}: feature column {flat[0]} has zero variance")
    standardized = (features - means) / stds
    with_intercept = np.hstack([standardized, np.ones((standardized.shape[0], 1))])
    scale = float(np.max(np.linalg.norm(with_intercept, axis=1))) / l_bound
    return ReplayDataset(
        actions=with_intercept / scale,
        labels=labels.astype(int),
        feature_means=means,
        feature_stds=stds,
        scale=scale,
        l_bound=l_bound,
    )


@dataclass(frozen=True)
class ReplayRound:
    """A two-action round: one patient from each outcome class, reward 1 for the target arm."""

    t: int
    action_set: np.ndarray
    target_index: int


def replay_round(dataset: ReplayDataset, t: int, invert_at: int, rng: np.random.Generator) -> ReplayRound:
    """Draw one row per class (with replacement); past ``invert_at`` the reward-1 class flips."""
    pos = dataset.positive_rows[rng.integers(len(dataset.positive_rows))]
    neg = dataset.negative_rows[rng.integers(len(dataset.negative_rows))]
    pos_first = bool(rng.random() < 0.5)
    order = (pos, neg) if pos_first else (neg, pos)
    target = 0 if pos_first else 1
    if t > invert_at:
        target = 1 - target
    return ReplayRound(t, dataset.actions[list(order)], target)


def write_synthetic_replay_csv(
    path,
    rng: np.random.Generator,
    n_per_class: int = 300,
    separation: float = 2.0,
) -> None:
    """Stand-in replay data: two well-separated Gaussian classes over 8 features."""
    direction = rng.standard_normal(N_REPLAY_FEATURES)
    direction /= np.linalg.norm(direction)
    offset = 0.5 * separation * direction
    neg = rng.standard_normal((n_per_class, N_REPLAY_FEATURES)) - offset
    pos = rng.standard_normal((n_per_class, N_REPLAY_FEATURES)) + offset
    features = np.vstack([neg, pos])
    labels = np.concatenate([np.zeros(n_per_class, dtype=int), np.ones(n_per_class, dtype=int)])
    perm = rng.permutation(len(labels))
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([f"f{i}" for i in range(N_REPLAY_FEATURES)] + ["outcome"])
        for idx in perm:
            writer.writerow([f"{value:.17g}" for value in features[idx]] + [int(labels[idx])])
