"""UCB decision rules for non-stationary generalized linear bandits and linear baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .estimators import (
    DiscountedState,
    MleSolution,
    SlidingWindowState,
    _cholesky,
    estimate,
    mahalanobis_norms,
)
from .links import GlmConstants, LinkFunction


class EmptyActionSetError(ValueError):
    """No actions were offered for the round."""


class UnknownPolicyError(ValueError):
    """Requested policy name is not registered."""


@dataclass(frozen=True)
class PolicyConfig:
    """Run-level parameters shared by every policy plus the forgetting knob (tau or gamma)."""

    d: int
    horizon: int
    delta: float = 0.05
    lam: float = 1.0
    L: float = 1.0
    S: float = 1.0
    m: float = 1.0
    tau: int | None = None
    gamma: float | None = None
    d_gamma: float | None = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        for name in ("lam", "L", "S", "m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.d < 1 or self.horizon < 1:
            raise ValueError("d and horizon must be positive integers")
        if self.tau is not None and self.tau < 1:
            raise ValueError("tau must be a positive integer")
        if self.gamma is not None and not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.d_gamma is not None and self.d_gamma <= 0:
            raise ValueError("d_gamma must be strictly positive")


@dataclass
class UcbDecision:
    """Chosen index plus the per-action optimism decomposition that produced it."""

    chosen_index: int
    ucb_values: np.ndarray
    exploration_bonus: np.ndarray
    theta_used: np.ndarray


def rho_sw(t: int, config: PolicyConfig, constants: GlmConstants) -> float:
    """Confidence radius of the sliding-window policy at round t (tau=None means no window)."""
    if t < 1:
        raise ValueError("round index starts at 1")
    n_eff = t if config.tau is None else min(t, config.tau)
    c_t = (constants.m / 2.0) * math.sqrt(
        2.0 * math.log(config.horizon / config.delta)
        + config.d * math.log(1.0 + constants.c_mu * constants.L**2 * n_eff / (config.d * config.lam))
    )
    return (2.0 * constants.k_mu / constants.c_mu) * (c_t + math.sqrt(constants.c_mu * config.lam) * config.S)


def _discount_effective_count(t: int, gamma: float) -> float:
    # (1 - gamma^(2t)) / (1 - gamma^2) computed through expm1/log1p so that gamma
    # close to 1 keeps full relative precision (the ratio tends to t).
    log_gamma = math.log1p(gamma - 1.0)
    return math.expm1(2.0 * t * log_gamma) / math.expm1(2.0 * log_gamma)


def rho_d(t: int, config: PolicyConfig, constants: GlmConstants) -> float:
    """Confidence radius of the discounted policy at round t, including the forgetting bias term."""
    if t < 1:
        raise ValueError("round index starts at 1")
    if config.gamma is None or config.d_gamma is None:
        raise ValueError("discounted radius needs gamma and d_gamma in the config")
    gamma = config.gamma
    n_eff = _discount_effective_count(t, gamma)
    c_t = (constants.m / 2.0) * math.sqrt(
        2.0 * math.log(1.0 / config.delta)
        + config.d * math.log(1.0 + constants.c_mu * constants.L**2 * n_eff / (config.d * config.lam))
    )
    if math.isinf(config.d_gamma):
        gamma_pow = 0.0
    else:
        gamma_pow = math.exp(config.d_gamma * math.log1p(gamma - 1.0))
    bias = (
        2.0
        * constants.L**2
        * config.S
        * constants.k_mu
        * math.sqrt(constants.c_mu / config.lam)
        * gamma_pow
        / (1.0 - gamma)
    )
    return (2.0 * constants.k_mu / constants.c_mu) * (
        c_t + math.sqrt(constants.c_mu * config.lam) * config.S + bias
    )


def linear_beta(n_eff: float, config: PolicyConfig) -> float:
    """Ellipsoid radius for the linear baselines (imported from the linear-bandit literature)."""
    sigma = config.m / 2.0
    return sigma * math.sqrt(
        2.0 * math.log(1.0 / config.delta)
        + config.d * math.log(1.0 + n_eff * config.L**2 / (config.d * config.lam))
    ) + math.sqrt(config.lam) * config.S


def select_action(
    action_set: np.ndarray,
    theta_tilde: np.ndarray,
    rho: float,
    M: np.ndarray,
    link: LinkFunction,
    inner_matrix: np.ndarray | None = None,
) -> UcbDecision:
    """argmax over actions of mu(a^T theta) + rho * ||a|| in the M^{-1} metric.

    Ties go to the lowest index.  When ``inner_matrix`` is given the bonus uses the mixed
    metric sqrt(a^T M^{-1} inner M^{-1} a) instead (used by the discounted linear baseline).
    """
    actions = np.atleast_2d(np.asarray(action_set, dtype=float))
    if actions.shape[0] == 0:
        raise EmptyActionSetError("action set is empty")
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    mu = np.asarray(link.evaluate(actions @ theta_tilde), dtype=float)
    if inner_matrix is None:
        norms = mahalanobis_norms(actions, M)
    else:
        solved = cho_solve(_cholesky(M), actions.T, check_finite=False)
        norms = np.sqrt(np.maximum(np.einsum("ji,jk,ki->i", solved, inner_matrix, solved), 0.0))
    bonus = rho * norms
    ucb = mu + bonus
    return UcbDecision(int(np.argmax(ucb)), ucb, bonus, theta_tilde)


def _ceil_pow_two_thirds(num: int, den: int) -> int:
    """Smallest integer n with n^(3/2) >= num/den, i.e. n = ceil((num/den)^(2/3)), exactly."""
    if num <= 0 or den <= 0:
        raise ValueError("ratio must be positive")
    n = max(1, int((num / den) ** (2.0 / 3.0)))
    while n**3 * den**2 < num**2:
        n += 1
    while n > 1 and (n - 1) ** 3 * den**2 >= num**2:
        n -= 1
    return n


def tune_tau(d: int, T: int, gamma_t: int | None = None) -> int:
    """Window length minimizing the regret bound: ceil((dT/Gamma_T)^(2/3)), clamped to [1, T]."""
    if d < 1 or T < 1:
        raise ValueError("d and T must be positive integers")
    if gamma_t is not None and gamma_t < 1:
        raise ValueError("gamma_t must be a positive integer when known")
    tau = _ceil_pow_two_thirds(d * T, gamma_t if gamma_t is not None else 1)
    return min(max(tau, 1), T)


def tune_gamma(d: int, T: int, gamma_t: int | None = None) -> tuple[float, float]:
    """Discount factor and analysis horizon: gamma = 1 - (Gamma_T/(dT))^(2/3), D = log(1/(1-gamma))/(1-gamma)."""
    if d < 1 or T < 1:
        raise ValueError("d and T must be positive integers")
    ratio = (gamma_t if gamma_t is not None else 1) / (d * T)
    one_minus_gamma = ratio ** (2.0 / 3.0)
    gamma = 1.0 - one_minus_gamma
    if gamma <= 0.0:
        raise ValueError(f"tuned gamma {gamma} is not in (0, 1); dT is too small relative to Gamma_T")
    d_gamma = -math.log(one_minus_gamma) / one_minus_gamma
    return gamma, d_gamma


class _GlmUcbBase:
    """Shared solve -> project -> radius -> argmax loop of the GLM-UCB policies."""

    name = "GLUCB"

    def __init__(self, link: LinkFunction, config: PolicyConfig):
        self.link = link
        self.config = config
        self.constants = GlmConstants.for_link(link, config.L, config.S, config.m)
        self.t = 1
        self.last_solution: MleSolution | None = None
        self._theta_warm = np.zeros(config.d)
        self._projection_warm = None
        self.state = self._make_state()

    def _make_state(self):
        raise NotImplementedError

    def _radius(self, t: int) -> float:
        raise NotImplementedError

    def _selection_matrix(self) -> np.ndarray:
        raise NotImplementedError

    def start_round(self, action_set: np.ndarray) -> UcbDecision:
        sol = estimate(
            self.state,
            self.link,
            self.config.lam,
            self.config.S,
            theta0=self._theta_warm,
            projection_start=self._projection_warm,
        )
        self.last_solution = sol
        self._theta_warm = sol.theta_hat
        if sol.projected:
            self._projection_warm = sol.theta_tilde
        decision = select_action(
            action_set, sol.theta_tilde, self._radius(self.t), self._selection_matrix(), self.link
        )
        return decision

    def observe(self, action: np.ndarray, reward: float):
        if not -1e-9 <= reward <= self.config.m + 1e-9:
            raise ValueError(f"reward {reward} outside [0, {self.config.m}]")
        self.state.update(action, reward)
        self.t += 1


class SwGlucb(_GlmUcbBase):
    """Sliding-window GLM-UCB: estimator and Gram matrix over the tau most recent rounds."""

    name = "SW-GLUCB"

    def __init__(self, link, config):
        if config.tau is None:
            raise ValueError("SW-GLUCB requires tau; use StationaryGlucb for the unwindowed policy")
        super().__init__(link, config)

    def _make_state(self):
        return SlidingWindowState(
            self.config.d, self.config.tau, self.config.lam / self.constants.c_mu, l_bound=self.config.L
        )

    def _radius(self, t):
        return rho_sw(t, self.config, self.constants)

    def _selection_matrix(self):
        return self.state.V


class StationaryGlucb(_GlmUcbBase):
    """Unwindowed penalized-MLE GLM-UCB (the stationary baseline)."""

    name = "GLUCB"

    def _make_state(self):
        return SlidingWindowState(self.config.d, None, self.config.lam / self.constants.c_mu, l_bound=self.config.L)

    def _radius(self, t):
        return rho_sw(t, self.config, self.constants)

    def _selection_matrix(self):
        return self.state.V


class DGlucb(_GlmUcbBase):
    """Discounted GLM-UCB: exponentially weighted estimator, selection in the W metric."""

    name = "D-GLUCB"

    def __init__(self, link, config):
        if config.gamma is None or config.d_gamma is None:
            raise ValueError("D-GLUCB requires gamma and d_gamma")
        super().__init__(link, config)

    def _make_state(self):
        return DiscountedState(
            self.config.d, self.config.gamma, self.config.lam / self.constants.c_mu, l_bound=self.config.L
        )

    def _radius(self, t):
        return rho_d(t, self.config, self.constants)

    def _selection_matrix(self):
        return self.state.W


class _LinearUcbBase:
    """Ridge-style baselines: closed-form weighted least squares, no projection step.

    These assume a linear reward model regardless of how rewards are generated, so on
    logistic environments they run misspecified by design.
    """

    name = "LinUCB"

    def __init__(self, link: LinkFunction, config: PolicyConfig):
        # The link argument keeps the constructor signature uniform; the baselines
        # always score actions linearly.
        self.config = config
        self.t = 1
        self._b = np.zeros(config.d)
        self.theta_hat = np.zeros(config.d)
        self.state = self._make_state()

    def _make_state(self):
        raise NotImplementedError

    def _n_eff(self, t: int) -> float:
        raise NotImplementedError

    def _bonus_matrices(self):
        raise NotImplementedError

    def start_round(self, action_set: np.ndarray) -> UcbDecision:
        actions = np.atleast_2d(np.asarray(action_set, dtype=float))
        if actions.shape[0] == 0:
            raise EmptyActionSetError("action set is empty")
        M, inner = self._bonus_matrices()
        self.theta_hat = np.linalg.solve(M, self._b)
        beta = linear_beta(self._n_eff(self.t), self.config)
        if inner is None:
            norms = mahalanobis_norms(actions, M)
        else:
            solved = cho_solve(_cholesky(M), actions.T, check_finite=False)
            norms = np.sqrt(np.maximum(np.einsum("ji,jk,ki->i", solved, inner, solved), 0.0))
        bonus = beta * norms
        ucb = actions @ self.theta_hat + bonus
        return UcbDecision(int(np.argmax(ucb)), ucb, bonus, self.theta_hat.copy())

    def observe(self, action: np.ndarray, reward: float):
        action = np.asarray(action, dtype=float)
        self._observe_update(action, reward)
        self.t += 1

    def _observe_update(self, action, reward):
        raise NotImplementedError

    @property
    def last_solution(self) -> MleSolution:
        return MleSolution(self.theta_hat, self.theta_hat, 0.0, False)


class LinUcb(_LinearUcbBase):
    name = "LinUCB"

    def _make_state(self):
        return SlidingWindowState(self.config.d, None, self.config.lam, l_bound=self.config.L)

    def _n_eff(self, t):
        return float(t)

    def _bonus_matrices(self):
        return self.state.V, None

    def _observe_update(self, action, reward):
        self.state.update(action, reward)
        self._b += reward * action


class SwLinUcb(_LinearUcbBase):
    name = "SW-LinUCB"

    def __init__(self, link, config):
        if config.tau is None:
            raise ValueError("SW-LinUCB requires tau")
        super().__init__(link, config)

    def _make_state(self):
        return SlidingWindowState(self.config.d, self.config.tau, self.config.lam, l_bound=self.config.L)

    def _n_eff(self, t):
        return float(min(t, self.config.tau))

    def _bonus_matrices(self):
        return self.state.V, None

    def _observe_update(self, action, reward):
        evicted = self.state.update(action, reward)
        self._b += reward * action
        if evicted is not None:
            old_action, old_reward = evicted
            self._b -= old_reward * old_action


class DLinUcb(_LinearUcbBase):
    """Discounted linear baseline; exploration uses the mixed W^{-1} W_tilde W^{-1} metric."""

    name = "D-LinUCB"

    def __init__(self, link, config):
        if config.gamma is None:
            raise ValueError("D-LinUCB requires gamma")
        super().__init__(link, config)

    def _make_state(self):
        return DiscountedState(self.config.d, self.config.gamma, self.config.lam, l_bound=self.config.L)

    def _n_eff(self, t):
        return _discount_effective_count(t, self.config.gamma)

    def _bonus_matrices(self):
        return self.state.W, self.state.W_tilde

    def _observe_update(self, action, reward):
        self.state.update(action, reward)
        self._b *= self.config.gamma
        self._b += reward * action


POLICY_NAMES = ("GLUCB", "SW-GLUCB", "D-GLUCB", "LinUCB", "SW-LinUCB", "D-LinUCB")

_POLICY_CLASSES = {
    "GLUCB": StationaryGlucb,
    "SW-GLUCB": SwGlucb,
    "D-GLUCB": DGlucb,
    "LinUCB": LinUcb,
    "SW-LinUCB": SwLinUcb,
    "D-LinUCB": DLinUcb,
}


def make_policy(name: str, link: LinkFunction, config: PolicyConfig):
    try:
        cls = _POLICY_CLASSES[name]
    except KeyError:
        raise UnknownPolicyError(f"unknown policy {name!r}; choose from {POLICY_NAMES}") from None
    return cls(link, config)
