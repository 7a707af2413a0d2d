"""Penalized maximum-likelihood estimation with sliding-window or discounted forgetting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .links import LinkFunction


class NonConvergenceError(RuntimeError):
    """Newton iteration failed to drive the score equation to tolerance."""


class SingularMatrixError(RuntimeError):
    """A matrix that should be SPD failed to factorize."""


SCORE_RTOL = 1e-10
_MAX_NEWTON_ITER = 100
_MAX_PROJECTION_ITER = 200


def _cholesky(M: np.ndarray):
    try:
        return cho_factor(M, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise SingularMatrixError(f"matrix is not positive definite: {exc}") from exc


def mahalanobis_norm(a: np.ndarray, M: np.ndarray) -> float:
    """sqrt(a^T M^{-1} a) via a Cholesky solve (M must be SPD)."""
    a = np.asarray(a, dtype=float)
    x = cho_solve(_cholesky(M), a, check_finite=False)
    return float(np.sqrt(max(a @ x, 0.0)))


def mahalanobis_norms(A: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Row-wise sqrt(a^T M^{-1} a) for a stack of vectors, factorizing M once."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    X = cho_solve(_cholesky(M), A.T, check_finite=False)
    return np.sqrt(np.maximum(np.einsum("ij,ji->i", A, X), 0.0))


class _HistoryBuffer:
    """Growable (action, reward) storage with O(1) amortized append and front eviction."""

    def __init__(self, dim: int):
        self.dim = dim
        cap = 64
        self._actions = np.empty((cap, dim))
        self._rewards = np.empty(cap)
        self._start = 0
        self._end = 0

    def __len__(self):
        return self._end - self._start

    @property
    def actions(self) -> np.ndarray:
        return self._actions[self._start:self._end]

    @property
    def rewards(self) -> np.ndarray:
        return self._rewards[self._start:self._end]

    def append(self, action: np.ndarray, reward: float):
        if self._end == self._actions.shape[0]:
            self._compact_or_grow()
        self._actions[self._end] = action
        self._rewards[self._end] = reward
        self._end += 1

    def pop_front(self):
        action = self._actions[self._start].copy()
        reward = float(self._rewards[self._start])
        self._start += 1
        return action, reward

    def _compact_or_grow(self):
        n = len(self)
        cap = self._actions.shape[0]
        if n <= cap // 2:
            self._actions[:n] = self._actions[self._start:self._end]
            self._rewards[:n] = self._rewards[self._start:self._end]
        else:
            new_cap = max(64, 2 * cap)
            actions = np.empty((new_cap, self.dim))
            rewards = np.empty(new_cap)
            actions[:n] = self._actions[self._start:self._end]
            rewards[:n] = self._rewards[self._start:self._end]
            self._actions, self._rewards = actions, rewards
        self._start, self._end = 0, n


def _check_action(action: np.ndarray, dim: int, l_bound) -> np.ndarray:
    action = np.asarray(action, dtype=float).reshape(dim)
    if l_bound is not None and np.linalg.norm(action) > l_bound * (1 + 1e-9):
        raise ValueError(f"action norm {np.linalg.norm(action):.6g} exceeds bound {l_bound}")
    return action


class SlidingWindowState:
    """The tau most recent (action, reward) pairs and the regularized Gram matrix V.

    ``tau=None`` keeps the full history (the stationary estimator).  V is maintained
    incrementally as pairs enter and leave the window: V = sum_s A_s A_s^T + (lam/c_mu) I.
    """

    def __init__(self, dim: int, tau: int | None, lambda_over_cmu: float, l_bound: float | None = None):
        if tau is not None and tau < 1:
            raise ValueError("tau must be a positive integer")
        if lambda_over_cmu <= 0:
            raise ValueError("lambda_over_cmu must be strictly positive")
        self.dim = dim
        self.tau = tau
        self.lambda_over_cmu = float(lambda_over_cmu)
        self.l_bound = l_bound
        self.V = lambda_over_cmu * np.eye(dim)
        self._buffer = _HistoryBuffer(dim)

    def __len__(self):
        return len(self._buffer)

    @property
    def actions(self) -> np.ndarray:
        return self._buffer.actions

    @property
    def rewards(self) -> np.ndarray:
        return self._buffer.rewards

    @property
    def weights(self):
        return None

    def update(self, action: np.ndarray, reward: float):
        """Append a pair; evict the oldest one (and its outer product) once past tau."""
        action = _check_action(action, self.dim, self.l_bound)
        self._buffer.append(action, reward)
        self.V += np.outer(action, action)
        evicted = None
        if self.tau is not None and len(self._buffer) > self.tau:
            old_action, old_reward = self._buffer.pop_front()
            self.V -= np.outer(old_action, old_action)
            evicted = (old_action, old_reward)
        return evicted

    def batch_gram(self) -> np.ndarray:
        """Recompute V from the retained pairs (invariant-check oracle)."""
        A = self.actions
        return A.T @ A + self.lambda_over_cmu * np.eye(self.dim)


class DiscountedState:
    """Exponentially down-weighted history and the Gram matrices W and W_tilde.

    W uses weights gamma^(age), W_tilde the squared weights gamma^(2 age); both keep the
    (lam/c_mu) I regularizer fixed through the recursions.  The stored per-pair weights are
    rescaled by gamma on every update and pairs whose weight falls below ``prune_below``
    are dropped, bounding memory at O(log(1/prune_below) / (1 - gamma)).
    """

    def __init__(
        self,
        dim: int,
        gamma: float,
        lambda_over_cmu: float,
        l_bound: float | None = None,
        prune_below: float = 1e-12,
    ):
        if not 0.0 < gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if lambda_over_cmu <= 0:
            raise ValueError("lambda_over_cmu must be strictly positive")
        self.dim = dim
        self.gamma = float(gamma)
        self.lambda_over_cmu = float(lambda_over_cmu)
        self.l_bound = l_bound
        self.prune_below = prune_below
        self.W = lambda_over_cmu * np.eye(dim)
        self.W_tilde = lambda_over_cmu * np.eye(dim)
        cap = 64
        self._actions = np.empty((cap, dim))
        self._rewards = np.empty(cap)
        self._weights = np.empty(cap)
        self._start = 0
        self._end = 0

    def __len__(self):
        return self._end - self._start

    @property
    def actions(self) -> np.ndarray:
        return self._actions[self._start:self._end]

    @property
    def rewards(self) -> np.ndarray:
        return self._rewards[self._start:self._end]

    @property
    def weights(self) -> np.ndarray:
        return self._weights[self._start:self._end]

    def update(self, action: np.ndarray, reward: float):
        action = _check_action(action, self.dim, self.l_bound)
        gamma = self.gamma
        one_minus_gamma = 1.0 - gamma
        one_minus_gamma_sq = one_minus_gamma * (1.0 + gamma)
        lam = self.lambda_over_cmu
        outer = np.outer(action, action)
        self.W *= gamma
        self.W += outer
        self.W[np.diag_indices(self.dim)] += lam * one_minus_gamma
        self.W_tilde *= gamma * gamma
        self.W_tilde += outer
        self.W_tilde[np.diag_indices(self.dim)] += lam * one_minus_gamma_sq

        self._weights[self._start:self._end] *= gamma
        if self._end == self._actions.shape[0]:
            self._compact_or_grow()
        self._actions[self._end] = action
        self._rewards[self._end] = reward
        self._weights[self._end] = 1.0
        self._end += 1
        # Weights decrease with age, so stale pairs always form a prefix.
        while self._start < self._end and self._weights[self._start] < self.prune_below:
            self._start += 1

    def _compact_or_grow(self):
        n = len(self)
        cap = self._actions.shape[0]
        new_cap = cap if n <= cap // 2 else max(64, 2 * cap)
        actions = np.empty((new_cap, self.dim))
        rewards = np.empty(new_cap)
        weights = np.empty(new_cap)
        actions[:n] = self._actions[self._start:self._end]
        rewards[:n] = self._rewards[self._start:self._end]
        weights[:n] = self._weights[self._start:self._end]
        self._actions, self._rewards, self._weights = actions, rewards, weights
        self._start, self._end = 0, n

    def batch_grams(self) -> tuple[np.ndarray, np.ndarray]:
        """Recompute W and W_tilde from the retained weighted pairs (invariant oracle)."""
        A, w = self.actions, self.weights
        eye = self.lambda_over_cmu * np.eye(self.dim)
        W = (A * w[:, None]).T @ A + eye
        W_tilde = (A * (w ** 2)[:, None]).T @ A + eye
        return W, W_tilde


def _reward_scale(actions, rewards, weights):
    if actions.shape[0] == 0:
        return 1.0
    r = rewards if weights is None else rewards * weights
    return max(1.0, float(np.linalg.norm(actions.T @ r)))


def _solve_newton(actions, rewards, weights, link, lam, dim, theta0):
    """Damped Newton on the (strictly concave) penalized log-likelihood score.

    The Hessian sum_s w_s mu'(A_s theta) A_s A_s^T + lam I is SPD, so every step solves
    an SPD system; step halving guarantees the score norm decreases.
    """
    theta = np.zeros(dim) if theta0 is None else np.array(theta0, dtype=float)
    tol = SCORE_RTOL * _reward_scale(actions, rewards, weights)
    empty = actions.shape[0] == 0

    def score_and_slope(point):
        if empty:
            return -lam * point, None
        mu, slope = link.value_and_slope(actions @ point)
        resid = rewards - mu
        if weights is not None:
            resid = resid * weights
            slope = slope * weights
        return actions.T @ resid - lam * point, slope

    score, slope = score_and_slope(theta)
    score_norm = math.sqrt(float(score @ score))
    eye = np.eye(dim)
    for _ in range(_MAX_NEWTON_ITER):
        if score_norm <= tol:
            return theta, score_norm
        hess = lam * eye if empty else actions.T @ (actions * slope[:, None]) + lam * eye
        step = np.linalg.solve(hess, score)
        alpha = 1.0
        for _ in range(60):
            candidate = theta + alpha * step
            cand_score, cand_slope = score_and_slope(candidate)
            cand_norm = math.sqrt(float(cand_score @ cand_score))
            if cand_norm < score_norm or cand_norm <= tol:
                theta, score, slope, score_norm = candidate, cand_score, cand_slope, cand_norm
                break
            alpha *= 0.5
        else:
            raise NonConvergenceError("damped Newton step failed to reduce the score norm")
    raise NonConvergenceError(f"score norm {score_norm:.3e} above tolerance {tol:.3e} after {_MAX_NEWTON_ITER} iterations")


def solve_mle_sw(state: SlidingWindowState, link: LinkFunction, lam: float, theta0=None) -> np.ndarray:
    """Root of sum_{s in window} (X_s - mu(A_s^T theta)) A_s - lam theta = 0."""
    if lam <= 0:
        raise ValueError("lam must be strictly positive")
    theta, _ = _solve_newton(state.actions, state.rewards, None, link, lam, state.dim, theta0)
    return theta


def solve_mle_discounted(state: DiscountedState, link: LinkFunction, lam: float, theta0=None) -> np.ndarray:
    """Root of sum_s gamma^(age_s) (X_s - mu(A_s^T theta)) A_s - lam theta = 0."""
    if lam <= 0:
        raise ValueError("lam must be strictly positive")
    theta, _ = _solve_newton(state.actions, state.rewards, state.weights, link, lam, state.dim, theta0)
    return theta


def g_function(theta: np.ndarray, state, link: LinkFunction, lam: float) -> np.ndarray:
    """Weighted mean-response sum plus the ridge term: sum_s w_s mu(A_s^T theta) A_s + lam theta."""
    theta = np.asarray(theta, dtype=float)
    actions, weights = state.actions, state.weights
    if actions.shape[0] == 0:
        return lam * theta
    mu = link.evaluate(actions @ theta)
    if weights is not None:
        mu = mu * weights
    return actions.T @ mu + lam * theta


def projection_norm_matrix(state) -> np.ndarray:
    """Matrix defining the projection metric: V for sliding-window, W_tilde for discounted."""
    return state.W_tilde if isinstance(state, DiscountedState) else state.V


def project_theta(
    theta_hat: np.ndarray,
    state,
    link: LinkFunction,
    lam: float,
    S: float,
    theta0=None,
    grad_tol: float = 1e-8,
    max_iter: int = _MAX_PROJECTION_ITER,
):
    """Feasible point minimizing ||g(theta_hat) - g(theta)||^2 in the inverse-Gram metric.

    Projected gradient descent over the Euclidean ball of radius S, with Barzilai-Borwein
    step sizes safeguarded by backtracking; the objective may be nonconvex, so a
    stationary point is accepted.  Returns ``(theta_tilde, converged)`` where
    ``converged`` is False only if the projected gradient norm stayed above ``grad_tol``
    for ``max_iter`` iterations.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    if math.sqrt(float(theta_hat @ theta_hat)) <= S:
        return theta_hat.copy(), True

    chol = _cholesky(projection_norm_matrix(state))
    target = g_function(theta_hat, state, link, lam)
    actions, rewards, weights = state.actions, state.rewards, state.weights
    empty = actions.shape[0] == 0

    def project_ball(v):
        norm = math.sqrt(float(v @ v))
        return v if norm <= S else v * (S / norm)

    def value_and_grad(theta):
        # f = ||target - g(theta)||^2 in the M^{-1} metric; grad = -2 J(theta)^T M^{-1} resid.
        if empty:
            g_val = lam * theta
        else:
            mu, slope = link.value_and_slope(actions @ theta)
            if weights is not None:
                mu = mu * weights
                slope = slope * weights
            g_val = actions.T @ mu + lam * theta
        resid = target - g_val
        solved = cho_solve(chol, resid, check_finite=False)
        value = float(resid @ solved)
        if empty:
            grad = -2.0 * lam * solved
        else:
            grad = -2.0 * (actions.T @ (slope * (actions @ solved)) + lam * solved)
        return value, grad

    theta = project_ball(theta_hat if theta0 is None else np.asarray(theta0, dtype=float))
    value, grad = value_and_grad(theta)
    best_theta, best_value = theta, value
    step = 1.0 / max(lam, 1.0)
    prev_theta = prev_grad = None
    for _ in range(max_iter):
        residual = theta - project_ball(theta - grad)
        if math.sqrt(float(residual @ residual)) <= grad_tol:
            return theta, True
        if prev_theta is not None:
            d_theta = theta - prev_theta
            d_grad = grad - prev_grad
            curvature = float(d_theta @ d_grad)
            if curvature > 0.0:
                step = min(max(float(d_theta @ d_theta) / curvature, 1e-12), 1e12)
        accepted = False
        for _ in range(60):
            candidate = project_ball(theta - step * grad)
            cand_value, cand_grad = value_and_grad(candidate)
            if cand_value < value:
                prev_theta, prev_grad = theta, grad
                theta, value, grad = candidate, cand_value, cand_grad
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        if value < best_value:
            best_theta, best_value = theta, value
    residual = theta - project_ball(theta - grad)
    if math.sqrt(float(residual @ residual)) <= grad_tol:
        return theta, True
    return best_theta, False


@dataclass
class MleSolution:
    """Unconstrained penalized MLE plus its feasible projection onto the S-ball."""

    theta_hat: np.ndarray
    theta_tilde: np.ndarray
    residual_norm: float
    projected: bool
    projection_converged: bool = True


def estimate(state, link: LinkFunction, lam: float, S: float, theta0=None, projection_start=None) -> MleSolution:
    """Solve the penalized MLE and project onto the admissible ball only when needed."""
    if isinstance(state, DiscountedState):
        theta_hat, residual = _solve_newton(state.actions, state.rewards, state.weights, link, lam, state.dim, theta0)
    else:
        theta_hat, residual = _solve_newton(state.actions, state.rewards, None, link, lam, state.dim, theta0)
    if np.linalg.norm(theta_hat) <= S:
        return MleSolution(theta_hat, theta_hat, float(residual), False)
    theta_tilde, converged = project_theta(theta_hat, state, link, lam, S, theta0=projection_start)
    return MleSolution(theta_hat, theta_tilde, float(residual), True, converged)
