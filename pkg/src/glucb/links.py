"""Inverse link functions and the GLM constants that parameterize estimators and radii.

Only the logistic and identity links ship.  Further links (Poisson, probit, ...) plug in
as ``LinkFunction`` instances; ``compute_c_mu`` already handles any unimodal derivative
through bounded minimization, but ``compute_k_mu`` needs a closed-form Lipschitz bound
per link, which is why unknown kinds are rejected rather than guessed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit


class LinkError(ValueError):
    """Raised when a link function violates its admissibility requirements."""


@dataclass(frozen=True)
class LinkFunction:
    """Inverse link mu with its derivative.

    ``evaluate`` must be non-decreasing and ``derivative`` non-negative on the
    admissible range [-L*S, L*S]; both accept scalars or numpy arrays.
    ``value_and_slope`` returns both at once so hot loops evaluate the link once.
    """

    kind: str
    evaluate: Callable
    derivative: Callable
    value_and_slope: Callable


def _logistic_derivative(x):
    p = expit(x)
    return p * (1.0 - p)


def _logistic_both(x):
    p = expit(x)
    return p, p * (1.0 - p)


def _identity(x):
    return np.multiply(x, 1.0)


def _identity_derivative(x):
    return np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1.0


def _identity_both(x):
    return np.multiply(x, 1.0), _identity_derivative(x)


LOGISTIC = LinkFunction("logistic", expit, _logistic_derivative, _logistic_both)
IDENTITY = LinkFunction("identity", _identity, _identity_derivative, _identity_both)

_LINKS = {"logistic": LOGISTIC, "identity": IDENTITY}


def get_link(kind: str) -> LinkFunction:
    try:
        return _LINKS[kind]
    except KeyError:
        raise LinkError(f"unknown link kind {kind!r}; choose from {sorted(_LINKS)}") from None


def compute_c_mu(link: LinkFunction, L: float, S: float) -> float:
    """Infimum of the link derivative over the admissible region {|x| <= L*S}.

    The logistic derivative is even and decreasing in |x|, so the infimum is
    attained at x = L*S in closed form.  Other unimodal links fall back to a
    bounded scalar minimization over [0, L*S].
    """
    if L < 0 or S < 0:
        raise LinkError("L and S must be non-negative")
    r = L * S
    if link.kind == "logistic":
        c_mu = float(link.derivative(r))
    elif link.kind == "identity":
        c_mu = 1.0
    else:
        if r == 0.0:
            c_mu = float(link.derivative(0.0))
        else:
            res = minimize_scalar(lambda x: float(link.derivative(x)), bounds=(0.0, r), method="bounded")
            c_mu = min(float(res.fun), float(link.derivative(0.0)), float(link.derivative(r)))
    if c_mu <= 0.0:
        raise LinkError(f"derivative of {link.kind} link is not bounded away from zero on [-{r}, {r}]")
    return c_mu


def compute_k_mu(link: LinkFunction) -> float:
    """Global Lipschitz constant of the inverse link (1/4 for logistic, 1 for identity)."""
    if link.kind == "logistic":
        return 0.25
    if link.kind == "identity":
        return 1.0
    raise LinkError(f"no known Lipschitz constant for link kind {link.kind!r}")


@dataclass(frozen=True)
class GlmConstants:
    """Problem constants: Lipschitz bound k_mu, derivative floor c_mu, and norm/reward bounds."""

    k_mu: float
    c_mu: float
    L: float
    S: float
    m: float

    def __post_init__(self):
        for name in ("k_mu", "c_mu", "m"):
            if getattr(self, name) <= 0:
                raise LinkError(f"{name} must be strictly positive")
        for name in ("L", "S"):
            if getattr(self, name) < 0:
                raise LinkError(f"{name} must be non-negative")
        if self.c_mu > self.k_mu * (1 + 1e-12):
            raise LinkError("c_mu cannot exceed k_mu")

    @classmethod
    def for_link(cls, link: LinkFunction, L: float, S: float, m: float) -> "GlmConstants":
        constants = cls(compute_k_mu(link), compute_c_mu(link, L, S), L, S, m)
        # Dense-grid sanity check that c_mu really lower-bounds the derivative.
        grid = np.linspace(-L * S, L * S, 2001)
        if np.min(link.derivative(grid)) < constants.c_mu - 1e-12:
            raise LinkError("computed c_mu exceeds the derivative somewhere on the admissible range")
        return constants


def sigma_from_bounded_rewards(m: float) -> float:
    """Subgaussian scale for centered noise of rewards confined to [0, m]."""
    return m / 2.0
