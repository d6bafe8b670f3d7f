"""Gaussian noise reduction: precision-weighted releases and the Brownian mechanism.

Both mechanisms release a sensitive vector ``f(X)`` repeatedly under an
increasing cumulative RDP budget ``eps_1 <= eps_2 <= ...`` at a fixed order
``alpha``. Release ``i`` has variance ``T_i = alpha * Delta**2 / (2 * eps_i)``
and the whole sequence costs ``eps_i``, not the sum of the budgets.

``fx`` may be an array of any shape. Every element is treated as an
independent coordinate with its own noise, so a batch of independent runs can
be simulated by stacking copies of ``f(X)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .accounting import (
    INFINITE_VARIANCE,
    check_alpha,
    check_epsilon,
    check_sensitivity,
    gaussian_variance_for_rdp,
)
from .mechanisms import ExPostOutput, sample_gaussian

PRECISION_WEIGHTED = "precision-weighted"
BROWNIAN = "brownian"


@dataclass
class NoiseReductionSession:
    """Running state of one noise-reduction sequence.

    ``variance_history`` holds the per-step variances sigma_j**2 for the
    precision-weighted mechanism and the times T_j for the Brownian one.
    """

    fx: np.ndarray
    delta: float
    alpha: float
    eps_history: list[float] = field(default_factory=list)
    tilde_history: list[np.ndarray] = field(default_factory=list)
    hat_history: list[np.ndarray] = field(default_factory=list)
    variance_history: list[float] = field(default_factory=list)
    method: str | None = None
    _precision: float = field(default=0.0, repr=False)
    _weighted_sum: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.fx = np.asarray(self.fx, dtype=float)
        self.delta = check_sensitivity(self.delta)
        self.alpha = check_alpha(self.alpha)

    def __len__(self):
        return len(self.eps_history)

    @property
    def eps(self) -> float:
        """Cumulative budget spent so far (0 before the first release)."""
        return self.eps_history[-1] if self.eps_history else 0.0

    def time(self, eps: float) -> float:
        """Brownian time T = alpha * Delta**2 / (2 * eps) for a cumulative budget."""
        return gaussian_variance_for_rdp(self.alpha, self.delta, eps)

    def _start(self, method: str, eps_i: float, alpha: float | None) -> float:
        if alpha is not None and float(alpha) != self.alpha:
            raise ValueError("the Rényi order is fixed for the whole session")
        if self.method is not None and self.method != method:
            raise ValueError(f"session was started with the {self.method} mechanism")
        eps_i = check_epsilon(eps_i)
        if math.isinf(eps_i):
            raise ValueError("cumulative budget must be finite")
        if not self.eps_history and eps_i == 0:
            raise ValueError("the first release needs a positive budget")
        if eps_i < self.eps:
            raise ValueError(f"budgets must not decrease: {eps_i} < {self.eps}")
        self.method = method
        return eps_i


def pw_release(
    session: NoiseReductionSession,
    eps_i: float,
    rng: np.random.Generator,
    alpha: float | None = None,
) -> ExPostOutput:
    """One step of the sequential precision-weighted Gaussian mechanism.

    Draws a fresh independent Gaussian observation paid for by the budget
    increment and returns the inverse-variance weighted mean of all
    observations so far. An unchanged budget gives infinite variance, zero
    weight, and repeats the previous estimate.
    """
    eps_i = session._start(PRECISION_WEIGHTED, eps_i, alpha)
    sigma2 = gaussian_variance_for_rdp(session.alpha, session.delta, eps_i - session.eps)
    tilde = sample_gaussian(session.fx, sigma2, rng)

    if sigma2 == INFINITE_VARIANCE:
        hat = session.hat_history[-1].copy()
    else:
        weight = 1.0 / sigma2
        if session._weighted_sum is None:
            session._weighted_sum = np.zeros_like(session.fx)
        session._precision += weight
        session._weighted_sum = session._weighted_sum + weight * tilde
        hat = session._weighted_sum / session._precision

    session.eps_history.append(eps_i)
    session.tilde_history.append(tilde)
    session.hat_history.append(hat)
    session.variance_history.append(sigma2)
    return ExPostOutput(hat, eps_i)


def conditional_law(session: NoiseReductionSession, eps_i: float) -> tuple[np.ndarray, float]:
    """Exact law of the next release given the history: (mean, per-coordinate variance).

    With T the Brownian time of a budget, the next release is Gaussian with mean
    ``f(X) + (T_i / T_prev) * (s_prev - f(X))`` and variance
    ``(T_prev - T_i) * T_i / T_prev``. The same law holds for both mechanisms.
    """
    if not session.eps_history:
        raise ValueError("conditional law needs at least one previous release")
    eps_i = check_epsilon(eps_i)
    if eps_i < session.eps:
        raise ValueError(f"budgets must not decrease: {eps_i} < {session.eps}")
    t_prev = session.time(session.eps)
    t_i = session.time(eps_i)
    prev = session.hat_history[-1]
    mean = session.fx + (t_i / t_prev) * (prev - session.fx)
    return mean, (t_prev - t_i) * t_i / t_prev


def brownian_release(
    session: NoiseReductionSession,
    eps_i: float,
    rng: np.random.Generator,
    alpha: float | None = None,
) -> ExPostOutput:
    """One step of the Brownian mechanism, sampled from its conditional law."""
    eps_i = session._start(BROWNIAN, eps_i, alpha)
    t_i = session.time(eps_i)
    if not session.eps_history:
        hat = sample_gaussian(session.fx, t_i, rng)
    else:
        mean, var = conditional_law(session, eps_i)
        hat = sample_gaussian(mean, var, rng)

    session.eps_history.append(eps_i)
    session.hat_history.append(hat)
    session.variance_history.append(t_i)
    return ExPostOutput(hat, eps_i)


def gaussian_step_costs(eps_history) -> list[float]:
    """Per-step RDP costs of a precision-weighted run: eps_1, eps_2 - eps_1, ..."""
    prev, out = 0.0, []
    for e in eps_history:
        out.append(e - prev)
        prev = e
    return out


def log_density_path(hats, eps_history, fx, alpha: float, delta: float) -> np.ndarray:
    """Log density of a release path ``hats[0..K-1]`` for the given ``f(X)``.

    Uses the chain of conditional Gaussians; coordinates are summed over every
    trailing axis beyond the leading sample axis. Steps with an unchanged
    budget are deterministic and contribute nothing.
    """
    fx = np.asarray(fx, dtype=float)
    total = 0.0
    prev_t = None
    prev_hat = None
    for hat, eps in zip(hats, eps_history):
        hat = np.asarray(hat, dtype=float)
        t = gaussian_variance_for_rdp(alpha, delta, eps)
        if prev_t is None:
            mean, var = fx, t
        elif t == prev_t:
            prev_hat = hat
            continue
        else:
            mean = fx + (t / prev_t) * (prev_hat - fx)
            var = (prev_t - t) * t / prev_t
        z = (hat - mean) ** 2 / var + math.log(2 * math.pi * var)
        total = total - 0.5 * z
        prev_t, prev_hat = t, hat
    total = np.asarray(total)
    return total.reshape(total.shape[0], -1).sum(axis=1) if total.ndim > 1 else total
