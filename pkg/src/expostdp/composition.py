"""Accuracy-first composition with a data-dependent stopping rule.

The engine alternates between releasing an output computed from the training
split and asking a private stopping rule, run only on the validation split,
whether the output is good enough. The returned total bound is
``max(eps_1 + ... + eps_t, eps_stop)``.

Budgets passed between the selector, engine and base mechanism are
*cumulative*: the selector names the total budget the base sequence may have
spent after the next release. The per-step cost ``eps_i`` is the increment.
This matches noise-reduction bases, whose cost telescopes to the last
cumulative budget, and keeps that total exact in floating point. A selector
that repeats the previous cumulative budget performs a free no-op step, which
is how early stopping is expressed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .accounting import (
    check_alpha,
    check_epsilon,
    check_sensitivity,
    gaussian_variance_for_rdp,
)
from .mechanisms import sample_gaussian, sample_laplace
from .noise_reduction import NoiseReductionSession, brownian_release, pw_release

log = logging.getLogger(__name__)


class BudgetExhaustedError(RuntimeError):
    """A stopping rule was invoked more often than its budget allows."""


class CheckerHaltedError(RuntimeError):
    """An SVT check was queried again after it already halted."""


@dataclass
class CompositionResult:
    t: int
    outputs: list
    eps_steps: list[float]
    eps_cum: list[float]
    eps_total: float
    halted: bool
    stop_answers: list[bool] = field(default_factory=list)


# -- selectors and bases -----------------------------------------------------

def schedule_selector(schedule: Sequence[float]) -> Callable:
    """Walk through a fixed increasing list of cumulative budgets.

    After the list runs out the last budget is repeated, i.e. further steps
    are free no-ops.
    """
    schedule = [check_epsilon(e) for e in schedule]
    if any(b < a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be non-decreasing")

    def select(outputs, eps_cum):
        return schedule[min(len(outputs), len(schedule) - 1)]

    return select


class NoiseReductionBase:
    """Adapter running a noise-reduction session as the engine's base mechanism.

    ``fx_of`` maps the training split to the sensitive vector.
    """

    def __init__(self, fx_of: Callable, delta: float, alpha: float, method: str = "brownian"):
        if method not in ("brownian", "precision-weighted"):
            raise ValueError(f"unknown noise-reduction method {method!r}")
        self.fx_of = fx_of
        self.delta = delta
        self.alpha = alpha
        self.method = method
        self.session: NoiseReductionSession | None = None

    def __call__(self, train, eps_cum: float, outputs, rng):
        if self.session is None:
            self.session = NoiseReductionSession(self.fx_of(train), self.delta, self.alpha)
        release = brownian_release if self.method == "brownian" else pw_release
        return release(self.session, eps_cum, rng).payload


def _as_index_set(split) -> frozenset:
    return frozenset(np.asarray(split).ravel().tolist())


@dataclass
class AccuracyFirstEngine:
    """Accuracy-first loop over disjoint training and validation splits.

    Args:
        train: row indices (or any array of record ids) of the training split.
        validation: ids of the validation split; must not overlap ``train``.
        base: ``base(train, eps_cum, outputs, rng) -> payload``.
        selector: ``selector(outputs, eps_cum) -> next cumulative budget``.
        stopper: ``stopper(validation, payload, rng) -> True to halt``.
        eps_stop: RDP budget of the stopping rule.
        max_steps: iteration cap K.
    """

    train: Any
    validation: Any
    base: Callable
    selector: Callable
    stopper: Callable
    eps_stop: float
    max_steps: int

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        self.eps_stop = check_epsilon(self.eps_stop)
        overlap = _as_index_set(self.train) & _as_index_set(self.validation)
        if overlap:
            raise ValueError(f"training and validation splits share {len(overlap)} records")

    def run(self, rng: np.random.Generator) -> CompositionResult:
        outputs: list = []
        eps_cum: list[float] = []
        steps: list[float] = []
        answers: list[bool] = []
        halted = False
        prev = 0.0
        for _ in range(self.max_steps):
            cum = check_epsilon(self.selector(list(outputs), list(eps_cum)))
            if cum < prev:
                raise ValueError(f"selector decreased the cumulative budget: {cum} < {prev}")
            y = self.base(self.train, cum, list(outputs), rng)
            outputs.append(y)
            eps_cum.append(cum)
            steps.append(cum - prev)
            prev = cum
            halt = bool(self.stopper(self.validation, y, rng))
            answers.append(halt)
            if halt:
                halted = True
                break
        total = max(prev, self.eps_stop)
        return CompositionResult(len(outputs), outputs, steps, eps_cum, total, halted, answers)


def run_accuracy_first(base, selector, stopper, max_steps, rng, eps_stop, train=(), validation=()):
    """Functional wrapper around :class:`AccuracyFirstEngine`."""
    engine = AccuracyFirstEngine(train, validation, base, selector, stopper, eps_stop, max_steps)
    return engine.run(rng)


# -- plain Gaussian accuracy check -------------------------------------------

@dataclass(frozen=True)
class GaussianCheckConfig:
    alpha: float
    delta_acc: float
    m: int
    eps_check: float
    threshold: float

    def __post_init__(self):
        check_alpha(self.alpha)
        check_sensitivity(self.delta_acc)
        check_epsilon(self.eps_check)
        if self.m < 2:
            raise ValueError("need at least two candidate budgets (m >= 2)")

    @property
    def max_checks(self) -> int:
        return self.m - 1

    @property
    def variance(self) -> float:
        """Noise variance alpha * delta_acc**2 * (m - 1) / (2 * eps_check)."""
        return gaussian_variance_for_rdp(self.alpha, self.delta_acc, self.eps_check / self.max_checks)


class GaussianCheck:
    """Noisy threshold test releasing each accuracy with Gaussian noise.

    The check budget is split evenly over at most ``m - 1`` invocations.
    """

    def __init__(self, cfg: GaussianCheckConfig):
        self.cfg = cfg
        self.calls = 0
        self.last_noisy: float | None = None

    def __call__(self, accuracy: float, rng: np.random.Generator) -> bool:
        if self.calls >= self.cfg.max_checks:
            raise BudgetExhaustedError(f"Gaussian check allows only {self.cfg.max_checks} invocations")
        self.calls += 1
        self.last_noisy = float(sample_gaussian(accuracy, self.cfg.variance, rng))
        return self.last_noisy >= self.cfg.threshold


def gaussian_check(accuracy: float, cfg: GaussianCheckConfig, rng: np.random.Generator) -> bool:
    """Single-shot check; stateful callers should use :class:`GaussianCheck`."""
    return GaussianCheck(cfg)(accuracy, rng)


# -- sparse vector check ------------------------------------------------------

@dataclass(frozen=True)
class SvtCheckConfig:
    """Noise levels of the SVT check.

    ``sigma1`` is the standard deviation of the Gaussian threshold noise and
    ``sigma2`` the standard deviation of the Laplace query noise.
    """

    sigma1: float
    sigma2: float
    t_split: float
    alpha: float
    delta_acc: float
    eps_check: float
    threshold: float = 0.0

    @property
    def eps_gaussian(self) -> float:
        return self.alpha * self.delta_acc**2 / (2 * self.sigma1**2)

    @property
    def eps_laplace(self) -> float:
        return 2 * math.sqrt(2) * self.delta_acc / self.sigma2

    @property
    def laplace_scale(self) -> float:
        return self.sigma2 / math.sqrt(2)

    @property
    def total_variance(self) -> float:
        return self.sigma1**2 + self.sigma2**2


def svt_sigmas(t: float, alpha: float, delta_acc: float, eps_check: float) -> tuple[float, float]:
    """Noise standard deviations for a variance split ``t`` in (0, 1).

    sigma1 is the positive root of
    ``eps_check * s**2 - (2 * sqrt(2) * delta_acc / t') * s - alpha * delta_acc**2 / 2``
    with ``t' = sqrt((1 - t) / t)``, and ``sigma2 = t' * sigma1``.
    """
    tp = math.sqrt((1 - t) / t)
    b = 2 * math.sqrt(2) * delta_acc / tp
    sigma1 = (b + math.sqrt(b * b + 2 * eps_check * alpha * delta_acc**2)) / (2 * eps_check)
    return sigma1, tp * sigma1


def _split_total_variance(t, alpha, delta_acc, eps_check):
    s1, s2 = svt_sigmas(t, alpha, delta_acc, eps_check)
    return s1 * s1 + s2 * s2


def svt_calibrate(alpha: float, delta_acc: float, eps_check: float, threshold: float = 0.0, xatol: float = 1e-6) -> SvtCheckConfig:
    """Choose the variance split minimising sigma1**2 + sigma2**2 subject to
    eps_gaussian + eps_laplace = eps_check."""
    alpha = check_alpha(alpha)
    delta_acc = check_sensitivity(delta_acc)
    eps_check = check_epsilon(eps_check)
    if eps_check == 0 or math.isinf(eps_check):
        raise ValueError("SVT calibration needs a finite positive budget")

    # the objective scales as delta_acc**2, so optimise on the unit problem
    res = minimize_scalar(
        _split_total_variance,
        bounds=(xatol, 1 - xatol),
        args=(alpha, 1.0, eps_check),
        method="bounded",
        options={"xatol": xatol},
    )
    if not res.success:
        raise RuntimeError(f"variance split optimisation did not converge: {res.message}")
    t = float(res.x)
    sigma1, sigma2 = svt_sigmas(t, alpha, delta_acc, eps_check)
    return SvtCheckConfig(sigma1, sigma2, t, alpha, delta_acc, eps_check, threshold)


class SvtCheck:
    """Above-threshold test: Gaussian threshold noise drawn once, Laplace noise per query.

    Queries are answered until the first noisy accuracy at or above the noisy
    threshold; after that the check refuses further queries.
    """

    def __init__(self, cfg: SvtCheckConfig, rng: np.random.Generator, noiseless: bool = False):
        self.cfg = cfg
        self.noiseless = noiseless
        self.threshold_noise = 0.0 if noiseless else float(rng.normal(0.0, cfg.sigma1))
        self.halted = False
        self.last_noisy: float | None = None

    @property
    def noisy_threshold(self) -> float:
        return self.cfg.threshold + self.threshold_noise

    def __call__(self, accuracy: float, rng: np.random.Generator) -> bool:
        if self.halted:
            raise CheckerHaltedError("SVT check already halted")
        noisy = float(accuracy) if self.noiseless else sample_laplace(accuracy, self.cfg.laplace_scale, rng)
        self.last_noisy = noisy
        self.halted = noisy >= self.noisy_threshold
        return self.halted
