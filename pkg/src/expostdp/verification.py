"""Exact and Monte Carlo checks of ex-post privacy definitions.

A mechanism on a neighbouring pair (X, X') is alpha-ex-post RDP when

    E_{(y, eps) ~ M(X')} [ exp((1 - alpha) * eps) * (p_X(y, eps) / p_X'(y, eps))**alpha ] <= 1.

Infinite reported budgets follow the conventions exp(-inf) = 0 and
0 * inf = 0, handled by explicit branches.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .accounting import check_alpha, check_epsilon
from .mechanisms import DiscretePairMechanism, StochasticMap, post_process

MAX_JOINT_OUTCOMES = 100_000


class PreconditionError(ValueError):
    """The inputs do not satisfy the hypotheses of the theorem being checked."""


@dataclass(frozen=True)
class ExPostRdpValue:
    lhs: float
    alpha: float

    @property
    def satisfied(self) -> bool:
        return self.lhs <= 1


@dataclass(frozen=True)
class PlfSample:
    outcome: object
    plf: float
    reported_eps: float


def _log_terms(mech: DiscretePairMechanism, alpha: float) -> np.ndarray:
    """Per-outcome log of exp((1-alpha) eps) p_X**alpha p_X'**(1-alpha); -inf for zero terms."""
    out = np.full(len(mech), -np.inf)
    for k, (px, pxp, e) in enumerate(zip(mech.p_x, mech.p_xp, mech.eps)):
        if math.isinf(e) or px == 0:
            continue
        if pxp == 0:
            out[k] = np.inf
            continue
        out[k] = (1 - alpha) * e + alpha * math.log(px) + (1 - alpha) * math.log(pxp)
    return out


def expost_rdp_lhs_exact(mech: DiscretePairMechanism, alpha: float) -> ExPostRdpValue:
    """Exact value of the ex-post RDP expectation for the ordered pair (X, X')."""
    alpha = check_alpha(alpha)
    logs = _log_terms(mech, alpha)
    if np.any(logs == np.inf):
        return ExPostRdpValue(math.inf, alpha)
    if np.all(logs == -np.inf):
        return ExPostRdpValue(0.0, alpha)
    direct = _direct_sum(mech, alpha, logs > -np.inf, with_eps=True)
    if math.isfinite(direct) and direct > 0:
        return ExPostRdpValue(direct, alpha)
    return ExPostRdpValue(float(np.exp(logsumexp(logs))), alpha)


def _direct_sum(mech, alpha, keep, with_eps):
    """Sum of p_X * (p_X / p_X')**(alpha - 1) [* exp((1 - alpha) eps)] over ``keep``.

    Exact on simple inputs where the log-space sum is not; callers fall back
    to log space when this overflows or underflows.
    """
    px, pxp = mech.p_x[keep], mech.p_xp[keep]
    with np.errstate(over="ignore", under="ignore"):
        terms = px * (px / pxp) ** (alpha - 1)
        if with_eps:
            terms = terms * np.exp((1 - alpha) * mech.eps[keep])
    return math.fsum(terms.tolist()) if np.all(np.isfinite(terms)) else math.inf


def satisfies_expost_rdp(mech: DiscretePairMechanism, alpha: float, tol: float = 0.0) -> bool:
    """Check both orderings of the neighbouring pair."""
    return all(expost_rdp_lhs_exact(m, alpha).lhs <= 1 + tol for m in (mech, mech.swapped()))


def renyi_divergence_exact(mech: DiscretePairMechanism, alpha: float) -> float:
    """D_alpha(M(X) || M(X')) of the joint (y, eps) output."""
    alpha = check_alpha(alpha)
    keep = mech.p_x > 0
    if np.any(mech.p_xp[keep] == 0):
        return math.inf
    direct = _direct_sum(mech, alpha, keep, with_eps=False)
    if math.isfinite(direct) and direct > 0:
        total = math.log(direct)
    else:
        px, pxp = mech.p_x[keep], mech.p_xp[keep]
        total = float(logsumexp(alpha * np.log(px) + (1 - alpha) * np.log(pxp)))
    # the divergence is non-negative; clamp rounding noise around zero
    return max(0.0, total / (alpha - 1))


def renyi_divergence_gaussians(alpha: float, delta: float, variance: float) -> float:
    """D_alpha between N(mu, v) and N(mu + delta, v): alpha * delta**2 / (2 v)."""
    alpha = check_alpha(alpha)
    delta = float(delta)
    if not math.isfinite(delta):
        raise ValueError("delta must be finite")
    variance = float(variance)
    if math.isnan(variance) or variance <= 0:
        raise ValueError(f"variance must be > 0, got {variance}")
    return alpha * delta**2 / (2 * variance)


def privacy_loss(mech: DiscretePairMechanism) -> list[PlfSample]:
    """ln p_X / p_X' at every outcome with positive probability under X."""
    out = []
    for lab, px, pxp, e in zip(mech.outcomes, mech.p_x, mech.p_xp, mech.eps):
        if px == 0:
            continue
        plf = math.inf if pxp == 0 else math.log(px / pxp)
        out.append(PlfSample(lab, plf, float(e)))
    return out


def probabilistic_expost_violation_mass(mech: DiscretePairMechanism, tol: float = 1e-12) -> float:
    """Probability under X that the privacy loss exceeds the reported bound.

    ``tol`` absorbs rounding when the loss equals the bound exactly. An
    infinite loss never exceeds an infinite bound.
    """
    mass = 0.0
    for s, px in zip(privacy_loss(mech), mech.p_x[mech.p_x > 0]):
        if math.isinf(s.reported_eps):
            continue
        if s.plf > s.reported_eps + tol:
            mass += px
    return float(mass)


def is_probabilistic_expost_private(mech: DiscretePairMechanism, delta: float, tol: float = 1e-12) -> bool:
    return all(probabilistic_expost_violation_mass(m, tol) <= delta for m in (mech, mech.swapped()))


def probabilistic_dp_holds(mech: DiscretePairMechanism, eps: float, delta: float, tol: float = 1e-12) -> bool:
    """Brute-force (eps, delta)-probabilistic DP on a finite outcome set, both orderings.

    Enumerates every candidate bad set and every event, straight from the
    definition, so it is independent of the privacy-loss computation.
    """
    n = len(mech)
    if n > 12:
        raise ValueError("brute force limited to 12 outcomes")
    subsets = [frozenset(c) for r in range(n + 1) for c in itertools.combinations(range(n), r)]

    def one_way(p, q):
        for bad in subsets:
            if sum(p[i] for i in bad) > delta + tol:
                continue
            if all(
                sum(p[i] for i in ev - bad) <= math.exp(eps) * sum(q[i] for i in ev - bad) + tol
                for ev in subsets
            ):
                return True
        return False

    return one_way(mech.p_x, mech.p_xp) and one_way(mech.p_xp, mech.p_x)


# -- Monte Carlo ------------------------------------------------------------------

def expost_rdp_lhs_monte_carlo(
    sampler: Callable,
    log_ratio: Callable,
    alpha: float,
    n: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of the ex-post RDP expectation.

    Args:
        sampler: ``sampler(n, rng) -> (y, eps)`` drawing ``n`` outputs under X'.
        log_ratio: ``log_ratio(y, eps) -> ln p_X / p_X'`` per sample.
        alpha: Rényi order.
        n: number of samples, at least 10**4.
        rng: numpy generator.
    """
    alpha = check_alpha(alpha)
    if n < 10_000:
        raise ValueError(f"need at least 10**4 samples, got {n}")
    y, eps = sampler(n, rng)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (n,))
    lr = np.asarray(log_ratio(y, eps), dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        expo = np.where(np.isinf(eps), -np.inf, (1 - alpha) * eps + alpha * lr)
        terms = np.exp(expo)
    if not np.all(np.isfinite(terms)):
        bad = int(np.sum(~np.isfinite(terms)))
        raise FloatingPointError(f"{bad} non-finite summands in the Monte Carlo estimate")
    return float(terms.mean()), float(terms.std(ddof=1) / math.sqrt(n))


# -- theorem checks ------------------------------------------------------------------

def filter_theorem_check(mech: DiscretePairMechanism, eps_cap: float, alpha: float) -> bool:
    """Bounded reported budgets plus ex-post RDP imply (alpha, eps_cap)-RDP.

    Verifies the hypotheses for both orderings, then returns whether the exact
    Rényi divergence of the joint output is within the cap in both directions.
    """
    eps_cap = check_epsilon(eps_cap)
    alpha = check_alpha(alpha)
    if np.any(mech.eps > eps_cap):
        raise PreconditionError("a reported budget exceeds the cap")
    if not satisfies_expost_rdp(mech, alpha):
        raise PreconditionError("mechanism is not alpha-ex-post RDP")
    if math.isinf(eps_cap):
        return True
    return all(renyi_divergence_exact(m, alpha) <= eps_cap for m in (mech, mech.swapped()))


Stage = DiscretePairMechanism | Callable[[tuple], DiscretePairMechanism]


def adaptive_composition(stages: Sequence[Stage]) -> DiscretePairMechanism:
    """Joint mechanism of an adaptive sequence, reporting the summed budget.

    Each stage is either a fixed mechanism or a callable receiving the tuple of
    earlier outcome labels and returning the next mechanism. Joint outcomes are
    label tuples.
    """
    if not stages:
        raise ValueError("need at least one stage")
    branches = [((), 1.0, 1.0, 0.0)]
    for stage in stages:
        nxt = []
        for labels, px, pxp, eps in branches:
            mech = stage(labels) if callable(stage) else stage
            for lab, a, b, e in zip(mech.outcomes, mech.p_x, mech.p_xp, mech.eps):
                nxt.append((labels + (lab,), px * a, pxp * b, eps + e))
            if len(nxt) > MAX_JOINT_OUTCOMES:
                raise OverflowError(f"joint outcome space exceeds {MAX_JOINT_OUTCOMES}")
        branches = nxt
    labels, px, pxp, eps = zip(*branches)
    return DiscretePairMechanism(labels, px, pxp, eps)


def composition_check(stages: Sequence[Stage], alpha: float) -> ExPostRdpValue:
    """Exact ex-post RDP expectation of the adaptive composition."""
    return expost_rdp_lhs_exact(adaptive_composition(stages), alpha)


# -- counterexample search -------------------------------------------------------

@dataclass(frozen=True)
class CounterexampleWitness:
    mech: DiscretePairMechanism
    fmap: StochasticMap
    before: float
    after: float
    eps: float
    delta: float
    probabilistic_dp_before: bool
    probabilistic_dp_after: bool


def _violation_both(mech, tol):
    return max(probabilistic_expost_violation_mass(m, tol) for m in (mech, mech.swapped()))


def ppi_counterexample_search(
    delta: float,
    resolution: float = 0.01,
    eps: float = math.log(2),
    tol: float = 1e-9,
) -> CounterexampleWitness:
    """Find a 4-outcome mechanism where merging two outcomes breaks
    delta-probabilistic ex-post privacy.

    The mechanism reports a constant ``eps``. Outcomes ``a`` and ``b`` are the
    pair to be merged; the remaining mass under each input is split evenly
    between ``c`` and ``d``. Probabilities for ``a`` and ``b`` range over the
    grid in a fixed order, so the result is deterministic.
    """
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    steps = int(round(1 / resolution))
    grid = [k / steps for k in range(steps + 1)]
    labels = ["a", "b", "c", "d"]
    merge = StochasticMap.merge(labels, {"ab": ["a", "b"]})
    ratio = math.exp(eps)
    for ax, bx in itertools.product(grid, grid):
        if ax + bx > 1 or ax > delta + tol:
            continue
        for axp, bxp in itertools.product(grid, grid):
            if axp + bxp > 1:
                continue
            # cheap prefilter: merged pair must break the ratio bound, singles must not both
            if ax + bx <= ratio * (axp + bxp) + tol:
                continue
            rx, rxp = (1 - ax - bx) / 2, (1 - axp - bxp) / 2
            mech = DiscretePairMechanism(labels, [ax, bx, rx, rx], [axp, bxp, rxp, rxp], eps)
            # outcomes on the ratio boundary count as violating, so the witness
            # does not hinge on rounding
            if _violation_both(mech, -tol) > delta:
                continue
            merged = post_process(mech, merge)
            after = _violation_both(merged, tol)
            if after > delta:
                before = _violation_both(mech, tol)
                return CounterexampleWitness(
                    mech,
                    merge,
                    before,
                    after,
                    eps,
                    delta,
                    probabilistic_dp_holds(mech, eps, delta),
                    probabilistic_dp_holds(merged, eps, delta),
                )
    raise LookupError("grid exhausted without a witness; try a finer resolution")
