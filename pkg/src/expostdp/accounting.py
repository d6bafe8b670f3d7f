"""Privacy-budget arithmetic for Rényi DP.

All budgets are in nats. An RDP epsilon of 0 corresponds to an infinitely
noisy Gaussian release; that case is represented by ``math.inf`` returned
from an explicit branch, never by overflow.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

INFINITE_VARIANCE = math.inf


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha <= 1:
        raise ValueError(f"Rényi order must be finite and > 1, got {alpha}")
    return alpha


def check_sensitivity(delta: float, allow_zero: bool = False) -> float:
    delta = float(delta)
    if not math.isfinite(delta) or delta < 0 or (delta == 0 and not allow_zero):
        raise ValueError(f"sensitivity must be finite and positive, got {delta}")
    return delta


def check_epsilon(eps: float) -> float:
    eps = float(eps)
    if math.isnan(eps) or eps < 0:
        raise ValueError(f"RDP epsilon must be >= 0, got {eps}")
    return eps


def gaussian_variance_for_rdp(alpha: float, delta: float, eps: float) -> float:
    """Noise variance that makes the Gaussian mechanism (alpha, eps)-RDP.

    Returns ``alpha * delta**2 / (2 * eps)``. ``eps == 0`` yields
    ``INFINITE_VARIANCE`` and ``eps == inf`` yields 0.
    """
    alpha = check_alpha(alpha)
    delta = check_sensitivity(delta)
    eps = check_epsilon(eps)
    if eps == 0:
        return INFINITE_VARIANCE
    if math.isinf(eps):
        return 0.0
    return alpha * delta**2 / (2 * eps)


def rdp_epsilon_of_gaussian(alpha: float, delta: float, variance: float) -> float:
    """Inverse of :func:`gaussian_variance_for_rdp`."""
    alpha = check_alpha(alpha)
    delta = check_sensitivity(delta)
    variance = float(variance)
    if math.isnan(variance) or variance <= 0:
        raise ValueError(f"variance must be > 0, got {variance}")
    if math.isinf(variance):
        return 0.0
    return alpha * delta**2 / (2 * variance)


def rdp_to_adp(alpha: float, eps: float, target_delta: float) -> tuple[float, float]:
    """Convert an (alpha, eps) RDP bound to (eps', delta) approximate DP.

    Uses eps' = eps + ln(1/delta) / (alpha - 1).
    """
    alpha = check_alpha(alpha)
    eps = check_epsilon(eps)
    if not 0 < target_delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {target_delta}")
    return eps + math.log(1 / target_delta) / (alpha - 1), float(target_delta)


def total_with_stopping(eps_list: Sequence[float], eps_stop: float) -> float:
    """Total bound of a composition followed by a stopping rule: max(sum, eps_stop)."""
    return max(math.fsum(check_epsilon(e) for e in eps_list), check_epsilon(eps_stop))


def log_spaced_schedule(lo: float, hi: float, m: int) -> list[float]:
    """``m`` geometrically spaced budgets from ``lo`` to ``hi`` inclusive."""
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo <= 0:
        raise ValueError(f"schedule bounds must be finite with lo > 0, got {lo}")
    if not lo < hi:
        raise ValueError(f"schedule requires lo < hi, got lo={lo}, hi={hi}")
    if m < 2:
        raise ValueError(f"schedule needs at least 2 points, got {m}")
    values = np.geomspace(lo, hi, m)
    # geomspace already pins the endpoints; keep them as the exact inputs
    values[0], values[-1] = lo, hi
    return [float(v) for v in values]


def parse_schedule(text: str) -> list[float]:
    """Parse ``lo:hi:m`` or a comma-separated list of budgets."""
    if ":" in text:
        lo, hi, m = text.split(":")
        return log_spaced_schedule(float(lo), float(hi), int(m))
    values = [check_epsilon(float(v)) for v in text.split(",") if v.strip()]
    if not values or any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"schedule must be nonempty and strictly increasing: {text!r}")
    return values
