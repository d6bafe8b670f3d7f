"""Noise primitives, finite-outcome mechanisms and ex-post post-processing.

A mechanism in the ex-post setting returns a pair ``(payload, reported_eps)``.
For exact verification we work with :class:`DiscretePairMechanism`, which
tabulates the output distribution of such a mechanism on a fixed pair of
neighbouring inputs X and X'.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Hashable, Sequence

import numpy as np

from .accounting import INFINITE_VARIANCE

PROB_TOL = 1e-12


@dataclass(frozen=True)
class ExPostOutput:
    """A released payload together with the privacy bound the mechanism claims for it."""

    payload: Any
    reported_eps: float

    def __post_init__(self):
        if math.isnan(self.reported_eps) or self.reported_eps < 0:
            raise ValueError(f"reported epsilon must be >= 0, got {self.reported_eps}")


def _probability_vector(values, name: str) -> np.ndarray:
    p = np.asarray(values, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise ValueError(f"{name} must be finite and non-negative")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"{name} must sum to 1, sums to {p.sum()!r}")
    return p


@dataclass(frozen=True, eq=False)
class DiscretePairMechanism:
    """Output tables of a finite-outcome ex-post mechanism on inputs X and X'.

    Attributes:
        outcomes: outcome labels, one per table entry.
        p_x: probability of each outcome when run on X.
        p_xp: probability of each outcome when run on X'.
        eps: privacy bound reported alongside each outcome (may be ``inf``).
    """

    outcomes: tuple
    p_x: np.ndarray
    p_xp: np.ndarray
    eps: np.ndarray

    def __init__(self, outcomes: Sequence[Hashable], p_x, p_xp, eps):
        outcomes = tuple(outcomes)
        p_x = _probability_vector(p_x, "p_x")
        p_xp = _probability_vector(p_xp, "p_xp")
        eps = np.broadcast_to(np.asarray(eps, dtype=float), p_x.shape).copy()
        if not (len(outcomes) == p_x.size == p_xp.size):
            raise ValueError("outcomes, p_x and p_xp must have equal length")
        if len(set(outcomes)) != len(outcomes):
            raise ValueError("outcome labels must be unique")
        if np.any(np.isnan(eps)) or np.any(eps < 0):
            raise ValueError("reported epsilons must be >= 0")
        for arr in (p_x, p_xp, eps):
            arr.setflags(write=False)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "p_x", p_x)
        object.__setattr__(self, "p_xp", p_xp)
        object.__setattr__(self, "eps", eps)

    def __len__(self):
        return len(self.outcomes)

    def __eq__(self, other):
        if not isinstance(other, DiscretePairMechanism):
            return NotImplemented
        return (
            self.outcomes == other.outcomes
            and np.array_equal(self.p_x, other.p_x)
            and np.array_equal(self.p_xp, other.p_xp)
            and np.array_equal(self.eps, other.eps)
        )

    def swapped(self) -> DiscretePairMechanism:
        """The same mechanism with the roles of X and X' exchanged."""
        return DiscretePairMechanism(self.outcomes, self.p_xp, self.p_x, self.eps)

    def eps_marginal(self, which: str = "x") -> dict[float, float]:
        """Distribution of the reported epsilon under X (``"x"``) or X' (``"xp"``)."""
        p = self.p_x if which == "x" else self.p_xp
        out: dict[float, float] = {}
        for e, q in zip(self.eps.tolist(), p.tolist()):
            out[e] = out.get(e, 0.0) + q
        return out


@dataclass(frozen=True, eq=False)
class StochasticMap:
    """A randomised post-processing function on a finite outcome set.

    ``kernel[i, j]`` is the probability of mapping source outcome ``i`` to
    target ``j``.
    """

    kernel: np.ndarray
    targets: tuple

    def __init__(self, kernel, targets: Sequence[Hashable] | None = None):
        kernel = np.array(kernel, dtype=float)
        if kernel.ndim != 2:
            raise ValueError("kernel must be a matrix")
        if np.any(~np.isfinite(kernel)) or np.any(kernel < 0):
            raise ValueError("kernel entries must be finite and non-negative")
        if np.any(np.abs(kernel.sum(axis=1) - 1.0) > PROB_TOL):
            raise ValueError("every kernel row must sum to 1")
        if targets is None:
            targets = range(kernel.shape[1])
        targets = tuple(targets)
        if len(targets) != kernel.shape[1]:
            raise ValueError("need one target label per kernel column")
        kernel.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "targets", targets)

    @classmethod
    def identity(cls, labels: Sequence[Hashable]) -> StochasticMap:
        return cls(np.eye(len(labels)), labels)

    @classmethod
    def merge(cls, labels: Sequence[Hashable], groups: dict[Hashable, Sequence[Hashable]]) -> StochasticMap:
        """Deterministic map sending every label in ``groups[t]`` to target ``t``.

        Labels not mentioned in any group map to themselves.
        """
        labels = list(labels)
        dest = {lab: lab for lab in labels}
        for target, members in groups.items():
            for lab in members:
                dest[lab] = target
        targets = list(dict.fromkeys(dest[lab] for lab in labels))
        kernel = np.zeros((len(labels), len(targets)))
        for i, lab in enumerate(labels):
            kernel[i, targets.index(dest[lab])] = 1.0
        return cls(kernel, targets)


def post_process(mech: DiscretePairMechanism, fmap: StochasticMap) -> DiscretePairMechanism:
    """Apply ``fmap`` to the output of ``mech``, keeping the reported epsilon.

    The reported bound of the post-processed mechanism is the original one, so
    an output is the pair (target, source epsilon). When all sources feeding a
    target share one epsilon the target label is used as is; otherwise the
    target is split into one outcome ``(target, eps)`` per distinct epsilon.
    """
    kernel = fmap.kernel
    if kernel.shape[0] != len(mech):
        raise ValueError(f"map has {kernel.shape[0]} source outcomes, mechanism has {len(mech)}")

    labels, px, pxp, eps = [], [], [], []
    for j, target in enumerate(fmap.targets):
        feeding = np.flatnonzero(kernel[:, j] > 0)
        strata = sorted(set(mech.eps[feeding].tolist()))
        for e in strata:
            rows = feeding[mech.eps[feeding] == e]
            labels.append(target if len(strata) == 1 else (target, e))
            px.append(mech.p_x[rows] @ kernel[rows, j])
            pxp.append(mech.p_xp[rows] @ kernel[rows, j])
            eps.append(e)
    return DiscretePairMechanism(labels, px, pxp, eps)


def pathological_mechanism() -> DiscretePairMechanism:
    """Reveal the input with probability 1/2, otherwise release nothing.

    Revealing outcomes report an infinite bound; releasing nothing reports 0.
    """
    return DiscretePairMechanism(
        ["reveal-X", "reveal-X'", "nothing"],
        [0.5, 0.0, 0.5],
        [0.0, 0.5, 0.5],
        [math.inf, math.inf, 0.0],
    )


def randomized_response(p: float, eps: float | None = None) -> DiscretePairMechanism:
    """Binary randomized response reporting the truth with probability ``p``.

    By default the reported bound is the exact pure-DP level ln(p / (1 - p)).
    """
    if not 0.5 <= p < 1:
        raise ValueError(f"p must lie in [0.5, 1), got {p}")
    if eps is None:
        eps = math.log(p / (1 - p))
    return DiscretePairMechanism(["yes", "no"], [p, 1 - p], [1 - p, p], eps)


def sample_gaussian(mean, variance: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. N(0, variance) noise to every element of ``mean``.

    An infinite variance yields an array of zeros: an arbitrary fixed value that
    callers must weight by zero.
    """
    mean = np.asarray(mean, dtype=float)
    variance = float(variance)
    if math.isnan(variance) or variance < 0:
        raise ValueError(f"variance must be >= 0, got {variance}")
    if variance == INFINITE_VARIANCE:
        return np.zeros_like(mean)
    if variance == 0:
        return mean.copy()
    return mean + rng.normal(0.0, math.sqrt(variance), size=mean.shape)


def sample_laplace(mean, scale: float, rng: np.random.Generator):
    """Laplace(mean, scale) draw(s); the variance is ``2 * scale**2``."""
    scale = float(scale)
    if not math.isfinite(scale) or scale <= 0:
        raise ValueError(f"Laplace scale must be finite and > 0, got {scale}")
    mean = np.asarray(mean, dtype=float)
    draw = mean + rng.laplace(0.0, scale, size=mean.shape)
    return float(draw) if draw.ndim == 0 else draw


# -- plain-text serialization ------------------------------------------------

def _format_float(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def dump_mechanism(mech: DiscretePairMechanism, path) -> None:
    """Write one outcome per line: ``label, p_X, p_X', eps``."""
    lines = ["# label, p_X, p_X', eps"]
    for lab, a, b, e in zip(mech.outcomes, mech.p_x, mech.p_xp, mech.eps):
        lab = str(lab)
        if "," in lab or lab.startswith("#"):
            raise ValueError(f"label {lab!r} cannot be serialized")
        lines.append(", ".join([lab, _format_float(a), _format_float(b), _format_float(e)]))
    Path(path).write_text("\n".join(lines) + "\n")


def parse_mechanism(text: str) -> DiscretePairMechanism:
    labels, px, pxp, eps = [], [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [s.strip() for s in line.split(",")]
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 4 comma-separated fields, got {len(parts)}")
        try:
            a, b, e = (float(s) for s in parts[1:])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        labels.append(parts[0])
        px.append(a)
        pxp.append(b)
        eps.append(e)
    if not labels:
        raise ValueError("no outcomes found")
    return DiscretePairMechanism(labels, px, pxp, eps)


def load_mechanism(path) -> DiscretePairMechanism:
    return parse_mechanism(Path(path).read_text())
