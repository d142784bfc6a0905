"""Finite discrete distributions on {0, 1, 2, ...} and their transforms.

Everything here is exact over the finite support: moments are plain sums,
the size-bias and equilibrium transforms are closed-form reweightings, and
the equilibrium identity can be checked to floating-point accuracy against
piecewise-linear test functions.  Infinite-support families (Poisson,
geometric) enter as truncated-and-renormalized laws with a configurable
tail tolerance.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping

import numpy as np

__all__ = [
    "DiscretePMF",
    "MomentSummary",
    "EquilibriumRep",
    "PiecewiseLinear",
    "moments",
    "size_bias",
    "equilibrium_rep",
    "equilibrium_cdf",
    "sample",
    "sample_many",
    "sample_equilibrium",
    "sample_equilibrium_many",
    "check_equilibrium_identity",
    "poisson_pmf",
    "geometric_pmf",
    "binary_pmf",
    "pmf_from_mapping",
    "parse_law",
]

DEFAULT_TAIL_TOL = 1e-14
PROB_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscretePMF:
    """Probability mass function with finite support on the nonnegative integers.

    ``support`` is strictly increasing, ``probs`` are nonnegative and sum to
    one within 1e-12.  The cumulative array used for inverse-CDF sampling is
    cached at construction with its last entry pinned to exactly 1.
    """

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        support = np.asarray(self.support, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        if support.ndim != 1 or probs.ndim != 1 or support.shape != probs.shape:
            raise ValueError("support and probs must be 1-D arrays of equal length")
        if support.size == 0:
            raise ValueError("support is empty")
        if support[0] < 0:
            raise ValueError("support must be nonnegative")
        if support.size > 1 and np.any(np.diff(support) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(probs < 0.0):
            raise ValueError("probabilities must be nonnegative")
        total = math.fsum(probs.tolist())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, expected 1")
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        object.__setattr__(self, "cumprobs", cum)

    def mean(self) -> float:
        return math.fsum((self.support * self.probs).tolist())

    def raw_moment(self, order: int) -> float:
        return math.fsum((self.support.astype(np.float64) ** order * self.probs).tolist())

    def prob_at(self, k: int) -> float:
        idx = np.searchsorted(self.support, k)
        if idx < self.support.size and self.support[idx] == k:
            return float(self.probs[idx])
        return 0.0

    def cdf(self, x: float | np.ndarray) -> float | np.ndarray:
        """P[X <= x], a right-continuous step function."""
        idx = np.searchsorted(self.support, np.floor(np.asarray(x, dtype=np.float64)), side="right")
        padded = np.concatenate([[0.0], self.cumprobs])
        out = padded[idx]
        out = np.where(np.asarray(x) < self.support[0], 0.0, out)
        return float(out) if np.isscalar(x) else out

    def tail(self, y: float | np.ndarray) -> float | np.ndarray:
        """P[X > y]."""
        out = 1.0 - self.cdf(y)
        return float(out) if np.isscalar(y) else out

    @property
    def max_support(self) -> int:
        return int(self.support[-1])

    def as_mapping(self) -> dict[int, float]:
        return {int(k): float(p) for k, p in zip(self.support, self.probs)}


@dataclass(frozen=True)
class MomentSummary:
    """Mean, variance, third raw absolute moment and the one-child ratio.

    ``alpha`` is P[Z=1]/P[Z>=2]; it is only defined when at least two
    offspring occur with positive probability.
    """

    mean_m: float
    var_sigma2: float
    third_gamma: float
    alpha: float


@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    """Continuous piecewise-linear function on [0, inf).

    ``slopes[i]`` applies on [breaks[i], breaks[i+1]); the last slope extends
    to infinity.  ``breaks[0]`` must be 0.  Values follow by integrating the
    slopes from ``value_at_zero``, so both the function and its derivative
    are available in closed form.
    """

    breaks: np.ndarray
    slopes: np.ndarray
    value_at_zero: float = 0.0

    def __post_init__(self) -> None:
        breaks = np.asarray(self.breaks, dtype=np.float64)
        slopes = np.asarray(self.slopes, dtype=np.float64)
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "slopes", slopes)
        if breaks.ndim != 1 or slopes.ndim != 1 or breaks.shape != slopes.shape:
            raise ValueError("breaks and slopes must be 1-D arrays of equal length")
        if breaks.size == 0 or breaks[0] != 0.0:
            raise ValueError("breaks must start at 0")
        if breaks.size > 1 and np.any(np.diff(breaks) <= 0):
            raise ValueError("breaks must be strictly increasing")
        node_values = self.value_at_zero + np.concatenate(
            [[0.0], np.cumsum(slopes[:-1] * np.diff(breaks))]
        )
        object.__setattr__(self, "_node_values", node_values)

    def __call__(self, x: float | np.ndarray) -> float | np.ndarray:
        xa = np.asarray(x, dtype=np.float64)
        if np.any(xa < 0):
            raise ValueError("defined on [0, inf) only")
        idx = np.searchsorted(self.breaks, xa, side="right") - 1
        out = self._node_values[idx] + self.slopes[idx] * (xa - self.breaks[idx])
        return float(out) if np.isscalar(x) else out

    def slope_at(self, x: float | np.ndarray) -> float | np.ndarray:
        xa = np.asarray(x, dtype=np.float64)
        idx = np.searchsorted(self.breaks, xa, side="right") - 1
        out = self.slopes[idx]
        return float(out) if np.isscalar(x) else out


def moments(pmf: DiscretePMF) -> MomentSummary:
    """Exact moment bundle of an offspring law.

    Raises if P[Z>=2] = 0, in which case the one-child ratio is undefined.
    """
    m = pmf.mean()
    ez2 = pmf.raw_moment(2)
    ez3 = pmf.raw_moment(3)
    p1 = pmf.prob_at(1)
    p_ge2 = math.fsum(pmf.probs[pmf.support >= 2].tolist())
    if p_ge2 <= 0.0:
        raise ValueError("alpha undefined: P[Z >= 2] = 0")
    return MomentSummary(
        mean_m=m,
        var_sigma2=max(ez2 - m * m, 0.0),
        third_gamma=ez3,
        alpha=p1 / p_ge2,
    )


def size_bias(pmf: DiscretePMF) -> DiscretePMF:
    """Law reweighted proportionally to value: P[k] -> k P[k] / mean.

    The atom at zero disappears; point masses are fixed points.
    """
    m = pmf.mean()
    if m <= 0.0:
        raise ValueError("size-bias of zero distribution")
    keep = pmf.support > 0
    support = pmf.support[keep]
    probs = support * pmf.probs[keep] / m
    probs = probs / math.fsum(probs.tolist())
    return DiscretePMF(support, probs)


@dataclass(frozen=True, eq=False)
class EquilibriumRep:
    """Equilibrium transform of a discrete law, sampled as U times a size-biased draw.

    The CDF is (1/EX) * integral_0^x P[X > y] dy, a piecewise-linear function
    with kinks at the support points; segment integrals are cached so that
    evaluation is exact.
    """

    sb_pmf: DiscretePMF
    mean: float
    knots: np.ndarray
    tails: np.ndarray
    cum_integral: np.ndarray

    def cdf(self, x: float | np.ndarray) -> float | np.ndarray:
        xa = np.asarray(x, dtype=np.float64)
        idx = np.clip(np.searchsorted(self.knots, xa, side="right") - 1, 0, self.knots.size - 1)
        val = (self.cum_integral[idx] + self.tails[idx] * (xa - self.knots[idx])) / self.mean
        out = np.where(xa < 0.0, 0.0, np.where(xa >= self.knots[-1], 1.0, val))
        return float(out) if np.isscalar(x) else out

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.sample_many(1, rng)[0])

    def sample_many(self, size: int, rng: np.random.Generator) -> np.ndarray:
        ks = sample_many(self.sb_pmf, size, rng)
        return rng.random(size) * ks


def equilibrium_rep(pmf: DiscretePMF) -> EquilibriumRep:
    m = pmf.mean()
    if m <= 0.0:
        raise ValueError("equilibrium transform of zero distribution")
    sb = size_bias(pmf)
    positive = pmf.support[pmf.support > 0].astype(np.float64)
    knots = np.concatenate([[0.0], positive])
    tails = pmf.tail(knots)
    cum_integral = np.concatenate([[0.0], np.cumsum(tails[:-1] * np.diff(knots))])
    return EquilibriumRep(sb_pmf=sb, mean=m, knots=knots, tails=tails, cum_integral=cum_integral)


def equilibrium_cdf(pmf: DiscretePMF, x: float | np.ndarray) -> float | np.ndarray:
    """P[X^e <= x] for the equilibrium transform X^e of the given law."""
    return equilibrium_rep(pmf).cdf(x)


def sample(pmf: DiscretePMF, rng: np.random.Generator) -> int:
    """One inverse-CDF draw."""
    return int(sample_many(pmf, 1, rng)[0])


def sample_many(pmf: DiscretePMF, size: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(size)
    return pmf.support[np.searchsorted(pmf.cumprobs, u, side="right")]


def sample_equilibrium(pmf: DiscretePMF, rng: np.random.Generator) -> float:
    """One draw of U * K with K size-biased and U uniform(0,1), i.e. of X^e."""
    return equilibrium_rep(pmf).sample(rng)


def sample_equilibrium_many(pmf: DiscretePMF, size: int, rng: np.random.Generator) -> np.ndarray:
    return equilibrium_rep(pmf).sample_many(size, rng)


def check_equilibrium_identity(pmf: DiscretePMF, f: PiecewiseLinear) -> float:
    """Residual |E f(X) - f(0) - EX * E f'(X^e)| for a piecewise-linear f.

    The left side is a finite sum over the support; the right side integrates
    the piecewise-constant derivative against the step tail function, so both
    sides are closed-form and the residual measures rounding only.
    """
    m = pmf.mean()
    if m <= 0.0:
        raise ValueError("equilibrium transform of zero distribution")
    lhs = math.fsum((pmf.probs * f(pmf.support.astype(np.float64))).tolist()) - f.value_at_zero

    smax = float(pmf.max_support)
    inner_breaks = f.breaks[(f.breaks > 0.0) & (f.breaks < smax)]
    pts = np.unique(np.concatenate([[0.0], pmf.support[pmf.support > 0].astype(np.float64),
                                    inner_breaks, [smax]]))
    pts = pts[pts <= smax]
    mids = 0.5 * (pts[1:] + pts[:-1])
    contrib = f.slope_at(mids) * pmf.tail(mids) * np.diff(pts)
    rhs = math.fsum(np.asarray(contrib).tolist())
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# Named constructors

def poisson_pmf(mean: float, tail_tol: float = DEFAULT_TAIL_TOL) -> DiscretePMF:
    """Poisson law truncated once the remaining tail mass drops below tail_tol."""
    if mean <= 0.0:
        raise ValueError("mean must be positive")
    terms = [math.exp(-mean)]
    k = 0
    while 1.0 - math.fsum(terms) >= tail_tol:
        k += 1
        terms.append(terms[-1] * mean / k)
        if k > 10_000_000:
            raise RuntimeError("truncation did not converge")
    probs = np.array(terms)
    return DiscretePMF(np.arange(k + 1), probs / math.fsum(terms))


def geometric_pmf(mean: float, tail_tol: float = DEFAULT_TAIL_TOL) -> DiscretePMF:
    """Geometric law on {0,1,2,...} with the given mean, truncated and renormalized.

    Success parameter is 1/(1+mean), so P[k] = (1/(1+mean)) (mean/(1+mean))^k.
    """
    if mean <= 0.0:
        raise ValueError("mean must be positive")
    ratio = mean / (1.0 + mean)
    n_terms = max(1, math.ceil(math.log(tail_tol) / math.log(ratio)))
    ks = np.arange(n_terms)
    probs = (1.0 - ratio) * ratio ** ks
    return DiscretePMF(ks, probs / math.fsum(probs.tolist()))


def binary_pmf(p: float) -> DiscretePMF:
    """Two-point law P[0] = 1-p, P[2] = p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if p == 0.0:
        return DiscretePMF(np.array([0]), np.array([1.0]))
    if p == 1.0:
        return DiscretePMF(np.array([2]), np.array([1.0]))
    return DiscretePMF(np.array([0, 2]), np.array([1.0 - p, p]))


def pmf_from_mapping(mapping: Mapping[int, float]) -> DiscretePMF:
    """Explicit law from a {value: probability} mapping (must sum to 1)."""
    items = sorted((int(k), float(v)) for k, v in mapping.items())
    support = np.array([k for k, _ in items], dtype=np.int64)
    probs = np.array([v for _, v in items])
    return DiscretePMF(support, probs)


_LAW_RE = re.compile(r"^\s*(poisson|geometric|binary)\s*\(\s*([0-9.eE+-]+)\s*\)\s*$")
_PMF_RE = re.compile(r"^\s*pmf\s*:\s*\[(.*)\]\s*$")


def parse_law(text: str) -> DiscretePMF:
    """Parse a CLI offspring-law spec.

    Accepted forms: ``poisson(m)``, ``geometric(m)``, ``binary(p)`` and
    explicit ``pmf:[k:p, k:p, ...]`` literals.
    """
    m = _LAW_RE.match(text)
    if m:
        kind, value = m.group(1), float(m.group(2))
        if kind == "poisson":
            return poisson_pmf(value)
        if kind == "geometric":
            return geometric_pmf(value)
        return binary_pmf(value)
    m = _PMF_RE.match(text)
    if m:
        entries = {}
        for part in m.group(1).split(","):
            part = part.strip()
            if not part:
                continue
            k, _, p = part.partition(":")
            entries[int(k)] = float(p)
        if not entries:
            raise ValueError(f"empty pmf literal: {text!r}")
        return pmf_from_mapping(entries)
    raise ValueError(f"cannot parse law {text!r}")
