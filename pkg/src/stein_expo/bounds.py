"""Closed-form error bounds for the exponential approximation.

Covers the coupling-gap bounds (Wasserstein and Kolmogorov flavors), the
branching-process bound C * eta(m, n) with its simplified super- and
subcritical majorants, the survival-probability bound, the occupation-time
double-sum bound, and the elementary logarithmic inequality used to derive
the subcritical majorant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dist_core import MomentSummary

__all__ = [
    "NEAR_CRITICAL_EPS",
    "GWBoundInput",
    "BoundReport",
    "eta",
    "eta_critical_limit",
    "eta_upper_super",
    "eta_upper_sub",
    "c_const",
    "gw_wasserstein_bound",
    "survival_upper",
    "dw_bound_from_gap",
    "dk_bound_from_tail",
    "dk_bound_from_gap",
    "occupation_bound",
    "log_sum_inequality_margin",
]

# offspring means closer to 1 than this are routed to the critical limit
NEAR_CRITICAL_EPS = 1e-9


@dataclass(frozen=True)
class GWBoundInput:
    """Moment bundle of the offspring law plus the generation of interest."""

    moments: MomentSummary
    n: int


@dataclass(frozen=True)
class BoundReport:
    """Analytic bound values for one (law, generation) pair.

    ``eta_upper`` is present only on the domains of the simplified majorants
    (super: m > 1, n >= 1; sub: 1/2 <= m < 1, n >= 2); ``survival_upper``
    is absent at the critical mean where the formula is singular.
    """

    eta: float
    c_const: float
    dw_bound: float
    eta_upper: float | None
    survival_upper: float | None


def eta(m: float, n: int) -> float:
    """Rate factor (1-m)/(2(1-m^n)) + (1-m)^2/(m(1-m^n)) * sum_j m^2j/(1-m^j).

    The sum runs over j = 1..n.  Super- and subcritical means are evaluated
    through rearrangements that avoid overflow and cancellation; within
    NEAR_CRITICAL_EPS of the critical mean the 0/0 form is replaced by its
    analytic limit 1/(2n) + H_n/n.
    """
    if m <= 0.0:
        raise ValueError("mean must be positive")
    if n <= 0:
        raise ValueError("generation must be positive")
    if abs(m - 1.0) < NEAR_CRITICAL_EPS:
        return eta_critical_limit(n)
    lg = math.log1p(m - 1.0)
    j = np.arange(1, n + 1, dtype=np.float64)
    if m < 1.0:
        one_minus_mn = -math.expm1(n * lg)
        first = (1.0 - m) / (2.0 * one_minus_mn)
        terms = np.exp(2.0 * j * lg) / (-np.expm1(j * lg))
        second = (1.0 - m) ** 2 / (m * one_minus_mn) * float(np.sum(terms))
    else:
        # divide numerator and denominator by m^n to keep everything <= 1
        one_minus_mn_inv = -math.expm1(-n * lg)
        first = (m - 1.0) * math.exp(-n * lg) / (2.0 * one_minus_mn_inv)
        terms = np.exp((j - n) * lg) / (-np.expm1(-j * lg))
        second = (m - 1.0) ** 2 / (m * one_minus_mn_inv) * float(np.sum(terms))
    return first + second


def eta_critical_limit(n: int) -> float:
    """Limit of eta(m, n) as the mean tends to 1: 1/(2n) + H_n/n."""
    if n <= 0:
        raise ValueError("generation must be positive")
    harmonic = float(np.sum(1.0 / np.arange(1, n + 1, dtype=np.float64)))
    return 0.5 / n + harmonic / n


def eta_upper_super(m: float, n: int) -> float:
    """Supercritical majorant 6(m-1) + (6.5 + log n)/n, valid for m > 1."""
    if m <= 1.0:
        raise ValueError("supercritical majorant requires mean > 1")
    if n < 1:
        raise ValueError("generation must be >= 1")
    return 6.0 * (m - 1.0) + (6.5 + math.log(n)) / n


def eta_upper_sub(m: float, n: int) -> float:
    """Subcritical majorant (4.5 - log(1-m))(1-m) + (4.5 + log n)/n.

    Valid for 1/2 <= m < 1 and n >= 2.
    """
    if not 0.5 <= m < 1.0:
        raise ValueError("subcritical majorant requires mean in [1/2, 1)")
    if n < 2:
        raise ValueError("generation must be >= 2")
    return (4.5 - math.log(1.0 - m)) * (1.0 - m) + (4.5 + math.log(n)) / n


def c_const(moments: MomentSummary) -> float:
    """Offspring constant (2 + alpha)(2 + alpha + variance + third moment)."""
    a = moments.alpha
    return (2.0 + a) * (2.0 + a + moments.var_sigma2 + moments.third_gamma)


def survival_upper(moments: MomentSummary, n: int) -> float:
    """Upper bound (2 + alpha) m^n (1-m)/(1-m^n) on the survival probability."""
    m = moments.mean_m
    if n <= 0:
        raise ValueError("generation must be positive")
    if abs(m - 1.0) < NEAR_CRITICAL_EPS:
        raise ValueError("survival bound is singular at the critical mean")
    lg = math.log1p(m - 1.0)
    if m < 1.0:
        ratio = math.exp(n * lg) * (1.0 - m) / (-math.expm1(n * lg))
    else:
        ratio = (m - 1.0) / (-math.expm1(-n * lg))
    return (2.0 + moments.alpha) * ratio


def gw_wasserstein_bound(inp: GWBoundInput) -> BoundReport:
    """Assemble C, eta, the product bound and the applicable majorants."""
    m = inp.moments.mean_m
    n = inp.n
    e = eta(m, n)
    c = c_const(inp.moments)
    upper: float | None = None
    if m > 1.0 + NEAR_CRITICAL_EPS:
        upper = eta_upper_super(m, n)
    elif 0.5 <= m < 1.0 - NEAR_CRITICAL_EPS and n >= 2:
        upper = eta_upper_sub(m, n)
    surv: float | None = None
    if abs(m - 1.0) >= NEAR_CRITICAL_EPS:
        surv = survival_upper(inp.moments, n)
    return BoundReport(eta=e, c_const=c, dw_bound=c * e, eta_upper=upper, survival_upper=surv)


def dw_bound_from_gap(coupling_gap: float) -> float:
    """Wasserstein bound 2 E|W - W^e| from a mean equilibrium-coupling gap."""
    if coupling_gap < 0.0:
        raise ValueError("coupling gap must be nonnegative")
    return 2.0 * coupling_gap


def dk_bound_from_tail(beta: float, tail_prob: float) -> float:
    """Kolmogorov bound 12 beta + 2 P[|W^e - W| > beta]."""
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    if not 0.0 <= tail_prob <= 1.0:
        raise ValueError("tail probability must lie in [0, 1]")
    return 12.0 * beta + 2.0 * tail_prob


def dk_bound_from_gap(coupling_gap: float) -> float:
    """Kolmogorov bound 2.46 sqrt(E|W - W^e|) from a mean coupling gap."""
    if coupling_gap < 0.0:
        raise ValueError("coupling gap must be nonnegative")
    return 2.46 * math.sqrt(coupling_gap)


def occupation_bound(means: np.ndarray) -> float:
    """Occupation-time bound 2 lambda + 2 lambda^2 sum_i EX_i * (suffix sum).

    The inner sum pairs EX_i with EX_j over j = n-i+1..n; suffix sums make the
    double sum O(n).
    """
    means = np.asarray(means, dtype=np.float64)
    if means.ndim != 1 or means.size == 0:
        raise ValueError("need a nonempty vector of means")
    if np.any(means < 0.0):
        raise ValueError("means must be nonnegative")
    total = math.fsum(means.tolist())
    if total <= 0.0:
        raise ValueError("all occupation means are zero")
    lam = 1.0 / total
    suffix = np.cumsum(means[::-1])[::-1]
    double_sum = math.fsum((means * suffix[::-1]).tolist())
    return 2.0 * lam + 2.0 * lam * lam * double_sum


def log_sum_inequality_margin(a: float, b: float, c: float) -> float:
    """Margin of log(a)/a <= (1+log(b))/b + (1+log(c))/c, nonnegative on its domain.

    Requires a, b, c > 1 with 1/a <= 1/b + 1/c <= 1.
    """
    if min(a, b, c) <= 1.0:
        raise ValueError("arguments must exceed 1")
    s = 1.0 / b + 1.0 / c
    if not 1.0 / a <= s <= 1.0:
        raise ValueError("hypothesis 1/a <= 1/b + 1/c <= 1 fails")
    lhs = math.log(a) / a
    rhs = (1.0 + math.log(b)) / b + (1.0 + math.log(c)) / c
    return rhs - lhs
