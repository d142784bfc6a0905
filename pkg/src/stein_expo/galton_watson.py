"""Galton-Watson simulation, exact pgf iteration, and the spine-tree coupling.

The spine construction follows the size-biased branching tree: a distinguished
lineage receives size-biased offspring counts, the spine child is uniform
among them, and every sibling roots an ordinary branching process.  Only
per-sibling-group descendant counts are tracked (populations, not trees), so
large replicate counts stay cheap.  The coupling pairs the conditioned
generation-n population with its equilibrium transform on one probability
space, using per-level conditional redraws obtained by rejection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dist_core import DiscretePMF, sample_many, size_bias
from .metrics import EmpiricalSample

__all__ = [
    "POPULATION_CAP",
    "REJECTION_BUDGET",
    "SpineDraw",
    "CouplingDraw",
    "CouplingBatch",
    "GapEstimate",
    "simulate_generations",
    "survival_probability",
    "generation_pmf",
    "yaglom_lambda",
    "spine_sample",
    "spine_sample_batch",
    "rstar_sample",
    "rstar_sample_batch",
    "coupling_gap_estimate",
    "conditional_zn_sample",
]

POPULATION_CAP = 10**9
REJECTION_BUDGET = 10**6
_DRAW_SLICE = 1 << 24  # max offspring draws materialized at once


@dataclass(frozen=True, eq=False)
class SpineDraw:
    """One realization of the size-biased spine tree, counts only.

    Per-level arrays are indexed by spine level j = 1..n (position j-1):
    ``sibling_counts`` is the number of siblings of the level-j spine
    particle, split into ``left_siblings``/``right_siblings``;
    ``left_descendants``/``right_descendants`` are their generation-n
    progeny totals.
    """

    n: int
    sibling_counts: np.ndarray
    left_siblings: np.ndarray
    right_siblings: np.ndarray
    left_descendants: np.ndarray
    right_descendants: np.ndarray

    @property
    def r_n(self) -> int:
        """Particles weakly to the right of the spine particle, itself included."""
        return 1 + int(self.right_descendants.sum())

    @property
    def l_n(self) -> int:
        return int(self.left_descendants.sum())

    @property
    def s_n(self) -> int:
        return self.l_n + self.r_n

    @property
    def no_left_descendants(self) -> np.ndarray:
        """Level indicators of the event 'no generation-n progeny to the left'."""
        return self.left_descendants == 0


@dataclass(frozen=True)
class CouplingDraw:
    """One joint draw (W, W^e) plus the integer counts behind both values."""

    w: float
    w_e: float
    gap: float
    r_n: int
    r_n_star: int


@dataclass(frozen=True, eq=False)
class CouplingBatch:
    w: np.ndarray
    w_e: np.ndarray
    r_n: np.ndarray
    r_n_star: np.ndarray
    s_n: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return np.abs(self.w - self.w_e)


@dataclass(frozen=True, eq=False)
class GapEstimate:
    mean: float
    se: float
    betas: np.ndarray
    tail_probs: np.ndarray
    reps: int


def _offspring_totals(law: DiscretePMF, sizes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One branching step applied elementwise to a vector of population sizes."""
    out = np.zeros_like(sizes)
    alive = np.flatnonzero(sizes)
    if alive.size == 0:
        return out
    counts = sizes[alive]
    if int(counts.max()) > POPULATION_CAP:
        raise RuntimeError(f"subtree population exceeded guard of {POPULATION_CAP}")
    lo = 0
    while lo < alive.size:
        # keep the materialized draw buffer bounded
        cum = np.cumsum(counts[lo:])
        hi = lo + int(np.searchsorted(cum, _DRAW_SLICE, side="left")) + 1
        hi = min(hi, alive.size)
        block = counts[lo:hi]
        draws = sample_many(law, int(block.sum()), rng)
        starts = np.concatenate([[0], np.cumsum(block[:-1])])
        out[alive[lo:hi]] = np.add.reduceat(draws, starts)
        lo = hi
    return out


def simulate_generations(law: DiscretePMF, n: int, rng: np.random.Generator) -> np.ndarray:
    """Population sizes Z_0..Z_n starting from a single particle."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    out = np.zeros(n + 1, dtype=np.int64)
    z = 1
    out[0] = z
    for k in range(1, n + 1):
        if z > 0:
            if z > POPULATION_CAP:
                raise RuntimeError(f"population exceeded guard of {POPULATION_CAP}")
            z = int(sample_many(law, z, rng).sum())
        out[k] = z
    return out


def _dense_probs(law: DiscretePMF) -> np.ndarray:
    dense = np.zeros(law.max_support + 1)
    dense[law.support] = law.probs
    return dense


def survival_probability(law: DiscretePMF, n: int) -> float:
    """P[Z_n > 0] by iterating s -> 1 - f(1 - s) with the offspring pgf f."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    coeffs = _dense_probs(law)[::-1]
    surv = 1.0
    for _ in range(n):
        s = 1.0 - surv
        val = 0.0
        for c in coeffs:  # Horner
            val = val * s + c
        surv = 1.0 - val
    return surv


def generation_pmf(
    law: DiscretePMF, n: int, tail_tol: float = 1e-14, cap: int = 10**6
) -> DiscretePMF:
    """Exact (truncated) law of Z_n via repeated pgf self-composition.

    Composition is polynomial Horner evaluation at the offspring polynomial;
    after each generation the upper tail below ``tail_tol`` total mass is
    dropped, and the dense support may not exceed ``cap`` entries.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    law_dense = _dense_probs(law)
    cur = np.array([0.0, 1.0])
    for _ in range(n):
        res = np.array([cur[-1]])
        for coeff in cur[-2::-1]:
            res = np.convolve(res, law_dense)
            res[0] += coeff
            if res.size > cap:
                raise RuntimeError(f"generation pmf support exceeded cap of {cap}")
        tail_from = np.cumsum(res[::-1])[::-1]
        keep = int(np.argmax(tail_from < tail_tol)) if tail_from[-1] < tail_tol else res.size
        cur = res[: max(keep, 1)]
    probs = cur / math.fsum(cur.tolist())
    return DiscretePMF(np.arange(cur.size), probs)


def yaglom_lambda(law: DiscretePMF, n: int) -> float:
    """Normalizer P[Z_n > 0] / m^n, i.e. 1 / E(Z_n | Z_n > 0)."""
    surv = survival_probability(law, n)
    if surv <= 0.0:
        raise ValueError(f"process is extinct by generation {n}")
    return surv / law.mean() ** n


def _evolve_batch(
    law: DiscretePMF, sizes: np.ndarray, gens: int, rng: np.random.Generator
) -> np.ndarray:
    for _ in range(gens):
        sizes = _offspring_totals(law, sizes, rng)
    return sizes


def _evolve_scalar(law: DiscretePMF, size: int, gens: int, rng: np.random.Generator) -> int:
    z = size
    for _ in range(gens):
        if z == 0:
            break
        if z > POPULATION_CAP:
            raise RuntimeError(f"subtree population exceeded guard of {POPULATION_CAP}")
        z = int(sample_many(law, z, rng).sum())
    return z


def spine_sample(law: DiscretePMF, n: int, rng: np.random.Generator) -> SpineDraw:
    """Draw one spine tree: per-level sibling splits and their progeny counts."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sb = size_bias(law)
    siblings = np.zeros(n, dtype=np.int64)
    left0 = np.zeros(n, dtype=np.int64)
    right0 = np.zeros(n, dtype=np.int64)
    left_desc = np.zeros(n, dtype=np.int64)
    right_desc = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        total = int(sample_many(sb, 1, rng)[0])
        pos = int(rng.integers(1, total, endpoint=True))
        siblings[j - 1] = total - 1
        left0[j - 1] = pos - 1
        right0[j - 1] = total - pos
        left_desc[j - 1] = _evolve_scalar(law, pos - 1, n - j, rng)
        right_desc[j - 1] = _evolve_scalar(law, total - pos, n - j, rng)
    return SpineDraw(
        n=n,
        sibling_counts=siblings,
        left_siblings=left0,
        right_siblings=right0,
        left_descendants=left_desc,
        right_descendants=right_desc,
    )


def _spine_levels_batch(
    law: DiscretePMF,
    n: int,
    reps: int,
    rng: np.random.Generator,
    with_rstar: bool,
    rejection_budget: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shared engine: returns (s_n, r_n, r_n_star); r_n_star equals r_n when
    the conditional redraws are disabled."""
    sb = size_bias(law)
    r_n = np.ones(reps, dtype=np.int64)
    l_n = np.zeros(reps, dtype=np.int64)
    r_star = np.ones(reps, dtype=np.int64)
    for j in range(1, n + 1):
        gens = n - j
        total = sample_many(sb, reps, rng)
        pos = rng.integers(1, total, endpoint=True)
        groups = np.concatenate([pos - 1, total - pos]).astype(np.int64)
        groups = _evolve_batch(law, groups, gens, rng)
        left, right = groups[:reps], groups[reps:]
        r_n += right
        l_n += left
        if with_rstar:
            redraw = right.copy()
            pending = np.flatnonzero(left > 0)
            rounds = 0
            while pending.size:
                rounds += 1
                if rounds > rejection_budget:
                    raise RuntimeError(
                        f"conditional draw failed at level {j}: "
                        f"rejection budget of {rejection_budget} exceeded"
                    )
                k = pending.size
                total_p = sample_many(sb, k, rng)
                pos_p = rng.integers(1, total_p, endpoint=True)
                groups_p = np.concatenate([pos_p - 1, total_p - pos_p]).astype(np.int64)
                groups_p = _evolve_batch(law, groups_p, gens, rng)
                accepted = groups_p[:k] == 0
                redraw[pending[accepted]] = groups_p[k:][accepted]
                pending = pending[~accepted]
            r_star += redraw
    return l_n + r_n, r_n, r_star


def spine_sample_batch(
    law: DiscretePMF, n: int, reps: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """(S_n, R_n) over many spine draws; only the aggregates are kept."""
    if n < 1:
        raise ValueError("n must be >= 1")
    s_n, r_n, _ = _spine_levels_batch(law, n, reps, rng, False, REJECTION_BUDGET)
    return s_n, r_n


def rstar_sample_batch(
    law: DiscretePMF,
    n: int,
    reps: int,
    rng: np.random.Generator,
    rejection_budget: int = REJECTION_BUDGET,
) -> CouplingBatch:
    """Coupled draws of W = lambda R_n* and W^e = lambda (R_n - U).

    Both values come from the same spine realization; levels whose left
    sibling groups have surviving progeny get an independent conditional
    redraw (rejection against that event) before entering R_n*.  One shared
    uniform U per replicate turns R_n into the continuous W^e.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lam = yaglom_lambda(law, n)
    s_n, r_n, r_star = _spine_levels_batch(law, n, reps, rng, True, rejection_budget)
    u = rng.random(reps)
    w = lam * r_star
    w_e = lam * (r_n - u)
    return CouplingBatch(w=w, w_e=w_e, r_n=r_n, r_n_star=r_star, s_n=s_n)


def rstar_sample(law: DiscretePMF, n: int, rng: np.random.Generator) -> CouplingDraw:
    batch = rstar_sample_batch(law, n, 1, rng)
    w = float(batch.w[0])
    w_e = float(batch.w_e[0])
    return CouplingDraw(
        w=w, w_e=w_e, gap=abs(w - w_e), r_n=int(batch.r_n[0]), r_n_star=int(batch.r_n_star[0])
    )


def coupling_gap_estimate(
    law: DiscretePMF,
    n: int,
    reps: int,
    rng: np.random.Generator,
    beta_grid: np.ndarray | None = None,
) -> GapEstimate:
    """Mean and standard error of |W - W^e|, plus the tail curve P[gap > beta]."""
    if reps < 2:
        raise ValueError("need at least 2 replicates")
    batch = rstar_sample_batch(law, n, reps, rng)
    gaps = np.sort(batch.gap)
    mean = float(gaps.mean())
    se = float(gaps.std(ddof=1) / math.sqrt(reps))
    betas = np.linspace(0.0, 2.0, 201)[1:] if beta_grid is None else np.asarray(beta_grid)
    tail = 1.0 - np.searchsorted(gaps, betas, side="right") / reps
    return GapEstimate(mean=mean, se=se, betas=betas, tail_probs=tail, reps=reps)


def conditional_zn_sample(
    law: DiscretePMF,
    n: int,
    reps: int,
    rng: np.random.Generator,
    survival_floor: float = 1e-4,
    max_batch: int = 1 << 20,
) -> EmpiricalSample:
    """Sample lambda * Z_n given Z_n > 0 by rejection on extinct runs.

    Refuses to run below ``survival_floor`` (the expected rejection cost
    explodes); the spine-based ``rstar_sample`` draws the same conditioned
    law directly and is the sampler to use in that regime.
    """
    surv = survival_probability(law, n)
    if surv < survival_floor:
        raise RuntimeError(
            f"survival probability {surv:.3g} below floor {survival_floor:g}; "
            "use the spine-based conditioned sampler (rstar_sample) instead"
        )
    lam = yaglom_lambda(law, n)
    collected: list[np.ndarray] = []
    remaining = reps
    while remaining > 0:
        batch = min(max_batch, int(remaining / surv * 1.2) + 256)
        z = np.ones(batch, dtype=np.int64)
        for _ in range(n):
            z = _offspring_totals(law, z, rng)
            z = z[z > 0]
            if z.size == 0:
                break
        take = z[: min(z.size, remaining)]
        if take.size:
            collected.append(take)
            remaining -= take.size
    values = lam * np.concatenate(collected)
    return EmpiricalSample.from_values(values)
