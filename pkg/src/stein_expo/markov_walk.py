"""Dependent-sum equilibrium couplings, Markov occupation times, and 2D walks.

The general dependent-sum equilibrium construction is evaluated exactly by
enumerating a finite joint law; the Markov specialization scales through the
strong Markov property (the conditional remainder of an indicator sum is a
fresh path), and the lattice-walk experiment measures the exponential
approximation of the normalized number of returns to the origin.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dist_core import PiecewiseLinear
from .galton_watson import CouplingDraw
from .metrics import EmpiricalSample, bootstrap_distance_se, dk_vs_exp, dw_vs_exp

__all__ = [
    "ChainSpec",
    "JointLaw",
    "UniformMixture",
    "Walk2DSpec",
    "dependent_sum_equilibrium_exact",
    "dependent_sum_identity_residual",
    "expected_occupations",
    "occupation_couple",
    "occupation_sample_batch",
    "simple_walk",
    "lazy_walk",
    "parse_walk",
    "walk2d_returns",
    "returns_batch",
    "return_prob_curve",
    "erdos_taylor_experiment",
    "exact_return_probs",
    "expected_returns_exact",
]

ENUMERATION_CAP = 10**6
_ROW_SUM_TOL = 1e-12
_MEAN_ZERO_TOL = 1e-12
_WALK_ELEMENT_BUDGET = 1 << 22  # uniforms materialized per simulation chunk


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """Finite Markov chain with a designated start state (the revisited state)."""

    states: tuple[str, ...]
    transition: np.ndarray
    start: int = 0

    def __post_init__(self) -> None:
        t = np.asarray(self.transition, dtype=np.float64)
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        k = len(self.states)
        if t.shape != (k, k):
            raise ValueError(f"transition matrix must be {k}x{k}")
        if np.any(t < 0.0):
            raise ValueError("transition probabilities must be nonnegative")
        rows = t.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > _ROW_SUM_TOL):
            raise ValueError("transition rows must sum to 1")
        if not 0 <= self.start < k:
            raise ValueError("start state out of range")
        cum = np.cumsum(t, axis=1)
        cum[:, -1] = 1.0
        object.__setattr__(self, "_cum_rows", cum)


@dataclass(frozen=True, eq=False)
class JointLaw:
    """Finite joint law of n nonnegative coordinates: rows of xs with probs."""

    xs: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        xs = np.atleast_2d(np.asarray(self.xs, dtype=np.float64))
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "probs", probs)
        if xs.shape[0] != probs.size:
            raise ValueError("one probability per outcome row required")
        if np.any(xs < 0.0):
            raise ValueError("coordinates must be nonnegative")
        if np.any(probs < 0.0):
            raise ValueError("probabilities must be nonnegative")
        if abs(math.fsum(probs.tolist()) - 1.0) > _ROW_SUM_TOL:
            raise ValueError("probabilities must sum to 1")
        if float(probs @ xs.sum(axis=1)) <= 0.0:
            raise ValueError("total mean must be positive")

    @property
    def n(self) -> int:
        return int(self.xs.shape[1])


@dataclass(frozen=True, eq=False)
class UniformMixture:
    """Mixture of uniform segments offset + span * U; spans are positive."""

    weights: np.ndarray
    offsets: np.ndarray
    spans: np.ndarray

    def cdf(self, x: float | np.ndarray) -> float | np.ndarray:
        xa = np.asarray(x, dtype=np.float64)
        frac = (xa[..., None] - self.offsets) / self.spans
        out = np.clip(frac, 0.0, 1.0) @ self.weights
        return float(out) if np.isscalar(x) else out

    def mean(self) -> float:
        return float(self.weights @ (self.offsets + 0.5 * self.spans))

    def expected_fprime(self, f: PiecewiseLinear) -> float:
        """E f'(value) with the segment averages (f(b) - f(a)) / (b - a), exact."""
        hi = f(self.offsets + self.spans)
        lo = f(self.offsets)
        return math.fsum((self.weights * (hi - lo) / self.spans).tolist())


def dependent_sum_equilibrium_exact(
    joint: JointLaw, direction: str = "backward", cap: int = ENUMERATION_CAP
) -> UniformMixture:
    """Exact equilibrium law of W = lambda sum X_i for a finite joint law.

    The construction picks an index I with P[I=i] proportional to EX_i, a
    size-biased value of X_I, an independent copy of the scaled partial sum
    conditioned on that value, and adds an independent uniform slice of the
    size-biased coordinate.  Enumerating (outcome, index) pairs collapses the
    whole mixture to weight lambda * x_i * P[outcome] with offset the scaled
    partial sum before (direction "backward") or after (direction "forward")
    position i.
    """
    if direction not in ("backward", "forward"):
        raise ValueError("direction must be 'backward' or 'forward'")
    n_pairs = joint.xs.size
    if n_pairs > cap:
        raise RuntimeError(f"enumeration cap of {cap} outcome*index pairs exceeded")
    lam = 1.0 / float(joint.probs @ joint.xs.sum(axis=1))
    if direction == "backward":
        partial = np.cumsum(joint.xs, axis=1) - joint.xs
    else:
        partial = joint.xs[:, ::-1].cumsum(axis=1)[:, ::-1] - joint.xs
    mask = joint.xs > 0.0
    weights = (lam * joint.xs * joint.probs[:, None])[mask]
    offsets = (lam * partial)[mask]
    spans = (lam * joint.xs)[mask]
    return UniformMixture(weights=weights, offsets=offsets, spans=spans)


def dependent_sum_identity_residual(
    joint: JointLaw, f: PiecewiseLinear, direction: str = "backward"
) -> float:
    """Residual |E f(W) - f(0) - E W * E f'(W^e)| with both sides exact."""
    lam = 1.0 / float(joint.probs @ joint.xs.sum(axis=1))
    w_values = lam * joint.xs.sum(axis=1)
    lhs = math.fsum((joint.probs * f(w_values)).tolist()) - f.value_at_zero
    mixture = dependent_sum_equilibrium_exact(joint, direction=direction)
    e_w = math.fsum((joint.probs * w_values).tolist())
    rhs = e_w * mixture.expected_fprime(f)
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# Markov occupation times

def expected_occupations(chain: ChainSpec, n: int) -> np.ndarray:
    """E X_i = P[chain revisits the start state at time i], i = 1..n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = np.empty(n)
    v = np.zeros(len(chain.states))
    v[chain.start] = 1.0
    for i in range(n):
        v = v @ chain.transition
        out[i] = v[chain.start]
    return out


def _chain_steps(
    chain: ChainSpec, states: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    u = rng.random(states.size)
    return (u[:, None] > chain._cum_rows[states]).sum(axis=1)


def _visit_counts_batch(
    chain: ChainSpec, n: int, reps: int, rng: np.random.Generator, cumulative: bool
) -> np.ndarray:
    """Visit counts to the start state over times 1..n; optionally the whole
    running-count path (reps, n+1)."""
    states = np.full(reps, chain.start, dtype=np.int64)
    counts = np.zeros(reps, dtype=np.int64)
    path = np.zeros((reps, n + 1), dtype=np.int64) if cumulative else None
    for t in range(1, n + 1):
        states = _chain_steps(chain, states, rng)
        counts += states == chain.start
        if cumulative:
            path[:, t] = counts
    return path if cumulative else counts


def occupation_sample_batch(
    chain: ChainSpec, n: int, reps: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Coupled draws (W, W^e) for the normalized occupation time.

    W comes from one path; W^e picks an index I with P[I=i] proportional to
    E X_i, runs an independent path for n - I steps (the strong Markov
    reduction of the conditional remainder sum) and adds a uniform slice.
    """
    means = expected_occupations(chain, n)
    total = math.fsum(means.tolist())
    if total <= 0.0:
        raise ValueError("start state is never revisited in expectation")
    lam = 1.0 / total
    w = lam * _visit_counts_batch(chain, n, reps, rng, cumulative=False)
    cum_i = np.cumsum(lam * means)
    cum_i[-1] = 1.0
    index = 1 + np.searchsorted(cum_i, rng.random(reps), side="right")
    path2 = _visit_counts_batch(chain, n, reps, rng, cumulative=True)
    counts2 = path2[np.arange(reps), n - index]
    w_e = lam * (counts2 + rng.random(reps))
    return w, w_e


def occupation_couple(chain: ChainSpec, n: int, rng: np.random.Generator) -> CouplingDraw:
    """One coupled draw; the integer fields carry the two visit counts."""
    means = expected_occupations(chain, n)
    total = math.fsum(means.tolist())
    if total <= 0.0:
        raise ValueError("start state is never revisited in expectation")
    lam = 1.0 / total
    w, w_e = occupation_sample_batch(chain, n, 1, rng)
    w, w_e = float(w[0]), float(w_e[0])
    return CouplingDraw(
        w=w,
        w_e=w_e,
        gap=abs(w - w_e),
        r_n=int(w_e * total),  # visits behind W^e (uniform slice floors away)
        r_n_star=int(round(w * total)),
    )


# ---------------------------------------------------------------------------
# Two-dimensional lattice walks

@dataclass(frozen=True, eq=False)
class Walk2DSpec:
    """Finite step law on Z^2; the mean-zero requirement is recomputed, the
    irreducibility/aperiodicity flags are caller assertions."""

    steps: np.ndarray
    probs: np.ndarray
    irreducible: bool = True
    aperiodic: bool = False

    def __post_init__(self) -> None:
        steps = np.asarray(self.steps, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "probs", probs)
        if steps.ndim != 2 or steps.shape[1] != 2 or steps.shape[0] != probs.size:
            raise ValueError("steps must be (k, 2) with one probability per step")
        if np.any(probs < 0.0) or abs(math.fsum(probs.tolist()) - 1.0) > _ROW_SUM_TOL:
            raise ValueError("step probabilities must be nonnegative and sum to 1")
        if len({(int(a), int(b)) for a, b in steps}) != steps.shape[0]:
            raise ValueError("duplicate step vectors")
        drift = probs @ steps.astype(np.float64)
        if np.any(np.abs(drift) > _MEAN_ZERO_TOL):
            raise ValueError(f"step law must have mean zero, got drift {drift.tolist()}")
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", cum)


def simple_walk() -> Walk2DSpec:
    """Nearest-neighbor walk, each unit step with probability 1/4 (period 2)."""
    steps = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
    return Walk2DSpec(steps=steps, probs=np.full(4, 0.25), irreducible=True, aperiodic=False)


def lazy_walk(stay_prob: float) -> Walk2DSpec:
    """Simple walk with a holding probability; aperiodic for stay_prob > 0."""
    if not 0.0 <= stay_prob <= 1.0:
        raise ValueError("stay probability must lie in [0, 1]")
    steps = np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]])
    move = (1.0 - stay_prob) / 4.0
    probs = np.array([stay_prob, move, move, move, move])
    return Walk2DSpec(
        steps=steps, probs=probs, irreducible=stay_prob < 1.0, aperiodic=stay_prob > 0.0
    )


_LAZY_RE = re.compile(r"^\s*lazy\s*\(\s*([0-9.eE+-]+)\s*\)\s*$")


def parse_walk(spec: str | dict) -> Walk2DSpec:
    """Parse a CLI walk spec: "simple", "lazy(p)", or an explicit dict with
    steps [{"dx": .., "dy": .., "p": ..}, ...] plus optional flags."""
    if isinstance(spec, str):
        if spec.strip() == "simple":
            return simple_walk()
        m = _LAZY_RE.match(spec)
        if m:
            return lazy_walk(float(m.group(1)))
        raise ValueError(f"cannot parse walk {spec!r}")
    steps = np.array([[int(s["dx"]), int(s["dy"])] for s in spec["steps"]])
    probs = np.array([float(s["p"]) for s in spec["steps"]])
    return Walk2DSpec(
        steps=steps,
        probs=probs,
        irreducible=bool(spec.get("irreducible", True)),
        aperiodic=bool(spec.get("aperiodic", False)),
    )


def _walk_scan(
    spec: Walk2DSpec,
    n: int,
    reps: int,
    rng: np.random.Generator,
    record_times: Sequence[int] | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Counts of origin visits over times 1..n and, optionally, the visit
    indicator at each requested time."""
    dx = spec.steps[:, 0]
    dy = spec.steps[:, 1]
    times = np.asarray(sorted(record_times), dtype=np.int64) if record_times else None
    flags = np.zeros((reps, times.size), dtype=bool) if times is not None else None
    posx = np.zeros(reps, dtype=np.int64)
    posy = np.zeros(reps, dtype=np.int64)
    counts = np.zeros(reps, dtype=np.int64)
    step_chunk = max(1, _WALK_ELEMENT_BUDGET // max(reps, 1))
    t = 0
    while t < n:
        c = min(step_chunk, n - t)
        idx = np.searchsorted(spec._cum, rng.random((reps, c)), side="right")
        cx = np.cumsum(dx[idx], axis=1) + posx[:, None]
        cy = np.cumsum(dy[idx], axis=1) + posy[:, None]
        at_origin = (cx == 0) & (cy == 0)
        counts += at_origin.sum(axis=1)
        if times is not None:
            inside = (times > t) & (times <= t + c)
            for k in np.flatnonzero(inside):
                flags[:, k] = at_origin[:, times[k] - t - 1]
        posx = cx[:, -1].copy()
        posy = cy[:, -1].copy()
        t += c
    return counts, flags


def walk2d_returns(spec: Walk2DSpec, n: int, rng: np.random.Generator) -> int:
    """Number of visits to the origin at times 1..n along one path."""
    if n < 1:
        raise ValueError("n must be >= 1")
    counts, _ = _walk_scan(spec, n, 1, rng)
    return int(counts[0])


def returns_batch(spec: Walk2DSpec, n: int, reps: int, rng: np.random.Generator) -> np.ndarray:
    counts, _ = _walk_scan(spec, n, reps, rng)
    return counts


def return_prob_curve(
    spec: Walk2DSpec, n_grid: Iterable[int], reps: int, rng: np.random.Generator
) -> list[dict]:
    """Monte Carlo P[position(n) = origin] on a grid, with the n * P column.

    The 1/n decay band only holds for aperiodic walks, so the flag gates the
    estimate.
    """
    if not spec.aperiodic:
        raise ValueError("return-probability decay requires an aperiodic walk")
    grid = sorted(int(n) for n in n_grid)
    if not grid or grid[0] < 1:
        raise ValueError("n grid must contain positive integers")
    _, flags = _walk_scan(spec, grid[-1], reps, rng, record_times=grid)
    rows = []
    for k, n in enumerate(grid):
        p_hat = float(flags[:, k].mean())
        se = math.sqrt(p_hat * (1.0 - p_hat) / reps)
        rows.append({"n": n, "p_hat": p_hat, "se": se, "n_p_hat": n * p_hat})
    return rows


def erdos_taylor_experiment(
    spec: Walk2DSpec,
    n_grid: Iterable[int],
    reps: int,
    rng: np.random.Generator,
    n_boot: int = 64,
) -> list[dict]:
    """Normalized return counts against Exp(1) along a horizon grid.

    W = R / (mean R) uses the plug-in normalizer, so the reported standard
    errors (bootstrap) include the normalizer's own uncertainty.
    """
    if reps < 1000:
        raise ValueError("need at least 1000 paths per grid point")
    rows = []
    for n in sorted(int(v) for v in n_grid):
        counts = returns_batch(spec, n, reps, rng)
        er_hat = float(counts.mean())
        if er_hat <= 0.0:
            raise RuntimeError(f"no returns observed by time {n}")
        sample = EmpiricalSample.from_values(counts / er_hat)
        dk_se, dw_se = bootstrap_distance_se(sample, rng, n_boot=n_boot)
        rows.append(
            {
                "n": n,
                "er_hat": er_hat,
                "lambda_hat": 1.0 / er_hat,
                "dk_hat": dk_vs_exp(sample),
                "dk_se": dk_se,
                "dw_hat": dw_vs_exp(sample),
                "dw_se": dw_se,
                "inv_log_n": 1.0 / math.log(n),
            }
        )
    return rows


def exact_return_probs(spec: Walk2DSpec, n_max: int) -> np.ndarray:
    """P[position(i) = origin] for i = 0..n_max by dense convolution."""
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    reach = int(np.abs(spec.steps).max()) * n_max
    size = 2 * reach + 1
    grid = np.zeros((size, size))
    grid[reach, reach] = 1.0
    out = np.empty(n_max + 1)
    out[0] = 1.0
    for i in range(1, n_max + 1):
        nxt = np.zeros_like(grid)
        for (sx, sy), p in zip(spec.steps, spec.probs):
            src_x = slice(max(0, -sx), size - max(0, sx))
            dst_x = slice(max(0, sx), size - max(0, -sx))
            src_y = slice(max(0, -sy), size - max(0, sy))
            dst_y = slice(max(0, sy), size - max(0, -sy))
            nxt[dst_x, dst_y] += p * grid[src_x, src_y]
        grid = nxt
        out[i] = grid[reach, reach]
    return out


def expected_returns_exact(spec: Walk2DSpec, n: int) -> float:
    """E R = sum of the exact return probabilities over times 1..n."""
    return math.fsum(exact_return_probs(spec, n)[1:].tolist())
