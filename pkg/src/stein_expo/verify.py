"""Executable property battery: every module invariant at desk scale.

Each check returns one row (module, invariant, status, detail); the CLI
``verify`` subcommand exits nonzero if any row fails, naming the invariant.
Randomized checks draw from substreams spawned off the given seed, so the
battery is reproducible.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats as sps

from . import bounds as bnd
from .dist_core import (
    DiscretePMF,
    PiecewiseLinear,
    check_equilibrium_identity,
    equilibrium_rep,
    geometric_pmf,
    moments,
    pmf_from_mapping,
    poisson_pmf,
    sample_equilibrium_many,
    sample_many,
    size_bias,
)
from .galton_watson import (
    generation_pmf,
    rstar_sample_batch,
    spine_sample_batch,
)
from .markov_walk import (
    ChainSpec,
    JointLaw,
    Walk2DSpec,
    dependent_sum_identity_residual,
    exact_return_probs,
    expected_occupations,
    lazy_walk,
    occupation_sample_batch,
    returns_batch,
)
from .metrics import EmpiricalSample, bootstrap_distance_se, dk_vs_exp, dw_vs_exp

__all__ = [
    "verify_suite",
    "random_pmf",
    "random_piecewise_linear",
    "random_chain",
    "random_joint_law",
    "tv_distance",
    "dk_against_cdf",
    "dw_riemann_oracle",
]


# ---------------------------------------------------------------------------
# random generators shared with the test suite

def random_pmf(rng: np.random.Generator, max_support: int = 10) -> DiscretePMF:
    """Random finite law with positive mean (some mass above zero)."""
    size = int(rng.integers(2, max_support + 1))
    support = np.sort(rng.choice(np.arange(0, 3 * max_support), size=size, replace=False))
    if support.max() == 0:
        support[-1] = 1
    probs = rng.dirichlet(np.ones(size))
    probs = probs / math.fsum(probs.tolist())
    return DiscretePMF(support, probs)


def random_piecewise_linear(
    rng: np.random.Generator, max_breaks: int = 6, span: float = 30.0
) -> PiecewiseLinear:
    k = int(rng.integers(1, max_breaks + 1))
    breaks = np.concatenate([[0.0], np.sort(rng.random(k - 1)) * span]) if k > 1 else np.array([0.0])
    slopes = rng.normal(0.0, 2.0, size=k)
    return PiecewiseLinear(breaks=breaks, slopes=slopes, value_at_zero=float(rng.normal()))


def random_chain(k: int, rng: np.random.Generator) -> ChainSpec:
    matrix = rng.dirichlet(np.ones(k), size=k)
    matrix = matrix / matrix.sum(axis=1, keepdims=True)
    return ChainSpec(states=tuple(str(i) for i in range(k)), transition=matrix, start=0)


def random_joint_law(rng: np.random.Generator, max_n: int = 4, max_outcomes: int = 20) -> JointLaw:
    n = int(rng.integers(1, max_n + 1))
    n_out = int(rng.integers(2, max_outcomes + 1))
    xs = np.round(rng.gamma(1.0, 1.0, size=(n_out, n)) * (rng.random((n_out, n)) < 0.7), 3)
    if xs.sum() == 0.0:
        xs[0, 0] = 1.0
    probs = rng.dirichlet(np.ones(n_out))
    probs = probs / math.fsum(probs.tolist())
    return JointLaw(xs=xs, probs=probs)


def tv_distance(counts: np.ndarray, pmf: DiscretePMF) -> float:
    """Total variation between an empirical integer sample and an exact law."""
    values, freq = np.unique(counts, return_counts=True)
    emp = dict(zip(values.tolist(), (freq / counts.size).tolist()))
    keys = set(emp) | set(int(k) for k in pmf.support)
    return 0.5 * math.fsum(abs(emp.get(k, 0.0) - pmf.prob_at(k)) for k in keys)


def dk_against_cdf(values: np.ndarray, cdf, extra_points: np.ndarray) -> float:
    """sup |F_n - F| for a continuous piecewise-linear reference CDF."""
    x = np.sort(values)
    n = x.size
    f = cdf(x)
    d = max(np.abs(np.arange(1, n + 1) / n - f).max(), np.abs(np.arange(0, n) / n - f).max())
    fe = cdf(extra_points)
    emp = np.searchsorted(x, extra_points, side="right") / n
    return float(max(d, np.abs(emp - fe).max()))


def dw_riemann_oracle(sample: EmpiricalSample, points_per_unit: int = 20_000) -> float:
    """Brute-force Wasserstein distance to Exp(1) by midpoint Riemann sums.

    Pieces are cut at the order statistics and at the sign crossings of
    F_n - G so the integrand is smooth inside each piece; the tail is summed
    out to x_max + 60.  Independent of the closed-form antiderivative path.
    """
    x = sample.values
    n = x.size
    cuts = [0.0]
    for i, b in enumerate(x):
        c = i / n
        cross = -math.log1p(-c)
        if cuts[-1] < cross < b:
            cuts.append(cross)
        if b > cuts[-1]:
            cuts.append(float(b))
    cuts.append(float(x[-1]) + 60.0)
    total = 0.0
    for a, b in zip(cuts, cuts[1:]):
        k = max(64, int((b - a) * points_per_unit))
        h = (b - a) / k
        mids = a + h * (np.arange(k) + 0.5)
        emp = np.searchsorted(x, mids, side="right") / n
        total += float(np.abs(emp + np.expm1(-mids)).sum() * h)
    return total


# ---------------------------------------------------------------------------
# checks

def _row(module: str, invariant: str, passed: bool, detail: str) -> dict:
    return {"module": module, "invariant": invariant,
            "status": "pass" if passed else "fail", "detail": detail}


def _check_size_bias_identity(rng) -> dict:
    # E[X f(X)] = EX E[f(X^s)] for indicator test functions, exact sums
    worst = 0.0
    for _ in range(50):
        pmf = random_pmf(rng)
        sb = size_bias(pmf)
        m = pmf.mean()
        for k in pmf.support:
            lhs = float(k) * pmf.prob_at(int(k))
            rhs = m * sb.prob_at(int(k))
            worst = max(worst, abs(lhs - rhs))
    return _row("dist_core", "size_bias_indicator_identity", worst < 1e-12, f"max residual {worst:.3g}")


def _check_equilibrium_cdf_shape(rng) -> dict:
    ok = True
    detail = ""
    for _ in range(30):
        pmf = random_pmf(rng)
        rep = equilibrium_rep(pmf)
        xs = np.linspace(-0.5, pmf.max_support + 0.5, 257)
        vals = rep.cdf(xs)
        if np.any(np.diff(vals) < -1e-15) or abs(rep.cdf(-1e-9)) > 0 or abs(rep.cdf(pmf.max_support) - 1.0) > 1e-12:
            ok = False
            detail = "monotonicity or boundary failure"
            break
    return _row("dist_core", "equilibrium_cdf_shape", ok, detail or "monotone, 0 below, 1 at top")


def _check_equilibrium_identity(rng) -> dict:
    worst = 0.0
    for _ in range(100):
        pmf = random_pmf(rng)
        f = random_piecewise_linear(rng)
        worst = max(worst, check_equilibrium_identity(pmf, f))
    return _row("dist_core", "equilibrium_identity_residual", worst < 1e-10, f"max residual {worst:.3g}")


def _check_sampling_laws(rng) -> dict:
    n_draws = 10**6
    tol = 3.0 * math.sqrt(math.log(n_draws) / n_draws)
    pmf = poisson_pmf(1.0)
    draws = sample_many(pmf, n_draws, rng)
    dk_discrete = 0.0
    for k in pmf.support[pmf.cumprobs < 1.0 - 1e-12]:
        dk_discrete = max(dk_discrete, abs(float((draws <= k).mean()) - pmf.cdf(float(k))))
    eq_draws = sample_equilibrium_many(pmf, n_draws, rng)
    rep = equilibrium_rep(pmf)
    dk_eq = dk_against_cdf(eq_draws, rep.cdf, rep.knots)
    ok = dk_discrete < tol and dk_eq < tol
    return _row("dist_core", "sampling_matches_law", ok,
                f"dk_discrete {dk_discrete:.4g}, dk_equilibrium {dk_eq:.4g}, tol {tol:.4g}")


def _check_metric_relation(rng) -> dict:
    ok = True
    for _ in range(20):
        sample = EmpiricalSample.from_values(rng.exponential(1.0, size=int(rng.integers(1, 500))))
        if dk_vs_exp(sample) > 1.74 * math.sqrt(dw_vs_exp(sample)):
            ok = False
    point = EmpiricalSample.from_values([1.0])
    ok = ok and dk_vs_exp(point) <= 1.74 * math.sqrt(dw_vs_exp(point))
    return _row("metrics", "dk_le_1.74_sqrt_dw", ok, "relation holds on all samples")


def _check_dw_riemann(rng) -> dict:
    worst = 0.0
    for _ in range(10):
        sample = EmpiricalSample.from_values(rng.exponential(1.0, size=int(rng.integers(1, 30))))
        worst = max(worst, abs(dw_vs_exp(sample) - dw_riemann_oracle(sample)))
    return _row("metrics", "dw_riemann_oracle", worst < 1e-9, f"max |closed - riemann| {worst:.3g}")


def _check_metric_invariances(rng) -> dict:
    values = rng.exponential(1.0, size=200)
    s1 = EmpiricalSample.from_values(values)
    s2 = EmpiricalSample.from_values(values[::-1])
    s3 = EmpiricalSample.from_values(np.repeat(values, 3))
    ok = (
        dk_vs_exp(s1) == dk_vs_exp(s2)
        and dw_vs_exp(s1) == dw_vs_exp(s2)
        and abs(dk_vs_exp(s1) - dk_vs_exp(s3)) < 1e-12
        and abs(dw_vs_exp(s1) - dw_vs_exp(s3)) < 1e-12
    )
    return _row("metrics", "permutation_and_duplication_invariance", ok, "distances unchanged")


def _grid_ns(top: int) -> list[int]:
    ns = [1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 100, 160, 250, 400, 640, 1000,
          1600, 2500, 4000, 6300, 10000]
    return [n for n in ns if n <= top]


def _check_eta_upper_super() -> dict:
    worst = -math.inf
    for m in np.linspace(1.0, 2.0, 201)[1:]:
        for n in _grid_ns(10**4):
            worst = max(worst, bnd.eta(float(m), n) - bnd.eta_upper_super(float(m), n))
    return _row("bounds", "eta_le_supercritical_majorant", worst <= 1e-12, f"max eta - upper {worst:.3g}")


def _check_eta_upper_sub() -> dict:
    worst = -math.inf
    for m in np.linspace(0.5, 1.0, 201)[:-1]:
        for n in _grid_ns(10**4):
            if n >= 2:
                worst = max(worst, bnd.eta(float(m), n) - bnd.eta_upper_sub(float(m), n))
    return _row("bounds", "eta_le_subcritical_majorant", worst <= 1e-12, f"max eta - upper {worst:.3g}")


def _check_partial_sum_floor() -> dict:
    ok = True
    for m in np.linspace(1.0005, 2.0, 120):
        for n in _grid_ns(10**4):
            if n * math.log(m) > 700:
                continue  # m^n astronomically large, inequality trivial
            if (math.exp(n * math.log(m)) - 1.0) / (m - 1.0) < n * (1.0 - 1e-12):
                ok = False
    return _row("bounds", "geometric_partial_sum_floor", ok, "(m^n-1)/(m-1) >= n on grid")


def _check_tail_ratio_chain() -> dict:
    ok = True
    for m in np.linspace(0.01, 0.9995, 120):
        for n in _grid_ns(10**4):
            lhs = (1.0 - m) / (1.0 - m**n) if m**n < 1.0 else math.inf
            if lhs > 1.0 - m + 1.0 / n + 1e-12:
                ok = False
    return _row("bounds", "tail_ratio_chain", ok, "(1-m)/(1-m^n) <= 1-m+1/n on grid")


def _check_eta_continuity() -> dict:
    worst = 0.0
    for n in [1, 2, 5, 10, 50, 100, 500, 1000]:
        limit = bnd.eta_critical_limit(n)
        for m in (1.0 - 1e-6, 1.0 + 1e-6):
            worst = max(worst, abs(bnd.eta(m, n) - limit))
    return _row("bounds", "eta_continuous_at_critical", worst < 1e-4, f"max |eta - limit| {worst:.3g}")


def _check_log_sum_inequality(rng) -> dict:
    worst = math.inf
    for _ in range(10**4):
        b = 1.0 / rng.uniform(0.02, 0.5)
        c = 1.0 / rng.uniform(0.02, 0.5)
        floor = 1.0 / (1.0 / b + 1.0 / c)
        a = floor * (1.0 + rng.uniform(0.0, 9.0))
        worst = min(worst, bnd.log_sum_inequality_margin(a, b, c))
    return _row("bounds", "log_sum_inequality_nonnegative", worst >= 0.0, f"min margin {worst:.3g}")


def _spine_checks(rng) -> list[dict]:
    law = pmf_from_mapping({0: 0.5, 2: 0.5})
    n, reps = 5, 10**5
    batch = rstar_sample_batch(law, n, reps, rng)
    zn = generation_pmf(law, n)
    sized = size_bias(zn)
    tv_s = tv_distance(batch.s_n, sized)

    surv = 1.0 - zn.prob_at(0)
    keep = zn.support > 0
    conditioned = DiscretePMF(zn.support[keep], zn.probs[keep] / surv)
    tv_r = tv_distance(batch.r_n_star, conditioned)

    # conditional uniformity of R_n given S_n, pooled chi-square
    stat, dof = 0.0, 0
    values, freq = np.unique(batch.s_n, return_counts=True)
    for s, cnt in zip(values.tolist(), freq.tolist()):
        if cnt < 100 or s < 2:
            continue
        obs = np.bincount(batch.r_n[batch.s_n == s], minlength=s + 1)[1:]
        stat += float(((obs - cnt / s) ** 2 / (cnt / s)).sum())
        dof += s - 1
    p_value = float(sps.chi2.sf(stat, dof)) if dof else 1.0

    mean_w = float(batch.w.mean())
    se_w = float(batch.w.std(ddof=1) / math.sqrt(reps))

    # the coupled pair satisfies the equilibrium identity within Monte Carlo error
    identity_ok = True
    for _ in range(3):
        f = random_piecewise_linear(rng, span=3.0)
        lhs_vals = f(batch.w)
        rhs_vals = f.slope_at(batch.w_e)
        lhs = float(lhs_vals.mean()) - f.value_at_zero
        rhs = mean_w * float(rhs_vals.mean())
        se = 3.0 * math.hypot(float(lhs_vals.std(ddof=1)), float(rhs_vals.std(ddof=1))) / math.sqrt(reps)
        if abs(lhs - rhs) > se + 1e-12:
            identity_ok = False

    gap = batch.gap
    bound = bnd.c_const(moments(law)) * bnd.eta(1.0, n)
    gap_ok = float(gap.mean()) <= bound + 3.0 * float(gap.std(ddof=1) / math.sqrt(reps))

    return [
        _row("galton_watson", "spine_population_is_size_biased", tv_s < 0.01, f"TV {tv_s:.4g}"),
        _row("galton_watson", "rstar_matches_conditioned_law", tv_r < 0.01, f"TV {tv_r:.4g}"),
        _row("galton_watson", "spine_position_uniform", p_value > 0.001, f"pooled chi2 p {p_value:.4g}"),
        _row("galton_watson", "coupled_w_has_unit_mean", abs(mean_w - 1.0) <= 3.0 * se_w,
             f"mean W {mean_w:.5f}, 3se {3*se_w:.5f}"),
        _row("galton_watson", "coupled_pair_equilibrium_identity", identity_ok, "within 3 se"),
        _row("galton_watson", "mean_gap_le_c_eta", gap_ok,
             f"gap {float(gap.mean()):.4f} vs bound {bound:.4f}"),
    ]


def _check_gap_bound_geometric(rng) -> dict:
    law = geometric_pmf(0.9)
    mom = moments(law)
    n, reps = 10, 2 * 10**4
    batch = rstar_sample_batch(law, n, reps, rng)
    gap = batch.gap
    bound = bnd.c_const(mom) * bnd.eta(mom.mean_m, n)
    mean = float(gap.mean())
    se = float(gap.std(ddof=1) / math.sqrt(reps))
    return _row("galton_watson", "mean_gap_le_c_eta_subcritical", mean <= bound + 3 * se,
                f"gap {mean:.4f} vs bound {bound:.4f}")


def _check_dependent_sum_identity(rng) -> dict:
    worst = 0.0
    for _ in range(50):
        joint = random_joint_law(rng)
        f = random_piecewise_linear(rng, span=4.0)
        for direction in ("backward", "forward"):
            worst = max(worst, dependent_sum_identity_residual(joint, f, direction))
    return _row("markov_walk", "dependent_sum_identity_residual", worst < 1e-10,
                f"max residual {worst:.3g}")


def _check_occupation_marginals(rng) -> dict:
    chain = random_chain(4, rng)
    n, reps = 30, 3 * 10**4
    w, w_e = occupation_sample_batch(chain, n, reps, rng)
    ok = True
    worst = 0.0
    for x in np.quantile(w_e, [0.1, 0.3, 0.5, 0.7, 0.9]):
        lhs_vals = (w_e <= x).astype(np.float64)
        rhs_vals = np.minimum(w, x)
        lhs, rhs = float(lhs_vals.mean()), float(rhs_vals.mean())
        se = 3.0 * math.hypot(float(lhs_vals.std(ddof=1)), float(rhs_vals.std(ddof=1))) / math.sqrt(reps)
        worst = max(worst, abs(lhs - rhs) - se)
        if abs(lhs - rhs) > se + 1e-12:
            ok = False
    return _row("markov_walk", "occupation_coupling_equilibrium_marginal", ok,
                f"max excess over 3se {worst:.4g}")


def _check_occupation_bound(rng) -> dict:
    ok = True
    detail = []
    for _ in range(3):
        chain = random_chain(5, rng)
        n, reps = 30, 2 * 10**4
        w, _ = occupation_sample_batch(chain, n, reps, rng)
        sample = EmpiricalSample.from_values(w)
        dw = dw_vs_exp(sample)
        bound = bnd.occupation_bound(expected_occupations(chain, n))
        _, dw_se = bootstrap_distance_se(sample, rng, n_boot=32)
        ok = ok and dw <= bound + 3.0 * dw_se
        detail.append(f"{dw:.3f}<={bound:.3f}")
    return _row("markov_walk", "dw_le_occupation_bound", ok, ", ".join(detail))


def _check_occupation_bound_bruteforce(rng) -> dict:
    worst = 0.0
    for _ in range(10):
        means = rng.random(100) * rng.integers(0, 2, size=100)
        if means.sum() == 0:
            means[0] = 1.0
        lam = 1.0 / math.fsum(means.tolist())
        n = means.size
        brute = 0.0
        for i in range(1, n + 1):
            for j in range(n - i + 1, n + 1):
                brute += means[i - 1] * means[j - 1]
        brute = 2.0 * lam + 2.0 * lam * lam * brute
        worst = max(worst, abs(brute - bnd.occupation_bound(means)))
    return _row("markov_walk", "occupation_bound_bruteforce_oracle", worst < 1e-12,
                f"max |fast - brute| {worst:.3g}")


def _check_walk_constructor_gates(rng) -> dict:
    ok = True
    try:
        Walk2DSpec(steps=np.array([[1, 0], [0, 1]]), probs=np.array([0.5, 0.5]))
        ok = False  # drifting law must be rejected
    except ValueError:
        pass
    try:
        from .markov_walk import return_prob_curve, simple_walk

        return_prob_curve(simple_walk(), [4, 8], 10, rng)
        ok = False  # periodic walk must be gated out
    except ValueError:
        pass
    return _row("markov_walk", "mean_zero_and_aperiodicity_enforced", ok, "constructor gates hold")


def _check_walk_dp_oracle(rng) -> dict:
    spec = lazy_walk(0.2)
    n, reps = 32, 2 * 10**4
    exact = exact_return_probs(spec, n)
    counts = returns_batch(spec, n, reps, rng)
    er_exact = math.fsum(exact[1:].tolist())
    er_hat = float(counts.mean())
    se = float(counts.std(ddof=1) / math.sqrt(reps))
    ok = abs(er_hat - er_exact) <= 3.0 * se
    return _row("markov_walk", "mean_returns_match_dp_oracle", ok,
                f"E R hat {er_hat:.4f} vs exact {er_exact:.4f}")


def _check_cli_determinism() -> dict:
    from .experiments import ExperimentConfig, run

    base = {"kind": "gw-couple", "law": "pmf:[0:0.5,2:0.5]", "n": 4, "reps": 6000, "seed": 7}
    a = run(ExperimentConfig.from_dict({**base, "threads": 1}))
    b = run(ExperimentConfig.from_dict({**base, "threads": 2}))
    ok = a.to_json_bytes() == b.to_json_bytes() and a.to_csv_bytes() == b.to_csv_bytes()
    return _row("cli_experiments", "parallel_serial_reports_identical", ok,
                "byte-identical across thread counts")


def _check_json_roundtrip() -> dict:
    import json

    from .experiments import ExperimentConfig, run

    report = run(ExperimentConfig.from_dict(
        {"kind": "gw-bound", "law": "geometric(0.9)", "n": 10, "seed": 1}))
    blob = report.to_json_bytes()
    ok = json.dumps(json.loads(blob), sort_keys=True, indent=1).encode() + b"\n" == blob
    return _row("cli_experiments", "json_report_roundtrip", ok, "parse -> serialize identical")


def verify_suite(seed: int) -> list[dict]:
    """Run every invariant check; returns one row per invariant."""
    root = np.random.SeedSequence(seed)
    streams = [np.random.default_rng(s) for s in root.spawn(16)]
    rows = [
        _check_size_bias_identity(streams[0]),
        _check_equilibrium_cdf_shape(streams[1]),
        _check_equilibrium_identity(streams[2]),
        _check_sampling_laws(streams[3]),
        _check_metric_relation(streams[4]),
        _check_dw_riemann(streams[5]),
        _check_metric_invariances(streams[6]),
        _check_eta_upper_super(),
        _check_eta_upper_sub(),
        _check_partial_sum_floor(),
        _check_tail_ratio_chain(),
        _check_eta_continuity(),
        _check_log_sum_inequality(streams[7]),
        *_spine_checks(streams[8]),
        _check_gap_bound_geometric(streams[9]),
        _check_dependent_sum_identity(streams[10]),
        _check_occupation_marginals(streams[11]),
        _check_occupation_bound(streams[12]),
        _check_occupation_bound_bruteforce(streams[13]),
        _check_walk_constructor_gates(streams[14]),
        _check_walk_dp_oracle(streams[15]),
        _check_cli_determinism(),
        _check_json_roundtrip(),
    ]
    return rows
