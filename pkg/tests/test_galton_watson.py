import math

import numpy as np
import pytest

import stein_expo.galton_watson as gw
from stein_expo.dist_core import geometric_pmf, moments, pmf_from_mapping, size_bias
from stein_expo.bounds import c_const, eta
from stein_expo.galton_watson import (
    DiscretePMF,
    conditional_zn_sample,
    coupling_gap_estimate,
    generation_pmf,
    rstar_sample,
    rstar_sample_batch,
    simulate_generations,
    spine_sample,
    spine_sample_batch,
    survival_probability,
    yaglom_lambda,
)
from stein_expo.metrics import dw_vs_exp
from stein_expo.verify import tv_distance

from oracles import lf_conditional_mean, lf_generation_pmf, lf_survival

CRITICAL_BINARY = pmf_from_mapping({0: 0.5, 2: 0.5})
DOUBLING = pmf_from_mapping({2: 1.0})
UNIT = pmf_from_mapping({1: 1.0})


def test_simulate_deterministic_doubling(rng):
    assert simulate_generations(DOUBLING, 5, rng).tolist() == [1, 2, 4, 8, 16, 32]


def test_simulate_instant_extinction(rng):
    assert simulate_generations(pmf_from_mapping({0: 1.0}), 3, rng).tolist() == [1, 0, 0, 0]


def test_simulate_martingale_mean(rng):
    # E Z_n = m^n; critical geometric keeps unit mean
    law = geometric_pmf(1.0)
    z = np.ones(10**5, dtype=np.int64)
    for _ in range(10):
        z = gw._offspring_totals(law, z, rng)
    se = z.std(ddof=1) / math.sqrt(z.size)
    assert abs(z.mean() - 1.0) <= 3.0 * se


def test_survival_probability_cases():
    assert survival_probability(DOUBLING, 7) == 1.0
    assert survival_probability(CRITICAL_BINARY, 1) == 0.5
    assert survival_probability(CRITICAL_BINARY, 2) == pytest.approx(0.375, abs=1e-15)
    assert survival_probability(pmf_from_mapping({0: 1.0}), 1) == 0.0


def test_survival_matches_linear_fractional_oracle():
    for m in (0.9, 1.0, 1.05):
        law = geometric_pmf(m)
        for n in (1, 5, 20, 50):
            assert survival_probability(law, n) == pytest.approx(lf_survival(m, n), abs=1e-12)


def test_generation_pmf_matches_survival_and_oracle():
    law = geometric_pmf(0.9)
    for n in (1, 3, 10):
        pmf = generation_pmf(law, n)
        assert 1.0 - pmf.prob_at(0) == pytest.approx(survival_probability(law, n), abs=1e-12)
        oracle = lf_generation_pmf(0.9, n, pmf.max_support)
        worst = max(abs(pmf.prob_at(k) - oracle[k]) for k in range(pmf.max_support + 1))
        assert worst < 1e-12


def test_generation_pmf_cap():
    with pytest.raises(RuntimeError, match="cap"):
        generation_pmf(DOUBLING, 25, cap=1000)


def test_yaglom_lambda_values():
    assert yaglom_lambda(DOUBLING, 5) == pytest.approx(1 / 32)
    assert yaglom_lambda(CRITICAL_BINARY, 2) == pytest.approx(0.375)
    got = yaglom_lambda(geometric_pmf(0.9), 10)
    assert got == pytest.approx(1.0 / lf_conditional_mean(0.9, 10), abs=1e-12)
    with pytest.raises(ValueError, match="extinct"):
        yaglom_lambda(pmf_from_mapping({0: 1.0}), 1)


def test_spine_deterministic_doubling(rng):
    n = 6
    draw = spine_sample(DOUBLING, n, rng)
    assert draw.s_n == 2**n
    assert 1 <= draw.r_n <= 2**n
    assert np.all(draw.sibling_counts == 1)
    # sibling subtree at level j contributes exactly 2^(n-j) on one side
    sides = draw.left_descendants + draw.right_descendants
    assert sides.tolist() == [2 ** (n - j) for j in range(1, n + 1)]


def test_spine_unit_law(rng):
    draw = spine_sample(UNIT, 5, rng)
    assert draw.s_n == 1 and draw.r_n == 1 and draw.l_n == 0
    assert np.all(draw.no_left_descendants)


def test_spine_position_uniform_doubling(rng):
    n = 5
    _, r_n = spine_sample_batch(DOUBLING, n, 40_000, rng)
    counts = np.bincount(r_n, minlength=2**n + 1)[1:]
    expected = 40_000 / 2**n
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    from scipy.stats import chi2 as chi2_dist

    assert chi2_dist.sf(chi2, 2**n - 1) > 0.001


def test_spine_population_size_biased(rng):
    s_n, _ = spine_sample_batch(CRITICAL_BINARY, 5, 50_000, rng)
    assert tv_distance(s_n, size_bias(generation_pmf(CRITICAL_BINARY, 5))) < 0.02


def test_rstar_deterministic_doubling(rng):
    n = 6
    batch = rstar_sample_batch(DOUBLING, n, 20_000, rng)
    assert np.all(batch.r_n_star == 2**n)
    assert np.all(batch.w == 1.0)
    assert batch.w_e.min() > 0.0 and batch.w_e.max() < 1.0
    gap = batch.gap
    assert abs(gap.mean() - 0.5) <= 3.0 * gap.std(ddof=1) / math.sqrt(gap.size)


def test_rstar_unit_law(rng):
    batch = rstar_sample_batch(UNIT, 4, 20_000, rng)
    assert np.all(batch.r_n == 1) and np.all(batch.r_n_star == 1)
    gap = batch.gap
    assert abs(gap.mean() - 0.5) <= 3.0 * gap.std(ddof=1) / math.sqrt(gap.size)


def test_rstar_matches_conditioned_law(rng):
    n = 5
    batch = rstar_sample_batch(CRITICAL_BINARY, n, 50_000, rng)
    zn = generation_pmf(CRITICAL_BINARY, n)
    keep = zn.support > 0
    surv = 1.0 - zn.prob_at(0)
    conditioned = DiscretePMF(zn.support[keep], zn.probs[keep] / surv)
    assert tv_distance(batch.r_n_star, conditioned) < 0.02


def test_rstar_single_draw(rng):
    draw = rstar_sample(CRITICAL_BINARY, 4, rng)
    assert draw.gap == abs(draw.w - draw.w_e)
    assert draw.r_n_star >= 1 and draw.r_n >= 1
    assert draw.w >= yaglom_lambda(CRITICAL_BINARY, 4)


def test_coupling_gap_estimate_basics(rng):
    est = coupling_gap_estimate(DOUBLING, 5, 20_000, rng)
    assert abs(est.mean - 0.5) <= 3.0 * est.se
    assert est.tail_probs[0] > 0.9  # P[gap > 0.01] large for uniform gap
    assert est.tail_probs[-1] == 0.0
    with pytest.raises(ValueError):
        coupling_gap_estimate(DOUBLING, 5, 1, rng)


def test_coupling_gap_dominates_true_dw(rng):
    # measured Wasserstein distance obeys the coupling bound within noise
    n = 10
    est = coupling_gap_estimate(CRITICAL_BINARY, n, 30_000, rng)
    sample = conditional_zn_sample(CRITICAL_BINARY, n, 30_000, rng)
    assert dw_vs_exp(sample) <= 2.0 * (est.mean + 3.0 * est.se)


def test_mean_gap_within_analytic_bound(rng):
    law = geometric_pmf(0.9)
    mom = moments(law)
    est = coupling_gap_estimate(law, 10, 20_000, rng)
    assert est.mean <= c_const(mom) * eta(mom.mean_m, 10) + 3.0 * est.se


def test_conditional_zn_deterministic(rng):
    sample = conditional_zn_sample(DOUBLING, 5, 1000, rng)
    assert np.all(sample.values == 1.0)


def test_conditional_zn_unit_mean(rng):
    sample = conditional_zn_sample(geometric_pmf(0.9), 10, 50_000, rng)
    se = sample.values.std(ddof=1) / math.sqrt(sample.n)
    assert abs(sample.values.mean() - 1.0) <= 3.0 * se


def test_conditional_zn_floor(rng):
    with pytest.raises(RuntimeError, match="rstar_sample"):
        conditional_zn_sample(geometric_pmf(0.5), 30, 100, rng)


def test_population_guard(rng, monkeypatch):
    monkeypatch.setattr(gw, "POPULATION_CAP", 1000)
    with pytest.raises(RuntimeError, match="guard"):
        simulate_generations(pmf_from_mapping({3: 1.0}), 10, rng)


def test_rejection_budget(rng):
    # supercritical law with heavy left activity and a tiny budget
    with pytest.raises(RuntimeError, match="rejection budget"):
        rstar_sample_batch(geometric_pmf(1.05), 8, 200, rng, rejection_budget=1)
