import math

import numpy as np
import pytest

from stein_expo.bounds import (
    GWBoundInput,
    c_const,
    dk_bound_from_gap,
    dk_bound_from_tail,
    dw_bound_from_gap,
    eta,
    eta_critical_limit,
    eta_upper_sub,
    eta_upper_super,
    gw_wasserstein_bound,
    log_sum_inequality_margin,
    occupation_bound,
    survival_upper,
)
from stein_expo.dist_core import geometric_pmf, moments, pmf_from_mapping, poisson_pmf
from stein_expo.galton_watson import survival_probability

from oracles import occupation_double_sum


def test_eta_frozen_values():
    assert eta(2.0, 1) == pytest.approx(2.5, abs=1e-14)
    assert eta(0.5, 2) == pytest.approx(0.5 / 1.5 + (0.25 / 0.375) * (0.5 + 1 / 12), abs=1e-14)
    assert eta_critical_limit(1) == 1.5


def test_eta_critical_continuity():
    for n in (1, 10, 100, 1000):
        limit = eta_critical_limit(n)
        assert abs(eta(1.0 + 1e-6, n) - limit) < 1e-4
        assert abs(eta(1.0 - 1e-6, n) - limit) < 1e-4
    assert abs(eta(1.0 + 1e-6, 1) - 1.5) < 1e-5
    assert abs(eta(1.0 - 1e-6, 1) - 1.5) < 1e-5


def test_eta_domain_errors():
    with pytest.raises(ValueError):
        eta(0.0, 5)
    with pytest.raises(ValueError):
        eta(-1.0, 5)
    with pytest.raises(ValueError):
        eta(0.5, 0)


def test_eta_no_overflow_large_n():
    assert math.isfinite(eta(2.0, 10**4))
    assert math.isfinite(eta(1.9999, 10**4))


def test_eta_upper_super_values():
    assert eta_upper_super(2.0, 1) == pytest.approx(12.5)
    assert eta(2.0, 1) <= eta_upper_super(2.0, 1)
    assert eta_upper_super(1.01, 100) == pytest.approx(0.06 + (6.5 + math.log(100)) / 100)
    assert eta_upper_super(1.0001, 10**4) == pytest.approx(0.0006 + (6.5 + math.log(10**4)) / 10**4)
    with pytest.raises(ValueError):
        eta_upper_super(1.0, 10)


def test_eta_upper_sub_values():
    expected = (4.5 + math.log(2.0)) * 0.5 + (4.5 + math.log(2.0)) / 2
    assert eta_upper_sub(0.5, 2) == pytest.approx(expected)
    assert eta(0.5, 2) <= eta_upper_sub(0.5, 2)
    assert eta_upper_sub(0.99, 100) == pytest.approx(
        (4.5 - math.log(0.01)) * 0.01 + (4.5 + math.log(100)) / 100
    )
    assert eta_upper_sub(0.9, 10) == pytest.approx(
        (4.5 - math.log(0.1)) * 0.1 + (4.5 + math.log(10)) / 10
    )
    with pytest.raises(ValueError):
        eta_upper_sub(0.4, 10)
    with pytest.raises(ValueError):
        eta_upper_sub(0.9, 1)


def test_eta_majorants_on_small_grid():
    for m in np.linspace(1.001, 2.0, 40):
        for n in (1, 2, 5, 17, 120, 1500):
            assert eta(float(m), n) <= eta_upper_super(float(m), n) + 1e-12
    for m in np.linspace(0.5, 0.999, 40):
        for n in (2, 5, 17, 120, 1500):
            assert eta(float(m), n) <= eta_upper_sub(float(m), n) + 1e-12


def test_c_const_values():
    assert c_const(moments(pmf_from_mapping({0: 0.5, 2: 0.5}))) == 14.0
    assert c_const(moments(pmf_from_mapping({2: 1.0}))) == 20.0
    poisson_c = c_const(moments(poisson_pmf(1.0)))
    alpha = math.exp(-1) / (1 - 2 * math.exp(-1))
    assert poisson_c == pytest.approx((2 + alpha) * (2 + alpha + 1 + 5), abs=1e-10)
    assert poisson_c == pytest.approx(31.86, abs=0.01)


def test_survival_upper_values():
    mom = moments(poisson_pmf(0.9))
    bound = survival_upper(mom, 10)
    assert bound == pytest.approx((2 + mom.alpha) * 0.9**10 * 0.1 / (1 - 0.9**10), rel=1e-12)
    assert bound == pytest.approx(0.1932, abs=2e-4)
    assert survival_probability(poisson_pmf(0.9), 10) <= bound

    shifted = pmf_from_mapping({0: 0.6, 2: 0.4})
    mom2 = moments(shifted)
    assert survival_upper(mom2, 5) == pytest.approx(2 * (0.8**5 * 0.2) / (1 - 0.8**5), rel=1e-12)
    assert survival_probability(shifted, 5) <= survival_upper(mom2, 5)


def test_survival_upper_one_step_dominates():
    for pmf in (poisson_pmf(0.8), geometric_pmf(0.7), pmf_from_mapping({0: 0.7, 2: 0.3})):
        mom = moments(pmf)
        assert 1.0 - pmf.prob_at(0) <= survival_upper(mom, 1)
        assert survival_upper(mom, 1) == pytest.approx((2 + mom.alpha) * mom.mean_m, rel=1e-12)


def test_survival_upper_critical_rejected():
    with pytest.raises(ValueError, match="singular"):
        survival_upper(moments(pmf_from_mapping({0: 0.5, 2: 0.5})), 5)


def test_gap_bounds_arithmetic():
    assert dw_bound_from_gap(0.0) == 0.0
    assert dw_bound_from_gap(0.5) == 1.0
    assert dk_bound_from_tail(0.1, 0.05) == pytest.approx(1.3)
    assert dk_bound_from_tail(0.01, 0.0) == pytest.approx(0.12)
    assert dk_bound_from_gap(0.0) == 0.0
    assert dk_bound_from_gap(1.0) == 2.46
    assert dk_bound_from_gap(0.25) == pytest.approx(1.23)
    with pytest.raises(ValueError):
        dw_bound_from_gap(-0.1)
    with pytest.raises(ValueError):
        dk_bound_from_tail(0.0, 0.5)
    with pytest.raises(ValueError):
        dk_bound_from_gap(-1.0)


def test_occupation_bound_values():
    assert occupation_bound([0.0, 1.0, 0.0, 1.0]) == pytest.approx(2.5, abs=1e-14)
    assert occupation_bound([1.0]) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        occupation_bound([0.0, 0.0])
    with pytest.raises(ValueError):
        occupation_bound([-1.0, 2.0])


def test_occupation_bound_bruteforce_oracle(rng):
    for _ in range(10):
        means = rng.random(100)
        assert occupation_bound(means) == pytest.approx(occupation_double_sum(means), abs=1e-12)


def test_log_sum_inequality_values():
    assert log_sum_inequality_margin(2, 2, 2) == pytest.approx(1 + math.log(2) - math.log(2) / 2)
    assert log_sum_inequality_margin(1.0000001, 2, 2) == pytest.approx(1 + math.log(2), abs=1e-6)
    with pytest.raises(ValueError):
        log_sum_inequality_margin(1.0, 2, 2)
    with pytest.raises(ValueError, match="hypothesis"):
        log_sum_inequality_margin(100.0, 1.01, 1.01)  # 1/b + 1/c > 1


def test_log_sum_inequality_sweep(rng):
    for _ in range(1000):
        b = 1.0 / rng.uniform(0.02, 0.5)
        c = 1.0 / rng.uniform(0.02, 0.5)
        a = (1.0 + rng.uniform(0.0, 9.0)) / (1.0 / b + 1.0 / c)
        assert log_sum_inequality_margin(a, b, c) >= 0.0


def test_gw_bound_report_composition():
    law = geometric_pmf(0.9)
    mom = moments(law)
    report = gw_wasserstein_bound(GWBoundInput(moments=mom, n=10))
    assert report.eta == eta(mom.mean_m, 10)
    assert report.c_const == c_const(mom)
    assert report.dw_bound == report.c_const * report.eta
    assert report.eta_upper == eta_upper_sub(mom.mean_m, 10)
    assert report.eta <= report.eta_upper
    assert report.survival_upper == survival_upper(mom, 10)


def test_gw_bound_report_critical_limit_branch():
    mom = moments(pmf_from_mapping({0: 0.5, 2: 0.5}))
    for n in (1, 5, 20):
        report = gw_wasserstein_bound(GWBoundInput(moments=mom, n=n))
        assert report.dw_bound == pytest.approx(14.0 * eta_critical_limit(n), rel=1e-14)
        assert report.eta_upper is None
        assert report.survival_upper is None


def test_gw_bound_report_supercritical():
    mom = moments(geometric_pmf(1.05))
    report = gw_wasserstein_bound(GWBoundInput(moments=mom, n=20))
    assert report.eta_upper == eta_upper_super(mom.mean_m, 20)
    assert report.eta <= report.eta_upper
