import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from semiflow_spectra.errors import DivergentTailsError, ParameterError
from semiflow_spectra.hypothesis import (ReturnTime, check_conditions, exp_tails,
                                         iterate_contraction, lorenz_params)
from semiflow_spectra.interval_maps import (make_doubling_map, make_explicit_map,
                                            make_lorenz_map, make_lueroth_map)


def slow_fast_map():
    # contracting left branch, expanding right branch; every orbit visits the right one
    return make_explicit_map([0, 1], [dict(lo=0, hi=0.5, slope=0.9, intercept=0.5),
                                      dict(lo=0.5, hi=1, slope=2, intercept=-1)])


def test_doubling_example():
    r = check_conditions(make_doubling_map(), ReturnTime.constant(1.0), 0.5, 0.2)
    assert r.expanding_sup == pytest.approx(2 ** -0.5 * math.exp(0.2), rel=1e-12)
    assert r.expanding_sup == pytest.approx(0.8636, abs=1e-4)
    assert r.sum_value == pytest.approx(1.221, abs=1e-3)
    assert r.passed
    assert r.holder_constants == [0.0] * 5
    assert r.first_failing_branch is None


def test_holder_constant_against_bounds():
    fmap = make_doubling_map()
    sigma, alpha = 0.4, 0.5
    r = check_conditions(fmap, ReturnTime.explicit(lambda x: 1 + x), alpha, sigma, z_samples=2)
    # g(x) = exp(sigma (1 + x)) / 2 on branches of length 1/2
    g = lambda x: math.exp(sigma * (1 + x)) / 2  # noqa: E731
    lower = (g(1.0) - g(0.5)) / 0.5 ** alpha
    upper = sigma * g(1.0) * 0.5 ** (1 - alpha)
    # sampled pairs miss the exact endpoints, so allow a little below the endpoint pair
    assert lower * (1 - 1e-2) <= r.holder_constants[-1] <= upper * (1 + 1e-6)


def test_lorenz_fails_at_first_branch():
    a, _ = lorenz_params(1.0, 0.5, 0.5)
    r = check_conditions(make_lorenz_map(1.0, 0.5, 20), ReturnTime.lorenz_log(1.0), a, 0.15)
    assert not r.verdicts["expanding"]
    assert r.verdicts["summable"] and r.verdicts["tails"] and r.verdicts["holder"]
    assert r.first_failing_branch == 0
    # branch 0 has inverse slope 1/beta = 2 near the right end, so iterates never contract
    assert r.iterate_suggestion is None
    assert r.iterate_contractions[:3] == pytest.approx([2, 4, 8], rel=1e-9)
    assert r.unscaled_contractions[1] == pytest.approx(math.exp(-0.5))


def test_iterate_suggestion_for_slow_branch():
    r = check_conditions(slow_fast_map(), ReturnTime.constant(1.0), 0.5, 0.01)
    assert not r.verdicts["expanding"]
    assert r.iterate_suggestion == 2
    assert r.iterate_contractions == pytest.approx([1 / 0.9, 1 / 1.8])
    assert r.iterate_alpha == 0.5


def test_iterate_contraction_doubling():
    for n in (1, 2, 3):
        assert iterate_contraction(make_doubling_map(), n) == pytest.approx(2.0 ** -n)


def test_parameter_errors():
    with pytest.raises(ParameterError):
        check_conditions(make_doubling_map(), ReturnTime.constant(1.0), 0.5, 0.0)
    with pytest.raises(ParameterError):
        check_conditions(make_doubling_map(), ReturnTime.constant(1.0), 1.0, 0.1)
    with pytest.raises(ParameterError):
        lorenz_params(1.0, 1.0, 0.5)


def test_lorenz_params_examples():
    assert lorenz_params(1.0, 0.5, 0.5) == pytest.approx((1 / 3, 1 / 6))
    assert lorenz_params(2.0, 0.5, 0.1) == pytest.approx((0.1, 0.1))


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_lorenz_params_random(lam, beta, gamma):
    alpha, smax = lorenz_params(lam, beta, gamma)
    assert alpha <= gamma and alpha <= (1 - beta) / (2 - beta) + 1e-15
    assert smax <= lam * (1 - beta - alpha) + 1e-12
    # the roof has finite exponential moment at any admissible rate
    fmap = make_lorenz_map(lam, beta, 8)
    val = exp_tails(fmap, ReturnTime.lorenz_log(lam), 0.9 * smax)
    assert val == pytest.approx(1 / (1 - 0.9 * smax / lam), rel=1e-9)


def test_exp_tails_examples():
    fmap = make_lorenz_map(1.0, 0.5, 10)
    assert exp_tails(fmap, ReturnTime.lorenz_log(1.0), 0.1) == pytest.approx(1 / 0.9, rel=1e-12)
    assert exp_tails(make_doubling_map(), ReturnTime.constant(2.0), 1.0) == pytest.approx(math.e ** 2)
    with pytest.raises(DivergentTailsError):
        exp_tails(fmap, ReturnTime.lorenz_log(1.0), 1.0)
    with pytest.raises(ParameterError):
        exp_tails(fmap, ReturnTime.lorenz_log(1.0), 0.0)


def test_exp_tails_against_quadrature():
    tau = ReturnTime.explicit(lambda x: 1 + np.sin(5 * x) ** 2)
    ref, _ = integrate.quad(lambda x: math.exp(0.3 * (1 + math.sin(5 * x) ** 2)), 0, 1, limit=200)
    assert exp_tails(make_doubling_map(), tau, 0.3) == pytest.approx(ref, rel=1e-9)


def test_lueroth_tail_series_included():
    fmap = make_lueroth_map(10)
    r = check_conditions(fmap, ReturnTime.constant(1.0), 0.5, 0.1, z_samples=2, n_pairs=2000)
    brute = sum(math.exp(0.1) / (i * (i + 1)) for i in range(1, 200_000))
    assert r.sum_value == pytest.approx(brute, rel=1e-5)


def test_monotone_in_sigma():
    fmap = make_lorenz_map(1.0, 0.5, 12)
    tau = ReturnTime.lorenz_log(1.0)
    prev = None
    for sigma in (0.02, 0.05, 0.1, 0.15):
        r = check_conditions(fmap, tau, 1 / 3, sigma, z_samples=2, n_pairs=2000, max_iterate=2)
        cur = (r.expanding_sup, r.sum_value, r.tails_integral)
        if prev is not None:
            assert all(c >= p for c, p in zip(cur, prev))
        prev = cur


@pytest.mark.parametrize("ratio", [0.1, 0.5, 0.9])
def test_finite_below_rate(ratio):
    a, smax = lorenz_params(1.0, 0.5, 0.5)
    r = check_conditions(make_lorenz_map(1.0, 0.5, 12), ReturnTime.lorenz_log(1.0), a,
                         ratio * smax, z_samples=2, n_pairs=2000, max_iterate=2)
    assert math.isfinite(r.sum_value) and math.isfinite(r.tails_integral)


def test_report_serialisation(tmp_path):
    r = check_conditions(make_doubling_map(), ReturnTime.constant(1.0), 0.5, 0.2, z_samples=2)
    text = r.to_json(tmp_path / "r.json")
    assert '"passed": true' in text
    assert "expanding" in r.table()
