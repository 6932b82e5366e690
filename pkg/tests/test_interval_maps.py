import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semiflow_spectra.errors import (NonExpandingBranchError, OutsideDomainError,
                                     OutsideImageError, ParameterError)
from semiflow_spectra.interval_maps import (Interval, PiecewiseMap, branch_contraction,
                                            evaluate_map, generic_branch, inverse_branch,
                                            make_doubling_map, make_explicit_map,
                                            make_lorenz_map, make_lueroth_map, make_tent_map,
                                            map_from_config, refine_partition)


def slope3_map():
    return make_explicit_map([0, 1], [
        dict(lo=0, hi=1 / 3, slope=3, intercept=0),
        dict(lo=1 / 3, hi=2 / 3, slope=-3, intercept=2),
        dict(lo=2 / 3, hi=1, slope=3, intercept=-2),
    ])


def test_doubling_evaluation():
    assert evaluate_map(make_doubling_map(), 0.3) == pytest.approx((0.6, 0))
    y, i = evaluate_map(make_doubling_map(), 0.8)
    assert i == 1 and y == pytest.approx(0.6)


def test_partition_endpoint_is_rejected():
    with pytest.raises(OutsideDomainError):
        evaluate_map(make_doubling_map(), 0.5)
    with pytest.raises(OutsideDomainError):
        evaluate_map(make_doubling_map(), 1.5)


def test_lorenz_power_law_evaluation():
    m = make_lorenz_map(1.0, 0.5, 10)
    y, i = evaluate_map(m, 0.25)
    assert y == pytest.approx(0.5, abs=1e-15)
    # 0.25 lies in (e^-2, e^-1)
    assert i == 1


def test_inverse_branches():
    assert inverse_branch(make_doubling_map(), 1, 0.6) == pytest.approx(0.8)
    m = make_lorenz_map(1.0, 0.5, 10)
    assert inverse_branch(m, 0, 0.5 ** 0.5 * 0 + 0.75) == pytest.approx(0.5625)
    i = int(m.locate(np.array([0.25]))[0])
    assert inverse_branch(m, i, 0.5) == pytest.approx(0.25)
    with pytest.raises(OutsideImageError):
        inverse_branch(slope3_map(), 0, 1.2)


def test_contractions():
    assert branch_contraction(make_doubling_map(), 0) == 0.5
    assert branch_contraction(slope3_map(), 1) == pytest.approx(1 / 3)
    m = make_lorenz_map(1.0, 0.5, 10)
    for i in range(10):
        assert branch_contraction(m, i) == pytest.approx(2 * math.exp(-i / 2), rel=1e-14)
        assert m.branches[i].meta["unscaled_contraction"] == pytest.approx(math.exp(-i / 2))
    c = m.contractions()
    assert np.all(np.diff(c) < 0)


def test_generic_branch_contraction_by_refined_grid():
    # f(x) = x + x^2 on (0.5, 1): 1/f' = 1/(1+2x), sup at x -> 0.5 is 1/2
    b = generic_branch(0.5, 1.0, lambda x: x + x * x, lambda x: 1 + 2 * x,
                       lambda y: (-1 + np.sqrt(1 + 4 * y)) / 2)
    assert b.contraction == pytest.approx(0.5, rel=1e-5)
    with pytest.raises(NonExpandingBranchError):
        generic_branch(-1.0, 1.0, lambda x: x ** 3, lambda x: 3 * x ** 2, np.cbrt)


def test_lorenz_partition_and_tail():
    m = make_lorenz_map(1.0, 0.5, 10)
    assert m.n_listed == 10
    assert m.branches[3].domain.lo == pytest.approx(math.exp(-4))
    assert m.branches[3].domain.hi == pytest.approx(math.exp(-3))
    expected = 2 * math.exp(-5) / (1 - math.exp(-0.5))
    assert m.tail.tail_sum_bound == pytest.approx(expected, rel=1e-13)
    # brute-force partial sum as an independent check
    brute = sum(2 * math.exp(-i / 2) for i in range(10, 400))
    assert m.tail.tail_sum_bound == pytest.approx(brute, rel=1e-12)


def test_lorenz_rejects_bad_beta():
    with pytest.raises(ParameterError):
        make_lorenz_map(1.0, 1.2, 10)


def test_tail_points_are_located():
    m = make_lorenz_map(1.0, 0.5, 5)
    x = np.array([math.exp(-7.5)])
    i = int(m.locate(x)[0])
    assert m.branch(i).domain.contains(x[0])
    assert m.branch(i).family_index == 7
    with pytest.raises(OutsideDomainError):
        m.locate(np.array([math.exp(-7)]))


def test_refine_leaves_doubling_alone_at_large_target():
    m = refine_partition(make_doubling_map(), 0.5, 2.0 + 1e-12)
    assert m.n_listed == 2


def test_refine_chops_into_halves():
    m = refine_partition(make_doubling_map(), 0.25 / 2.5, 2.5)
    assert m.n_listed == 4
    assert all(b.image.length == pytest.approx(0.5) for b in m.branches)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.2), st.floats(2.1, 40.0))
def test_refine_window_and_values(eps0, gamma):
    base = make_tent_map()
    m = refine_partition(base, eps0, gamma)
    target = eps0 * gamma
    for b in m.branches:
        assert b.image.length <= 2 * target + 1e-12
        if base.branches[0].image.length > 2 * target:
            assert b.image.length >= target - 1e-12
    x = np.random.default_rng(1).random(1000)
    x = x[np.abs(x - 0.5) > 1e-9]
    keep = np.ones(x.size, dtype=bool)
    for e in m.sorted_breakpoints():
        keep &= np.abs(x - e) > 1e-12
    y0, _ = base.evaluate(x[keep])
    y1, _ = m.evaluate(x[keep])
    assert np.allclose(y0, y1, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["doubling", "tent", "lueroth", "lorenz"]), st.integers(0, 2 ** 31))
def test_inverse_round_trip(family, seed):
    m = map_from_config({"family": family, "beta": 0.5, "i_max": 12})
    rng = np.random.default_rng(seed)
    for b in m.branches:
        y = b.image.lo + b.image.length * rng.uniform(0.001, 0.999, 100)
        assert np.max(np.abs(b.forward(b.inverse(y)) - y)) <= 1e-10


@pytest.mark.parametrize("fmap", [make_doubling_map(), make_tent_map(), make_lueroth_map(20),
                                  make_lorenz_map(1.0, 0.5, 10)])
def test_partition_disjoint_and_covering(fmap):
    lo = np.array(sorted(b.domain.lo for b in fmap.branches))
    hi = np.array(sorted(b.domain.hi for b in fmap.branches))
    assert np.all(lo[1:] >= hi[:-1] - 1e-15)
    gaps = fmap.omega.length - np.sum(hi - lo)
    assert gaps <= fmap.tail_mass + 1e-12


def test_overlapping_domains_rejected():
    with pytest.raises(ParameterError):
        make_explicit_map([0, 1], [dict(lo=0, hi=0.6, slope=2, intercept=0),
                                   dict(lo=0.5, hi=1, slope=2, intercept=-1)])


def test_gap_without_tail_rejected():
    with pytest.raises(ParameterError):
        make_explicit_map([0, 1], [dict(lo=0, hi=0.4, slope=2, intercept=0),
                                   dict(lo=0.5, hi=1, slope=2, intercept=-1)])


def test_config_round_trip():
    m = slope3_map()
    again = map_from_config(m.to_config())
    x = np.array([0.1, 0.4, 0.9])
    assert np.allclose(m.evaluate(x)[0], again.evaluate(x)[0])
    with pytest.raises(ParameterError):
        map_from_config({"family": "bogus"})


def test_interval_validation():
    with pytest.raises(ParameterError):
        Interval(1.0, 0.0)
    with pytest.raises(ParameterError):
        PiecewiseMap(Interval(0, 1), [])
