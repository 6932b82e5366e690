import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semiflow_spectra.errors import ParameterError, ResolutionError
from semiflow_spectra.gbv_norm import (GbvParams, GridFunction, default_eps0, gbv_norm, osc,
                                       seminorm, window_diameters)
from semiflow_spectra.interval_maps import Interval, make_doubling_map, make_lueroth_map

UNIT = Interval(0.0, 1.0)


def random_step(rng, n, jumps=8, complex_values=False):
    cuts = np.sort(rng.random(jumps))
    vals = rng.normal(size=jumps + 1)
    if complex_values:
        vals = vals + 1j * rng.normal(size=jumps + 1)
    x = (np.arange(n) + 0.5) / n
    return GridFunction(UNIT, vals[np.searchsorted(cuts, x)])


def brute_seminorm(h, alpha, eps0, n_x=4000, n_eps=60):
    """Fine-grid evaluation straight from the definition."""
    xs = (np.arange(n_x) + 0.5) / n_x
    best = 0.0
    for eps in np.linspace(eps0 / n_eps, eps0, n_eps):
        total = sum(osc(h, Interval(x - eps, x + eps)) for x in xs) / n_x
        best = max(best, eps ** -alpha * total)
    return best


def test_osc_examples():
    n = 1000
    g = GridFunction.from_function(UNIT, n, lambda x: np.full_like(x, 4.2))
    assert osc(g, Interval(0.1, 0.7)) == 0.0
    ind = GridFunction.from_function(UNIT, n, lambda x: (x < 0.5).astype(float))
    assert osc(ind, Interval(0.4, 0.6)) == 1.0
    ident = GridFunction.from_function(UNIT, n, lambda x: x)
    assert osc(ident, Interval(0.2, 0.4)) == pytest.approx(0.2, abs=1.0 / n + 1e-12)


def test_seminorm_closed_forms():
    n = 4096
    p = GbvParams(0.5, 0.1)
    ind = GridFunction.from_function(UNIT, n, lambda x: (x < 0.5).astype(float))
    assert seminorm(ind, p) == pytest.approx(2 * math.sqrt(0.1), abs=2.0 / n)
    ident = GridFunction.from_function(UNIT, n, lambda x: x)
    assert seminorm(ident, p) == pytest.approx(math.sqrt(0.1) * 1.9, abs=2.0 / n)
    const = GridFunction.from_function(UNIT, n, lambda x: np.ones_like(x))
    assert seminorm(const, p) == 0.0
    assert gbv_norm(const, p) == pytest.approx(1.0)
    assert gbv_norm(ind, p) == pytest.approx(2 * math.sqrt(0.1) + 0.5, abs=2.0 / n)
    assert gbv_norm(const.with_values(np.zeros(n)), p) == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_seminorm_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    h = random_step(rng, 64, jumps=5)
    p = GbvParams(0.5, 0.15)
    exact = seminorm(h, p)
    brute = brute_seminorm(h, 0.5, 0.15)
    # the brute force samples the same sup on a coarser set, so it can only be lower
    assert brute <= exact + 1e-12
    assert brute == pytest.approx(exact, rel=0.03)


def test_window_diameters_against_direct():
    rng = np.random.default_rng(3)
    v = rng.normal(size=40)
    D = window_diameters(v, 10)
    for L in range(1, 11):
        for a in range(0, 40 - L + 1):
            assert D[L, a] == pytest.approx(np.ptp(v[a:a + L]))


def test_resolution_error():
    h = GridFunction.from_function(UNIT, 16, lambda x: x)
    with pytest.raises(ResolutionError):
        seminorm(h, GbvParams(0.5, 0.1))


def test_params_validation():
    with pytest.raises(ParameterError):
        GbvParams(1.5, 0.1)
    with pytest.raises(ParameterError):
        GbvParams(0.5, 0.6).check(UNIT)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.complex_numbers(min_magnitude=0.1, max_magnitude=10,
                                                   allow_nan=False, allow_infinity=False))
def test_homogeneity(seed, c):
    h = random_step(np.random.default_rng(seed), 256, complex_values=True)
    p = GbvParams(0.4, 0.1)
    assert seminorm(h.with_values(c * h.values), p) == pytest.approx(abs(c) * seminorm(h, p),
                                                                     rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    h1 = random_step(rng, 256, complex_values=True)
    h2 = random_step(rng, 256, complex_values=True)
    p = GbvParams(0.5, 0.1)
    lhs = seminorm(h1.with_values(h1.values + h2.values), p)
    assert lhs <= seminorm(h1, p) + seminorm(h2, p) + 1e-10


def test_monotone_in_eps0():
    rng = np.random.default_rng(7)
    for _ in range(20):
        h = random_step(rng, 512, jumps=int(rng.integers(1, 20)))
        vals = [seminorm(h, GbvParams(0.5, e)) for e in (0.02, 0.05, 0.1, 0.2)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_sup_norm_control():
    rng = np.random.default_rng(11)
    alpha, eps0 = 0.5, 0.1
    p = GbvParams(alpha, eps0)
    for _ in range(20):
        h = random_step(rng, 512, jumps=int(rng.integers(1, 30)))
        bound = eps0 ** -(1 - alpha) * seminorm(h, p) + h.l1()
        slack = np.max(np.abs(np.diff(h.values)))
        assert h.sup() <= bound + slack + 1e-12


def test_default_eps0():
    assert default_eps0(make_doubling_map()) == pytest.approx(0.1)
    assert default_eps0(make_lueroth_map(10)) == pytest.approx(0.1)


def test_csv_round_trip(tmp_path):
    h = random_step(np.random.default_rng(5), 32, complex_values=True)
    h.to_csv(tmp_path / "h.csv")
    back = GridFunction.from_csv(tmp_path / "h.csv", UNIT)
    assert np.array_equal(back.values, h.values)
