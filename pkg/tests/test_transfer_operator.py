import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from semiflow_spectra.errors import (NonUniqueAcimWarning, NoConvergenceError,
                                     ParameterError, ResolutionError)
from semiflow_spectra.gbv_norm import GbvParams, GridFunction, osc
from semiflow_spectra.interval_maps import (Interval, generic_branch, make_doubling_map,
                                            make_explicit_map, make_lorenz_map,
                                            make_lueroth_map, make_tent_map, PiecewiseMap)
from semiflow_spectra.return_time import ReturnTime
from semiflow_spectra.transfer_operator import (OperatorMatrix, Weight, apply_transfer,
                                                invariant_density, lambda_bound,
                                                spectrum_to_csv, spectrum_topk, ulam_matrix,
                                                verify_ly)

UNIT = Interval(0.0, 1.0)


def quadratic_map():
    """Nonlinear full left branch 4x(1-x), affine right branch."""
    left = generic_branch(0.0, 0.5, lambda x: 4 * x * (1 - x),
                          lambda x: 4 - 8 * x, lambda y: (1 - np.sqrt(1 - y)) / 2)
    right = generic_branch(0.5, 1.0, lambda x: 2 * x - 1, lambda x: np.full_like(x, 2.0),
                           lambda y: (y + 1) / 2)
    return PiecewiseMap(UNIT, [left, right], name="quadratic")


def test_doubling_two_cells():
    m = ulam_matrix(make_doubling_map(), Weight.unit(), 2)
    assert np.allclose(m.dense(), 0.5, atol=1e-15)


def test_zero_weight_gives_zero_matrix():
    w = Weight.explicit(lambda x: np.zeros_like(x))
    m = ulam_matrix(make_doubling_map(), w, 16)
    assert np.all(m.dense() == 0)
    assert lambda_bound(make_doubling_map(), w, 0.5) == 0.0


def test_doubling_preserves_constants():
    m = ulam_matrix(make_doubling_map(), Weight.unit(), 64)
    assert np.max(np.abs(m @ np.ones(64) - 1)) <= 1e-14


def test_ulam_entries_against_binning():
    # independent oracle: push a fine uniform sample through the map and bin it
    fmap = quadratic_map()
    tau = ReturnTime.explicit(lambda x: 1.0 + np.sin(3 * x) ** 2)
    z = 0.3 - 0.7j
    n = 16
    m = ulam_matrix(fmap, Weight.twisted(z, tau), n).dense()
    N = 400_000
    y = (np.arange(N) + 0.5) / N
    fy, _ = fmap.evaluate(y, strict=False)
    src = np.minimum((y * n).astype(int), n - 1)
    tgt = np.minimum((fy * n).astype(int), n - 1)
    ref = np.zeros((n, n), dtype=complex)
    np.add.at(ref, (tgt, src), np.exp(-z * tau(y)) / N * n)
    assert np.max(np.abs(m - ref)) < 5e-4


def test_resolution_error_for_short_image():
    with pytest.raises(ParameterError):
        ulam_matrix(make_lueroth_map(5), Weight.unit(), 1)
    fmap = make_explicit_map([0, 1], [dict(lo=0, hi=0.5, slope=0.02, intercept=0.0),
                                      dict(lo=0.5, hi=1, slope=2, intercept=-1)])
    with pytest.raises(ResolutionError):
        ulam_matrix(fmap, Weight.unit(), 64)


def test_apply_transfer_examples():
    d = make_doubling_map()
    one = GridFunction.from_function(UNIT, 1000, np.ones_like)
    assert apply_transfer(d, Weight.unit(), one, 0.37) == pytest.approx(1.0)
    ident = GridFunction.from_function(UNIT, 1000, lambda x: x)
    assert apply_transfer(d, Weight.unit(), ident, 0.5).real == pytest.approx(0.5, abs=1e-3)
    w = Weight.twisted(math.log(2), ReturnTime.constant(1.0))
    assert apply_transfer(d, w, one, 0.37) == pytest.approx(0.5)


def test_apply_transfer_tail_error_bar():
    one = GridFunction.from_function(UNIT, 1000, np.ones_like)
    val, err = apply_transfer(make_lueroth_map(20), Weight.unit(), one, 0.3, return_error=True)
    assert abs(val - 1) <= err + 1e-14
    assert err < 1e-14


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.01, 0.99).filter(lambda x: abs(x - 0.5) > 1e-3),
       st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))
def test_apply_transfer_linear(seed, x, c):
    rng = np.random.default_rng(seed)
    h1 = GridFunction(UNIT, rng.normal(size=128) + 1j * rng.normal(size=128))
    h2 = GridFunction(UNIT, rng.normal(size=128))
    w = Weight.twisted(0.2 + 1j, ReturnTime.lorenz_log(1.0))
    fmap = make_tent_map()
    lhs = apply_transfer(fmap, w, h1.with_values(h1.values + c * h2.values), x)
    rhs = apply_transfer(fmap, w, h1, x) + c * apply_transfer(fmap, w, h2, x)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))


def test_duality_with_composition():
    n = 1024
    fmap = make_doubling_map()
    tau = ReturnTime.piecewise_affine([(0.0, 1.0, 1.0, 0.5)])
    z = 0.4 + 2.0j
    m = ulam_matrix(fmap, Weight.twisted(z, tau), n)
    rng = np.random.default_rng(0)
    h1 = rng.normal(size=n)
    h2 = rng.normal(size=n) + 1j * rng.normal(size=n)
    lhs = np.sum((m @ h1) * h2) / n
    # right side on half cells, where h1 and h2 o f are both constant
    from semiflow_spectra._numerics import gl_nodes
    edges = np.arange(2 * n + 1) / (2 * n)
    x, w = gl_nodes(edges[:-1], edges[1:], 8)
    mid = 0.5 * (edges[:-1] + edges[1:])
    fx = (2 * mid) % 1.0
    g1 = h1[(mid * n).astype(int)]
    g2 = h2[(fx * n).astype(int)]
    rhs = np.sum(g1 * g2 * np.sum(np.exp(-z * tau(x)) * w, axis=-1))
    assert abs(lhs - rhs) <= 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_positivity(seed):
    m = ulam_matrix(make_lorenz_map(1.0, 0.5, 8), Weight.unit(), 128)
    v = np.random.default_rng(seed).random(128)
    assert np.all((m @ v).real >= 0)


@pytest.mark.parametrize("fmap", [make_doubling_map(), make_tent_map()])
def test_density_exact_cases(fmap):
    h = invariant_density(fmap, 1024)
    assert np.max(np.abs(h.values - 1)) <= 1e-12


def test_lueroth_column_masses():
    m = ulam_matrix(make_lueroth_map(40), Weight.unit(), 4096)
    col = np.asarray(m.entries.sum(axis=0)).ravel() / 4096
    assert np.max(np.abs(col - 1 / 4096)) < 1e-10
    assert 0 <= m.truncation_bound < 1e-9


def test_non_unique_density_warns():
    fmap = make_explicit_map([0, 1], [
        dict(lo=0, hi=0.25, slope=2, intercept=0), dict(lo=0.25, hi=0.5, slope=2, intercept=-0.5),
        dict(lo=0.5, hi=0.75, slope=2, intercept=-0.5), dict(lo=0.75, hi=1, slope=2, intercept=-1)])
    with pytest.warns(NonUniqueAcimWarning):
        invariant_density(fmap, 64)


def test_no_convergence():
    with pytest.raises(NoConvergenceError):
        invariant_density(make_lorenz_map(1.0, 0.5, 10), 256, max_iter=2)


def test_unique_density_does_not_warn():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        h = invariant_density(make_tent_map(), 64)
    assert h.l1() == pytest.approx(1.0)


def test_spectrum_examples():
    zero = OperatorMatrix(8, sp.csr_matrix((8, 8), dtype=complex), UNIT)
    assert spectrum_topk(zero, 3) == [0, 0, 0]
    eye = OperatorMatrix(8, sp.identity(8, dtype=complex, format="csr"), UNIT)
    assert np.allclose(spectrum_topk(eye, 3), [1, 1, 1])
    for n in (64, 256):
        ev = spectrum_topk(ulam_matrix(make_doubling_map(), Weight.unit(), n), 2)
        assert abs(ev[0] - 1) <= 1e-12


def test_lambda_bound_doubling():
    assert lambda_bound(make_doubling_map(), Weight.unit(), 0.5) == 2 ** -0.5


def test_lambda_bound_lorenz_twisted():
    fmap = make_lorenz_map(1.0, 0.5, 10)
    w = Weight.twisted(-0.15, ReturnTime.lorenz_log(1.0))
    lam, idx = lambda_bound(fmap, w, 1 / 3, return_index=True)
    brute = [(2 * math.exp(-i / 2)) ** (1 / 3) * math.exp(0.15 * (i + 1)) for i in range(400)]
    assert lam == pytest.approx(max(brute), rel=1e-12)
    assert idx == int(np.argmax(brute)) == 0


def test_verify_ly_doubling():
    rep = verify_ly(make_doubling_map(), Weight.unit(), GbvParams(0.5, 0.1), 1.0, 30,
                    holder_trials=10, n=1024)
    assert rep.gamma_const == 34.0
    assert rep.bound_factor == pytest.approx(3 * 2 ** -0.5)
    assert rep.violations == []
    assert rep.n_checked == 41


def test_product_oscillation_estimate():
    rng = np.random.default_rng(4)
    n = 256
    for _ in range(50):
        g1 = GridFunction(UNIT, rng.normal(size=n) + 1j * rng.normal(size=n))
        g2 = GridFunction(UNIT, rng.normal(size=n))
        a, b = np.sort(rng.random(2))
        if b - a < 0.02:
            continue
        s = Interval(a, b)
        y = rng.uniform(a, b)
        prod = g1.with_values(g1.values * g2.values)
        cells = g2.values[g2.cell_of(a):g2.cell_of(b) + 1]
        rhs = abs(g1(y)) * osc(g2, s) + 2 * np.max(np.abs(cells)) * osc(g1, s)
        assert osc(prod, s) <= rhs + 1e-12


def test_exports(tmp_path):
    m = ulam_matrix(make_tent_map(), Weight.twisted(0.1 + 1j, ReturnTime.constant(1)), 8)
    m.to_csv(tmp_path / "m.csv")
    rows = (tmp_path / "m.csv").read_text().splitlines()
    assert rows[0] == "row,col,re,im" and len(rows) == 1 + m.entries.nnz
    m.to_binary(tmp_path / "m.bin")
    raw = (tmp_path / "m.bin").read_bytes()
    assert raw[:8] == b"GBVTOP01"
    assert np.array_equal(OperatorMatrix.read_binary(tmp_path / "m.bin"), m.dense())
    spectrum_to_csv(spectrum_topk(m, 3), tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith("index,re,im,modulus\n")
