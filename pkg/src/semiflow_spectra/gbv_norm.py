"""Oscillation seminorm and generalized-bounded-variation norm on grid functions.

A :class:`GridFunction` represents a function that is constant on each of
``n`` equal cells of ``omega``. For that class every quantity below is
evaluated exactly (up to rounding): essential suprema are maxima over cells,
and the integral over ``x`` of ``osc(h; B_eps(x))`` is integrated cell by cell
over the sub-cell positions where the ball covers a fixed set of cells.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from .errors import ParameterError, ResolutionError
from .interval_maps import Interval, PiecewiseMap

__all__ = ["GridFunction", "GbvParams", "osc", "seminorm", "gbv_norm",
           "default_eps0", "window_diameters"]


@dataclass(frozen=True)
class GridFunction:
    omega: Interval
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or v.size < 2:
            raise ParameterError("a grid function needs at least 2 cells")
        if not np.all(np.isfinite(v)):
            raise ParameterError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, omega: Interval, n: int, func: Callable) -> "GridFunction":
        g = cls(omega, np.zeros(n))
        return cls(omega, np.asarray(func(g.midpoints)))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def width(self) -> float:
        return self.omega.length / self.n

    @property
    def edges(self) -> np.ndarray:
        return self.omega.lo + self.width * np.arange(self.n + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.omega.lo + self.width * (np.arange(self.n) + 0.5)

    def l1(self) -> float:
        return float(np.sum(np.abs(self.values)) * self.width)

    def integral(self) -> complex:
        return complex(np.sum(self.values) * self.width)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def cell_of(self, x) -> np.ndarray:
        k = np.floor((np.asarray(x, dtype=float) - self.omega.lo) / self.width).astype(np.int64)
        return np.clip(k, 0, self.n - 1)

    def __call__(self, x) -> np.ndarray:
        return self.values[self.cell_of(x)]

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.omega, np.asarray(values))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell_index", "midpoint", "re", "im"])
            vals = self.values.astype(complex)
            for k, (x, v) in enumerate(zip(self.midpoints, vals)):
                w.writerow([k, repr(float(x)), repr(float(v.real)), repr(float(v.imag))])

    @classmethod
    def from_csv(cls, path, omega: Interval) -> "GridFunction":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        vals = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
        if np.all(vals.imag == 0):
            vals = vals.real
        return cls(omega, vals)


@dataclass(frozen=True)
class GbvParams:
    alpha: float
    eps0: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.eps0 > 0:
            raise ParameterError(f"eps0 must be positive, got {self.eps0}")

    def check(self, omega: Interval) -> None:
        if not self.eps0 < omega.length / 2:
            raise ParameterError("eps0 must be smaller than |omega|/2")


def default_eps0(fmap: PiecewiseMap) -> float:
    smallest = min(b.image.length for b in fmap.branches)
    return min(0.1 * fmap.omega.length, smallest / 4)


def _diameter(values: np.ndarray) -> float:
    v = np.unique(np.asarray(values))
    if v.size < 2:
        return 0.0
    if np.isrealobj(v):
        return float(v[-1] - v[0])
    best = 0.0
    for start in range(0, v.size, 1024):
        block = v[start:start + 1024]
        best = max(best, float(np.max(np.abs(block[:, None] - v[None, :]))))
    return best


def osc(h: GridFunction, s: Interval) -> float:
    """Diameter of the values of ``h`` on the cells meeting ``s`` in positive measure."""
    lo = max(s.lo, h.omega.lo)
    hi = min(s.hi, h.omega.hi)
    if not lo < hi:
        return 0.0
    first = int(math.floor((lo - h.omega.lo) / h.width))
    last = int(math.ceil((hi - h.omega.lo) / h.width)) - 1
    first, last = max(first, 0), min(last, h.n - 1)
    if last <= first:
        return 0.0
    return _diameter(h.values[first:last + 1])


def window_diameters(values: np.ndarray, max_len: int) -> np.ndarray:
    """``D[L, a]`` = diameter of ``values[a:a+L]`` for ``L <= max_len``.

    Uses ``D[L, a] = max(D[L-1, a], D[L-1, a+1], |v[a] - v[a+L-1]|)``, which is
    exact because every pair in a window either spans its two ends or lies in
    one of the two shorter windows. Entries with ``a + L > n`` are unused.
    """
    v = np.asarray(values)
    n = v.size
    max_len = min(max_len, n)
    D = np.zeros((max_len + 1, n))
    for L in range(2, max_len + 1):
        m = n - L + 1
        D[L, :m] = np.maximum(np.maximum(D[L - 1, :m], D[L - 1, 1:m + 1]),
                              np.abs(v[:m] - v[L - 1:]))
    return D


def _osc_integral(D: np.ndarray, n: int, width: float, eps: float) -> float:
    """``int_Omega osc(h; B_eps(x) cap Omega) dx`` for the piecewise-constant h."""
    e = eps / width
    m = int(math.floor(e))
    phi = e - m
    i = np.arange(n)

    def win(a_off, b_off):
        a = np.clip(i + a_off, 0, n - 1)
        b = np.clip(i + b_off, 0, n - 1)
        return D[b - a + 1, a]

    w1 = win(-m - 1, m)
    w3 = win(-m, m + 1)
    if phi <= 0.5:
        per_cell = phi * (w1 + w3) + (1 - 2 * phi) * win(-m, m)
    else:
        per_cell = (1 - phi) * (w1 + w3) + (2 * phi - 1) * win(-m - 1, m + 1)
    return float(np.sum(per_cell) * width)


def _eps_candidates(eps0: float, width: float) -> np.ndarray:
    # the integral is piecewise linear in eps with kinks at multiples of
    # width/2, and eps^-alpha * (A + B eps) has no interior maximum on a piece
    k = np.arange(1, int(math.ceil(2 * eps0 / width)))
    eps = k * width / 2
    return np.concatenate([eps[eps < eps0], [eps0]])


def seminorm(h: GridFunction, p: GbvParams, *, return_argmax: bool = False
             ) -> Union[float, Tuple[float, float]]:
    """``sup_{0<eps<=eps0} eps^-alpha int osc(h; B_eps(x) cap Omega) dx``."""
    if p.eps0 < 4 * h.width:
        raise ResolutionError(f"eps0={p.eps0} spans fewer than 4 cells of width {h.width:.3g}")
    eps_list = _eps_candidates(p.eps0, h.width)
    max_len = 2 * int(math.floor(p.eps0 / h.width)) + 3
    D = window_diameters(h.values, max_len)
    best, arg = 0.0, float(p.eps0)
    for eps in eps_list:
        val = eps ** (-p.alpha) * _osc_integral(D, h.n, h.width, float(eps))
        if val > best:
            best, arg = val, float(eps)
    return (best, arg) if return_argmax else best


def gbv_norm(h: GridFunction, p: GbvParams) -> float:
    return seminorm(h, p) + h.l1()
