"""Piecewise expanding interval maps with finite or countable branch families.

A countable family is stored as a finite list of branches plus a
:class:`TailDescriptor` that knows the remaining branches in closed form, so
that every sum over the tail is a geometric series rather than a sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._numerics import refined_sup
from .errors import (NonExpandingBranchError, OutsideDomainError,
                     OutsideImageError, ParameterError)

__all__ = [
    "Interval", "Branch", "TailDescriptor", "PiecewiseMap",
    "affine_branch", "power_branch", "generic_branch",
    "evaluate_map", "inverse_branch", "branch_contraction",
    "make_doubling_map", "make_tent_map", "make_lueroth_map",
    "make_lorenz_map", "make_explicit_map", "refine_partition",
    "map_from_config",
]


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ParameterError(f"interval endpoints must be finite, got ({self.lo}, {self.hi})")
        if not self.lo < self.hi:
            raise ParameterError(f"empty interval ({self.lo}, {self.hi})")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x)
        return (x > self.lo) & (x < self.hi)

    def as_tuple(self) -> Tuple[float, float]:
        return (self.lo, self.hi)


@dataclass(frozen=True)
class Branch:
    """One monotone branch ``f_i : domain -> image``.

    ``kind`` is ``"affine"``, ``"power"`` or ``"generic"``; affine and power
    branches carry their coefficients so that suprema and quadratures can use
    closed forms.
    """

    domain: Interval
    forward: Callable
    derivative: Callable
    inverse: Callable
    image: Interval
    contraction: float
    kind: str = "generic"
    coeffs: Tuple[float, ...] = ()
    family_index: Optional[int] = None
    meta: Dict[str, float] = field(default_factory=dict, compare=False)

    @property
    def increasing(self) -> bool:
        return bool(self.forward(np.array([self.domain.hi - 0.25 * self.domain.length]))[0]
                    > self.forward(np.array([self.domain.lo + 0.25 * self.domain.length]))[0])

    def restrict(self, lo: float, hi: float) -> "Branch":
        """Same dynamics on the sub-interval (lo, hi)."""
        if self.kind == "affine":
            return affine_branch(lo, hi, *self.coeffs, family_index=self.family_index)
        if self.kind == "power":
            return power_branch(lo, hi, self.coeffs[0], family_index=self.family_index)
        return generic_branch(lo, hi, self.forward, self.derivative, self.inverse,
                              family_index=self.family_index)


def affine_branch(lo: float, hi: float, slope: float, intercept: float,
                  family_index: Optional[int] = None) -> Branch:
    if slope == 0:
        raise NonExpandingBranchError(f"zero slope on ({lo}, {hi})")
    a, b = float(slope), float(intercept)
    y0, y1 = a * lo + b, a * hi + b
    return Branch(
        domain=Interval(lo, hi),
        forward=lambda x: a * np.asarray(x, dtype=float) + b,
        derivative=lambda x: np.full(np.shape(x), a),
        inverse=lambda y: (np.asarray(y, dtype=float) - b) / a,
        image=Interval(min(y0, y1), max(y0, y1)),
        contraction=1.0 / abs(a),
        kind="affine",
        coeffs=(a, b),
        family_index=family_index,
    )


def power_branch(lo: float, hi: float, beta: float,
                 family_index: Optional[int] = None) -> Branch:
    """``x -> x**beta`` on (lo, hi) with 0 <= lo, beta in (0, 1)."""
    beta = float(beta)
    meta = {}
    if family_index is not None:
        # the per-branch estimate without the 1/beta prefactor, kept for reports
        meta["unscaled_contraction"] = math.exp(-family_index * (1.0 - beta))
    return Branch(
        domain=Interval(lo, hi),
        forward=lambda x: np.asarray(x, dtype=float) ** beta,
        derivative=lambda x: beta * np.asarray(x, dtype=float) ** (beta - 1.0),
        inverse=lambda y: np.asarray(y, dtype=float) ** (1.0 / beta),
        image=Interval(lo ** beta, hi ** beta),
        # 1/f' = x^(1-beta)/beta is increasing, so the sup sits at hi
        contraction=hi ** (1.0 - beta) / beta,
        kind="power",
        coeffs=(beta,),
        family_index=family_index,
        meta=meta,
    )


def generic_branch(lo: float, hi: float, forward: Callable, derivative: Callable,
                   inverse: Callable, family_index: Optional[int] = None) -> Branch:
    fwd = lambda x: np.asarray(forward(np.asarray(x, dtype=float)), dtype=float)  # noqa: E731
    der = lambda x: np.asarray(derivative(np.asarray(x, dtype=float)), dtype=float)  # noqa: E731
    inv = lambda y: np.asarray(inverse(np.asarray(y, dtype=float)), dtype=float)  # noqa: E731
    t = lo + (hi - lo) * (np.arange(1024) + 0.5) / 1024
    d = der(t)
    if np.any(d == 0) or not (np.all(d > 0) or np.all(d < 0)):
        raise NonExpandingBranchError(f"derivative vanishes or changes sign on ({lo}, {hi})")
    with np.errstate(divide="ignore"):
        sup = refined_sup(lambda x: 1.0 / np.abs(der(x)), lo, hi)
    # a grid never lands exactly on a zero of f', but the refined sup blows up
    if not math.isfinite(sup) or sup > 1e10:
        raise NonExpandingBranchError(f"derivative vanishes on ({lo}, {hi})")
    y0, y1 = float(fwd(np.array([lo]))[0]), float(fwd(np.array([hi]))[0])
    return Branch(
        domain=Interval(lo, hi), forward=fwd, derivative=der, inverse=inv,
        image=Interval(min(y0, y1), max(y0, y1)), contraction=sup,
        kind="generic", family_index=family_index,
    )


@dataclass(frozen=True)
class TailDescriptor:
    """Closed-form description of branches ``i >= i_start`` of a countable family.

    Supported families:

    ``lorenz_geometric``
        ``omega_i = (e^{-(i+1)}, e^{-i})``, ``f(x) = x**beta``.
    ``lueroth_geometric``
        ``omega_i = (2^{-i}, 2^{-i+1})``, ``f(x) = 2^i x - 1``.

    Per-branch contraction, mass and endpoint logarithms are all of the form
    ``A * q**i`` (or affine in ``i`` after taking logs), which is what makes
    :meth:`series` a closed form.
    """

    family: str
    params: Tuple[float, ...]
    i_start: int
    tail_sum_bound: float = field(init=False)

    def __post_init__(self):
        if self.family not in ("lorenz_geometric", "lueroth_geometric"):
            raise ParameterError(f"unknown tail family {self.family!r}")
        object.__setattr__(self, "tail_sum_bound", self.series(1.0))

    # log contraction_i = c0 + c1*i ; log mass_i = m0 + m1*i ;
    # log lo_i = l0 + l1*i ; log hi_i = h0 + h1*i
    @property
    def _forms(self):
        if self.family == "lorenz_geometric":
            beta = self.params[1]
            return dict(c=(-math.log(beta), -(1.0 - beta)),
                        m=(math.log1p(-math.exp(-1.0)), -1.0),
                        lo=(-1.0, -1.0), hi=(0.0, -1.0))
        ln2 = math.log(2.0)
        return dict(c=(0.0, -ln2), m=(0.0, -ln2), lo=(0.0, -ln2), hi=(ln2, -ln2))

    @property
    def log_lo_form(self) -> Tuple[float, float]:
        return self._forms["lo"]

    @property
    def log_hi_form(self) -> Tuple[float, float]:
        return self._forms["hi"]

    @property
    def region(self) -> Interval:
        h0, h1 = self._forms["hi"]
        return Interval(0.0, math.exp(h0 + h1 * self.i_start))

    def contraction(self, i: int) -> float:
        c0, c1 = self._forms["c"]
        return math.exp(c0 + c1 * i)

    def mass(self, i: int) -> float:
        m0, m1 = self._forms["m"]
        return math.exp(m0 + m1 * i)

    def _geometric(self, log_a: float, rate: float) -> float:
        if rate >= 0:
            return math.inf
        return math.exp(log_a + rate * self.i_start) / (-math.expm1(rate))

    def series(self, power: float = 1.0, a: float = 0.0, b: float = 0.0) -> float:
        """``sum_{i >= i_start} contraction_i**power * exp(a + b*i)``."""
        c0, c1 = self._forms["c"]
        return self._geometric(power * c0 + a, power * c1 + b)

    def sup_term(self, power: float = 1.0, a: float = 0.0, b: float = 0.0) -> float:
        """``sup_{i >= i_start} contraction_i**power * exp(a + b*i)``."""
        c0, c1 = self._forms["c"]
        rate = power * c1 + b
        if rate > 0:
            return math.inf
        return math.exp(power * c0 + a + rate * self.i_start)

    def mass_series(self, a: float = 0.0, b: float = 0.0) -> float:
        """``sum_{i >= i_start} |omega_i| * exp(a + b*i)``."""
        m0, m1 = self._forms["m"]
        return self._geometric(m0 + a, m1 + b)

    def index_of(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            if self.family == "lorenz_geometric":
                return np.floor(-np.log(x)).astype(np.int64)
            return np.floor(-np.log2(x)).astype(np.int64) + 1

    def on_boundary(self, x: np.ndarray, i: np.ndarray) -> np.ndarray:
        lo = np.exp(self.log_lo_form[0] + self.log_lo_form[1] * i)
        hi = np.exp(self.log_hi_form[0] + self.log_hi_form[1] * i)
        return (x <= lo) | (x >= hi)

    def branch(self, i: int) -> Branch:
        return _tail_branch(self.family, self.params, int(i))


@lru_cache(maxsize=4096)
def _tail_branch(family: str, params: Tuple[float, ...], i: int) -> Branch:
    if family == "lorenz_geometric":
        return power_branch(math.exp(-(i + 1)), math.exp(-i), params[1], family_index=i)
    return affine_branch(2.0 ** -i, 2.0 ** (-i + 1), 2.0 ** i, -1.0, family_index=i)


class PiecewiseMap:
    """Map on ``omega`` given by an ordered list of branches plus optional tail.

    Branch ids are list positions; tail branch ``i`` gets id
    ``len(branches) + (i - tail.i_start)``. Partition endpoints are excluded
    points: strict queries there raise :class:`OutsideDomainError`.
    """

    def __init__(self, omega: Interval, branches: Sequence[Branch],
                 tail: Optional[TailDescriptor] = None, name: str = "explicit",
                 params: Optional[dict] = None):
        self.omega = omega
        self.branches: Tuple[Branch, ...] = tuple(branches)
        self.tail = tail
        self.name = name
        self.params = dict(params or {})
        if not self.branches:
            raise ParameterError("a map needs at least one branch")
        order = np.argsort([b.domain.lo for b in self.branches], kind="stable")
        self._order = order
        self._los = np.array([self.branches[k].domain.lo for k in order])
        self._his = np.array([self.branches[k].domain.hi for k in order])
        if np.any(self._los[1:] < self._his[:-1] - 1e-15):
            raise ParameterError("branch domains overlap")
        tol = 1e-12 * max(1.0, omega.length)
        for b in self.branches:
            if b.domain.lo < omega.lo - tol or b.domain.hi > omega.hi + tol:
                raise ParameterError(f"branch domain {b.domain.as_tuple()} leaves omega")
            if b.image.lo < omega.lo - tol or b.image.hi > omega.hi + tol:
                raise ParameterError(f"branch image {b.image.as_tuple()} leaves omega")
        gaps = omega.length - float(np.sum(self._his - self._los))
        if gaps > self.tail_mass + 1e-12:
            raise ParameterError(f"branches leave a gap of {gaps:.3g} not covered by a tail")

    def __repr__(self):
        tail = f", tail from i={self.tail.i_start}" if self.tail else ""
        return f"PiecewiseMap({self.name}, {len(self.branches)} branches{tail})"

    @property
    def n_listed(self) -> int:
        return len(self.branches)

    @property
    def tail_mass(self) -> float:
        return self.tail.region.length if self.tail is not None else 0.0

    def branch(self, branch_id: int) -> Branch:
        if 0 <= branch_id < self.n_listed:
            return self.branches[branch_id]
        if self.tail is not None and branch_id >= self.n_listed:
            return self.tail.branch(self.tail.i_start + branch_id - self.n_listed)
        raise ParameterError(f"no branch with id {branch_id}")

    def sorted_breakpoints(self) -> np.ndarray:
        return np.unique(np.concatenate([self._los, self._his]))

    def locate(self, x, strict: bool = True) -> np.ndarray:
        """Branch ids for the points ``x`` (vectorized).

        With ``strict=False`` a point on a partition endpoint is assigned to a
        branch whose closure contains it; this is only meant for quadrature,
        where endpoints are a null set.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        pos = np.searchsorted(self._los, x, side="right") - 1
        posc = np.clip(pos, 0, len(self._los) - 1)
        if strict:
            ok = (pos >= 0) & (x > self._los[posc]) & (x < self._his[posc])
        else:
            ok = (pos >= 0) & (x <= self._his[posc])
        ids = np.where(ok, self._order[posc], -1)
        if self.tail is not None:
            reg = self.tail.region
            in_tail = ~ok & (x > reg.lo) & (x < reg.hi)
            if np.any(in_tail):
                i = self.tail.index_of(x[in_tail])
                if strict:
                    bad = self.tail.on_boundary(x[in_tail], i)
                    i = np.where(bad, -1, i)
                tid = np.where(i >= 0, self.n_listed + (i - self.tail.i_start), -1)
                ids[in_tail] = tid
        if np.any(ids < 0):
            bad = x[ids < 0][0]
            raise OutsideDomainError(f"x={bad!r} is a partition endpoint or outside all branch domains")
        return ids

    def _apply(self, x: np.ndarray, ids: np.ndarray, attr: str) -> np.ndarray:
        out = np.empty_like(x)
        for bid in np.unique(ids):
            sel = ids == bid
            out[sel] = getattr(self.branch(int(bid)), attr)(x[sel])
        return out

    def evaluate(self, x, strict: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ids = self.locate(x, strict=strict)
        return self._apply(x, ids, "forward"), ids

    def step(self, x, strict: bool = True):
        """Image, branch ids and derivative in one pass."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ids = self.locate(x, strict=strict)
        return self._apply(x, ids, "forward"), ids, self._apply(x, ids, "derivative")

    def contractions(self) -> np.ndarray:
        return np.array([b.contraction for b in self.branches])

    def sup_contraction(self) -> float:
        """``sup_Omega 1/|f'|`` including the tail."""
        s = float(np.max(self.contractions()))
        if self.tail is not None:
            s = max(s, self.tail.sup_term(1.0))
        return s

    def materialized(self, extra: int) -> List[Branch]:
        """Listed branches followed by the first ``extra`` tail branches."""
        out = list(self.branches)
        if self.tail is not None:
            out += [self.tail.branch(self.tail.i_start + k) for k in range(extra)]
        return out

    def to_config(self) -> dict:
        cfg = {"family": self.name}
        cfg.update(self.params)
        if self.name == "explicit":
            cfg["omega"] = list(self.omega.as_tuple())
            cfg["branches"] = [dict(lo=b.domain.lo, hi=b.domain.hi, slope=b.coeffs[0],
                                    intercept=b.coeffs[1]) for b in self.branches]
        return cfg


def evaluate_map(fmap: PiecewiseMap, x: float) -> Tuple[float, int]:
    if not fmap.omega.contains(x):
        raise OutsideDomainError(f"x={x!r} outside omega")
    y, ids = fmap.evaluate(np.array([x]))
    return float(y[0]), int(ids[0])


def inverse_branch(fmap: PiecewiseMap, branch_id: int, y: float) -> float:
    b = fmap.branch(branch_id)
    if not b.image.contains(y):
        raise OutsideImageError(f"y={y!r} not in image {b.image.as_tuple()} of branch {branch_id}")
    x = float(b.inverse(np.array([y]))[0])
    # polish non-closed-form inverses to the residual tolerance
    if b.kind == "generic":
        for _ in range(8):
            r = float(b.forward(np.array([x]))[0]) - y
            if abs(r) <= 1e-14:
                break
            x -= r / float(b.derivative(np.array([x]))[0])
    return x


def branch_contraction(fmap: PiecewiseMap, branch_id: int) -> float:
    b = fmap.branch(branch_id)
    if not (math.isfinite(b.contraction) and b.contraction > 0):
        raise NonExpandingBranchError(f"branch {branch_id}")
    return b.contraction


def make_doubling_map() -> PiecewiseMap:
    return PiecewiseMap(Interval(0.0, 1.0),
                        [affine_branch(0.0, 0.5, 2.0, 0.0), affine_branch(0.5, 1.0, 2.0, -1.0)],
                        name="doubling")


def make_tent_map() -> PiecewiseMap:
    return PiecewiseMap(Interval(0.0, 1.0),
                        [affine_branch(0.0, 0.5, 2.0, 0.0), affine_branch(0.5, 1.0, -2.0, 2.0)],
                        name="tent")


def make_lueroth_map(i_max: int = 40) -> PiecewiseMap:
    """Branch ``i`` maps (2^-i, 2^-i+1) affinely onto (0, 1), i = 1..i_max."""
    if i_max < 1:
        raise ParameterError("i_max must be >= 1")
    branches = [affine_branch(2.0 ** -i, 2.0 ** (-i + 1), 2.0 ** i, -1.0, family_index=i)
                for i in range(1, i_max + 1)]
    tail = TailDescriptor("lueroth_geometric", (), i_max + 1)
    return PiecewiseMap(Interval(0.0, 1.0), branches, tail, name="lueroth",
                        params={"i_max": i_max})


def make_lorenz_map(lam: float, beta: float, i_max: int) -> PiecewiseMap:
    """``f(x) = x**beta`` on (0, 1) cut at ``e^{-i}``; branch id ``i`` is omega_i."""
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    if not 0 < beta < 1:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")
    if i_max < 1:
        raise ParameterError("i_max must be >= 1")
    branches = [power_branch(math.exp(-(i + 1)), math.exp(-i), beta, family_index=i)
                for i in range(i_max)]
    tail = TailDescriptor("lorenz_geometric", (float(lam), float(beta)), i_max)
    return PiecewiseMap(Interval(0.0, 1.0), branches, tail, name="lorenz",
                        params={"lambda": lam, "beta": beta, "i_max": i_max})


def make_explicit_map(omega: Sequence[float], branches: Sequence[dict]) -> PiecewiseMap:
    """Piecewise-affine map from ``{"lo", "hi", "slope", "intercept"}`` records."""
    bs = [affine_branch(float(b["lo"]), float(b["hi"]), float(b["slope"]), float(b["intercept"]))
          for b in branches]
    return PiecewiseMap(Interval(float(omega[0]), float(omega[1])), bs, name="explicit")


def refine_partition(fmap: PiecewiseMap, eps0: float, gamma: float) -> PiecewiseMap:
    """Chop every listed branch whose image is longer than ``2*eps0*gamma``.

    Each chopped branch is split into pieces of equal image length in
    ``[eps0*gamma, 2*eps0*gamma]``. Tail branches are left alone.
    """
    if not eps0 > 0:
        raise ParameterError("eps0 must be positive")
    if not gamma > 2:
        raise ParameterError("gamma must exceed 2")
    target = eps0 * gamma
    out: List[Branch] = []
    for b in fmap.branches:
        L = b.image.length
        if L <= 2 * target:
            out.append(b)
            continue
        k = math.ceil(L / (2 * target))
        ys = b.image.lo + L * np.arange(k + 1) / k
        ys[-1] = b.image.hi
        xs = np.empty(k + 1)
        xs[1:-1] = b.inverse(ys[1:-1])
        if b.increasing:
            xs[0], xs[-1] = b.domain.lo, b.domain.hi
        else:
            xs[0], xs[-1] = b.domain.hi, b.domain.lo
        xs = np.sort(xs)
        out.extend(b.restrict(float(xs[j]), float(xs[j + 1])) for j in range(k))
    return PiecewiseMap(fmap.omega, out, fmap.tail, name=fmap.name, params=fmap.params)


def map_from_config(cfg: dict) -> PiecewiseMap:
    family = cfg.get("family")
    if family == "doubling":
        return make_doubling_map()
    if family == "tent":
        return make_tent_map()
    if family == "lueroth":
        return make_lueroth_map(int(cfg.get("i_max", 40)))
    if family == "lorenz":
        return make_lorenz_map(float(cfg.get("lambda", 1.0)), float(cfg["beta"]),
                               int(cfg.get("i_max", 10)))
    if family == "explicit":
        return make_explicit_map(cfg["omega"], cfg["branches"])
    raise ParameterError(f"map.family: unknown family {family!r}")
