"""Suspension semiflows over interval maps: the flow, the invariant measure,
correlations and fiber Laplace transforms.

The state space is ``{(x, s): x in Omega, 0 <= s < tau(x)}``. The flow moves
``s`` at unit speed and at ``s = tau(x)`` jumps to ``(f(x), 0)``. The invariant
probability is ``h0(x) dx ds / nu(tau)`` with ``h0`` the invariant density of
the base map.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np

from ._numerics import gl_nodes
from .errors import (BudgetError, OrbitSingularError, OutsideDomainError,
                     ParameterError)
from .gbv_norm import GridFunction
from .interval_maps import PiecewiseMap
from .return_time import ReturnTime
from .transfer_operator import invariant_density

__all__ = ["SuspensionSemiflow", "FlowPoint", "Observable", "Correlation", "BTermDecay",
           "flow", "birkhoff_tau", "mu_integrate", "mu_flowed", "correlation",
           "b_term_decay", "hat_transform", "hat_values", "hat_cell_averages",
           "MAX_RETURNS"]

MAX_RETURNS = 10 ** 6


@dataclass(frozen=True)
class FlowPoint:
    x: float
    s: float


@dataclass(frozen=True)
class Observable:
    """``u(x, s)`` as a vectorized closure with a declared bound on ``|u|``."""

    func: Callable = field(compare=False)
    sup_bound: float
    holder_bound: float = math.nan
    name: str = "custom"

    def __call__(self, x, s) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = np.asarray(s, dtype=float)
        return np.broadcast_to(np.asarray(self.func(x, s)), np.broadcast(x, s).shape)

    @classmethod
    def const(cls, c: complex = 1.0) -> "Observable":
        return cls(lambda x, s: np.full(np.broadcast(x, s).shape, c), abs(c), 0.0, f"const({c})")

    @classmethod
    def coordinate_x(cls) -> "Observable":
        return cls(lambda x, s: x + 0.0 * s, 1.0, 1.0, "x")

    @classmethod
    def fiber_phase(cls, k: int = 1) -> "Observable":
        """``exp(2 pi i k s)``."""
        return cls(lambda x, s: np.exp(2j * np.pi * k * (s + 0.0 * x)), 1.0,
                   2 * np.pi * abs(k), f"fiber_phase({k})")

    @classmethod
    def smooth(cls) -> "Observable":
        """A real smooth test observable, ``cos(2 pi x) + s/(1+s)``."""
        return cls(lambda x, s: np.cos(2 * np.pi * x) + s / (1.0 + s), 2.0, 2 * np.pi + 1.0,
                   "smooth")

    def conj(self) -> "Observable":
        return Observable(lambda x, s: np.conj(self(x, s)), self.sup_bound, self.holder_bound,
                          f"conj({self.name})")

    def scaled(self, c: complex) -> "Observable":
        return Observable(lambda x, s: c * self(x, s), abs(c) * self.sup_bound,
                          abs(c) * self.holder_bound, f"{c}*{self.name}")


@dataclass
class SuspensionSemiflow:
    """``(Omega, f, tau)`` together with the base invariant density.

    ``base_nodes`` selects the base quadrature: ``None`` for cell midpoints,
    ``k`` for ``k`` Gauss-Legendre nodes per cell (weighted by ``h0``).
    """

    map: PiecewiseMap
    tau: ReturnTime
    h0: GridFunction
    nu_tau: float = 0.0
    base_nodes: Optional[int] = None
    sigma: Optional[float] = None

    def __post_init__(self):
        if np.any(np.asarray(self.h0.values).real < 0):
            raise ParameterError("h0 must be nonnegative")
        x, w = self.base_rule()
        nu = float(np.sum(self.tau(x) * w))
        if self.nu_tau == 0.0:
            self.nu_tau = nu
        if not (math.isfinite(self.nu_tau) and self.nu_tau > 0):
            raise ParameterError(f"nu(tau) must be positive and finite, got {self.nu_tau}")

    @classmethod
    def build(cls, fmap: PiecewiseMap, tau: ReturnTime, n_cells: int = 2048,
              base_nodes: Optional[int] = None, sigma: Optional[float] = None
              ) -> "SuspensionSemiflow":
        h0 = invariant_density(fmap, n_cells)
        return cls(fmap, tau, h0, base_nodes=base_nodes, sigma=sigma)

    def base_rule(self):
        """Base quadrature nodes and weights (weights include ``h0``).

        When ``tau`` has a logarithmic singularity at the left end of
        ``Omega``, the first cell is replaced by geometrically graded Gauss
        panels so that thin sets ``{tau > t}`` are still resolved.
        """
        h0 = self.h0
        vals = np.asarray(h0.values).real
        edges = h0.edges
        if self.base_nodes is None:
            x, w = h0.midpoints, vals * h0.width
        else:
            xg, wg = gl_nodes(edges[:-1], edges[1:], self.base_nodes)
            x, w = xg.ravel(), (wg * vals[:, None]).ravel()
        if self.tau.family == "lorenz_log" and self.map.omega.lo == 0.0:
            k = 1 if self.base_nodes is None else self.base_nodes
            cuts = h0.width * 2.0 ** -np.arange(_GRADED_PANELS + 1)[::-1]
            cuts[0] = 0.0
            xg, wg = gl_nodes(cuts[:-1], cuts[1:], 8)
            x = np.concatenate([xg.ravel(), x[k:]])
            w = np.concatenate([wg.ravel() * vals[0], w[k:]])
        return x, w


_GRADED_PANELS = 60


def _check_point(sf: SuspensionSemiflow, p: FlowPoint) -> None:
    if not sf.map.omega.contains(p.x):
        raise OutsideDomainError(f"x={p.x!r} outside omega")
    tx = float(sf.tau(np.array([p.x]))[0])
    if not 0 <= p.s < tx:
        raise ParameterError(f"s={p.s!r} must lie in [0, tau(x)={tx!r})")


def flow(sf: SuspensionSemiflow, p: FlowPoint, t: float) -> FlowPoint:
    """Flow ``p`` forward by ``t``; reaching ``s = tau(x)`` exactly jumps to ``(f(x), 0)``."""
    if t < 0:
        raise ParameterError("only forward time is supported")
    _check_point(sf, p)
    x, s, rem = float(p.x), float(p.s), float(t)
    returns = 0
    while True:
        T = float(sf.tau(np.array([x]))[0])
        gap = T - s
        if rem < gap - 1e-12 * max(1.0, T):
            return FlowPoint(x, s + rem)
        rem = max(rem - gap, 0.0)
        returns += 1
        if returns > MAX_RETURNS:
            raise BudgetError(f"more than {MAX_RETURNS} returns requested")
        try:
            x = float(sf.map.evaluate(np.array([x]))[0][0])
        except OutsideDomainError as exc:
            raise OrbitSingularError(f"orbit hits a partition endpoint at x={x!r}") from exc
        s = 0.0


def birkhoff_tau(sf: SuspensionSemiflow, x: float, n: int) -> float:
    """``sum_{k<n} tau(f^k x)``."""
    if n < 0:
        raise ParameterError("n must be >= 0")
    total, y = 0.0, float(x)
    for _ in range(n):
        total += float(sf.tau(np.array([y]))[0])
        try:
            y = float(sf.map.evaluate(np.array([y]))[0][0])
        except OutsideDomainError as exc:
            raise OrbitSingularError(f"orbit hits a partition endpoint at x={y!r}") from exc
    return total


def _fiber_integral(u: Observable, x: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                    quad_n: int, weight: Optional[Callable] = None) -> np.ndarray:
    s, w = gl_nodes(lo, hi, quad_n)
    vals = u(x[:, None], s)
    if weight is not None:
        vals = vals * weight(s)
    return np.sum(vals * w, axis=-1)


def mu_integrate(sf: SuspensionSemiflow, u: Observable, quad_n: int = 32,
                 mode: str = "quadrature", samples: int = 10 ** 6, seed: int = 0,
                 threads: int = 1) -> complex:
    """``mu(u)`` by tensor quadrature or by seeded Monte Carlo."""
    if mode == "montecarlo":
        return _mu_montecarlo(sf, u, samples, seed, threads)
    if mode != "quadrature":
        raise ParameterError(f"unknown mode {mode!r}")
    if quad_n < 8:
        raise ParameterError("quad_n must be >= 8")
    x, w = sf.base_rule()
    fib = _fiber_integral(u, x, np.zeros_like(x), sf.tau(x), quad_n)
    return complex(np.sum(fib * w) / sf.nu_tau)


def _mu_montecarlo(sf, u, samples, seed, threads, chunk=100_000):
    h0 = sf.h0
    p = np.asarray(h0.values).real * h0.width
    p = p / p.sum()
    n_chunks = max(1, math.ceil(samples / chunk))

    def run(c):
        m = min(chunk, samples - c * chunk)
        rng = np.random.default_rng([seed, c])
        cells = rng.choice(h0.n, size=m, p=p)
        x = h0.edges[cells] + h0.width * rng.random(m)
        tx = sf.tau(x)
        s = tx * rng.random(m)
        return np.sum(u(x, s) * tx)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(n_chunks)))
    else:
        parts = [run(c) for c in range(n_chunks)]
    return complex(np.sum(parts) / samples / sf.nu_tau)


class Correlation(NamedTuple):
    cor: complex
    rho: complex
    b_term: complex


def _split_sums(sf: SuspensionSemiflow, u: Observable, v: Observable, t: float,
                quad_n: int, x: np.ndarray):
    """Per-node fiber integrals of ``u * v(phi_t)`` split into the panel before the
    first return (``s + t < tau(x)``) and all later panels."""
    fmap, tau = sf.map, sf.tau
    tau0 = tau(x)
    b_part = _fiber_integral(lambda xx, s: u(xx, s) * v(xx, s + t), x,
                             np.zeros_like(x), np.clip(tau0 - t, 0.0, tau0), quad_n)
    rho_part = np.zeros(x.shape, dtype=complex)
    y = x.copy()
    T = tau0.copy()
    active = T - t < tau0
    returns = 0
    while np.any(active):
        returns += 1
        if returns > MAX_RETURNS:
            raise BudgetError(f"more than {MAX_RETURNS} returns requested")
        idx = np.nonzero(active)[0]
        yy = fmap.step(y[idx], strict=False)[0]
        yy = np.clip(yy, fmap.omega.lo, fmap.omega.hi)
        y[idx] = yy
        ty = tau(yy)
        Ti = T[idx]
        lo = np.clip(Ti - t, 0.0, tau0[idx])
        hi = np.clip(Ti + ty - t, 0.0, tau0[idx])
        s, w = gl_nodes(lo, hi, quad_n)
        vals = u(x[idx, None], s) * v(yy[:, None], s + (t - Ti)[:, None])
        rho_part[idx] += np.sum(vals * w, axis=-1)
        T[idx] = Ti + ty
        active = T - t < tau0
    return b_part, rho_part


def correlation(sf: SuspensionSemiflow, u: Observable, v: Observable, t: float,
                quad_n: int = 32, threads: int = 1) -> Correlation:
    """``Cor(t) = mu(u * v o phi_t) - mu(u) mu(v)`` with its split into the part
    reached after at least one return (``rho``) and the rest (``b_term``).

    Each fiber is cut at the return times so every Gauss panel sees a smooth
    integrand.
    """
    if t < 0:
        raise ParameterError("t must be >= 0")
    x, w = sf.base_rule()
    chunks = np.array_split(np.arange(x.size), max(1, threads))

    def run(ix):
        return _split_sums(sf, u, v, float(t), quad_n, x[ix])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    b_nodes = np.concatenate([p[0] for p in parts])
    rho_nodes = np.concatenate([p[1] for p in parts])
    b = complex(np.sum(b_nodes * w) / sf.nu_tau)
    rho = complex(np.sum(rho_nodes * w) / sf.nu_tau)
    mean = mu_integrate(sf, u, quad_n) * mu_integrate(sf, v, quad_n)
    return Correlation(rho + b - mean, rho, b)


def mu_flowed(sf: SuspensionSemiflow, u: Observable, t: float, quad_n: int = 32) -> complex:
    """``mu(u o phi_t)``, which equals ``mu(u)`` by invariance."""
    c = correlation(sf, Observable.const(1.0), u, t, quad_n)
    return c.rho + c.b_term


@dataclass
class BTermDecay:
    sigma: float
    t: List[float]
    abs_b: List[float]
    c_fit: float
    c_valid: float
    c_proof: float
    sup_product: float

    def bound(self, c: Optional[float] = None) -> List[float]:
        c = self.c_valid if c is None else c
        return [c * self.sup_product * math.exp(-self.sigma * t) for t in self.t]

    def residuals(self, c: Optional[float] = None) -> List[float]:
        """``log|b(t)| - log(bound(t))``; zero entries give ``-inf``."""
        out = []
        for b, bd in zip(self.abs_b, self.bound(c)):
            out.append(math.log(b) - math.log(bd) if b > 0 else -math.inf)
        return out

    def rows(self):
        return list(zip(self.t, self.abs_b, self.bound()))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,abs_b,bound_valid,bound_fit,bound_proof\n")
            for t, b, bv, bf, bp in zip(self.t, self.abs_b, self.bound(),
                                        self.bound(self.c_fit), self.bound(self.c_proof)):
                fh.write(f"{t!r},{b!r},{bv!r},{bf!r},{bp!r}\n")


def b_term_decay(sf: SuspensionSemiflow, u: Observable, v: Observable,
                 t_grid: Sequence[float], sigma: Optional[float] = None,
                 quad_n: int = 32) -> BTermDecay:
    """Measured ``|b_term(t)|`` against envelopes ``C sup|u| sup|v| exp(-sigma t)``.

    ``c_fit`` is the log-scale least-squares constant (slope fixed at
    ``-sigma``), ``c_valid`` the smallest constant that bounds every sample and
    ``c_proof`` the a-priori constant ``sup h0 / nu(tau) * int exp(sigma tau) / sigma``
    that follows from ``(tau - t)_+ <= exp(sigma (tau - t)) / sigma``.
    """
    sigma = sf.sigma if sigma is None else sigma
    if sigma is None or not sigma > 0:
        raise ParameterError("a positive sigma is required")
    from .hypothesis import exp_tails

    S = u.sup_bound * v.sup_bound
    ts = [float(t) for t in t_grid]
    abs_b = [abs(correlation(sf, u, v, t, quad_n).b_term) for t in ts]
    pos = [(t, b) for t, b in zip(ts, abs_b) if b > 0]
    if pos:
        logs = np.array([math.log(b) + sigma * t for t, b in pos])
        c_fit = math.exp(float(np.mean(logs))) / S
        c_valid = math.exp(float(np.max(logs))) / S
    else:
        c_fit = c_valid = 0.0
    c_proof = float(np.max(np.asarray(sf.h0.values).real)) / sf.nu_tau \
        * exp_tails(sf.map, sf.tau, sigma) / sigma
    return BTermDecay(sigma, ts, abs_b, c_fit, c_valid, c_proof, S)


def hat_values(sf: SuspensionSemiflow, u: Observable, z: complex, x, quad_n: int = 32
               ) -> np.ndarray:
    """``int_0^tau(x) exp(-z s) u(x, s) ds`` at the points ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return _fiber_integral(u, x, np.zeros_like(x), sf.tau(x), quad_n,
                           weight=lambda s: np.exp(-z * s))


def hat_transform(sf: SuspensionSemiflow, u: Observable, z: complex, quad_n: int = 32,
                  n_cells: Optional[int] = None) -> GridFunction:
    """Fiber Laplace transform sampled at the cell midpoints."""
    n = sf.h0.n if n_cells is None else n_cells
    g = GridFunction(sf.map.omega, np.zeros(n))
    return g.with_values(hat_values(sf, u, z, g.midpoints, quad_n))


def hat_cell_averages(sf: SuspensionSemiflow, u: Observable, z: complex, n_cells: int,
                      quad_n: int = 32, per_cell: int = 4) -> GridFunction:
    """Cell averages of the fiber Laplace transform (Gauss nodes inside each cell)."""
    g = GridFunction(sf.map.omega, np.zeros(n_cells))
    edges = g.edges
    x, w = gl_nodes(edges[:-1], edges[1:], per_cell)
    vals = hat_values(sf, u, z, x.ravel(), quad_n).reshape(x.shape)
    return g.with_values(np.sum(vals * w, axis=-1) / g.width)
