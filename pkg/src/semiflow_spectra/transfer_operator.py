"""Weighted transfer operators, their Ulam discretization and spectral data.

The operator acting on densities is

    (L_xi h)(x) = sum_i (xi * h / |f'|)(f_i^{-1} x) * 1_{f omega_i}(x).

``ulam_matrix`` discretizes it on ``n`` equal cells: entry ``(j, k)`` is
``|cell_j|^{-1} * int_{cell_k cap f^{-1} cell_j} xi(y) dy`` summed over branches,
so the matrix maps cell averages of ``h`` to cell averages of ``L_xi h``.
"""

from __future__ import annotations

import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from ._numerics import gl_nodes, holder_estimate, refined_sup
from .errors import (NoConvergenceError, NonUniqueAcimWarning, ParameterError,
                     ResolutionError)
from .gbv_norm import GbvParams, GridFunction, gbv_norm
from .interval_maps import Branch, Interval, PiecewiseMap, refine_partition
from .return_time import ReturnTime

__all__ = [
    "Weight", "OperatorMatrix", "LyReport", "apply_transfer", "ulam_matrix",
    "invariant_density", "spectrum_topk", "top_eigenvalues", "lambda_bound",
    "verify_ly", "weighted_tail_sum", "spectrum_to_csv", "MAGIC",
]

MAGIC = b"GBVTOP01"


@dataclass(frozen=True)
class Weight:
    """The weighting xi: ``unit`` (xi = 1), ``twisted`` (xi = exp(-z tau)) or ``explicit``."""

    kind: str
    z: complex = 0j
    tau: Optional[ReturnTime] = None
    func: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("unit", "twisted", "explicit"):
            raise ParameterError(f"unknown weight kind {self.kind!r}")
        if self.kind == "twisted" and self.tau is None:
            raise ParameterError("twisted weight needs a return time")
        if self.kind == "explicit" and self.func is None:
            raise ParameterError("explicit weight needs a callable")

    @classmethod
    def unit(cls) -> "Weight":
        return cls("unit")

    @classmethod
    def twisted(cls, z: complex, tau: ReturnTime) -> "Weight":
        return cls("twisted", complex(z), tau)

    @classmethod
    def explicit(cls, func: Callable) -> "Weight":
        return cls("explicit", func=func)

    def describe(self) -> str:
        if self.kind == "twisted":
            return f"twisted(z={self.z.real!r}{self.z.imag:+}j)"
        return self.kind

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "unit":
            return np.ones(x.shape, dtype=complex)
        if self.kind == "twisted":
            return np.exp(-self.z * self.tau(x))
        return np.asarray(self.func(x), dtype=complex) * np.ones(x.shape)

    @property
    def constant_value(self) -> Optional[complex]:
        if self.kind == "unit":
            return 1.0 + 0j
        if self.kind == "twisted" and self.tau.family == "constant":
            return complex(np.exp(-self.z * self.tau.params[0]))
        return None

    def sup_on(self, iv: Interval) -> float:
        c = self.constant_value
        if c is not None:
            return abs(c)
        if self.kind == "twisted":
            re = self.z.real
            t = self.tau.inf_on(iv) if re >= 0 else self.tau.sup_on(iv)
            return math.exp(-re * t) if math.isfinite(t) else (1.0 if re == 0 else math.inf)
        return refined_sup(lambda x: np.abs(self(x)), iv.lo, iv.hi)

    def per_branch_sup(self, fmap: PiecewiseMap) -> np.ndarray:
        return np.array([self.sup_on(b.domain) for b in fmap.branches])

    def tail_log_form(self, fmap: PiecewiseMap) -> Optional[Tuple[float, float]]:
        """``(a, b)``: log sup|xi| on tail branch i is at most ``a + b*i``."""
        tail = fmap.tail
        if tail is None:
            return None
        c = self.constant_value
        if c is not None:
            return (math.log(abs(c)) if c != 0 else -math.inf, 0.0)
        if self.kind == "twisted":
            re = self.z.real
            form = self.tau.tail_form(tail, "inf" if re >= 0 else "sup")
            if form is None:
                return None
            return (-re * form[0], -re * form[1])
        s = self.sup_on(tail.region)
        return (math.log(s) if s > 0 else -math.inf, 0.0)

    def holder_constant(self, fmap: PiecewiseMap, alpha: float, n_pairs: int = 10_000,
                        seed: int = 0) -> float:
        """Pair-sampled alpha-Holder constant of xi/|f'| (max over listed branches)."""
        H = 0.0
        for k, b in enumerate(fmap.branches):
            if b.kind == "affine" and self.constant_value is not None:
                continue
            g = lambda x, b=b: self(x) / np.abs(b.derivative(x))  # noqa: E731
            est, _ = holder_estimate(g, b.domain.lo, b.domain.hi, alpha, n_pairs, seed + k)
            H = max(H, est)
        return H


def weighted_tail_sum(fmap: PiecewiseMap, w: Weight, power: float = 1.0) -> float:
    """Closed-form ``sum over tail branches of contraction**power * sup|xi|``."""
    if fmap.tail is None:
        return 0.0
    form = w.tail_log_form(fmap)
    if form is None:
        return math.inf
    return fmap.tail.series(power, *form)


def _tail_remainder(fmap: PiecewiseMap, w: Weight, extra: int) -> float:
    """Weighted tail sum over tail branches beyond the first ``extra``."""
    if fmap.tail is None:
        return 0.0
    form = w.tail_log_form(fmap)
    if form is None:
        return math.inf
    a, b = form
    rate = fmap.tail.contraction(1) / fmap.tail.contraction(0) * math.exp(b)
    return fmap.tail.series(1.0, a, b) * rate ** extra


def apply_transfer(fmap: PiecewiseMap, w: Weight, h: GridFunction, x: float,
                   return_error: bool = False):
    """Pointwise value of ``L_xi h`` at ``x``.

    Tail branches are included until the certified remainder drops below
    1e-15; with ``return_error`` the remainder times ``sup|h|`` is returned too.
    """
    x = float(x)
    total = 0j
    extra = 0
    if fmap.tail is not None:
        while extra < 2000 and _tail_remainder(fmap, w, extra) > 1e-15:
            extra += 1
    for b in fmap.materialized(extra):
        if not b.image.contains(x):
            continue
        y = b.inverse(np.array([x]))
        total += complex((w(y) * h(y) / np.abs(b.derivative(y)))[0])
    if return_error:
        return total, _tail_remainder(fmap, w, extra) * h.sup()
    return total


@dataclass
class OperatorMatrix:
    n: int
    entries: sp.csr_matrix
    omega: Interval
    method: str = "ulam"
    map_ref: str = ""
    weight_ref: str = ""
    truncation_bound: float = 0.0

    @property
    def width(self) -> float:
        return self.omega.length / self.n

    def dense(self) -> np.ndarray:
        return self.entries.toarray()

    def __matmul__(self, v):
        return self.entries @ v

    def apply(self, h: GridFunction) -> GridFunction:
        return h.with_values(self.entries @ h.values)

    def to_csv(self, path) -> None:
        coo = self.entries.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w") as fh:
            fh.write("row,col,re,im\n")
            for k in order:
                v = complex(coo.data[k])
                fh.write(f"{coo.row[k]},{coo.col[k]},{v.real!r},{v.imag!r}\n")

    def to_binary(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", self.n))
            fh.write(np.ascontiguousarray(self.dense(), dtype="<c16").tobytes())

    @staticmethod
    def read_binary(path) -> np.ndarray:
        with open(path, "rb") as fh:
            if fh.read(8) != MAGIC:
                raise ParameterError(f"{path}: bad magic header")
            (n,) = struct.unpack("<Q", fh.read(8))
            return np.frombuffer(fh.read(), dtype="<c16").reshape(n, n)


def _branch_entries(b: Branch, w: Weight, lo: float, width: float, n: int, quad: int):
    edges = lo + width * np.arange(n + 1)
    a, c = b.domain.lo, b.domain.hi
    dom_cuts = edges[(edges > a) & (edges < c)]
    img_cuts = edges[(edges > b.image.lo) & (edges < b.image.hi)]
    pre = np.clip(b.inverse(img_cuts), a, c) if img_cuts.size else np.empty(0)
    ys = np.unique(np.concatenate([[a, c], dom_cuts, pre]))
    y0, y1 = ys[:-1], ys[1:]
    keep = y1 > y0
    y0, y1 = y0[keep], y1[keep]
    mid = 0.5 * (y0 + y1)
    src = np.clip(np.floor((mid - lo) / width).astype(np.int64), 0, n - 1)
    tgt = np.clip(np.floor((b.forward(mid) - lo) / width).astype(np.int64), 0, n - 1)
    cval = w.constant_value
    if cval is not None:
        mass = cval * (y1 - y0)
    else:
        nodes, weights = gl_nodes(y0, y1, quad)
        mass = np.sum(w(nodes) * weights, axis=-1)
    return tgt, src, mass / width


def ulam_matrix(fmap: PiecewiseMap, w: Weight, n: int, threads: int = 1,
                quad: int = 16) -> OperatorMatrix:
    if n < 2:
        raise ParameterError("need at least 2 cells")
    lo, width = fmap.omega.lo, fmap.omega.length / n
    for k, b in enumerate(fmap.branches):
        if b.image.length < width:
            raise ResolutionError(f"image of branch {k} is shorter than one cell")

    def assemble(branches: Sequence[Branch]):
        if threads > 1 and len(branches) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda b: _branch_entries(b, w, lo, width, n, quad), branches))
        else:
            parts = [_branch_entries(b, w, lo, width, n, quad) for b in branches]
        return parts

    parts = assemble(fmap.branches)
    extra, bound = 0, 0.0
    if fmap.tail is not None:
        listed = _coo(parts, n)
        norm = max(1.0, float(np.max(np.abs(listed).sum(axis=1))))
        while extra < 500 and _tail_remainder(fmap, w, extra) > 1e-10 * norm:
            extra += 1
        bound = _tail_remainder(fmap, w, extra)
        tail_branches = fmap.materialized(extra)[fmap.n_listed:]
        parts += assemble(tail_branches)
    return OperatorMatrix(n=n, entries=_coo(parts, n), omega=fmap.omega,
                          map_ref=fmap.name, weight_ref=w.describe(), truncation_bound=bound)


def _coo(parts, n: int) -> sp.csr_matrix:
    if not parts:
        return sp.csr_matrix((n, n), dtype=complex)
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([np.asarray(p[2], dtype=complex) for p in parts])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _power_iterate(M: sp.csr_matrix, h: np.ndarray, width: float, tol: float,
                   max_iter: int) -> Tuple[np.ndarray, int]:
    h = h / (np.sum(np.abs(h)) * width)
    for it in range(1, max_iter + 1):
        g = (M @ h).real
        s = np.sum(np.abs(g)) * width
        if s == 0:
            raise NoConvergenceError("transfer operator annihilated the iterate")
        g = g / s
        diff = np.sum(np.abs(g - h)) * width
        h = g
        if diff <= tol:
            return h, it
    raise NoConvergenceError(f"power iteration did not reach {tol} in {max_iter} steps")


def invariant_density(fmap: PiecewiseMap, n: int, tol: float = 1e-12,
                      max_iter: int = 100_000, matrix: Optional[OperatorMatrix] = None
                      ) -> GridFunction:
    """Normalized fixed point of the unit-weight Ulam matrix by power iteration.

    A second iteration from a ramp start vector guards against a degenerate
    eigenvalue 1 (several absolutely continuous invariant measures).
    """
    m = matrix if matrix is not None else ulam_matrix(fmap, Weight.unit(), n)
    M = m.entries
    width = m.width
    h, _ = _power_iterate(M, np.ones(n), width, tol, max_iter)
    ramp = 1.0 + np.linspace(0.0, 1.0, n)
    h2, _ = _power_iterate(M, ramp, width, tol, max_iter)
    h = np.where(h < 0, 0.0, h)
    h = h / (np.sum(h) * width)
    if np.sum(np.abs(h - h2)) * width > 1e3 * max(tol, 1e-12):
        warnings.warn("eigenvalue 1 appears to be degenerate; the invariant density is not unique",
                      NonUniqueAcimWarning, stacklevel=2)
    return GridFunction(fmap.omega, h)


def spectrum_topk(m: OperatorMatrix, k: int) -> List[complex]:
    """The ``k`` largest-modulus eigenvalues, modulus descending."""
    if not 1 <= k <= m.n:
        raise ParameterError(f"k must lie in [1, {m.n}]")
    if m.n <= 2048 or k >= m.n - 1:
        ev = np.linalg.eigvals(m.dense())
    else:
        ev = top_eigenvalues(m, k)
    order = np.argsort(-np.abs(ev), kind="stable")
    return [complex(v) for v in ev[order][:k]]


def _invariant_krylov(a, v0: np.ndarray, m: int) -> Optional[np.ndarray]:
    """Arnoldi from ``v0`` for at most ``m`` steps; returns the Hessenberg
    eigenvalues if the Krylov space turns out invariant, else None."""
    n = v0.size
    basis = np.zeros((n, m + 1), dtype=complex)
    hess = np.zeros((m + 1, m), dtype=complex)
    basis[:, 0] = v0 / np.linalg.norm(v0)
    for j in range(m):
        w = a @ basis[:, j]
        scale = np.linalg.norm(w)
        for _ in range(2):
            h = basis[:, :j + 1].conj().T @ w
            w = w - basis[:, :j + 1] @ h
            hess[:j + 1, j] += h
        beta = np.linalg.norm(w)
        if beta <= 1e-12 * scale or scale == 0:
            return np.linalg.eigvals(hess[:j + 1, :j + 1])
        hess[j + 1, j] = beta
        basis[:, j + 1] = w / beta
    return None


def top_eigenvalues(m: OperatorMatrix, k: int = 6) -> np.ndarray:
    """Largest-modulus eigenvalues by implicitly restarted Arnoldi (ARPACK).

    ARPACK restarts from its own random vector when the Krylov space is
    invariant, which makes results depend on call history. A short Arnoldi
    run from a fixed vector catches that case first; its Hessenberg
    eigenvalues are then exact (multiplicities are not resolved).
    Unconverged Ritz values are dropped; if none converge the dense solver is
    used instead.
    """
    n = m.n
    k = min(k, n - 2)
    if k < 1:
        return np.linalg.eigvals(m.dense())
    v0 = np.random.default_rng(12345).random(n) + 0.5
    ncv = min(n, max(2 * k + 1, 24))
    ev = _invariant_krylov(m.entries, v0.astype(complex), ncv)
    if ev is None:
        try:
            ev = eigs(m.entries, k=k, which="LM", v0=v0.astype(complex), tol=1e-13, ncv=ncv,
                      maxiter=20 * n, return_eigenvectors=False)
        except ArpackNoConvergence as exc:
            ev = exc.eigenvalues
            if ev is None or len(ev) == 0:
                ev = np.linalg.eigvals(m.dense())
    ev = np.asarray(ev)
    return ev[np.argsort(-np.abs(ev), kind="stable")][:max(k, 1)]


def lambda_bound(fmap: PiecewiseMap, w: Weight, alpha: float, return_index: bool = False):
    """``sup_i contraction_i**alpha * sup_{omega_i}|xi|`` including the tail."""
    vals = fmap.contractions() ** alpha * w.per_branch_sup(fmap)
    best_i = int(np.argmax(vals))
    best = float(vals[best_i])
    if fmap.tail is not None:
        form = w.tail_log_form(fmap)
        tail_sup = math.inf if form is None else fmap.tail.sup_term(alpha, *form)
        if tail_sup > best:
            best, best_i = tail_sup, fmap.n_listed
    return (best, best_i) if return_index else best


@dataclass
class LyReport:
    lambda_: float
    delta: float
    gamma_const: float
    c_delta: float
    eps0: float
    holder_constant: float
    n_checked: int
    n_refined_branches: int
    violations: List[Tuple[int, float, float]] = field(default_factory=list)
    max_ratio: float = 0.0

    @property
    def bound_factor(self) -> float:
        return (2 + self.delta) * self.lambda_

    def as_dict(self) -> dict:
        return {
            "lambda": self.lambda_, "delta": self.delta, "gamma_const": self.gamma_const,
            "c_delta": self.c_delta, "eps0": self.eps0, "holder_constant": self.holder_constant,
            "bound_factor": self.bound_factor, "n_checked": self.n_checked,
            "n_refined_branches": self.n_refined_branches, "max_ratio": self.max_ratio,
            "violations": [list(v) for v in self.violations],
        }


def _random_piecewise_constant(rng, omega: Interval, n: int, complex_values: bool):
    k = int(rng.integers(1, 33))
    jumps = np.sort(rng.uniform(omega.lo, omega.hi, k))
    vals = rng.normal(size=k + 1)
    if complex_values:
        vals = vals + 1j * rng.normal(size=k + 1)
    x = omega.lo + omega.length * (np.arange(n) + 0.5) / n
    return vals[np.searchsorted(jumps, x)]


def _random_holder(rng, omega: Interval, n: int, alpha: float, complex_values: bool):
    k = int(rng.integers(1, 9))
    centers = rng.uniform(omega.lo, omega.hi, k)
    amps = rng.normal(size=k)
    if complex_values:
        amps = amps + 1j * rng.normal(size=k)
    x = omega.lo + omega.length * (np.arange(n) + 0.5) / n
    return np.sum(amps[:, None] * np.abs(x[None, :] - centers[:, None]) ** alpha, axis=0)


def verify_ly(fmap: PiecewiseMap, w: Weight, p: GbvParams, delta: float, trials: int,
              holder_trials: Optional[int] = None, n: int = 1024, seed: int = 0,
              slack: float = 0.05, matrix: Optional[OperatorMatrix] = None) -> LyReport:
    """Empirical check of ``||L h|| <= (2+delta) lambda ||h|| + C_delta |h|_1``.

    ``eps0`` is lowered (never raised) until the big-pieces and Holder
    conditions on it hold; the value used is reported.
    """
    if not 0 < delta <= 1:
        raise ParameterError("delta must lie in (0, 1]")
    p.check(fmap.omega)
    alpha = p.alpha
    lam = lambda_bound(fmap, w, alpha)
    gamma = 32.0 / delta + 2.0
    H = w.holder_constant(fmap, alpha)
    sig_sup = fmap.sup_contraction()

    # I_2: smallest branch terms whose sum (with the tail) stays below lambda*delta/16
    terms = fmap.contractions() * w.per_branch_sup(fmap)
    budget = lam * delta / 16 - weighted_tail_sum(fmap, w)
    in_i1 = np.ones(len(terms), dtype=bool)
    for k in np.argsort(terms, kind="stable"):
        if terms[k] <= budget:
            budget -= terms[k]
            in_i1[k] = False
        else:
            break
    big = min(b.image.length for b, keep in zip(fmap.branches, in_i1) if keep) / gamma
    eps0 = min(p.eps0, big)
    if H > 0:
        eps0 = min(eps0, (delta * lam / (8 * (8 + delta) * H * gamma)) ** (1 / alpha))
    width = fmap.omega.length / n
    if eps0 < 4 * width:
        raise ResolutionError(f"admissible eps0={eps0:.3g} spans fewer than 4 cells at n={n}")
    refined = refine_partition(fmap, eps0, gamma)
    om = fmap.omega.length
    xi_sup_i1 = float(np.max(w.per_branch_sup(fmap)[in_i1]))
    c_delta = (4 * (2 + delta / 4) * H * sig_sup ** alpha
               + xi_sup_i1 / (eps0 ** alpha * om)
               + lam * eps0 ** (1 - alpha) * delta / (4 * om))
    params = GbvParams(alpha, eps0)
    m = matrix if matrix is not None else ulam_matrix(fmap, w, n)
    rng = np.random.default_rng(seed)
    complex_values = w.kind != "unit"
    if holder_trials is None:
        holder_trials = trials // 2
    samples = [np.zeros(n)]
    samples += [_random_piecewise_constant(rng, fmap.omega, n, complex_values) for _ in range(trials)]
    samples += [_random_holder(rng, fmap.omega, n, alpha, complex_values) for _ in range(holder_trials)]
    report = LyReport(lam, delta, gamma, c_delta, eps0, H, len(samples), len(refined.branches))
    for idx, vals in enumerate(samples):
        h = GridFunction(fmap.omega, vals)
        lhs = gbv_norm(m.apply(h), params)
        rhs = (2 + delta) * lam * gbv_norm(h, params) + c_delta * h.l1()
        if rhs > 0:
            report.max_ratio = max(report.max_ratio, lhs / rhs)
        if lhs > (1 + slack) * rhs + 1e-12:
            report.violations.append((idx, lhs, rhs))
    return report


def spectrum_to_csv(eigenvalues: Sequence[complex], path) -> None:
    with open(path, "w") as fh:
        fh.write("index,re,im,modulus\n")
        for k, v in enumerate(eigenvalues):
            v = complex(v)
            fh.write(f"{k},{v.real!r},{v.imag!r},{abs(v)!r}\n")
