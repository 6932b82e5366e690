"""Laplace transform of the correlation function and resonance detection.

``rho_hat_series`` sums ``int L_z^n(h0 * u_hat(-z)) * v_hat(z) dx / nu(tau)`` over
``n >= 1`` with the twisted Ulam matrix; ``rho_hat_quadrature`` integrates
``exp(-z t) rho(t)`` directly in time and serves as an independent check.
Resonances are the ``z`` where the discretized twisted operator has an
eigenvalue equal to 1.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from ._numerics import gl_nodes
from .errors import InsidePoleRegionError, ParameterError
from .suspension import (Observable, SuspensionSemiflow, correlation,
                         hat_cell_averages)
from .transfer_operator import (OperatorMatrix, Weight, invariant_density,
                                top_eigenvalues, ulam_matrix)

__all__ = ["LaplaceValue", "StripGrid", "Pole", "ResonanceScan", "rho_hat_series",
           "rho_hat_quadrature", "rho_samples", "resonance_scan", "eigenvalue_near_one",
           "DETECTION_THRESHOLD"]

DETECTION_THRESHOLD = 0.1


class LaplaceValue(NamedTuple):
    value: complex
    bound: float


def _density_on(sf: SuspensionSemiflow, n_cells: int) -> np.ndarray:
    if sf.h0.n == n_cells:
        return np.asarray(sf.h0.values).real
    return invariant_density(sf.map, n_cells).values


def rho_hat_series(sf: SuspensionSemiflow, u: Observable, v: Observable, z: complex,
                   n_max: int, n_cells: int, quad_n: int = 32,
                   matrix: Optional[OperatorMatrix] = None) -> LaplaceValue:
    """Series of twisted-operator iterates; ``bound`` covers the omitted terms.

    Raises InsidePoleRegionError when the discretized spectral radius is >= 1,
    where the series does not converge.
    """
    if n_max < 0:
        raise ParameterError("n_max must be >= 0")
    z = complex(z)
    m = matrix if matrix is not None else ulam_matrix(sf.map, Weight.twisted(z, sf.tau), n_cells)
    r = float(np.max(np.abs(top_eigenvalues(m, 6))))
    if r >= 1:
        raise InsidePoleRegionError(f"spectral radius {r:.6g} >= 1 at z={z}")
    h0 = _density_on(sf, n_cells)
    g = h0 * hat_cell_averages(sf, u, -z, n_cells, quad_n).values
    vh = hat_cell_averages(sf, v, z, n_cells, quad_n).values
    width = sf.map.omega.length / n_cells
    total = 0j
    y = g.astype(complex)
    for _ in range(n_max):
        y = m.entries @ y
        total += np.sum(y * vh) * width
    g_l1 = float(np.sum(np.abs(g)) * width)
    bound = g_l1 * float(np.max(np.abs(vh))) * r ** (n_max + 1) / (1 - r) / sf.nu_tau
    return LaplaceValue(complex(total / sf.nu_tau), bound)


def rho_samples(sf: SuspensionSemiflow, u: Observable, v: Observable, t: Sequence[float],
                quad_n: int = 32, threads: int = 1) -> np.ndarray:
    """``rho(t)`` (the post-first-return part of the correlation) at each ``t``."""
    ts = [float(s) for s in t]
    run = lambda s: correlation(sf, u, v, s, quad_n).rho  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.array(list(pool.map(run, ts)))
    return np.array([run(s) for s in ts])


def rho_hat_quadrature(sf: SuspensionSemiflow, u: Observable, v: Observable, z,
                       t_max: float = 30.0, n_t: int = 30, quad_n: int = 32,
                       nodes_per_panel: int = 8, threads: int = 1):
    """``int_0^t_max exp(-z t) rho(t) dt`` by composite Gauss quadrature.

    ``z`` may be a scalar or a sequence (``rho`` is sampled once and reused).
    ``bound`` is ``sup|u| sup|v| exp(-Re z t_max) / Re z``, the omitted tail.
    """
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    if np.any(zs.real <= 0):
        raise ParameterError("the time-domain transform needs Re(z) > 0")
    edges = np.linspace(0.0, t_max, n_t + 1)
    t, w = gl_nodes(edges[:-1], edges[1:], nodes_per_panel)
    t, w = t.ravel(), w.ravel()
    rho = rho_samples(sf, u, v, t, quad_n, threads)
    S = u.sup_bound * v.sup_bound
    out = [LaplaceValue(complex(np.sum(np.exp(-zz * t) * rho * w)),
                        float(S * math.exp(-zz.real * t_max) / zz.real)) for zz in zs]
    return out[0] if np.ndim(z) == 0 else out


@dataclass(frozen=True)
class StripGrid:
    re_range: Tuple[float, float]
    im_range: Tuple[float, float]
    n_re: int
    n_im: int

    def __post_init__(self):
        if not self.re_range[0] <= self.re_range[1] or not self.im_range[0] <= self.im_range[1]:
            raise ParameterError("grid ranges must be ordered")
        if self.n_re < 2 or self.n_im < 2:
            raise ParameterError("n_re and n_im must be >= 2")
        if self.re_range[1] > 0:
            raise ParameterError("the strip lies in Re(z) <= 0")

    @property
    def re(self) -> np.ndarray:
        return np.linspace(*self.re_range, self.n_re)

    @property
    def im(self) -> np.ndarray:
        return np.linspace(*self.im_range, self.n_im)

    def nodes(self) -> np.ndarray:
        return self.re[:, None] + 1j * self.im[None, :]

    def contains(self, z: complex, tol: float = 1e-6) -> bool:
        return (self.re_range[0] - tol <= z.real <= self.re_range[1] + tol
                and self.im_range[0] - tol <= z.imag <= self.im_range[1] + tol)

    def as_dict(self) -> dict:
        return {"re_range": list(self.re_range), "im_range": list(self.im_range),
                "n_re": self.n_re, "n_im": self.n_im}


@dataclass
class Pole:
    z: complex
    residual: float
    steps: int
    resolved: bool = True


@dataclass
class ResonanceScan:
    grid: StripGrid
    n_cells: int
    leading_eigenvalue: np.ndarray
    nearest_eigenvalue: np.ndarray
    poles: List[Pole] = field(default_factory=list)
    unresolved: List[Pole] = field(default_factory=list)
    proven_sigma: Optional[float] = None
    outside_proven_strip: bool = False

    def pole_values(self) -> List[complex]:
        return [p.z for p in self.poles]

    def to_csv(self, path) -> None:
        nodes = self.grid.nodes()
        with open(path, "w") as fh:
            fh.write("re_z,im_z,re_eig,im_eig,abs_eig_minus_1,re_leading,im_leading\n")
            for a in range(self.grid.n_re):
                for b in range(self.grid.n_im):
                    z, e, lead = nodes[a, b], self.nearest_eigenvalue[a, b], \
                        self.leading_eigenvalue[a, b]
                    fh.write(f"{z.real!r},{z.imag!r},{e.real!r},{e.imag!r},{abs(e - 1)!r},"
                             f"{lead.real!r},{lead.imag!r}\n")

    def poles_dict(self) -> dict:
        def rec(p):
            return {"z": [p.z.real, p.z.imag], "residual": p.residual, "steps": p.steps,
                    "n_cells": self.n_cells, "grid": self.grid.as_dict()}
        return {"poles": [rec(p) for p in self.poles],
                "unresolved": [rec(p) for p in self.unresolved],
                "proven_sigma": self.proven_sigma,
                "outside_proven_strip": self.outside_proven_strip}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.poles_dict(), fh, indent=2)


def _node_eigs(sf: SuspensionSemiflow, z: complex, n_cells: int, k: int
               ) -> Tuple[complex, complex]:
    """(largest-modulus eigenvalue, eigenvalue nearest 1) of the twisted matrix."""
    m = ulam_matrix(sf.map, Weight.twisted(z, sf.tau), n_cells)
    ev = top_eigenvalues(m, k)
    # every eigenvalue within the detection radius of 1 has modulus > 0.9;
    # if the k-th one is larger than that some may be missing
    if len(ev) < min(k, n_cells - 2) or abs(ev[-1]) > 1 - DETECTION_THRESHOLD:
        ev = np.linalg.eigvals(m.dense())
        ev = ev[np.argsort(-np.abs(ev), kind="stable")]
    near = ev[int(np.argmin(np.abs(ev - 1)))]
    return complex(ev[0]), complex(near)


def eigenvalue_near_one(sf: SuspensionSemiflow, z: complex, n_cells: int, k: int = 6) -> complex:
    return _node_eigs(sf, z, n_cells, k)[1]


def _newton(sf: SuspensionSemiflow, z0: complex, n_cells: int, k: int, tol: float,
            max_steps: int = 50, h: float = 1e-5) -> Pole:
    z = complex(z0)
    g = eigenvalue_near_one(sf, z, n_cells, k) - 1
    for step in range(1, max_steps + 1):
        if abs(g) < tol:
            return Pole(z, abs(g), step - 1)
        dg = (eigenvalue_near_one(sf, z + h, n_cells, k)
              - eigenvalue_near_one(sf, z - h, n_cells, k)) / (2 * h)
        if dg == 0 or not np.isfinite(dg):
            break
        z = z - g / dg
        g = eigenvalue_near_one(sf, z, n_cells, k) - 1
    if abs(g) < tol:
        return Pole(z, abs(g), max_steps)
    return Pole(z, abs(g), max_steps, resolved=False)


def resonance_scan(sf: SuspensionSemiflow, grid: StripGrid, n_cells: int,
                   refine_tol: float = 1e-10, sigma: Optional[float] = None,
                   override: bool = False, threads: int = 1, k: int = 6) -> ResonanceScan:
    """Scan the strip for ``z`` where the twisted matrix has eigenvalue 1.

    Nodes with ``|eig - 1| < 0.1`` are grouped into connected clusters; each
    cluster is refined by Newton's method from its best node. The left edge is
    clamped to ``-sigma`` (the proven strip) unless ``override`` is set, in
    which case the scan is marked as reaching outside it.
    """
    proven = sf.sigma if sigma is None else sigma
    outside = False
    if proven is not None and grid.re_range[0] < -proven - 1e-15:
        if override:
            outside = True
        else:
            lo = min(-proven, grid.re_range[1])
            grid = StripGrid((lo, grid.re_range[1]), grid.im_range, grid.n_re, grid.n_im)
    nodes = grid.nodes()
    flat = nodes.ravel()
    run = lambda z: _node_eigs(sf, complex(z), n_cells, k)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            res = list(pool.map(run, flat))
    else:
        res = [run(z) for z in flat]
    lead = np.array([r[0] for r in res]).reshape(nodes.shape)
    near = np.array([r[1] for r in res]).reshape(nodes.shape)

    dist = np.abs(near - 1)
    labels, n_clusters = ndimage.label(dist < DETECTION_THRESHOLD, structure=np.ones((3, 3)))
    starts = []
    for c in range(1, n_clusters + 1):
        idx = np.flatnonzero(labels.ravel() == c)
        starts.append(flat[idx[int(np.argmin(dist.ravel()[idx]))]])
    refine = lambda z0: _newton(sf, z0, n_cells, k, refine_tol)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            refined = list(pool.map(refine, starts))
    else:
        refined = [refine(z0) for z0 in starts]

    poles: List[Pole] = []
    unresolved: List[Pole] = []
    for p in refined:
        if not p.resolved:
            unresolved.append(p)
        elif grid.contains(p.z) and all(abs(p.z - q.z) > 1e-6 for q in poles):
            poles.append(p)
    poles.sort(key=lambda p: (p.z.imag, p.z.real))
    unresolved.sort(key=lambda p: (p.z.imag, p.z.real))
    return ResonanceScan(grid, n_cells, lead, near, poles, unresolved, proven, outside)
