"""Small numerical helpers shared across modules."""

from __future__ import annotations

from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gl_nodes(lo, hi, n: int):
    """Map ``n`` Gauss-Legendre nodes onto [lo, hi] (broadcast over arrays).

    Returns nodes and weights with a trailing axis of length ``n``.
    """
    x, w = gauss_legendre(n)
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def gl_integrate(func: Callable, lo, hi, n: int = 16):
    nodes, weights = gl_nodes(lo, hi, n)
    return np.sum(func(nodes) * weights, axis=-1)


def refined_sup(func: Callable, lo: float, hi: float, samples: int = 1024,
                levels: int = 3) -> float:
    """Supremum of ``func`` over the open interval (lo, hi).

    Grid maximum over ``samples`` interior points, then the window around the
    argmax is resampled ``levels - 1`` more times.
    """
    a, b = float(lo), float(hi)
    best = -np.inf
    for _ in range(levels):
        t = (np.arange(samples) + 0.5) / samples
        x = a + (b - a) * t
        x = x[(x > lo) & (x < hi)]
        if x.size == 0:
            break
        vals = np.asarray(func(x), dtype=float)
        if np.any(np.isnan(vals)):
            return np.nan
        k = int(np.argmax(vals))
        best = max(best, float(vals[k]))
        step = (b - a) / samples
        a, b = max(lo, x[k] - step), min(hi, x[k] + step)
    return best


def holder_estimate(g: Callable, lo: float, hi: float, alpha: float,
                    n_pairs: int = 10_000, seed: int = 0,
                    labels: Optional[Callable] = None) -> Tuple[float, bool]:
    """Pair-sampled alpha-Holder constant of ``g`` on (lo, hi).

    Half of the base points are uniform, the rest are pushed geometrically
    toward the two endpoints. Returns ``(H, stable)`` where ``stable`` is False
    when the ratio keeps growing at the finest separations (a sign that the
    exponent is too large for ``g``). ``labels`` may map points to integer
    cylinder labels; pairs with different labels are discarded.
    """
    rng = np.random.default_rng(seed)
    width = hi - lo
    n_uni = n_pairs // 2
    n_end = n_pairs - n_uni
    x = np.concatenate([
        lo + width * rng.random(n_uni),
        lo + width * 10.0 ** (-12 * rng.random(n_end // 2)),
        hi - width * 10.0 ** (-12 * rng.random(n_end - n_end // 2)),
    ])
    d = width * 10.0 ** (-10 * rng.random(x.size)) * rng.choice([-1.0, 1.0], x.size)
    y = x + d
    y = np.where(y <= lo, lo + 0.5 * (x - lo), y)
    y = np.where(y >= hi, hi - 0.5 * (hi - x), y)
    keep = (x > lo) & (x < hi) & (y > lo) & (y < hi) & (x != y)
    x, y = x[keep], y[keep]
    gx, gy = g(x), g(y)
    if labels is not None:
        same = np.all(labels(x) == labels(y), axis=0)
        x, y, gx, gy = x[same], y[same], gx[same], gy[same]
    if x.size == 0:
        return 0.0, True
    sep = np.abs(x - y)
    ratio = np.abs(gx - gy) / sep ** alpha
    ratio = np.where(np.isfinite(ratio), ratio, np.inf)
    H = float(np.max(ratio))
    rel = sep / width
    fine = ratio[rel <= 1e-7]
    coarse = ratio[rel >= 1e-4]
    if fine.size == 0 or coarse.size == 0:
        return H, bool(np.isfinite(H))
    scale = float(np.max(np.abs(np.concatenate([gx, gy]))))
    stable = bool(np.max(fine) <= 4.0 * np.max(coarse) + 1e-6 * scale)
    return H, stable and bool(np.isfinite(H))
