"""Return-time (roof) functions for suspension semiflows."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ._numerics import gl_integrate, refined_sup
from .errors import ParameterError
from .interval_maps import Interval, TailDescriptor

__all__ = ["ReturnTime", "return_time_from_config"]


@dataclass(frozen=True)
class ReturnTime:
    """Roof function tau > 0.

    ``family`` is ``"constant"`` (params ``(c,)``), ``"lorenz_log"``
    (params ``(lam,)``, tau(x) = -ln(x)/lam) or ``"explicit"`` (a vectorized
    callable, optionally piecewise-affine pieces for configs).
    """

    family: str
    params: Tuple[float, ...] = ()
    func: Optional[Callable] = field(default=None, compare=False)
    pieces: Tuple[Tuple[float, float, float, float], ...] = ()

    def __post_init__(self):
        if self.family == "constant":
            if not (len(self.params) == 1 and self.params[0] > 0):
                raise ParameterError("constant return time needs one positive value")
        elif self.family == "lorenz_log":
            if not (len(self.params) == 1 and self.params[0] > 0):
                raise ParameterError("lorenz_log return time needs lambda > 0")
        elif self.family == "explicit":
            if self.func is None:
                raise ParameterError("explicit return time needs a callable")
        else:
            raise ParameterError(f"unknown return-time family {self.family!r}")

    @classmethod
    def constant(cls, c: float = 1.0) -> "ReturnTime":
        return cls("constant", (float(c),))

    @classmethod
    def lorenz_log(cls, lam: float = 1.0) -> "ReturnTime":
        return cls("lorenz_log", (float(lam),))

    @classmethod
    def explicit(cls, func: Callable) -> "ReturnTime":
        return cls("explicit", (), func)

    @classmethod
    def piecewise_affine(cls, pieces: Sequence[Sequence[float]]) -> "ReturnTime":
        """``tau(x) = a + b*x`` on each ``(lo, hi, a, b)`` piece."""
        pcs = tuple(tuple(float(v) for v in p) for p in pieces)
        los = np.array([p[0] for p in pcs])
        order = np.argsort(los)
        los = los[order]
        coeffs = np.array([[pcs[k][2], pcs[k][3]] for k in order])

        def func(x):
            x = np.asarray(x, dtype=float)
            k = np.clip(np.searchsorted(los, x, side="right") - 1, 0, len(los) - 1)
            return coeffs[k, 0] + coeffs[k, 1] * x

        return cls("explicit", (), func, pcs)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "constant":
            return np.full(x.shape, self.params[0])
        if self.family == "lorenz_log":
            with np.errstate(divide="ignore"):
                return -np.log(x) / self.params[0]
        return np.asarray(self.func(x), dtype=float)

    def sup_on(self, iv: Interval) -> float:
        if self.family == "constant":
            return self.params[0]
        if self.family == "lorenz_log":
            return math.inf if iv.lo <= 0 else -math.log(iv.lo) / self.params[0]
        return refined_sup(self, iv.lo, iv.hi)

    def inf_on(self, iv: Interval) -> float:
        if self.family == "constant":
            return self.params[0]
        if self.family == "lorenz_log":
            return -math.log(iv.hi) / self.params[0]
        return -refined_sup(lambda x: -self(x), iv.lo, iv.hi)

    def integral(self, lo, hi) -> np.ndarray:
        """Exact (or 32-point Gauss) integral of tau over [lo, hi], vectorized."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if self.family == "constant":
            return self.params[0] * (hi - lo)
        if self.family == "lorenz_log":
            def prim(x):
                with np.errstate(divide="ignore", invalid="ignore"):
                    return np.where(x > 0, x - x * np.log(x), 0.0)
            return (prim(hi) - prim(lo)) / self.params[0]
        return gl_integrate(self, lo, hi, 32)

    def tail_form(self, tail: TailDescriptor, which: str = "sup") -> Optional[Tuple[float, float]]:
        """``(a, b)`` with ``sup`` (or ``inf``) of tau on tail branch i equal to ``a + b*i``.

        None when no closed form exists.
        """
        if self.family == "constant":
            return (self.params[0], 0.0)
        if self.family == "lorenz_log":
            l0, l1 = tail.log_lo_form if which == "sup" else tail.log_hi_form
            lam = self.params[0]
            return (-l0 / lam, -l1 / lam)
        return None

    def exp_integral(self, sigma: float, lo: float, hi: float) -> float:
        """``int_lo^hi exp(sigma * tau(x)) dx``; inf when it diverges."""
        if self.family == "constant":
            return (hi - lo) * math.exp(sigma * self.params[0])
        if self.family == "lorenz_log":
            s = sigma / self.params[0]
            if lo <= 0 and s >= 1:
                return math.inf
            if abs(1 - s) < 1e-15:
                return math.log(hi / lo)
            return (hi ** (1 - s) - max(lo, 0.0) ** (1 - s)) / (1 - s)
        from scipy.integrate import quad
        val, _ = quad(lambda x: math.exp(sigma * float(self(np.array([x]))[0])), lo, hi,
                      limit=200)
        return val

    def to_config(self) -> dict:
        if self.family == "constant":
            return {"family": "constant", "value": self.params[0]}
        if self.family == "lorenz_log":
            return {"family": "lorenz_log", "lambda": self.params[0]}
        if self.pieces:
            return {"family": "explicit", "pieces": [list(p) for p in self.pieces]}
        return {"family": "explicit"}


def return_time_from_config(cfg: dict) -> ReturnTime:
    family = cfg.get("family")
    if family == "constant":
        return ReturnTime.constant(float(cfg.get("value", 1.0)))
    if family == "lorenz_log":
        return ReturnTime.lorenz_log(float(cfg.get("lambda", 1.0)))
    if family == "explicit":
        if "pieces" not in cfg:
            raise ParameterError("tau.pieces: explicit return time needs pieces [lo, hi, a, b]")
        return ReturnTime.piecewise_affine(cfg["pieces"])
    raise ParameterError(f"tau.family: unknown family {family!r}")
