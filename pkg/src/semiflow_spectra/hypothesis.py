"""Checks of the regularity, expansion and summability conditions on a suspension.

For a map ``f`` with branches ``omega_i``, roof ``tau``, exponent ``alpha`` and
rate ``sigma`` the conditions are

* Holder: ``exp(-z tau) / |f'|`` is alpha-Holder on each branch for
  ``Re z`` in ``[-sigma, 0]``;
* expanding: ``sup_i contraction_i**alpha * exp(sigma * sup tau|omega_i) < 1``;
* summable: ``sum_i contraction_i * exp(sigma * sup tau|omega_i) < inf``;
* exponential tails: ``int exp(sigma * tau) dx < inf``.

Failures are reported, not raised.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ._numerics import holder_estimate
from .errors import DivergentTailsError, ParameterError
from .interval_maps import PiecewiseMap
from .return_time import ReturnTime, return_time_from_config

__all__ = ["ReturnTime", "return_time_from_config", "HypothesisReport", "check_conditions",
           "lorenz_params", "exp_tails", "iterate_contraction"]


@dataclass
class HypothesisReport:
    alpha: float
    sigma: float
    z_samples: List[complex]
    holder_constants: List[float]
    holder_stable: List[bool]
    expanding_values: List[float]
    expanding_tail: float
    expanding_sup: float
    sum_value: float
    tails_integral: float
    verdicts: Dict[str, bool]
    first_failing_branch: Optional[int] = None
    iterate_suggestion: Optional[int] = None
    iterate_contractions: List[float] = field(default_factory=list)
    iterate_alpha: Optional[float] = None
    unscaled_contractions: Optional[List[float]] = None

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def as_dict(self) -> dict:
        d = asdict(self)
        d["z_samples"] = [[z.real, z.imag] for z in self.z_samples]
        d["passed"] = self.passed
        return d

    def to_json(self, path=None) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, list):
                return [clean(x) for x in v]
            return v
        text = json.dumps(clean(self.as_dict()), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def table(self) -> str:
        lines = [f"alpha={self.alpha:.6g}  sigma={self.sigma:.6g}"]
        for name, ok in self.verdicts.items():
            lines.append(f"  {name:<10} {'pass' if ok else 'FAIL'}")
        lines.append(f"  expanding sup   = {self.expanding_sup:.6g}")
        lines.append(f"  sum value       = {self.sum_value:.6g}")
        lines.append(f"  tails integral  = {self.tails_integral:.6g}")
        lines.append(f"  holder max      = {max(self.holder_constants):.6g}")
        if self.first_failing_branch is not None:
            lines.append(f"  first failing branch: {self.first_failing_branch}")
        if self.iterate_suggestion is not None:
            lines.append(f"  suggested iterate: n={self.iterate_suggestion} "
                         f"(holder exponent {self.iterate_alpha})")
        elif not self.verdicts.get("expanding", True):
            lines.append("  no contracting iterate found on the listed branches")
        return "\n".join(lines)


def _sigma_sup_tau(fmap: PiecewiseMap, tau: ReturnTime, sigma: float) -> np.ndarray:
    return np.array([sigma * tau.sup_on(b.domain) for b in fmap.branches])


def _tail_exp_form(fmap: PiecewiseMap, tau: ReturnTime, sigma: float) -> Optional[Tuple[float, float]]:
    form = tau.tail_form(fmap.tail, "sup")
    if form is None:
        return None
    return (sigma * form[0], sigma * form[1])


def exp_tails(fmap: PiecewiseMap, tau: ReturnTime, sigma: float) -> float:
    """``int_Omega exp(sigma * tau) dx``; raises DivergentTailsError when infinite."""
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    total = 0.0
    for b in fmap.branches:
        total += tau.exp_integral(sigma, b.domain.lo, b.domain.hi)
    if fmap.tail is not None:
        reg = fmap.tail.region
        if tau.family in ("constant", "lorenz_log"):
            total += tau.exp_integral(sigma, reg.lo, reg.hi)
        else:
            # bounding series sum |omega_i| exp(sigma sup tau_i)
            form = _tail_exp_form(fmap, tau, sigma)
            total += math.inf if form is None else fmap.tail.mass_series(*form)
    if not math.isfinite(total):
        raise DivergentTailsError(f"int exp(sigma*tau) diverges at sigma={sigma}")
    return total


def iterate_contraction(fmap: PiecewiseMap, n: int, samples: int = 2000, seed: int = 0
                        ) -> float:
    """Sampled ``sup 1/|(f^n)'|`` over points whose orbit stays on listed branches."""
    rng = np.random.default_rng(seed)
    best = 0.0
    for b in fmap.branches:
        lo, hi, w = b.domain.lo, b.domain.hi, b.domain.length
        u = rng.random(samples)
        x = np.concatenate([lo + w * u, lo + w * 10.0 ** (-12 * u[: samples // 4]),
                            hi - w * 10.0 ** (-12 * u[samples // 4: samples // 2])])
        x = x[(x > lo) & (x < hi)]
        deriv = np.ones_like(x)
        alive = np.ones(x.shape, dtype=bool)
        for _ in range(n):
            ids = fmap.locate(x, strict=False)
            alive &= ids < fmap.n_listed
            y, _, d = fmap.step(x, strict=False)
            deriv = deriv * np.abs(d)
            x = np.clip(y, fmap.omega.lo, fmap.omega.hi)
            x = np.where((x <= fmap.omega.lo) | (x >= fmap.omega.hi),
                         0.5 * (fmap.omega.lo + fmap.omega.hi), x)
        if np.any(alive):
            best = max(best, float(np.max(1.0 / deriv[alive])))
    return best


def _iterate_holder_ok(fmap: PiecewiseMap, tau: ReturnTime, n: int, alpha: float,
                       zs: List[complex]) -> bool:
    """Holder stability of ``exp(-z tau_n)/|(f^n)'|`` on n-cylinders of listed branches."""

    def orbit(x):
        x = np.asarray(x, dtype=float)
        tau_n = np.zeros_like(x)
        deriv = np.ones_like(x)
        labels = []
        for _ in range(n):
            y, ids, d = fmap.step(x, strict=False)
            labels.append(ids)
            tau_n = tau_n + tau(x)
            deriv = deriv * np.abs(d)
            x = np.clip(y, fmap.omega.lo + 1e-300, fmap.omega.hi)
        return tau_n, deriv, np.array(labels)

    for k, b in enumerate(fmap.branches):
        for j, z in enumerate(zs):
            def g(x, z=z):
                tn, dn, _ = orbit(x)
                return np.exp(-z * tn) / dn
            _, stable = holder_estimate(g, b.domain.lo, b.domain.hi, alpha, 4000,
                                        seed=1000 * k + j, labels=lambda x: orbit(x)[2])
            if not stable:
                return False
    return True


def check_conditions(fmap: PiecewiseMap, tau: ReturnTime, alpha: float, sigma: float,
                     z_samples: int = 5, n_pairs: int = 10_000, max_iterate: int = 12,
                     seed: int = 0) -> HypothesisReport:
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    if z_samples < 1:
        raise ParameterError("z_samples must be >= 1")

    # Holder constants of exp(-z tau)/|f'| for real z in [-sigma, 0]
    zs = [complex(-sigma * k / max(z_samples - 1, 1)) for k in range(z_samples)]
    if z_samples == 1:
        zs = [complex(-sigma)]
    holder, stable = [], []
    for j, z in enumerate(zs):
        H, ok = 0.0, True
        for k, b in enumerate(fmap.branches):
            g = lambda x, b=b, z=z: np.exp(-z * tau(x)) / np.abs(b.derivative(x))  # noqa: E731
            h, s = holder_estimate(g, b.domain.lo, b.domain.hi, alpha, n_pairs, seed + 97 * k + j)
            H, ok = max(H, h), ok and s
        holder.append(H)
        stable.append(ok)

    c = fmap.contractions()
    ssup = _sigma_sup_tau(fmap, tau, sigma)
    expanding = c ** alpha * np.exp(ssup)
    summands = c * np.exp(ssup)
    exp_tail, sum_tail = 0.0, 0.0
    if fmap.tail is not None:
        form = _tail_exp_form(fmap, tau, sigma)
        if form is None:
            exp_tail = sum_tail = math.inf
        else:
            exp_tail = fmap.tail.sup_term(alpha, *form)
            sum_tail = fmap.tail.series(1.0, *form)
    exp_sup = max(float(np.max(expanding)), exp_tail)
    sum_value = float(np.sum(summands)) + sum_tail
    try:
        tails = exp_tails(fmap, tau, sigma)
    except DivergentTailsError:
        tails = math.inf

    verdicts = {
        "holder": bool(all(stable) and all(math.isfinite(h) for h in holder)),
        "expanding": exp_sup < 1,
        "summable": math.isfinite(sum_value),
        "tails": math.isfinite(tails),
    }
    failing = np.nonzero(expanding >= 1)[0]
    first = int(failing[0]) if failing.size else (fmap.n_listed if exp_tail >= 1 else None)

    suggestion, contractions, it_alpha = None, [], None
    if fmap.sup_contraction() >= 1:
        for n in range(1, max_iterate + 1):
            cn = iterate_contraction(fmap, n, seed=seed)
            contractions.append(cn)
            if cn < 1:
                suggestion = n
                break
        if suggestion is not None:
            for a in (alpha, alpha / 2, alpha / 4):
                if _iterate_holder_ok(fmap, tau, suggestion, a, zs):
                    it_alpha = a
                    break

    unscaled = None
    if any("unscaled_contraction" in b.meta for b in fmap.branches):
        unscaled = [b.meta.get("unscaled_contraction", b.contraction) for b in fmap.branches]

    return HypothesisReport(
        alpha=alpha, sigma=sigma, z_samples=zs, holder_constants=holder, holder_stable=stable,
        expanding_values=[float(v) for v in expanding], expanding_tail=exp_tail,
        expanding_sup=exp_sup, sum_value=sum_value, tails_integral=tails, verdicts=verdicts,
        first_failing_branch=first, iterate_suggestion=suggestion,
        iterate_contractions=contractions, iterate_alpha=it_alpha,
        unscaled_contractions=unscaled,
    )


def lorenz_params(lam: float, beta: float, gamma: float) -> Tuple[float, float]:
    """Holder exponent and largest admissible decay rate for the power-law model.

    ``alpha = min(gamma, (1-beta)/(2-beta))`` and ``sigma_max = alpha*lam*(1-beta)``;
    any ``sigma < sigma_max`` also satisfies ``sigma <= lam*(1-beta-alpha)``.
    """
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    if not 0 < beta < 1:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")
    if not 0 < gamma < 1:
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma}")
    alpha = min(gamma, (1 - beta) / (2 - beta))
    sigma_max = alpha * lam * (1 - beta)
    assert sigma_max <= lam * (1 - beta - alpha) * (1 + 1e-12) + 1e-15
    return alpha, sigma_max
