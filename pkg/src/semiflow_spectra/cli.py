"""Command line driver.

    semiflow-spectra <task> --config cfg.json --output dir [--threads N] [--override-strip]

Exit codes: 0 success, 2 computed but a hypothesis verdict failed, 1 error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
import warnings
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import SemiflowError
from .gbv_norm import GbvParams, default_eps0
from .hypothesis import check_conditions, lorenz_params
from .interval_maps import map_from_config
from .laplace_resonances import (StripGrid, resonance_scan, rho_hat_quadrature,
                                 rho_hat_series)
from .return_time import return_time_from_config
from .suspension import Observable, SuspensionSemiflow, b_term_decay, correlation
from .transfer_operator import Weight, invariant_density, verify_ly

TASKS = ("check", "density", "correlation", "ly_verify", "resonances", "rho_hat")


class ConfigError(Exception):
    def __init__(self, field: str, msg: str):
        super().__init__(f"{field}: {msg}")
        self.field = field


def _get(d: dict, key: str, where: str, conv: Callable = float, default: Any = ...):
    if key not in d:
        if default is ...:
            raise ConfigError(f"{where}.{key}", "missing required field")
        return default
    try:
        return conv(d[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key}", f"invalid value {d[key]!r} ({exc})") from None


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, (int, float)):
        return complex(v)
    raise ValueError("expected a number or [re, im]")


def _pair(v) -> tuple:
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ValueError("expected [lo, hi]")
    return (float(v[0]), float(v[1]))


def _observable(spec, where: str) -> Observable:
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError(where, "observable must be a name or {\"name\": ...}")
    name = spec["name"]
    if name == "const":
        return Observable.const(_get(spec, "value", where, _complex, 1.0))
    if name == "coordinate_x":
        return Observable.coordinate_x()
    if name == "fiber_phase":
        return Observable.fiber_phase(_get(spec, "k", where, int, 1))
    if name == "smooth":
        return Observable.smooth()
    raise ConfigError(f"{where}.name", f"unknown observable {name!r}")


def _weight(spec, tau, where: str) -> Weight:
    if spec in (None, "unit"):
        return Weight.unit()
    if isinstance(spec, dict) and "z" in spec:
        return Weight.twisted(_get(spec, "z", where, _complex), tau)
    raise ConfigError(where, "weight must be \"unit\" or {\"z\": [re, im]}")


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


class Run:
    def __init__(self, cfg: dict, out: str, threads: int, override: bool):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.override = override
        self.outputs: List[str] = []
        self.tolerances: Dict[str, Any] = {}
        self.notes: List[str] = []
        system = cfg.get("system")
        if not isinstance(system, dict):
            raise ConfigError("system", "missing or not an object")
        if "map" not in system:
            raise ConfigError("system.map", "missing required field")
        try:
            self.map = map_from_config(system["map"])
        except KeyError as exc:
            raise ConfigError(f"system.map.{exc.args[0]}", "missing required field") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError("system.map", str(exc)) from None
        try:
            self.tau = return_time_from_config(system["tau"]) if "tau" in system else None
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("system.tau", str(exc)) from None
        self.params = cfg.get("params", {})
        if not isinstance(self.params, dict):
            raise ConfigError("params", "must be an object")
        self.seed = _get(cfg, "seed", "config", int, 0)

    def path(self, name: str) -> str:
        self.outputs.append(name)
        return os.path.join(self.out, name)

    def need_tau(self):
        if self.tau is None:
            raise ConfigError("system.tau", "this task needs a return time")
        return self.tau

    def p(self, key, conv=float, default=...):
        return _get(self.params, key, "params", conv, default)

    def semiflow(self, n_cells: int) -> SuspensionSemiflow:
        base = self.p("base_nodes", int, None)
        sigma = self.p("sigma", float, None)
        return SuspensionSemiflow.build(self.map, self.need_tau(), n_cells, base, sigma)

    # tasks return True when every verdict passed

    def task_check(self) -> bool:
        tau = self.need_tau()
        recipe = None
        if "gamma" in self.params:
            mp = self.map.params
            if self.map.name != "lorenz":
                raise ConfigError("params.gamma", "the gamma recipe applies to the lorenz family")
            lam, beta = float(mp["lambda"]), float(mp["beta"])
            alpha, sigma_max = lorenz_params(lam, beta, self.p("gamma"))
            sigma = self.p("sigma", float, 0.99 * sigma_max)
            recipe = {"alpha": alpha, "sigma_max": sigma_max, "sigma": sigma,
                      "rate_below_max": sigma < sigma_max,
                      "rate_below_gap": sigma <= lam * (1 - beta - alpha)}
            alpha = self.p("alpha", float, alpha)
        else:
            alpha, sigma = self.p("alpha"), self.p("sigma")
        z_samples = self.p("z_samples", int, 5)
        self.tolerances.update(alpha=alpha, sigma=sigma, z_samples=z_samples)
        rep = check_conditions(self.map, tau, alpha, sigma, z_samples, seed=self.seed)
        d = rep.as_dict()
        if recipe is not None:
            d["lorenz_recipe"] = recipe
        _write_json(self.path("report.json"), d)
        with open(self.path("report.txt"), "w") as fh:
            fh.write(rep.table() + "\n")
        print(rep.table())
        ok = rep.passed and (recipe is None or (recipe["rate_below_max"] and recipe["rate_below_gap"]))
        return ok

    def task_density(self) -> bool:
        n = self.p("n", int, 1024)
        tol = self.p("tol", float, 1e-12)
        self.tolerances.update(n=n, tol=tol)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            h = invariant_density(self.map, n, tol)
        self.notes += [str(w.message) for w in caught]
        h.to_csv(self.path("density.csv"))
        return True

    def task_correlation(self) -> bool:
        n_cells = self.p("n_cells", int, 2048)
        quad_n = self.p("quad_n", int, 32)
        ts = self.p("t_grid", lambda v: [float(x) for x in v], [0.0, 0.5, 1.0, 2.0, 4.0])
        u = _observable(self.params.get("u", "const"), "params.u")
        v = _observable(self.params.get("v", "const"), "params.v")
        sf = self.semiflow(n_cells)
        self.tolerances.update(n_cells=n_cells, quad_n=quad_n)
        with open(self.path("correlation.csv"), "w") as fh:
            fh.write("t,re,im,abs,rho_re,rho_im,b_re,b_im\n")
            for t in ts:
                c = correlation(sf, u, v, t, quad_n, threads=self.threads)
                fh.write(f"{t!r},{c.cor.real!r},{c.cor.imag!r},{abs(c.cor)!r},"
                         f"{c.rho.real!r},{c.rho.imag!r},{c.b_term.real!r},{c.b_term.imag!r}\n")
        if sf.sigma is not None:
            dec = b_term_decay(sf, u, v, ts, quad_n=quad_n)
            dec.to_csv(self.path("b_term.csv"))
        return True

    def task_ly_verify(self) -> bool:
        alpha = self.p("alpha", float, 0.5)
        eps0 = self.p("eps0", float, default_eps0(self.map))
        delta = self.p("delta", float, 1.0)
        trials = self.p("trials", int, 100)
        holder_trials = self.p("holder_trials", int, 50)
        n = self.p("n", int, 1024)
        w = _weight(self.params.get("weight"), self.tau, "params.weight")
        if w.kind == "twisted" and self.tau is None:
            raise ConfigError("system.tau", "a twisted weight needs a return time")
        self.tolerances.update(alpha=alpha, eps0=eps0, delta=delta, n=n, slack=0.05)
        rep = verify_ly(self.map, w, GbvParams(alpha, eps0), delta, trials, holder_trials, n,
                        self.seed)
        _write_json(self.path("ly_report.json"), rep.as_dict())
        return not rep.violations

    def task_resonances(self) -> bool:
        n_cells = self.p("n_cells", int, 512)
        grid = StripGrid(self.p("re_range", _pair, (-0.2, 0.0)),
                         self.p("im_range", _pair, (-8.0, 8.0)),
                         self.p("n_re", int, 5), self.p("n_im", int, 161))
        refine_tol = self.p("refine_tol", float, 1e-10)
        sf = self.semiflow(n_cells)
        self.tolerances.update(n_cells=n_cells, refine_tol=refine_tol, detection=0.1,
                               newton_step=1e-5)
        scan = resonance_scan(sf, grid, n_cells, refine_tol, override=self.override,
                              threads=self.threads)
        scan.to_csv(self.path("scan.csv"))
        scan.to_json(self.path("poles.json"))
        if scan.outside_proven_strip:
            self.notes.append("outside proven strip")
        for p in scan.poles:
            print(f"pole z = {p.z.real:+.10f} {p.z.imag:+.10f}i  residual {p.residual:.2e}")
        return True

    def task_rho_hat(self) -> bool:
        zs = self.p("z", lambda v: [_complex(x) for x in v])
        n_cells = self.p("n_cells", int, 512)
        n_max = self.p("n_max", int, 200)
        t_max = self.p("t_max", float, 30.0)
        n_t = self.p("n_t", int, 30)
        quad_n = self.p("quad_n", int, 32)
        method = self.p("method", str, "both")
        if method not in ("series", "quadrature", "both"):
            raise ConfigError("params.method", f"unknown method {method!r}")
        u = _observable(self.params.get("u", "const"), "params.u")
        v = _observable(self.params.get("v", "const"), "params.v")
        sf = self.semiflow(self.p("density_cells", int, n_cells))
        self.tolerances.update(n_cells=n_cells, n_max=n_max, t_max=t_max, n_t=n_t, quad_n=quad_n)
        series = [rho_hat_series(sf, u, v, z, n_max, n_cells, quad_n) if method != "quadrature"
                  else None for z in zs]
        quad = (rho_hat_quadrature(sf, u, v, zs, t_max, n_t, quad_n, threads=self.threads)
                if method != "series" else [None] * len(zs))
        nan = float("nan")
        with open(self.path("rho_hat.csv"), "w") as fh:
            fh.write("re_z,im_z,series_re,series_im,series_bound,quad_re,quad_im,quad_bound\n")
            for z, s, q in zip(zs, series, quad):
                sv, sb = (s.value, s.bound) if s else (complex(nan, nan), nan)
                qv, qb = (q.value, q.bound) if q else (complex(nan, nan), nan)
                fh.write(f"{z.real!r},{z.imag!r},{sv.real!r},{sv.imag!r},{sb!r},"
                         f"{qv.real!r},{qv.imag!r},{qb!r}\n")
        return True


def run(task: str, config_path: str, output: str, threads: Optional[int] = None,
        override: bool = False) -> int:
    t0 = time.time()
    threads = threads or os.cpu_count() or 1
    try:
        if task not in TASKS:
            raise ConfigError("task", f"unknown task {task!r}; expected one of {', '.join(TASKS)}")
        try:
            with open(config_path) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {config_path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"malformed JSON ({exc})") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config", "top level must be an object")
        if "task" in cfg and cfg["task"] != task:
            raise ConfigError("task", f"config says {cfg['task']!r} but {task!r} was requested")
        os.makedirs(output, exist_ok=True)
        r = Run(cfg, output, threads, override)
        with threadpool_limits(limits=1):
            ok = getattr(r, f"task_{task}")()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SemiflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyError as exc:
        print(f"error: missing field {exc}", file=sys.stderr)
        return 1
    code = 0 if ok else 2
    manifest = {
        "task": task, "config": cfg, "seed": r.seed, "threads": threads,
        "override_strip": override, "exit_code": code, "tolerances": r.tolerances,
        "notes": r.notes, "outputs": sorted(r.outputs + ["manifest.json"]),
        "versions": {"semiflow_spectra": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "timings": {"wall_seconds": time.time() - t0},
    }
    _write_json(os.path.join(output, "manifest.json"), manifest)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="semiflow-spectra",
                                 description="Transfer operators and resonances of suspension semiflows")
    ap.add_argument("task", help="one of: " + ", ".join(TASKS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--output", required=True, help="output directory")
    ap.add_argument("--threads", type=int, default=None, help="worker count (default: all cores)")
    ap.add_argument("--override-strip", action="store_true",
                    help="allow scanning left of the proven strip")
    args = ap.parse_args(argv)
    return run(args.task, args.config, args.output, args.threads, args.override_strip)


if __name__ == "__main__":
    sys.exit(main())
