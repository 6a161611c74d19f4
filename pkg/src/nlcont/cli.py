"""Command-line interface: ``nlcont {check,simulate,find-periodic,dist,graph-periodic}``.

Exit codes: 0 success, 1 condition failure or non-convergence, 2 bad
configuration or input file.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .bounds import (CONDITION_NAMES, ConditionError, check_conditions, choose_dispersion,
                     compute_profiles, feasibility)
from .dynamics import IntegratorOptions, simulate
from .flux import FluxModel, constants_report
from .graph import GraphState, kernel_to_graph
from .measures import FrequencyMarginal, StateFileError, load_state, save_state
from .ot1d import GridMismatchError, d1_kernel, d2_kernel
from .poincare import certify_periodic, find_periodic, initial_guess

log = logging.getLogger("nlcont")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}


class ConfigError(ValueError):
    """The run configuration is malformed."""


# -- configuration ---------------------------------------------------------

_TOP_KEYS = {"flux", "nu", "quantiles", "initial", "integrator", "seeds", "D"}
_FLUX_KEYS = {"kind", "kappa", "omega_c", "g"}
_INITIAL_KEYS = {"kind", "params"}
_PARAM_KEYS = {"slope", "width"}
_INTEGRATOR_KEYS = {"dt", "method"}


def _reject_unknown(block: dict, allowed: set, where: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(block) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(extra)}")


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "dirac"
    slope: float = 0.0
    width: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    model: FluxModel
    nu: FrequencyMarginal
    quantiles: int = 1
    initial: tuple = (InitialSpec(),)
    dt: float = 0.01
    method: str = "rk4"
    seed: int = 0
    D: Optional[float] = None
    raw: dict = field(default_factory=dict, compare=False)

    def integrator(self, dt: Optional[float] = None, stride: int = 10) -> IntegratorOptions:
        return IntegratorOptions(dt=dt or self.dt, method=self.method, store_stride=stride)


def _parse_nu(block, omega_c):
    if block is None:
        if omega_c is None:
            raise ConfigError("either a nu block or flux.omega_c is required")
        return FrequencyMarginal.dirac(float(omega_c))
    if "distribution" in block:
        _reject_unknown(block, {"distribution", "support", "nodes"}, "nu")
        if block["distribution"] != "uniform":
            raise ConfigError(f"unsupported distribution {block['distribution']!r}")
        a, b = block["support"]
        nu = FrequencyMarginal.uniform(float(a), float(b), int(block["nodes"]))
    else:
        _reject_unknown(block, {"omegas", "weights"}, "nu")
        nu = FrequencyMarginal(block["omegas"], block["weights"])
    if omega_c is not None and abs(nu.omega_c - float(omega_c)) > 1e-9:
        raise ConfigError(f"flux.omega_c={omega_c} disagrees with the nu mean {nu.omega_c}")
    return nu


def _parse_initial(block) -> tuple:
    blocks = block if isinstance(block, list) else [block]
    out = []
    for b in blocks:
        _reject_unknown(b, _INITIAL_KEYS, "initial")
        params = b.get("params", {})
        _reject_unknown(params, _PARAM_KEYS, "initial.params")
        kind = b.get("kind", "dirac")
        if kind not in ("dirac", "graph", "band"):
            raise ConfigError(f"unknown initial kind {kind!r}")
        out.append(InitialSpec(kind, float(params.get("slope", 0.0)),
                               float(params.get("width", 0.0))))
    if not out:
        raise ConfigError("initial list is empty")
    return tuple(out)


def parse_config(data: dict) -> RunConfig:
    """Validate a config mapping; raise :class:`ConfigError` on any problem."""
    try:
        _reject_unknown(data, _TOP_KEYS, "config")
        if "flux" not in data:
            raise ConfigError("missing flux block")
        fb = data["flux"]
        _reject_unknown(fb, _FLUX_KEYS, "flux")
        nu = _parse_nu(data.get("nu"), fb.get("omega_c"))
        kind, kappa = fb.get("kind"), float(fb.get("kappa", 0.0))
        if kind == "winfree":
            if "g" in fb:
                raise ConfigError("g is only meaningful for kuramoto")
            model = FluxModel.winfree(kappa)
        elif kind == "kuramoto":
            model = FluxModel.kuramoto(kappa, fb.get("g"))
            model.weights_g(nu)
        else:
            raise ConfigError(f"unknown flux kind {kind!r}")
        integ = data.get("integrator", {})
        _reject_unknown(integ, _INTEGRATOR_KEYS, "integrator")
        D = data.get("D")
        cfg = RunConfig(model, nu, int(data.get("quantiles", 1)),
                        _parse_initial(data.get("initial", {"kind": "dirac"})),
                        float(integ.get("dt", 0.01)), integ.get("method", "rk4"),
                        int(data.get("seeds", 0)), None if D is None else float(D), data)
        if cfg.quantiles < 1:
            raise ConfigError("quantiles must be >= 1")
        if cfg.D is not None and not cfg.D > 0.0:
            raise ConfigError("D must be positive")
        cfg.integrator()
        return cfg
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(data)


def _emit(obj: dict, out: Optional[str]) -> None:
    text = json.dumps(obj, sort_keys=True, indent=1, default=_json_default)
    if out:
        Path(out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _finite(x: float):
    return x if math.isfinite(x) else None


# -- commands --------------------------------------------------------------

def check_report(cfg: RunConfig) -> tuple[dict, list]:
    """Constants, conditions, feasibility and envelope summary; returns (report, failed names)."""
    model, nu = cfg.model, cfg.nu
    consts = constants_report(model, nu, rng=cfg.seed)
    report = {"flux": model.to_dict(), "nu": nu.to_dict(), "gamma": nu.gamma,
              "constants": consts.to_dict(), "seed": cfg.seed}
    if not consts.ok:
        return report, list(consts.failing)
    kappa, gamma = model.kappa, nu.gamma
    if 0.0 < kappa < 1.0:
        report["feasibility"] = feasibility(kappa, consts)._asdict()
    try:
        D = cfg.D if cfg.D is not None else choose_dispersion(kappa, gamma, consts)
    except ConditionError as exc:
        report["conditions"] = {"param1": {"holds": False, "message": str(exc)}}
        return report, ["param1"]
    conds = check_conditions(kappa, gamma, D, consts)
    report["D"] = D
    report["conditions"] = {k: {kk: _finite(vv) if isinstance(vv, float) else vv
                                for kk, vv in v.to_dict().items()} for k, v in conds.items()}
    failed = [n for n in CONDITION_NAMES if not conds[n].holds]
    if "param1" not in failed:
        prof = compute_profiles(model, nu, consts=consts, D=D, strict=False)
        summary = prof.summary()
        summary.pop("conditions")
        report["profiles"] = summary
    return report, failed


def cmd_check(cfg: RunConfig, out: Optional[str]) -> int:
    report, failed = check_report(cfg)
    report["failed"] = failed
    report["ok"] = not failed
    _emit(report, out)
    for name in failed:
        log.error("condition failed: %s", name)
    return EXIT_OK if not failed else EXIT_FAIL


def _initial_state(cfg: RunConfig, spec: InitialSpec, n_levels: Optional[int] = None):
    return initial_guess(cfg.nu, spec.kind, n_levels or cfg.quantiles,
                         slope=spec.slope, width=spec.width)


def _profiles_or_none(cfg: RunConfig):
    consts = constants_report(cfg.model, cfg.nu, rng=cfg.seed)
    if not consts.ok:
        return None
    try:
        return compute_profiles(cfg.model, cfg.nu, consts=consts, D=cfg.D, strict=False)
    except (ConditionError, ValueError) as exc:
        log.warning("envelopes unavailable: %s", exc)
        return None


def cmd_simulate(cfg: RunConfig, t_end: float, out: str, dt: Optional[float] = None) -> int:
    K0 = _initial_state(cfg, cfg.initial[0])
    traj = simulate(K0, cfg.model, t_end, cfg.integrator(dt), profiles=_profiles_or_none(cfg))
    out = Path(out)
    traj.to_csv(out)
    save_state(traj.final, out.with_suffix(".state.json"))
    return EXIT_OK


def _search_one(args):
    cfg, spec, tol, max_iter, relax, dt, n_levels = args
    K0 = _initial_state(cfg, spec, n_levels)
    return find_periodic(K0, cfg.model, cfg.integrator(dt), tol=tol, max_iter=max_iter,
                         relax=relax)


def _multi_start(cfg, tol, max_iter, relax, dt, jobs, n_levels=None):
    tasks = [(cfg, spec, tol, max_iter, relax, dt, n_levels) for spec in cfg.initial]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_search_one, tasks))
    else:
        results = [_search_one(t) for t in tasks]
    return min(results, key=lambda r: r.residual)


def _orbit_dict(cfg, res, certify_dt):
    d = res.to_dict()
    d["seed"] = cfg.seed
    if res.converged:
        cert = certify_periodic(res.state, cfg.model, res.period, cfg.integrator(certify_dt))
        d["certificate"] = cert.to_dict()
    return d


def cmd_find_periodic(cfg: RunConfig, tol: float, max_iter: int, relax, out: Optional[str],
                      dt: Optional[float] = None, jobs: int = 1) -> int:
    res = _multi_start(cfg, tol, max_iter, relax, dt, jobs)
    _emit(_orbit_dict(cfg, res, dt), out)
    if not res.converged:
        log.error("no convergence: %s (residual %.3e)", res.message, res.residual)
    return EXIT_OK if res.converged else EXIT_FAIL


def cmd_graph_periodic(cfg: RunConfig, tol: float, max_iter: int, relax, out: Optional[str],
                       dt: Optional[float] = None, jobs: int = 1) -> int:
    for spec in cfg.initial:
        if spec.kind == "band":
            raise ConfigError("graph-periodic needs dirac or graph initial states")
    res = _multi_start(cfg, tol, max_iter, relax, dt, jobs, n_levels=1)
    g: GraphState = kernel_to_graph(res.state)
    d = _orbit_dict(cfg, res, dt)
    d["graph"] = {"omega": g.nu.omegas.tolist(), "G": g.G.tolist()}
    _emit(d, out)
    if out:
        g.to_csv(Path(out).with_suffix(".graph.csv"))
    return EXIT_OK if res.converged else EXIT_FAIL


def cmd_dist(a_path: str, b_path: str, metric: str) -> int:
    A, B = load_state(a_path), load_state(b_path)
    value = d2_kernel(A, B) if metric == "d2" else d1_kernel(A, B)
    print(repr(value))
    return EXIT_OK


# -- entry point -----------------------------------------------------------

def _relax(text: str):
    if text == "auto":
        return "auto"
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("relax must be 'auto' or a number in (0, 1]")
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError("relax must lie in (0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlcont", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--config", required=True, help="run configuration (JSON)")
        sp.add_argument("--out", required=out_required, help="output path")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--dt", type=float, help="override the integrator step")
        sp.add_argument("--jobs", type=int, default=1, help="parallel workers")

    common(sub.add_parser("check", help="constants, conditions and envelopes"))
    sp = sub.add_parser("simulate", help="integrate and write a trajectory CSV")
    common(sp, out_required=True)
    sp.add_argument("--t-end", type=float, required=True)
    for name in ("find-periodic", "graph-periodic"):
        sp = sub.add_parser(name, help="fixed point of the return map")
        common(sp)
        sp.add_argument("--tol", type=float, default=1e-6)
        sp.add_argument("--max-iter", type=int, default=200)
        sp.add_argument("--relax", type=_relax, default="auto")
    sp = sub.add_parser("dist", help="distance between two state files")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--metric", choices=("d1", "d2"), default="d2")
    return p


def _setup_logging() -> None:
    level = LOG_LEVELS.get(os.environ.get("NLCONT_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "dist":
            return cmd_dist(args.a, args.b, args.metric)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = RunConfig(**{**cfg.__dict__, "seed": args.seed})
        if args.dt is not None and not args.dt > 0.0:
            raise ConfigError("--dt must be positive")
        if args.command == "check":
            return cmd_check(cfg, args.out)
        if args.command == "simulate":
            if args.t_end < 0.0:
                raise ConfigError("--t-end must be nonnegative")
            return cmd_simulate(cfg, args.t_end, args.out, args.dt)
        fn = cmd_find_periodic if args.command == "find-periodic" else cmd_graph_periodic
        return fn(cfg, args.tol, args.max_iter, args.relax, args.out, args.dt, args.jobs)
    except (ConfigError, StateFileError, GridMismatchError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
