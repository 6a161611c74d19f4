"""Poincare section {x_c = 0}, first-return map and periodic-orbit search.

A state on the section is flowed until its barycenter reaches 2*pi and is
then translated back by -2*pi.  A fixed point of this map is a solution
that is periodic modulo the 2*pi translation.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .bounds import speed_floor
from .dynamics import IntegratorOptions, advance, max_speed, simulate, step
from .flux import FluxConstants, FluxModel, FrameworkViolation
from .measures import (FrequencyMarginal, QuantileKernel, band_kernel, barycenter, center,
                       dirac_kernel, graph_kernel, shift, state_from_dict, state_to_dict)
from .ot1d import d1_kernel, d2_kernel, kernel_geodesic

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
SECTION_TOL = 1e-9
DIVERGENCE_FACTOR = 10.0
DIVERGENCE_WINDOW = 10


class NoReturnError(RuntimeError):
    """The barycenter did not reach the next section before the time limit."""


@dataclass
class ReturnResult:
    T_return: float
    state_at_return: QuantileKernel
    crossing_refinements: int
    steps: int


@dataclass
class FixedPointResult:
    state: QuantileKernel
    period: float
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    relax: float = 1.0
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "relax": self.relax,
            "message": self.message,
            "state": state_to_dict(self.state),
            "history": [list(h) for h in self.history],
        }


def save_orbit(result: FixedPointResult, path) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), sort_keys=True, indent=1))


def load_orbit(path) -> tuple[QuantileKernel, float]:
    data = json.loads(Path(path).read_text())
    return state_from_dict(data["state"]), float(data["period"])


def first_return(K0: QuantileKernel, model: FluxModel,
                 opts: IntegratorOptions = IntegratorOptions()) -> ReturnResult:
    """Flow until x_c reaches barycenter(K0) + 2*pi; the last sub-step is found by root bracketing."""
    x0 = barycenter(K0)
    target = x0 + TWO_PI
    K, t, xc, steps = K0, 0.0, x0, 0
    while True:
        K_next = step(K, model, opts.dt, opts.method)
        xc_next = barycenter(K_next)
        steps += 1
        if xc_next <= xc:
            raise FrameworkViolation(
                f"barycenter not increasing at t={t:.6g} ({xc:.12g} -> {xc_next:.12g})")
        if xc_next >= target:
            break
        K, t, xc = K_next, t + opts.dt, xc_next
        if t > opts.max_time:
            raise NoReturnError(f"no return within t={opts.max_time:g}")

    if xc_next == target:
        return ReturnResult(t + opts.dt, K_next, 0, steps)
    count = [0]

    def miss(h):
        count[0] += 1
        return barycenter(step(K, model, h, opts.method)) - target

    h = brentq(miss, 0.0, opts.dt, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    K_ret = step(K, model, h, opts.method)
    if abs(barycenter(K_ret) - target) > opts.event_tolerance:
        raise FrameworkViolation("crossing refinement did not reach the event tolerance")
    return ReturnResult(t + h, K_ret, count[0], steps)


def poincare_map(K0: QuantileKernel, model: FluxModel,
                 opts: IntegratorOptions = IntegratorOptions()) -> tuple[QuantileKernel, float]:
    """Return ``(P(K0), T(K0))``."""
    r = first_return(K0, model, opts)
    return shift(r.state_at_return, -TWO_PI), r.T_return


def _require_section(K: QuantileKernel, tol: float = SECTION_TOL) -> None:
    if abs(barycenter(K)) > tol:
        raise ValueError(f"state is not on the section (x_c = {barycenter(K):.3e})")


def find_periodic(K0: QuantileKernel, model: FluxModel,
                  opts: IntegratorOptions = IntegratorOptions(), tol: float = 1e-6,
                  max_iter: int = 200, relax: Union[str, float] = "auto") -> FixedPointResult:
    """Relaxed fixed-point iteration K <- geodesic(K, P(K), theta).

    ``relax="auto"`` starts with theta = 1 and switches once to theta = 1/2
    when the residual increases.  Each iterate is re-centered on the section
    to stop round-off drift.  The best iterate seen is returned.
    """
    _require_section(K0)
    auto = relax == "auto"
    theta = 1.0 if auto else float(relax)
    if not 0.0 < theta <= 1.0:
        raise ValueError("relax must lie in (0, 1]")
    K = K0
    history = []
    best = None
    message = ""
    for it in range(max_iter + 1):
        PK, T = poincare_map(K, model, opts)
        res = d2_kernel(K, PK)
        history.append((it, res, T))
        log.debug("iter %d residual %.3e period %.12g theta %.2f", it, res, T, theta)
        if best is None or res < best[1]:
            best = (K, res, T, it)
        if res <= tol:
            return FixedPointResult(K, T, res, it, True, history, theta, "converged")
        if it == max_iter:
            message = "max_iter reached"
            break
        if len(history) > DIVERGENCE_WINDOW:
            past = history[-1 - DIVERGENCE_WINDOW][1]
            if res > DIVERGENCE_FACTOR * past:
                if auto and theta == 1.0:
                    log.info("residual grew %.1fx; switching to theta=1/2", res / past)
                    theta = 0.5
                    K = best[0]
                    continue
                message = "diverged"
                break
        if auto and theta == 1.0 and len(history) > 1 and res > history[-2][1]:
            log.info("residual increased at iteration %d; switching to theta=1/2", it)
            theta = 0.5
        K = center(kernel_geodesic(K, PK, theta))
    K, res, T, it = best
    return FixedPointResult(K, T, res, len(history) - 1, False, history, theta, message)


@dataclass
class Certificate:
    period: float
    sample_times: np.ndarray
    mismatches: np.ndarray

    @property
    def max_mismatch(self) -> float:
        return float(self.mismatches.max())

    def to_dict(self) -> dict:
        return {"period": self.period, "sample_times": self.sample_times.tolist(),
                "mismatches": self.mismatches.tolist(), "max_mismatch": self.max_mismatch}


def certify_periodic(K_star: QuantileKernel, model: FluxModel, period: float,
                     opts: IntegratorOptions = IntegratorOptions(), samples: int = 8) -> Certificate:
    """Compare K_{t+T*} with the 2*pi translate of K_t at ``samples`` times in [0, T*)."""
    times = period * np.arange(samples) / samples
    out = np.empty(samples)
    for i, t in enumerate(times):
        Kt = advance(K_star, model, t, opts.dt, opts.method)
        KtT = advance(Kt, model, period, opts.dt, opts.method)
        out[i] = d2_kernel(KtT, shift(Kt, TWO_PI))
    return Certificate(period, times, out)


# -- probes ----------------------------------------------------------------

def _floor_or_raise(model, consts, gamma, D):
    floor = speed_floor(model.kappa, gamma, D, consts)
    if floor <= 0.0:
        raise FrameworkViolation("speed floor is not positive; bounds are void")
    return floor


def return_time_bound(model: FluxModel, consts: FluxConstants, gamma: float, D: float) -> float:
    """Lipschitz constant of the return time with respect to d1."""
    floor = _floor_or_raise(model, consts, gamma, D)
    return math.expm1(TWO_PI * model.kappa * (consts.M + consts.I) / floor) / floor


def map_lipschitz_bound(model: FluxModel, consts: FluxConstants, gamma: float, D: float,
                        f_max: float) -> float:
    floor = _floor_or_raise(model, consts, gamma, D)
    C = TWO_PI * model.kappa * (consts.M + consts.I) / floor
    return math.exp(C) + f_max * math.expm1(C) / floor


def return_time_lipschitz_probe(model: FluxModel, pairs: Sequence, opts: IntegratorOptions,
                                consts: Optional[FluxConstants] = None, gamma: float = 0.0,
                                D: float = 0.0) -> dict:
    """Max |T(K) - T(K')| / d1(K, K') over pairs, alongside the theoretical bound."""
    worst, used = 0.0, 0
    for K, Kp in pairs:
        d = d1_kernel(K, Kp)
        if d < 1e-14:
            continue
        used += 1
        dT = abs(first_return(K, model, opts).T_return - first_return(Kp, model, opts).T_return)
        worst = max(worst, dT / d)
    bound = return_time_bound(model, consts, gamma, D) if consts is not None else math.nan
    return {"quotient": worst, "bound": bound, "pairs_used": used}


def map_lipschitz_probe(model: FluxModel, pairs: Sequence, opts: IntegratorOptions,
                        consts: Optional[FluxConstants] = None, gamma: float = 0.0,
                        D: float = 0.0) -> dict:
    """Max d2(P K, P K') / d2(K, K') over pairs, alongside the theoretical bound."""
    worst, used, f_max = 0.0, 0, 0.0
    for K, Kp in pairs:
        d = d2_kernel(K, Kp)
        if d < 1e-14:
            continue
        used += 1
        images = []
        for S in (K, Kp):
            PS, T = poincare_map(S, model, opts)
            images.append(PS)
            f_max = max(f_max, max_speed(simulate(S, model, T, opts), model))
        worst = max(worst, d2_kernel(images[0], images[1]) / d)
    bound = (map_lipschitz_bound(model, consts, gamma, D, f_max)
             if consts is not None else math.nan)
    return {"quotient": worst, "bound": bound, "pairs_used": used}


# -- initial guesses -------------------------------------------------------

def initial_guess(nu: FrequencyMarginal, kind: str = "dirac", n_levels: int = 1,
                  slope: float = 0.0, width: float = 0.0) -> QuantileKernel:
    """Section state of the requested family, centered to zero barycenter.

    ``dirac``: delta_0 x nu; ``graph``: x = slope*(omega - omega_c);
    ``band``: uniform rows of ``width`` around the graph.
    """
    if kind == "dirac":
        K = dirac_kernel(nu, 0.0, n_levels)
    elif kind == "graph":
        K = graph_kernel(nu, slope * (nu.omegas - nu.omega_c), n_levels)
    elif kind == "band":
        K = band_kernel(nu, width, n_levels, slope=slope)
    else:
        raise ValueError(f"unknown initial guess {kind!r}")
    return center(K)
