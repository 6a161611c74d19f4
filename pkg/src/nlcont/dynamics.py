"""Characteristic flow of the nonlocal continuity equation on quantile states.

Each quantile entry X[j][i] is a characteristic x' = F[mu_t](x, omega_j);
the state mu_t is the kernel formed by all entries, so one RK4 step of the
particle system is one step of the measure-valued solution.  The nonlocal
moments are recomputed at every stage.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .flux import FluxConstants, FluxModel, leader_flux, velocity
from .measures import (QuantileKernel, barycenter, diam_x, lipschitz_in_omega)
from .ot1d import MONOTONE_TOL, MonotonicityError, repair_monotone

log = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("t", "x_c", "diam_x", "gamma_max", "drift_gap",
                      "delta_margin", "delta_tilde_margin")


class StepSizeError(RuntimeError):
    """Characteristics crossed during a step: the step size is too large."""


@dataclass(frozen=True)
class IntegratorOptions:
    dt: float = 0.01
    method: str = "rk4"
    store_stride: int = 10
    event_tolerance: float = 1e-10
    max_time: float = 1e4

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.method not in ("rk4", "heun"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.store_stride < 1:
            raise ValueError("store_stride must be >= 1")


def _advance(model: FluxModel, nu, X: np.ndarray, dt: float, method: str) -> np.ndarray:
    f = lambda Y: velocity(model, nu, Y)
    if method == "heun":
        k1 = f(X)
        k2 = f(X + dt * k1)
        return X + 0.5 * dt * (k1 + k2)
    k1 = f(X)
    k2 = f(X + 0.5 * dt * k1)
    k3 = f(X + 0.5 * dt * k2)
    k4 = f(X + dt * k3)
    return X + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(K: QuantileKernel, model: FluxModel, dt: float, method: str = "rk4") -> QuantileKernel:
    """One explicit step of every characteristic against the evolving state."""
    X = _advance(model, K.nu, K.values, dt, method)
    try:
        X = repair_monotone(X, MONOTONE_TOL, axis=1)
    except MonotonicityError as exc:
        raise StepSizeError(f"characteristics crossed with dt={dt:g}; reduce the step ({exc})")
    return K.with_values(X)


def advance(K: QuantileKernel, model: FluxModel, t: float, dt: float,
            method: str = "rk4") -> QuantileKernel:
    """Integrate over [0, t] with ceil(t/dt) equal steps."""
    if t <= 0.0:
        return K
    n = max(1, math.ceil(t / dt - 1e-12))
    h = t / n
    for _ in range(n):
        K = step(K, model, h, method)
    return K


# -- diagnostics -----------------------------------------------------------

def mean_velocity(K: QuantileKernel, model: FluxModel) -> float:
    """sum_j w_j mean_i F[K](X[j][i], omega_j), the barycenter speed."""
    return float(np.dot(K.nu.weights, velocity(model, K.nu, K.values).mean(axis=1)))


def drift_gap(K: QuantileKernel, model: FluxModel,
              consts: Optional[FluxConstants] = None) -> tuple[float, float]:
    """Gap between the barycenter speed and the cluster speed F[delta_xc x nu](xc, omega_c).

    Returns ``(gap, bound)``.  The bound uses the deterministic coupling
    to delta_xc x nu, i.e. mean |x - x_c| in place of W1; it is NaN when no
    constants are given.
    """
    xc = barycenter(K)
    gap = abs(mean_velocity(K, model) - float(leader_flux(model, K.nu, xc)))
    if consts is None:
        return gap, math.nan
    spread = float(np.dot(K.nu.weights, np.abs(K.values - xc).mean(axis=1)))
    kappa = model.kappa
    bound = ((kappa + 1.0) * consts.I + kappa * consts.M) * spread + consts.I * K.nu.gamma
    return gap, bound


def gamma_pairwise(K0: QuantileKernel, Kt: QuantileKernel, j: int, k: int) -> float:
    """Transported-coupling ratio Lambda / |omega_j - omega_k| for nodes j, k.

    On a shared quantile grid the optimal coupling of the initial rows
    matches equal indices, and the flow keeps that matching.
    """
    if j == k:
        raise ValueError("gamma_pairwise needs two distinct nodes")
    if K0.values.shape != Kt.values.shape:
        raise ValueError("initial and current states must share a grid")
    lam = math.sqrt(float(np.mean((Kt.values[j] - Kt.values[k]) ** 2)))
    return lam / abs(Kt.nu.omegas[j] - Kt.nu.omegas[k])


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    xc_series: np.ndarray
    diam_series: np.ndarray
    gamma_series: np.ndarray
    drift_gap_series: np.ndarray
    dt: float
    stride: int
    steps: int = 0
    rejected_steps: int = 0
    delta_margin: Optional[np.ndarray] = None
    delta_tilde_margin: Optional[np.ndarray] = None

    @property
    def final(self) -> QuantileKernel:
        return self.states[-1]

    def rows(self):
        n = len(self.times)
        dm = self.delta_margin if self.delta_margin is not None else np.full(n, np.nan)
        dtm = self.delta_tilde_margin if self.delta_tilde_margin is not None else np.full(n, np.nan)
        for r in zip(self.times, self.xc_series, self.diam_series, self.gamma_series,
                     self.drift_gap_series, dm, dtm):
            yield r

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAJECTORY_COLUMNS)
            for r in self.rows():
                w.writerow([f"{v:.17g}" for v in r])


def simulate(K0: QuantileKernel, model: FluxModel, t_end: float,
             opts: IntegratorOptions = IntegratorOptions(), profiles=None,
             consts: Optional[FluxConstants] = None) -> Trajectory:
    """Integrate to ``t_end`` storing every ``opts.store_stride``-th frame (and the last).

    The final step is shortened to land on ``t_end``.  With ``profiles`` the
    envelope margins Delta(x_c) - diam_x and Delta~(x_c) - Lip are recorded.
    """
    if t_end < 0.0:
        raise ValueError("t_end must be nonnegative")
    dt = opts.dt
    n_full = int(math.floor(t_end / dt + 1e-9))
    remainder = t_end - n_full * dt
    if remainder <= 1e-12 * max(1.0, t_end):
        remainder = 0.0
    times, states = [0.0], [K0]
    K, t = K0, 0.0
    n_steps = n_full + (1 if remainder > 0.0 else 0)
    for k in range(1, n_steps + 1):
        h = dt if k <= n_full else remainder
        K = step(K, model, h, opts.method)
        t = k * dt if k <= n_full else t_end
        if k % opts.store_stride == 0 or k == n_steps:
            times.append(t)
            states.append(K)
    return _build_trajectory(np.array(times), states, model, dt, opts.store_stride,
                             n_steps, profiles, consts)


def _build_trajectory(times, states, model, dt, stride, steps, profiles, consts):
    xc = np.array([barycenter(K) for K in states])
    diam = np.array([diam_x(K) for K in states])
    lip = np.array([lipschitz_in_omega(K) for K in states])
    gaps = np.array([drift_gap(K, model)[0] for K in states])
    traj = Trajectory(times, states, xc, diam, lip, gaps, dt, stride, steps)
    if profiles is not None:
        traj.delta_margin = profiles.delta(xc) - diam
        traj.delta_tilde_margin = profiles.delta_tilde(xc) - lip
    return traj


def barycenter_ode_residual(traj: Trajectory, model: FluxModel) -> float:
    """Max over interior frames of |centered difference of x_c - mean velocity|."""
    if len(traj.times) < 3:
        raise ValueError("need at least three frames")
    t = traj.times
    xc = traj.xc_series
    worst = 0.0
    for k in range(1, len(t) - 1):
        h1, h2 = t[k] - t[k - 1], t[k + 1] - t[k]
        if abs(h1 - h2) > 1e-12 * max(1.0, t[k]):
            continue
        deriv = (xc[k + 1] - xc[k - 1]) / (h1 + h2)
        worst = max(worst, abs(deriv - mean_velocity(traj.states[k], model)))
    return worst


# -- weak formulation ------------------------------------------------------

TestFunction = tuple[Callable, Callable]


def gaussian_test_bank(centers: Sequence[float] = (-1.0, 0.0, 1.0, 2.0, 3.0),
                       width: float = 0.75, omega_c: float = 0.0,
                       omega_slope: float = 0.5) -> list[TestFunction]:
    """Pairs (phi, d_x phi) with phi(x, w) = exp(-(x-c)^2 / 2 s^2) (1 + a (w - omega_c))."""
    bank = []
    for c in centers:
        def phi(x, w, c=c):
            return np.exp(-0.5 * ((x - c) / width) ** 2) * (1.0 + omega_slope * (w - omega_c))

        def dphi(x, w, c=c, phi=phi):
            return -(x - c) / width ** 2 * phi(x, w)
        bank.append((phi, dphi))
    return bank


def _pair(K: QuantileKernel, f) -> float:
    return float(np.dot(K.nu.weights, f(K.values, K.nu.omegas[:, None]).mean(axis=1)))


def weak_form_residual(traj: Trajectory, model: FluxModel,
                       test_bank: Optional[Sequence[TestFunction]] = None) -> float:
    """Max over test functions and frames of the weak-formulation defect.

    <mu_t, phi> - <mu_0, phi> - int_0^t <mu_s, F[mu_s] d_x phi> ds with the
    time integral by the trapezoid rule over stored frames.
    """
    if test_bank is None:
        test_bank = gaussian_test_bank(omega_c=traj.states[0].nu.omega_c)
    t = traj.times
    worst = 0.0
    for phi, dphi in test_bank:
        lhs = np.array([_pair(K, phi) for K in traj.states])
        flux_term = np.array([
            float(np.dot(K.nu.weights,
                         (velocity(model, K.nu, K.values)
                          * dphi(K.values, K.nu.omegas[:, None])).mean(axis=1)))
            for K in traj.states])
        integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (flux_term[1:] + flux_term[:-1]))])
        worst = max(worst, float(np.max(np.abs(lhs - lhs[0] - integral))))
    return worst


# -- invariance ------------------------------------------------------------

@dataclass
class InvarianceReport:
    delta_margin: np.ndarray
    delta_tilde_margin: np.ndarray
    in_C1: np.ndarray
    in_C2: np.ndarray
    tol: float

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(~(self.in_C1 & self.in_C2)))

    @property
    def first_violation(self) -> Optional[int]:
        bad = np.flatnonzero(~(self.in_C1 & self.in_C2))
        return int(bad[0]) if bad.size else None

    @property
    def worst_delta_margin(self) -> float:
        return float(self.delta_margin.min())

    @property
    def worst_delta_tilde_margin(self) -> float:
        return float(self.delta_tilde_margin.min())


def invariance_monitor(traj: Trajectory, profiles, tol: float = 1e-9) -> InvarianceReport:
    """Per-frame membership in both envelopes, with margins."""
    dm = profiles.delta(traj.xc_series) - traj.diam_series
    dtm = profiles.delta_tilde(traj.xc_series) - traj.gamma_series
    return InvarianceReport(np.atleast_1d(dm), np.atleast_1d(dtm),
                            np.atleast_1d(dm >= -tol), np.atleast_1d(dtm >= -tol), tol)


def max_speed(traj: Trajectory, model: FluxModel) -> float:
    """Largest |F| over all stored entries, the time-Lipschitz constant of the run."""
    return max(float(np.abs(velocity(model, K.nu, K.values)).max()) for K in traj.states)


def scalar_rk4(f: Callable[[float], float], x0: float, t_end: float, n: int) -> float:
    """Plain RK4 for an autonomous scalar ODE; used as an independent reference."""
    h = t_end / n
    x = x0
    for _ in range(n):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x
