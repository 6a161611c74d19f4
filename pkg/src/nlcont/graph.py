"""Measures carried by a graph x = G(omega): one Dirac per frequency node."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import IntegratorOptions
from .flux import FluxModel, velocity
from .measures import FrequencyMarginal, QuantileKernel, graph_kernel
from .poincare import FixedPointResult, find_periodic


@dataclass(frozen=True, eq=False)
class GraphState:
    nu: FrequencyMarginal
    G: np.ndarray

    def __post_init__(self):
        G = np.atleast_1d(np.asarray(self.G, dtype=float))
        if G.shape != self.nu.omegas.shape:
            raise ValueError(f"graph has {G.size} values for {self.nu.size} nodes")
        if not np.all(np.isfinite(G)):
            raise ValueError("graph values must be finite")
        object.__setattr__(self, "G", G)

    @property
    def barycenter(self) -> float:
        return float(np.dot(self.nu.weights, self.G))

    def lipschitz(self) -> float:
        """Discrete Lipschitz modulus max |G_j - G_k| / |omega_j - omega_k|."""
        if self.nu.size < 2:
            return 0.0
        dG = np.abs(self.G[:, None] - self.G[None, :])
        dw = np.abs(self.nu.omegas[:, None] - self.nu.omegas[None, :])
        iu = np.triu_indices(self.nu.size, k=1)
        return float(np.max(dG[iu] / dw[iu]))

    def spread(self) -> float:
        return float(self.G.max() - self.G.min())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("omega", "G"))
            for om, g in zip(self.nu.omegas, self.G):
                w.writerow((f"{om:.17g}", f"{g:.17g}"))


def graph_to_kernel(g: GraphState, n_levels: int = 1) -> QuantileKernel:
    return graph_kernel(g.nu, g.G, n_levels)


def kernel_to_graph(K: QuantileKernel, tol: float = 0.0) -> GraphState:
    """Inverse of :func:`graph_to_kernel`; rows must be Diracs up to ``tol``."""
    width = K.values.max(axis=1) - K.values.min(axis=1)
    if np.any(width > tol):
        raise ValueError(f"kernel rows are not Diracs (max width {width.max():.3e})")
    return GraphState(K.nu, K.values[:, 0].copy())


@dataclass
class GraphTrajectory:
    nu: FrequencyMarginal
    times: np.ndarray
    G: np.ndarray  # frames x nodes

    def frame(self, k: int) -> GraphState:
        return GraphState(self.nu, self.G[k])

    @property
    def final(self) -> GraphState:
        return self.frame(-1)


def _node_velocity(model: FluxModel, nu: FrequencyMarginal, G: np.ndarray) -> np.ndarray:
    return velocity(model, nu, G[:, None])[:, 0]


def evolve_graph(g0: GraphState, model: FluxModel, t_end: float,
                 opts: IntegratorOptions = IntegratorOptions()) -> GraphTrajectory:
    """RK4 on the node vector x_j' = F[mu_t](x_j, omega_j), same step schedule as ``simulate``."""
    dt = opts.dt
    n_full = int(math.floor(t_end / dt + 1e-9))
    remainder = t_end - n_full * dt
    if remainder <= 1e-12 * max(1.0, t_end):
        remainder = 0.0
    n_steps = n_full + (1 if remainder > 0.0 else 0)
    f = lambda y: _node_velocity(model, g0.nu, y)
    x = g0.G.copy()
    times, frames = [0.0], [x.copy()]
    for k in range(1, n_steps + 1):
        h = dt if k <= n_full else remainder
        if opts.method == "heun":
            k1 = f(x)
            x = x + 0.5 * h * (k1 + f(x + h * k1))
        else:
            k1 = f(x)
            k2 = f(x + 0.5 * h * k1)
            k3 = f(x + 0.5 * h * k2)
            k4 = f(x + h * k3)
            x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if k % opts.store_stride == 0 or k == n_steps:
            times.append(k * dt if k <= n_full else t_end)
            frames.append(x.copy())
    return GraphTrajectory(g0.nu, np.array(times), np.array(frames))


def monotonicity_check(traj: GraphTrajectory, include_initial: bool = False) -> float:
    """Smallest discrete omega-slope of G_t over the stored frames (t = 0 excluded by default).

    From equal initial positions a positive value is the strict order
    statement; from a general increasing G_0 it reads as order preservation.
    """
    if traj.nu.size < 2:
        raise ValueError("need at least two frequency nodes")
    G = traj.G if include_initial else traj.G[1:]
    if G.shape[0] == 0:
        raise ValueError("trajectory has no frames after t = 0")
    slopes = np.diff(G, axis=1) / np.diff(traj.nu.omegas)
    return float(slopes.min())


@dataclass
class GraphFixedPoint:
    graph: GraphState
    result: FixedPointResult

    @property
    def converged(self) -> bool:
        return self.result.converged


def find_periodic_graph(g0: GraphState, model: FluxModel,
                        opts: IntegratorOptions = IntegratorOptions(), tol: float = 1e-6,
                        max_iter: int = 200, relax="auto") -> GraphFixedPoint:
    """Fixed-point search restricted to graph measures (single-quantile rows)."""
    res = find_periodic(graph_to_kernel(g0), model, opts, tol=tol, max_iter=max_iter, relax=relax)
    return GraphFixedPoint(kernel_to_graph(res.state), res)


def twist_margin(model: FluxModel, D: float, M: float, I: float, Q: float = 1.0) -> float:
    """Q - (D*M + kappa*I); positive when the twist hypothesis holds."""
    return Q - (D * M + model.kappa * I)
