"""Disintegrated measures on (x, omega) stored as per-frequency quantile rows."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .ot1d import MONOTONE_TOL, repair_monotone, uniform_levels

if TYPE_CHECKING:
    from .bounds import BoundProfiles

MEMBERSHIP_TOL = 1e-9
STATE_VERSION = 1


class StateFileError(ValueError):
    """A state file is malformed or violates a representation invariant."""


@dataclass(frozen=True, eq=False)
class FrequencyMarginal:
    """Finite frequency law: strictly increasing nodes with weights summing to one."""

    omegas: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        omegas = np.atleast_1d(np.asarray(self.omegas, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if omegas.ndim != 1 or omegas.size == 0:
            raise ValueError("omegas must be a non-empty 1-D sequence")
        if weights.shape != omegas.shape:
            raise ValueError("omegas and weights must have the same length")
        if not (np.all(np.isfinite(omegas)) and np.all(np.isfinite(weights))):
            raise ValueError("frequency nodes and weights must be finite")
        if np.any(weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {weights.sum():.15g}, expected 1")
        if omegas.size > 1 and np.any(np.diff(omegas) <= 0.0):
            raise ValueError("omegas must be strictly increasing")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def dirac(cls, omega: float) -> "FrequencyMarginal":
        return cls([omega], [1.0])

    @classmethod
    def equal_weights(cls, omegas) -> "FrequencyMarginal":
        omegas = np.asarray(omegas, dtype=float)
        return cls(omegas, np.full(omegas.size, 1.0 / omegas.size))

    @classmethod
    def uniform(cls, a: float, b: float, nodes: int) -> "FrequencyMarginal":
        """Midpoint quadrature of the uniform law on [a, b].

        The quadrature support is narrower than [a, b]: gamma = (b - a)(1 - 1/nodes).
        """
        if nodes < 1 or b < a:
            raise ValueError("need nodes >= 1 and a <= b")
        if nodes == 1:
            return cls.dirac(0.5 * (a + b))
        h = (b - a) / nodes
        return cls.equal_weights(a + h * (np.arange(nodes) + 0.5))

    @property
    def size(self) -> int:
        return self.omegas.size

    @property
    def gamma(self) -> float:
        """Diameter of the frequency support."""
        return float(self.omegas[-1] - self.omegas[0])

    @property
    def omega_c(self) -> float:
        """Mean frequency."""
        return float(np.dot(self.weights, self.omegas))

    def to_dict(self) -> dict:
        return {"omegas": self.omegas.tolist(), "weights": self.weights.tolist()}


@dataclass(frozen=True, eq=False)
class QuantileKernel:
    """A measure with omega-marginal ``nu``: row j holds the quantiles of mu(., omega_j)."""

    nu: FrequencyMarginal
    levels: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1 and self.nu.size == 1:
            values = values[None, :]
        if values.ndim != 2:
            raise ValueError("values must be a matrix (nodes x levels)")
        if values.shape[0] != self.nu.size:
            raise ValueError(f"{values.shape[0]} rows for {self.nu.size} frequency nodes")
        if levels.ndim != 1 or values.shape[1] != levels.size:
            raise ValueError("each row must have one entry per quantile level")
        if np.any(levels <= 0.0) or np.any(levels >= 1.0):
            raise ValueError("levels must lie strictly inside (0, 1)")
        if not np.all(np.isfinite(values)):
            raise ValueError("kernel values must be finite")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "values", repair_monotone(values, MONOTONE_TOL, axis=1))

    @classmethod
    def from_rows(cls, nu: FrequencyMarginal, rows) -> "QuantileKernel":
        rows = np.asarray(rows, dtype=float)
        if rows.ndim == 1:
            rows = rows[None, :]
        return cls(nu, uniform_levels(rows.shape[1]), rows)

    @property
    def n_levels(self) -> int:
        return self.levels.size

    def with_values(self, values) -> "QuantileKernel":
        return dataclasses.replace(self, values=values)

    def row(self, j: int):
        from .ot1d import QuantileVector
        return QuantileVector(self.levels, self.values[j])


# -- constructors ----------------------------------------------------------

def dirac_kernel(nu: FrequencyMarginal, x: float = 0.0, n_levels: int = 1) -> QuantileKernel:
    """delta_x (tensor) nu."""
    return QuantileKernel(nu, uniform_levels(n_levels), np.full((nu.size, n_levels), float(x)))


def graph_kernel(nu: FrequencyMarginal, G, n_levels: int = 1) -> QuantileKernel:
    """Measure carried by the graph x = G(omega): every row is a Dirac."""
    G = np.asarray(G, dtype=float)
    return QuantileKernel(nu, uniform_levels(n_levels), np.repeat(G[:, None], n_levels, axis=1))


def band_kernel(nu: FrequencyMarginal, width: float, n_levels: int,
                slope: float = 0.0, center: float = 0.0) -> QuantileKernel:
    """Uniform law of the given width around ``center + slope*(omega - omega_c)`` on each row."""
    levels = uniform_levels(n_levels)
    offsets = center + slope * (nu.omegas - nu.omega_c)
    values = offsets[:, None] + width * (levels[None, :] - 0.5)
    return QuantileKernel(nu, levels, values)


# -- functionals -----------------------------------------------------------

def barycenter(K: QuantileKernel) -> float:
    """Mean x-position: sum_j w_j mean_i X[j][i]."""
    return float(np.dot(K.nu.weights, K.values.mean(axis=1)))


def diam_x(K: QuantileKernel) -> float:
    """Diameter of the x-projection of the support."""
    return float(K.values.max() - K.values.min())


def lipschitz_in_omega(K: QuantileKernel) -> float:
    """Largest W2(row_j, row_k) / |omega_j - omega_k| over node pairs.

    Returns 0 for a single-node marginal.
    """
    if K.nu.size < 2:
        return 0.0
    X = K.values
    diff = X[:, None, :] - X[None, :, :]
    w2 = np.sqrt(np.mean(diff ** 2, axis=2))
    dom = np.abs(K.nu.omegas[:, None] - K.nu.omegas[None, :])
    iu = np.triu_indices(K.nu.size, k=1)
    return float(np.max(w2[iu] / dom[iu]))


def shift(K: QuantileKernel, c: float) -> QuantileKernel:
    """Push-forward by x -> x + c."""
    return K.with_values(K.values + c)


def center(K: QuantileKernel) -> QuantileKernel:
    """Translate so that the barycenter is zero."""
    return shift(K, -barycenter(K))


@dataclass(frozen=True)
class MembershipReport:
    diam_x: float
    delta_bound: float
    lip_omega: float
    delta_tilde_bound: float
    in_C1: bool
    in_C2: bool

    @property
    def inside(self) -> bool:
        return self.in_C1 and self.in_C2


def check_membership(K: QuantileKernel, profiles: "BoundProfiles",
                     tol: float = MEMBERSHIP_TOL) -> MembershipReport:
    """Compare diameter and omega-Lipschitz modulus with the envelopes at x_c."""
    s = barycenter(K)
    d = diam_x(K)
    lip = lipschitz_in_omega(K)
    delta = float(profiles.delta(s))
    delta_tilde = float(profiles.delta_tilde(s))
    return MembershipReport(d, delta, lip, delta_tilde,
                            in_C1=d <= delta + tol, in_C2=lip <= delta_tilde + tol)


def membership_X_prime(K: QuantileKernel, D: float, L: float, tol: float = MEMBERSHIP_TOL) -> bool:
    """Centered, x-spread at most D, and omega-Lipschitz with constant L."""
    if abs(barycenter(K)) > tol:
        return False
    if diam_x(K) > D + tol:
        return False
    return lipschitz_in_omega(K) <= L + tol


# -- serialization ---------------------------------------------------------

def state_to_dict(K: QuantileKernel) -> dict:
    return {
        "v": STATE_VERSION,
        "nu": K.nu.to_dict(),
        "levels": K.levels.tolist(),
        "values": K.values.tolist(),
    }


def state_from_dict(data: dict) -> QuantileKernel:
    try:
        if data.get("v", STATE_VERSION) != STATE_VERSION:
            raise StateFileError(f"unsupported state version {data.get('v')!r}")
        nu = FrequencyMarginal(data["nu"]["omegas"], data["nu"]["weights"])
        values = np.asarray(data["values"], dtype=float)
        if values.ndim != 2:
            raise StateFileError("values must be a list of rows")
        if values.shape[1] > 1 and np.any(np.diff(values, axis=1) < 0.0):
            raise StateFileError("state rows must be non-decreasing")
        return QuantileKernel(nu, data["levels"], values)
    except StateFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise StateFileError(f"invalid state: {exc}") from exc


def save_state(K: QuantileKernel, path) -> None:
    Path(path).write_text(json.dumps(state_to_dict(K)))


def load_state(path) -> QuantileKernel:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise StateFileError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise StateFileError(f"{path}: expected a JSON object")
    return state_from_dict(data)
