"""One-dimensional optimal transport on equal-weight quantile grids.

A law on the real line is stored by its pseudo-inverse CDF sampled at the
midpoint levels ``s_i = (i + 1/2) / n``.  On such grids the monotone (sorted)
coupling is optimal, so W1, W2 and displacement interpolation are all
componentwise operations on the stored values.

The kernel-level functions (``d2_kernel``, ``d1_kernel``, ``kernel_geodesic``,
``cat0_residual``) accept any object with ``values`` (2-D array, one row per
frequency node), ``levels`` and ``nu.weights`` attributes, i.e. a
:class:`nlcont.measures.QuantileKernel`.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

MONOTONE_TOL = 1e-12


class GridMismatchError(ValueError):
    """Two quantile objects do not live on the same levels grid."""


class MonotonicityError(ValueError):
    """Quantile values decrease by more than the repair tolerance."""


def uniform_levels(n: int) -> np.ndarray:
    """Midpoint quantile levels (i + 1/2)/n for i = 0..n-1."""
    if n < 1:
        raise ValueError(f"need at least one quantile level, got n={n}")
    return (np.arange(n) + 0.5) / n


def repair_monotone(values, tol: float = MONOTONE_TOL, axis: int = -1) -> np.ndarray:
    """Return ``values`` made non-decreasing along ``axis``.

    Drops below ``tol`` are treated as round-off and removed with a running
    maximum; anything larger raises :class:`MonotonicityError`.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[axis] < 2:
        return values.copy()
    drop = np.diff(values, axis=axis).min()
    if drop < -tol:
        raise MonotonicityError(f"quantile values decrease by {-drop:.3e} (tolerance {tol:.1e})")
    return np.maximum.accumulate(values, axis=axis)


@dataclass(frozen=True, eq=False)
class QuantileVector:
    """A 1-D law given by its quantile function on a midpoint grid."""

    levels: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if levels.ndim != 1 or levels.size < 1:
            raise ValueError("levels must be a non-empty 1-D sequence")
        if np.any(levels <= 0.0) or np.any(levels >= 1.0):
            raise ValueError("levels must lie strictly inside (0, 1)")
        if levels.size > 1 and np.any(np.diff(levels) <= 0.0):
            raise ValueError("levels must be strictly increasing")
        if values.shape != levels.shape:
            raise GridMismatchError(
                f"values has shape {values.shape}, levels has shape {levels.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("quantile values must be finite")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "values", repair_monotone(values))

    @classmethod
    def from_values(cls, values) -> "QuantileVector":
        values = np.asarray(values, dtype=float)
        return cls(uniform_levels(values.size), values)

    @classmethod
    def from_samples(cls, samples) -> "QuantileVector":
        """Empirical law of equally weighted samples (sorted into quantiles)."""
        return cls.from_values(np.sort(np.asarray(samples, dtype=float)))

    @property
    def n(self) -> int:
        return self.values.size

    def mean(self) -> float:
        return float(self.values.mean())


def _check_grids(a: QuantileVector, b: QuantileVector) -> None:
    if a.levels.shape != b.levels.shape:
        raise GridMismatchError(f"grid sizes differ: {a.n} vs {b.n}")
    if not np.array_equal(a.levels, b.levels):
        raise GridMismatchError("quantile levels differ")


def w2(a: QuantileVector, b: QuantileVector) -> float:
    """2-Wasserstein distance: RMS of quantile differences."""
    _check_grids(a, b)
    return float(np.sqrt(np.mean((a.values - b.values) ** 2)))


def w1(a: QuantileVector, b: QuantileVector) -> float:
    """1-Wasserstein distance: mean absolute quantile difference."""
    _check_grids(a, b)
    return float(np.mean(np.abs(a.values - b.values)))


def _check_u(u: float) -> float:
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"interpolation parameter u={u} outside [0, 1]")
    return u


def geodesic(a: QuantileVector, b: QuantileVector, u: float) -> QuantileVector:
    """Displacement interpolation ``(1-u) a + u b`` of quantile functions."""
    _check_grids(a, b)
    u = _check_u(u)
    return QuantileVector(a.levels, (1.0 - u) * a.values + u * b.values)


def resample(q: QuantileVector, levels) -> QuantileVector:
    """Linear interpolation of the quantile function onto another grid.

    Levels outside the stored range are clamped to the extreme quantiles.
    """
    levels = np.asarray(levels, dtype=float)
    return QuantileVector(levels, np.interp(levels, q.levels, q.values))


# -- kernels ---------------------------------------------------------------

def _kernel_weights(A, B, nu=None) -> np.ndarray:
    if nu is None:
        nu = A.nu
    if not (_same_marginal(A.nu, nu) and _same_marginal(B.nu, nu)):
        raise GridMismatchError("kernels are defined on different frequency marginals")
    if not np.array_equal(A.levels, B.levels):
        raise GridMismatchError("kernels use different quantile grids")
    return nu.weights


def _same_marginal(m1, m2) -> bool:
    return m1 is m2 or (
        m1.omegas.shape == m2.omegas.shape
        and np.array_equal(m1.omegas, m2.omegas)
        and np.array_equal(m1.weights, m2.weights)
    )


def d2_kernel(A, B, nu=None) -> float:
    """sqrt( sum_j w_j W2(A_j, B_j)^2 ) for kernels on a shared marginal."""
    w = _kernel_weights(A, B, nu)
    per_node = np.mean((A.values - B.values) ** 2, axis=1)
    return float(np.sqrt(np.dot(w, per_node)))


def d1_kernel(A, B, nu=None) -> float:
    """sum_j w_j W1(A_j, B_j) for kernels on a shared marginal."""
    w = _kernel_weights(A, B, nu)
    per_node = np.mean(np.abs(A.values - B.values), axis=1)
    return float(np.dot(w, per_node))


def kernel_geodesic(A, B, u: float):
    """Node-wise displacement interpolation between two kernels."""
    _kernel_weights(A, B)
    u = _check_u(u)
    return dataclasses.replace(A, values=(1.0 - u) * A.values + u * B.values)


def cat0_residual(p, p0, p1, u: float) -> float:
    """RHS minus LHS of the CAT(0) comparison inequality at ``p_u``.

    Nonnegative in any CAT(0) space; identically zero here because the
    kernel space is flat along quantile geodesics.
    """
    pu = kernel_geodesic(p0, p1, u)
    lhs = d2_kernel(p, pu) ** 2
    rhs = ((1.0 - u) * d2_kernel(p, p0) ** 2 + u * d2_kernel(p, p1) ** 2
           - u * (1.0 - u) * d2_kernel(p0, p1) ** 2)
    return rhs - lhs
