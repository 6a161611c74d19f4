"""Nonlocal velocity fields F[mu](x, omega) and their framework constants.

Built-in models
---------------
winfree
    F[mu](x, w) = w + kappa * R(x) * int P(y) mu(dy, dw'),  R = -sin, P = 1 + cos.
kuramoto
    F[mu](x, w) = w - kappa * int sin(x - y) g(w') mu(dy, dw'),
    with g >= 0 given at the frequency nodes and sum_j w_j g_j = 1.

Both reduce to a few scalar moments of the state, so evaluating F at every
quantile entry of a kernel costs O(entries).  A ``custom`` model wraps a
user callable ``field(K, x, omega)``; its constants are estimated
empirically and reported as such.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .measures import FrequencyMarginal, QuantileKernel, dirac_kernel, shift
from .ot1d import d1_kernel

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
SYNC_PANELS = 4096
LOWER_BOUND_GRID = 8192
FD_STEP = 1e-6


class FrameworkViolation(ValueError):
    """A flux fails one of the structural hypotheses it is checked against."""


@dataclass(frozen=True, eq=False)
class FluxModel:
    kind: str
    kappa: float
    g: Optional[np.ndarray] = None
    field: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("winfree", "kuramoto", "custom"):
            raise ValueError(f"unknown flux kind {self.kind!r}")
        if not np.isfinite(self.kappa) or self.kappa < 0.0:
            raise ValueError("coupling strength kappa must be a finite nonnegative number")
        if self.kind == "custom" and self.field is None:
            raise ValueError("custom flux requires a field callable")
        if self.g is not None:
            object.__setattr__(self, "g", np.asarray(self.g, dtype=float))

    @classmethod
    def winfree(cls, kappa: float) -> "FluxModel":
        return cls("winfree", kappa)

    @classmethod
    def kuramoto(cls, kappa: float, g=None) -> "FluxModel":
        return cls("kuramoto", kappa, g=g)

    @classmethod
    def custom(cls, field: Callable, kappa: float = 1.0) -> "FluxModel":
        return cls("custom", kappa, field=field)

    def weights_g(self, nu: FrequencyMarginal) -> np.ndarray:
        """Kuramoto node weights g(omega_j), checked for normalization."""
        if self.g is None:
            return np.ones(nu.size)
        if self.g.shape != (nu.size,):
            raise ValueError(f"g has {self.g.size} values for {nu.size} frequency nodes")
        if np.any(self.g < 0.0):
            raise ValueError("Kuramoto weight function g must be nonnegative")
        total = float(np.dot(nu.weights, self.g))
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"Kuramoto weights integrate to {total:.12g}, expected 1")
        return self.g

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "kappa": self.kappa}
        if self.g is not None:
            out["g"] = self.g.tolist()
        return out


# -- evaluation ------------------------------------------------------------

def _moments(model: FluxModel, nu: FrequencyMarginal, X: np.ndarray):
    w = nu.weights
    if model.kind == "winfree":
        return float(np.dot(w, (1.0 + np.cos(X)).mean(axis=1)))
    wg = w * model.weights_g(nu)
    return (float(np.dot(wg, np.cos(X).mean(axis=1))),
            float(np.dot(wg, np.sin(X).mean(axis=1))))


def _field(model, nu, X, x, omega, moments=None):
    x = np.asarray(x, dtype=float)
    if model.kind == "custom":
        K = QuantileKernel.from_rows(nu, X)
        return np.asarray(model.field(K, x, omega), dtype=float) * np.ones(np.broadcast(x, omega).shape)
    m = _moments(model, nu, X) if moments is None else moments
    if model.kind == "winfree":
        return omega - model.kappa * np.sin(x) * m
    C, S = m
    # sum_k w_k g_k mean_i sin(x - X_ki) = sin(x) C - cos(x) S
    return omega - model.kappa * (np.sin(x) * C - np.cos(x) * S)


def _field_dx(model, nu, X, x, omega, moments=None):
    x = np.asarray(x, dtype=float)
    if model.kind == "custom":
        return (_field(model, nu, X, x + FD_STEP, omega)
                - _field(model, nu, X, x - FD_STEP, omega)) / (2.0 * FD_STEP)
    m = _moments(model, nu, X) if moments is None else moments
    if model.kind == "winfree":
        return -model.kappa * np.cos(x) * m
    C, S = m
    return -model.kappa * (np.cos(x) * C + np.sin(x) * S)


def eval_flux(model: FluxModel, K: QuantileKernel, x, omega):
    """F[K](x, omega); broadcasts over array-valued x and omega."""
    out = _field(model, K.nu, K.values, x, omega)
    return float(out) if out.ndim == 0 else out


def eval_flux_dx(model: FluxModel, K: QuantileKernel, x, omega):
    """d/dx F[K](x, omega) with the measure frozen (analytic for built-ins)."""
    out = _field_dx(model, K.nu, K.values, x, omega)
    return float(out) if out.ndim == 0 else out


def velocity(model: FluxModel, nu: FrequencyMarginal, X: np.ndarray) -> np.ndarray:
    """F[mu](X[j][i], omega_j) for every entry, mu being the state X itself."""
    return _field(model, nu, X, X, nu.omegas[:, None])


def leader_flux(model: FluxModel, nu: FrequencyMarginal, s):
    """F[delta_s x nu](s, omega_c) as a function of the cluster position s."""
    s = np.asarray(s, dtype=float)
    wc = nu.omega_c
    if model.kind == "winfree":
        return wc - model.kappa * np.sin(s) * (1.0 + np.cos(s))
    if model.kind == "kuramoto":
        model.weights_g(nu)
        return np.full_like(s, wc)
    return np.vectorize(lambda si: float(eval_flux(model, dirac_kernel(nu, si), si, wc)))(s)


def leader_flux_dx(model: FluxModel, nu: FrequencyMarginal, s):
    """d/dx F[delta_s x nu](x, omega_c) at x = s (measure frozen at delta_s)."""
    s = np.asarray(s, dtype=float)
    if model.kind == "winfree":
        return -model.kappa * np.cos(s) * (1.0 + np.cos(s))
    if model.kind == "kuramoto":
        model.weights_g(nu)
        return np.full_like(s, -model.kappa)
    return np.vectorize(
        lambda si: float(eval_flux_dx(model, dirac_kernel(nu, si), si, nu.omega_c)))(s)


def sync_ratio(model: FluxModel, nu: FrequencyMarginal, s):
    """beta(s) = d_x F / F along the cluster curve."""
    return leader_flux_dx(model, nu, s) / leader_flux(model, nu, s)


# -- framework hypotheses --------------------------------------------------

def _leader_lipschitz(model: FluxModel, vals: np.ndarray, h: float) -> float:
    """Lipschitz constant of s -> F[delta_s x nu](s, omega_c).

    Closed form for the built-ins; for custom fluxes the largest grid slope
    with a 10% safety factor (empirical).
    """
    if model.kind == "kuramoto":
        return 0.0
    if model.kind == "winfree":
        # |d/ds sin(s)(1 + cos s)| = |cos s + cos 2s| <= 2
        return 2.0 * model.kappa
    return 1.1 * float(np.abs(np.diff(np.append(vals, vals[0]))).max()) / h


def lower_bound_A(model: FluxModel, nu: FrequencyMarginal, grid: int = LOWER_BOUND_GRID) -> float:
    """Certified lower bound on inf_x F[delta_x x nu](x, omega_c).

    Grid minimum over one period, polished by a bounded local search, minus
    the Lipschitz margin for points between grid nodes.
    """
    xs = np.linspace(0.0, TWO_PI, grid, endpoint=False)
    h = TWO_PI / grid
    vals = leader_flux(model, nu, xs)
    k = int(np.argmin(vals))
    best = float(vals[k])
    if model.kind != "kuramoto":
        res = minimize_scalar(lambda s: float(leader_flux(model, nu, s)),
                              bounds=(xs[k] - h, xs[k] + h), method="bounded",
                              options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    bound = best - _leader_lipschitz(model, vals, h) * h / 2.0
    if bound <= 0.0:
        raise FrameworkViolation(
            f"no-stationarity fails: F[delta_x x nu](x, omega_c) reaches {bound:.6g} <= 0")
    return bound


def _simpson_periodic(f, n: int) -> float:
    x = np.linspace(0.0, TWO_PI, n + 1)
    y = f(x)
    h = TWO_PI / n
    return float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


def sync_integral(model: FluxModel, nu: FrequencyMarginal, panels: int = SYNC_PANELS) -> float:
    """int_0^{2pi} d_xF / F along the cluster curve (Simpson + one Richardson step)."""
    lower_bound_A(model, nu)
    f = lambda s: sync_ratio(model, nu, s)
    coarse = _simpson_periodic(f, panels)
    fine = _simpson_periodic(f, 2 * panels)
    return fine + (fine - coarse) / 15.0


@dataclass
class FluxConstants:
    """Framework constants with the method used to obtain each."""

    A: float
    B: float
    I: float
    M: float
    Q: float
    methods: dict = field(default_factory=dict)
    failing: list = field(default_factory=list)
    samples: int = 0

    def __post_init__(self):
        guards = {"A": "no_stationarity", "B": "synchronization"}
        for name in ("A", "B", "I", "M", "Q"):
            if not getattr(self, name) > 0.0 and guards.get(name) not in self.failing:
                raise ValueError(f"constant {name} must be positive, got {getattr(self, name)}")

    @property
    def ok(self) -> bool:
        return not self.failing

    def to_dict(self) -> dict:
        return {"A": self.A, "B": self.B, "I": self.I, "M": self.M, "Q": self.Q,
                "methods": dict(self.methods), "failing": list(self.failing),
                "samples": self.samples}


def constants_report(model: FluxModel, nu: FrequencyMarginal, *, use_reference_values: bool = False,
                     samples: int = 200, rng=None) -> FluxConstants:
    """Constants (A, B, I, M, Q) for ``model`` on ``nu``.

    Built-ins use closed forms for I, M, Q.  A comes from
    :func:`lower_bound_A` and B = -sync_integral / kappa.  With
    ``use_reference_values`` the Winfree pair A = omega_c/2, B = omega_c/3 is
    used instead (valid for 0 < kappa < omega_c/4).
    """
    failing = []
    methods = {}
    wc = nu.omega_c
    if model.kind == "winfree":
        # sup|R'|, sup|R''| = 1 and sup P = 2; d_omega F = 1.
        I, M, Q = 2.0, 1.0, 1.0
        methods.update(I="closed_form", M="closed_form", Q="closed_form")
    elif model.kind == "kuramoto":
        g = model.weights_g(nu)
        I, M, Q = 1.0, float(g.max()), 1.0
        methods.update(I="closed_form", M="closed_form", Q="closed_form")
    else:
        rng = np.random.default_rng(rng)
        I, M, Q = _empirical_IMQ(model, nu, samples, rng)
        methods.update(I="empirical", M="empirical", Q="empirical")

    if use_reference_values and model.kind == "winfree":
        if not 0.0 < model.kappa < wc / 4.0:
            failing.append("no_stationarity")
        A, B = wc / 2.0, wc / 3.0
        methods.update(A="reference", B="reference")
        return FluxConstants(A, B, I, M, Q, methods, failing, samples=0)

    try:
        A = lower_bound_A(model, nu)
        methods["A"] = "closed_form" if model.kind == "kuramoto" else "certified_grid"
    except FrameworkViolation:
        A = 0.0
        failing.append("no_stationarity")
        methods["A"] = "certified_grid"
    B = 0.0
    if "no_stationarity" not in failing:
        if model.kind == "kuramoto":
            B = TWO_PI / wc
            methods["B"] = "closed_form"
        elif model.kappa > 0.0:
            B = -sync_integral(model, nu) / model.kappa
            methods["B"] = "quadrature"
        if not B > 0.0:
            failing.append("synchronization")
    else:
        failing.append("synchronization")
    return FluxConstants(A, B, I, M, Q, methods, failing,
                         samples=samples if model.kind == "custom" else 0)


def _empirical_IMQ(model, nu, samples, rng):
    xs = rng.uniform(0.0, TWO_PI, samples)
    ks = [random_kernel(nu, 8, rng) for _ in range(4)]
    dx = [np.abs(eval_flux_dx(model, K, xs, nu.omega_c)).max() for K in ks]
    dw = [np.abs((eval_flux(model, K, xs, nu.omega_c + FD_STEP)
                  - eval_flux(model, K, xs, nu.omega_c - FD_STEP)) / (2 * FD_STEP)).max()
          for K in ks]
    kappa = model.kappa if model.kappa > 0 else 1.0
    I = max(max(dx) / kappa, max(dw), 1e-12)
    M = max(mean_field_lipschitz_probe(model, [(ks[i], ks[i + 1]) for i in range(3)]), 1e-12)
    Q = float(min(dw)) if min(dw) > 0 else 1e-12
    return float(I), float(M), Q


def random_kernel(nu: FrequencyMarginal, n_levels: int, rng, spread: float = 1.0,
                  offset: float = 0.0) -> QuantileKernel:
    """Random state with sorted normal rows; used by probes and tests."""
    values = np.sort(rng.normal(offset, spread, size=(nu.size, n_levels)), axis=1)
    return QuantileKernel.from_rows(nu, values)


def periodicity_check(model: FluxModel, nu: FrequencyMarginal, trials: int = 100,
                      rng=None, n_levels: int = 8) -> float:
    """Max |F[shift(K, 2pi)](x + 2pi, w) - F[K](x, w)| over random samples."""
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(trials):
        K = random_kernel(nu, n_levels, rng, spread=2.0, offset=rng.uniform(-5, 5))
        x = rng.uniform(-10.0, 10.0)
        w = rng.choice(nu.omegas)
        a = eval_flux(model, shift(K, TWO_PI), x + TWO_PI, w)
        b = eval_flux(model, K, x, w)
        worst = max(worst, abs(a - b))
    return worst


def mean_field_lipschitz_probe(model: FluxModel, pairs, points: int = 64, rng=None) -> float:
    """Empirical M: max |d^a_x F[K] - d^a_x F[K']| / (kappa * d1(K, K')), a = 0, 1.

    The nu-matched distance d1 stands in for W1 (it is an upper bound of it),
    so the quotient is a lower estimate of the true constant.  Pairs closer
    than 1e-14 are skipped.
    """
    rng = np.random.default_rng(rng)
    worst = 0.0
    for K, Kp in pairs:
        dist = d1_kernel(K, Kp)
        if dist < 1e-14:
            continue
        if model.kappa == 0.0:
            continue
        xs = rng.uniform(0.0, TWO_PI, points)
        for w in K.nu.omegas:
            d0 = np.abs(eval_flux(model, K, xs, w) - eval_flux(model, Kp, xs, w)).max()
            d1 = np.abs(eval_flux_dx(model, K, xs, w) - eval_flux_dx(model, Kp, xs, w)).max()
            worst = max(worst, max(d0, d1) / (model.kappa * dist))
    return float(worst)


def twist_minimum(model: FluxModel, nu: FrequencyMarginal, grid: int = 512) -> float:
    """min_x d_omega F[delta_x x nu](x, omega_c) on a grid.

    Omega enters the built-in fields additively, so the value is exactly 1
    there; custom fields use central differences.
    """
    if model.kind in ("winfree", "kuramoto"):
        return 1.0
    xs = np.linspace(0.0, TWO_PI, grid, endpoint=False)
    vals = []
    for x in xs:
        K = dirac_kernel(nu, x)
        vals.append((eval_flux(model, K, x, nu.omega_c + FD_STEP)
                     - eval_flux(model, K, x, nu.omega_c - FD_STEP)) / (2 * FD_STEP))
    return float(np.min(vals))
