"""Periodic affine ODEs, framework constants and the invariance envelopes.

The envelopes Delta(s) (x-diameter) and Delta~(s) (omega-Lipschitz modulus)
are the unique 2pi-periodic solutions of  y' = alpha + beta(s) y  with
beta(s) = d_xF/F along the cluster curve s -> delta_s x nu.  The closed
form is

    y(t) = alpha * int_t^{t+2pi} exp(int_s^t beta) ds / (exp(-int_0^{2pi} beta) - 1),

evaluated here with Simpson rules (inner integral cumulative, outer plain).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .flux import FluxConstants, FluxModel, constants_report, sync_ratio
from .measures import FrequencyMarginal

TWO_PI = 2.0 * math.pi
QUAD_GRID = 4096
PROFILE_GRID = 2048
PERIODICITY_TOL = 1e-12


class ExistenceError(ValueError):
    """No periodic solution: the coefficient has nonnegative mean."""


class ConditionError(ValueError):
    """A parameter condition required by an operation does not hold."""

    def __init__(self, condition: str, message: str):
        super().__init__(f"{condition}: {message}")
        self.condition = condition


class PreconditionError(ValueError):
    """Inputs violate the stated preconditions of a check."""


def _as_vector_fn(beta: Callable) -> Callable:
    def f(s):
        s = np.asarray(s, dtype=float)
        out = np.asarray(beta(s), dtype=float)
        if out.shape != s.shape:
            out = np.broadcast_to(out, s.shape).astype(float)
        return out
    return f


class PeriodicCoefficient:
    """A 2pi-periodic coefficient beta with cached period integrals."""

    def __init__(self, beta: Callable, n: int = QUAD_GRID, check: bool = True):
        if n % 2:
            raise ValueError("quadrature grid size must be even")
        self.beta = _as_vector_fn(beta)
        self.n = n
        self.grid = np.linspace(0.0, 2.0 * TWO_PI, 2 * n + 1)
        b = self.beta(self.grid)
        if check:
            gap = float(np.max(np.abs(b[: n + 1] - b[n:])))
            if gap > PERIODICITY_TOL * max(1.0, float(np.abs(b).max())):
                raise ValueError(f"beta is not 2pi-periodic (mismatch {gap:.3e})")
        self._B = cumulative_simpson(b, x=self.grid, initial=0.0)
        self.integral = float(self._B[n])
        fine = np.linspace(0.0, TWO_PI, 16 * n + 1)
        bf = self.beta(fine)
        self.integral_pos = float(simpson(np.maximum(bf, 0.0), x=fine))
        self.integral_neg = float(simpson(np.maximum(-bf, 0.0), x=fine))

    @classmethod
    def constant(cls, value: float, n: int = QUAD_GRID) -> "PeriodicCoefficient":
        return cls(lambda s: np.full_like(np.asarray(s, dtype=float), value), n)

    @property
    def integral_abs(self) -> float:
        return self.integral_pos + self.integral_neg

    def _require_negative_mean(self):
        if not self.integral < 0.0:
            raise ExistenceError(
                f"int_0^2pi beta = {self.integral:.6g} >= 0: no periodic solution")

    @property
    def denominator(self) -> float:
        """exp(-int_0^2pi beta) - 1."""
        return math.expm1(-self.integral)


def periodic_affine_solution(alpha: float, beta: PeriodicCoefficient, t) -> np.ndarray | float:
    """Unique 2pi-periodic solution of y' = alpha + beta(t) y, evaluated at ``t``.

    Each evaluation integrates over the window [t, t + 2pi]: a cumulative
    Simpson rule for int_t^s beta, then Simpson for the outer integral.
    """
    beta._require_negative_mean()
    if alpha < 0.0:
        raise ValueError("alpha must be nonnegative")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t_arr)
    if alpha > 0.0:
        k = np.linspace(0.0, TWO_PI, beta.n + 1)
        for lo in range(0, t_arr.size, 128):
            tt = t_arr[lo:lo + 128, None]
            window = tt + k[None, :]
            inner = cumulative_simpson(beta.beta(window), x=k, axis=1, initial=0.0)
            outer = simpson(np.exp(-inner), x=k, axis=1)
            out[lo:lo + 128] = alpha * outer / beta.denominator
    return float(out[0]) if np.ndim(t) == 0 else out


def tabulate_periodic_solution(alpha: float, beta: PeriodicCoefficient,
                               n_tab: int = PROFILE_GRID) -> np.ndarray:
    """Values of the periodic solution on s_k = 2pi k / n_tab, k < n_tab.

    Reuses the cached cumulative integral of beta; ``n_tab`` must divide the
    quadrature grid size.
    """
    beta._require_negative_mean()
    if alpha < 0.0:
        raise ValueError("alpha must be nonnegative")
    if beta.n % n_tab:
        raise ValueError(f"n_tab={n_tab} must divide the quadrature grid {beta.n}")
    if alpha == 0.0:
        return np.zeros(n_tab)
    n = beta.n
    step = n // n_tab
    h = TWO_PI / n
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= h / 3.0
    windows = np.lib.stride_tricks.sliding_window_view(beta._B, n + 1)[: n + 1: step][:n_tab]
    starts = beta._B[: n + 1: step][:n_tab]
    outer = np.exp(-(windows - starts[:, None])) @ w
    return alpha * outer / beta.denominator


def periodic_affine_bounds(alpha: float, beta: PeriodicCoefficient) -> tuple[float, float]:
    """Lower and upper bounds on the periodic solution from int beta^+ and int beta^-."""
    beta._require_negative_mean()
    den = beta.denominator
    lower = TWO_PI * alpha * math.exp(-beta.integral_pos) / den
    upper = TWO_PI * alpha * math.exp(beta.integral_neg) / den
    return lower, upper


def coarse_bound_check(beta: PeriodicCoefficient, beta_max: float, beta_min: float,
                       tol: float = 1e-12) -> bool:
    """exp(int beta^-)/(exp(-int beta) - 1) <= exp(beta_max)/beta_min.

    Preconditions: int|beta| <= beta_max and int beta <= -beta_min < 0.
    """
    if not beta_min > 0.0:
        raise PreconditionError(f"beta_min must be positive, got {beta_min}")
    if beta.integral_abs > beta_max + tol:
        raise PreconditionError(
            f"int|beta| = {beta.integral_abs:.6g} exceeds beta_max = {beta_max:.6g}")
    if beta.integral > -beta_min + tol:
        raise PreconditionError(
            f"int beta = {beta.integral:.6g} is not <= -beta_min = {-beta_min:.6g}")
    lhs = math.exp(beta.integral_neg) / beta.denominator
    return lhs <= math.exp(beta_max) / beta_min


# -- constants and conditions ---------------------------------------------

class FrameworkConstants(NamedTuple):
    C1: float
    C2: float
    E1: float
    E2: float


def _drift_coefficient(kappa: float, c: FluxConstants) -> float:
    return (kappa + 1.0) * c.I + kappa * c.M


def speed_floor(kappa: float, gamma: float, D: float, c: FluxConstants) -> float:
    """A - ((kappa+1)I + kappa M) D - I gamma: lower bound on the barycenter speed."""
    return c.A - _drift_coefficient(kappa, c) * D - c.I * gamma


def framework_constants(kappa: float, gamma: float, D: float,
                        c: FluxConstants) -> FrameworkConstants:
    A, I, M = c.A, c.I, c.M
    C1 = kappa * (M + I) * D ** 2 + 2.0 * I * gamma
    E1 = kappa * (D * (1.5 * I + M) + I * gamma)
    floor = speed_floor(kappa, gamma, D, c)
    if not floor > 0.0:
        raise ConditionError("param1", f"A - ((k+1)I + kM)D - I*gamma = {floor:.6g} <= 0")
    lead = _drift_coefficient(kappa, c) * D + I * gamma
    C2 = C1 / A + lead * (kappa * I * D + C1) / (A * floor)
    E2 = kappa / floor * (D * (1.5 * I + M) + I * gamma
                          + I * (kappa * (I + M) * D + I * gamma) / A)
    return FrameworkConstants(C1, C2, E1, E2)


@dataclass(frozen=True)
class Condition:
    name: str
    lhs: float
    rhs: float
    holds: bool

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "holds": self.holds, "margin": self.margin}


CONDITION_NAMES = ("param1", "D_cond", "lipschitz_regularity")


def check_conditions(kappa: float, gamma: float, D: float, c: FluxConstants) -> dict[str, Condition]:
    """Evaluate the three parameter conditions with their margins (rhs - lhs)."""
    floor = speed_floor(kappa, gamma, D, c)
    out = {"param1": Condition("param1", -floor, 0.0, floor > 0.0)}
    if floor > 0.0 and kappa > 0.0:
        k = framework_constants(kappa, gamma, D, c)
        dcond = TWO_PI * k.C2 * math.exp(TWO_PI * kappa * c.I / c.A) / (kappa * c.B)
        out["D_cond"] = Condition("D_cond", dcond, D, dcond <= D)
        out["lipschitz_regularity"] = Condition(
            "lipschitz_regularity", k.E2, kappa * c.B, k.E2 < kappa * c.B)
    else:
        out["D_cond"] = Condition("D_cond", math.inf, D, False)
        out["lipschitz_regularity"] = Condition("lipschitz_regularity", math.inf,
                                                kappa * c.B, False)
    return out


class Feasibility(NamedTuple):
    D: float
    gamma: float
    D_tilde: float
    gamma_tilde: float


def feasibility(kappa: float, c: FluxConstants) -> Feasibility:
    """Explicit feasible (D, gamma) pairs for coupling ``kappa`` in (0, 1)."""
    A, B, I, M = c.A, c.B, c.I, c.M
    L = _drift_coefficient(kappa, c)
    D_k = min(A / (4.0 * L),
              B * A ** 2 / (16.0 * math.pi * ((M + I) * A + I * L) * math.exp(TWO_PI * I / A)))

    def gamma_of(D):
        return min(A / (4.0 * I), kappa * (M + I) * D ** 2 / (2.0 * I), L * D / I)

    S = 3.0 * I / A + M + kappa * I / A * (I + M)
    D_t = min(D_k, B * A / (8.0 * S))
    g_t = min(gamma_of(D_t), S * D_t / (1.0 + I / A))
    return Feasibility(D_k, gamma_of(D_k), D_t, g_t)


def search_dispersion(kappa: float, gamma: float, c: FluxConstants,
                      points: int = 400) -> tuple[float, float]:
    """D in (0, D_max) on a log grid maximizing the D_cond margin.

    D_max is where param1 degenerates.  Returns (D, margin); a negative
    margin means no grid point satisfies D_cond.
    """
    D_max = (c.A - c.I * gamma) / _drift_coefficient(kappa, c)
    if D_max <= 0.0:
        raise ConditionError("param1", "fails for every D >= 0 at this gamma")
    best = (math.nan, -math.inf)
    for D in np.geomspace(D_max * 1e-8, D_max * (1 - 1e-6), points):
        cond = check_conditions(kappa, gamma, float(D), c)["D_cond"]
        if cond.margin > best[1]:
            best = (float(D), cond.margin)
    return best


# -- envelopes -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TabulatedProfile:
    """A 2pi-periodic function sampled on a uniform grid, linearly interpolated."""

    values: np.ndarray

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, TWO_PI, self.values.size, endpoint=False)

    def __call__(self, s):
        s = np.mod(np.asarray(s, dtype=float), TWO_PI)
        grid = np.append(self.grid, TWO_PI)
        vals = np.append(self.values, self.values[0])
        out = np.interp(s, grid, vals)
        return float(out) if out.ndim == 0 else out

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())


def cluster_coefficient(model: FluxModel, nu: FrequencyMarginal, shift: float = 0.0,
                        n: int = QUAD_GRID) -> PeriodicCoefficient:
    """beta(s) = d_xF/F along s -> delta_s x nu, plus a constant ``shift``."""
    return PeriodicCoefficient(lambda s: sync_ratio(model, nu, s) + shift, n)


def _resolve(model, nu, kappa, consts):
    kappa = model.kappa if kappa is None else kappa
    consts = constants_report(model, nu) if consts is None else consts
    return kappa, consts


def delta_profile(model: FluxModel, nu: FrequencyMarginal, kappa: Optional[float] = None,
                  gamma: Optional[float] = None, D: float = 0.0, *,
                  consts: Optional[FluxConstants] = None, strict: bool = True,
                  n_tab: int = PROFILE_GRID) -> TabulatedProfile:
    """Dispersion envelope: periodic solution with alpha = C2, beta = d_xF/F.

    With ``strict`` the conditions param1 and D_cond must hold and the
    result must stay below D; otherwise only param1 is required and the
    envelope is returned uncertified.
    """
    kappa, consts = _resolve(model, nu, kappa, consts)
    gamma = nu.gamma if gamma is None else gamma
    conds = check_conditions(kappa, gamma, D, consts)
    if strict:
        for name in ("param1", "D_cond"):
            if not conds[name].holds:
                raise ConditionError(name, f"margin {conds[name].margin:.6g}")
    k = framework_constants(kappa, gamma, D, consts)
    beta = cluster_coefficient(model, nu)
    values = tabulate_periodic_solution(k.C2, beta, n_tab)
    if strict and values.max() > D * (1.0 + 1e-9):
        raise ConditionError("D_cond", f"max Delta = {values.max():.6g} exceeds D = {D:.6g}")
    return TabulatedProfile(values)


def alpha_tilde_values(kappa: float, gamma: float, D: float, c: FluxConstants) -> tuple[float, float]:
    """Source term of the Lipschitz envelope in its two published forms.

    First: I / (A - kappa(I+M)D - I gamma); second: I / (A - ((kappa+1)I + kappa M)D - I gamma).
    """
    first = c.I / (c.A - kappa * (c.I + c.M) * D - c.I * gamma)
    second = c.I / speed_floor(kappa, gamma, D, c)
    return first, second


def delta_tilde_profile(model: FluxModel, nu: FrequencyMarginal, kappa: Optional[float] = None,
                        gamma: Optional[float] = None, D: float = 0.0, *,
                        consts: Optional[FluxConstants] = None, strict: bool = True,
                        alpha_form: str = "first",
                        n_tab: int = PROFILE_GRID) -> TabulatedProfile:
    """Lipschitz envelope: periodic solution with source alpha~ and beta + E2."""
    kappa, consts = _resolve(model, nu, kappa, consts)
    gamma = nu.gamma if gamma is None else gamma
    cond = check_conditions(kappa, gamma, D, consts)
    if not cond["param1"].holds:
        raise ConditionError("param1", f"margin {cond['param1'].margin:.6g}")
    if strict and not cond["lipschitz_regularity"].holds:
        raise ConditionError("lipschitz_regularity",
                             f"E2 = {cond['lipschitz_regularity'].lhs:.6g} >= kappa B")
    k = framework_constants(kappa, gamma, D, consts)
    first, second = alpha_tilde_values(kappa, gamma, D, consts)
    alpha = {"first": first, "second": second}[alpha_form]
    beta = cluster_coefficient(model, nu, shift=k.E2)
    return TabulatedProfile(tabulate_periodic_solution(alpha, beta, n_tab))


@dataclass
class BoundProfiles:
    kappa: float
    gamma: float
    D: float
    constants: FluxConstants
    framework: FrameworkConstants
    alpha: float
    alpha_tilde: float
    alpha_tilde_second: float
    delta: TabulatedProfile
    delta_tilde: TabulatedProfile
    conditions: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        """True when all three conditions hold, so the envelopes are invariant."""
        return all(c.holds for c in self.conditions.values())

    @property
    def degenerate(self) -> bool:
        return self.alpha == 0.0

    def summary(self) -> dict:
        return {
            "kappa": self.kappa, "gamma": self.gamma, "D": self.D,
            "C1": self.framework.C1, "C2": self.framework.C2,
            "E1": self.framework.E1, "E2": self.framework.E2,
            "alpha": self.alpha, "alpha_tilde": self.alpha_tilde,
            "alpha_tilde_second_form": self.alpha_tilde_second,
            "delta_min": self.delta.min(), "delta_max": self.delta.max(),
            "delta_tilde_min": self.delta_tilde.min(), "delta_tilde_max": self.delta_tilde.max(),
            "certified": self.certified, "degenerate": self.degenerate,
            "conditions": {k: v.to_dict() for k, v in self.conditions.items()},
        }


def choose_dispersion(kappa: float, gamma: float, c: FluxConstants) -> float:
    """A dispersion budget D for (kappa, gamma).

    Uses the explicit feasible value when it satisfies every condition,
    otherwise the best-margin D from :func:`search_dispersion`.
    """
    if 0.0 < kappa < 1.0:
        D = feasibility(kappa, c).D_tilde
        if all(cd.holds for cd in check_conditions(kappa, gamma, D, c).values()):
            return D
    return search_dispersion(kappa, gamma, c)[0]


def compute_profiles(model: FluxModel, nu: FrequencyMarginal, *,
                     consts: Optional[FluxConstants] = None, gamma: Optional[float] = None,
                     D: Optional[float] = None, strict: bool = True,
                     n_tab: int = PROFILE_GRID) -> BoundProfiles:
    """Both envelopes plus constants and condition margins for one configuration."""
    kappa, consts = _resolve(model, nu, None, consts)
    gamma = nu.gamma if gamma is None else gamma
    if D is None:
        D = choose_dispersion(kappa, gamma, consts)
    conds = check_conditions(kappa, gamma, D, consts)
    k = framework_constants(kappa, gamma, D, consts)
    first, second = alpha_tilde_values(kappa, gamma, D, consts)
    delta = delta_profile(model, nu, kappa, gamma, D, consts=consts, strict=strict, n_tab=n_tab)
    delta_tilde = delta_tilde_profile(model, nu, kappa, gamma, D, consts=consts,
                                      strict=strict, n_tab=n_tab)
    return BoundProfiles(kappa, gamma, D, consts, k, k.C2, first, second,
                         delta, delta_tilde, conds)
