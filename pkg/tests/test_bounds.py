import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlcont.bounds import (ConditionError, ExistenceError, PeriodicCoefficient,
                           PreconditionError, alpha_tilde_values, check_conditions,
                           coarse_bound_check, compute_profiles, delta_profile, feasibility,
                           framework_constants, periodic_affine_bounds,
                           periodic_affine_solution, search_dispersion, speed_floor,
                           tabulate_periodic_solution)
from nlcont.flux import FluxConstants, FluxModel
from nlcont.measures import FrequencyMarginal

from oracles import periodic_shooting

UNIT = FluxConstants(A=1.0, B=1.0, I=1.0, M=1.0, Q=1.0)


def sinusoid(c, a, k=1, phase=0.0):
    return lambda s: -c + a * np.sin(k * s + phase)


def test_constant_beta_closed_form():
    beta = PeriodicCoefficient.constant(-0.5)
    assert math.isclose(periodic_affine_solution(1.0, beta, 0.3), 2.0, rel_tol=1e-12)
    assert np.allclose(tabulate_periodic_solution(1.0, beta, 64), 2.0, rtol=1e-12)


def test_alpha_zero_gives_zero():
    beta = PeriodicCoefficient(sinusoid(0.5, 0.3))
    assert periodic_affine_solution(0.0, beta, 1.0) == 0.0


def test_nonnegative_mean_raises():
    with pytest.raises(ExistenceError):
        periodic_affine_solution(1.0, PeriodicCoefficient.constant(0.0), 0.0)


def test_non_periodic_beta_rejected():
    with pytest.raises(ValueError):
        PeriodicCoefficient(lambda s: -1.0 + 0.1 * s)


@given(st.floats(0.1, 1.0), st.floats(0.0, 0.9), st.integers(1, 3), st.floats(0, 6))
def test_matches_shooting(c, a_frac, k, t):
    beta_fn = sinusoid(c, a_frac * 2 * c, k)
    beta = PeriodicCoefficient(beta_fn)
    ref, _ = periodic_shooting(1.3, beta_fn, t)
    assert math.isclose(periodic_affine_solution(1.3, beta, t), ref, rel_tol=1e-8)


def test_tabulation_matches_pointwise():
    beta = PeriodicCoefficient(sinusoid(0.4, 0.6, 2, 0.3))
    tab = tabulate_periodic_solution(0.7, beta, 256)
    s = np.linspace(0, 2 * math.pi, 256, endpoint=False)[::17]
    assert np.allclose(tab[::17], periodic_affine_solution(0.7, beta, s), rtol=1e-12)


def test_bounds_contain_solution():
    beta = PeriodicCoefficient(sinusoid(0.3, 0.8))
    lo, hi = periodic_affine_bounds(2.0, beta)
    tab = tabulate_periodic_solution(2.0, beta)
    assert lo <= tab.min() and tab.max() <= hi


def test_coarse_bound_preconditions():
    beta = PeriodicCoefficient(sinusoid(0.3, 0.2))
    assert coarse_bound_check(beta, beta.integral_abs, -beta.integral)
    with pytest.raises(PreconditionError):
        coarse_bound_check(beta, 0.5 * beta.integral_abs, -beta.integral)
    with pytest.raises(PreconditionError):
        coarse_bound_check(beta, beta.integral_abs, 0.0)


def test_speed_floor_and_param1():
    assert math.isclose(speed_floor(0.5, 0.1, 0.1, UNIT), 1 - 2.0 * 0.1 - 0.1)
    with pytest.raises(ConditionError) as exc:
        framework_constants(0.5, 1.0, 0.1, UNIT)
    assert exc.value.condition == "param1"
    conds = check_conditions(0.5, 1.0, 0.1, UNIT)
    assert not conds["param1"].holds


def test_condition_margins_signs():
    f = feasibility(0.3, UNIT)
    conds = check_conditions(0.3, f.gamma_tilde, f.D_tilde, UNIT)
    for c in conds.values():
        assert c.holds and c.margin > 0


def test_feasibility_monotone_in_gamma():
    f = feasibility(0.5, UNIT)
    assert f.D_tilde <= f.D and f.gamma_tilde <= f.gamma


def test_alpha_tilde_forms():
    first, second = alpha_tilde_values(0.2, 0.01, 0.05, UNIT)
    assert first <= second


def test_search_dispersion_reports_best():
    D, margin = search_dispersion(0.3, 0.0, UNIT)
    assert 0 < D and margin > 0


def test_profiles_kuramoto_constant():
    nu = FrequencyMarginal.dirac(1.0)
    m = FluxModel.kuramoto(0.2)
    P = compute_profiles(m, nu)
    # beta is constant -kappa/omega_c, so the envelopes are flat
    assert math.isclose(P.delta.max(), P.delta.min(), rel_tol=1e-9)
    assert P.certified
    assert math.isclose(P.delta(0.3), P.alpha / 0.2, rel_tol=1e-9)


def test_profiles_degenerate_gamma_zero_dirac():
    nu = FrequencyMarginal.dirac(1.0)
    P = compute_profiles(FluxModel.kuramoto(0.2), nu, D=1e-3, strict=False)
    assert P.summary()["delta_min"] > 0


def test_strict_profile_raises_when_uncertified():
    nu = FrequencyMarginal.uniform(0.995, 1.005, 16)
    with pytest.raises(ConditionError):
        delta_profile(FluxModel.winfree(0.1), nu, D=1e-3)
