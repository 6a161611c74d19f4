import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlcont.bounds import compute_profiles
from nlcont.dynamics import (TRAJECTORY_COLUMNS, IntegratorOptions, StepSizeError,
                             barycenter_ode_residual, drift_gap, gamma_pairwise,
                             invariance_monitor, max_speed, scalar_rk4,
                             simulate, step, weak_form_residual)
from nlcont.flux import FluxModel, constants_report, leader_flux
from nlcont.measures import (FrequencyMarginal, band_kernel, dirac_kernel, graph_kernel, shift)
from nlcont.ot1d import d2_kernel

NU = FrequencyMarginal.uniform(0.95, 1.05, 6)
WINFREE = FluxModel.winfree(0.1)
STRIDE1 = IntegratorOptions(dt=0.01, store_stride=1)


def test_options_validation():
    with pytest.raises(ValueError):
        IntegratorOptions(dt=0.0)
    with pytest.raises(ValueError):
        IntegratorOptions(method="euler")


def test_zero_time_single_frame():
    K = band_kernel(NU, 0.2, 8)
    tr = simulate(K, WINFREE, 0.0)
    assert len(tr.times) == 1 and tr.final is K


def test_free_flow_diameter_growth():
    K = graph_kernel(NU, NU.omegas, 3)
    tr = simulate(K, FluxModel.winfree(0.0), 2.5, STRIDE1)
    assert math.isclose(tr.diam_series[-1] - tr.diam_series[0], NU.gamma * 2.5, abs_tol=1e-12)
    assert np.allclose(np.diff(tr.xc_series) / np.diff(tr.times), NU.omega_c)


def test_last_step_lands_on_t_end():
    tr = simulate(band_kernel(NU, 0.1, 4), WINFREE, 0.537, IntegratorOptions(dt=0.1))
    assert tr.times[-1] == 0.537
    assert np.all(np.diff(tr.times) > 0)


def test_xc_strictly_increasing_winfree():
    tr = simulate(band_kernel(NU, 0.3, 16), WINFREE, 4 * math.pi, IntegratorOptions(dt=0.02))
    assert np.all(np.diff(tr.xc_series) > 0)


def test_rows_stay_sorted():
    tr = simulate(band_kernel(NU, 1.0, 16, slope=2.0), FluxModel.winfree(0.2), 6.0,
                  IntegratorOptions(dt=0.02, store_stride=5))
    for K in tr.states:
        assert np.all(np.diff(K.values, axis=1) >= 0)


def test_step_size_error():
    K = band_kernel(FrequencyMarginal.dirac(0.0), 3.0, 16)
    with pytest.raises(StepSizeError):
        step(K, FluxModel.winfree(5.0), 2.0)


def test_barycenter_residual_small():
    K = band_kernel(NU, 0.2, 8)
    assert barycenter_ode_residual(simulate(K, FluxModel.winfree(0.0), 1.0, STRIDE1),
                                   FluxModel.winfree(0.0)) < 1e-12
    r1 = barycenter_ode_residual(simulate(K, WINFREE, 1.0, IntegratorOptions(dt=2e-3, store_stride=1)), WINFREE)
    r2 = barycenter_ode_residual(simulate(K, WINFREE, 1.0, IntegratorOptions(dt=1e-3, store_stride=1)), WINFREE)
    assert 3.5 < r1 / r2 < 4.5
    with pytest.raises(ValueError):
        barycenter_ode_residual(simulate(K, WINFREE, 0.0), WINFREE)


def test_barycenter_residual_kuramoto_dirac():
    m = FluxModel.kuramoto(0.3)
    K = dirac_kernel(FrequencyMarginal.dirac(1.0), 0.0, 1)
    assert barycenter_ode_residual(simulate(K, m, 1.0, STRIDE1), m) < 1e-12


def test_drift_gap():
    nu = FrequencyMarginal.dirac(1.0)
    gap, _ = drift_gap(dirac_kernel(nu, 0.4), WINFREE)
    assert gap == 0.0
    m = FluxModel.kuramoto(0.3)
    consts = constants_report(m, nu)
    K = band_kernel(nu, 0.5, 16, center=0.2)
    gap, bound = drift_gap(K, m, consts)
    assert gap <= 0.3 * 0.5 + 1e-15 and gap <= bound


def test_drift_gap_bound_along_run():
    consts = constants_report(WINFREE, NU)
    tr = simulate(band_kernel(NU, 0.4, 16), WINFREE, 6.0, IntegratorOptions(dt=0.02))
    for K in tr.states:
        gap, bound = drift_gap(K, WINFREE, consts)
        assert gap <= bound


def test_gamma_pairwise():
    K = graph_kernel(NU, NU.omegas, 4)
    assert math.isclose(gamma_pairwise(K, K, 0, 3), 1.0)
    K0 = dirac_kernel(NU, 0.0, 4)
    assert gamma_pairwise(K0, K0, 1, 2) == 0.0
    with pytest.raises(ValueError):
        gamma_pairwise(K, K, 1, 1)


def test_weak_form():
    nu = FrequencyMarginal.dirac(0.0)
    still = simulate(band_kernel(nu, 0.3, 4), FluxModel.winfree(0.0), 1.0, STRIDE1)
    assert weak_form_residual(still, FluxModel.winfree(0.0)) == 0.0
    K = band_kernel(NU, 0.3, 16)
    tr = simulate(K, WINFREE, 1.0, IntegratorOptions(dt=1e-3, store_stride=1))
    assert weak_form_residual(tr, WINFREE) <= 1e-4
    linear = [(lambda x, w: x, lambda x, w: np.ones_like(x * w))]
    free = simulate(K, FluxModel.winfree(0.0), 1.0, STRIDE1)
    assert weak_form_residual(free, FluxModel.winfree(0.0), linear) < 1e-12


def test_translation_equivariance():
    K = band_kernel(NU, 0.3, 8, slope=1.0)
    a = simulate(K, WINFREE, 3.0, IntegratorOptions(dt=0.01))
    b = simulate(shift(K, 2 * math.pi), WINFREE, 3.0, IntegratorOptions(dt=0.01))
    for Ka, Kb in zip(a.states, b.states):
        assert d2_kernel(shift(Ka, 2 * math.pi), Kb) < 1e-10


@settings(max_examples=10)
@given(st.floats(0.01, 0.3), st.floats(-1.0, 1.0))
def test_stability_bound(kappa, slope):
    m = FluxModel.winfree(kappa)
    c = constants_report(m, NU)
    K = band_kernel(NU, 0.3, 8, slope=slope)
    Kp = shift(band_kernel(NU, 0.35, 8, slope=slope), 0.01)
    opts = IntegratorOptions(dt=0.02, store_stride=5)
    ta, tb = simulate(K, m, 4.0, opts), simulate(Kp, m, 4.0, opts)
    d0 = d2_kernel(K, Kp)
    for t, Ka, Kb in zip(ta.times, ta.states, tb.states):
        assert d2_kernel(Ka, Kb) <= d0 * math.exp(kappa * (c.M + c.I) * t) * 1.001


def test_time_lipschitz():
    tr = simulate(band_kernel(NU, 0.3, 8), WINFREE, 3.0, IntegratorOptions(dt=0.01, store_stride=3))
    f_max = max_speed(tr, WINFREE)
    for i in range(0, len(tr.times), 4):
        for j in range(i + 1, len(tr.times), 7):
            dt = tr.times[j] - tr.times[i]
            assert d2_kernel(tr.states[i], tr.states[j]) <= f_max * dt * 1.001


def test_invariance_monitor_flags_initial():
    nu = FrequencyMarginal.uniform(0.995, 1.005, 8)
    P = compute_profiles(WINFREE, nu, strict=False)
    wide = band_kernel(nu, 2.0 * P.delta.max(), 8)
    rep = invariance_monitor(simulate(wide, WINFREE, 0.5, IntegratorOptions(dt=0.05)), P)
    assert rep.first_violation == 0
    ok = invariance_monitor(simulate(dirac_kernel(nu, 0.0, 2), WINFREE, 3.0,
                                     IntegratorOptions(dt=0.05)), P)
    assert ok.violations == 0


def test_csv_output(tmp_path):
    nu = FrequencyMarginal.uniform(0.995, 1.005, 4)
    P = compute_profiles(WINFREE, nu, strict=False)
    tr = simulate(band_kernel(nu, 0.1, 4), WINFREE, 0.5, IntegratorOptions(dt=0.05, store_stride=2),
                  profiles=P)
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS
    assert len(rows) == len(tr.times) + 1
    assert float(rows[-1][0]) == 0.5


def test_scalar_rk4_order():
    nu = FrequencyMarginal.dirac(1.0)
    f = lambda x: float(leader_flux(WINFREE, nu, x))
    ref = scalar_rk4(f, 0.0, 2.0, 4096)
    e1 = abs(scalar_rk4(f, 0.0, 2.0, 16) - ref)
    e2 = abs(scalar_rk4(f, 0.0, 2.0, 32) - ref)
    assert e1 / e2 > 8
