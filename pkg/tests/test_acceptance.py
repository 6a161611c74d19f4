"""Acceptance criteria 1-12; each test prints one PASS/FAIL line."""
import math
import time
from itertools import combinations

import numpy as np

from conftest import ACCEPTANCE_LINES
from oracles import brute_force_wasserstein, periodic_shooting

from nlcont.bounds import (CONDITION_NAMES, PeriodicCoefficient, check_conditions,
                           coarse_bound_check, compute_profiles, feasibility,
                           periodic_affine_bounds, periodic_affine_solution,
                           tabulate_periodic_solution)
from nlcont.dynamics import IntegratorOptions, invariance_monitor, max_speed, scalar_rk4, simulate
from nlcont.flux import FluxConstants, FluxModel, constants_report, leader_flux, lower_bound_A, sync_integral
from nlcont.graph import GraphState, evolve_graph, monotonicity_check, twist_margin
from nlcont.measures import (FrequencyMarginal, QuantileKernel, barycenter, check_membership,
                             dirac_kernel, shift)
from nlcont.ot1d import QuantileVector, cat0_residual, d2_kernel, kernel_geodesic, w1, w2
from nlcont.poincare import (certify_periodic, find_periodic, first_return, initial_guess,
                             poincare_map)

TWO_PI = 2 * math.pi


def record(n, title, ok, detail, elapsed, limit):
    ok = ok and elapsed < limit
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {title} ({detail}; {elapsed:.2f}s / {limit:g}s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def winfree_setup():
    """omega_c = 1, kappa = 0.1, gamma = 0.01, 16 nodes, 64 quantiles."""
    nu = FrequencyMarginal.equal_weights(np.linspace(0.995, 1.005, 16))
    model = FluxModel.winfree(0.1)
    profiles = compute_profiles(model, nu, strict=False)
    K0 = initial_guess(nu, "band", 64, slope=1.0, width=0.3)
    return nu, model, profiles, K0


def test_c01_kuramoto_sync_integral():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        kappa, wc = rng.uniform(0, 1), rng.uniform(0.5, 2)
        val = sync_integral(FluxModel.kuramoto(kappa), FrequencyMarginal.dirac(wc))
        worst = max(worst, abs(val + TWO_PI * kappa / wc))
    record(1, "Kuramoto sync integral", worst <= 1e-10, f"max err {worst:.2e}",
           time.perf_counter() - t0, 1.0)


def test_c02_winfree_no_stationarity():
    t0 = time.perf_counter()
    nu, m = FrequencyMarginal.dirac(1.0), FluxModel.winfree(0.2)
    A, S = lower_bound_A(m, nu), sync_integral(m, nu)
    record(2, "Winfree lower bound and sync integral", A >= 0.5 and S <= -0.2 / 3,
           f"A={A:.6f}, sync={S:.6f}", time.perf_counter() - t0, 1.0)


def test_c03_periodic_affine_ode():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    rel, per, contain, coarse = 0.0, 0.0, True, True
    for case in range(10):
        c, amp, k, ph = rng.uniform(0.1, 1.0), rng.uniform(0, 1.5), 1 + case % 3, rng.uniform(0, TWO_PI)
        alpha = rng.uniform(0.2, 2.0)
        fn = lambda s, c=c, amp=amp, k=k, ph=ph: -c + amp * np.sin(k * s + ph)
        beta = PeriodicCoefficient(fn)
        for t in (0.0, 1.1, 3.7, 5.9):
            ref, _ = periodic_shooting(alpha, fn, t)
            got = periodic_affine_solution(alpha, beta, t)
            rel = max(rel, abs(got - ref) / abs(ref))
            per = max(per, abs(periodic_affine_solution(alpha, beta, t + TWO_PI) - got))
        tab = tabulate_periodic_solution(alpha, beta)
        lo, hi = periodic_affine_bounds(alpha, beta)
        contain &= lo <= tab.min() and tab.max() <= hi
        coarse &= coarse_bound_check(beta, beta.integral_abs, -beta.integral)
    ok = rel <= 1e-8 and per <= 1e-10 and contain and coarse
    record(3, "periodic affine ODE closed form", ok,
           f"rel err {rel:.2e}, periodicity {per:.2e}, bounds {contain}, coarse {coarse}",
           time.perf_counter() - t0, 5.0)


def test_c04_ot_brute_force():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(100):
        n = 1 + i % 8
        a = QuantileVector.from_samples(rng.normal(size=n))
        b = QuantileVector.from_samples(rng.normal(size=n) * 2 + 1)
        worst = max(worst, abs(w2(a, b) - brute_force_wasserstein(a.values, b.values, 2)),
                    abs(w1(a, b) - brute_force_wasserstein(a.values, b.values, 1)))
    record(4, "1D OT equals brute-force coupling minimum", worst <= 1e-12,
           f"max err {worst:.2e}", time.perf_counter() - t0, 10.0)


def test_c05_geodesic_cat0():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    nu = FrequencyMarginal([0.0, 0.4, 1.0], [0.3, 0.3, 0.4])
    mk = lambda: QuantileKernel.from_rows(nu, np.sort(rng.normal(size=(3, 12)) * 3, axis=1))
    speed, cat = 0.0, 0.0
    for _ in range(100):
        p, p0, p1 = mk(), mk(), mk()
        u, v = rng.uniform(size=2)
        d = d2_kernel(kernel_geodesic(p0, p1, u), kernel_geodesic(p0, p1, v))
        speed = max(speed, abs(d - abs(u - v) * d2_kernel(p0, p1)))
        cat = max(cat, abs(cat0_residual(p, p0, p1, u)))
    record(5, "geodesic speed and CAT(0) equality", speed <= 1e-10 and cat <= 1e-10,
           f"speed err {speed:.2e}, cat0 {cat:.2e}", time.perf_counter() - t0, 5.0)


def test_c06_feasibility():
    t0 = time.perf_counter()
    c = FluxConstants(A=1.0, B=1.0, I=1.0, M=1.0, Q=1.0)
    worst = math.inf
    for kappa in (np.arange(20) + 0.5) / 20:
        f = feasibility(float(kappa), c)
        conds = check_conditions(float(kappa), f.gamma_tilde, f.D_tilde, c)
        worst = min(worst, min(conds[n].margin for n in CONDITION_NAMES))
    record(6, "feasible (gamma~, D~) satisfy all conditions", worst > 0,
           f"min margin {worst:.3e}", time.perf_counter() - t0, 1.0)


def test_c07_invariance():
    t0 = time.perf_counter()
    nu, m, P, K0 = winfree_setup()
    start = check_membership(K0, P)
    T = first_return(K0, m, IntegratorOptions(dt=0.01)).T_return
    tr = simulate(K0, m, 10.5 * T, IntegratorOptions(dt=0.01, store_stride=1))
    rep = invariance_monitor(tr, P, tol=1e-6)
    ok = start.inside and rep.violations == 0 and tr.xc_series[-1] - tr.xc_series[0] >= 10 * TWO_PI
    record(7, "envelope invariance over 10 periods", ok,
           f"{len(tr.times)} frames, worst margins {rep.worst_delta_margin:.3e} / "
           f"{rep.worst_delta_tilde_margin:.3e}, envelopes certified={P.certified}",
           time.perf_counter() - t0, 120.0)


def test_c08_degenerate_period():
    t0 = time.perf_counter()
    wc = 1.37
    K = dirac_kernel(FrequencyMarginal.dirac(wc), 0.0, 1)
    m = FluxModel.kuramoto(0.4)
    r = first_return(K, m, IntegratorOptions(dt=0.01))
    PK, _ = poincare_map(K, m, IntegratorOptions(dt=0.01))
    err_T, err_P = abs(r.T_return - TWO_PI / wc), d2_kernel(PK, K)
    record(8, "single-node Kuramoto period and fixed point", err_T <= 1e-8 and err_P <= 1e-10,
           f"|T - 2pi/wc| {err_T:.2e}, d2(P K, K) {err_P:.2e}", time.perf_counter() - t0, 1.0)


def test_c09_periodic_orbit():
    t0 = time.perf_counter()
    nu, m, P, K0 = winfree_setup()
    opts = IntegratorOptions(dt=0.01)
    res = find_periodic(K0, m, opts, tol=1e-6, max_iter=200, relax="auto")
    cert = certify_periodic(res.state, m, res.period, opts, samples=8)
    half = find_periodic(K0, m, opts, tol=1e-6, max_iter=200, relax=0.5)
    ok = res.converged and res.residual <= 1e-6 and cert.max_mismatch <= 1e-5 and half.converged
    record(9, "periodic orbit search and certificate", ok,
           f"auto: {res.iterations} it, residual {res.residual:.2e}, T*={res.period:.10f}; "
           f"certificate {cert.max_mismatch:.2e}; theta=1/2: {half.iterations} it",
           time.perf_counter() - t0, 600.0)


def test_c10_stability_time_lipschitz():
    t0 = time.perf_counter()
    nu, m, P, K0 = winfree_setup()
    c = constants_report(m, nu)
    K1 = shift(initial_guess(nu, "band", 64, slope=1.2, width=0.32), 0.02)
    opts = IntegratorOptions(dt=0.01, store_stride=5)
    t_end = 2 * TWO_PI
    a, b = simulate(K0, m, t_end, opts), simulate(K1, m, t_end, opts)
    d0 = d2_kernel(K0, K1)
    stab = max(d2_kernel(x, y) / (d0 * math.exp(m.kappa * (c.M + c.I) * t))
               for t, x, y in zip(a.times, a.states, b.states))
    f_max = max_speed(a, m)
    idx = range(0, len(a.times), 7)
    lip = max(d2_kernel(a.states[i], a.states[j]) / (f_max * (a.times[j] - a.times[i]))
              for i, j in combinations(idx, 2))
    record(10, "stability and time-Lipschitz bounds", stab <= 1.001 and lip <= 1.001,
           f"stability ratio {stab:.4f}, Lipschitz ratio {lip:.4f}", time.perf_counter() - t0, 60.0)


def test_c11_twist_monotonicity():
    t0 = time.perf_counter()
    nu = FrequencyMarginal.equal_weights(np.linspace(0.995, 1.005, 16))
    m = FluxModel.winfree(0.1)
    tr = evolve_graph(GraphState(nu, np.zeros(16)), m, 3 * TWO_PI, IntegratorOptions(dt=0.01, store_stride=1))
    D = float(np.max(tr.G.max(axis=1) - tr.G.min(axis=1)))
    margin = twist_margin(m, D, M=1.0, I=2.0)
    slope = monotonicity_check(tr)
    record(11, "graph order preservation under twist", margin > 0 and slope > 0,
           f"DM + kI = {1 - margin:.4f}, min slope {slope:.4e}", time.perf_counter() - t0, 30.0)


def test_c12_integrator_order():
    t0 = time.perf_counter()
    nu, m = FrequencyMarginal.dirac(1.0), FluxModel.winfree(0.2)
    K = dirac_kernel(nu, 0.0, 1)
    t_end = 3.0
    ref = scalar_rk4(lambda x: float(leader_flux(m, nu, x)), 0.0, t_end, 20000)
    errs = [abs(barycenter(simulate(K, m, t_end, IntegratorOptions(dt=dt)).final) - ref)
            for dt in (0.2, 0.1, 0.05)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    record(12, "RK4 order under dt halving", min(ratios) >= 8,
           f"errors {', '.join(f'{e:.2e}' for e in errs)}, ratios {ratios[0]:.1f}, {ratios[1]:.1f}",
           time.perf_counter() - t0, 10.0)
