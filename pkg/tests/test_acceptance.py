"""The ten acceptance criteria, each at its stated tolerance.

Every test prints exactly one ``criterion N (...): PASS|FAIL`` line, even
when pytest captures output.
"""
import math
import time

import numpy as np
import pytest
from scipy.linalg import expm

from kinetic_coupler import (
    CouplingControls,
    EnsembleConfig,
    ModelParams,
    PotentialSpec,
    build_bundle,
    closed_form_rate,
    contraction_audit,
    corollary_rate,
    fit_decay_rate,
    gaussian_spectral_gap,
    make_potential,
    run_ensemble,
    scaling_scan,
    simplified_to_general,
    solve_geometry,
    verify_lyapunov_drift,
)
from kinetic_coupler.coupling import k_inequality_check, run_pairs
from kinetic_coupler.drift import default_drift_grid
from kinetic_coupler.mc import calibrate_dt_slack
from kinetic_coupler.metric import fixed_point_residual, metric_bounds_report

SQRT30 = math.sqrt(30)


@pytest.fixture
def report(capsys):
    t0 = time.perf_counter()

    def emit(n, name, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n} ({name}): {'PASS' if ok else 'FAIL'} [{time.perf_counter() - t0:.2f} s] {detail}")
        assert ok, detail

    return emit


def linear_model():
    pot = make_potential(PotentialSpec("quadratic", L=1.0, R=1.0))
    return build_bundle(pot, ModelParams(1, 1.0, SQRT30))


def test_criterion_01_linear_corollary_rate(report):
    p = ModelParams(1, 1.0, SQRT30)
    rate = corollary_rate(1.0, 1.0, 1.0, 1.0, p).rate
    target = p.gamma / 184500
    err = abs(rate / target - 1)
    report(1, "corollary rate gamma/184500", err <= 1e-9, f"rate={rate:.15g} target={target:.15g} rel_err={err:.2e}")


def test_criterion_02_spectral_gap(report):
    p = ModelParams(1, 1.0, SQRT30)
    gap = gaussian_spectral_gap(1.0, p)
    exact = p.gamma * (1 - math.sqrt(13 / 15)) / 2
    rng = np.random.default_rng(2)
    worst = math.inf
    for _ in range(1000):
        L, u, g = (float(np.exp(rng.uniform(-3, 3))) for _ in range(3))
        k = L * u / g**2
        c = gaussian_spectral_gap(L, ModelParams(1, u, g))
        lo, hi = g * min(0.25, k), g * min(0.5, 2 * k)
        worst = min(worst, c - lo * (1 - 1e-14), hi * (1 + 1e-14) - c)
    ok = abs(gap - exact) <= 1e-15 * exact and worst >= 0
    report(2, "spectral gap", ok, f"c_gap={gap:.17g} exact={exact:.17g} gamma/c_gap={p.gamma / gap:.3f} "
                                  f"sandwich worst margin={worst:.3g}")


def test_criterion_03_double_well_prefactor(report):
    a, u = 1.0, 1.0
    p = ModelParams(1, u, SQRT30 / a)
    pot = make_potential(PotentialSpec("intro_double_well", a=a))
    L, R, beta = pot.lipschitz_L, pot.drift_R, pot.drift_beta
    cb = corollary_rate(L, R, beta, max(1.0, L * R**2 / beta), p)
    ga = p.gamma * a
    ref = math.sqrt(u) / 107 * min(ga**-4 * u**2, math.exp(-8) * ga**-2 * u, 2**-1.5 * math.exp(-8)) / a
    err = abs(cb.rate_radius_form / ref - 1)
    report(3, "double-well prefactor", err <= 0.01,
           f"corollary={cb.rate_radius_form:.6g} reference={ref:.6g} rel_err={err:.2e} (lambda form {cb.rate:.6g})")


def test_criterion_04_lyapunov_inequality(report):
    p = ModelParams(1, 1.0, SQRT30)
    parts, ok = [], True
    for spec in (PotentialSpec("quadratic", L=1.0, R=1.0), PotentialSpec("piecewise_double_well", L=1.0, R=4.0),
                 PotentialSpec("intro_double_well", a=1.0)):
        pot = make_potential(spec)
        consts = simplified_to_general(pot.lipschitz_L, pot.drift_R, pot.drift_beta, p)
        rep = verify_lyapunov_drift(pot, consts, p, default_drift_grid(pot, p))
        ok &= rep.max_excess <= 1e-9 and rep.n_points >= 10**4
        parts.append(f"{spec.kind}: {rep.max_excess:.3g} over {rep.n_points}")
    report(4, "Lyapunov inequality", ok, "; ".join(parts))


def test_criterion_05_metric_bounds(report):
    b = linear_model()
    rep = metric_bounds_report(b.table, b.consts, n_random=1000, rng=np.random.default_rng(5), tol=1e-8)
    worst = min(rep.margins.items(), key=lambda kv: kv[1])
    ok = rep.ok and b.table.quad_error <= 1e-8 * b.table.f_R1
    report(5, "metric bounds", ok, f"quad_error={b.table.quad_error:.2e} tightest={worst[0]}:{worst[1]:.3g} "
                                   f"failing={rep.failing()}")


def test_criterion_06_fixed_point(report):
    rng = np.random.default_rng(6)
    worst_res, worst_lam, worst_sand, n_damped = 0.0, math.inf, math.inf, 0
    for _ in range(1000):
        d = int(rng.integers(1, 4))
        L = float(np.exp(rng.uniform(-2, 2)))
        R = float(np.exp(rng.uniform(-1, 1.5)))
        beta = L * R**2 * float(rng.uniform(0.3, 1.0))
        u = float(np.exp(rng.uniform(-1, 1)))
        k = float(np.exp(rng.uniform(math.log(1e-3), math.log(0.25))))
        p = ModelParams(d, u, math.sqrt(L * u / k))
        c = simplified_to_general(L, R, beta, p)
        g = solve_geometry(c, p)
        worst_res = max(worst_res, abs(fixed_point_residual(g.alpha, c, p)))
        worst_lam = min(worst_lam, g.Lambda / (1.2 * (d + c.A)) - 1)
        if k <= 1 / 8:
            n_damped += 1
            base = 1.2 * (d + c.A) * L * R**2 / beta
            worst_sand = min(worst_sand, g.Lambda / base - 1, (1 + 20 * k) - g.Lambda / base)
    ok = worst_res <= 1e-12 and worst_lam >= -1e-12 and worst_sand >= -1e-12
    report(6, "fixed point", ok, f"max residual={worst_res:.2e} min Lambda/(6(d+A)/5)-1={worst_lam:.3g} "
                                 f"sandwich worst={worst_sand:.3g} over {n_damped} damped sets")


def test_criterion_07_K_inequality(report):
    b = linear_model()
    controls = CouplingControls.from_geometry(b.geometry)
    assert controls.xi == 1e-3 * b.geometry.R1 and b.rates.c == closed_form_rate(b.geometry, b.consts, b.params)
    rep = k_inequality_check(b, controls, n=10**5, rng=np.random.default_rng(7))
    ok = rep.ok(1e-9) and min(rep.regime_counts.values()) > 0
    report(7, "K inequality", ok, f"max K-(1+alpha)xi G={rep.max_excess:.3g} over {rep.n_points}; {rep.regime_counts}")


def test_criterion_08_contraction_audit(report):
    b = linear_model()
    cfg = EnsembleConfig(n_pairs=2000, dt=1e-3, T=20.0)
    kappa, series, _ = calibrate_dt_slack(cfg, b)
    audit = contraction_audit(series, b.rates, b.geometry, cfg, gamma=b.params.gamma, kappa=kappa)
    rate, r2 = fit_decay_rate(series, (cfg.T / 2, cfg.T))
    c_gap = gaussian_spectral_gap(1.0, b.params)
    rate_ok = b.rates.c <= rate <= 1.1 * c_gap
    report(8, "contraction audit", audit.passed and rate_ok,
           f"audit {'pass' if audit.passed else 'fail'} (worst margin {audit.worst_margin:.3g}, kappa {kappa:.3g}); "
           f"fitted rate {rate:.4g} (r2 {r2:.2f}) vs [c*={b.rates.c:.3g}, 1.1 c_gap={1.1 * c_gap:.4g}]")


def test_criterion_09_kinetic_scaling(report):
    base = build_bundle(make_potential(PotentialSpec("intro_double_well", a=1.0)), ModelParams(1, 1.0, SQRT30))
    tab = scaling_scan(base, [1.0, 2.0, 4.0, 8.0])
    ca = tab.column("c_times_a")
    spread = float(np.max(np.abs(ca / ca[0] - 1)))
    report(9, "kinetic scaling", spread <= 0.01, f"c*a={np.array2string(ca, precision=6)} spread={spread:.2e}")


def test_criterion_10_propagator_oracle(report):
    b = linear_model()
    p = b.params
    c = CouplingControls.from_geometry(b.geometry, mode="synchronous")
    z0, T = np.array([1.0, -0.5]), 2.0
    exact = expm(np.array([[0.0, 1.0], [-p.u * b.consts.L, -p.gamma]]) * T) @ z0
    errs = []
    for dt in (4e-3, 2e-3, 1e-3, 5e-4):
        n = int(round(T / dt))
        start = [np.array([[v]]) for v in (0.3 + z0[0], 0.1 + z0[1], 0.3, 0.1)]
        _, rec = run_pairs(*start, b.pot, p, c, dt, n, n, 10)
        zw = rec[-1, 0, 0, 0] - rec[-1, 0, 2, 0], rec[-1, 0, 1, 0] - rec[-1, 0, 3, 0]
        errs.append(float(np.linalg.norm(np.array(zw) - exact)))
    ratios = [e2 / e1 for e1, e2 in zip(errs, errs[1:])]
    ok = all(abs(r - 0.5) <= 0.05 for r in ratios) and errs[-1] < 1e-2
    report(10, "propagator oracle", ok, f"errors={['%.3g' % e for e in errs]} ratios={['%.3f' % r for r in ratios]}")
