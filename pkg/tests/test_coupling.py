import math

import numpy as np
import pytest
from scipy.linalg import expm

from kinetic_coupler import (
    BlowUpError,
    ConfigurationError,
    CoupledState,
    CouplingControls,
    ModelParams,
    PotentialSpec,
    build_bundle,
    coupled_step,
    draw_noise,
    evaluate_K,
    make_potential,
    rc_sc,
    simulate_pair,
)
from kinetic_coupler.coupling import (
    TRAJECTORY_HEADER,
    NoiseIncrement,
    diagnostics,
    k_inequality_check,
    q_step_scale,
    random_coupled_states,
    run_pairs,
)
from kinetic_coupler.csvio import read_csv


def test_controls_validation(linear_bundle):
    with pytest.raises(ConfigurationError):
        CouplingControls(xi=0.0, R1=1.0, alpha=0.1)
    with pytest.raises(ConfigurationError):
        CouplingControls(xi=1.0, R1=1.0, alpha=0.1, mode="sticky")
    c = CouplingControls.from_geometry(linear_bundle.geometry)
    assert c.xi == pytest.approx(1e-3 * linear_bundle.geometry.R1)


def test_rc_sc_boundary_values(linear_bundle, linear_controls, linear_params):
    c = linear_controls
    g = linear_params.gamma
    rc, sc = rc_sc(np.array([[0.5]]), np.array([[-0.5 * g]]), c, linear_params)
    assert rc[0] == 0 and sc[0] == 1
    z = np.array([[0.5]])
    rc, sc = rc_sc(z, np.zeros((1, 1)), c, linear_params)
    assert rc[0] == 1 and sc[0] == 0
    big = np.array([[c.R1]])
    rc, _ = rc_sc(big, np.zeros((1, 1)), c, linear_params)
    assert rc[0] == 0


def test_rc_sc_unit_norm_and_lipschitz(linear_params, rng):
    p = linear_params
    c = CouplingControls(xi=0.3, R1=2.0, alpha=0.2)
    z = rng.uniform(-3, 3, (10**5, 2))
    w = rng.uniform(-3 * p.gamma, 3 * p.gamma, (10**5, 2))
    rc, sc = rc_sc(z, w, c, p)
    assert np.max(np.abs(rc**2 + sc**2 - 1)) <= 4e-16
    dz = rng.normal(scale=0.05, size=z.shape)
    dw = rng.normal(scale=0.05, size=w.shape)
    rc2, _ = rc_sc(z + dz, w + dw, c, p)
    K_lip = 2 * (c.alpha + 1 + 1 / p.gamma) / c.xi
    step = np.linalg.norm(dz, axis=1) + np.linalg.norm(dw, axis=1)
    assert np.all(np.abs(rc2 - rc) <= K_lip * step + 1e-15)


def test_identical_pair_stays_identical(linear_bundle, linear_controls):
    b = linear_bundle
    s = CoupledState([0.7], [-0.2], [0.7], [-0.2])
    for k in range(50):
        s = coupled_step(s, b.pot, b.params, linear_controls, 1e-3, draw_noise(0, 0, k, 1, 1e-3), k)
    assert np.array_equal(s.x, s.x2) and np.array_equal(s.v, s.v2)
    assert s.t == pytest.approx(0.05)


def test_reflection_is_isometry(rng):
    for d in (1, 2, 5):
        e = rng.normal(size=d)
        e /= np.linalg.norm(e)
        db = rng.normal(size=(1000, d))
        refl = db - 2 * np.outer(db @ e, e)
        assert np.allclose(np.linalg.norm(refl, axis=1), np.linalg.norm(db, axis=1), rtol=1e-14)


def test_step_formula(linear_bundle, linear_params):
    b, p = linear_bundle, linear_params
    c = CouplingControls(xi=1e-3, R1=b.geometry.R1, alpha=b.geometry.alpha)
    s = CoupledState([0.4, 0.1], [0.2, -0.3], [-0.1, 0.2], [0.0, 0.1])
    dt = 0.01
    noise = NoiseIncrement(np.array([0.05, -0.02]), np.array([0.01, 0.03]))
    out = coupled_step(s, b.pot, ModelParams(2, p.u, p.gamma), c, dt, noise)
    q = s.z + s.w / p.gamma
    e = q / np.linalg.norm(q)
    sig = math.sqrt(2 * p.gamma * p.u)
    assert np.allclose(out.x, s.x + s.v * dt, rtol=0, atol=1e-15)
    assert np.allclose(out.v, s.v - p.gamma * s.v * dt - s.x * dt + sig * noise.dB_rc, rtol=0, atol=1e-15)
    refl = noise.dB_rc - 2 * e * (e @ noise.dB_rc)
    assert np.allclose(out.v2, s.v2 - p.gamma * s.v2 * dt - s.x2 * dt + sig * refl, rtol=0, atol=1e-15)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blow_up_carries_step(linear_bundle, linear_controls):
    b = linear_bundle
    s = CoupledState([1e308], [1e308], [0.0], [0.0])
    with pytest.raises(BlowUpError) as e:
        coupled_step(s, b.pot, b.params, linear_controls, 1.0, draw_noise(0, 0, 0, 1, 1.0), step_index=17)
    assert e.value.step == 17
    X = np.array([[1e308], [0.0]])
    with pytest.raises(BlowUpError) as e:
        run_pairs(X, X.copy(), np.zeros((2, 1)), np.zeros((2, 1)), b.pot, b.params, linear_controls, 1.0, 5, 1, 0,
                  backend="numpy")
    assert e.value.step == 0 and e.value.member == 0


def test_synchronous_difference_matches_matrix_exponential(linear_params):
    p = linear_params
    L = 1.0
    pot = make_potential(PotentialSpec("quadratic", L=L))
    b = build_bundle(pot, p)
    c = CouplingControls.from_geometry(b.geometry, mode="synchronous")
    M = np.array([[0.0, 1.0], [-p.u * L, -p.gamma]])
    z0 = np.array([1.0, -0.5])
    T = 2.0
    exact = expm(M * T) @ z0
    errs = []
    for dt in (2e-3, 1e-3):
        init = CoupledState([0.3 + z0[0]], [0.1 + z0[1]], [0.3], [0.1])
        tr = simulate_pair(init, b, c, dt, T, seed=1, record_every=int(round(T / dt)))
        _, rec = run_pairs(*(np.array([[a]]) for a in (0.3 + z0[0], 0.1 + z0[1], 0.3, 0.1)), pot, p, c, dt,
                           int(round(T / dt)), int(round(T / dt)), 1)
        zw = np.array([rec[-1, 0, 0, 0] - rec[-1, 0, 2, 0], rec[-1, 0, 1, 0] - rec[-1, 0, 3, 0]])
        errs.append(np.linalg.norm(zw - exact))
        assert tr.columns["absZ"][-1] == pytest.approx(abs(zw[0]), rel=1e-12)
    assert errs[0] < 0.05
    assert errs[1] / errs[0] == pytest.approx(0.5, abs=0.05)


def test_marginal_law_independent_of_mode(linear_bundle):
    b = linear_bundle
    n, dt, steps = 10**4, 1e-2, 100
    stats = {}
    X = np.full((n, 1), 1.5)
    V = np.full((n, 1), -1.0)
    X2 = np.zeros((n, 1))
    for mode in ("reflection", "synchronous", "mixed"):
        c = CouplingControls.from_geometry(b.geometry, mode=mode)
        (x, v, _, _), _ = run_pairs(X, V, X2, X2.copy(), b.pot, b.params, c, dt, steps, steps, 3)
        stats[mode] = np.concatenate([x, v], axis=1)
    ref = stats["synchronous"]
    for mode in ("reflection", "mixed"):
        s = stats[mode]
        se = np.sqrt((ref.var(axis=0) + s.var(axis=0)) / n)
        assert np.all(np.abs(s.mean(axis=0) - ref.mean(axis=0)) <= 3 * se)
        cov_a, cov_b = np.cov(ref.T), np.cov(s.T)
        assert np.all(np.abs(cov_a - cov_b) <= 3 * np.sqrt(2 / n) * (np.abs(cov_a) + 0.5))


def test_K_examples(linear_bundle, linear_controls):
    b, c = linear_bundle, linear_controls
    s = CoupledState([[0.3]], [[0.2]], [[0.3]], [[0.2]])
    K = evaluate_K(s, b.table, b.geometry, b.rates, b.consts, b.pot, b.params, c)
    assert K[0] == 0.0
    # far apart and high energy: K <= 0
    s = CoupledState([[6.0]], [[0.0]], [[-6.0]], [[0.0]])
    d = diagnostics(s, b, c)
    assert d["r"][0] > b.geometry.R1
    assert d["H_sum"][0] >= 2.4 * (1 + b.consts.A) / b.consts.lam
    assert d["K"][0] <= 0


@pytest.mark.parametrize("spec,d", [
    (PotentialSpec("quadratic", L=1.0, R=1.0), 1),
    (PotentialSpec("intro_double_well", a=1.0), 2),
    (PotentialSpec("piecewise_double_well", L=1.0, R=4.0), 1),
    (PotentialSpec("triple_well", L=1.0, R=4.0), 3),
])
@pytest.mark.parametrize("optimized", [False, True])
def test_K_inequality(spec, d, optimized):
    p = ModelParams(d, 1.0, math.sqrt(30))
    b = build_bundle(make_potential(spec), p, use_optimized=optimized)
    c = CouplingControls.from_geometry(b.geometry)
    rep = k_inequality_check(b, c, n=20000, rng=np.random.default_rng(d))
    assert rep.ok(1e-9), rep
    assert min(rep.regime_counts.values()) > 500


def test_random_states_cover_switching_band(linear_bundle, linear_controls):
    st = random_coupled_states(np.random.default_rng(0), 10**4, linear_bundle, linear_controls)
    rc, _ = rc_sc(st.z, st.w, linear_controls, linear_bundle.params)
    assert np.sum((rc > 0) & (rc < 1)) > 500


def test_simulate_pair_determinism_and_csv(linear_bundle, linear_controls, tmp_path):
    b, c = linear_bundle, linear_controls
    init = CoupledState([0.5], [0.0], [-0.5], [0.0])
    batch = CoupledState([[0.5]], [[0.0]], [[-0.5]], [[0.0]])
    t0 = simulate_pair(init, b, c, 1e-3, 0.0, seed=3)
    assert len(t0.times) == 1
    d0 = diagnostics(batch, b, c)
    assert t0.columns["rho"][0] == d0["rho"][0]
    a = simulate_pair(init, b, c, 1e-3, 1.0, seed=3, record_every=10)
    a2 = simulate_pair(init, b, c, 1e-3, 1.0, seed=3, record_every=10)
    assert all(np.array_equal(a.columns[k], a2.columns[k]) for k in a.columns)
    path = tmp_path / "traj.csv"
    a.to_csv(path)
    header, rows = read_csv(path)
    assert header == TRAJECTORY_HEADER and len(rows) == 101
    assert rows[-1][1] == a.columns["rho"][-1]
    with pytest.raises(ValueError):
        simulate_pair(init, b, c, 1e-3, -1.0, seed=0)


def test_pairs_contract_when_band_resolves_the_step(linear_bundle):
    b = linear_bundle
    dt = 1e-3
    # xi of about one step's Q increment: the band is resolved by the scheme
    xi = 1e-2 * b.geometry.R1
    assert xi >= 0.9 * q_step_scale(b.params, dt)
    c = CouplingControls.from_geometry(b.geometry, xi=xi)
    z = b.geometry.R1 / 2 / (1 + b.geometry.alpha)
    init = CoupledState([z / 2], [0.0], [-z / 2], [0.0])
    wins = 0
    for seed in range(100):
        tr = simulate_pair(init, b, c, dt, 20.0, seed=seed, record_every=1000)
        assert tr.columns["r"][0] == pytest.approx(b.geometry.R1 / 2, rel=1e-12)
        wins += tr.columns["rho"][-1] < tr.columns["rho"][0]
    assert wins >= 95
