"""Reflection/synchronous coupling of two Langevin copies.

The pair ``(x, v, x2, v2)`` shares a synchronous noise ``dB_sc`` and a noise
``dB_rc`` that the second copy sees reflected across the hyperplane
orthogonal to ``e = Q/|Q|``, with ``Q = Z + W/gamma``.
"""
import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._accel import active_backend, apply_thread_cap
from .csvio import columns_to_rows, write_csv
from .drift import lyapunov_H
from .errors import BlowUpError, ConfigurationError
from .model import PhaseState, potential_eval
from .rng import LEG_RC, LEG_SC, standard_normals

logger = logging.getLogger(__name__)

TRAJECTORY_HEADER = ["t", "rho", "r", "G", "absQ", "absZ", "rc", "K"]


@dataclass(frozen=True)
class CoupledState:
    x: np.ndarray
    v: np.ndarray
    x2: np.ndarray
    v2: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        arrs = [np.atleast_1d(np.asarray(getattr(self, k), dtype=float)) for k in ("x", "v", "x2", "v2")]
        if len({a.shape for a in arrs}) != 1:
            raise ValueError("all four components must share one shape")
        for k, a in zip(("x", "v", "x2", "v2"), arrs):
            object.__setattr__(self, k, a)

    @classmethod
    def from_states(cls, p, q, t=0.0):
        return cls(p.x, p.v, q.x, q.v, t)

    @property
    def first(self):
        return PhaseState(self.x, self.v)

    @property
    def second(self):
        return PhaseState(self.x2, self.v2)

    @property
    def z(self):
        return self.x - self.x2

    @property
    def w(self):
        return self.v - self.v2

    def q(self, gamma):
        return self.z + self.w / gamma


@dataclass(frozen=True)
class CouplingControls:
    xi: float
    R1: float
    alpha: float
    q_floor: float = 0.0
    mode: str = "mixed"

    def __post_init__(self):
        if not self.xi > 0:
            raise ConfigurationError(f"xi must be positive, got {self.xi}", key="xi")
        if self.mode not in kernels.MODES:
            raise ConfigurationError(f"unknown coupling mode {self.mode!r}", key="mode")

    @classmethod
    def from_geometry(cls, geometry, xi=None, mode="mixed"):
        xi = 1e-3 * geometry.R1 if xi is None else xi
        return cls(xi=xi, R1=geometry.R1, alpha=geometry.alpha, mode=mode)

    @property
    def mode_code(self):
        return kernels.MODES[self.mode]


@dataclass(frozen=True)
class NoiseIncrement:
    dB_rc: np.ndarray
    dB_sc: np.ndarray


def draw_noise(seed, members, step, d, dt):
    """Increments with covariance ``dt I`` for the given members at one step."""
    members = np.atleast_1d(members)
    sq = np.sqrt(dt)
    return NoiseIncrement(
        sq * standard_normals(seed, members, step, LEG_RC, d),
        sq * standard_normals(seed, members, step, LEG_SC, d),
    )


def q_step_scale(params, dt):
    """Standard deviation of one step's reflected increment of ``|Q|``: ``2 sqrt(2 u dt / gamma)``."""
    return 2 * np.sqrt(2 * params.u * dt / params.gamma)


def warn_if_unresolved(controls, params, dt):
    """Log when the switching band is narrower than one step's ``Q`` increment.

    The discrete chain then jumps across the band, so the sticky behaviour
    near ``Q = 0`` is lost and the mixed coupling acts like pure reflection.
    """
    kick = q_step_scale(params, dt)
    if controls.mode == "mixed" and controls.xi < kick:
        logger.warning("xi=%.3g is below the per-step Q increment %.3g; pairs will rarely coalesce", controls.xi, kick)
        return True
    return False


def rc_sc(z, w, controls, params):
    """Return ``(rc, sc)`` with ``rc^2 + sc^2 = 1``."""
    return kernels.rc_sc_arrays(
        np.atleast_1d(z), np.atleast_1d(w), params.gamma, controls.xi, controls.R1,
        controls.alpha, controls.mode_code,
    )


def coupled_step(state, pot, params, controls, dt, noise, step_index=0):
    """One Euler-Maruyama step of the coupled system."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    g1 = potential_eval(pot, state.x)[1]
    g2 = potential_eval(pot, state.x2)[1]
    out = kernels.step_arrays(
        state.x, state.v, state.x2, state.v2, g1, g2, params.u, params.gamma, controls.xi,
        controls.R1, controls.alpha, controls.q_floor, controls.mode_code, dt,
        noise.dB_rc.reshape(state.x.shape), noise.dB_sc.reshape(state.x.shape),
    )
    if not all(np.all(np.isfinite(a)) for a in out):
        raise BlowUpError(f"non-finite state at step {step_index}", step=step_index)
    return CoupledState(*out, t=state.t + dt)


def evaluate_K(state, table, geometry, rates, consts, pot, params, controls):
    """Pointwise drift term of ``e^{ct} rho_t`` along the coupling."""
    g, u = params.gamma, params.u
    a, eta, eps = geometry.alpha, geometry.eta, rates.epsilon
    z, w = state.z, state.w
    nq = np.linalg.norm(z + w / g, axis=-1)
    nz = np.linalg.norm(z, axis=-1)
    r = a * nz + nq
    rc, _ = rc_sc(z, w, controls, params)
    H1 = lyapunov_H(pot, consts, params, state.first)
    H2 = lyapunov_H(pot, consts, params, state.second)
    G = 1 + eps * (H1 + H2)
    f, fp, fpp = table.jet(r)
    m = max(1.0, 1 / (2 * a))
    rc2 = rc * rc
    return (
        4 * u / g**2 * rc2 * fpp * G
        + (a * nq - eta / (1 + eta) * a * nz) * fp * G
        + 4 * eps * m * rc2 * r * fp
        + (2 * (params.d + consts.A) - consts.lam * (H1 + H2)) * eps * f
        + rates.c / g * f * G
    )


def diagnostics(state, bundle, controls):
    """Per-pair ``rho, r, G, |Q|, |Z|, rc, K`` and ``H + H'``."""
    b = bundle
    g = b.params.gamma
    z, w = state.z, state.w
    nq = np.linalg.norm(z + w / g, axis=-1)
    nz = np.linalg.norm(z, axis=-1)
    r = b.geometry.alpha * nz + nq
    H_sum = lyapunov_H(b.pot, b.consts, b.params, state.first) + lyapunov_H(b.pot, b.consts, b.params, state.second)
    G = 1 + b.rates.epsilon * H_sum
    rc, _ = rc_sc(z, w, controls, b.params)
    K = evaluate_K(state, b.table, b.geometry, b.rates, b.consts, b.pot, b.params, controls)
    return {"rho": b.table.f_at(r) * G, "r": r, "G": G, "absQ": nq, "absZ": nz, "rc": rc, "K": K, "H_sum": H_sum}


def run_pairs(X, V, X2, V2, pot, params, controls, dt, n_steps, record_every, seed,
              members=None, step_offset=0, backend=None):
    """Dispatch the stepping loop to the selected backend; raises on blow-up."""
    members = np.arange(X.shape[0]) if members is None else np.asarray(members)
    name = active_backend(backend)
    if name == "numba" and not pot.is_builtin:
        logger.info("custom potential: using the numpy backend")
        name = "numpy"
    args = (X, V, X2, V2, pot, params.u, params.gamma, controls.xi, controls.R1, controls.alpha,
            controls.q_floor, controls.mode_code, dt, n_steps, record_every, seed, members, step_offset)
    if name == "numba":
        apply_thread_cap()
        final, rec, status = kernels.run_pairs_numba(*args)
    else:
        final, rec, status = kernels.run_pairs_numpy(*args)
    bad = np.flatnonzero(status >= 0)
    if bad.size:
        i = int(bad[np.argmin(status[bad])])
        raise BlowUpError(f"pair {members[i]} blew up at step {status[i]}", step=int(status[i]), member=int(members[i]))
    return final, rec


@dataclass
class PairTrajectory:
    times: np.ndarray
    columns: dict

    def rows(self):
        return columns_to_rows(self.times, *(self.columns[k] for k in TRAJECTORY_HEADER[1:]))

    def to_csv(self, path):
        return write_csv(path, TRAJECTORY_HEADER, self.rows())


def simulate_pair(init, bundle, controls, dt, T, seed, record_every=1, member=0, backend=None):
    """Simulate one coupled pair and record diagnostics every ``record_every`` steps."""
    if T < 0 or dt <= 0 or record_every < 1:
        raise ValueError("need T >= 0, dt > 0 and record_every >= 1")
    n_steps = int(round(T / dt))
    d = bundle.params.d
    warn_if_unresolved(controls, bundle.params, dt)
    arrs = [np.asarray(a, dtype=float).reshape(1, d) for a in (init.x, init.v, init.x2, init.v2)]
    _, rec = run_pairs(*arrs, bundle.pot, bundle.params, controls, dt, n_steps, record_every, seed,
                       members=np.array([member]), backend=backend)
    states = CoupledState(rec[:, 0, 0], rec[:, 0, 1], rec[:, 0, 2], rec[:, 0, 3])
    cols = diagnostics(states, bundle, controls)
    times = init.t + dt * record_every * np.arange(rec.shape[0])
    return PairTrajectory(times, {k: cols[k] for k in TRAJECTORY_HEADER[1:]})


def _random_directions(rng, n, d):
    u = rng.normal(size=(n, d))
    return u / np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-300)


def random_coupled_states(rng, n, bundle, controls):
    """States spread over the three regimes: ``r >= R1``, ``r < R1`` with large
    ``H + H'``, and ``r < R1`` with small ``H + H'`` (including ``|Q| < xi``)."""
    p, R1, a = bundle.params, controls.R1, controls.alpha
    d, g = p.d, p.gamma
    R = bundle.pot.drift_R if bundle.pot.drift_R is not None else 1.0
    # base point: a third deep in the wells, a third at moderate range, a third far out
    scales = np.array([0.3 / np.sqrt(bundle.consts.L), 1.5 * max(R, 1 / np.sqrt(bundle.consts.L)), 10 * max(R, R1)])
    pick = rng.integers(0, 3, n)
    x = scales[pick][:, None] * rng.normal(size=(n, d))
    vscale = np.where(pick == 0, np.sqrt(p.u), np.sqrt(p.u) * scales[pick] * np.where(rng.random(n) < 0.5, 1.0, g))
    v = vscale[:, None] * rng.normal(size=(n, d))
    nz = rng.uniform(0, 1.6 * R1 / (1 + a), n)
    z = nz[:, None] * _random_directions(rng, n, d)
    nq = np.where(rng.random(n) < 0.25, rng.uniform(0, 2 * controls.xi, n), rng.uniform(0, 1.6 * R1, n))
    q = nq[:, None] * _random_directions(rng, n, d)
    w = g * (q - z)
    return CoupledState(x, v, x - z, v - w)


@dataclass
class KCheckReport:
    max_excess: float
    n_points: int
    regime_counts: dict

    def ok(self, tol=1e-9):
        return self.max_excess <= tol


def k_inequality_check(bundle, controls, n=10**5, rng=None):
    """Largest ``K - (1 + alpha) xi G`` over random states."""
    rng = np.random.default_rng(0) if rng is None else rng
    st = random_coupled_states(rng, n, bundle, controls)
    diag = diagnostics(st, bundle, controls)
    excess = diag["K"] - (1 + bundle.geometry.alpha) * controls.xi * diag["G"]
    far = diag["r"] >= controls.R1
    big_H = diag["H_sum"] >= 2.4 * (bundle.params.d + bundle.consts.A) / bundle.consts.lam
    counts = {"r_ge_R1": int(far.sum()), "r_lt_R1_large_H": int((~far & big_H).sum()),
              "r_lt_R1_small_H": int((~far & ~big_H).sum())}
    return KCheckReport(float(np.max(excess)), n, counts)
