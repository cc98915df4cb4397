"""Drift-condition constants and the Lyapunov function ``H``."""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InconsistentParametersError
from .model import PhaseState, potential_eval


@dataclass(frozen=True)
class DriftConstants:
    """Constants ``(L, A, lam)`` of the general drift condition."""

    L: float
    A: float
    lam: float

    def __post_init__(self):
        if not self.L > 0:
            raise ConfigurationError(f"L must be positive, got {self.L}", key="L")
        if not self.A >= 0:
            raise ConfigurationError(f"A must be nonnegative, got {self.A}", key="A")
        if not 0 < self.lam <= 0.25:
            raise ConfigurationError(f"lambda must lie in (0, 1/4], got {self.lam}", key="lambda")

    def check(self, params):
        """Raise if ``lam`` exceeds ``2 L u / gamma^2`` (the condition is then unsatisfiable)."""
        bound = 2 * self.L * params.damping_ratio
        if self.lam > bound * (1 + 1e-12):
            raise InconsistentParametersError(
                f"lambda={self.lam} exceeds 2Lu/gamma^2={bound}", key="lambda"
            )
        return self


def simplified_to_general(L, R, beta, params):
    """Map ``(L, R, beta)`` of the simplified drift condition to ``(L, A, lam)``."""
    if not (L > 0 and R > 0 and beta > 0):
        raise ConfigurationError("L, R and beta must be positive", key="beta")
    LR2 = L * R**2
    if beta > LR2 * (1 + 1e-12):
        raise InconsistentParametersError(f"beta={beta} exceeds L R^2={LR2}", key="beta")
    A = max(LR2 - beta, 0.0) / 8
    k = L * params.damping_ratio
    lam = min(0.25, (beta / LR2) * 2 * k / (1 + 2 * k))
    return DriftConstants(L, A, lam)


def lyapunov_H(pot, consts, params, s):
    """``U(x) + gamma^2/(4u) (|x + v/gamma|^2 + |v/gamma|^2 - lam |x|^2)``."""
    x, v = s.x, s.v
    g = params.gamma
    y = x + v / g
    quad = np.sum(y * y, axis=-1) + np.sum(v * v, axis=-1) / g**2 - consts.lam * np.sum(x * x, axis=-1)
    return pot.energy(x) + 0.25 * g**2 / params.u * quad


def lyapunov_H_lower_bound(consts, params, x):
    """The quadratic minorant ``(1 - 2 lam) gamma^2 |x|^2 / (8u)``."""
    return (1 - 2 * consts.lam) * params.gamma**2 * np.sum(x * x, axis=-1) / (8 * params.u)


def generator_apply_H(pot, consts, params, s):
    """Closed-form generator applied to ``H``."""
    x, v = s.x, s.v
    _, grad = potential_eval(pot, x)
    g, u = params.gamma, params.u
    return 0.5 * g * (
        2 * params.d
        - np.sum(x * grad, axis=-1)
        - np.sum(v * v, axis=-1) / u
        - consts.lam * g / u * np.sum(x * v, axis=-1)
    )


def generator_mc_estimate(pot, consts, params, s, h=1e-4, n_paths=10**6, rng=None):
    """Monte Carlo estimate of the generator on ``H`` from one Euler step of length ``h``.

    Antithetic increments cancel the first-order noise term. Returns
    ``(estimate, standard_error)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    g, u = params.gamma, params.u
    x = np.broadcast_to(s.x, (n_paths // 2, params.d))
    v = np.broadcast_to(s.v, (n_paths // 2, params.d))
    _, grad = potential_eval(pot, s.x)
    xi = rng.normal(size=(n_paths // 2, params.d))
    x_new = x + v * h
    drift_v = v - g * v * h - u * grad * h
    noise = np.sqrt(2 * g * u * h) * xi
    H0 = lyapunov_H(pot, consts, params, s)
    Hp = lyapunov_H(pot, consts, params, PhaseState(x_new, drift_v + noise))
    Hm = lyapunov_H(pot, consts, params, PhaseState(x_new, drift_v - noise))
    samples = (0.5 * (Hp + Hm) - H0) / h
    return float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(samples.size))


@dataclass
class DriftReport:
    """Largest observed excess of the generator over ``gamma (d + A - lam H)``."""

    max_excess: float
    worst_x: np.ndarray
    worst_v: np.ndarray
    n_points: int

    def ok(self, tol=1e-9):
        return self.max_excess <= tol


def default_drift_grid(pot, params, max_points=10**6, per_axis=201):
    """Tensor grid on ``[-5R, 5R]^d x [-5 sqrt(u) gamma R, ...]^d``."""
    d = params.d
    R = pot.drift_R if pot.drift_R is not None else 1.0
    n = min(per_axis, int(np.floor(max_points ** (1.0 / (2 * d)))))
    n = max(n, 2)
    xs = np.linspace(-5 * R, 5 * R, n)
    vmax = 5 * np.sqrt(params.u) * params.gamma * R
    vs = np.linspace(-vmax, vmax, n)
    axes = [xs] * d + [vs] * d
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2 * d)
    return PhaseState(mesh[:, :d], mesh[:, d:])


def drift_excess(pot, consts, params, s):
    LH = generator_apply_H(pot, consts, params, s)
    H = lyapunov_H(pot, consts, params, s)
    return LH - params.gamma * (params.d + consts.A - consts.lam * H)


def verify_lyapunov_drift(pot, consts, params, grid=None):
    """Evaluate the Lyapunov drift inequality on ``grid`` (default tensor grid)."""
    grid = default_drift_grid(pot, params) if grid is None else grid
    if grid.x.size == 0:
        raise ConfigurationError("grid must be nonempty", key="grid")
    x = grid.x.reshape(-1, params.d)
    v = grid.v.reshape(-1, params.d)
    excess = drift_excess(pot, consts, params, PhaseState(x, v))
    i = int(np.argmax(excess))
    return DriftReport(float(excess[i]), x[i].copy(), v[i].copy(), len(excess))


def random_states(rng, n, d, x_max, v_max):
    """Uniform states in the box ``|x_i| <= x_max, |v_i| <= v_max``."""
    return PhaseState(rng.uniform(-x_max, x_max, (n, d)), rng.uniform(-v_max, v_max, (n, d)))


__all__ = [
    "DriftConstants",
    "DriftReport",
    "default_drift_grid",
    "drift_excess",
    "generator_apply_H",
    "generator_mc_estimate",
    "lyapunov_H",
    "lyapunov_H_lower_bound",
    "random_states",
    "simplified_to_general",
    "verify_lyapunov_drift",
]
