"""Potentials, model parameters, the stationary measure and assumption checks.

Positions and velocities are numpy arrays whose last axis has length ``d``;
every function here broadcasts over leading (batch) axes.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, DimensionError, EnvelopeError

QUADRATIC, INTRO_DOUBLE_WELL, PIECEWISE_DOUBLE_WELL, TRIPLE_WELL, CUSTOM = range(5)

KIND_NAMES = {
    "quadratic": QUADRATIC,
    "intro_double_well": INTRO_DOUBLE_WELL,
    "piecewise_double_well": PIECEWISE_DOUBLE_WELL,
    "triple_well": TRIPLE_WELL,
    "custom": CUSTOM,
}


@dataclass(frozen=True)
class ModelParams:
    """Dimension ``d``, inverse mass ``u`` and friction ``gamma``."""

    d: int
    u: float
    gamma: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ConfigurationError(f"d must be a positive integer, got {self.d!r}", key="d")
        for key in ("u", "gamma"):
            val = getattr(self, key)
            if not np.isfinite(val) or val <= 0:
                raise ConfigurationError(f"{key} must be a positive finite real, got {val!r}", key=key)

    @property
    def damping_ratio(self):
        """Dimensionless ratio ``u / gamma**2`` (multiply by L for Lu/gamma^2)."""
        return self.u / self.gamma**2


@dataclass(frozen=True)
class PhaseState:
    """Position/velocity pair; arrays may carry leading batch axes."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        if v.ndim == 0:
            v = v.reshape(1)
        if x.shape != v.shape:
            raise DimensionError(f"x has shape {x.shape} but v has shape {v.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("phase state entries must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def d(self):
        return self.x.shape[-1]

    def check(self, params):
        if self.d != params.d:
            raise DimensionError(f"state has dimension {self.d}, model has d={params.d}")
        return self


@dataclass(frozen=True)
class PotentialSpec:
    kind: str
    L: Optional[float] = None
    R: Optional[float] = None
    a: Optional[float] = None
    beta: Optional[float] = None
    energy: Optional[Callable] = None
    grad: Optional[Callable] = None


@dataclass(frozen=True)
class Potential:
    """An immutable potential ``U`` with its Lipschitz constant and drift data.

    ``drift_R``/``drift_beta`` are the constants in the simplified drift
    condition ``x . grad U(x) >= beta (|x|/R)^2`` for ``|x| >= R``.
    """

    kind: int
    lipschitz_L: float
    drift_R: Optional[float] = None
    drift_beta: Optional[float] = None
    kernel_params: np.ndarray = field(default_factory=lambda: np.zeros(2))
    energy_fn: Optional[Callable] = None
    grad_fn: Optional[Callable] = None
    dim: Optional[int] = None
    # exact value of sup(beta |x|^2 / (2 R^2) - U(x)); None means use beta/2
    envelope_log_bound: Optional[float] = None

    @property
    def name(self):
        return {v: k for k, v in KIND_NAMES.items()}[self.kind]

    @property
    def is_builtin(self):
        return self.kind != CUSTOM

    def energy(self, x):
        return potential_eval(self, x)[0]

    def grad(self, x):
        return potential_eval(self, x)[1]


def _positive(value, key):
    if value is None:
        raise ConfigurationError(f"potential parameter {key!r} is required", key=key)
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ConfigurationError(f"potential parameter {key!r} must be positive, got {value!r}", key=key)
    return value


def make_potential(spec):
    """Build a :class:`Potential` from a :class:`PotentialSpec`."""
    kind = spec.kind.lower()
    if kind not in KIND_NAMES:
        raise ConfigurationError(f"unknown potential kind {spec.kind!r}", key="kind")
    code = KIND_NAMES[kind]
    if code == QUADRATIC:
        L = _positive(spec.L, "L")
        R = 1.0 if spec.R is None else _positive(spec.R, "R")
        return Potential(code, L, R, L * R**2, np.array([L, 0.0]), envelope_log_bound=0.0)
    if code == INTRO_DOUBLE_WELL:
        a = _positive(spec.a, "a")
        return Potential(code, a**-2, 4.0 * a, 8.0, np.array([a, 0.0]), envelope_log_bound=0.5)
    if code in (PIECEWISE_DOUBLE_WELL, TRIPLE_WELL):
        L = _positive(spec.L, "L")
        R = _positive(spec.R, "R")
        return Potential(code, L, R, L * R**2 / 2, np.array([L, R]), envelope_log_bound=L * R**2 / 8)
    # custom
    if spec.energy is None or spec.grad is None:
        raise ConfigurationError("custom potential needs energy and grad callables", key="energy")
    L = _positive(spec.L, "L")
    R = None if spec.R is None else _positive(spec.R, "R")
    beta = None if spec.beta is None else _positive(spec.beta, "beta")
    if (R is None) != (beta is None):
        raise ConfigurationError("custom potential needs both R and beta or neither", key="beta")
    if beta is not None and beta > L * R**2 * (1 + 1e-12):
        raise ConfigurationError(f"beta={beta} exceeds L R^2={L * R**2}", key="beta")
    return Potential(code, L, R, beta, np.zeros(2), spec.energy, spec.grad)


def _double_well_profile(y, L, R):
    """1D double well with minima at 0 and R/2; returns (value, derivative)."""
    y = np.asarray(y, dtype=float)
    lo = y <= R / 8
    hi = y >= 3 * R / 8
    mid = ~(lo | hi)
    val = np.empty_like(y)
    der = np.empty_like(y)
    val[lo] = L * y[lo] ** 2 / 2
    der[lo] = L * y[lo]
    ym = y[mid] - R / 4
    val[mid] = -L * ym**2 / 2 + L * R**2 / 64
    der[mid] = -L * ym
    yh = y[hi] - R / 2
    val[hi] = L * yh**2 / 2
    der[hi] = L * yh
    return val, der


def potential_eval(pot, x):
    """Return ``(U(x), grad U(x))`` for positions with last axis ``d``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if pot.dim is not None and x.shape[-1] != pot.dim:
        raise DimensionError(f"potential expects dimension {pot.dim}, got {x.shape[-1]}")
    kind = pot.kind
    if kind == QUADRATIC:
        L = pot.kernel_params[0]
        return 0.5 * L * np.sum(x * x, axis=-1), L * x
    if kind == INTRO_DOUBLE_WELL:
        a = pot.kernel_params[0]
        nx = np.linalg.norm(x, axis=-1)
        y = nx / a
        inner = y <= 0.5
        energy = np.where(inner, 0.25 - y**2 / 2, (y - 1) ** 2 / 2)
        safe = np.where(inner, 1.0, nx)
        coef = np.where(inner, -1.0 / a**2, (1.0 - a / safe) / a**2)
        return energy, coef[..., None] * x
    if kind == PIECEWISE_DOUBLE_WELL:
        L, R = pot.kernel_params
        val, der = _double_well_profile(x[..., 0], L, R)
        rest = x[..., 1:]
        energy = val + 0.5 * L * np.sum(rest * rest, axis=-1)
        grad = L * x
        grad[..., 0] = der
        return energy, grad
    if kind == TRIPLE_WELL:
        L, R = pot.kernel_params
        nx = np.linalg.norm(x, axis=-1)
        val, der = _double_well_profile(nx, L, R)
        with np.errstate(invalid="ignore", divide="ignore"):
            coef = np.where(nx > 0, der / np.where(nx > 0, nx, 1.0), 0.0)
        return val, coef[..., None] * x
    energy = np.asarray(pot.energy_fn(x), dtype=float)
    grad = np.asarray(pot.grad_fn(x), dtype=float)
    if grad.shape != x.shape:
        raise DimensionError(f"custom gradient returned shape {grad.shape}, expected {x.shape}")
    return energy, grad


def stationary_log_density(pot, params, s):
    """Unnormalised log density ``-U(x) - |v|^2/(2u)`` of the invariant measure."""
    s.check(params)
    return -pot.energy(s.x) - np.sum(s.v * s.v, axis=-1) / (2 * params.u)


def sample_stationary(pot, params, rng, n=None, batch=65536, max_proposals=10**9):
    """Draw from the invariant measure by Gaussian-envelope rejection in ``x``.

    The envelope ``N(0, R^2/beta I)`` dominates ``exp(-U)`` up to the factor
    ``exp(m)``, ``m = sup(beta|x|^2/(2R^2) - U)``. Builtins store ``m``
    exactly; custom potentials fall back to ``m <= beta/2`` (which needs
    ``U >= 0`` and the simplified drift condition). Returns arrays of shape
    ``(n, d)``, or ``(d,)`` when ``n`` is None.
    """
    d = params.d
    if d > 3:
        raise ConfigurationError("builtin rejection sampler supports d <= 3; supply a sampler", key="d")
    if pot.drift_R is None or pot.drift_beta is None:
        raise ConfigurationError("sampling needs the drift constants R and beta on the potential", key="R")
    count = 1 if n is None else int(n)
    sigma = pot.drift_R / np.sqrt(pot.drift_beta)
    m = pot.envelope_log_bound if pot.envelope_log_bound is not None else pot.drift_beta / 2
    accepted = []
    n_acc = 0
    n_prop = 0
    while n_acc < count:
        prop = rng.normal(0.0, sigma, size=(batch, d))
        log_ratio = -pot.energy(prop) + np.sum(prop * prop, axis=-1) / (2 * sigma**2) - m
        keep = np.log(rng.random(batch)) < log_ratio
        n_prop += batch
        accepted.append(prop[keep])
        n_acc += int(keep.sum())
        if n_prop >= 10 * batch and n_acc < 1e-4 * n_prop:
            raise EnvelopeError(f"rejection acceptance rate {n_acc / n_prop:.2e} below 1e-4")
        if n_prop > max_proposals:
            raise EnvelopeError("rejection sampler exceeded its proposal budget")
    if n_acc == 0 or n_acc < 1e-4 * n_prop:
        raise EnvelopeError(f"rejection acceptance rate {n_acc / n_prop:.2e} below 1e-4")
    x = np.concatenate(accepted)[:count]
    v = rng.normal(0.0, np.sqrt(params.u), size=(count, d))
    if n is None:
        return PhaseState(x[0], v[0])
    return PhaseState(x, v)


@dataclass
class AssumptionReport:
    """Worst observed margins; a margin <= 0 means no violation was found."""

    nonnegativity: float
    lipschitz: float
    simplified_drift: Optional[float]
    general_drift: float
    n_samples: int

    def margins(self):
        out = {"A0a": self.nonnegativity, "A1a": self.lipschitz, "A2": self.general_drift}
        if self.simplified_drift is not None:
            out["A2prime"] = self.simplified_drift
        return out

    def ok(self, tol=1e-9):
        return all(m <= tol for m in self.margins().values())


def _sample_points(rng, n, d, scale):
    pts = rng.uniform(-scale, scale, size=(n, d))
    dirs = rng.normal(size=(n, d))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    # radial shells sweep the whole range including the critical radius
    radii = rng.uniform(0, scale, size=n)
    return np.concatenate([pts, dirs * radii[:, None]])


def check_assumptions(pot, params, drift_consts, n_samples=10_000, rng=None):
    """Sample-based check of nonnegativity, Lipschitz gradient and drift conditions."""
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1", key="n_samples")
    rng = np.random.default_rng(0) if rng is None else rng
    d = params.d
    R = pot.drift_R if pot.drift_R is not None else 1.0
    x = _sample_points(rng, n_samples, d, 5 * R)
    U, G = potential_eval(pot, x)
    nonneg = float(np.max(-U))

    y = _sample_points(rng, n_samples, d, 5 * R)
    _, Gy = potential_eval(pot, y)
    lip = np.linalg.norm(G - Gy, axis=-1) - pot.lipschitz_L * np.linalg.norm(x - y, axis=-1)
    lip = float(np.max(lip))

    simplified = None
    if pot.drift_R is not None:
        dirs = rng.normal(size=(n_samples, d))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        radii = np.concatenate([np.full(n_samples // 4 + 1, R), rng.uniform(R, 5 * R, n_samples)])
        xs = np.concatenate([dirs[: n_samples // 4 + 1], np.resize(dirs, (n_samples, d))]) * radii[:, None]
        _, Gs = potential_eval(pot, xs)
        nxs = np.linalg.norm(xs, axis=-1)
        simplified = float(np.max(pot.drift_beta * (nxs / R) ** 2 - np.sum(xs * Gs, axis=-1)))

    lam, A = drift_consts.lam, drift_consts.A
    xg = np.sum(x * G, axis=-1)
    general = lam * (U + np.sum(x * x, axis=-1) * params.gamma**2 / (4 * params.u)) - A - xg / 2
    return AssumptionReport(nonneg, lip, simplified, float(np.max(general)), n_samples)
