"""Coupling geometry, contraction rates and the concave metric ``f``.

The metric is ``rho = f(r) (1 + eps H(x,v) + eps H(x',v'))`` with
``r = alpha |x - x'| + |x - x' + (v - v')/gamma|``. ``f`` is tabulated on a
uniform grid over ``[0, R1]`` by composite Simpson quadrature.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicHermiteSpline

from .errors import DimensionError, InadmissibleRateError, NumericError, OutOfRegimeError


@dataclass(frozen=True)
class CouplingGeometry:
    alpha: float
    eta: float
    R1: float
    Lambda: float
    R0: float


@dataclass(frozen=True)
class RateConstants:
    c: float
    epsilon: float
    C_wass2: float
    ell: Optional[float] = None
    Lambda1: Optional[float] = None


def base_radius(consts, params):
    """``R0 = sqrt(u)/gamma * sqrt(96 (d+A) / (5 lam (1 - 2 lam)))``."""
    lam = consts.lam
    return math.sqrt(params.u) / params.gamma * math.sqrt(
        96 * (params.d + consts.A) / (5 * lam * (1 - 2 * lam))
    )


def _radius(alpha, R0):
    return math.sqrt((1 + alpha) ** 2 + alpha**2) * R0


def fixed_point_residual(alpha, consts, params):
    R1 = _radius(alpha, base_radius(consts, params))
    return alpha - (consts.L + 8 / R1**2) * params.damping_ratio


def solve_geometry(consts, params, max_iter=200):
    """Solve ``alpha = (L + 8 R1(alpha)^-2) u / gamma^2`` by damped iteration."""
    k = params.damping_ratio
    R0 = base_radius(consts, params)
    alpha = consts.L * k
    for _ in range(max_iter):
        target = (consts.L + 8 / _radius(alpha, R0) ** 2) * k
        if abs(target - alpha) <= 1e-15 * max(1.0, alpha):
            alpha = target
            break
        alpha = 0.5 * alpha + 0.5 * target
    residual = abs(alpha - (consts.L + 8 / _radius(alpha, R0) ** 2) * k)
    if residual > 1e-12 * max(1.0, alpha):
        raise NumericError(f"fixed point did not converge (residual {residual:.3e})")
    R1 = _radius(alpha, R0)
    Lam = consts.L * R1**2 / 8
    eta = 1 / Lam
    return CouplingGeometry(alpha=(1 + eta) * consts.L * k, eta=eta, R1=R1, Lambda=Lam, R0=R0)


def rate_terms(geometry, consts, params):
    """The three candidates whose minimum (times gamma/384) is the closed-form rate."""
    k = consts.L * params.damping_ratio
    Lam = geometry.Lambda
    return (
        consts.lam * k,
        math.sqrt(Lam) * math.exp(-Lam) * k,
        math.exp(-Lam) / math.sqrt(Lam),
    )


def closed_form_rate(geometry, consts, params):
    """``gamma/384 * min(lam Lu/g^2, Lam^(1/2) e^-Lam Lu/g^2, Lam^(-1/2) e^-Lam)``.

    The third term uses ``Lambda^(-1/2)``, the smaller of the two variants
    ``Lambda^(+-1/2) e^-Lam`` since ``Lambda >= 6/5``.
    """
    return params.gamma / 384 * min(rate_terms(geometry, consts, params))


def epsilon_for_rate(c, consts, params):
    return 4 * c / (params.gamma * (params.d + consts.A))


def wasserstein2_constant(geometry, rates, consts, params):
    a, R1 = geometry.alpha, geometry.R1
    g = params.gamma
    lead = 2 * math.exp(2 + geometry.Lambda) * (1 + g) ** 2 / min(1.0, a) ** 2
    tail = 4 * (1 + 2 * a + 2 * a**2) * (params.d + consts.A) * params.u / (g * rates.c) / min(1.0, R1)
    return lead * max(1.0, tail)


def make_rate_constants(geometry, consts, params, c, ell=None, Lambda1=None):
    eps = epsilon_for_rate(c, consts, params)
    rates = RateConstants(c=c, epsilon=eps, C_wass2=math.inf, ell=ell, Lambda1=Lambda1)
    if c <= 0:
        return rates
    C = wasserstein2_constant(geometry, rates, consts, params)
    return RateConstants(c=c, epsilon=eps, C_wass2=C, ell=ell, Lambda1=Lambda1)


def phi_exponent(geometry, consts, params, c):
    """``kappa`` with ``phi(s) = exp(-kappa s^2 / 2)``."""
    eps = epsilon_for_rate(c, consts, params)
    m = max(1.0, 1 / (2 * geometry.alpha))
    return (1 + geometry.eta) * consts.L / 4 + params.gamma**2 / params.u * eps * m


def _integrate(grid, kappa, c, params):
    phi = np.exp(-0.5 * kappa * grid**2)
    Phi = cumulative_simpson(phi, x=grid, initial=0.0)
    ratio_int = cumulative_simpson(Phi / phi, x=grid, initial=0.0)
    g = 1 - 2.25 * c * params.gamma / params.u * ratio_int
    f = cumulative_simpson(phi * g, x=grid, initial=0.0)
    return phi, Phi, ratio_int, g, f


@dataclass(frozen=True)
class MetricTable:
    grid: np.ndarray
    phi: np.ndarray
    Phi: np.ndarray
    g: np.ndarray
    f: np.ndarray
    f_prime: np.ndarray
    f_second: np.ndarray
    quad_error: float
    c: float
    kappa: float
    g_slope: float  # g'(s) = -g_slope * Phi(s) / phi(s)
    alpha: float
    _splines: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def R1(self):
        return float(self.grid[-1])

    @property
    def f_R1(self):
        return float(self.f[-1])

    def f_at(self, r):
        """``f(r)`` by linear interpolation; constant beyond ``R1``."""
        return np.interp(r, self.grid, self.f)

    def f_prime_at(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r >= self.R1, 0.0, np.interp(r, self.grid, self.f_prime))

    def _spline(self, name):
        if name not in self._splines:
            if name == "Phi":
                sp = CubicHermiteSpline(self.grid, self.Phi, self.phi)
            elif name == "g":
                sp = CubicHermiteSpline(self.grid, self.g, -self.g_slope * self.Phi / self.phi)
            else:
                sp = CubicHermiteSpline(self.grid, self.f, self.f_prime)
            self._splines[name] = sp
        return self._splines[name]

    def jet(self, r):
        """``(f, f'_-, f'')`` at ``r`` for the drift evaluator.

        ``phi`` and ``phi'`` are analytic; ``Phi``, ``g`` and ``f`` come from
        cubic Hermite interpolation of the table using their known
        derivatives. Beyond ``R1`` the derivatives vanish; ``f'(0)`` is 1.
        """
        r = np.asarray(r, dtype=float)
        inside = r < self.R1
        rc = np.clip(r, 0.0, self.R1)
        phi = np.exp(-0.5 * self.kappa * rc**2)
        Phi = self._spline("Phi")(rc)
        g = self._spline("g")(rc)
        f = np.where(inside, self._spline("f")(rc), self.f_R1)
        fp = np.where(inside, phi * g, 0.0)
        fpp = np.where(inside, -self.kappa * rc * phi * g - self.g_slope * Phi, 0.0)
        return f, fp, fpp


def build_metric_table(geometry, c, consts, params, n_grid=4096, strict=True):
    """Tabulate ``phi, Phi, g, f, f', f''`` on ``n_grid + 1`` uniform nodes."""
    if n_grid < 256 or n_grid % 4:
        raise ValueError("n_grid must be >= 256 and divisible by 4")
    kappa = phi_exponent(geometry, consts, params, c)
    grid = np.linspace(0.0, geometry.R1, n_grid + 1)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        phi, Phi, _, g, f = _integrate(grid, kappa, c, params)
        _, _, _, g_half, f_half = _integrate(grid[::2], kappa, c, params)
        err = max(np.max(np.abs(f[::2] - f_half)), np.max(np.abs(g[::2] - g_half)))
        err += 64 * np.finfo(float).eps * n_grid * max(1.0, f[-1])
    if strict and not np.all(g >= 0.5):
        raise InadmissibleRateError(f"g drops to {np.nanmin(g):.6f} < 1/2; rate c={c} is too large")
    if not np.all(np.isfinite(f)):
        raise NumericError("metric quadrature produced non-finite values")
    g_slope = 2.25 * c * params.gamma / params.u
    f_prime = phi * g
    f_second = -kappa * grid * phi * g - g_slope * Phi
    return MetricTable(
        grid, phi, Phi, g, f, f_prime, f_second, float(err), c, kappa, g_slope, geometry.alpha
    )


METRIC_HEADER = ["s", "phi", "Phi", "g", "f", "f_prime", "f_second"]


def table_rows(table):
    return zip(*(np.asarray(a).tolist() for a in (
        table.grid, table.phi, table.Phi, table.g, table.f, table.f_prime, table.f_second)))


@dataclass
class MetricBoundsReport:
    """Margins of the structural bounds on ``f``; a check passes when its margin is ``>= -tol``."""

    margins: dict
    tol: float

    @property
    def ok(self):
        return all(m >= -self.tol for m in self.margins.values())

    def failing(self):
        return [k for k, m in self.margins.items() if m < -self.tol]


def metric_bounds_report(table, consts, n_random=1000, rng=None, tol=1e-8):
    """Check ``f'`` against ``[e^-2/2, 1] exp(-L s^2/8)``, ``g >= 1/2``, monotonicity,
    concavity and ``min(r,R1) f'(R1) <= f(r) <= min(r, f(R1))`` on random ``r``."""
    rng = np.random.default_rng(0) if rng is None else rng
    s, fp = table.grid[:-1], table.f_prime[:-1]
    env = np.exp(-consts.L * s**2 / 8)
    R1 = table.R1
    r = rng.uniform(0.0, 1.5 * R1, n_random)
    f_r = table.jet(r)[0]
    fp_R1 = float(table.f_prime[-1])
    margins = {
        "fprime_upper": float(np.min(env - fp)),
        "fprime_lower": float(np.min(fp - 0.5 * math.exp(-2) * env)),
        "g_half": float(np.min(table.g) - 0.5),
        "nondecreasing": float(np.min(np.diff(table.f))),
        "concave": float(-np.max(table.f_second[1:])),
        "sandwich_lower": float(np.min(f_r - np.minimum(r, R1) * fp_R1)),
        "sandwich_upper": float(np.min(np.minimum(r, table.f_R1) - f_r)),
        "quadrature": -float(table.quad_error),
    }
    return MetricBoundsReport(margins, tol)


@dataclass
class AdmissibilityReport:
    c: float
    bounds: dict
    margins: dict

    @property
    def admissible(self):
        return all(m >= 0 for m in self.margins.values())

    def failing(self):
        return [k for k, m in self.margins.items() if m < 0]


def admissibility_bounds(c, geometry, consts, params, n_grid=4096):
    """Upper bounds on the rate; all but the last two depend on ``c`` through ``phi``."""
    kappa = phi_exponent(geometry, consts, params, c)
    grid = np.linspace(0.0, geometry.R1, n_grid + 1)
    phi, Phi, ratio_int, _, _ = _integrate(grid, kappa, c, params)
    g_, u = params.gamma, params.u
    ratio = grid[1:] * phi[1:] / Phi[1:]
    inf_ratio = min(1.0, float(np.min(ratio)))
    a, lam = geometry.alpha, consts.lam
    eta = geometry.eta
    return {
        "g_half": g_ * (2 / 9) * u / g_**2 / ratio_int[-1],
        "transition": g_ / 18 * eta / (1 + eta) * inf_ratio,
        "lyapunov": g_ * lam / 16,
        "phi_floor": 5 / 192 * min(1.0, 2 * a) / ((1 + a) ** 2 + a**2) * g_ * lam * (1 - 2 * lam),
    }


def check_rate_admissible(c, geometry, consts, params, n_grid=4096):
    if c < 0:
        raise ValueError("c must be nonnegative")
    bounds = admissibility_bounds(c, geometry, consts, params, n_grid)
    return AdmissibilityReport(c, bounds, {k: b - c for k, b in bounds.items()})


def optimize_rate(geometry, consts, params, rel_tol=1e-6, n_grid=4096):
    """Largest admissible ``c`` by bisection, starting from the closed-form rate."""
    lo = closed_form_rate(geometry, consts, params)
    if not check_rate_admissible(lo, geometry, consts, params, n_grid).admissible:
        lo = 0.0
    fixed = admissibility_bounds(0.0, geometry, consts, params, n_grid)
    hi = min(fixed["lyapunov"], fixed["phi_floor"])
    if check_rate_admissible(hi, geometry, consts, params, n_grid).admissible:
        return hi
    while hi - lo > rel_tol * max(lo, 1e-300):
        mid = 0.5 * (lo + hi)
        if check_rate_admissible(mid, geometry, consts, params, n_grid).admissible:
            lo = mid
        else:
            hi = mid
    return lo


def admissibility_scan(geometry, consts, params, c_max, n=33, n_grid=1024):
    """Coarse linear scan of admissibility on ``[0, c_max]``.

    Returns ``(cs, flags, monotone)`` where ``monotone`` says the admissible
    set looks like an interval starting at 0.
    """
    cs = np.linspace(0.0, c_max, n)
    flags = np.array([check_rate_admissible(c, geometry, consts, params, n_grid).admissible for c in cs])
    monotone = bool(np.all(np.diff(flags.astype(int)) <= 0))
    return cs, flags, monotone


def r_distance(alpha, params, p, q):
    """``alpha |x - x'| + |x - x' + (v - v')/gamma|``."""
    z = p.x - q.x
    if z.shape[-1] != params.d or q.x.shape[-1] != params.d:
        raise DimensionError("state dimension does not match the model")
    qd = z + (p.v - q.v) / params.gamma
    return alpha * np.linalg.norm(z, axis=-1) + np.linalg.norm(qd, axis=-1)


def rho_semimetric(table, rates, consts, pot, params, p, q):
    """``f(r) (1 + eps H(p) + eps H(q))`` with ``f`` read from the table."""
    from .drift import lyapunov_H

    r = r_distance(table.alpha, params, p, q)
    G = 1 + rates.epsilon * (lyapunov_H(pot, consts, params, p) + lyapunov_H(pot, consts, params, q))
    return table.f_at(r) * G


@dataclass(frozen=True)
class CorollaryBound:
    rate: float
    rate_radius_form: float
    Lambda1: float


def corollary_rate(L, R, beta, ell, params):
    """Lower bound on the rate under the simplified drift condition in the damped regime.

    ``rate`` is the ``gamma/205`` form and ``rate_radius_form`` the
    ``sqrt(beta u)/38 / R`` form.
    """
    if ell < 1:
        raise OutOfRegimeError(f"ell must be >= 1, got {ell}", key="ell")
    LR2 = L * R**2
    if beta * (1 + 1e-12) < LR2 / ell:
        raise OutOfRegimeError(f"beta={beta} < L R^2 / ell={LR2 / ell}", key="beta")
    if beta > LR2 * (1 + 1e-12):
        raise OutOfRegimeError(f"beta={beta} > L R^2={LR2}", key="beta")
    k = L * params.damping_ratio
    if k > (1 + 1e-12) / 30:
        raise OutOfRegimeError(f"L u / gamma^2 = {k} exceeds 1/30", key="gamma")
    d = params.d
    Lambda1 = (ell - 1) * LR2 / 4 + 2 * ell * d
    inner = min(k**2 / ell, 0.5 * min(math.sqrt(d) * k, Lambda1**-0.5) * math.exp(-Lambda1))
    return CorollaryBound(
        rate=params.gamma / 205 * inner,
        rate_radius_form=math.sqrt(beta * params.u) / 38 * inner / R,
        Lambda1=Lambda1,
    )


def gaussian_spectral_gap(L, params):
    """Spectral gap ``(1 - sqrt((1 - 4Lu/g^2)^+)) gamma / 2`` of the Gaussian model."""
    k = L * params.damping_ratio
    return (1 - math.sqrt(max(0.0, 1 - 4 * k))) * params.gamma / 2
