"""Ensemble Monte Carlo over coupled pairs: decay of the mean semimetric,
rate fits, contraction audits and the kinetic scaling scan.

The ensemble mean of ``rho`` over the constructed coupling is an upper-bound
estimate of the Kantorovich semimetric between the two time-t laws; it is
never the distance itself.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .bundle import build_bundle
from .coupling import CouplingControls, run_pairs, warn_if_unresolved
from .csvio import columns_to_rows, write_csv
from .drift import lyapunov_H, simplified_to_general
from .errors import ConfigurationError, FitDomainError, KineticCouplerError
from .metric import closed_form_rate, corollary_rate, solve_geometry
from .model import INTRO_DOUBLE_WELL, ModelParams, PhaseState, PotentialSpec, make_potential, sample_stationary

logger = logging.getLogger(__name__)

DECAY_HEADER = ["t", "mean_rho", "stderr_rho", "mean_r", "mean_G", "mean_H_sum"]
SCAN_HEADER = ["a", "gamma", "c_closed", "c_corollary", "c_times_a", "empirical_rate"]
INIT_KINDS = ("point_vs_stationary", "two_points", "offset")
UPPER_BOUND_NOTE = "mean_rho is an upper-bound estimate of the Kantorovich semimetric along the coupling"


@dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble settings. ``point``/``point2`` and ``delta`` are concatenated ``(x, v)`` vectors."""

    n_pairs: int = 2000
    dt: float = 1e-3
    T: float = 20.0
    xi: Optional[float] = None
    seed: int = 0
    init: str = "point_vs_stationary"
    record_every: int = 100
    step_budget: float = 1e9
    mode: str = "mixed"
    point: Optional[Sequence[float]] = None
    point2: Optional[Sequence[float]] = None
    delta: Optional[Sequence[float]] = None
    chunk: int = 1 << 16
    backend: Optional[str] = None

    def __post_init__(self):
        if int(self.n_pairs) < 2:
            raise ConfigurationError("n_pairs must be at least 2", key="n_pairs")
        for key in ("dt", "T"):
            val = getattr(self, key)
            if not (math.isfinite(val) and val > 0):
                raise ConfigurationError(f"{key} must be a positive finite real", key=key)
        if self.xi is not None and not self.xi > 0:
            raise ConfigurationError("xi must be positive", key="xi")
        if int(self.record_every) < 1:
            raise ConfigurationError("record_every must be >= 1", key="record_every")
        if self.init not in INIT_KINDS:
            raise ConfigurationError(f"init must be one of {INIT_KINDS}", key="init")
        if self.n_pairs * self.n_steps > self.step_budget:
            raise ConfigurationError(
                f"n_pairs * T/dt = {self.n_pairs * self.n_steps:.3g} exceeds the step budget {self.step_budget:.3g}",
                key="step_budget",
            )

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))


@dataclass
class DecaySeries:
    times: np.ndarray
    mean_rho: np.ndarray
    stderr_rho: np.ndarray
    mean_r: np.ndarray
    mean_G: np.ndarray
    mean_H_sum: np.ndarray
    notes: list = field(default_factory=lambda: [UPPER_BOUND_NOTE])

    def rows(self):
        return columns_to_rows(self.times, self.mean_rho, self.stderr_rho, self.mean_r, self.mean_G, self.mean_H_sum)

    def to_csv(self, path):
        return write_csv(path, DECAY_HEADER, self.rows())


def _split_phase(vec, d, key):
    arr = np.asarray(vec, dtype=float).ravel()
    if arr.size != 2 * d:
        raise ConfigurationError(f"{key} must have length 2d = {2 * d}", key=key)
    return arr[:d], arr[d:]


def default_far_point(bundle):
    """A start whose decay is dominated by the slowest mode: ``x = 3/sqrt(L)``, ``v = 0``."""
    d = bundle.params.d
    x = np.zeros(d)
    x[0] = 3.0 / math.sqrt(bundle.consts.L)
    return np.concatenate([x, np.zeros(d)])


def initial_pairs(cfg, bundle):
    """Initial coupling of the two copies; stationary draws use a stream derived from the seed."""
    d, n = bundle.params.d, int(cfg.n_pairs)
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    if cfg.init == "point_vs_stationary":
        # product coupling: point mass times the invariant measure
        x, v = _split_phase(cfg.point if cfg.point is not None else default_far_point(bundle), d, "point")
        st = sample_stationary(bundle.pot, bundle.params, rng, n)
        return np.tile(x, (n, 1)), np.tile(v, (n, 1)), st.x, st.v
    if cfg.init == "two_points":
        if cfg.point is None or cfg.point2 is None:
            raise ConfigurationError("two_points needs point and point2", key="point2")
        x, v = _split_phase(cfg.point, d, "point")
        x2, v2 = _split_phase(cfg.point2, d, "point2")
        return np.tile(x, (n, 1)), np.tile(v, (n, 1)), np.tile(x2, (n, 1)), np.tile(v2, (n, 1))
    if cfg.delta is None:
        raise ConfigurationError("offset init needs delta", key="delta")
    dx, dv = _split_phase(cfg.delta, d, "delta")
    st = sample_stationary(bundle.pot, bundle.params, rng, n)
    return st.x, st.v, st.x + dx, st.v + dv


def pair_statistics(bundle, X, V, X2, V2):
    """Per-pair ``(rho, r, G, H_sum)`` for arrays of shape ``(..., d)``."""
    b = bundle
    g = b.params.gamma
    Z = X - X2
    Q = Z + (V - V2) / g
    r = b.geometry.alpha * np.linalg.norm(Z, axis=-1) + np.linalg.norm(Q, axis=-1)
    H_sum = lyapunov_H(b.pot, b.consts, b.params, PhaseState(X, V)) + lyapunov_H(
        b.pot, b.consts, b.params, PhaseState(X2, V2)
    )
    G = 1 + b.rates.epsilon * H_sum
    return b.table.f_at(r) * G, r, G, H_sum


def run_ensemble(cfg, bundle):
    """Simulate ``cfg.n_pairs`` coupled pairs and reduce to ensemble means by record time."""
    controls = CouplingControls.from_geometry(bundle.geometry, xi=cfg.xi, mode=cfg.mode)
    warn_if_unresolved(controls, bundle.params, cfg.dt)
    X, V, X2, V2 = initial_pairs(cfg, bundle)
    n = X.shape[0]
    n_steps = cfg.n_steps
    parts = []
    x_max = 0.0
    for lo in range(0, n, int(cfg.chunk)):
        hi = min(n, lo + int(cfg.chunk))
        members = np.arange(lo, hi)
        _, rec = run_pairs(X[lo:hi], V[lo:hi], X2[lo:hi], V2[lo:hi], bundle.pot, bundle.params, controls,
                           cfg.dt, n_steps, int(cfg.record_every), cfg.seed, members=members, backend=cfg.backend)
        parts.append(pair_statistics(bundle, rec[:, :, 0], rec[:, :, 1], rec[:, :, 2], rec[:, :, 3]))
        x_max = max(x_max, float(np.abs(rec[:, :, [0, 2]]).max()))
    # concatenate in member order so the reduction does not depend on chunking
    rho, r, G, H_sum = (np.concatenate([p[i] for p in parts], axis=1) for i in range(4))
    R = bundle.pot.drift_R if bundle.pot.drift_R is not None else 1.0
    if x_max > 1e3 * R:
        msg = f"a pair reached |x| = {x_max:.3g} > 1e3 R"
        logger.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    times = cfg.dt * cfg.record_every * np.arange(rho.shape[0])
    return DecaySeries(
        times=times,
        mean_rho=rho.mean(axis=1),
        stderr_rho=rho.std(axis=1, ddof=1) / math.sqrt(n),
        mean_r=r.mean(axis=1),
        mean_G=G.mean(axis=1),
        mean_H_sum=H_sum.mean(axis=1),
    )


def fit_decay_rate(series, window):
    """Negated least-squares slope of ``log mean_rho`` against ``t`` on ``window``; returns ``(rate, r^2)``."""
    t_lo, t_hi = window
    sel = (series.times >= t_lo) & (series.times <= t_hi)
    if sel.sum() < 5:
        raise FitDomainError(f"need at least 5 records in [{t_lo}, {t_hi}], found {int(sel.sum())}")
    t = series.times[sel]
    y = series.mean_rho[sel]
    if np.any(~(y > 0)):
        raise FitDomainError("mean_rho must be positive on the fit window")
    logy = np.log(y)
    slope, intercept = np.polyfit(t, logy, 1)
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    ss_res = float(np.sum((logy - (slope * t + intercept)) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, logy.size) else 1.0 - ss_res / ss_tot
    return float(-slope), r2


@dataclass
class AuditReport:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    margins: np.ndarray
    kappa: float
    notes: list = field(default_factory=lambda: [UPPER_BOUND_NOTE, "initial coupling: independent product"])

    @property
    def passed(self):
        return bool(np.all(self.margins >= 0))

    @property
    def worst_margin(self):
        return float(self.margins.min())

    @property
    def failures(self):
        return self.times[self.margins < 0]

    def summary(self):
        status = "PASS" if self.passed else f"FAIL at {len(self.failures)} record times"
        lines = [f"contraction audit: {status}", f"worst margin: {self.worst_margin:.6g}", f"dt slack kappa: {self.kappa:g}"]
        return "\n".join(lines + [f"note: {n}" for n in self.notes])


def contraction_audit(series, rates, geometry, cfg, xi=None, gamma=None, kappa=1.0, n_sigma=3.0):
    """Check ``E rho_t <= e^{-ct} E rho_0 + gamma (1+alpha) xi int_0^t e^{c(s-t)} E G_s ds`` at every record.

    Slack: ``n_sigma`` standard errors plus ``kappa * dt * mean_rho``.
    """
    if gamma is None:
        raise ConfigurationError("contraction_audit needs gamma", key="gamma")
    xi = (cfg.xi if cfg.xi is not None else 1e-3 * geometry.R1) if xi is None else xi
    c = rates.c
    t = series.times
    # trapezoid on e^{c(s-T)} E G_s, rescaled by e^{c(T-t)} to avoid overflow
    w = np.exp(c * (t - t[-1])) * series.mean_G
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(t))])
    integral = cum * np.exp(c * (t[-1] - t))
    bound = np.exp(-c * t) * series.mean_rho[0] + gamma * (1 + geometry.alpha) * xi * integral
    slack = n_sigma * series.stderr_rho + kappa * cfg.dt * series.mean_rho
    lhs = series.mean_rho
    rhs = bound + slack
    return AuditReport(t, lhs, rhs, rhs - lhs, kappa)


def calibrate_dt_slack(cfg, bundle):
    """``kappa`` from a two-resolution run: max ``|rho_dt - rho_2dt| / (dt rho_dt)`` over shared records."""
    fine = run_ensemble(cfg, bundle)
    coarse_cfg = replace(cfg, dt=2 * cfg.dt, record_every=max(1, cfg.record_every // 2))
    coarse = run_ensemble(coarse_cfg, bundle)
    m = min(len(fine.times), len(coarse.times))
    if not np.allclose(fine.times[:m], coarse.times[:m]):
        raise ConfigurationError("record_every must be even for the two-resolution calibration", key="record_every")
    diff = np.abs(fine.mean_rho[:m] - coarse.mean_rho[:m])
    return float(np.max(diff / (cfg.dt * np.maximum(fine.mean_rho[:m], 1e-300)))), fine, coarse


@dataclass
class ScanTable:
    rows_: list
    notes: list = field(default_factory=list)

    @property
    def a(self):
        return np.array([r[0] for r in self.rows_])

    def column(self, name):
        i = SCAN_HEADER.index(name)
        return np.array([r[i] for r in self.rows_], dtype=float)

    def rows(self):
        return list(self.rows_)

    def to_csv(self, path):
        return write_csv(path, SCAN_HEADER, self.rows_)


def scaling_scan(base, a_values, empirical=None):
    """Rates for the intro double well across ``a`` with ``gamma * a`` held fixed.

    ``empirical``, when given, is an EnsembleConfig; each row then carries the
    decay rate fitted on ``[T/2, T]``.
    """
    if base.pot.kind != INTRO_DOUBLE_WELL:
        raise ConfigurationError("scaling_scan needs an intro_double_well base", key="kind")
    a0 = float(base.pot.kernel_params[0])
    gamma_a = base.params.gamma * a0
    rows, notes = [], []
    for a in a_values:
        a = float(a)
        gamma = gamma_a / a
        empirical_rate = float("nan")
        try:
            pot = make_potential(PotentialSpec("intro_double_well", a=a))
            params = ModelParams(base.params.d, base.params.u, gamma)
            consts = simplified_to_general(pot.lipschitz_L, pot.drift_R, pot.drift_beta, params)
            geometry = solve_geometry(consts, params)
            c = closed_form_rate(geometry, consts, params)
            ell = max(1.0, pot.lipschitz_L * pot.drift_R**2 / pot.drift_beta)
            try:
                c_cor = corollary_rate(pot.lipschitz_L, pot.drift_R, pot.drift_beta, ell, params).rate_radius_form
            except KineticCouplerError as exc:
                c_cor = float("nan")
                notes.append(f"a={a}: corollary out of regime ({exc})")
            if empirical is not None:
                b = build_bundle(pot, params, consts)
                series = run_ensemble(empirical, b)
                empirical_rate = fit_decay_rate(series, (empirical.T / 2, empirical.T))[0]
        except KineticCouplerError as exc:
            notes.append(f"a={a}: {exc}")
            rows.append([a, gamma, float("nan"), float("nan"), float("nan"), empirical_rate])
            continue
        rows.append([a, gamma, c, c_cor, c * a, empirical_rate])
    return ScanTable(rows, notes)
