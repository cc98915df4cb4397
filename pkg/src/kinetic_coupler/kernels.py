"""Hot loops for the coupled Euler-Maruyama scheme.

Two interchangeable implementations: a numba kernel parallel over pairs,
and a numpy path vectorised over pairs and looping over steps. Both draw
identical counter-based noise, so they agree up to libm rounding.
"""
import math

import numpy as np

from ._accel import njit, prange
from .model import INTRO_DOUBLE_WELL, PIECEWISE_DOUBLE_WELL, QUADRATIC, TRIPLE_WELL, potential_eval
from .rng import LEG_RC, LEG_SC, standard_normals, standard_normals_nb

MODE_MIXED, MODE_REFLECTION, MODE_SYNCHRONOUS = 0, 1, 2
MODES = {"mixed": MODE_MIXED, "reflection": MODE_REFLECTION, "synchronous": MODE_SYNCHRONOUS}


def _clamp01(a):
    return np.clip(a, 0.0, 1.0)


def rc_sc_arrays(z, w, gamma, xi, R1, alpha, mode=MODE_MIXED):
    """Switching weights; ``rc`` is a clamp product meeting both boundary conditions."""
    q = z + w / gamma
    nq = np.linalg.norm(q, axis=-1)
    r = alpha * np.linalg.norm(z, axis=-1) + nq
    if mode == MODE_REFLECTION:
        rc = np.ones_like(nq)
    elif mode == MODE_SYNCHRONOUS:
        rc = np.zeros_like(nq)
    else:
        rc = _clamp01(nq / xi) * _clamp01((R1 + xi - r) / xi)
    sc = np.sqrt(np.maximum(0.0, 1.0 - rc * rc))
    return rc, sc


def step_arrays(x, v, x2, v2, grad, grad2, u, gamma, xi, R1, alpha, q_floor, mode, dt, dB_rc, dB_sc):
    """One explicit step for a batch of pairs; drift frozen at the pre-step state."""
    z = x - x2
    w = v - v2
    q = z + w / gamma
    nq = np.linalg.norm(q, axis=-1, keepdims=True)
    e = np.where(nq > q_floor, q / np.where(nq > q_floor, nq, 1.0), 0.0)
    rc, sc = rc_sc_arrays(z, w, gamma, xi, R1, alpha, mode)
    rc = rc[..., None]
    sc = sc[..., None]
    s = math.sqrt(2 * gamma * u)
    refl = dB_rc - 2 * e * np.sum(e * dB_rc, axis=-1, keepdims=True)
    x_new = x + v * dt
    v_new = v - gamma * v * dt - u * grad * dt + s * (rc * dB_rc + sc * dB_sc)
    x2_new = x2 + v2 * dt
    v2_new = v2 - gamma * v2 * dt - u * grad2 * dt + s * (rc * refl + sc * dB_sc)
    return x_new, v_new, x2_new, v2_new


def run_pairs_numpy(X, V, X2, V2, pot, u, gamma, xi, R1, alpha, q_floor, mode, dt,
                    n_steps, record_every, seed, members, step_offset=0):
    """Advance all pairs ``n_steps`` steps; returns ``(final, records, status)``.

    ``records`` has shape ``(n_rec, n, 4, d)``; ``status[i]`` is -1, or the
    step index at which pair ``i`` first became non-finite.
    """
    n, d = X.shape
    n_rec = n_steps // record_every + 1
    rec = np.empty((n_rec, n, 4, d))
    status = np.full(n, -1, dtype=np.int64)
    sq = math.sqrt(dt)
    X, V, X2, V2 = X.copy(), V.copy(), X2.copy(), V2.copy()
    rec[0] = np.stack([X, V, X2, V2], axis=1)
    for k in range(n_steps):
        step = step_offset + k
        dB_rc = sq * standard_normals(seed, members, step, LEG_RC, d)
        dB_sc = sq * standard_normals(seed, members, step, LEG_SC, d)
        g1 = potential_eval(pot, X)[1]
        g2 = potential_eval(pot, X2)[1]
        X, V, X2, V2 = step_arrays(X, V, X2, V2, g1, g2, u, gamma, xi, R1, alpha, q_floor,
                                   mode, dt, dB_rc, dB_sc)
        bad = ~(np.all(np.isfinite(X), axis=1) & np.all(np.isfinite(V), axis=1)
                & np.all(np.isfinite(X2), axis=1) & np.all(np.isfinite(V2), axis=1))
        if bad.any():
            status[bad & (status < 0)] = step
            return (X, V, X2, V2), rec, status
        if (k + 1) % record_every == 0:
            rec[(k + 1) // record_every] = np.stack([X, V, X2, V2], axis=1)
    return (X, V, X2, V2), rec, status


@njit(cache=True)
def _profile_deriv_nb(y, L, R):
    if y <= R / 8:
        return L * y
    if y >= 3 * R / 8:
        return L * (y - R / 2)
    return -L * (y - R / 4)


@njit(cache=True)
def grad_nb(kind, p0, p1, x, out):
    d = x.shape[0]
    if kind == QUADRATIC:
        for i in range(d):
            out[i] = p0 * x[i]
    elif kind == INTRO_DOUBLE_WELL:
        nx = 0.0
        for i in range(d):
            nx += x[i] * x[i]
        nx = math.sqrt(nx)
        if nx / p0 <= 0.5:
            coef = -1.0 / (p0 * p0)
        else:
            coef = (1.0 - p0 / nx) / (p0 * p0)
        for i in range(d):
            out[i] = coef * x[i]
    elif kind == PIECEWISE_DOUBLE_WELL:
        out[0] = _profile_deriv_nb(x[0], p0, p1)
        for i in range(1, d):
            out[i] = p0 * x[i]
    elif kind == TRIPLE_WELL:
        nx = 0.0
        for i in range(d):
            nx += x[i] * x[i]
        nx = math.sqrt(nx)
        coef = 0.0
        if nx > 0:
            coef = _profile_deriv_nb(nx, p0, p1) / nx
        for i in range(d):
            out[i] = coef * x[i]


@njit(cache=True, parallel=True)
def run_pairs_nb(X, V, X2, V2, kind, p0, p1, u, gamma, xi, R1, alpha, q_floor, mode, dt,
                 n_steps, record_every, seed, members, step_offset, rec, status):
    n, d = X.shape
    s = math.sqrt(2 * gamma * u)
    sq = math.sqrt(dt)
    for i in prange(n):
        x = X[i].copy()
        v = V[i].copy()
        x2 = X2[i].copy()
        v2 = V2[i].copy()
        g1 = np.empty(d)
        g2 = np.empty(d)
        nrc = np.empty(d)
        nsc = np.empty(d)
        e = np.empty(d)
        for j in range(d):
            rec[0, i, 0, j] = x[j]
            rec[0, i, 1, j] = v[j]
            rec[0, i, 2, j] = x2[j]
            rec[0, i, 3, j] = v2[j]
        for k in range(n_steps):
            step = step_offset + k
            nq2 = 0.0
            nz2 = 0.0
            for j in range(d):
                zj = x[j] - x2[j]
                qj = zj + (v[j] - v2[j]) / gamma
                e[j] = qj
                nq2 += qj * qj
                nz2 += zj * zj
            nq = math.sqrt(nq2)
            r = alpha * math.sqrt(nz2) + nq
            if mode == 1:
                rc = 1.0
            elif mode == 2:
                rc = 0.0
            else:
                rc = min(max(nq / xi, 0.0), 1.0) * min(max((R1 + xi - r) / xi, 0.0), 1.0)
            sc = math.sqrt(max(0.0, 1.0 - rc * rc))
            if nq > q_floor:
                for j in range(d):
                    e[j] /= nq
            else:
                for j in range(d):
                    e[j] = 0.0
            standard_normals_nb(seed, members[i], step, 0, nrc)
            standard_normals_nb(seed, members[i], step, 1, nsc)
            edb = 0.0
            for j in range(d):
                nrc[j] *= sq
                nsc[j] *= sq
                edb += e[j] * nrc[j]
            grad_nb(kind, p0, p1, x, g1)
            grad_nb(kind, p0, p1, x2, g2)
            finite = True
            for j in range(d):
                xn = x[j] + v[j] * dt
                vn = v[j] - gamma * v[j] * dt - u * g1[j] * dt + s * (rc * nrc[j] + sc * nsc[j])
                x2n = x2[j] + v2[j] * dt
                refl = nrc[j] - 2.0 * e[j] * edb
                v2n = v2[j] - gamma * v2[j] * dt - u * g2[j] * dt + s * (rc * refl + sc * nsc[j])
                x[j] = xn
                v[j] = vn
                x2[j] = x2n
                v2[j] = v2n
                if not (math.isfinite(xn) and math.isfinite(vn) and math.isfinite(x2n) and math.isfinite(v2n)):
                    finite = False
            if not finite:
                status[i] = step
                break
            if (k + 1) % record_every == 0:
                m = (k + 1) // record_every
                for j in range(d):
                    rec[m, i, 0, j] = x[j]
                    rec[m, i, 1, j] = v[j]
                    rec[m, i, 2, j] = x2[j]
                    rec[m, i, 3, j] = v2[j]
        for j in range(d):
            X[i, j] = x[j]
            V[i, j] = v[j]
            X2[i, j] = x2[j]
            V2[i, j] = v2[j]


def run_pairs_numba(X, V, X2, V2, pot, u, gamma, xi, R1, alpha, q_floor, mode, dt,
                    n_steps, record_every, seed, members, step_offset=0):
    X, V, X2, V2 = (np.ascontiguousarray(a, dtype=np.float64).copy() for a in (X, V, X2, V2))
    n, d = X.shape
    n_rec = n_steps // record_every + 1
    rec = np.empty((n_rec, n, 4, d))
    status = np.full(n, -1, dtype=np.int64)
    p0, p1 = (float(p) for p in pot.kernel_params[:2])
    run_pairs_nb(X, V, X2, V2, pot.kind, p0, p1, float(u), float(gamma), float(xi), float(R1),
                 float(alpha), float(q_floor), int(mode), float(dt), int(n_steps), int(record_every),
                 np.uint64(seed), np.asarray(members, dtype=np.uint64), int(step_offset), rec, status)
    return (X, V, X2, V2), rec, status
