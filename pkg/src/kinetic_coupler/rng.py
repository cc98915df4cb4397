"""Counter-based Gaussian noise: Philox4x64-10 keyed by ``(seed, member)``.

A draw is a pure function of ``(seed, member, step, leg, block)``, so
ensembles can be split across workers in any way without changing results.
The block cipher matches ``numpy.random.Philox`` bit for bit.
"""
import math

import numpy as np

from ._accel import njit

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 2.0**-53

LEG_RC = 0
LEG_SC = 1


def _mulhilo(a, b):
    a_lo, a_hi = a & _MASK32, a >> _S32
    b_lo, b_hi = b & _MASK32, b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _MASK32) + (hl & _MASK32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


def philox4x64(counter, key):
    """Vectorised Philox4x64-10.

    ``counter`` has shape ``(..., 4)`` and ``key`` shape ``(..., 2)`` (uint64,
    broadcastable). Returns a ``(..., 4)`` uint64 array.
    """
    with np.errstate(over="ignore"):
        counter = np.asarray(counter, dtype=np.uint64)
        key = np.asarray(key, dtype=np.uint64)
        shape = np.broadcast_shapes(counter.shape[:-1], key.shape[:-1])
        c0, c1, c2, c3 = (np.broadcast_to(counter[..., i], shape).copy() for i in range(4))
        k0 = np.broadcast_to(key[..., 0], shape).copy()
        k1 = np.broadcast_to(key[..., 1], shape).copy()
        for rnd in range(10):
            if rnd:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        return np.stack([c0, c1, c2, c3], axis=-1)


def _to_normals(bits):
    """Box-Muller on pairs of 53-bit uniforms; 4 words give 4 normals."""
    u = (bits >> _S11).astype(np.float64) * _TWO_M53
    u1 = 1.0 - u[..., 0::2]  # in (0, 1]
    u2 = u[..., 1::2]
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    out = np.empty(bits.shape, dtype=np.float64)
    out[..., 0::2] = rad * np.cos(ang)
    out[..., 1::2] = rad * np.sin(ang)
    return out


def standard_normals(seed, members, step, leg, d):
    """Standard normal draws of shape ``(len(members), d)`` for one step and leg."""
    members = np.asarray(members, dtype=np.uint64)
    n_blocks = (d + 3) // 4
    counter = np.zeros((members.size, n_blocks, 4), dtype=np.uint64)
    counter[..., 0] = np.uint64(step)
    counter[..., 1] = np.uint64(leg)
    counter[..., 2] = np.arange(n_blocks, dtype=np.uint64)
    key = np.zeros((members.size, 1, 2), dtype=np.uint64)
    key[..., 0] = np.uint64(seed)
    key[..., 1] = members[:, None]
    z = _to_normals(philox4x64(counter, key))
    return z.reshape(members.size, 4 * n_blocks)[:, :d]


# numba twins ---------------------------------------------------------------


@njit(cache=True, inline="always")
def _mulhilo_nb(a, b):
    mask = np.uint64(0xFFFFFFFF)
    s32 = np.uint64(32)
    a_lo = a & mask
    a_hi = a >> s32
    b_lo = b & mask
    b_hi = b >> s32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> s32) + (lh & mask) + (hl & mask)
    hi = hh + (lh >> s32) + (hl >> s32) + (mid >> s32)
    return hi, a * b


@njit(cache=True)
def philox4x64_nb(c0, c1, c2, c3, k0, k1):
    m0 = np.uint64(0xD2E7470EE14C6C93)
    m1 = np.uint64(0xCA5A826395121157)
    w0 = np.uint64(0x9E3779B97F4A7C15)
    w1 = np.uint64(0xBB67AE8584CAA73B)
    for rnd in range(10):
        if rnd > 0:
            k0 = k0 + w0
            k1 = k1 + w1
        hi0, lo0 = _mulhilo_nb(m0, c0)
        hi1, lo1 = _mulhilo_nb(m1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit(cache=True)
def standard_normals_nb(seed, member, step, leg, out):
    """Fill ``out`` (length d) with the draws keyed by ``(seed, member, step, leg)``."""
    d = out.shape[0]
    s11 = np.uint64(11)
    n_blocks = (d + 3) // 4
    for b in range(n_blocks):
        w = philox4x64_nb(np.uint64(step), np.uint64(leg), np.uint64(b), np.uint64(0),
                          np.uint64(seed), np.uint64(member))
        for j in range(2):
            u1 = 1.0 - float(w[2 * j] >> s11) * 2.0**-53
            u2 = float(w[2 * j + 1] >> s11) * 2.0**-53
            rad = math.sqrt(-2.0 * math.log(u1))
            ang = 2.0 * math.pi * u2
            i = 4 * b + 2 * j
            if i < d:
                out[i] = rad * math.cos(ang)
            if i + 1 < d:
                out[i + 1] = rad * math.sin(ang)
