"""Hot numeric kernels with a numba path and a pure numpy/scipy fallback.

The backend is chosen once at import time.  Set ``COCOMPACT_NO_NUMBA=1``
to force the numpy path (useful for debugging and for the benchmark).
Only 1D and 2D arrays have compiled kernels; higher dimensions always use
the numpy path.
"""
import os

import numpy as np
from scipy import signal

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("COCOMPACT_NO_NUMBA", "0") not in ("1", "true", "yes")


def backend():
    return "numba" if USE_NUMBA else "numpy"


def _speed_up(func):
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


# ---------------------------------------------------------------- numpy path

def _forward_diffs(a, h):
    """Forward differences on the zero-padded array.

    Nodes are the padded indices 0..n along every axis, so each returned
    array has shape ``a.shape + 1``.
    """
    # np.pad's generality costs more than the differences on small arrays
    pad = np.zeros(tuple(s + 2 for s in a.shape), dtype=np.result_type(a, float))
    pad[tuple(slice(1, s + 1) for s in a.shape)] = a
    nd = a.ndim
    node = tuple(slice(0, s + 1) for s in a.shape)
    diffs = []
    for d in range(nd):
        fwd = tuple(slice(1, s + 2) if ax == d else slice(0, s + 1)
                    for ax, s in enumerate(a.shape))
        diffs.append((pad[fwd] - pad[node]) / h)
    return diffs


def energy_np(a, h, p, mass):
    diffs = _forward_diffs(a, h)
    sq = diffs[0] * diffs[0]
    for dd in diffs[1:]:
        sq = sq + dd * dd
    if p == 2.0:
        total = sq.sum()
    else:
        total = np.power(sq, 0.5 * p).sum()
    if mass:
        total += np.power(np.abs(a), p).sum()
    return float(total * h ** a.ndim)


def energy_grad_np(a, h, p, mass):
    """Gradient of the energy with respect to the samples (not divided by h^N)."""
    nd = a.ndim
    diffs = _forward_diffs(a, h)
    sq = diffs[0] * diffs[0]
    for dd in diffs[1:]:
        sq = sq + dd * dd
    if p == 2.0:
        w = np.ones_like(sq)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(sq > 0.0, np.power(sq, 0.5 * p - 1.0), 0.0)
    gpad = np.zeros(tuple(s + 2 for s in a.shape))
    node = tuple(slice(0, s + 1) for s in a.shape)
    for d in range(nd):
        flux = w * diffs[d]
        fwd = tuple(slice(1, s + 2) if ax == d else slice(0, s + 1)
                    for ax, s in enumerate(a.shape))
        gpad[fwd] += flux
        gpad[node] -= flux
    inner = tuple(slice(1, s + 1) for s in a.shape)
    g = gpad[inner] * (p * h ** nd / h)
    if mass:
        g = g + p * np.power(np.abs(a), p - 1.0) * np.sign(a) * h ** nd
    return g


def power_sum_np(a, q):
    return float(np.power(np.abs(a), q).sum())


def correlate_np(a, b):
    """Full cross-correlation: out[k] = sum_n a[n] * b[n - k + len(b) - 1]."""
    return signal.correlate(a, b, mode="full", method="direct" if a.size * b.size < 4_000_000 else "fft")


# ---------------------------------------------------------------- numba path

@_speed_up
def _energy_1d(a, h, p, mass):
    n = a.shape[0]
    total = 0.0
    prev = 0.0
    for i in range(n + 1):
        cur = a[i] if i < n else 0.0
        d = (cur - prev) / h
        if p == 2.0:
            total += d * d
        else:
            total += abs(d) ** p
        prev = cur
    if mass:
        for i in range(n):
            if p == 2.0:
                total += a[i] * a[i]
            else:
                total += abs(a[i]) ** p
    return total * h


@_speed_up
def _energy_2d(a, h, p, mass):
    n0, n1 = a.shape
    total = 0.0
    for i in range(-1, n0):
        for j in range(-1, n1):
            c = a[i, j] if (i >= 0 and j >= 0) else 0.0
            r = a[i + 1, j] if (i + 1 < n0 and j >= 0) else 0.0
            u = a[i, j + 1] if (i >= 0 and j + 1 < n1) else 0.0
            d0 = (r - c) / h
            d1 = (u - c) / h
            sq = d0 * d0 + d1 * d1
            if p == 2.0:
                total += sq
            elif sq > 0.0:
                total += sq ** (0.5 * p)
    if mass:
        for i in range(n0):
            for j in range(n1):
                total += abs(a[i, j]) ** p
    return total * h * h


@_speed_up
def _energy_grad_1d(a, h, p, mass):
    n = a.shape[0]
    g = np.zeros(n)
    scale = p / h
    prev = 0.0
    for i in range(n + 1):
        cur = a[i] if i < n else 0.0
        d = (cur - prev) / h
        if p == 2.0:
            flux = d
        elif d != 0.0:
            flux = abs(d) ** (p - 2.0) * d
        else:
            flux = 0.0
        if i < n:
            g[i] += flux * scale
        if i >= 1:
            g[i - 1] -= flux * scale
        prev = cur
    for i in range(n):
        g[i] *= h
        if mass and a[i] != 0.0:
            g[i] += p * abs(a[i]) ** (p - 1.0) * np.sign(a[i]) * h
    return g


@_speed_up
def _energy_grad_2d(a, h, p, mass):
    n0, n1 = a.shape
    g = np.zeros((n0, n1))
    scale = p * h * h / h
    for i in range(-1, n0):
        for j in range(-1, n1):
            c = a[i, j] if (i >= 0 and j >= 0) else 0.0
            r = a[i + 1, j] if (i + 1 < n0 and j >= 0) else 0.0
            u = a[i, j + 1] if (i >= 0 and j + 1 < n1) else 0.0
            d0 = (r - c) / h
            d1 = (u - c) / h
            sq = d0 * d0 + d1 * d1
            if p == 2.0:
                w = 1.0
            elif sq > 0.0:
                w = sq ** (0.5 * p - 1.0)
            else:
                w = 0.0
            f0 = w * d0 * scale
            f1 = w * d1 * scale
            if i >= 0 and j >= 0:
                g[i, j] -= f0 + f1
            if i + 1 < n0 and j >= 0:
                g[i + 1, j] += f0
            if i >= 0 and j + 1 < n1:
                g[i, j + 1] += f1
    if mass:
        for i in range(n0):
            for j in range(n1):
                v = a[i, j]
                if v != 0.0:
                    g[i, j] += p * abs(v) ** (p - 1.0) * np.sign(v) * h * h
    return g


@_speed_up
def _power_sum(a, q):
    total = 0.0
    for v in a.ravel():
        if q == 2.0:
            total += v * v
        elif q == 4.0:
            s = v * v
            total += s * s
        else:
            total += abs(v) ** q
    return total


@_speed_up
def _correlate_1d(a, b):
    na = a.shape[0]
    nb = b.shape[0]
    out = np.zeros(na + nb - 1)
    for k in range(na + nb - 1):
        lag = k - (nb - 1)
        lo = max(0, lag)
        hi = min(na, nb + lag)
        s = 0.0
        for n in range(lo, hi):
            s += a[n] * b[n - lag]
        out[k] = s
    return out


@_speed_up
def _correlate_2d(a, b):
    na0, na1 = a.shape
    nb0, nb1 = b.shape
    out = np.zeros((na0 + nb0 - 1, na1 + nb1 - 1))
    for k0 in range(na0 + nb0 - 1):
        l0 = k0 - (nb0 - 1)
        lo0 = max(0, l0)
        hi0 = min(na0, nb0 + l0)
        for k1 in range(na1 + nb1 - 1):
            l1 = k1 - (nb1 - 1)
            lo1 = max(0, l1)
            hi1 = min(na1, nb1 + l1)
            s = 0.0
            for n0 in range(lo0, hi0):
                for n1 in range(lo1, hi1):
                    s += a[n0, n1] * b[n0 - l0, n1 - l1]
            out[k0, k1] = s
    return out


# ---------------------------------------------------------------- dispatch

def energy(a, h, p, mass):
    """Sum of |forward gradient|^p (plus |u|^p when ``mass``) times h^N."""
    if USE_NUMBA and a.ndim == 1:
        return float(_energy_1d(a, float(h), float(p), bool(mass)))
    if USE_NUMBA and a.ndim == 2:
        return float(_energy_2d(a, float(h), float(p), bool(mass)))
    return energy_np(a, h, p, mass)


def energy_grad(a, h, p, mass):
    if USE_NUMBA and a.ndim == 1:
        return _energy_grad_1d(a, float(h), float(p), bool(mass))
    if USE_NUMBA and a.ndim == 2:
        return _energy_grad_2d(a, float(h), float(p), bool(mass))
    return energy_grad_np(a, h, p, mass)


def power_sum(a, q):
    if USE_NUMBA:
        return float(_power_sum(np.ascontiguousarray(a), float(q)))
    return power_sum_np(a, q)


def correlate(a, b):
    if USE_NUMBA and a.ndim == 1:
        return _correlate_1d(np.ascontiguousarray(a), np.ascontiguousarray(b))
    if USE_NUMBA and a.ndim == 2 and a.size * b.size < 400_000_000:
        return _correlate_2d(np.ascontiguousarray(a), np.ascontiguousarray(b))
    return correlate_np(a, b)
