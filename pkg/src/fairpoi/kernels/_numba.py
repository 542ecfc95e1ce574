"""numba-compiled geodesic kernels; same signatures as the numpy module."""

import math

import numpy as np
from numba import njit

EARTH_RADIUS_KM = 6371.0088
_DEG = math.pi / 180.0


@njit(cache=True, inline="always")
def _hav(p1, l1, c1, p2, l2, c2):
    s1 = math.sin((p2 - p1) * 0.5)
    s2 = math.sin((l2 - l1) * 0.5)
    h = s1 * s1 + c1 * c2 * s2 * s2
    if h > 1.0:
        h = 1.0
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


@njit(cache=True, nogil=True)
def _prep(lat, lon):
    n = lat.shape[0]
    p = np.empty(n)
    lam = np.empty(n)
    c = np.empty(n)
    for i in range(n):
        p[i] = lat[i] * _DEG
        lam[i] = lon[i] * _DEG
        c[i] = math.cos(p[i])
    return p, lam, c


@njit(cache=True, nogil=True)
def distance_matrix(alat, alon, blat, blon):
    ap, al, ac = _prep(alat, alon)
    bp, bl, bc = _prep(blat, blon)
    out = np.empty((ap.shape[0], bp.shape[0]))
    for i in range(ap.shape[0]):
        for j in range(bp.shape[0]):
            out[i, j] = _hav(ap[i], al[i], ac[i], bp[j], bl[j], bc[j])
    return out


@njit(cache=True, nogil=True)
def min_distance(alat, alon, blat, blon):
    ap, al, ac = _prep(alat, alon)
    bp, bl, bc = _prep(blat, blon)
    out = np.full(ap.shape[0], np.inf)
    for i in range(ap.shape[0]):
        best = np.inf
        for j in range(bp.shape[0]):
            d = _hav(ap[i], al[i], ac[i], bp[j], bl[j], bc[j])
            if d < best:
                best = d
        out[i] = best
    return out


@njit(cache=True, nogil=True)
def kde_log_density(alat, alon, blat, blon, weights, bandwidth):
    ap, al, ac = _prep(alat, alon)
    bp, bl, bc = _prep(blat, blon)
    m = bp.shape[0]
    logw = np.log(weights)
    inv = 1.0 / (2.0 * bandwidth * bandwidth)
    z = np.empty(m)
    out = np.empty(ap.shape[0])
    for i in range(ap.shape[0]):
        zmax = -np.inf
        for j in range(m):
            d = _hav(ap[i], al[i], ac[i], bp[j], bl[j], bc[j])
            z[j] = logw[j] - d * d * inv
            if z[j] > zmax:
                zmax = z[j]
        acc = 0.0
        for j in range(m):
            acc += math.exp(z[j] - zmax)
        out[i] = zmax + math.log(acc)
    return out


@njit(cache=True, nogil=True)
def mean_log_distance(alat, alon, blat, blon, floor):
    ap, al, ac = _prep(alat, alon)
    bp, bl, bc = _prep(blat, blon)
    m = bp.shape[0]
    out = np.empty(ap.shape[0])
    for i in range(ap.shape[0]):
        acc = 0.0
        for j in range(m):
            d = _hav(ap[i], al[i], ac[i], bp[j], bl[j], bc[j])
            acc += math.log(d if d > floor else floor)
        out[i] = acc / m
    return out


@njit(cache=True, nogil=True)
def pairwise_within(lat, lon):
    p, lam, c = _prep(lat, lon)
    n = p.shape[0]
    if n < 2:
        return np.empty(0)
    out = np.empty(n * (n - 1) // 2)
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            out[k] = _hav(p[i], lam[i], c[i], p[j], lam[j], c[j])
            k += 1
    return out
