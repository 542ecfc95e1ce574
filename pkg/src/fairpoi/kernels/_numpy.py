"""Pure-numpy geodesic kernels.

Row blocks keep the temporary (n, m) arrays under ~8 MB regardless of input
size.
"""

import numpy as np

EARTH_RADIUS_KM = 6371.0088
_BLOCK_CELLS = 1 << 20


def _block_rows(m: int) -> int:
    return max(1, _BLOCK_CELLS // max(m, 1))


def _hav_block(alat, alon, blat, blon):
    p1 = np.radians(alat)[:, None]
    p2 = np.radians(blat)[None, :]
    dphi = p2 - p1
    dlam = np.radians(blon)[None, :] - np.radians(alon)[:, None]
    h = np.sin(dphi * 0.5) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam * 0.5) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(h, 1.0)))


def distance_matrix(alat, alon, blat, blon):
    n, m = len(alat), len(blat)
    out = np.empty((n, m))
    step = _block_rows(m)
    for s in range(0, n, step):
        out[s:s + step] = _hav_block(alat[s:s + step], alon[s:s + step], blat, blon)
    return out


def min_distance(alat, alon, blat, blon):
    n, m = len(alat), len(blat)
    out = np.full(n, np.inf)
    if m == 0:
        return out
    step = _block_rows(m)
    for s in range(0, n, step):
        out[s:s + step] = _hav_block(alat[s:s + step], alon[s:s + step], blat, blon).min(axis=1)
    return out


def kde_log_density(alat, alon, blat, blon, weights, bandwidth):
    n, m = len(alat), len(blat)
    out = np.empty(n)
    logw = np.log(weights)
    inv = 1.0 / (2.0 * bandwidth * bandwidth)
    step = _block_rows(m)
    for s in range(0, n, step):
        d = _hav_block(alat[s:s + step], alon[s:s + step], blat, blon)
        z = logw[None, :] - d * d * inv
        zmax = z.max(axis=1)
        out[s:s + step] = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
    return out


def mean_log_distance(alat, alon, blat, blon, floor):
    n, m = len(alat), len(blat)
    out = np.empty(n)
    step = _block_rows(m)
    for s in range(0, n, step):
        d = _hav_block(alat[s:s + step], alon[s:s + step], blat, blon)
        out[s:s + step] = np.log(np.maximum(d, floor)).mean(axis=1)
    return out


def pairwise_within(lat, lon):
    n = len(lat)
    if n < 2:
        return np.empty(0)
    iu = np.triu_indices(n, k=1)
    return distance_matrix(lat, lon, lat, lon)[iu]
