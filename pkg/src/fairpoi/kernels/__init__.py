"""Geodesic inner loops with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``FAIRPOI_NUMBA`` is not set
to ``0``/``false``/``off``.  Both paths take float64 arrays of degrees and
return kilometres (or logs of kilometre quantities); they agree to ~1e-9
relative, which ``tests/test_kernels.py`` checks.

All coordinate arguments are (lat, lon) array pairs.  ``a*`` rows are the
query points (typically candidate POIs), ``b*`` columns the reference set
(typically one user's visited POIs).
"""

import os

import numpy as np

from . import _numpy

EARTH_RADIUS_KM = _numpy.EARTH_RADIUS_KM


def _numba_requested() -> bool:
    return os.environ.get("FAIRPOI_NUMBA", "1").strip().lower() not in {"0", "false", "off", "no"}


try:
    if not _numba_requested():
        raise ImportError("disabled by FAIRPOI_NUMBA")
    from . import _numba as _impl

    BACKEND = "numba"
except ImportError:
    _impl = _numpy
    BACKEND = "numpy"


def _f64(*arrays):
    return tuple(np.ascontiguousarray(a, dtype=np.float64) for a in arrays)


def distance_matrix(alat, alon, blat, blon) -> np.ndarray:
    """Haversine distances, shape ``(len(a), len(b))``."""
    return _impl.distance_matrix(*_f64(alat, alon, blat, blon))


def min_distance(alat, alon, blat, blon) -> np.ndarray:
    """Distance from each ``a`` point to its nearest ``b`` point (inf if ``b`` is empty)."""
    return _impl.min_distance(*_f64(alat, alon, blat, blon))


def kde_log_density(alat, alon, blat, blon, weights, bandwidth: float) -> np.ndarray:
    """``log sum_j w_j exp(-d_ij^2 / (2 h^2))`` for a Gaussian kernel of bandwidth ``h`` km."""
    return _impl.kde_log_density(*_f64(alat, alon, blat, blon, weights), float(bandwidth))


def mean_log_distance(alat, alon, blat, blon, floor: float) -> np.ndarray:
    """Row means of ``log(max(d_ij, floor))``."""
    return _impl.mean_log_distance(*_f64(alat, alon, blat, blon), float(floor))


def pairwise_within(lat, lon) -> np.ndarray:
    """Condensed upper-triangle distances within one point set."""
    return _impl.pairwise_within(*_f64(lat, lon))
