import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from fairpoi import kernels
from fairpoi.kernels import _numpy

try:
    from fairpoi.kernels import _numba
except ImportError:  # pragma: no cover
    _numba = None

R = 6371.0088
BACKENDS = [_numpy] + ([_numba] if _numba is not None else [])


def hav_scalar(lat1, lon1, lat2, lon2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * R * math.asin(math.sqrt(min(h, 1.0)))


lat = st.floats(-89.9, 89.9)
lon = st.floats(-179.9, 180.0)
coords = st.lists(st.tuples(lat, lon), min_size=1, max_size=12)


def _arr(points):
    a = np.array(points, dtype=np.float64).reshape(-1, 2)
    return a[:, 0].copy(), a[:, 1].copy()


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
@settings(max_examples=40, deadline=None)
@given(a=coords, b=coords)
def test_distance_matrix_matches_scalar_oracle(impl, a, b):
    alat, alon = _arr(a)
    blat, blon = _arr(b)
    got = impl.distance_matrix(alat, alon, blat, blon)
    want = np.array([[hav_scalar(x, y, u, v) for u, v in b] for x, y in a])
    assert np.allclose(got, want, rtol=1e-9, atol=1e-6)
    assert np.allclose(impl.min_distance(alat, alon, blat, blon), want.min(axis=1), rtol=1e-9, atol=1e-6)


@pytest.mark.skipif(_numba is None, reason="numba not installed")
@settings(max_examples=30, deadline=None)
@given(a=coords, b=coords, bw=st.floats(0.5, 50.0))
def test_backends_agree(a, b, bw):
    alat, alon = _arr(a)
    blat, blon = _arr(b)
    w = np.linspace(0.5, 2.0, len(blat))
    for name, args in {
        "distance_matrix": (alat, alon, blat, blon),
        "min_distance": (alat, alon, blat, blon),
        "kde_log_density": (alat, alon, blat, blon, w, bw),
        "mean_log_distance": (alat, alon, blat, blon, 0.01),
        "pairwise_within": (blat, blon),
    }.items():
        x, y = getattr(_numpy, name)(*args), getattr(_numba, name)(*args)
        assert np.allclose(x, y, rtol=1e-9, atol=1e-7), name


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_kde_and_mean_log_against_direct_formulas(impl):
    rng = np.random.default_rng(0)
    alat, alon = rng.uniform(40, 41, 7), rng.uniform(-100, -99, 7)
    blat, blon = rng.uniform(40, 41, 5), rng.uniform(-100, -99, 5)
    w = rng.uniform(0.5, 2, 5)
    d = _numpy.distance_matrix(alat, alon, blat, blon)
    want = logsumexp(np.log(w)[None, :] - d ** 2 / (2 * 3.0 ** 2), axis=1)
    assert np.allclose(impl.kde_log_density(alat, alon, blat, blon, w, 3.0), want)
    want = np.log(np.maximum(d, 0.5)).mean(axis=1)
    assert np.allclose(impl.mean_log_distance(alat, alon, blat, blon, 0.5), want)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_pairwise_within_is_upper_triangle(impl):
    rng = np.random.default_rng(1)
    la, lo = rng.uniform(-60, 60, 9), rng.uniform(-170, 170, 9)
    full = _numpy.distance_matrix(la, lo, la, lo)
    iu = np.triu_indices(9, 1)
    assert np.allclose(impl.pairwise_within(la, lo), full[iu])
    assert impl.pairwise_within(la[:1], lo[:1]).size == 0


def test_antipodes_and_identity():
    d = kernels.distance_matrix([0.0, 10.0], [0.0, 20.0], [0.0, -10.0], [180.0, -160.0])
    assert d[0, 0] == pytest.approx(math.pi * R)
    assert d[1, 1] == pytest.approx(math.pi * R)
    assert kernels.distance_matrix([12.5], [7.0], [12.5], [7.0])[0, 0] == 0.0


def test_public_wrappers_accept_lists():
    out = kernels.min_distance([40.0, 41.0], [-100.0, -100.0], [40.0], [-100.0])
    assert out[0] == 0.0 and out[1] == pytest.approx(R * math.radians(1.0))


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, FAIRPOI_NUMBA="0")
    code = "import fairpoi.kernels as k; print(k.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_benchmark_script_runs(capsys):
    import importlib.util
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main(["--n", "20", "--m", "30", "--repeat", "1"])
    out = capsys.readouterr().out
    assert "distance_matrix" in out and "speedup" in out
