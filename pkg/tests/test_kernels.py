import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crisp import kernels
from crisp.geometry import sample_uniform_sphere

BACKENDS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])


def brute_best_prefix(proj, vals, mid_min, mid_max, sign):
    """Loop over prefixes; the reference for one sorted row."""
    m = proj.size
    best, best_k, best_mid = -math.inf, 0, 0.0
    mean = vals.mean()
    for k in range(1, m):
        if not proj[k - 1] > proj[k]:
            continue
        mid = 0.5 * (proj[k - 1] + proj[k])
        if not mid_min <= mid <= mid_max:
            continue
        t = vals[:k].sum() - k * mean
        t *= math.sqrt(m / (k * (m - k)))
        t = abs(t) if sign == 0 else sign * t
        if t > best + 1e-12:
            best, best_k, best_mid = t, k, mid
    return best_k, best, best_mid


@pytest.mark.parametrize("backend", BACKENDS)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 40), sign=st.sampled_from([0, 1, -1]))
def test_best_prefix_matches_brute_force(backend, seed, m, sign):
    mod = kernels.backend_module(backend)
    rng = np.random.default_rng(seed)
    proj = np.sort(np.round(rng.uniform(-1, 1, m), 2))[::-1]  # rounding creates ties
    vals = rng.standard_normal(m)
    lo, hi = sorted(rng.uniform(-1, 1, 2))
    ks, scores, mids = mod.best_prefix_batch(proj[None], vals[None], lo, hi, sign)
    k, s, mid = brute_best_prefix(proj, vals, lo, hi, sign)
    if k == 0:
        assert ks[0] == 0 and scores[0] == -np.inf
    else:
        assert scores[0] == pytest.approx(s, abs=1e-10)
        assert mids[0] == pytest.approx(mid, abs=1e-15)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="extension not built")
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 80), d=st.integers(2, 4))
def test_backend_parity(seed, m, d):
    py, cy = kernels.backend_module("python"), kernels.backend_module("cython")
    rng = np.random.default_rng(seed)
    x = sample_uniform_sphere(rng, d, m)
    v = rng.standard_normal(m)
    c = sample_uniform_sphere(rng, d)
    beta = rng.uniform(-1, 1)
    for sign in (0, 1, -1):
        assert cy.disc_score(x, v, c, beta, sign) == pytest.approx(py.disc_score(x, v, c, beta, sign), abs=1e-10)
        s_py, mid_py = py.scan_center(x, v, c, beta, sign)
        s_cy, mid_cy = cy.scan_center(x, v, c, beta, sign)
        if s_py == -np.inf:
            assert s_cy == -np.inf
        else:
            assert s_cy == pytest.approx(s_py, abs=1e-10)
            assert mid_cy == pytest.approx(mid_py, abs=1e-12)
    args = (x, v, c, 0.5, rng.standard_normal((30, d)), np.abs(rng.standard_normal(30)), 0.3, 0.97,
            None, math.inf, math.pi, 0)
    c_py, m_py, s_py, a_py = py.hill_climb(*args)
    c_cy, m_cy, s_cy, a_cy = cy.hill_climb(*args)
    assert s_cy == pytest.approx(s_py, abs=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_scan_center_respects_radius_floor(backend):
    mod = kernels.backend_module(backend)
    rng = np.random.default_rng(0)
    x = sample_uniform_sphere(rng, 3, 300)
    v = rng.standard_normal(300)
    c = np.array([0.0, 0.0, 1.0])
    floor = math.cos(0.8)
    s, mid = mod.scan_center(x, v, c, floor, 0)
    assert mid >= floor
    # same answer as scanning the full order with the same admissible range
    order = np.argsort(-(x @ c), kind="stable")
    _, s_full, mid_full = mod.best_prefix_batch((x @ c)[order][None], v[order][None], floor, 1.0, 0)
    assert s == pytest.approx(s_full[0], abs=1e-10)
    assert mid == pytest.approx(mid_full[0], abs=1e-15)


@pytest.mark.parametrize("backend", BACKENDS)
def test_hill_climb_never_worse_and_feasible(backend):
    mod = kernels.backend_module(backend)
    rng = np.random.default_rng(4)
    x = sample_uniform_sphere(rng, 3, 400)
    outer_c = np.array([0.0, 0.0, 1.0])
    inside = x @ outer_c >= math.cos(1.2)
    x, v = x[inside], rng.standard_normal(inside.sum())
    start = np.array([0.0, 0.0, 1.0])
    limit, cap = 1.2 - 0.05, 0.8
    s0, _ = mod.scan_center(x, v, start, math.cos(cap), 0)
    c, mid, s, _ = mod.hill_climb(x, v, start, 0.5, rng.standard_normal((60, 3)),
                                  np.abs(rng.standard_normal(60)), 0.3, 0.97, outer_c, limit, cap, 0)
    assert s >= s0
    r = math.acos(mid)
    assert r <= cap + 1e-12
    assert math.acos(min(1.0, float(c @ outer_c))) + r <= limit + 1e-9


def test_backend_selection():
    assert kernels.BACKEND in ("python", "cython")
    with pytest.raises(ValueError):
        kernels.backend_module("fortran")


@pytest.mark.parametrize("backend", BACKENDS)
def test_hill_climb_recovers_from_infeasible_start(backend):
    mod = kernels.backend_module(backend)
    rng = np.random.default_rng(8)
    x = sample_uniform_sphere(rng, 3, 200)
    v = rng.standard_normal(200)
    outer_c = np.array([0.0, 0.0, 1.0])
    # start centre sits outside the feasible band, so the first scan is empty
    start = np.array([1.0, 0.0, 0.0])
    c, mid, s, acc = mod.hill_climb(x, v, start, 1.0, rng.standard_normal((200, 3)),
                                    np.abs(rng.standard_normal(200)), 1.0, 1.0, outer_c, 1.0, 0.5, 0)
    assert acc >= 1 and np.isfinite(s)
