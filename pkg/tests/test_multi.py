import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crisp.contrast import cusum_threshold, num_outer_discs
from crisp.geometry import Disc, LabeledDataset, discs_intersect, empirical_loss, normalize, \
    sample_outer_discs, sample_uniform_sphere
from crisp.multi import DetectorConfig, detect_multi, match_regions, scan_outer, select_disjoint
from crisp.simulate import SimDesign, generate
from crisp.single import RegionEstimate, SearchBudget, detect_single


def test_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(J=0)
    with pytest.raises(ValueError):
        DetectorConfig(J="many")
    with pytest.raises(ValueError):
        DetectorConfig(omega=7.0)
    with pytest.raises(ValueError):
        DetectorConfig(inner_radius_frac_cap=1.5)
    assert DetectorConfig().resolve_J(3) == num_outer_discs(3, 0.05)
    assert DetectorConfig(J=17).resolve_J(3) == 17


def test_scan_outer_too_few_points(rng):
    ds = LabeledDataset(sample_uniform_sphere(rng, 3, 100), rng.standard_normal(100))
    tiny = Disc.from_radius(ds.points[0], 0.01)
    res = scan_outer(tiny, ds, DetectorConfig(), 5.0)
    assert res.reason == "too_few_points" and not res.accepted


def test_scan_outer_recovers_single_region(rng):
    region = Disc.from_radius([0.0, 0.0, 1.0], 0.5)
    x = sample_uniform_sphere(rng, 3, 1000)
    inside = region.mask(x)
    ds = LabeledDataset(x, 3.0 * inside + rng.standard_normal(1000))
    outer = Disc.from_radius([0.1, 0.0, 1.0], 1.1)
    cfg = DetectorConfig()
    res = scan_outer(outer, ds, cfg, cusum_threshold(1000, 801), np.random.default_rng(0))
    assert res.accepted
    in_b = outer.mask(x)
    assert empirical_loss(res.estimate.mask(1000), inside & in_b, 1000) < 0.05
    assert res.estimate.rss < res.gamma
    assert res.estimate.disc.radius <= min(2 / 3 * outer.radius, outer.radius - cfg.omega / 2) + 1e-12


def test_scan_outer_null_acceptance_rate():
    cfg = DetectorConfig(budget=SearchBudget(n_perturb=50))
    lam = cusum_threshold(1000, num_outer_discs(3))
    accepted = 0
    for k in range(200):
        rng = np.random.default_rng([21, k])
        ds = LabeledDataset(sample_uniform_sphere(rng, 3, 1000), rng.standard_normal(1000))
        outer = sample_outer_discs(rng, 1, 3)[0]
        accepted += scan_outer(outer, ds, cfg, lam, rng).accepted
    assert accepted <= 20


def _fake(center, radius, stat, idx=()):
    return RegionEstimate(disc=Disc.from_radius(center, radius), statistic=stat,
                          member_indices=np.asarray(idx, dtype=np.int64))


def test_select_disjoint_prefers_larger_statistic():
    a = _fake([1, 0, 0], 0.3, 9.0)
    b = _fake([math.cos(0.4), math.sin(0.4), 0], 0.3, 7.0)
    c = _fake([-1, 0, 0], 0.3, 5.0)
    kept = select_disjoint([c, b, a])
    assert kept == [a, c]


@given(st.integers(0, 2**32 - 1), st.integers(1, 25))
def test_select_disjoint_invariants(seed, m):
    rng = np.random.default_rng(seed)
    cands = [_fake(sample_uniform_sphere(rng, 3), rng.uniform(0.05, 0.6), float(s))
             for s in rng.permutation(m) + rng.random()]
    kept = select_disjoint(cands)
    shuffled = select_disjoint([cands[i] for i in rng.permutation(m)])
    assert [k.statistic for k in kept] == [k.statistic for k in shuffled]
    for i in range(len(kept)):
        for j in range(i + 1, len(kept)):
            assert not discs_intersect(kept[i].disc, kept[j].disc)
    # every dropped candidate meets a kept one with a larger statistic
    for c in cands:
        if not any(c is k for k in kept):
            assert any(discs_intersect(c.disc, k.disc) and k.statistic > c.statistic for k in kept)


def test_select_disjoint_empirical_mode():
    a = _fake([1, 0, 0], 0.3, 9.0, [1, 2])
    b = _fake([math.cos(0.4), math.sin(0.4), 0], 0.3, 7.0, [3])
    assert len(select_disjoint([a, b], "geometric")) == 1
    assert len(select_disjoint([a, b], "empirical")) == 2


def test_detect_multi_invariants_and_threads():
    sim = generate(SimDesign(3, 600, 3.0, r=4), np.random.default_rng(5))
    cfg = DetectorConfig(J=300, budget=SearchBudget(seed=2))
    res = detect_multi(sim.ds, cfg)
    assert len(res.per_outer_log) == 300
    for i, a in enumerate(res.regions):
        assert a.statistic > res.lambda_t
        log = [e for e in res.per_outer_log if e["accepted"] and e["cusum"] == a.statistic]
        assert log and log[0]["rss"] < log[0]["gamma"]
        for b in res.regions[i + 1:]:
            assert not discs_intersect(a.disc, b.disc)
    labels = res.labels(sim.ds.n)
    assert set(np.unique(labels)) <= set(range(res.n_regions + 1))
    threaded = detect_multi(sim.ds, dataclasses.replace(cfg, threads=4))
    assert [r.disc for r in threaded.regions] == [r.disc for r in res.regions]
    assert [r.statistic for r in threaded.regions] == [r.statistic for r in res.regions]


def test_detect_multi_single_region_matches_single_detector():
    multi_losses, single_losses = [], []
    for rep in range(5):
        sim = generate(SimDesign(3, 600, 3.0, r=1), np.random.default_rng([31, rep]))
        res = detect_multi(sim.ds, DetectorConfig(budget=SearchBudget(seed=rep)))
        assert res.n_regions == 1
        truth = sim.truth[0]
        multi_losses.append(empirical_loss(res.regions[0].mask(sim.ds.n), truth, sim.ds))
        single = detect_single(sim.ds, SearchBudget(seed=rep))
        single_losses.append(empirical_loss(single.mask(sim.ds.n), truth, sim.ds))
    assert np.mean(multi_losses) <= 2 * np.mean(single_losses) + 1 / 600


def test_recovery_monotone_in_J_noiseless():
    sim = generate(SimDesign(3, 800, 3.0, r=4, sigma=0.0), np.random.default_rng(2))
    recovered = []
    for J in (25, 50, 100, 200, 400):
        res = detect_multi(sim.ds, DetectorConfig(J=J, budget=SearchBudget(seed=4)))
        hit = {k for k, t in enumerate(sim.truth)
               if any(empirical_loss(r.mask(sim.ds.n), t, sim.ds) == 0.0 for r in res.regions)}
        recovered.append(hit)
    for small, large in zip(recovered, recovered[1:]):
        assert small <= large
    assert len(recovered[-1]) == 4


def test_detect_multi_needs_three_points():
    with pytest.raises(ValueError):
        detect_multi(LabeledDataset(np.eye(3)[:2], np.zeros(2)))


def test_match_regions_examples(rng):
    x = sample_uniform_sphere(rng, 3, 400)
    ds = LabeledDataset(x, np.zeros(400))
    truth = [Disc.from_radius([1, 0, 0], 0.4), Disc.from_radius([-1, 0, 0], 0.4),
             Disc.from_radius([0, 0, 1], 0.5)]
    out = match_regions(truth, [truth[2], truth[0], truth[1]], ds)
    assert out["permuted_max_loss"] == 0.0
    assert match_regions(truth[:1], truth[1:2], ds)["permuted_max_loss"] == \
        empirical_loss(truth[0], truth[1], ds)
    assert match_regions(truth, truth[:2], ds)["permuted_max_loss"] == math.inf
    assert match_regions([], [], ds)["permuted_max_loss"] == 0.0


def test_match_regions_optimal_permutation():
    # pairwise losses: diagonal {0.1, 0.05}, crossed {0.3, 0.2}
    n = 40
    ds = LabeledDataset(sample_uniform_sphere(np.random.default_rng(0), 3, n), np.zeros(n))

    def m(idx):
        out = np.zeros(n, bool)
        out[idx] = True
        return out

    t1, t2 = m(range(0, 5)), m(range(5, 10))
    e1, e2 = m([0, 1, 2, 3, 4, 5, 6, 7, 10]), m([5, 6, 7, 8, 9, 11, 12])
    out = match_regions([t1, t2], [e1, e2], ds)
    np.testing.assert_allclose(out["loss_matrix"], [[0.1, 0.3], [0.2, 0.05]])
    assert out["matching"] == [(0, 0), (1, 1)]
    assert out["permuted_max_loss"] == pytest.approx(0.1)
    crossed = match_regions([t1, t2], [e2, e1], ds)
    assert crossed["matching"] == [(0, 1), (1, 0)]
    assert crossed["permuted_max_loss"] == pytest.approx(0.1)


def test_match_regions_large_r_requires_greedy(rng):
    ds = LabeledDataset(sample_uniform_sphere(rng, 3, 50), np.zeros(50))
    discs = [Disc.from_radius(sample_uniform_sphere(rng, 3), 0.1) for _ in range(9)]
    with pytest.raises(ValueError):
        match_regions(discs, discs, ds)
    assert match_regions(discs, discs, ds, greedy=True)["permuted_max_loss"] == 0.0
