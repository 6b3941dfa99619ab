import numpy as np
import pytest

from trendoco import envgen, oracle, partition

from helpers import naive_greedy_partition


def offline_optimum(n, cn, seed, kinks=5, noise=0.05):
    spec = envgen.PiecewiseLinearSpec(n=n, d=1, kinks=min(kinks, n - 2),
                                      budget=min(cn + 1.0, 8.0), seed=seed)
    _, stream = envgen.gen_piecewise_linear(spec, noise=noise)
    budget = oracle.VariationBudget(c_n=cn, n=n)
    return oracle.solve_offline(stream, budget, tol=1e-6, inner_tol=1e-8)


def test_linear_sequence_is_a_single_bin():
    u = np.linspace(-0.8, 0.9, 50)
    report = partition.greedy_partition(u)
    assert report.count == 1
    assert report.bins[0].start == 0 and report.bins[0].end == 49


def test_constant_sequence_is_a_single_bin():
    report = partition.greedy_partition(np.full(30, 0.2))
    assert report.count == 1


def test_greedy_matches_naive_reimplementation():
    rng = np.random.default_rng(0)
    for k in range(25):
        n = int(rng.integers(10, 200))
        kind = k % 3
        if kind == 0:
            u = rng.uniform(-1, 1, n)  # rough sequence, many bins
        elif kind == 1:
            u = np.cumsum(rng.normal(scale=0.01, size=n))
        else:
            sol = offline_optimum(max(n, 20), float(rng.uniform(0.3, 4.0)), seed=k)
            u = sol.u[:, 0]
        report = partition.greedy_partition(u)
        expected = naive_greedy_partition(u)
        assert [(b.start, b.end) for b in report.bins] == expected


def test_single_midpoint_kink_boundary_placement():
    n = 64
    t = np.arange(n, dtype=float)
    u = np.where(t < n // 2, 0.02 * t, 0.02 * (n // 2) - 0.01 * (t - n // 2))
    report = partition.greedy_partition(u)
    assert [(b.start, b.end) for b in report.bins] == naive_greedy_partition(u)
    assert report.count >= 2


def test_bins_tile_horizon_and_satisfy_conditions():
    rng = np.random.default_rng(3)
    for k in range(10):
        sol = offline_optimum(int(rng.integers(40, 160)),
                              float(rng.uniform(0.3, 6.0)), seed=100 + k)
        u = sol.u[:, 0]
        n = u.shape[0]
        report = partition.greedy_partition(u)
        # tiling
        assert report.bins[0].start == 0
        assert report.bins[-1].end == n - 1
        for left, right in zip(report.bins[:-1], report.bins[1:]):
            assert right.start == left.end + 1
        # condition (a) for every bin, maximality for every non-final bin
        for i, bn in enumerate(report.bins):
            seg_tv = partition._segment_tv1(u[:, None], bn.start, bn.end)
            assert seg_tv <= 1.0 / bn.length ** 1.5 + 1e-12
            assert bn.tv1 == pytest.approx(seg_tv, abs=1e-12)
            if i < len(report.bins) - 1:
                ext = partition._segment_tv1(u[:, None], bn.start, bn.end + 1)
                assert ext > 1.0 / (bn.length + 1) ** 1.5


def test_bin_count_bound_formula_and_validity():
    assert partition.bin_count_bound(100, 0.0) == 1.0
    assert partition.bin_count_bound(1024, 1.0 / 32.0) == pytest.approx(
        1024 ** 0.4 + 1.0)
    rng = np.random.default_rng(5)
    for k in range(20):
        sol = offline_optimum(int(rng.integers(40, 160)),
                              float(rng.uniform(0.3, 6.0)), seed=300 + k)
        u = sol.u[:, 0]
        report = partition.greedy_partition(u)
        tv_total = float(np.abs(np.diff(u, 2)).sum())
        assert report.count <= partition.bin_count_bound(u.shape[0], tv_total)


def test_refine_no_boundary_touches_is_identity():
    u = np.linspace(-0.5, 0.5, 40)
    report = partition.greedy_partition(u)
    refined = partition.refine_boundary_touches(report, u)
    assert [(b.start, b.end) for b in refined.bins] == \
        [(b.start, b.end) for b in report.bins]
    assert refined.refinement_splits == []


def test_refine_splits_opposite_boundary_crossing():
    # Constant steep descent +1 -> -1 inside one bin (zero curvature).
    n = 21
    u = np.linspace(1.0, -1.0, n)
    report = partition.greedy_partition(u)
    assert report.count == 1
    refined = partition.refine_boundary_touches(report, u)
    assert len(refined.refinement_splits) == 1
    p = n - 1  # first index where u == -1
    assert refined.refinement_splits[0] == p - 1
    assert [(b.start, b.end) for b in refined.bins] == [(0, p - 1), (p, n - 1)]


def test_refine_adds_at_most_two_per_bin():
    rng = np.random.default_rng(7)
    for k in range(10):
        n = int(rng.integers(30, 120))
        u = np.clip(np.cumsum(rng.normal(scale=0.3, size=n)), -1, 1)
        report = partition.greedy_partition(u)
        refined = partition.refine_boundary_touches(report, u)
        assert refined.count <= report.count + 2 * report.count
        # within every refined bin at most one boundary is touched
        for bn in refined.bins:
            col = u[bn.start : bn.end + 1]
            hits_low = np.any(np.abs(col + 1) <= 1e-7)
            hits_high = np.any(np.abs(col - 1) <= 1e-7)
            assert not (hits_low and hits_high)


def test_split_monotonic_constant_slope():
    u = np.linspace(0, 1, 12)
    bn = partition.Bin(start=0, end=11, tv1=0.0)
    kind, idx = partition.split_monotonic(u, bn)
    assert kind == "constant"
    assert idx == [0, 11]


def test_split_monotonic_convex_with_flat_ends():
    # slopes: 0,0,0,1,2,3,3,3 -> strict increases crossing u-index 3 and 6
    slopes = np.array([0, 0, 0, 1, 2, 3, 3, 3], dtype=float)
    u = np.concatenate([[0.0], np.cumsum(slopes)])
    bn = partition.Bin(start=0, end=u.size - 1, tv1=0.0)
    kind, idx = partition.split_monotonic(u, bn)
    assert kind == "monotonic"
    assert idx == [0, 2, 3, 5, 6, 8]
    # outer pieces carry constant slope
    z = np.diff(u)
    assert np.ptp(z[0:2]) == 0
    assert np.ptp(z[6:]) == 0


def test_split_monotonic_non_monotonic_flag():
    u = np.array([0.0, 1.0, 0.0, 1.0, 0.0])
    bn = partition.Bin(start=0, end=4, tv1=0.0)
    kind, idx = partition.split_monotonic(u, bn)
    assert kind == "non-monotonic"
    assert idx == []


def test_linear_fit_exact_on_linear_data():
    u = -1.0 + 0.02 * np.arange(1, 31)
    bn = partition.Bin(start=0, end=29, tv1=0.0)
    beta, residuals = partition.linear_fit_residuals(u, bn)
    assert np.abs(residuals).max() <= 1e-12
    assert beta[0, 0] == pytest.approx(-1.0)
    assert beta[1, 0] == pytest.approx(0.02)


def test_linear_fit_three_point_fixture():
    u = np.array([0.0, 1.0, 2.0])
    bn = partition.Bin(start=0, end=2, tv1=0.0)
    beta, residuals = partition.linear_fit_residuals(u, bn)
    assert np.allclose(beta[:, 0], [-1.0, 1.0])
    assert np.abs(residuals).max() <= 1e-12


def test_linear_fit_requires_two_points():
    with pytest.raises(ValueError):
        partition.linear_fit_residuals(np.ones(5), partition.Bin(0, 0, 0.0))


def segment(rng, length):
    """Random piecewise-linear segment with at least one real kink."""
    kinks = int(rng.integers(1, max(2, length // 8)))
    spec = envgen.PiecewiseLinearSpec(
        n=length, d=1, kinks=min(kinks, length - 2),
        budget=float(rng.uniform(0.2, 2.0)), seed=int(rng.integers(1 << 31)))
    w, _ = envgen.gen_piecewise_linear(spec, noise=0.0)
    return w[:, 0]


def test_residual_bound_on_random_segments():
    rng = np.random.default_rng(11)
    for _ in range(200):
        length = int(rng.integers(6, 200))
        u = segment(rng, max(length, 6))
        bn = partition.Bin(start=0, end=u.size - 1, tv1=0.0)
        _, residuals = partition.linear_fit_residuals(u, bn)
        tv = float(np.abs(np.diff(u, 2)).sum())
        assert np.abs(residuals).max() <= 20.0 * u.size * tv


def test_slope_decomposition_identities_and_bounds():
    rng = np.random.default_rng(13)
    for _ in range(100):
        length = int(rng.integers(2, 60))
        if length >= 6:
            u = segment(rng, length)
        else:
            u = rng.uniform(-1, 1, length)
        bn = partition.Bin(start=0, end=length - 1, tv1=0.0)
        if length < 2:
            continue
        _, residuals = partition.linear_fit_residuals(u, bn)
        M, C = partition.residual_slope_decomposition(residuals)
        r = residuals
        # continuity representation: r[i] = (i+1) M[i-1] + C[i-1] for i >= 1
        for i in range(1, length):
            assert r[i, 0] == pytest.approx(
                (i + 1) * M[i - 1, 0] + C[i - 1, 0], abs=1e-9)
        # intercept recursion
        for i in range(1, length - 1):
            assert C[i, 0] - C[i - 1, 0] == pytest.approx(
                (i + 1) * (M[i - 1, 0] - M[i, 0]), abs=1e-9)
        tv = float(np.abs(np.diff(u, 2)).sum()) if length >= 3 else 0.0
        if length >= 3 and tv > 1e-12:
            assert abs(M[0, 0]) <= tv + 1e-12
            assert abs(M[-1, 0]) <= tv + 1e-12
