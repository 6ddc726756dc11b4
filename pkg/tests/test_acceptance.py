"""Acceptance suite: one test per release criterion, one printed verdict each.

Every test prints ``ACCEPTANCE <n> PASS|FAIL <summary>`` before asserting, so
a full run (``pytest -s tests/test_acceptance.py``) reads as a checklist.
Tolerances are fixed here and must not be loosened; seeds are fixed so every
number below is reproducible bit for bit.
"""

import time

import numpy as np
import pytest
from scipy.special import ive

from poismatch import (BLUE, Domain, DyadicShifts, RED, adjacent_match_1d,
                       brute_force_stable, cone_forest, default_fit_window,
                       empirical_survival, find_unstable_pair, fit_power_law,
                       hierarchical_match, ks_exponential, match_distances,
                       match_from_forest, merge, min_length_bipartite,
                       min_length_one_color_exact, minimal_spanning_forest,
                       pairwise_distances, sample_binomial, sample_poisson,
                       solve_s, sphere_area, stable_match)
from poismatch.analysis import _windowed_unstable, t_bad_separation_gap
from poismatch.exponent import d2_gamma_residual, kernel_integral


def _verdict(n, ok, detail):
    print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def _fitted_exponent(samples, dom=None, window=None):
    samples = np.sort(np.asarray(samples, dtype=float))
    if window is None:
        window = default_fit_window(samples, dom)
    grid = np.geomspace(max(samples[samples > 0][0], 1e-9), samples[-1], 96)
    surv = empirical_survival(samples, grid)
    return fit_power_law(grid, surv, window[0], window[1],
                         n_samples=len(samples)).exponent


def test_criterion_1_exponent_equation():
    t0 = time.time()
    results = {d: solve_s(d) for d in (2, 3, 10, 100)}
    elapsed = time.time() - t0
    targets = {2: 0.496, 3: 0.449, 10: 0.339, 100: 0.224}
    max_err = max(abs(results[d].s - targets[d]) for d in targets)
    gamma_resid = abs(d2_gamma_residual(results[2].s))
    kernel_err = max(abs(kernel_integral(d) - sphere_area(d) / d)
                     for d in range(2, 11))
    ok = max_err < 1e-3 and elapsed < 1.0 and gamma_resid < 1e-8 \
        and kernel_err < 1e-9
    _verdict(1, ok,
             f"exponents max|err|={max_err:.2e} (tol 1e-3), "
             f"d=2 Gamma residual={gamma_resid:.2e} (tol 1e-8), "
             f"kernel integral max err={kernel_err:.2e} (tol 1e-9), "
             f"runtime {elapsed:.3f}s (< 1s)")


def test_criterion_2_stable_uniqueness_oracle():
    t0 = time.time()
    dom = Domain(2, 8.0, "torus")
    failures = 0
    for seed in range(100):
        red = sample_binomial(dom, 6, RED, 20_000 + seed)
        blue = sample_binomial(dom, 6, BLUE, 30_000 + seed)
        want = brute_force_stable(red.coords, blue.coords, dom)  # asserts unique
        got = stable_match(merge(red, blue), "two-color")
        partner = got.partner_array()
        if not all(partner[r] == b + 6 for r, b in want):
            failures += 1
    elapsed = time.time() - t0
    ok = failures == 0 and elapsed < 10.0
    _verdict(2, ok, f"100 instances, {failures} mismatches (require 0), "
             f"runtime {elapsed:.1f}s (< 10s)")


def test_criterion_3_invariants_at_scale():
    problems = []
    for d, L in ((1, 2.0 ** 17), (2, 320.0)):
        dom = Domain(d, L, "torus")
        lam = 1.0 if d == 2 else 1e5 / L
        red = sample_poisson(dom, lam, RED, 42)
        blue = sample_poisson(dom, lam, BLUE, 43)
        pts = merge(red, blue)
        m = stable_match(pts, "two-color")
        if _windowed_unstable(pts, m, n_windows=5, window_points=1000) is not None:
            problems.append(f"d={d}: unstable pair in window scan")
        mr = int((pts.colors[m.pairs.ravel()] == RED).sum())
        if mr != 2 * len(m.pairs) - mr:
            problems.append(f"d={d}: unfair")
        dists = dom.distance(pts.coords[m.pairs[:, 0]], pts.coords[m.pairs[:, 1]])
        for t in np.quantile(dists, np.linspace(0.3, 0.995, 20)):
            if t_bad_separation_gap(pts, m, t) < t:
                problems.append(f"d={d}: t-bad separation broken at t={t:.3g}")
                break
    # full quadratic stability check at n ~ 2000
    dom = Domain(2, np.sqrt(1000.0), "torus")
    pts = merge(sample_poisson(dom, 1.0, RED, 7),
                sample_poisson(dom, 1.0, BLUE, 8))
    if find_unstable_pair(pts, stable_match(pts, "two-color")) is not None:
        problems.append("full n=2000 check: unstable pair")
    _verdict(3, not problems, "zero unstable pairs, exact fairness, t-bad "
             "separation on 20-point grid" if not problems else "; ".join(problems))


def test_criterion_4_two_color_tail_d1():
    dom = Domain(1, 2.0 ** 16, "torus")
    samples = []
    trial = 0
    while sum(len(s) for s in samples) < 1_000_000:
        red = sample_poisson(dom, 1.0, RED, 4000 + trial)
        blue = sample_poisson(dom, 1.0, BLUE, 5000 + trial)
        pts = merge(red, blue)
        s, _ = match_distances(pts, stable_match(pts, "two-color"))
        samples.append(s)
        trial += 1
    pool = np.concatenate(samples)
    exponent = _fitted_exponent(pool, window=(4.0, 256.0))
    ok = 0.40 <= exponent <= 0.65
    _verdict(4, ok, f"{len(pool)} samples, fitted exponent {exponent:.3f} "
             "in [0.40, 0.65] (target 0.5)")


def test_criterion_5_one_color_tails():
    dom1 = Domain(1, 2.0 ** 16, "torus")
    pool = []
    for trial in range(8):
        pts = sample_poisson(dom1, 1.0, RED, 6000 + trial)
        s, _ = match_distances(pts, stable_match(pts, "one-color"))
        pool.append(s)
    e1 = _fitted_exponent(np.concatenate(pool), dom1)

    dom2 = Domain(2, 1024.0, "torus")
    pts = sample_poisson(dom2, 1.0, RED, 6100)
    s, _ = match_distances(pts, stable_match(pts, "one-color"))
    e2 = _fitted_exponent(s, dom2)
    ok = 0.85 <= e1 <= 1.25 and 1.6 <= e2 <= 2.6
    _verdict(5, ok, f"d=1 exponent {e1:.3f} in [0.85, 1.25] (target 1); "
             f"d=2 exponent {e2:.3f} in [1.6, 2.6] (target 2)")


def test_criterion_6_adjacent_law():
    dom = Domain(1, 20_000.0, "torus")
    passes = 0
    for batch in range(100):
        pts = sample_poisson(dom, 1.0, RED, 8000 + batch)
        coin = int(np.random.default_rng(9000 + batch).integers(0, 2))
        m = adjacent_match_1d(pts, coin)
        gaps = dom.distance(pts.coords[m.pairs[:, 0]], pts.coords[m.pairs[:, 1]])
        _, p = ks_exponential(gaps[:10_000], rate=1.0)
        passes += p > 0.01
    _verdict(6, passes >= 95,
             f"KS vs Exp(1): p > 0.01 in {passes}/100 batches (need >= 95)")


def _expected_pos_surplus(mu):
    return mu * (ive(0, 2 * mu) + ive(1, 2 * mu))


def _surplus_ok(pooled_sum, pooled_obs, d):
    worst = 0.0
    for k in sorted(pooled_sum):
        if pooled_obs[k] < 100:
            continue
        want = _expected_pos_surplus(float(2 ** (k * d)))
        worst = max(worst, abs(pooled_sum[k] / pooled_obs[k] - want) / want)
    return worst


def test_criterion_7_hierarchical():
    details = []
    ok = True

    # d = 1: one full run for structure and tail, 64 pooled runs for surplus
    dom = Domain(1, 4096.0, "torus")
    red = sample_poisson(dom, 1.0, RED, 100)
    blue = sample_poisson(dom, 1.0, BLUE, 101)
    m, stats = hierarchical_match(red, blue, DyadicShifts.sample(12, 1, 102))
    pts = merge(red, blue)
    dists = dom.distance(pts.coords[m.pairs[:, 0]], pts.coords[m.pairs[:, 1]])
    bound1 = bool((dists <= 2.0 ** m.pair_level * np.sqrt(1)).all())
    ok &= bound1 and all(s.counts_consistent for s in stats)
    s1, _ = match_distances(pts, m)
    e1 = _fitted_exponent(s1, dom)
    ok &= e1 >= 0.5 - 0.15

    pooled_sum, pooled_obs = {}, {}
    for t in range(64):
        r = sample_poisson(dom, 1.0, RED, 200_000 + 3 * t)
        b = sample_poisson(dom, 1.0, BLUE, 200_000 + 3 * t + 1)
        _, st = hierarchical_match(r, b, DyadicShifts.sample(12, 1, 200_000 + 3 * t + 2))
        for s in st:
            pooled_sum[s.level] = pooled_sum.get(s.level, 0) + s.sum_pos_surplus
            pooled_obs[s.level] = pooled_obs.get(s.level, 0) + s.n_boxes
    worst1 = _surplus_ok(pooled_sum, pooled_obs, 1)
    ok &= worst1 <= 0.10
    details.append(f"d=1: bound={bound1}, exponent {e1:.3f} >= 0.35, "
                   f"surplus worst dev {worst1:.3f} <= 0.10")

    # d = 2: single full-size run (~3 minutes)
    dom = Domain(2, 4096.0, "torus")
    red = sample_poisson(dom, 1.0, RED, 200)
    blue = sample_poisson(dom, 1.0, BLUE, 201)
    m, stats = hierarchical_match(red, blue, DyadicShifts.sample(12, 2, 202))
    coords = np.concatenate([red.coords, blue.coords])
    del red, blue
    dists = dom.distance(coords[m.pairs[:, 0]], coords[m.pairs[:, 1]])
    del coords
    bound2 = bool((dists <= 2.0 ** m.pair_level * np.sqrt(2) + 1e-9).all())
    ok &= bound2 and all(s.counts_consistent for s in stats)
    e2 = _fitted_exponent(np.repeat(np.sort(dists), 2), dom)
    ok &= e2 >= 1.0 - 0.15
    worst2 = _surplus_ok({s.level: s.sum_pos_surplus for s in stats},
                         {s.level: s.n_boxes for s in stats}, 2)
    ok &= worst2 <= 0.10
    details.append(f"d=2: bound={bound2}, exponent {e2:.3f} >= 0.85, "
                   f"surplus worst dev {worst2:.3f} <= 0.10")
    _verdict(7, ok, "; ".join(details))


def _forest_dist_le_2(parent, a, b):
    pa, pb = parent[a], parent[b]
    return ((pa == b) | (pb == a)
            | ((pa >= 0) & (pa == pb))
            | ((pa >= 0) & (parent[pa] == b))
            | ((pb >= 0) & (parent[pb] == a)))


def test_criterion_8_forest_matchings():
    details = []
    ok = True
    for label, dom, margin, builder, seed in (
            ("msf d=2", Domain(2, 256.0, "box"), 16.0, minimal_spanning_forest, 300),
            ("cone d=3", Domain(3, 40.0, "box"), 6.0, cone_forest, 301)):
        pts = sample_poisson(dom, 1.0, RED, seed)
        forest = builder(pts)
        m = match_from_forest(forest)
        frac = float(np.mean(_forest_dist_le_2(forest.parent,
                                               m.pairs[:, 0], m.pairs[:, 1])))
        s, _ = match_distances(pts, m, interior_margin=margin)
        r_star = 4.0   # 4 * intensity^(-1/d) at intensity 1
        surv = float((s > r_star).mean())
        ok &= frac == 1.0 and surv < 1e-2
        details.append(f"{label}: forest-dist<=2 frac {frac:.4f} (need 1.0), "
                       f"P(X>4)={surv:.2e} (< 1e-2, n={len(s)})")
    _verdict(8, ok, "; ".join(details))


def test_criterion_9_min_length_oracles():
    dom = Domain(2, 8.0, "torus")
    from itertools import permutations
    bad = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 8))
        red = sample_binomial(dom, n, RED, 40_000 + seed)
        blue = sample_binomial(dom, n, BLUE, 50_000 + seed)
        _, cost = min_length_bipartite(red.coords, blue.coords, dom)
        dm = pairwise_distances(dom, red.coords, blue.coords)
        best = min(float(dm[np.arange(n), list(p)].sum())
                   for p in permutations(range(n)))
        bad += abs(cost - best) > 1e-9

    def rec(dm, idx):
        if not idx:
            return 0.0
        return min(dm[idx[0], idx[p]] + rec(dm, idx[1:p] + idx[p + 1:])
                   for p in range(1, len(idx)))

    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        n = 2 * int(rng.integers(1, 6))
        pts = sample_binomial(dom, n, RED, 60_000 + seed)
        _, cost = min_length_one_color_exact(pts.coords, dom)
        dm = pairwise_distances(dom, pts.coords, pts.coords)
        bad += abs(cost - rec(dm, tuple(range(n)))) > 1e-9
    _verdict(9, bad == 0, f"200 brute-force comparisons, {bad} cost mismatches "
             "(require 0, exact equality)")


def test_criterion_10_monotone_growth_diagnostic():
    def trend(mode, power, seedbase):
        means = []
        for e in range(8, 15):
            dom = Domain(1, float(2 ** e), "torus")
            pool = []
            for t in range(16):
                if mode == "two-color":
                    pts = merge(
                        sample_poisson(dom, 1.0, RED, seedbase + e * 100 + t),
                        sample_poisson(dom, 1.0, BLUE, seedbase + e * 100 + t + 50))
                else:
                    pts = sample_poisson(dom, 1.0, RED, seedbase + e * 100 + t)
                s, _ = match_distances(pts, stable_match(pts, mode))
                pool.append(s)
            means.append(float((np.concatenate(pool) ** power).mean()))
        return means

    details = []
    ok = True
    for mode, power, sb in (("two-color", 0.5, 11_000), ("one-color", 1.0, 12_000)):
        means = trend(mode, power, sb)
        incs = [b > a for a, b in zip(means, means[1:])]
        # asserted over the first five doublings; the sixth is reported
        n_up = sum(incs[:5])
        ok &= n_up >= 4
        table = " ".join(f"2^{8+i}:{v:.3f}" for i, v in enumerate(means))
        details.append(f"{mode} mean X^{power}: {table} "
                       f"({n_up}/5 doublings increasing, need >= 4)")
    _verdict(10, ok, "; ".join(details))
