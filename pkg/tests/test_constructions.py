import numpy as np
import pytest
from scipy.special import ive

from poismatch import (BLUE, CapabilityError, ColoredPointSet, Domain,
                       DyadicShifts, RED, adjacent_match_1d, cone_forest,
                       hierarchical_match, k_box_id, match_from_forest, merge,
                       minimal_spanning_forest, pairwise_distances,
                       read_forest_csv, sample_binomial, sample_poisson,
                       write_forest_csv)
from poismatch.constructions import Forest


def expected_pos_surplus(mu: float) -> float:
    """E(R - B)^+ for independent R, B ~ Poisson(mu)."""
    return mu * (ive(0, 2 * mu) + ive(1, 2 * mu))


# ---------------------------------------------------------------------------
# dyadic boxes

def test_shifts_validation_and_offset():
    with pytest.raises(ValueError):
        DyadicShifts(np.array([[0, 2]]))
    sh = DyadicShifts(np.array([[1, 0], [0, 1], [1, 1]]))
    assert np.allclose(sh.offset(0), [0, 0])
    assert np.allclose(sh.offset(1), [1, 0])
    assert np.allclose(sh.offset(3), [1 + 4, 2 + 4])


def test_k_box_id_nesting():
    # a level-(k+1) box contains exactly the level-k boxes predicted by the
    # shift recursion: box ids at level k+1 are a function of ids at level k
    rng = np.random.default_rng(0)
    sh = DyadicShifts.sample(4, 2, rng)
    pts = rng.random((500, 2)) * 16.0
    for k in range(4):
        lo = k_box_id(pts, k, sh, 16.0)
        hi = k_box_id(pts, k + 1, sh, 16.0)
        key_lo = lo[:, 0] * 1000 + lo[:, 1]
        key_hi = hi[:, 0] * 1000 + hi[:, 1]
        # same low box -> same high box
        for key in np.unique(key_lo):
            assert len(np.unique(key_hi[key_lo == key])) == 1


def test_k_box_top_level_is_single_box():
    sh = DyadicShifts.sample(3, 1, 1)
    pts = np.linspace(0, 7.99, 50)[:, None]
    ids = k_box_id(pts, 3, sh, 8.0)
    assert len(np.unique(ids)) == 1


def test_hierarchical_structure_small():
    dom = Domain(1, 16.0, "torus")
    for seed in range(20):
        red = sample_poisson(dom, 1.0, RED, seed)
        blue = sample_poisson(dom, 1.0, BLUE, 1000 + seed)
        if len(red) == 0 or len(blue) == 0:
            continue
        sh = DyadicShifts.sample(4, 1, 2000 + seed)
        m, stats = hierarchical_match(red, blue, sh)
        pts = merge(red, blue)
        m.validate_cover(len(pts))
        # full cardinality: leftovers only from the global color imbalance
        assert len(m.unmatched) == abs(len(red) - len(blue))
        # every pair fits in its level box
        dists = dom.distance(pts.coords[m.pairs[:, 0]], pts.coords[m.pairs[:, 1]])
        assert (dists <= 2.0 ** m.pair_level * np.sqrt(1) + 1e-12).all()
        # pairs are red-blue
        assert (pts.colors[m.pairs[:, 0]] != pts.colors[m.pairs[:, 1]]).all()
        assert all(s.counts_consistent for s in stats)


def test_hierarchical_level_zero_surplus_identity():
    dom = Domain(2, 8.0, "torus")
    red = sample_poisson(dom, 2.0, RED, 5)
    blue = sample_poisson(dom, 2.0, BLUE, 6)
    sh = DyadicShifts.sample(3, 2, 7)
    _, stats = hierarchical_match(red, blue, sh)
    s0 = stats[0]
    # net surplus telescopes to the global imbalance at every level
    for s in stats:
        assert s.sum_pos_surplus - s.sum_neg_surplus == len(red) - len(blue)
    assert s0.n_boxes == 64


def test_surplus_formula_against_monte_carlo():
    rng = np.random.default_rng(42)
    for mu in (0.5, 1.0, 4.0, 16.0):
        r = rng.poisson(mu, size=400_000)
        b = rng.poisson(mu, size=400_000)
        mc = np.maximum(r - b, 0).mean()
        want = expected_pos_surplus(mu)
        se = np.maximum(r - b, 0).std() / np.sqrt(400_000)
        assert abs(mc - want) < 5 * se


def test_hierarchical_requires_torus_power_of_two():
    dom = Domain(1, 12.0, "torus")
    red = sample_binomial(dom, 5, RED, 1)
    blue = sample_binomial(dom, 5, BLUE, 2)
    with pytest.raises(ValueError):
        hierarchical_match(red, blue, DyadicShifts.sample(4, 1, 3))
    box = Domain(1, 16.0, "box")
    with pytest.raises(CapabilityError):
        hierarchical_match(sample_binomial(box, 5, RED, 1),
                           sample_binomial(box, 5, BLUE, 2),
                           DyadicShifts.sample(4, 1, 3))


# ---------------------------------------------------------------------------
# adjacent matching

def test_adjacent_pairs_are_adjacent():
    dom = Domain(1, 64.0, "torus")
    for seed in range(10):
        pts = sample_poisson(dom, 1.0, RED, seed)
        if len(pts) < 2:
            continue
        for coin in (0, 1):
            m = adjacent_match_1d(pts, coin)
            xs = pts.coords[:, 0]
            for a, b in m.pairs:
                lo, hi = sorted([xs[a], xs[b]])
                inner = ((xs > lo) & (xs < hi)).sum()
                # partners are adjacent on the circle: nothing strictly
                # between them on one of the two arcs
                outer = len(pts) - 2 - inner
                assert inner == 0 or outer == 0


def test_adjacent_coins_differ():
    dom = Domain(1, 32.0, "torus")
    pts = sample_binomial(dom, 10, RED, 3)
    m0 = adjacent_match_1d(pts, 0)
    m1 = adjacent_match_1d(pts, 1)
    assert not np.array_equal(np.sort(m0.pairs, axis=1), np.sort(m1.pairs, axis=1))
    assert len(m0.unmatched) == 0 and len(m1.unmatched) == 0


def test_adjacent_odd_count_leftover():
    dom = Domain(1, 32.0, "torus")
    pts = sample_binomial(dom, 9, RED, 4)
    m = adjacent_match_1d(pts, 0)
    assert len(m.pairs) == 4 and len(m.unmatched) == 1


def test_adjacent_needs_1d_torus():
    with pytest.raises(CapabilityError):
        adjacent_match_1d(sample_binomial(Domain(2, 8.0, "torus"), 4, RED, 1), 0)
    with pytest.raises(CapabilityError):
        adjacent_match_1d(sample_binomial(Domain(1, 8.0, "box"), 4, RED, 1), 0)


# ---------------------------------------------------------------------------
# forests

def _prim_mst_cost(coords, dom):
    n = len(coords)
    dm = pairwise_distances(dom, coords, coords)
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = dm[0].copy()
    cost = 0.0
    for _ in range(n - 1):
        best[in_tree] = np.inf
        j = int(np.argmin(best))
        cost += float(best[j])
        in_tree[j] = True
        best = np.minimum(best, dm[j])
    return cost


def test_msf_total_weight_matches_prim():
    dom = Domain(2, 8.0, "box")
    for seed in range(15):
        pts = sample_binomial(dom, 40, RED, seed)
        f = minimal_spanning_forest(pts)
        edges = [(v, int(p)) for v, p in enumerate(f.parent) if p >= 0]
        assert len(edges) == 39
        total = sum(float(dom.distance(pts.coords[a], pts.coords[b]))
                    for a, b in edges)
        assert total == pytest.approx(_prim_mst_cost(pts.coords, dom), abs=1e-9)


def test_msf_rejects_torus():
    pts = sample_binomial(Domain(2, 8.0, "torus"), 10, RED, 1)
    with pytest.raises(CapabilityError):
        minimal_spanning_forest(pts)


def test_cone_forest_parent_is_least_forward():
    dom = Domain(3, 8.0, "box")
    pts = sample_binomial(dom, 200, RED, 9)
    f = cone_forest(pts)
    coords = pts.coords
    for v in range(len(pts)):
        ahead = coords[:, 0] - coords[v, 0]
        lateral = np.linalg.norm(coords[:, 1:] - coords[v, 1:], axis=1)
        in_cone = np.flatnonzero(ahead > lateral)
        if len(in_cone) == 0:
            assert f.parent[v] == -1
        else:
            want = in_cone[np.argmin(coords[in_cone, 0])]
            assert f.parent[v] == want


def _forest_distance_at_most_two(forest, a, b):
    pa, pb = forest.parent[a], forest.parent[b]
    return (pa == b or pb == a
            or (pa >= 0 and pa == pb)
            or (pa >= 0 and forest.parent[pa] == b)
            or (pb >= 0 and forest.parent[pb] == a))


@pytest.mark.parametrize("builder,dom", [
    (minimal_spanning_forest, Domain(2, 16.0, "box")),
    (cone_forest, Domain(3, 6.0, "box")),
])
def test_match_from_forest_properties(builder, dom):
    for seed in range(8):
        pts = sample_poisson(dom, 1.0, RED, seed)
        if len(pts) < 3:
            continue
        f = builder(pts)
        m = match_from_forest(f)
        m.validate_cover(len(pts))
        for a, b in m.pairs:
            assert _forest_distance_at_most_two(f, a, b)
        comp = f.component_of()
        leftovers = np.bincount(comp[m.unmatched], minlength=len(pts))
        assert leftovers.max(initial=0) <= 1


def test_match_from_forest_star_and_path():
    # star: center plus 4 leaves -> 2 pairs, center matched iff odd leaves
    star = Forest(np.array([-1, 0, 0, 0, 0]),
                  [np.array([1, 2, 3, 4])] + [np.empty(0, dtype=np.int64)] * 4,
                  np.array([0]))
    m = match_from_forest(star)
    assert len(m.pairs) == 2 and np.array_equal(m.unmatched, [0])
    # path 0-1-2-3: twig iteration pairs (2,3) then (0,1)
    path = Forest(np.array([-1, 0, 1, 2]),
                  [np.array([1]), np.array([2]), np.array([3]),
                   np.empty(0, dtype=np.int64)],
                  np.array([0]))
    m = match_from_forest(path)
    assert len(m.pairs) == 2 and len(m.unmatched) == 0


def test_forest_csv_round_trip(tmp_path):
    pts = sample_binomial(Domain(2, 8.0, "box"), 25, RED, 3)
    f = minimal_spanning_forest(pts)
    path = tmp_path / "f.csv"
    write_forest_csv(path, f)
    assert path.read_text().splitlines()[0] == "child,parent"
    back = read_forest_csv(path)
    assert np.array_equal(back.parent, f.parent)
    assert np.array_equal(back.roots, f.roots)
