import numpy as np
import pytest

from poismatch import Domain, SpatialIndex, build_index, sample_binomial


@pytest.mark.parametrize("boundary", ["torus", "box"])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_nearest_agrees_with_linear_scan(boundary, d):
    dom = Domain(d, 8.0, boundary)
    for seed in range(40):
        pts = sample_binomial(dom, 30, seed=seed)
        idx = SpatialIndex(pts)
        rng = np.random.default_rng(seed)
        for _ in range(5):
            q = rng.random(d) * 8.0
            assert idx.nearest(q) == idx.nearest_bruteforce(q)


def test_nearest_after_deletions():
    dom = Domain(2, 8.0, "torus")
    pts = sample_binomial(dom, 50, seed=7)
    idx = SpatialIndex(pts)
    rng = np.random.default_rng(7)
    for i in rng.permutation(50)[:45]:
        idx.delete(int(i))
        q = rng.random(2) * 8.0
        assert idx.nearest(q) == idx.nearest_bruteforce(q)


def test_nearest_none_when_empty():
    dom = Domain(1, 8.0, "torus")
    pts = sample_binomial(dom, 3, seed=1)
    idx = SpatialIndex(pts)
    for i in range(3):
        idx.delete(i)
    assert idx.nearest(np.array([1.0])) is None


def test_exclude_and_where():
    dom = Domain(1, 8.0, "torus")
    pts = sample_binomial(dom, 10, seed=2)
    idx = build_index(pts)
    q = pts.coords[0]
    assert idx.nearest(q) == 0
    assert idx.nearest(q, exclude=0) != 0
    where = np.zeros(10, dtype=bool)
    where[4] = True
    assert idx.nearest(q, where=where) == 4


def test_wraparound_query():
    dom = Domain(1, 8.0, "torus")
    pts = type(sample_binomial(dom, 1, seed=0))(dom, np.array([[7.9]]),
                                                np.zeros(1), None)
    idx = SpatialIndex(pts, cell_size=1.0)
    assert idx.nearest(np.array([0.05])) == 0


def test_bad_cell_size():
    dom = Domain(1, 8.0)
    pts = sample_binomial(dom, 3, seed=0)
    with pytest.raises(ValueError):
        SpatialIndex(pts, cell_size=0.0)
