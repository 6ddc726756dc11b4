"""The unique stable partial matching via iterated mutually-closest pairs.

``stable_match`` runs literal rounds: every round matches all mutually
closest potential-partner pairs among the surviving points, then removes
them.  ``match_radii_timeline`` is an independent realization of the same
matching via ball growth (globally closest live pair first); the two are
cross-checked in the test suite.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import BLUE, RED, ColoredPointSet
from .grid import SpatialIndex

ONE_COLOR = "one-color"
TWO_COLOR = "two-color"


class MatchingError(RuntimeError):
    """A matching round made no progress while potential partners remained."""


@dataclass
class Matching:
    """Index pairs plus unmatched leftovers over one point set.

    ``round_matched[i]`` is the round at which point ``i`` was matched
    (0 = first pass) and -1 for unmatched points.  ``pair_level`` is set by
    the hierarchical construction only.
    """

    pairs: np.ndarray            # (m, 2) int
    unmatched: np.ndarray        # (u,) int
    mode: str
    round_matched: np.ndarray | None = None
    pair_level: np.ndarray | None = None
    pair_radius: np.ndarray | None = None

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        self.unmatched = np.asarray(self.unmatched, dtype=np.int64).reshape(-1)

    @property
    def n_points(self) -> int:
        return 2 * len(self.pairs) + len(self.unmatched)

    def partner_array(self, n: int | None = None) -> np.ndarray:
        """Partner index per point, -1 where unmatched."""
        n = self.n_points if n is None else n
        partner = np.full(n, -1, dtype=np.int64)
        partner[self.pairs[:, 0]] = self.pairs[:, 1]
        partner[self.pairs[:, 1]] = self.pairs[:, 0]
        return partner

    def validate_cover(self, n: int) -> None:
        seen = np.concatenate([self.pairs.ravel(), self.unmatched])
        if len(seen) != n or len(np.unique(seen)) != n:
            raise ValueError("pairs and unmatched do not partition the point set")


def _query_tree(tree, coords, k):
    d, j = tree.query(coords, k=k)
    if k == 1:
        return d, j
    return d[:, -1], j[:, -1]


def _boxsize(points: ColoredPointSet):
    return points.domain.L if points.domain.boundary == "torus" else None


def stable_match(points: ColoredPointSet, mode: str = TWO_COLOR,
                 max_rounds: int | None = None) -> Matching:
    """Unique stable partial matching of a finite point set.

    Two-color mode matches red to blue; one-color mode matches the whole set
    to itself.  Raises ``MatchingError`` if a round matches nothing while
    unmatched potential partners remain (only possible for degenerate ties).
    """
    n = len(points)
    if mode == TWO_COLOR:
        return _stable_two_color(points, max_rounds)
    if mode == ONE_COLOR:
        return _stable_one_color(points, max_rounds)
    raise ValueError(f"unknown mode {mode!r}")


def _stable_two_color(points, max_rounds):
    coords = points.coords
    boxsize = _boxsize(points)
    red = points.red
    blue = points.blue
    pairs = []
    rounds = np.full(len(points), -1, dtype=np.int64)
    limit = max_rounds if max_rounds is not None else max(1, len(points) // 2 + 1)
    rnd = 0
    while len(red) and len(blue):
        if rnd >= limit:
            raise MatchingError(f"no convergence after {rnd} rounds "
                                f"({len(red)} red, {len(blue)} blue left)")
        rtree = cKDTree(coords[red], boxsize=boxsize)
        btree = cKDTree(coords[blue], boxsize=boxsize)
        _, nb = _query_tree(btree, coords[red], 1)     # nearest blue per red
        _, nr = _query_tree(rtree, coords[blue], 1)    # nearest red per blue
        mutual = nr[nb] == np.arange(len(red))
        if not mutual.any():
            raise MatchingError("round made no progress; check general position / ties")
        ri = np.nonzero(mutual)[0]
        bi = nb[ri]
        pairs.append(np.column_stack([red[ri], blue[bi]]))
        rounds[red[ri]] = rnd
        rounds[blue[bi]] = rnd
        rkeep = np.ones(len(red), dtype=bool)
        rkeep[ri] = False
        bkeep = np.ones(len(blue), dtype=bool)
        bkeep[bi] = False
        red = red[rkeep]
        blue = blue[bkeep]
        rnd += 1
    pairs = np.concatenate(pairs) if pairs else np.empty((0, 2), dtype=np.int64)
    unmatched = np.concatenate([red, blue])
    return Matching(pairs, np.sort(unmatched), TWO_COLOR, round_matched=rounds)


def _stable_one_color(points, max_rounds):
    coords = points.coords
    boxsize = _boxsize(points)
    live = np.arange(len(points))
    pairs = []
    rounds = np.full(len(points), -1, dtype=np.int64)
    limit = max_rounds if max_rounds is not None else max(1, len(points) // 2 + 1)
    rnd = 0
    while len(live) > 1:
        if rnd >= limit:
            raise MatchingError(f"no convergence after {rnd} rounds ({len(live)} left)")
        tree = cKDTree(coords[live], boxsize=boxsize)
        _, nn = _query_tree(tree, coords[live], 2)     # [:, 0] is the point itself
        idx = np.arange(len(live))
        mutual = (nn[nn] == idx) & (idx < nn)          # keep each pair once
        if not mutual.any():
            raise MatchingError("round made no progress; check general position / ties")
        ai = np.nonzero(mutual)[0]
        bi = nn[ai]
        pairs.append(np.column_stack([live[ai], live[bi]]))
        rounds[live[ai]] = rnd
        rounds[live[bi]] = rnd
        keep = np.ones(len(live), dtype=bool)
        keep[ai] = False
        keep[bi] = False
        live = live[keep]
        rnd += 1
    pairs = np.concatenate(pairs) if pairs else np.empty((0, 2), dtype=np.int64)
    return Matching(pairs, live, ONE_COLOR, round_matched=rounds)


def write_matching_csv(path, points: ColoredPointSet, matching: Matching) -> None:
    """Rows ``i,j,dist`` plus a ``# unmatched=<list>`` footer."""
    dists = points.domain.distance(points.coords[matching.pairs[:, 0]],
                                   points.coords[matching.pairs[:, 1]])
    with open(path, "w") as fh:
        fh.write("i,j,dist\n")
        for (i, j), dd in zip(matching.pairs, dists):
            fh.write(f"{i},{j},{float(dd)!r}\n")
        fh.write("# unmatched=" + ",".join(str(u) for u in matching.unmatched) + "\n")


def read_matching_csv(path, mode: str = TWO_COLOR) -> Matching:
    pairs = []
    unmatched = np.empty(0, dtype=np.int64)
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "i,j,dist":
            raise ValueError(f"unexpected matching CSV header {header!r}")
        for line in fh:
            line = line.strip()
            if line.startswith("# unmatched="):
                body = line.split("=", 1)[1]
                if body:
                    unmatched = np.array([int(v) for v in body.split(",")],
                                         dtype=np.int64)
            elif line:
                i, j, _ = line.split(",")
                pairs.append((int(i), int(j)))
    return Matching(np.array(pairs, dtype=np.int64).reshape(-1, 2), unmatched, mode)


def _potential_partner_mask(points: ColoredPointSet, mode: str, i: int) -> np.ndarray:
    if mode == ONE_COLOR:
        mask = np.ones(len(points), dtype=bool)
        mask[i] = False
        return mask
    return points.colors != points.colors[i]


def find_unstable_pair(points: ColoredPointSet, matching: Matching,
                       block: int = 2048):
    """Some pair violating stability, or None.

    A pair (x, y) of potential partners is unstable iff
    ``d(x, y) < min(d(x, partner(x)), d(y, partner(y)))`` with strict
    inequality, and unmatched points count as matched at infinity.
    O(n^2) blockwise scan.
    """
    n = len(points)
    partner = matching.partner_array(n)
    radius = np.full(n, np.inf)
    matched = partner >= 0
    radius[matched] = points.domain.distance(points.coords[matched],
                                             points.coords[partner[matched]])
    coords = points.coords
    two_color = matching.mode == TWO_COLOR
    for i0 in range(0, n, block):
        i1 = min(n, i0 + block)
        for j0 in range(i0, n, block):
            j1 = min(n, j0 + block)
            delta = np.abs(coords[i0:i1, None, :] - coords[None, j0:j1, :])
            if points.domain.boundary == "torus":
                delta = np.minimum(delta, points.domain.L - delta)
            dist = np.sqrt(np.sum(delta * delta, axis=-1))
            cap = np.minimum(radius[i0:i1, None], radius[None, j0:j1])
            bad = dist < cap
            ii, jj = np.nonzero(bad)
            for a, b in zip(ii, jj):
                x, y = i0 + int(a), j0 + int(b)
                if x == y:
                    continue
                if two_color and points.colors[x] == points.colors[y]:
                    continue
                return (x, y) if x < y else (y, x)
    return None


def match_radii_timeline(points: ColoredPointSet, mode: str = TWO_COLOR) -> Matching:
    """Stable matching by ball growth: match the closest live pair, repeat.

    Independent of ``stable_match`` (grid index + lazy heap instead of
    KD-tree rounds).  Returns pairs in nondecreasing distance order with
    ``pair_radius`` = touch time = half the pair distance.  Round numbers are
    reconstructed from blocker relations so the output is interchangeable
    with ``stable_match``.
    """
    n = len(points)
    index = SpatialIndex(points)
    static = SpatialIndex(points)          # never deleted from; for blocker lookups
    coords = points.coords
    dom = points.domain

    def nn_of(i):
        where = _potential_partner_mask(points, mode, i) & index.alive
        if not where.any():
            return None
        return index.nearest(coords[i], exclude=i, where=where)

    heap = []
    for i in range(n):
        j = nn_of(i)
        if j is not None:
            heapq.heappush(heap, (float(dom.distance(coords[i], coords[j])), i, j))

    pairs, radii, pair_round = [], [], []
    round_matched = np.full(n, -1, dtype=np.int64)
    matched = np.zeros(n, dtype=bool)
    while heap:
        dij, i, j = heapq.heappop(heap)
        if matched[i]:
            continue
        if matched[j]:
            j2 = nn_of(i)
            if j2 is not None:
                heapq.heappush(heap, (float(dom.distance(coords[i], coords[j2])), i, j2))
            continue
        # smallest live entry is a mutually closest pair
        rnd = 0
        for p in (i, j):
            mask = _potential_partner_mask(points, mode, p)
            mask[i] = mask[j] = False
            for z in np.nonzero(mask)[0]:
                if matched[z] and dom.distance(coords[p], coords[z]) < dij:
                    rnd = max(rnd, int(round_matched[z]) + 1)
        matched[i] = matched[j] = True
        round_matched[i] = round_matched[j] = rnd
        index.delete(i)
        index.delete(j)
        pairs.append((i, j) if i < j else (j, i))
        radii.append(dij / 2.0)
        pair_round.append(rnd)
    unmatched = np.nonzero(~matched)[0]
    pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return Matching(pairs, unmatched, mode,
                    round_matched=round_matched,
                    pair_radius=np.array(radii, dtype=float))
