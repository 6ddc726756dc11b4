"""Explicit non-stable matching schemes.

* hierarchical dyadic-box matching (randomly shifted boxes, exact per-box
  assignment, ascending levels),
* adjacent randomized matching on the circle (d=1),
* minimal-spanning-forest matching (d=2) and cone-forest matching (d>=3)
  through the generic match-from-forest procedure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import minimum_spanning_tree as _sparse_mst
from scipy.spatial import Delaunay, QhullError

from .geometry import BLUE, RED, ColoredPointSet, Domain, merge, pairwise_distances
from .oracles import CapabilityError
from .stable import Matching, ONE_COLOR, TWO_COLOR


# ---------------------------------------------------------------------------
# dyadic boxes

@dataclass(frozen=True)
class DyadicShifts:
    """Per-level random shifts tau_k in {0,1}^d; level-k boxes are the cubes
    [0, 2^k)^d + 2^k z + sum_{i<k} 2^i tau_i."""

    taus: np.ndarray           # (K, d) of 0/1

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=np.int64)
        if taus.ndim != 2 or not np.isin(taus, (0, 1)).all():
            raise ValueError("shifts must be a (K, d) array of 0/1")
        object.__setattr__(self, "taus", taus)

    @property
    def levels(self) -> int:
        return len(self.taus)

    @classmethod
    def sample(cls, levels: int, d: int, rng) -> "DyadicShifts":
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        return cls(rng.integers(0, 2, size=(levels, d)))

    def offset(self, k: int) -> np.ndarray:
        """Cumulative shift sum_{i<k} 2^i tau_i at level k."""
        if k == 0:
            return np.zeros(self.taus.shape[1])
        weights = 2 ** np.arange(k)
        return (self.taus[:k] * weights[:, None]).sum(axis=0).astype(float)


def _levels_of(L: float) -> int:
    K = int(round(np.log2(L)))
    if 2 ** K != L:
        raise ValueError(f"torus side must be a power of two, got {L}")
    return K


def k_box_id(x, k: int, shifts: DyadicShifts, L: float) -> np.ndarray:
    """Integer box coordinates of point(s) x at level k (torus side L = 2^K)."""
    K = _levels_of(L)
    if not 0 <= k <= K:
        raise ValueError(f"level {k} outside 0..{K}")
    if shifts.levels < k:
        raise ValueError("not enough shift levels")
    cell = float(2 ** k)
    n_axis = int(L) // int(cell)
    x = np.asarray(x, dtype=float)
    return np.floor((x - shifts.offset(k)) / cell).astype(np.int64) % n_axis


@dataclass
class LevelStats:
    """Aggregate per-level bookkeeping of the hierarchical matcher."""

    level: int
    n_boxes: int                      # total boxes at this level (incl. empty)
    n_pairs: int                      # pairs matched at this stage
    sum_pos_surplus: int              # sum over boxes of (reds - blues)^+
    sum_neg_surplus: int              # sum over boxes of (blues - reds)^+
    counts_consistent: bool           # leftover == |raw red - raw blue| per box

    @property
    def mean_pos_surplus(self) -> float:
        return self.sum_pos_surplus / self.n_boxes


def _match_boxes(coords, colors, live_idx, keys, n_boxes, domain):
    """Max-cardinality min-length matching within every box; returns pairs.

    ``keys`` are flat box ids per live point.  Vectorized fast paths handle
    the overwhelmingly common one-vs-one and one-vs-many boxes; the generic
    case goes through the exact assignment solver.
    """
    order = np.argsort(keys, kind="stable")
    skeys = keys[order]
    sidx = live_idx[order]
    del order
    starts = np.flatnonzero(np.r_[True, np.diff(skeys) > 0])
    sizes = np.diff(np.r_[starts, len(skeys)])
    del skeys
    scol = colors[sidx]
    reds = np.add.reduceat((scol == RED).astype(np.int64), starts)
    blues = sizes - reds

    pair_r, pair_b = [], []

    # fast path: exactly one red and one blue
    g11 = np.flatnonzero((reds == 1) & (blues == 1))
    if len(g11):
        a = sidx[starts[g11]]
        b = sidx[starts[g11] + 1]
        swap = colors[a] != RED
        r = np.where(swap, b, a)
        bl = np.where(swap, a, b)
        pair_r.append(r)
        pair_b.append(bl)

    # fast path: a single minority point against several of the other color
    gmin1 = np.flatnonzero(((reds == 1) & (blues >= 2)) | ((blues == 1) & (reds >= 2)))
    if len(gmin1):
        minority_color = np.where(reds[gmin1] == 1, RED, BLUE)
        member_g = np.repeat(np.arange(len(gmin1)), sizes[gmin1])
        member_pos = (np.repeat(starts[gmin1], sizes[gmin1])
                      + _within_group_offsets(sizes[gmin1]))
        member_idx = sidx[member_pos]
        is_single = colors[member_idx] == minority_color[member_g]
        single_idx = np.empty(len(gmin1), dtype=np.int64)
        single_idx[member_g[is_single]] = member_idx[is_single]
        maj_g = member_g[~is_single]
        maj_idx = member_idx[~is_single]
        dist = domain.distance(coords[maj_idx], coords[single_idx[maj_g]])
        first = np.flatnonzero(np.r_[True, np.diff(maj_g) > 0])
        best = np.lexsort((dist, maj_g))
        # lexsort groups by maj_g then distance; take the first entry per group
        chosen = maj_idx[best[first]]
        is_red_single = minority_color == RED
        pair_r.append(np.where(is_red_single, single_idx, chosen))
        pair_b.append(np.where(is_red_single, chosen, single_idx))

    # generic boxes: exact assignment
    generic = np.flatnonzero((reds >= 2) & (blues >= 2))
    for g in generic:
        members = sidx[starts[g]:starts[g] + sizes[g]]
        rmask = colors[members] == RED
        ridx = members[rmask]
        bidx = members[~rmask]
        costs = pairwise_distances(domain, coords[ridx], coords[bidx])
        ri, bi = linear_sum_assignment(costs)
        pair_r.append(ridx[ri])
        pair_b.append(bidx[bi])

    if pair_r:
        pr = np.concatenate(pair_r)
        pb = np.concatenate(pair_b)
    else:
        pr = pb = np.empty(0, dtype=np.int64)
    return pr, pb, reds, blues


def _within_group_offsets(sizes):
    total = int(sizes.sum())
    out = np.ones(total, dtype=np.int64)
    out[0] = 0
    boundaries = np.cumsum(sizes)[:-1]
    out[boundaries] = -(sizes[:-1] - 1)
    return np.cumsum(out)


def hierarchical_match(red: ColoredPointSet, blue: ColoredPointSet,
                       shifts: DyadicShifts):
    """Hierarchical dyadic-box matching on a torus of side 2^K.

    At each level k = 0..K the surviving red/blue points inside every k-box
    are matched by a maximum-cardinality minimum-length assignment, matched
    points are removed, and the level ascends.  Index convention of the
    returned Matching: red points first, then blue (use ``geometry.merge``).

    Returns ``(matching, level_stats)``; every matched pair lies inside one
    k-box, so its distance is at most 2^k * sqrt(d).
    """
    domain = red.domain
    if domain.boundary != "torus":
        raise CapabilityError("hierarchical matching is defined on the torus")
    K = _levels_of(domain.L)
    if shifts.levels < K:
        raise ValueError(f"need {K} shift levels, got {shifts.levels}")
    points = merge(red, blue)
    coords = points.coords
    colors = points.colors
    n = len(points)
    live = np.ones(n, dtype=bool)
    rounds = np.full(n, -1, dtype=np.int64)
    all_pairs, all_levels = [], []
    stats = []

    for k in range(K + 1):
        n_axis = int(domain.L) // (2 ** k)
        n_boxes = n_axis ** domain.d
        # flat box key accumulated axis by axis; avoids an (n, d) id array,
        # which matters at tens of millions of points
        cell = float(2 ** k)
        off = shifts.offset(k)
        keys_all = np.zeros(n, dtype=np.int64)
        for axis in range(domain.d):
            ids = np.floor((coords[:, axis] - off[axis]) / cell).astype(np.int64)
            ids %= n_axis
            keys_all *= n_axis
            keys_all += ids
        del ids

        live_idx = np.flatnonzero(live)
        keys = keys_all[live_idx]
        pr, pb, reds, blues = _match_boxes(coords, colors, live_idx, keys,
                                           n_boxes, domain)
        del live_idx, keys, reds, blues
        live[pr] = False
        live[pb] = False
        rounds[pr] = k
        rounds[pb] = k
        if len(pr):
            all_pairs.append(np.column_stack([pr, pb]))
            all_levels.append(np.full(len(pr), k, dtype=np.int64))
        n_new_pairs = len(pr)
        del pr, pb

        # leftover-vs-raw-count identity: within every box the leftover
        # count after this stage must equal |raw reds - raw blues|
        is_red = colors == RED
        net = (np.bincount(keys_all[is_red], minlength=n_boxes)
               - np.bincount(keys_all[~is_red], minlength=n_boxes))
        left_r = np.bincount(keys_all[live & is_red], minlength=n_boxes)
        left_b = np.bincount(keys_all[live & ~is_red], minlength=n_boxes)
        consistent = bool(np.array_equal(left_r - left_b, net)
                          and not np.minimum(left_r, left_b).any())
        del left_r, left_b, is_red, keys_all
        stats.append(LevelStats(
            level=k,
            n_boxes=n_boxes,
            n_pairs=n_new_pairs,
            sum_pos_surplus=int(np.maximum(net, 0).sum()),
            sum_neg_surplus=int(np.maximum(-net, 0).sum()),
            counts_consistent=consistent,
        ))
        del net

    unmatched = np.flatnonzero(live)
    leftover_colors = colors[unmatched]
    if len(unmatched) and leftover_colors.min() != leftover_colors.max():
        raise AssertionError("points of both colors left after the top level")
    pairs = np.concatenate(all_pairs) if all_pairs else np.empty((0, 2), dtype=np.int64)
    levels = np.concatenate(all_levels) if all_levels else np.empty(0, dtype=np.int64)
    matching = Matching(pairs, unmatched, TWO_COLOR,
                        round_matched=rounds, pair_level=levels)
    return matching, stats


# ---------------------------------------------------------------------------
# adjacent matching on the circle (d = 1)

def adjacent_match_1d(points: ColoredPointSet, coin: int) -> Matching:
    """One of the two adjacent matchings of a circle, selected by a fair bit.

    Every matched pair is adjacent (no point strictly between the partners).
    With an odd point count the single point left without an adjacent partner
    is reported unmatched.
    """
    if points.domain.d != 1 or points.domain.boundary != "torus":
        raise CapabilityError("adjacent matching needs a 1-dimensional torus")
    if coin not in (0, 1):
        raise ValueError("coin must be 0 or 1")
    n = len(points)
    if n < 2:
        raise ValueError("need at least two points")
    order = np.argsort(points.coords[:, 0], kind="stable")
    m = n // 2
    a = order[(2 * np.arange(m) + coin) % n]
    b = order[(2 * np.arange(m) + 1 + coin) % n]
    pairs = np.column_stack([a, b])
    if n % 2:
        unmatched = np.array([order[(2 * m + coin) % n]], dtype=np.int64)
    else:
        unmatched = np.empty(0, dtype=np.int64)
    rounds = np.zeros(n, dtype=np.int64)
    rounds[unmatched] = -1
    return Matching(pairs, unmatched, ONE_COLOR, round_matched=rounds)


# ---------------------------------------------------------------------------
# forests

@dataclass
class Forest:
    """Rooted forest: parent links plus per-vertex ordered children."""

    parent: np.ndarray                 # (n,) int, -1 at roots
    children: list                     # list of int arrays, ordered
    roots: np.ndarray

    def __post_init__(self):
        self.parent = np.asarray(self.parent, dtype=np.int64)
        self.roots = np.asarray(self.roots, dtype=np.int64)

    def __len__(self):
        return len(self.parent)

    def component_of(self) -> np.ndarray:
        """Root index of each vertex's tree."""
        comp = np.arange(len(self.parent))
        parent = self.parent
        while True:
            nxt = np.where(parent[comp] >= 0, parent[comp], comp)
            if np.array_equal(nxt, comp):
                return comp
            comp = nxt


def write_forest_csv(path, forest: Forest) -> None:
    """Rows ``child,parent`` (parent -1 at roots)."""
    with open(path, "w") as fh:
        fh.write("child,parent\n")
        for v, p in enumerate(forest.parent):
            fh.write(f"{v},{p}\n")


def read_forest_csv(path) -> Forest:
    parent = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "child,parent":
            raise ValueError(f"unexpected forest CSV header {header!r}")
        for line in fh:
            if line.strip():
                _, p = line.strip().split(",")
                parent.append(int(p))
    parent = np.array(parent, dtype=np.int64)
    children = [[] for _ in range(len(parent))]
    for v, p in enumerate(parent):
        if p >= 0:
            children[p].append(v)
    return Forest(parent, [np.array(c, dtype=np.int64) for c in children],
                  np.flatnonzero(parent < 0))


def _orient_tree(n, adjacency, root, coords, domain):
    """Parent pointers from a BFS away from the root; children by distance."""
    parent = np.full(n, -1, dtype=np.int64)
    children = [[] for _ in range(n)]
    visited = np.zeros(n, dtype=bool)
    queue = [root]
    visited[root] = True
    while queue:
        nxt = []
        for v in queue:
            for w in adjacency[v]:
                if not visited[w]:
                    visited[w] = True
                    parent[w] = v
                    children[v].append(w)
                    nxt.append(w)
        queue = nxt
    out = []
    for v in range(n):
        kids = np.array(children[v], dtype=np.int64)
        if len(kids) > 1:
            d = domain.distance(coords[kids], coords[v])
            kids = kids[np.lexsort((kids, d))]
        out.append(kids)
    return parent, out


def minimal_spanning_forest(points: ColoredPointSet) -> Forest:
    """Euclidean minimum spanning tree, rooted for parent orientation.

    Equivalent to deleting from the complete graph every edge that is the
    longest in some cycle.  The root is the endpoint (smaller index) of the
    globally longest MST edge; children are ordered by distance from their
    parent.  Box boundary only.
    """
    if points.domain.boundary != "box":
        raise CapabilityError("the spanning forest is built in box mode "
                              "(cycles through the torus wrap are not supported)")
    n = len(points)
    if n == 0:
        raise ValueError("empty point set")
    if n == 1:
        return Forest(np.array([-1]), [np.empty(0, dtype=np.int64)], np.array([0]))
    coords = points.coords
    edges = _mst_edges(coords, points.domain)
    adjacency = [[] for _ in range(n)]
    for u, v in edges:
        adjacency[u].append(v)
        adjacency[v].append(u)
    weights = points.domain.distance(coords[edges[:, 0]], coords[edges[:, 1]])
    longest = np.lexsort((edges[:, 1], edges[:, 0], -weights))[0]
    root = int(edges[longest].min())
    parent, children = _orient_tree(n, adjacency, root, coords, points.domain)
    return Forest(parent, children, np.array([root]))


def _mst_edges(coords, domain) -> np.ndarray:
    n, d = coords.shape
    if d >= 2 and n >= d + 2:
        try:
            tri = Delaunay(coords)
        except QhullError:
            tri = None
        if tri is not None:
            simp = tri.simplices
            pairs = set()
            for a in range(simp.shape[1]):
                for b in range(a + 1, simp.shape[1]):
                    for u, v in zip(simp[:, a], simp[:, b]):
                        pairs.add((min(u, v), max(u, v)))
            uv = np.array(sorted(pairs), dtype=np.int64)
            w = domain.distance(coords[uv[:, 0]], coords[uv[:, 1]])
            graph = coo_matrix((w, (uv[:, 0], uv[:, 1])), shape=(n, n))
            tree = _sparse_mst(graph).tocoo()
            if tree.nnz == n - 1:
                return np.column_stack([tree.row, tree.col]).astype(np.int64)
    # dense fallback (small n, d=1, or degenerate configurations)
    w = pairwise_distances(domain, coords, coords)
    tree = _sparse_mst(coo_matrix(np.triu(w, k=1))).tocoo()
    return np.column_stack([tree.row, tree.col]).astype(np.int64)


def cone_forest(points: ColoredPointSet, chunk: int = 256) -> Forest:
    """Forest where each point's parent is the least-first-coordinate point
    inside its forward cone {z : z_1 > |(z_2..z_d)|}.

    Box mode only (the cone is not well defined through the torus wrap).
    Points with an empty cone are roots.
    """
    if points.domain.boundary != "box":
        raise CapabilityError("the cone forest is built in box mode only")
    if points.domain.d < 2:
        raise CapabilityError("the cone forest needs d >= 2")
    n = len(points)
    coords = points.coords
    order = np.argsort(coords[:, 0], kind="stable")
    sorted_coords = coords[order]
    parent = np.full(n, -1, dtype=np.int64)
    for pos in range(n):
        x = sorted_coords[pos]
        lo = pos + 1
        while lo < n:
            hi = min(n, lo + chunk)
            block = sorted_coords[lo:hi]
            ahead = block[:, 0] - x[0]
            lateral = np.sqrt(np.sum((block[:, 1:] - x[1:]) ** 2, axis=1))
            hit = np.flatnonzero(ahead > lateral)
            if len(hit):
                parent[order[pos]] = order[lo + hit[0]]
                break
            lo = hi
    children = [[] for _ in range(n)]
    for v in range(n):
        p = parent[v]
        if p >= 0:
            children[p].append(v)
    out = []
    for v in range(n):
        kids = np.array(children[v], dtype=np.int64)
        if len(kids) > 1:
            d = points.domain.distance(coords[kids], coords[v])
            kids = kids[np.lexsort((kids, d))]
        out.append(kids)
    return Forest(parent, out, np.flatnonzero(parent < 0))


def match_from_forest(forest: Forest) -> Matching:
    """Matching by iterated twig removal.

    A twig is a vertex that is not a leaf but whose live children are all
    leaves.  Each stage pairs every twig's ordered children consecutively
    (odd last child pairs with the twig itself), removes matched vertices,
    and repeats.  Matched pairs are siblings or parent-child, so their
    forest distance is at most 2; per tree at most one vertex is left over.
    """
    n = len(forest)
    live = np.ones(n, dtype=bool)
    n_kids = np.array([len(c) for c in forest.children], dtype=np.int64)
    n_nonleaf_kids = np.array(
        [sum(1 for c in kids if len(forest.children[c])) for kids in forest.children],
        dtype=np.int64)

    def is_twig(v):
        return live[v] and n_kids[v] > 0 and n_nonleaf_kids[v] == 0

    pairs = []
    rounds = np.full(n, -1, dtype=np.int64)
    twigs = sorted(v for v in range(n) if is_twig(v))
    stage = 0
    while twigs:
        touched = set()

        def became_leaf(v):
            # v just lost its last live child; its parent loses a non-leaf child
            p = forest.parent[v]
            if p >= 0 and live[p]:
                n_nonleaf_kids[p] -= 1
                touched.add(int(p))

        def remove(v):
            live[v] = False
            p = forest.parent[v]
            if p >= 0 and live[p]:
                if n_kids[v] > 0:      # v still counts as a non-leaf child of p
                    n_nonleaf_kids[p] -= 1
                n_kids[p] -= 1
                touched.add(int(p))
                if n_kids[p] == 0:
                    became_leaf(p)

        for x in twigs:
            kids = [int(c) for c in forest.children[x] if live[c]]
            for a, b in zip(kids[0::2], kids[1::2]):
                pairs.append((a, b))
                rounds[a] = rounds[b] = stage
                remove(a)
                remove(b)
            if len(kids) % 2:
                last = kids[-1]
                pairs.append((last, x))
                rounds[last] = rounds[x] = stage
                remove(last)
                remove(x)
            else:
                # x became a leaf; remove() already told its parent when the
                # last child came off
                touched.add(x)
        twigs = sorted(v for v in touched if is_twig(v))
        stage += 1

    unmatched = np.flatnonzero(live)
    comp = forest.component_of()
    leftover_per_comp = np.bincount(comp[unmatched], minlength=n)
    if leftover_per_comp.max(initial=0) > 1:
        raise AssertionError("twig iteration stranded two vertices in one tree")
    pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return Matching(pairs, unmatched, ONE_COLOR, round_matched=rounds)
