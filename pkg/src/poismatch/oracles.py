"""Exact small-instance matchers: baselines and test oracles.

These work on raw coordinate arrays (one per color where bipartite) and
return index pairs into those arrays, so they can be applied to arbitrary
sub-configurations (e.g. the points of one hierarchical box).
"""

from __future__ import annotations

from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import Domain, pairwise_distances


class CapabilityError(ValueError):
    """Instance outside the exact solver's supported size."""


def min_length_bipartite(red, blue, domain: Domain):
    """Maximum-cardinality minimum-total-length bipartite matching.

    Matches min(|red|, |blue|) pairs with minimal total length (exact
    assignment, deterministic).  Returns ``(pairs, cost)`` with pairs as an
    (m, 2) array of (red index, blue index).
    """
    red = np.atleast_2d(np.asarray(red, dtype=float))
    blue = np.atleast_2d(np.asarray(blue, dtype=float))
    if len(red) == 0 or len(blue) == 0:
        return np.empty((0, 2), dtype=np.int64), 0.0
    costs = pairwise_distances(domain, red, blue)
    ri, bi = linear_sum_assignment(costs)
    pairs = np.column_stack([ri, bi]).astype(np.int64)
    return pairs, float(costs[ri, bi].sum())


def min_length_one_color_exact(coords, domain: Domain, max_n: int = 20):
    """Minimum-length perfect matching by subset DP; even n <= 20 only."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    n = len(coords)
    if n % 2:
        raise CapabilityError(f"need an even point count, got {n}")
    if n > max_n:
        raise CapabilityError(
            f"exact one-color matcher is capped at n={max_n} (got {n}); "
            "use min_length_one_color_greedy")
    if n == 0:
        return np.empty((0, 2), dtype=np.int64), 0.0
    dist = pairwise_distances(domain, coords, coords)
    full = (1 << n) - 1
    dp = np.full(1 << n, np.inf)
    choice = np.full(1 << n, -1, dtype=np.int64)
    dp[0] = 0.0
    for mask in range(1, full + 1):
        if bin(mask).count("1") % 2:
            continue
        i = (mask & -mask).bit_length() - 1        # lowest unpaired point
        rest = mask ^ (1 << i)
        m = rest
        best = np.inf
        bj = -1
        while m:
            j = (m & -m).bit_length() - 1
            c = dp[rest ^ (1 << j)] + dist[i, j]
            if c < best:
                best, bj = c, j
            m &= m - 1
        dp[mask] = best
        choice[mask] = bj
    pairs = []
    mask = full
    while mask:
        i = (mask & -mask).bit_length() - 1
        j = int(choice[mask])
        pairs.append((i, j))
        mask ^= (1 << i) | (1 << j)
    return np.array(pairs, dtype=np.int64), float(dp[full])


def min_length_one_color_greedy(coords, domain: Domain):
    """Greedy heuristic: repeatedly match the globally closest unmatched pair.

    Approximate; rendering surrogate where the exact DP is out of reach.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    n = len(coords)
    if n % 2:
        raise CapabilityError(f"need an even point count, got {n}")
    if n == 0:
        return np.empty((0, 2), dtype=np.int64), 0.0
    iu, ju = np.triu_indices(n, k=1)
    dists = domain.distance(coords[iu], coords[ju])
    order = np.argsort(dists, kind="stable")
    taken = np.zeros(n, dtype=bool)
    pairs = []
    cost = 0.0
    for k in order:
        i, j = int(iu[k]), int(ju[k])
        if taken[i] or taken[j]:
            continue
        taken[i] = taken[j] = True
        pairs.append((i, j))
        cost += float(dists[k])
        if len(pairs) == n // 2:
            break
    return np.array(pairs, dtype=np.int64), cost


def _is_stable_bipartite(dr2b: np.ndarray, partner_of_red: np.ndarray) -> bool:
    """Stability of a perfect bipartite matching given the distance matrix."""
    n = len(partner_of_red)
    rrad = dr2b[np.arange(n), partner_of_red]
    partner_of_blue = np.empty(n, dtype=np.int64)
    partner_of_blue[partner_of_red] = np.arange(n)
    brad = dr2b[partner_of_blue, np.arange(n)]
    cap = np.minimum(rrad[:, None], brad[None, :])
    return not bool((dr2b < cap).any())


def brute_force_stable(red, blue, domain: Domain, max_n: int = 8):
    """Unique stable matching by enumerating all perfect bipartite matchings.

    Asserts exactly one stable matching exists (general position); returns
    its (red index, blue index) pairs.
    """
    red = np.atleast_2d(np.asarray(red, dtype=float))
    blue = np.atleast_2d(np.asarray(blue, dtype=float))
    n = len(red)
    if n != len(blue):
        raise CapabilityError("equal color counts required")
    if n > max_n:
        raise CapabilityError(f"brute-force enumeration capped at n={max_n}")
    dr2b = pairwise_distances(domain, red, blue)
    stable = []
    for perm in permutations(range(n)):
        assign = np.array(perm, dtype=np.int64)
        if _is_stable_bipartite(dr2b, assign):
            stable.append(assign)
    if len(stable) != 1:
        raise AssertionError(
            f"expected exactly one stable matching, found {len(stable)} "
            "(degenerate configuration or tie-handling bug)")
    return np.column_stack([np.arange(n), stable[0]])
