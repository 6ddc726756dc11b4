"""Uniform-grid spatial hash with deletion, exact under the domain metric.

Used by the ball-growth matcher and available as a general nearest-neighbor
index.  Queries expand outward in Chebyshev shells of cells and terminate as
soon as no unexplored cell can beat the best candidate found so far.
"""

from __future__ import annotations

import itertools

import numpy as np

from .geometry import ColoredPointSet, Domain


class SpatialIndex:
    """Bucket grid over a point set; single-writer (supports ``delete``)."""

    def __init__(self, points: ColoredPointSet, cell_size: float | None = None):
        if cell_size is not None and not cell_size > 0:
            raise ValueError("cell_size must be positive")
        self.points = points
        self.domain = points.domain
        n = max(len(points), 1)
        if cell_size is None:
            # aim for about one point per cell
            cell_size = self.domain.L / max(1, round(n ** (1.0 / self.domain.d)))
        # an integer number of cells per axis so torus shells wrap cleanly
        self.n_cells = max(1, int(self.domain.L / cell_size))
        self.cell = self.domain.L / self.n_cells
        self.buckets: dict[tuple, list[int]] = {}
        self.alive = np.ones(len(points), dtype=bool)
        self._keys = [self._cell_of(x) for x in points.coords]
        for i, key in enumerate(self._keys):
            self.buckets.setdefault(key, []).append(i)

    def _cell_of(self, x) -> tuple:
        return tuple((np.asarray(x) // self.cell).astype(int) % self.n_cells)

    def delete(self, i: int) -> None:
        if not self.alive[i]:
            return
        self.alive[i] = False
        self.buckets[self._keys[i]].remove(i)

    def _shell(self, center: tuple, radius: int):
        """Cells at Chebyshev distance ``radius`` from the center cell."""
        d = self.domain.d
        if radius == 0:
            yield center
            return
        torus = self.domain.boundary == "torus"
        for offset in itertools.product(range(-radius, radius + 1), repeat=d):
            if max(abs(o) for o in offset) != radius:
                continue
            key = tuple(c + o for c, o in zip(center, offset))
            if torus:
                key = tuple(k % self.n_cells for k in key)
            elif any(k < 0 or k >= self.n_cells for k in key):
                continue
            yield key

    def nearest(self, x, exclude: int | None = None, where=None):
        """Index of the nearest live point to ``x``, or None if none qualifies.

        ``where`` is an optional boolean mask over point indices; ``exclude``
        drops a single index (typically the query point itself).  Exact ties
        are broken toward the smaller point index, so queries are
        deterministic even on degenerate inputs.
        """
        x = np.asarray(x, dtype=float)
        center = self._cell_of(x)
        max_radius = self.n_cells // 2 + 1 if self.domain.boundary == "torus" else self.n_cells
        best = None
        best_d = np.inf
        for radius in range(max_radius + 1):
            # any point in an unexplored shell is at least this far away
            if best is not None and (radius - 1) * self.cell > best_d:
                break
            seen = False
            for key in self._shell(center, radius):
                bucket = self.buckets.get(key)
                if not bucket:
                    continue
                seen = True
                for i in bucket:
                    if i == exclude or (where is not None and not where[i]):
                        continue
                    di = float(self.domain.distance(x, self.points.coords[i]))
                    if di < best_d or (di == best_d and (best is None or i < best)):
                        best, best_d = i, di
            if radius >= max_radius and not seen and best is not None:
                break
        return best

    def nearest_bruteforce(self, x, exclude: int | None = None, where=None):
        """Linear-scan reference implementation, for cross-checking."""
        ds = self.domain.distance(np.asarray(x, dtype=float), self.points.coords)
        mask = self.alive.copy()
        if exclude is not None:
            mask[exclude] = False
        if where is not None:
            mask &= np.asarray(where, dtype=bool)
        if not mask.any():
            return None
        ds = np.where(mask, ds, np.inf)
        return int(np.argmin(ds))  # argmin takes the first minimum: same tie-break


def build_index(points: ColoredPointSet, cell_size: float | None = None) -> SpatialIndex:
    return SpatialIndex(points, cell_size)
