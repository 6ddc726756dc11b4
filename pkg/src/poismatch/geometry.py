"""Simulation domains, metric, and point sampling.

A ``Domain`` is a finite cube of side ``L`` in ``d`` dimensions, either with
periodic (torus) or plain (box) boundary.  All coordinates live in ``[0, L)``.
The torus is the default everywhere because it removes boundary effects when
measuring matching-distance statistics.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

RED = 0
BLUE = 1

_COLOR_CHARS = {RED: "R", BLUE: "B"}
_CHAR_COLORS = {"R": RED, "B": BLUE}


@dataclass(frozen=True)
class Domain:
    """Finite cube [0, L)^d with torus or box boundary."""

    d: int
    L: float
    boundary: str = "torus"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if not self.L > 0:
            raise ValueError(f"side length must be positive, got {self.L}")
        if self.boundary not in ("torus", "box"):
            raise ValueError(f"boundary must be 'torus' or 'box', got {self.boundary!r}")

    @property
    def volume(self) -> float:
        return self.L ** self.d

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= 0.0) and np.all(x < self.L))

    def diff(self, x, y):
        """Componentwise displacement x - y, wrapped to [-L/2, L/2) on the torus."""
        delta = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        if self.boundary == "torus":
            delta = delta - self.L * np.round(delta / self.L)
        return delta

    def distance(self, x, y):
        """Metric distance between points (or arrays of points, broadcast)."""
        delta = self.diff(x, y)
        return np.sqrt(np.sum(delta * delta, axis=-1))


def distance(domain: Domain, x, y):
    """Module-level alias for ``domain.distance``."""
    return domain.distance(x, y)


def pairwise_distances(domain: Domain, xs, ys) -> np.ndarray:
    """(n, m) matrix of metric distances between two coordinate arrays."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    delta = np.abs(xs[:, None, :] - ys[None, :, :])
    if domain.boundary == "torus":
        delta = np.minimum(delta, domain.L - delta)
    return np.sqrt(np.sum(delta * delta, axis=-1))


@dataclass
class ColoredPointSet:
    """Coordinates plus R/B color labels on a domain.

    ``seed`` records sampling provenance; it is carried through to output
    files but has no effect on behavior after construction.
    """

    domain: Domain
    coords: np.ndarray
    colors: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float).reshape(-1, self.domain.d)
        self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1)
        if len(self.coords) != len(self.colors):
            raise ValueError("coords and colors must have equal length")
        if len(self.coords) and (self.coords.min() < 0 or self.coords.max() >= self.domain.L):
            raise ValueError("coordinates must lie in [0, L) on every axis")

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def red(self) -> np.ndarray:
        return np.nonzero(self.colors == RED)[0]

    @property
    def blue(self) -> np.ndarray:
        return np.nonzero(self.colors == BLUE)[0]


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_poisson(domain: Domain, intensity: float, color: int = RED, seed=None) -> ColoredPointSet:
    """Homogeneous Poisson sample: Poisson(intensity * L^d) i.i.d. uniform points."""
    if not intensity > 0:
        raise ValueError(f"intensity must be positive, got {intensity}")
    rng = _rng(seed)
    n = rng.poisson(intensity * domain.volume)
    coords = rng.random((n, domain.d)) * domain.L
    return ColoredPointSet(domain, coords, np.full(n, color, dtype=np.uint8),
                           seed=seed if isinstance(seed, int) else None)


def sample_binomial(domain: Domain, n: int, color: int = RED, seed=None) -> ColoredPointSet:
    """Exactly n i.i.d. uniform points."""
    if n < 0:
        raise ValueError(f"point count must be nonnegative, got {n}")
    rng = _rng(seed)
    coords = rng.random((n, domain.d)) * domain.L
    return ColoredPointSet(domain, coords, np.full(n, color, dtype=np.uint8),
                           seed=seed if isinstance(seed, int) else None)


def merge(a: ColoredPointSet, b: ColoredPointSet) -> ColoredPointSet:
    """Concatenate two point sets on the same domain (e.g. a red and a blue sample)."""
    if a.domain != b.domain:
        raise ValueError("point sets live on different domains")
    return ColoredPointSet(a.domain,
                           np.concatenate([a.coords, b.coords]),
                           np.concatenate([a.colors, b.colors]),
                           seed=a.seed)


def add_palm_point(points: ColoredPointSet, location, color: int) -> ColoredPointSet:
    """Copy of the point set with one extra point, for Palm-conditioned experiments."""
    location = np.asarray(location, dtype=float).reshape(-1)
    if location.shape != (points.domain.d,):
        raise ValueError("location has wrong dimension")
    if not points.domain.contains(location):
        raise ValueError("location outside domain")
    return ColoredPointSet(points.domain,
                           np.concatenate([points.coords, location[None, :]]),
                           np.concatenate([points.colors, [color]]),
                           seed=points.seed)


def check_general_position(points: ColoredPointSet, tol: float = 0.0):
    """True iff all pairwise distances are distinct (up to ``tol``).

    Returns ``(ok, witness)`` where the witness on failure is a pair of index
    pairs ((i, j), (k, l)) whose distances coincide.
    """
    n = len(points)
    if n < 2:
        return True, None
    iu, ju = np.triu_indices(n, k=1)
    dists = points.domain.distance(points.coords[iu], points.coords[ju])
    order = np.argsort(dists, kind="stable")
    ds = dists[order]
    close = np.nonzero(np.diff(ds) <= tol)[0]
    if len(close) == 0:
        return True, None
    a, b = order[close[0]], order[close[0] + 1]
    return False, ((int(iu[a]), int(ju[a])), (int(iu[b]), int(ju[b])))


def _header_line(points: ColoredPointSet) -> str:
    seed = points.seed if points.seed is not None else -1
    dom = points.domain
    return f"# seed={seed} d={dom.d} L={dom.L:g} boundary={dom.boundary}"


def write_points_csv(points: ColoredPointSet, path_or_file) -> None:
    """CSV serialization: provenance comment, then header x1,...,xd,color."""
    d = points.domain.d
    lines = [_header_line(points), ",".join([f"x{i+1}" for i in range(d)] + ["color"])]
    for xy, c in zip(points.coords, points.colors):
        lines.append(",".join(repr(float(v)) for v in xy) + "," + _COLOR_CHARS[int(c)])
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(text)


def read_points_csv(path_or_file) -> ColoredPointSet:
    if hasattr(path_or_file, "read"):
        fh = path_or_file
        lines = fh.read().splitlines()
    else:
        with open(path_or_file) as fh:
            lines = fh.read().splitlines()
    meta = dict(kv.split("=") for kv in lines[0].lstrip("# ").split())
    domain = Domain(int(meta["d"]), float(meta["L"]), meta["boundary"])
    seed = int(meta["seed"])
    coords, colors = [], []
    for line in lines[2:]:
        if not line:
            continue
        *xs, c = line.split(",")
        coords.append([float(v) for v in xs])
        colors.append(_CHAR_COLORS[c])
    coords = np.array(coords, dtype=float).reshape(-1, domain.d)
    return ColoredPointSet(domain, coords, np.array(colors, dtype=np.uint8),
                           seed=None if seed < 0 else seed)
