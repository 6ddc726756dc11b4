"""From matchings to tail statistics of the typical matching distance.

The empirical stand-in for the Palm distance law P*(X > r) is the window
average over all matched points, which is unbiased by the Palm identity for
stationary schemes.  Tail exponents are read off a log-log least-squares fit
of the empirical survival function; that is a diagnostic, not an inferential
claim.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _st
from scipy.spatial import cKDTree

from .geometry import BLUE, RED, ColoredPointSet
from .stable import Matching, TWO_COLOR, find_unstable_pair


def match_distances(points: ColoredPointSet, matching: Matching,
                    interior_margin: float = 0.0, per: str = "endpoint"):
    """Matched-distance samples, one per matched point (or per red point).

    ``per`` is ``"endpoint"`` (default: every matched point of either color
    contributes its distance) or ``"red"``.  In box mode, points within
    ``interior_margin`` of the boundary are discarded.  Returns
    ``(samples, n_censored)`` where the censored count is the number of
    unmatched points surviving the margin filter.
    """
    if per not in ("endpoint", "red"):
        raise ValueError("per must be 'endpoint' or 'red'")
    dom = points.domain
    dists = dom.distance(points.coords[matching.pairs[:, 0]],
                         points.coords[matching.pairs[:, 1]])

    def interior(idx):
        if dom.boundary == "torus" or interior_margin <= 0:
            return np.ones(len(idx), dtype=bool)
        c = points.coords[idx]
        return np.all((c >= interior_margin) & (c <= dom.L - interior_margin), axis=1)

    if per == "red":
        first_red = points.colors[matching.pairs[:, 0]] == RED
        owner = np.where(first_red, matching.pairs[:, 0], matching.pairs[:, 1])
        keep = (points.colors[owner] == RED) & interior(owner)
        samples = dists[keep]
        cens_idx = matching.unmatched[points.colors[matching.unmatched] == RED]
    else:
        keep0 = interior(matching.pairs[:, 0])
        keep1 = interior(matching.pairs[:, 1])
        samples = np.concatenate([dists[keep0], dists[keep1]])
        cens_idx = matching.unmatched
    n_censored = int(interior(cens_idx).sum()) if len(cens_idx) else 0
    return np.sort(samples), n_censored


def empirical_survival(samples, grid):
    """Exact fraction of samples strictly greater than each grid value."""
    samples = np.sort(np.asarray(samples, dtype=float))
    if len(samples) == 0:
        raise ValueError("empty sample set")
    grid = np.asarray(grid, dtype=float)
    exceed = len(samples) - np.searchsorted(samples, grid, side="right")
    return exceed / len(samples)


@dataclass
class PowerLawFit:
    exponent: float            # slope of -log survival vs log r
    intercept: float
    stderr: float
    r_min: float
    r_max: float
    n_grid: int
    curvature: float           # quadratic coefficient of the log-log fit
    curvature_stderr: float

    @property
    def nonlinearity(self) -> float:
        """|curvature| in stderr units; large values mean the tail is not a power law."""
        if self.curvature_stderr == 0:
            return 0.0
        return abs(self.curvature) / self.curvature_stderr


def fit_power_law(grid, survival, r_min: float, r_max: float,
                  n_samples: int | None = None) -> PowerLawFit:
    """Least-squares slope of log survival vs log r over [r_min, r_max].

    Survival grid points are strongly correlated, so the regression stderr
    alone understates the error; when ``n_samples`` is given the stderr gets
    a sampling-noise floor of exponent / sqrt(#samples exceeding r_min),
    the usual tail-index error scale.
    """
    grid = np.asarray(grid, dtype=float)
    survival = np.asarray(survival, dtype=float)
    keep = (grid >= r_min) & (grid <= r_max) & (survival > 0) & (grid > 0)
    if keep.sum() < 5:
        raise ValueError("need at least 5 grid points with positive survival in window")
    x = np.log(grid[keep])
    y = np.log(survival[keep])
    (slope, intercept), cov = np.polyfit(x, y, 1, cov=True)
    (c2, _, _), cov2 = np.polyfit(x, y, 2, cov=True)
    stderr = float(np.sqrt(cov[0, 0]))
    if n_samples is not None:
        # the sparse far end of the window dominates the sampling noise:
        # log-survival there fluctuates by ~1/sqrt(exceedances)
        k_far = max(n_samples * float(survival[keep][-1]), 1.0)
        stderr = max(stderr, 1.0 / (np.sqrt(k_far) * (x[-1] - x[0])))
    return PowerLawFit(exponent=float(-slope), intercept=float(intercept),
                       stderr=stderr,
                       r_min=float(r_min), r_max=float(r_max),
                       n_grid=int(keep.sum()),
                       curvature=float(c2),
                       curvature_stderr=float(np.sqrt(cov2[0, 0])))


def default_fit_window(samples, domain=None, min_exceed: int = 100):
    """(r_min, r_max): above the collision scale, below finite-size truncation.

    r_min is twice the mean nearest-neighbor-scale distance (approximated by
    the lower decile of samples when no domain is given), r_max the smallest
    r with fewer than ``min_exceed`` exceeding samples, capped at L/4 on a
    torus.
    """
    samples = np.sort(np.asarray(samples, dtype=float))
    n = len(samples)
    r_min = 2.0 * float(samples[: max(1, n // 10)].mean())
    r_max = float(samples[max(0, n - min_exceed)])
    if domain is not None:
        r_max = min(r_max, domain.L / 4.0)
    return r_min, r_max


@dataclass
class TailEstimate:
    """Sorted distance samples with survival curve and optional tail fit."""

    samples: np.ndarray
    n_censored: int = 0
    n_trials: int = 1
    scheme: str = ""
    domain_label: str = ""
    fit: PowerLawFit | None = None

    def __post_init__(self):
        self.samples = np.sort(np.asarray(self.samples, dtype=float))

    def merge(self, other: "TailEstimate") -> "TailEstimate":
        """Monoid merge: concatenate samples, add counts.  Associative."""
        return TailEstimate(np.concatenate([self.samples, other.samples]),
                            self.n_censored + other.n_censored,
                            self.n_trials + other.n_trials,
                            self.scheme or other.scheme,
                            self.domain_label or other.domain_label)

    def survival_curve(self, n_grid: int = 48):
        lo = max(self.samples[0], 1e-12)
        grid = np.geomspace(lo, self.samples[-1], n_grid)
        return grid, empirical_survival(self.samples, grid)

    def fitted(self, r_min=None, r_max=None, domain=None) -> "TailEstimate":
        if r_min is None or r_max is None:
            lo, hi = default_fit_window(self.samples, domain)
            r_min = lo if r_min is None else r_min
            r_max = hi if r_max is None else r_max
        grid, surv = self.survival_curve(96)
        self.fit = fit_power_law(grid, surv, r_min, r_max,
                                 n_samples=len(self.samples))
        return self

    def write_csv(self, path, sidecar: dict | None = None):
        grid, surv = self.survival_curve(96)
        with open(path, "w") as fh:
            fh.write("r,survival\n")
            for r, s in zip(grid, surv):
                fh.write(f"{float(r)!r},{float(s)!r}\n")
        meta = {
            "scheme": self.scheme,
            "domain": self.domain_label,
            "n_samples": int(len(self.samples)),
            "n_censored": int(self.n_censored),
            "n_trials": int(self.n_trials),
        }
        if self.fit is not None:
            meta["fit"] = {
                "exponent": self.fit.exponent,
                "stderr": self.fit.stderr,
                "intercept": self.fit.intercept,
                "window": [self.fit.r_min, self.fit.r_max],
                "nonlinearity": self.fit.nonlinearity,
            }
        if sidecar:
            meta.update(sidecar)
        with open(str(path) + ".json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def ks_exponential(samples, rate: float = 1.0):
    """One-sample Kolmogorov-Smirnov test against Exp(rate)."""
    samples = np.asarray(samples, dtype=float)
    if len(samples) == 0:
        raise ValueError("empty sample set")
    res = _st.kstest(samples, "expon", args=(0.0, 1.0 / rate))
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------------------
# invariant reports

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class InvariantReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {"passed": bool(self.passed),
                "checks": [{"name": c.name, "passed": bool(c.passed),
                            "detail": str(c.detail)}
                           for c in self.checks]}


def t_bad_separation_gap(points: ColoredPointSet, matching: Matching, t: float):
    """Minimum distance between potential partners both matched farther than t.

    Such a pair would be unstable, so the gap must be at least t.  In
    two-color mode only opposite-color pairs count (two badly matched points
    of the same color can never form an unstable pair and may be close).
    Returns inf when no qualifying pair exists.
    """
    partner = matching.partner_array(len(points))
    radius = np.full(len(points), np.inf)
    m = partner >= 0
    radius[m] = points.domain.distance(points.coords[m], points.coords[partner[m]])
    bad = np.flatnonzero(radius > t)
    if len(bad) < 2:
        return np.inf
    boxsize = points.domain.L if points.domain.boundary == "torus" else None
    if matching.mode == TWO_COLOR:
        bad_red = bad[points.colors[bad] == RED]
        bad_blue = bad[points.colors[bad] == BLUE]
        if len(bad_red) == 0 or len(bad_blue) == 0:
            return np.inf
        tree = cKDTree(points.coords[bad_blue], boxsize=boxsize)
        d, _ = tree.query(points.coords[bad_red], k=1)
        return float(np.min(d))
    tree = cKDTree(points.coords[bad], boxsize=boxsize)
    d, _ = tree.query(points.coords[bad], k=2)
    return float(d[:, 1].min())


def invariant_report(points: ColoredPointSet, matching: Matching, scheme: str,
                     stability_limit: int = 4000, n_t_grid: int = 20) -> InvariantReport:
    """Machine-readable pass/fail list of the scheme's structural invariants."""
    checks = []
    n = len(points)

    seen = np.concatenate([matching.pairs.ravel(), matching.unmatched])
    cover = len(seen) == n and len(np.unique(seen)) == n
    checks.append(CheckResult("partition", cover,
                              "" if cover else "pairs+unmatched do not partition the set"))

    if matching.mode == TWO_COLOR:
        bichrome = bool((points.colors[matching.pairs[:, 0]]
                         != points.colors[matching.pairs[:, 1]]).all()) \
            if len(matching.pairs) else True
        checks.append(CheckResult("bichromatic-pairs", bichrome))
        nr = int((points.colors == RED).sum())
        nb = n - nr
        mr = int((points.colors[matching.pairs.ravel()] == RED).sum())
        mb = 2 * len(matching.pairs) - mr
        fair = mr == mb and abs(nr - nb) == len(matching.unmatched)
        checks.append(CheckResult("fairness", fair,
                                  f"matched red={mr} blue={mb} unmatched={len(matching.unmatched)}"))
        un_colors = points.colors[matching.unmatched]
        onecolor_leftover = len(un_colors) == 0 or un_colors.min() == un_colors.max()
        checks.append(CheckResult("leftover-single-color", onecolor_leftover))
    else:
        if scheme == "stable":
            checks.append(CheckResult("at-most-one-unmatched",
                                      len(matching.unmatched) <= 1,
                                      f"unmatched={len(matching.unmatched)}"))

    if scheme in ("stable", "minlen"):
        if n <= stability_limit:
            witness = find_unstable_pair(points, matching)
        else:
            witness = _windowed_unstable(points, matching)
        if scheme == "stable":
            checks.append(CheckResult("no-unstable-pair", witness is None,
                                      f"witness={witness}" if witness else ""))

    if scheme == "stable":
        dists = points.domain.distance(points.coords[matching.pairs[:, 0]],
                                       points.coords[matching.pairs[:, 1]])
        if len(dists):
            grid = np.quantile(dists, np.linspace(0.3, 0.995, n_t_grid))
            ok = all(t_bad_separation_gap(points, matching, t) >= t for t in grid)
            checks.append(CheckResult("t-bad-separation", ok))

    if matching.pair_level is not None and len(matching.pairs):
        dists = points.domain.distance(points.coords[matching.pairs[:, 0]],
                                       points.coords[matching.pairs[:, 1]])
        bound = (2.0 ** matching.pair_level) * np.sqrt(points.domain.d)
        ok = bool((dists <= bound * (1 + 1e-12)).all())
        checks.append(CheckResult("level-diameter-bound", ok))

    return InvariantReport(checks)


def _windowed_unstable(points: ColoredPointSet, matching: Matching,
                       n_windows: int = 5, window_points: int = 1000, seed: int = 0):
    """Subsampled stability scan for large sets: O(m^2) within random windows."""
    rng = np.random.default_rng(seed)
    n = len(points)
    partner = matching.partner_array(n)
    radius = np.full(n, np.inf)
    m = partner >= 0
    radius[m] = points.domain.distance(points.coords[m], points.coords[partner[m]])
    side = points.domain.L * (window_points / max(n, 1)) ** (1.0 / points.domain.d)
    for _ in range(n_windows):
        corner = rng.random(points.domain.d) * points.domain.L
        delta = points.coords - corner
        if points.domain.boundary == "torus":
            delta %= points.domain.L
        inside = np.flatnonzero(np.all((delta >= 0) & (delta < side), axis=1))
        if len(inside) < 2:
            continue
        c = points.coords[inside]
        dmat = points.domain.distance(c[:, None, :], c[None, :, :])
        cap = np.minimum(radius[inside][:, None], radius[inside][None, :])
        bad = dmat < cap
        np.fill_diagonal(bad, False)
        if matching.mode == TWO_COLOR:
            same = points.colors[inside][:, None] == points.colors[inside][None, :]
            bad &= ~same
        ii, jj = np.nonzero(bad)
        if len(ii):
            return int(inside[ii[0]]), int(inside[jj[0]])
    return None
