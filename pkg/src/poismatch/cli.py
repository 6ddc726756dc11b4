"""Experiment runner: config-driven campaigns, figures, and oracle checks.

Exit codes: 0 success, 1 invariant failure (witness dumped), 2 malformed
config, 3 capability error (a scheme asked for an unsupported regime).
``PM_WORKERS`` caps trial parallelism; trial results merge as monoids in
seed order, so the merged output is identical at any worker count.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import analysis, constructions, exponent, geometry, oracles, stable, svg

SCHEMES = ("stable", "hier", "adjacent", "msf", "cone", "minlen")

_REQUIRED = {"scheme", "d", "L", "trials", "seed"}
_KNOWN = _REQUIRED | {"mode", "intensity", "boundary", "fit_window",
                      "interior_margin", "per"}


class ConfigError(ValueError):
    pass


def _validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    missing = _REQUIRED - set(cfg)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    unknown = set(cfg) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if cfg["scheme"] == "solve-s":
        return cfg
    if cfg["scheme"] not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES} or 'solve-s'")
    full = dict(cfg)
    full.setdefault("mode", "two-color")
    full.setdefault("intensity", 1.0)
    full.setdefault("boundary", "torus")
    full.setdefault("interior_margin", 0.0)
    full.setdefault("per", "endpoint")
    for key, typ in (("d", int), ("trials", int), ("seed", int)):
        if not isinstance(full[key], int) or isinstance(full[key], bool):
            raise ConfigError(f"{key} must be an integer")
    if full["mode"] not in ("one-color", "two-color"):
        raise ConfigError("mode must be one-color or two-color")
    if full["d"] < 1 or full["L"] <= 0 or full["trials"] < 1 or full["intensity"] <= 0:
        raise ConfigError("d, L, trials, intensity must be positive")
    if full["boundary"] not in ("torus", "box"):
        raise ConfigError("boundary must be torus or box")
    return full


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def trial_seed(master_seed: int, trial: int) -> int:
    """Counter-based split: stable under growing trial counts."""
    child = np.random.SeedSequence(master_seed, spawn_key=(trial,))
    return int(child.generate_state(1, np.uint64)[0])


def _sample_points(cfg, seed):
    dom = geometry.Domain(cfg["d"], float(cfg["L"]), cfg["boundary"])
    lam = float(cfg["intensity"])
    if cfg["scheme"] in ("adjacent", "msf", "cone") or cfg["mode"] == "one-color":
        return geometry.sample_poisson(dom, lam, geometry.RED, seed), None
    red = geometry.sample_poisson(dom, lam, geometry.RED, seed)
    blue = geometry.sample_poisson(dom, lam, geometry.BLUE, seed + 1)
    return red, blue


def build_matching(cfg: dict, seed: int):
    """(points, matching) for one trial of the configured scheme."""
    red, blue = _sample_points(cfg, seed)
    scheme = cfg["scheme"]
    if scheme == "stable":
        points = red if blue is None else geometry.merge(red, blue)
        return points, stable.stable_match(points, cfg["mode"])
    if scheme == "hier":
        if blue is None:
            raise oracles.CapabilityError("hierarchical matching is two-color")
        K = int(round(np.log2(cfg["L"])))
        shifts = constructions.DyadicShifts.sample(
            K, cfg["d"], np.random.default_rng(seed + 2))
        matching, _ = constructions.hierarchical_match(red, blue, shifts)
        return geometry.merge(red, blue), matching
    if scheme == "adjacent":
        coin = int(np.random.default_rng(seed + 2).integers(0, 2))
        return red, constructions.adjacent_match_1d(red, coin)
    if scheme == "msf":
        forest = constructions.minimal_spanning_forest(red)
        return red, constructions.match_from_forest(forest)
    if scheme == "cone":
        forest = constructions.cone_forest(red)
        return red, constructions.match_from_forest(forest)
    if scheme == "minlen":
        if blue is None:
            raise oracles.CapabilityError(
                "one-color minimum-length matching is exact only for n <= 20; "
                "use the two-color mode")
        pairs, _ = oracles.min_length_bipartite(red.coords, blue.coords,
                                                red.domain)
        pairs = pairs.copy()
        pairs[:, 1] += len(red)
        points = geometry.merge(red, blue)
        m = np.zeros(len(points), dtype=bool)
        m[pairs.ravel()] = True
        return points, stable.Matching(pairs, np.flatnonzero(~m), "two-color")
    raise oracles.CapabilityError(f"unknown scheme {scheme!r}")


def _run_trial(args):
    cfg, trial = args
    seed = trial_seed(cfg["seed"], trial)
    points, matching = build_matching(cfg, seed)
    report = analysis.invariant_report(points, matching, cfg["scheme"])
    samples, censored = analysis.match_distances(
        points, matching, cfg["interior_margin"], cfg["per"])
    est = analysis.TailEstimate(samples, censored, 1, cfg["scheme"],
                                f"d={cfg['d']} L={cfg['L']} {cfg['boundary']}")
    return trial, est, report.to_dict()


def _n_workers() -> int:
    try:
        return max(1, int(os.environ.get("PM_WORKERS", "1")))
    except ValueError:
        return 1


def run_campaign(cfg: dict, out: Path) -> int:
    """Execute a validated config; returns the process exit code."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "witness.json").unlink(missing_ok=True)
    chash = config_hash(cfg)
    if cfg["scheme"] == "solve-s":
        dims = cfg["d"] if isinstance(cfg["d"], list) else [cfg["d"]]
        rows = exponent.s_asymptotics_table(dims)
        with open(out / "exponents.csv", "w") as fh:
            fh.write("d,s,s_log_d\n")
            for d, s, slogd in rows:
                fh.write(f"{d},{s!r},{slogd!r}\n")
        return 0

    jobs = [(cfg, t) for t in range(cfg["trials"])]
    if _n_workers() > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=_n_workers()) as pool:
            results = list(pool.map(_run_trial, jobs))
    else:
        results = [_run_trial(j) for j in jobs]
    results.sort(key=lambda r: r[0])

    merged = results[0][1]
    for _, est, _ in results[1:]:
        merged = merged.merge(est)
    reports = {trial: rep for trial, _, rep in results}

    dom = geometry.Domain(cfg["d"], float(cfg["L"]), cfg["boundary"])
    try:
        merged.fitted(domain=dom)
    except ValueError:
        pass
    merged.write_csv(out / "tail.csv", sidecar={
        "config_hash": chash, "config": cfg,
        "trial_seeds": [trial_seed(cfg["seed"], t) for t in range(cfg["trials"])],
    })
    grid, surv = merged.survival_curve(96)
    keep = surv > 0
    if keep.sum() >= 2:
        (out / "tail.svg").write_text(svg.render_survival(
            grid[keep], surv[keep], merged.fit,
            title=f"{cfg['scheme']} {merged.domain_label}"))
    with open(out / "invariants.json", "w") as fh:
        json.dump({"config_hash": chash, "trials": reports}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")

    failed = {t: rep for t, rep in reports.items() if not rep["passed"]}
    if failed:
        with open(out / "witness.json", "w") as fh:
            json.dump(failed, fh, indent=2, sort_keys=True)
            fh.write("\n")
        click.echo(f"invariant failures in trials {sorted(failed)}; "
                   f"see {out / 'witness.json'}", err=True)
        return 1
    return 0


@click.group()
def main():
    """Simulation toolkit for translation-invariant point matchings."""


@main.command("run")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="artifact directory (default: <config stem>_out)")
def run_cmd(config_path, out):
    """Run the experiment campaign described by a JSON config."""
    try:
        with open(config_path) as fh:
            raw = json.load(fh)
        cfg = _validate_config(raw)
    except (json.JSONDecodeError, ConfigError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    out = Path(out) if out else Path(config_path).with_suffix("").name + "_out"
    try:
        code = run_campaign(cfg, Path(out))
    except oracles.CapabilityError as exc:
        click.echo(f"capability error: {exc}", err=True)
        sys.exit(3)
    sys.exit(code)


@main.command("solve-s")
@click.option("--d", "dim", type=int, default=None, help="single dimension")
@click.option("--tol", type=float, default=1e-6)
@click.option("--table", default=None,
              help="comma-separated dimensions; emits CSV instead of JSON")
def solve_s_cmd(dim, tol, table):
    """Solve the stable-matching tail exponent equation."""
    if table is not None:
        dims = [int(v) for v in table.split(",") if v.strip()]
        click.echo("d,s,s_log_d")
        for d, s, slogd in exponent.s_asymptotics_table(dims):
            click.echo(f"{d},{s:.9f},{slogd:.9f}")
        return
    if dim is None:
        raise click.UsageError("pass --d or --table")
    r = exponent.solve_s(dim, xtol=tol)
    click.echo(json.dumps({"d": r.d, "s": r.s, "residual": r.residual,
                           "evaluations": r.evaluations}))


@main.command("figure1")
@click.option("--seed", type=int, required=True)
@click.option("--n", type=int, default=2000)
@click.option("--out", type=click.Path(file_okay=False), default="figure1")
def figure1_cmd(seed, n, out):
    """Four panels on one torus: stable and minimum-length matchings,
    one- and two-color, sharing point sets within each color count."""
    paths = figure1(seed, n, Path(out))
    for p in paths:
        click.echo(str(p))


def figure1(seed: int, n: int, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    L = float(np.sqrt(n))
    dom = geometry.Domain(2, L, "torus")
    if n % 2:
        n += 1
    one = geometry.sample_binomial(dom, n, geometry.RED, seed)
    red = geometry.sample_binomial(dom, n // 2, geometry.RED, seed + 1)
    blue = geometry.sample_binomial(dom, n // 2, geometry.BLUE, seed + 2)
    two = geometry.merge(red, blue)

    panels = []
    m1 = stable.stable_match(one, "one-color")
    panels.append(("panel_i_stable_one_color.svg", one, m1))
    if n <= 20:
        pairs, _ = oracles.min_length_one_color_exact(one.coords, dom)
        label = "ii"
    else:
        pairs, _ = oracles.min_length_one_color_greedy(one.coords, dom)
        label = "ii_greedy"     # exact one-color is capped at n=20
    m2 = stable.Matching(pairs, np.empty(0, dtype=np.int64), "one-color")
    panels.append((f"panel_{label}_minlen_one_color.svg", one, m2))
    m3 = stable.stable_match(two, "two-color")
    panels.append(("panel_iii_stable_two_color.svg", two, m3))
    pairs4, _ = oracles.min_length_bipartite(red.coords, blue.coords, dom)
    pairs4 = pairs4.copy()
    pairs4[:, 1] += len(red)
    m4 = stable.Matching(pairs4, np.empty(0, dtype=np.int64), "two-color")
    panels.append(("panel_iv_minlen_two_color.svg", two, m4))

    written = []
    for name, pts, matching in panels:
        path = out / name
        path.write_text(svg.render_matching(pts, matching))
        written.append(path)
    return written


@main.command("oracle-suite")
def oracle_suite_cmd():
    """Cross-check every fast component against its brute-force oracle."""
    results = oracle_suite()
    width = max(len(name) for name, _ in results)
    bad = 0
    for name, ok in results:
        click.echo(f"{name.ljust(width)}  {'PASS' if ok else 'FAIL'}")
        bad += not ok
    sys.exit(1 if bad else 0)


def oracle_suite():
    """List of (check name, passed) over fixed-seed brute-force comparisons."""
    checks = []
    dom = geometry.Domain(2, 8.0, "torus")

    ok = True
    for seed in range(40):
        rng = np.random.default_rng(1000 + seed)
        nn = int(rng.integers(2, 7))
        red = geometry.sample_binomial(dom, nn, geometry.RED, 2000 + seed)
        blue = geometry.sample_binomial(dom, nn, geometry.BLUE, 3000 + seed)
        want = oracles.brute_force_stable(red.coords, blue.coords, dom)
        got = stable.stable_match(geometry.merge(red, blue), "two-color")
        partner = got.partner_array()
        ok &= all(partner[r] == b + nn for r, b in want)
    checks.append(("stable-match-vs-enumeration", ok))

    ok = True
    for seed in range(40):
        red = geometry.sample_binomial(dom, 6, geometry.RED, 4000 + seed)
        blue = geometry.sample_binomial(dom, 7, geometry.BLUE, 5000 + seed)
        _, cost = oracles.min_length_bipartite(red.coords, blue.coords, dom)
        best = np.inf
        from itertools import permutations
        dm = geometry.pairwise_distances(dom, red.coords, blue.coords)
        for perm in permutations(range(7), 6):
            best = min(best, float(dm[np.arange(6), list(perm)].sum()))
        ok &= abs(cost - best) < 1e-9
    checks.append(("assignment-vs-permutations", ok))

    ok = True
    for seed in range(40):
        pts = geometry.sample_binomial(dom, 8, geometry.RED, 6000 + seed)
        _, cost = oracles.min_length_one_color_exact(pts.coords, dom)
        best = _one_color_brute(pts.coords, dom)
        ok &= abs(cost - best) < 1e-9
    checks.append(("pairing-dp-vs-recursion", ok))

    ok = True
    for seed in range(20):
        pts = geometry.sample_binomial(dom, 60, geometry.RED, 7000 + seed)
        timeline = stable.match_radii_timeline(pts, "one-color")
        rounds = stable.stable_match(pts, "one-color")
        ok &= np.array_equal(np.sort(timeline.pairs, axis=0),
                             np.sort(rounds.pairs, axis=0))
    checks.append(("ball-growth-vs-round-iteration", ok))

    ok = True
    for d in (2, 3, 10, 100):
        a = exponent.solve_s(d, method="quad").s
        b = exponent.solve_s(d, method="closed").s
        ok &= abs(a - b) < 1e-9
    checks.append(("exponent-quad-vs-closed-form", ok))
    return checks


def _one_color_brute(coords, dom):
    n = len(coords)
    dm = geometry.pairwise_distances(dom, coords, coords)

    def rec(idx):
        if not idx:
            return 0.0
        i = idx[0]
        best = np.inf
        for pos in range(1, len(idx)):
            j = idx[pos]
            rest = idx[1:pos] + idx[pos + 1:]
            best = min(best, dm[i, j] + rec(rest))
        return best

    return rec(tuple(range(n)))


if __name__ == "__main__":
    main()
