import numpy as np

from poismatch import (BLUE, ColoredPointSet, Domain, RED, TailEstimate,
                       render_matching, render_survival, stable_match)


def test_render_matching_wraps_torus_pairs():
    dom = Domain(2, 8.0, "torus")
    pts = ColoredPointSet(dom, [[0.2, 4.0], [7.8, 4.0]], [RED, BLUE])
    m = stable_match(pts, "two-color")
    out = render_matching(pts, m)
    assert out.startswith("<svg")
    # wrapped pair is drawn as two dashed half-segments
    assert out.count("stroke-dasharray") == 2
    assert out.count("<circle") == 2


def test_render_matching_plain_segment():
    dom = Domain(2, 8.0, "torus")
    pts = ColoredPointSet(dom, [[3.0, 4.0], [4.0, 4.0]], [RED, BLUE])
    out = render_matching(pts, stable_match(pts, "two-color"))
    assert "stroke-dasharray" not in out


def test_render_matching_deterministic():
    dom = Domain(2, 8.0, "torus")
    rng = np.random.default_rng(1)
    pts = ColoredPointSet(dom, rng.random((20, 2)) * 8.0,
                          np.arange(20) % 2)
    m = stable_match(pts, "two-color")
    assert render_matching(pts, m) == render_matching(pts, m)


def test_render_survival_with_fit():
    rng = np.random.default_rng(2)
    est = TailEstimate(rng.random(20_000) ** -1.0, scheme="stable")
    est.fitted()
    grid, surv = est.survival_curve()
    keep = surv > 0
    out = render_survival(grid[keep], surv[keep], est.fit, title="demo")
    assert out.startswith("<svg")
    assert "slope" in out and "demo" in out
