"""Numeric solution of the stable-matching tail exponent equation.

The exponent s(d) is the root in (0, 1) of Phi_d(s) = 0 where

    Phi_d(s) = 2 w_d I1(s) - (w_{d-1} / (d - 1)) I2(s),
    I1(s) = integral_1^2 (t - 1)^(d-1) t^(-s) dt,
    I2(s) = integral_0^2 (1 - (t/2)^2)^((d-1)/2) t^(-s) dt,

and w_d = 2 pi^(d/2) / Gamma(d/2) is the surface area of the unit sphere
in R^d.  Phi_d is also the Mellin-type transform of the signed kernel
``kernel_g``; both routes are implemented and cross-checked.

Phi_d(0) equals the integral of the kernel, which is w_d / d exactly; as
s -> 1 the second integral diverges, so the root is unique in (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

LARGE_D_SWITCH = 150


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d (circumference 2*pi at d=2)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return float(2.0 * np.pi ** (d / 2.0) / special.gamma(d / 2.0))


def kernel_g(t, d: int):
    """Signed density whose s-transform is Phi_d; integrates to w_d / d."""
    t = np.asarray(t, dtype=float)
    wd = sphere_area(d)
    wdm1 = sphere_area(d - 1) if d >= 2 else 2.0
    pos = np.where((t >= 1.0) & (t <= 2.0),
                   2.0 * wd * np.maximum(t - 1.0, 0.0) ** (d - 1), 0.0)
    inside = np.clip(1.0 - (t / 2.0) ** 2, 0.0, None)
    neg = np.where((t >= 0.0) & (t <= 2.0),
                   (wdm1 / (d - 1)) * inside ** ((d - 1) / 2.0), 0.0)
    return pos - neg


def kernel_integral(d: int) -> float:
    """Adaptive quadrature of kernel_g over [0, 2] (exact value is w_d / d)."""
    val1, _ = integrate.quad(lambda t: kernel_g(t, d), 0.0, 1.0, epsabs=1e-13)
    val2, _ = integrate.quad(lambda t: kernel_g(t, d), 1.0, 2.0, epsabs=1e-13)
    return val1 + val2


def _i1_quad(s: float, d: int) -> float:
    # weight (t-1)^(d-1) handled by the algebraic-weight rule, so sharp
    # concentration near t=2 at large d costs nothing
    val, _ = integrate.quad(lambda t: t ** (-s), 1.0, 2.0,
                            weight="alg", wvar=(d - 1, 0), epsabs=1e-13)
    return val


def _i2_quad(s: float, d: int) -> float:
    # the t^(-s) endpoint singularity is the algebraic weight this time
    val, _ = integrate.quad(lambda t: (1.0 - (t / 2.0) ** 2) ** ((d - 1) / 2.0),
                            0.0, 2.0, weight="alg", wvar=(-s, 0), epsabs=1e-13)
    return val


def _i1_closed(s: float, d: int) -> float:
    # substitute u = t - 1: integral_0^1 u^(d-1) (1+u)^(-s) du
    return float(special.hyp2f1(s, d, d + 1.0, -1.0) / d)


def _log_i2_closed(s: float, d: int) -> float:
    # t = 2 sin(theta) turns I2 into a Beta integral:
    # I2 = 2^(-s) * B((1-s)/2, (d+1)/2)
    return float(-s * np.log(2.0) + special.betaln((1.0 - s) / 2.0, (d + 1.0) / 2.0))


def phi(s: float, d: int, method: str = "auto") -> float:
    """Phi_d(s) scaled by 1/w_d (same root, no underflow at large d)."""
    if not 0.0 <= s < 1.0:
        raise ValueError("s must lie in [0, 1)")
    if d < 2:
        raise ValueError("the exponent equation needs d >= 2")
    if method == "auto":
        method = "closed" if d > LARGE_D_SWITCH else "quad"
    # w_{d-1} / (w_d (d-1)) via log-gammas, stable at any d
    log_ratio = (-0.5 * np.log(np.pi)
                 + special.gammaln(d / 2.0) - special.gammaln((d - 1) / 2.0)
                 - np.log(d - 1.0))
    if method == "quad":
        return 2.0 * _i1_quad(s, d) - np.exp(log_ratio) * _i2_quad(s, d)
    if method == "closed":
        return 2.0 * _i1_closed(s, d) - np.exp(log_ratio + _log_i2_closed(s, d))
    raise ValueError(f"unknown method {method!r}")


@dataclass
class SolveResult:
    d: int
    s: float
    residual: float
    evaluations: int
    method: str


def solve_s(d: int, xtol: float = 1e-12, method: str = "auto") -> SolveResult:
    """Root of Phi_d in (0, 1) by bracketed Brent iteration.

    d = 1 is a boundary case where the equation degenerates; the exponent
    there is 1/2 and is returned as a constant.
    """
    if d == 1:
        return SolveResult(d=1, s=0.5, residual=0.0, evaluations=0, method="constant")
    if method == "auto":
        method = "closed" if d > LARGE_D_SWITCH else "quad"
    calls = [0]

    def f(s):
        calls[0] += 1
        return phi(s, d, method)

    # Phi(0) = (integral of the kernel)/w_d > 0 and Phi -> -inf as s -> 1
    root, info = optimize.brentq(f, 1e-9, 1.0 - 1e-9, xtol=xtol,
                                 full_output=True)
    return SolveResult(d=d, s=float(root), residual=float(phi(root, d, method)),
                      evaluations=calls[0] + 2, method=method)


def d2_gamma_residual(s: float) -> float:
    """Residual of the planar closed form at s.

    For d = 2 the exponent equation reduces to
    sqrt(pi) (2^s - 2 s) Gamma((2 - s)/2) = Gamma((3 - s)/2);
    the root of Phi_2 must satisfy it to solver precision.
    """
    lhs = np.sqrt(np.pi) * (2.0 ** s - 2.0 * s) * special.gamma((2.0 - s) / 2.0)
    rhs = special.gamma((3.0 - s) / 2.0)
    return float(lhs - rhs)


def s_asymptotics_table(dims) -> list:
    """Rows (d, s(d), s(d) * log d); the product stays bounded as d grows."""
    rows = []
    for d in dims:
        r = solve_s(int(d))
        rows.append((r.d, r.s, r.s * float(np.log(r.d)) if r.d > 1 else float("nan")))
    return rows
