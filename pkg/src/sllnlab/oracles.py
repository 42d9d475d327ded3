"""Slow, independent reference computations used to validate the fast paths.

Nothing here shares code with the production routines: sums are taken by
direct enumeration (``math.fsum`` for floats), and integrals by plain
Riemann sums or fixed Gauss-Legendre rules.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .lattice import IndexDomain, LatticeField, enumerate_domain


def _exact_sum(values):
    values = list(values)
    if values and all(isinstance(v, int) for v in values):
        return sum(values)
    return math.fsum(values)


def brute_rect_sum(fld: LatticeField, m, n):
    o = fld.origin
    ranges = [range(mi + 1, mi + ni + 1) for mi, ni in zip(m, n)]
    return _exact_sum(
        fld.values[tuple(k - oi for k, oi in zip(pt, o))].item() for pt in itertools.product(*ranges)
    )


def brute_abs_sum(fld: LatticeField, m, n) -> float:
    o = fld.origin
    ranges = [range(mi + 1, mi + ni + 1) for mi, ni in zip(m, n)]
    return math.fsum(abs(float(fld.values[tuple(k - oi for k, oi in zip(pt, o))])) for pt in itertools.product(*ranges))


def brute_maximal_sum(fld: LatticeField, m, n, s: int):
    d = fld.d
    ranges = [range(1, n[j] + 1) if j < s else (n[j],) for j in range(d)]
    return max(abs(brute_rect_sum(fld, m, k)) for k in itertools.product(*ranges))


def brute_spherical_sum(fld: LatticeField, m: int, n: int, norm: str):
    pts = enumerate_domain(IndexDomain.annulus(m, n, norm, fld.d))
    return _exact_sum(fld.values[p.coords].item() for p in pts)


def brute_running_max(fld: LatticeField, m: int, n: int, norm: str):
    return max(abs(brute_spherical_sum(fld, m, k, norm)) for k in range(1, n + 1))


def kernel_g_scalar(t, s, H, alpha, kappa=1.0) -> float:
    """Pointwise kernel product written out with plain floats."""
    out = kappa
    for tl, sl, hl in zip(t, s, H):
        beta = hl - 1.0 / alpha
        a = (tl - sl) ** beta if tl - sl > 0 else 0.0
        b = (-sl) ** beta if -sl > 0 else 0.0
        out *= a - b
    return out


def kernel_alpha_norm_riemann(H: float, alpha: float, cells: int = 400_000, cutoff: float = 1e5) -> float:
    """``int |g_H(1, s)|^alpha ds`` by a midpoint rule on a log-spaced grid.

    The analytic tail beyond ``cutoff`` (leading-order power law) is added so
    that three significant digits survive.
    """
    beta = H - 1.0 / alpha
    # s in (0, 1): |(1-s)^beta|^alpha, exact primitive avoids the endpoint singularity
    inner = 1.0 / (beta * alpha + 1.0)
    # s = -u, u > 0: |(1+u)^beta - u^beta|^alpha on a geometric midpoint grid
    edges = np.geomspace(1e-12, cutoff, cells + 1)
    mids = np.sqrt(edges[1:] * edges[:-1])
    f = np.abs((1.0 + mids) ** beta - mids**beta) ** alpha
    body = float(np.sum(f * np.diff(edges)))
    # below 1e-12: integrand ~ 1 - u^beta ... bounded, contribution <= 1e-12 * max
    expo = (beta - 1.0) * alpha + 1.0
    tail = (abs(beta) ** alpha) * cutoff**expo / (-expo) if beta != 0 else 0.0
    return inner + body + tail


def gauss_legendre_2d(f, lo, hi, panels, order: int = 20) -> float:
    """Tensor Gauss-Legendre rule over a product of panel partitions."""
    x, w = np.polynomial.legendre.leggauss(order)
    total = 0.0
    e1, e2 = panels
    for a1, b1 in zip(e1[:-1], e1[1:]):
        for a2, b2 in zip(e2[:-1], e2[1:]):
            u = 0.5 * (b1 - a1) * x + 0.5 * (b1 + a1)
            v = 0.5 * (b2 - a2) * x + 0.5 * (b2 + a2)
            U, V = np.meshgrid(u, v, indexing="ij")
            W = np.outer(w, w) * 0.25 * (b1 - a1) * (b2 - a2)
            total += float(np.sum(W * f(U, V)))
    return total


def sas_abs_mean_quadrature(alpha: float, lo: float = 1e-6, hi: float = 1e6, panels: int = 240, order: int = 20) -> float:
    """``E|X|`` for unit-scale SaS, ``1 < alpha <= 2``, from the characteristic function:
    ``(2/pi) int_0^inf (1 - exp(-t^alpha)) / t^2 dt``.

    Composite Gauss-Legendre in ``u = log t`` on ``[lo, hi]``; the pieces below
    ``lo`` (integrand ~ ``t^(alpha-2)``) and above ``hi`` (~ ``t^-2``) are added
    analytically.
    """
    if not 1 < alpha <= 2:
        raise ValueError("need 1 < alpha <= 2 for a finite first moment")
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(math.log(lo), math.log(hi), panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        u = 0.5 * (b - a) * x + 0.5 * (b + a)
        t = np.exp(u)
        # d t = t d u
        total += 0.5 * (b - a) * float(np.sum(w * -np.expm1(-(t**alpha)) / t))
    head = lo ** (alpha - 1) / (alpha - 1)
    tail = 1.0 / hi
    return 2.0 / math.pi * (total + head + tail)
