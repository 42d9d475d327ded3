"""Series reports, the convergence verdict rule, and deterministic checkers
for quasi-stationary, quasi-orthogonal and orthogonal fields.

Verdict rule (deterministic given the term table)
-------------------------------------------------
Terms are first aggregated into shells (``max(n) = N`` for multi-indexed
series, dyadic blocks ``[2^k, 2^(k+1))`` for integer-indexed ones).  Over the
last half of the nonzero shells a least-squares slope of ``log(term)`` gives
the tail ratio ``r = exp(slope)``:

* all shells zero            -> converges
* ``r < lo`` (default 0.95)  -> converges
* ``r > hi`` (default 1.05)  -> diverges
* otherwise, if the smallest last-half shell is at least ``floor`` (0.5)
  times the largest first-half shell, the terms are not decaying -> diverges
* otherwise                  -> inconclusive
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .scaling import ScalingFunction

CONVERGES, DIVERGES, INCONCLUSIVE = "converges", "diverges", "inconclusive"


@dataclass(frozen=True)
class VerdictRule:
    lo: float = 0.95
    hi: float = 1.05
    floor: float = 0.5

    def __post_init__(self):
        if not 0 < self.lo <= 1 <= self.hi:
            raise ValueError("verdict thresholds need 0 < lo <= 1 <= hi")


def series_verdict(shells, rule: VerdictRule = VerdictRule()) -> tuple[str, float]:
    t = np.asarray(shells, dtype=float)
    if np.any(~np.isfinite(t)):
        return DIVERGES, math.inf
    nz = np.flatnonzero(t > 0)
    if nz.size == 0:
        return CONVERGES, 0.0
    if nz.size < 3:
        return INCONCLUSIVE, math.nan
    tail = nz[nz.size // 2 :]
    slope = np.polyfit(tail.astype(float), np.log(t[tail]), 1)[0]
    r = float(math.exp(slope))
    if r < rule.lo:
        return CONVERGES, r
    if r > rule.hi:
        return DIVERGES, r
    head = nz[: nz.size // 2]
    if t[tail].min() >= rule.floor * t[head].max():
        return DIVERGES, r
    return INCONCLUSIVE, r


def shell_aggregate(levels, terms) -> np.ndarray:
    """Sum terms by ``max(n)`` (the level shell)."""
    levels = np.asarray(levels, dtype=np.int64).reshape(len(terms), -1)
    top = levels.max(axis=1)
    out = np.zeros(int(top.max()) + 1 if top.size else 0)
    np.add.at(out, top, np.asarray(terms, dtype=float))
    return out


def dyadic_blocks(terms_from_one) -> np.ndarray:
    """Block sums over ``[2^k, 2^(k+1))`` for a series indexed from 1."""
    t = np.asarray(terms_from_one, dtype=float)
    n = np.arange(1, t.size + 1)
    k = np.floor(np.log2(n)).astype(np.int64)
    out = np.zeros(int(k.max()) + 1)
    np.add.at(out, k, t)
    # drop an incomplete last block
    if t.size + 1 != 2 ** (k.max() + 1):
        out = out[:-1]
    return out


@dataclass
class MomentSeriesReport:
    kind: str
    levels: list
    terms: np.ndarray
    std_errors: np.ndarray
    shells: np.ndarray
    verdict: str
    ratio: float
    constants: dict = field(default_factory=dict)
    probes: list = field(default_factory=list)
    replicates: int = 0
    seed: int | None = None
    heavy_tail: bool = False
    notes: list = field(default_factory=list)

    @property
    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.terms)

    @property
    def total(self) -> float:
        return float(np.sum(self.terms))

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        d = len(self.levels[0]) if self.levels else 1
        w.writerow([f"n{i + 1}" for i in range(d)] + ["term", "partial_sum", "std_error"])
        for lv, t, ps, se in zip(self.levels, self.terms, self.partial_sums, self.std_errors):
            w.writerow(list(lv) + [repr(float(t)), repr(float(ps)), repr(float(se))])
        return out.getvalue()

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "tail_ratio": None if not math.isfinite(self.ratio) else self.ratio,
            "total": self.total,
            "terms": len(self.terms),
            "replicates": self.replicates,
            "seed": self.seed,
            "heavy_tail_unstable": self.heavy_tail,
            "probes": [list(p) if isinstance(p, tuple) else p for p in self.probes],
            "constants": self.constants,
            "notes": self.notes,
        }

    def summary_text(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    return str(x)


def make_report(kind, levels, terms, std_errors=None, rule: VerdictRule = VerdictRule(), **kw) -> MomentSeriesReport:
    order = sorted(range(len(levels)), key=lambda i: (max(levels[i]), tuple(levels[i])))
    levels = [tuple(int(x) for x in levels[i]) for i in order]
    terms = np.asarray(terms, dtype=float)[order]
    se = np.zeros_like(terms) if std_errors is None else np.asarray(std_errors, dtype=float)[order]
    shells = shell_aggregate(levels, terms)
    verdict, r = series_verdict(shells, rule)
    return MomentSeriesReport(kind, levels, terms, se, shells, verdict, r, **kw)


# ---------------------------------------------------------------- corollary bound


def corollary_bound_series(g: Callable, phis, a: int, p: float, n_max: int, rule: VerdictRule = VerdictRule()) -> MomentSeriesReport:
    """``sum_{n <= n_max} g(a^n_1, ..., a^n_d) / prod_j phi_j(a^n_j)^p`` (no sampling)."""
    phis = tuple(phis)
    d = len(phis)
    levels = list(np.ndindex(*(n_max + 1,) * d))
    terms = []
    for lv in levels:
        arg = tuple(a**x for x in lv)
        gv = float(g(arg))
        if gv == 0:
            terms.append(0.0)
            continue
        logden = sum(float(phi.log(float(a) ** x)) for phi, x in zip(phis, lv))
        terms.append(gv * math.exp(-p * logden))
    return make_report(
        "corollary", levels, terms, rule=rule,
        constants={"a": a, "p": p, "phi": [phi.spec() for phi in phis], "n_max": n_max},
    )


def klesov_interchange(variance: Callable, d: int, n_max: int, C5: float = 1.0) -> dict:
    """The orthogonal-field chain computed both ways.

    ``direct``       sum over ``n in [0, n_max]^d`` of ``C5 sum_{k <= 2^n} E xi(k)^2 / 4^|n|``
    ``interchanged`` sum over ``k`` of ``C5 E xi(k)^2`` times the geometric tail over
                     ``ceil(log2 k_i) <= n_i <= n_max``
    ``bound``        ``(4/3)^d C5 sum_k E xi(k)^2 / prod k_i^2`` (valid upper bound)
    """
    K = 2**n_max
    idx = np.indices((K,) * d) + 1
    var = np.asarray(variance(idx), dtype=float)
    # direct: prefix sums of the variance table at dyadic corners
    pref = var
    for ax in range(d):
        pref = np.cumsum(pref, axis=ax)
    direct = 0.0
    for lv in np.ndindex(*(n_max + 1,) * d):
        corner = tuple(2**x - 1 for x in lv)
        direct += C5 * pref[corner] * 4.0 ** (-sum(lv))
    # interchanged: per-coordinate geometric tails
    lo = np.ceil(np.log2(idx.astype(float)) - 1e-12).astype(np.int64)
    tails = np.ones(var.shape)
    for i in range(d):
        m = lo[i]
        tails *= (4.0 ** (-m) - 4.0 ** (-(n_max + 1))) * 4.0 / 3.0
    interchanged = float(C5 * np.sum(var * tails))
    bound = float((4.0 / 3.0) ** d * C5 * np.sum(var / np.prod(idx.astype(float) ** 2, axis=0)))
    return {"direct": float(direct), "interchanged": interchanged, "bound": bound, "n_max": n_max, "d": d}


# ---------------------------------------------------------------- quasi-stationary


def _axis_geometric(phi: ScalingFunction, a: int, levels: int) -> np.ndarray:
    """``a^n / phi(a^n)^2`` for ``n = 0..levels-1``, evaluated in log space."""
    n = np.arange(levels, dtype=float)
    return np.exp(n * math.log(a) - 2.0 * phi.log(np.exp(n * math.log(a))))


def _floor_log(i: np.ndarray, a: int) -> np.ndarray:
    """Exact ``floor(log_a i)`` for positive integers."""
    i = np.asarray(i, dtype=np.int64)
    out = np.zeros(i.shape, dtype=np.int64)
    p = np.full(i.shape, a, dtype=np.int64)
    while True:
        hit = p <= i
        if not hit.any():
            return out
        out += hit
        p = np.where(hit, p * a, p)


@dataclass
class QuasiStationaryReport:
    D: float
    D_axes: tuple
    h: Callable
    fh_partial: float
    fh_shells: np.ndarray
    verdict: str
    ratio: float
    lhs: float
    rhs_printed: float
    rhs_corrected: float
    truncation: dict

    @property
    def chain_holds(self) -> bool:
        return self.lhs <= self.rhs_corrected * (1 + 1e-12)

    @property
    def printed_chain_holds(self) -> bool:
        return self.lhs <= self.rhs_printed * (1 + 1e-12)


def check_quasi_stationary_condition(
    f: Callable, phi1: ScalingFunction, phi2: ScalingFunction, a: int = 2,
    levels: int = 64, index_levels: int = 10, rule: VerdictRule = VerdictRule(),
) -> QuasiStationaryReport:
    """``D``, the tails ``h(i, j)``, and the truncated ``sum f(i,j) h(i,j)`` for d = 2.

    ``levels`` truncates the geometric sums in ``n, m``; ``index_levels``
    truncates ``i, j < a^index_levels``.  ``f`` takes integer arrays ``(i, j)``.
    """
    g1 = _axis_geometric(phi1, a, levels)
    g2 = _axis_geometric(phi2, a, levels)
    D1, D2 = float(np.sum(g1)), float(np.sum(g2))
    D = D1 * D2
    # tail sums T[k] = sum_{n >= k} g[n]
    T1 = np.cumsum(g1[::-1])[::-1]
    T2 = np.cumsum(g2[::-1])[::-1]

    def h(i, j):
        li, lj = _floor_log(np.atleast_1d(i), a), _floor_log(np.atleast_1d(j), a)
        return T1[np.minimum(li, levels - 1)] * T2[np.minimum(lj, levels - 1)]

    if not math.isfinite(D):
        return QuasiStationaryReport(D, (D1, D2), h, math.inf, np.array([math.inf]), DIVERGES, math.inf, math.inf, math.inf, math.inf, {"levels": levels})
    I = a**index_levels
    i = np.arange(1, I)
    H1 = T1[_floor_log(i, a)]
    H2 = T2[_floor_log(i, a)]
    Ii, Jj = np.meshgrid(i, i, indexing="ij")
    F = np.asarray(f(Ii, Jj), dtype=float)
    FH = F * H1[:, None] * H2[None, :]
    blk = np.maximum(_floor_log(Ii, a), _floor_log(Jj, a))
    shells = np.zeros(index_levels)
    np.add.at(shells, blk.ravel(), FH.ravel())
    verdict, r = series_verdict(shells, rule)
    fh = float(FH.sum())
    f00 = float(np.asarray(f(np.array([0]), np.array([0]))).ravel()[0])
    # left side of the chain, truncated consistently: n, m < index_levels
    lhs = 0.0
    full = np.arange(0, I + 1)
    F_full = np.asarray(f(*np.meshgrid(full, full, indexing="ij")), dtype=float)
    C = F_full
    for ax in range(2):
        C = np.cumsum(C, axis=ax)
    for n in range(index_levels):
        for m in range(index_levels):
            lhs += g1[n] * g2[m] * C[a**n, a**m]
    axis_terms = float(np.sum(F_full[1:I, 0] * H1 * T2[0]) + np.sum(F_full[0, 1:I] * H2 * T1[0]))
    printed = D * f00 + fh
    corrected = printed + axis_terms
    return QuasiStationaryReport(
        D, (D1, D2), h, fh, shells, verdict, r, float(lhs), float(printed), float(corrected),
        {"levels": levels, "index_levels": index_levels, "a": a},
    )


# ---------------------------------------------------------------- quasi-orthogonal


def _series_1d(term: Callable[[np.ndarray], np.ndarray], N: int, rule: VerdictRule):
    n = np.arange(1, N + 1, dtype=float)
    t = np.asarray(term(n), dtype=float)
    blocks = dyadic_blocks(t)
    verdict, r = series_verdict(blocks, rule)
    return {"partial_sum": math.fsum(t), "verdict": verdict, "ratio": r, "terms": N}


def check_moricz_quasi_orthogonal(
    rho: Callable, lam1: ScalingFunction, lam2: ScalingFunction,
    index_levels: int = 14, rho_levels: int = 10, rule: VerdictRule = VerdictRule(),
) -> dict:
    """Evaluate the rho-summability condition, the log-weighted Moricz condition
    (unit variances), and the improved condition ``sum_k 1/lambda_j(k)^2 < inf``.
    """
    N = 2**index_levels - 1
    R = 2**rho_levels
    m = np.arange(R)
    M, Nn = np.meshgrid(m, m, indexing="ij")
    rho_tab = np.asarray(rho(M, Nn), dtype=float)
    blk = np.floor(np.log2(np.maximum(np.maximum(M, Nn), 1))).astype(int) + (np.maximum(M, Nn) > 0)
    shells = np.zeros(rho_levels + 1)
    np.add.at(shells, blk.ravel(), rho_tab.ravel())
    rv, rr = series_verdict(shells, rule)
    out = {"rho": {"partial_sum": float(rho_tab.sum()), "verdict": rv, "ratio": rr}}

    def moricz_axis(lam):
        return lambda n: np.log1p(n) ** 2 / lam(n) ** 2

    ax1 = _series_1d(moricz_axis(lam1), N, rule)
    ax2 = _series_1d(moricz_axis(lam2), N, rule)
    both = CONVERGES if ax1["verdict"] == ax2["verdict"] == CONVERGES else (
        DIVERGES if DIVERGES in (ax1["verdict"], ax2["verdict"]) else INCONCLUSIVE
    )
    out["moricz"] = {"partial_sum": ax1["partial_sum"] * ax2["partial_sum"], "verdict": both, "axes": [ax1, ax2]}
    imp = [_series_1d(lambda n, lam=lam: 1.0 / lam(n) ** 2, N, rule) for lam in (lam1, lam2)]
    out["improved"] = {
        "axes": imp,
        "holds": all(x["verdict"] == CONVERGES for x in imp),
        "failing_axes": [j + 1 for j, x in enumerate(imp) if x["verdict"] != CONVERGES],
    }
    return out


# ---------------------------------------------------------------- orthogonal


def check_orthogonal_conditions(variance: Callable, d: int, N: int, rule: VerdictRule = VerdictRule()) -> dict:
    """Truncated Klesov log-weighted series and the weakened ``sum E xi^2 / prod n_i^2`` series over ``[1, N]^d``."""
    idx = np.indices((N,) * d) + 1
    var = np.asarray(variance(idx), dtype=float)
    n = idx.astype(float)
    klesov_terms = var * np.prod((np.log1p(n) / n) ** 2, axis=0)
    weak_terms = var / np.prod(n**2, axis=0)
    k = np.floor(np.log2(n.max(axis=0))).astype(int)
    out = {}
    for name, terms in (("klesov", klesov_terms), ("weakened", weak_terms)):
        blocks = np.zeros(int(k.max()) + 1)
        np.add.at(blocks, k.ravel(), terms.ravel())
        if N + 1 != 2 ** (k.max() + 1):
            blocks = blocks[:-1]
        verdict, r = series_verdict(blocks, rule)
        out[name] = {"partial_sum": math.fsum(terms.ravel()), "verdict": verdict, "ratio": r}
    tail = _weak_tail_bound(variance, d, N)
    out["weakened"]["tail_bound"] = tail
    out["N"] = N
    out["d"] = d
    return out


def _weak_tail_bound(variance, d, N):
    """Analytic bound on ``sum_{n > N} sigma^2(n)/n^2`` for d = 1 power-law variances."""
    power = getattr(variance, "power", None)
    scale = getattr(variance, "scale", None)
    if d != 1 or power is None or power >= 1:
        return None
    # sum_{n > N} n^(power - 2) <= int_N^inf x^(power-2) dx
    return scale * N ** (power - 1) / (1 - power)
