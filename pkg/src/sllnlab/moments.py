"""Monte Carlo moments of partial and maximal sums, the moment-condition
series, and level-by-level checks of the maximal-moment recursions.

Conventions
-----------
* Fields are sampled from the lattice origin; ``S(m; n)`` sums the sites
  ``(m, m + n]`` (rectangles) or the annulus ``Q_{m+n} \\ Q_m`` (spheres).
* The supremum over offsets ``m`` is replaced by ``m = 0`` when the generator
  is stationary (rectangular sums only: annuli are not shift invariant) and
  by a finite, recorded probe set otherwise.
* Replicates are drawn in fixed blocks from named streams; every table is a
  deterministic function of the master seed.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fields import FieldGenerator
from .lattice import shell_sums
from .parallel import concat_blocks, run_blocks
from .scaling import (
    InadmissiblePlan,
    ScalingFunction,
    c_const,
    d_ap,
    doubling_bounds,
    kappa_const,
    plan_base,
)
from .series import VerdictRule, make_report
from .stable import StableParams, sample_sas

REC_SIGMAS = 2.0


class HeavyTailWarning(RuntimeWarning):
    pass


# ---------------------------------------------------------------- scalar moments


@dataclass(frozen=True)
class SamplerSpec:
    """``gauss`` (sd ``scale``), ``sas`` (``alpha``, ``scale``), ``constant`` (``value``)
    or ``custom`` (``draw(rng, count)``)."""

    kind: str
    alpha: float = 2.0
    scale: float = 1.0
    value: float = 0.0
    draw: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("gauss", "sas", "constant", "custom"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.kind == "sas":
            StableParams(self.alpha, self.scale)
        if self.kind == "custom" and self.draw is None:
            raise ValueError("custom sampler needs a draw(rng, count) callable")

    @property
    def stable_alpha(self) -> float | None:
        return self.alpha if self.kind == "sas" and self.alpha < 2 else None

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.kind == "gauss":
            return self.scale * rng.standard_normal(count)
        if self.kind == "sas":
            return sample_sas(StableParams(self.alpha, self.scale), rng, count)
        if self.kind == "constant":
            return np.full(count, float(self.value))
        return np.asarray(self.draw(rng, count), dtype=float)


@dataclass(frozen=True)
class MomentEstimate:
    p: float
    value: float
    replicates: int
    std_error: float
    seed: int
    stream: str
    heavy_tail: bool = False

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError("absolute moments are nonnegative")


def check_moment_order(alpha: float | None, p: float) -> bool:
    """Raise if ``E|X|^p`` is infinite; return True when its variance is infinite."""
    if not p > 0:
        raise ValueError(f"moment order p must be positive, got {p}")
    if alpha is None or alpha >= 2:
        return False
    if p >= alpha:
        raise ValueError(
            f"moment order p = {p:g} >= alpha = {alpha:g}: E|X|^p is infinite for stable inputs; "
            "the moment conditions are applied with p < alpha (1 < alpha < 2 in the LFSS setting)"
        )
    return 2 * p >= alpha


def _heavy(flag: bool, what: str) -> None:
    if flag:
        warnings.warn(f"{what}: 2p >= alpha, standard errors are not reliable", HeavyTailWarning, stacklevel=3)


def _mean_se(x: np.ndarray, axis: int = 0):
    n = x.shape[axis]
    mean = x.mean(axis=axis)
    se = x.std(axis=axis, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def estimate_abs_moment(
    spec: SamplerSpec, p: float, replicates: int = 100_000, seed: int = 0, threads: int = 1, name: str = "moment/abs"
) -> MomentEstimate:
    heavy = check_moment_order(spec.stable_alpha, p)
    _heavy(heavy, "estimate_abs_moment")
    x = concat_blocks(run_blocks(lambda rng, n: np.abs(spec.sample(rng, n)) ** p, replicates, seed, name, threads, block=8192))
    m, se = _mean_se(x)
    return MomentEstimate(float(p), float(m), int(replicates), float(se), int(seed), name, heavy)


# ---------------------------------------------------------------- batched sums


def _prefix(vals: np.ndarray) -> np.ndarray:
    """Zero-padded cumulative sums over all lattice axes; ``P[i] = sum_{k < i} v[k]``."""
    out = np.pad(np.asarray(vals, dtype=float), [(0, 0)] + [(1, 0)] * (vals.ndim - 1))
    for ax in range(1, out.ndim):
        np.cumsum(out, axis=ax, out=out)
    return out


def _rect_sum(P: np.ndarray, m, n) -> np.ndarray:
    """``S(m; n)`` per replicate by inclusion-exclusion."""
    d = P.ndim - 1
    lo = [mj + 1 for mj in m]
    hi = [mj + nj + 1 for mj, nj in zip(m, n)]
    tot = np.zeros(P.shape[0])
    for corner in itertools.product((0, 1), repeat=d):
        idx = tuple(hi[j] if c else lo[j] for j, c in enumerate(corner))
        tot += (-1) ** (d - sum(corner)) * P[(slice(None),) + idx]
    return tot


def _sum_grid(P: np.ndarray, m, ext) -> np.ndarray:
    """``G[:, k-1] = S(m; k)`` for ``<1> <= k <= ext``."""
    d = P.ndim - 1
    tot = None
    for corner in itertools.product((0, 1), repeat=d):
        idx = tuple(
            slice(m[j] + 2, m[j] + ext[j] + 2) if c else slice(m[j] + 1, m[j] + 2) for j, c in enumerate(corner)
        )
        part = (-1) ** (d - sum(corner)) * P[(slice(None),) + idx]
        tot = part if tot is None else tot + part
    return tot


def _levels(n_max, d: int) -> list:
    return list(itertools.product(range(n_max + 1), repeat=d))


def _as_phis(phis, d: int) -> tuple:
    if isinstance(phis, ScalingFunction):
        return (phis,) * d
    phis = tuple(phis)
    if len(phis) != d:
        raise ValueError(f"need {d} normalizers, got {len(phis)}")
    return phis


def _x_max(bases, n_max: int) -> float:
    return max(1e6, 2.0 * max(bases) ** (n_max + 1))


def _plan(phis, p, a, n_max, strict):
    """Doubling bounds then the base plan; raises before any sampling."""
    guess = (a,) if isinstance(a, (int, np.integer)) else (a if a is not None else (64,))
    xm = _x_max(guess, n_max)
    C_lows = [doubling_bounds(phi, x_max=xm).C_low for phi in phis]
    return plan_base(C_lows, p, a, strict=strict)


def _log_denominator(phis, bases, level, p) -> float:
    return p * sum(float(phi.log(float(b) ** n)) for phi, b, n in zip(phis, bases, level))


# ---------------------------------------------------------------- condition series


def default_rect_probes(level, bases, stationary: bool) -> list:
    """``{0}`` when stationary, else ``0``, ``a^n`` and ``a^(n_j) e_j`` per axis."""
    d = len(level)
    if stationary:
        return [(0,) * d]
    an = tuple(b**n for b, n in zip(bases, level))
    out = [(0,) * d, an]
    for j in range(d):
        out.append(tuple(an[j] if i == j else 0 for i in range(d)))
    return out


def _probe_table(levels, bases, stationary, m_probes):
    if m_probes is not None:
        fixed = [tuple(int(x) for x in m) for m in m_probes]
        if not fixed:
            raise ValueError("probe list is empty")
        return [fixed for _ in levels]
    return [default_rect_probes(lv, bases, stationary) for lv in levels]


def rect_moment_table(
    generator: FieldGenerator, levels, bases, p: float, probes, replicates: int, seed: int, threads: int = 1, name: str = "moments/rect"
) -> np.ndarray:
    """Per-replicate ``|S(m; a^n)|^p``, shape ``(replicates, levels, probes)``."""
    d = generator.d
    P_count = len(probes[0])
    if any(len(pr) != P_count for pr in probes):
        raise ValueError("every level needs the same number of probes")
    spans = [tuple(b**n for b, n in zip(bases, lv)) for lv in levels]
    ext = tuple(max(m[j] + s[j] for s, pr in zip(spans, probes) for m in pr) + 1 for j in range(d))
    prepared = generator.prepare(ext)
    block = _block_size(generator, ext)

    def job(rng, count):
        P = _prefix(generator.sample(rng, count, ext, prepared))
        out = np.empty((count, len(levels), P_count))
        for i, (s, pr) in enumerate(zip(spans, probes)):
            for k, m in enumerate(pr):
                out[:, i, k] = np.abs(_rect_sum(P, m, s)) ** p
        return out

    return concat_blocks(run_blocks(job, replicates, seed, name, threads, block))


def _block_size(generator: FieldGenerator, ext, target_bytes: int = 128 * 1024**2) -> int:
    per = 8 * 5 * generator.cells_per_replicate(ext)
    return int(max(1, min(4096, target_bytes // max(per, 1))))


def _sup_over_probes(table: np.ndarray, log_den: np.ndarray):
    mean, se = _mean_se(table)
    scale = np.exp(-log_den)[:, None]
    mean, se = mean * scale, se * scale
    best = np.argmax(mean, axis=1)
    rows = np.arange(mean.shape[0])
    return mean[rows, best], se[rows, best], best


def condition_series_rect(
    generator: FieldGenerator,
    phis,
    a,
    p: float,
    n_max: int,
    m_probes=None,
    replicates: int = 1000,
    seed: int = 0,
    threads: int = 1,
    strict: bool = True,
    rule: VerdictRule = VerdictRule(),
):
    """Terms ``sup_m E|S(m; a^n)|^p / prod_j phi_j(a^(n_j))^p`` for ``n <= n_max``.

    ``a`` may be a single base or one per axis (multi-base variant).
    """
    d = generator.d
    phis = _as_phis(phis, d)
    heavy = check_moment_order(generator.stable_alpha, p)
    plan = _plan(phis, p, a, n_max, strict)
    if not generator.stationary and m_probes is not None and len(m_probes) == 0:
        raise ValueError("non-stationary generator needs a nonempty probe set")
    _heavy(heavy, "condition_series_rect")
    bases = plan.a
    levels = _levels(n_max, d)
    probes = _probe_table(levels, bases, generator.stationary, m_probes)
    tab = rect_moment_table(generator, levels, bases, p, probes, replicates, seed, threads)
    log_den = np.array([_log_denominator(phis, bases, lv, p) for lv in levels])
    terms, se, best = _sup_over_probes(tab, log_den)
    consts = {
        "p": float(p),
        "a": list(bases),
        "phi": [phi.describe() for phi in phis],
        "plan": plan.as_dict(),
        "generator": generator.describe(),
        "stationary": generator.stationary,
        "probe_mode": "fixed" if m_probes is not None else ("m=0 (stationary)" if generator.stationary else "default"),
    }
    notes = [] if plan.admissible else ["base plan inadmissible (run with strict=False)"]
    return make_report(
        "rect", levels, terms, se, rule,
        constants=consts, probes=[probes[i][b] for i, b in enumerate(best)],
        replicates=replicates, seed=seed, heavy_tail=heavy, notes=notes,
    )


def default_sphere_probes(n: int, a: int) -> list:
    return [0, a**n]


def sphere_cumulative(generator: FieldGenerator, r_max: int, norm: str, rng, count, prepared=None) -> np.ndarray:
    """``C[:, r]`` = sum over ``Q_r`` per replicate, ``r = 0..r_max``."""
    shape = (r_max + 1,) * generator.d
    vals = generator.sample(rng, count, shape, prepared)
    return np.cumsum(shell_sums(vals, r_max, norm, batch=True), axis=1)


def condition_series_sphere(
    generator: FieldGenerator,
    f: ScalingFunction,
    a,
    p: float,
    n_max: int,
    norm: str,
    m_probes=None,
    replicates: int = 1000,
    seed: int = 0,
    threads: int = 1,
    strict: bool = True,
    rule: VerdictRule = VerdictRule(),
):
    """Terms ``sup_m E|S(m; a^n)|^p / f(a^n)^p`` over annuli ``Q_{m+a^n} \\ Q_m``."""
    heavy = check_moment_order(generator.stable_alpha, p)
    plan = _plan((f,), p, a, n_max, strict)
    _heavy(heavy, "condition_series_sphere")
    base = plan.a[0]
    levels = list(range(n_max + 1))
    probes = [list(m_probes) if m_probes is not None else default_sphere_probes(n, base) for n in levels]
    if any(len(pr) != len(probes[0]) for pr in probes) or not probes[0]:
        raise ValueError("probe sets must be nonempty and of equal size")
    r_max = max(m + base**n for n, pr in zip(levels, probes) for m in pr)
    prepared = generator.prepare((r_max + 1,) * generator.d)
    block = _block_size(generator, (r_max + 1,) * generator.d)

    def job(rng, count):
        C = sphere_cumulative(generator, r_max, norm, rng, count, prepared)
        out = np.empty((count, len(levels), len(probes[0])))
        for i, (n, pr) in enumerate(zip(levels, probes)):
            for k, m in enumerate(pr):
                out[:, i, k] = np.abs(C[:, m + base**n] - C[:, m]) ** p
        return out

    tab = concat_blocks(run_blocks(job, replicates, seed, "moments/sphere", threads, block))
    log_den = np.array([p * float(f.log(float(base) ** n)) for n in levels])
    terms, se, best = _sup_over_probes(tab, log_den)
    consts = {
        "p": float(p), "a": base, "f": f.describe(), "norm": norm,
        "plan": plan.as_dict(), "generator": generator.describe(),
    }
    notes = [] if plan.admissible else ["base plan inadmissible (run with strict=False)"]
    return make_report(
        "sphere", [(n,) for n in levels], terms, se, rule,
        constants=consts, probes=[probes[i][b] for i, b in enumerate(best)],
        replicates=replicates, seed=seed, heavy_tail=heavy, notes=notes,
    )


# ---------------------------------------------------------------- recursion traces


@dataclass(frozen=True)
class SphereGeometry:
    f: ScalingFunction
    a: int
    p: float
    norm: str

    def constants(self, C_low: float) -> tuple:
        """``(c, D)``: ``c = (1+(a-1)2^(p-1))/C^(p floor log2 a)``, ``D = D_{a,p}`` for
        ``p >= 1``; for ``p < 1`` the subadditive route gives ``c = kappa``, ``D = 1``."""
        if self.p >= 1:
            return c_const(self.a, self.p, C_low), d_ap(self.a, self.p)
        return kappa_const(self.a, self.p, C_low), 1.0


@dataclass(frozen=True)
class RectGeometry:
    phis: tuple
    a: int
    p: float
    s: int | None = None  # None: every s = 1..d

    def constants(self, a_s: int, C_low: float) -> tuple:
        """``(k_s, 1)`` for ``p <= 1``; ``(c_s, D_{a,p})`` for ``p > 1``."""
        if self.p <= 1:
            return kappa_const(a_s, self.p, C_low), 1.0
        return c_const(a_s, self.p, C_low), d_ap(a_s, self.p)


@dataclass
class RecursionTrace:
    """Level-wise check of ``F(N) <= c F(N') + D drive(N')`` with ``N'`` the predecessor level."""

    kind: str
    s: list  # step coordinate per row (0 for spheres)
    levels: list  # LHS level per row
    F: np.ndarray
    F_se: np.ndarray
    F_prev: np.ndarray
    F_prev_se: np.ndarray
    drive: np.ndarray
    drive_se: np.ndarray
    c: np.ndarray
    D: np.ndarray
    F0: float
    min_gap: float
    negative_gaps: int
    replicates: int
    seed: int
    constants: dict = field(default_factory=dict)

    @property
    def bound(self) -> np.ndarray:
        return self.c * self.F_prev + self.D * self.drive

    @property
    def slack(self) -> np.ndarray:
        return self.bound - self.F

    @property
    def tolerance(self) -> np.ndarray:
        return REC_SIGMAS * np.sqrt(self.F_se**2 + (self.c * self.F_prev_se) ** 2 + (self.D * self.drive_se) ** 2)

    @property
    def violations(self) -> list:
        bad = np.flatnonzero(-self.slack > self.tolerance)
        return [(self.s[i], self.levels[i]) for i in bad]

    @property
    def holds(self) -> bool:
        return not self.violations and self.negative_gaps == 0 and self.F0 == 0

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        d = len(self.levels[0]) if self.levels else 1
        w.writerow(["s"] + [f"n{i + 1}" for i in range(d)] + ["F", "F_se", "F_prev", "drive", "c", "D", "bound", "slack", "tolerance"])
        for i in range(len(self.levels)):
            w.writerow(
                [self.s[i]] + list(self.levels[i])
                + [repr(float(x)) for x in (self.F[i], self.F_se[i], self.F_prev[i], self.drive[i], self.c[i], self.D[i], self.bound[i], self.slack[i], self.tolerance[i])]
            )
        return out.getvalue()

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "rows": len(self.levels),
            "F0": self.F0,
            "min_gap": self.min_gap,
            "negative_gaps": self.negative_gaps,
            "violations": [[s, list(lv)] for s, lv in self.violations],
            "min_slack_over_tolerance": float(np.min((self.slack + 1e-300) / np.maximum(self.tolerance, 1e-300))) if len(self.F) else None,
            "holds": self.holds,
            "replicates": self.replicates,
            "seed": self.seed,
            "constants": self.constants,
        }


def estimate_recursion_trace(
    generator: FieldGenerator,
    geometry,
    n_max: int,
    m_probes=None,
    replicates: int = 10_000,
    seed: int = 0,
    threads: int = 1,
) -> RecursionTrace:
    if isinstance(geometry, SphereGeometry):
        return _sphere_trace(generator, geometry, n_max, m_probes, replicates, seed, threads)
    if isinstance(geometry, RectGeometry):
        return _rect_trace(generator, geometry, n_max, m_probes, replicates, seed, threads)
    raise TypeError("geometry must be SphereGeometry or RectGeometry")


def _require_contraction(c: float, what: str) -> None:
    if not c < 1:
        raise InadmissiblePlan(f"base plan inadmissible: {what} = {c:.6g} >= 1")


def _sphere_trace(gen, geo: SphereGeometry, n_max, m_probes, replicates, seed, threads) -> RecursionTrace:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    check_moment_order(gen.stable_alpha, geo.p)
    a, p, f = geo.a, geo.p, geo.f
    plan = plan_base([doubling_bounds(f, x_max=_x_max((a,), n_max)).C_low], p, a, strict=True)
    c, D = geo.constants(plan.C_low[0])
    _require_contraction(c, "c")
    # LHS level N = n + 1 probes K_N; predecessor probes are the closure K_N + l a^n
    base = [list(m_probes) if m_probes is not None else default_sphere_probes(N, a) for N in range(1, n_max + 1)]
    closure = [sorted({k + l * a**n for k in base[n] for l in range(a)}) for n in range(n_max)]
    r_max = max(max(k + a ** (n + 1) for k in base[n]) for n in range(n_max))
    r_max = max(r_max, max(k + a**n for n in range(n_max) for k in closure[n]))
    shape = (r_max + 1,) * gen.d
    prepared = gen.prepare(shape)
    logf = [p * float(f.log(float(a) ** n)) for n in range(n_max + 1)]

    def job(rng, count):
        C = sphere_cumulative(gen, r_max, geo.norm, rng, count, prepared)

        def gap_and_sum(k, J, lf):
            part = np.abs(C[:, k + 1 : k + J + 1] - C[:, k : k + 1])
            S = part[:, -1] ** p
            M = part.max(axis=1) ** p
            w = math.exp(-lf)
            return (M - S) * w, S * w, float((M - S).min())

        out = {"lhs": [], "prev": [], "drive": [], "zero": [], "min": [np.inf]}
        for n in range(n_max):
            L = [gap_and_sum(k, a ** (n + 1), logf[n + 1]) for k in base[n]]
            R = [gap_and_sum(k, a**n, logf[n]) for k in closure[n]]
            out["lhs"].append(np.stack([g for g, _, _ in L], axis=1))
            out["prev"].append(np.stack([g for g, _, _ in R], axis=1))
            out["drive"].append(np.stack([s for _, s, _ in R], axis=1))
            out["min"].append(min(m for _, _, m in L + R))
        out["zero"] = np.stack([gap_and_sum(k, 1, logf[0])[0] for k in closure[0]], axis=1)
        return out

    blocks = run_blocks(job, replicates, seed, "recursion/sphere", threads, _block_size(gen, shape))
    F, Fse, Fp, Fpse, dr, drse = ([] for _ in range(6))
    for n in range(n_max):
        for lst, lst_se, key in ((F, Fse, "lhs"), (Fp, Fpse, "prev"), (dr, drse, "drive")):
            tab = np.concatenate([b[key][n] for b in blocks], axis=0)
            mean, se = _mean_se(tab)
            i = int(np.argmax(mean))
            lst.append(mean[i])
            lst_se.append(se[i])
    zero = np.concatenate([b["zero"] for b in blocks], axis=0)
    gmin = min(min(b["min"]) for b in blocks)
    negs = sum(int(np.sum(np.concatenate([b[k][n] for b in blocks]) < 0)) for k in ("lhs", "prev") for n in range(n_max))
    rows = n_max
    return RecursionTrace(
        "sphere", [0] * rows, [(n + 1,) for n in range(n_max)],
        np.array(F), np.array(Fse), np.array(Fp), np.array(Fpse), np.array(dr), np.array(drse),
        np.full(rows, c), np.full(rows, D), float(np.abs(zero).max()), float(gmin), negs, replicates, seed,
        {"a": a, "p": p, "f": f.describe(), "norm": geo.norm, "c": c, "D": D, "C_low": plan.C_low[0],
         "probes": [list(b) for b in base], "generator": gen.describe()},
    )


def _rect_trace(gen, geo: RectGeometry, n_max, m_probes, replicates, seed, threads) -> RecursionTrace:
    d = gen.d
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    check_moment_order(gen.stable_alpha, geo.p)
    phis = _as_phis(geo.phis, d)
    p = geo.p
    plan = plan_base([doubling_bounds(phi, x_max=_x_max((geo.a,), n_max)).C_low for phi in phis], p, geo.a, strict=True)
    bases = plan.a
    svals = list(range(1, d + 1)) if geo.s is None else [int(geo.s)]
    if any(not 1 <= s <= d for s in svals):
        raise ValueError(f"s must lie in 1..{d}")
    consts = {s: geo.constants(bases[s - 1], plan.C_low[s - 1]) for s in svals}
    for s, (c, _) in consts.items():
        _require_contraction(c, f"c_{s}")
    stationary = gen.stationary and m_probes is None
    if m_probes is not None:
        base = [tuple(int(x) for x in m) for m in m_probes]
    elif stationary:
        base = [(0,) * d]
    else:
        top = tuple(b**n_max for b in bases)
        base = [(0,) * d, top] + [tuple(top[j] if i == j else 0 for i in range(d)) for j in range(d)]
    levels = _levels(n_max, d)
    ext = tuple(b**n_max for b in bases)

    # rows: (s, N) with N_s >= 1; predecessor N - e_s with closure offsets m + l a^(N_s - 1) e_s
    rows = [(s, N) for s in svals for N in levels if N[s - 1] >= 1]

    def closure(s, N, m):
        if stationary:
            return [m]
        step = bases[s - 1] ** (N[s - 1] - 1)
        return [tuple(mj + (l * step if j == s - 1 else 0) for j, mj in enumerate(m)) for l in range(bases[s - 1])]

    offsets = sorted({o for s, N in rows for m in base for o in [m] + closure(s, N, m)})
    field_ext = tuple(max(o[j] for o in offsets) + ext[j] + 2 for j in range(d))
    prepared = gen.prepare(field_ext)
    logden = {N: _log_denominator(phis, bases, N, p) for N in levels}

    def Ms(G, N, s):
        """``M_s^p`` for level ``N`` from the grid ``G[:, k-1] = S(o; k)``."""
        idx = tuple(slice(0, bases[j] ** N[j]) if j < s else bases[j] ** N[j] - 1 for j in range(d))
        sub = np.abs(G[(slice(None),) + idx])
        return (sub.reshape(sub.shape[0], -1).max(axis=1) if s else sub) ** p

    def job(rng, count):
        P = _prefix(gen.sample(rng, count, field_ext, prepared))
        grids = {o: _sum_grid(P, o, ext) for o in offsets}
        cache = {}

        def M(o, N, s):
            key = (o, N, s)
            if key not in cache:
                cache[key] = Ms(grids[o], N, s)
            return cache[key]

        lhs, prev, drive, gmin = [], [], [], np.inf
        for s, N in rows:
            Np = tuple(x - 1 if j == s - 1 else x for j, x in enumerate(N))
            wN, wP = math.exp(-logden[N]), math.exp(-logden[Np])
            g = [M(m, N, s) - M(m, N, s - 1) for m in base]
            cl = [o for m in base for o in closure(s, N, m)]
            gp = [M(o, Np, s) - M(o, Np, s - 1) for o in cl]
            dv = [M(o, Np, s - 1) for o in cl]
            gmin = min(gmin, min(float(x.min()) for x in g + gp))
            lhs.append(np.stack(g, axis=1) * wN)
            prev.append(np.stack(gp, axis=1) * wP)
            drive.append(np.stack(dv, axis=1) * wP)
        zero = np.stack([M(m, (0,) * d, s) - M(m, (0,) * d, s - 1) for m in base for s in svals], axis=1)
        return {"lhs": lhs, "prev": prev, "drive": drive, "zero": zero, "min": gmin}

    blocks = run_blocks(job, replicates, seed, "recursion/rect", threads, _block_size(gen, field_ext))
    out = {k: ([], []) for k in ("lhs", "prev", "drive")}
    negs = 0
    for i in range(len(rows)):
        for k, (vals, ses) in out.items():
            tab = np.concatenate([b[k][i] for b in blocks], axis=0)
            if k != "drive":
                negs += int(np.sum(tab < 0))
            mean, se = _mean_se(tab)
            j = int(np.argmax(mean))
            vals.append(mean[j])
            ses.append(se[j])
    zero = np.concatenate([b["zero"] for b in blocks], axis=0)
    gmin = min(b["min"] for b in blocks)
    return RecursionTrace(
        "rect", [s for s, _ in rows], [N for _, N in rows],
        np.array(out["lhs"][0]), np.array(out["lhs"][1]), np.array(out["prev"][0]), np.array(out["prev"][1]),
        np.array(out["drive"][0]), np.array(out["drive"][1]),
        np.array([consts[s][0] for s, _ in rows]), np.array([consts[s][1] for s, _ in rows]),
        float(np.abs(zero).max()), float(gmin), negs, replicates, seed,
        {"a": list(bases), "p": p, "phi": [phi.describe() for phi in phis], "C_low": list(plan.C_low),
         "c": {str(s): consts[s][0] for s in svals}, "D": {str(s): consts[s][1] for s in svals},
         "probes": [list(m) for m in base], "stationary_collapse": stationary, "generator": gen.describe()},
    )


# ---------------------------------------------------------------- LFSS moment law


@dataclass
class MomentLawReport:
    H: tuple
    alpha: float
    a: int
    p: float
    levels: list
    estimates: np.ndarray
    std_errors: np.ndarray
    C: float
    C_se: float
    predicted: np.ndarray
    ratios: np.ndarray
    expected_ratio: float
    slope: float
    expected_slope: float
    shift: tuple | None
    shift_estimates: np.ndarray | None
    shift_z: np.ndarray | None
    replicates: int
    seed: int

    def ratio_errors(self) -> np.ndarray:
        return np.abs(self.ratios / self.expected_ratio - 1.0)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["n", "estimate", "std_error", "predicted", "shift_estimate", "shift_z"])
        for i, n in enumerate(self.levels):
            se = "" if self.shift_estimates is None else repr(float(self.shift_estimates[i]))
            sz = "" if self.shift_z is None else repr(float(self.shift_z[i]))
            w.writerow([n, repr(float(self.estimates[i])), repr(float(self.std_errors[i])), repr(float(self.predicted[i])), se, sz])
        return out.getvalue()

    def summary(self) -> dict:
        return {
            "H": list(self.H), "alpha": self.alpha, "a": self.a, "p": self.p,
            "C_alpha_p": self.C, "C_se": self.C_se,
            "ratios": self.ratios.tolist(), "expected_ratio": self.expected_ratio,
            "slope": self.slope, "expected_slope": self.expected_slope,
            "max_ratio_error": float(self.ratio_errors().max()) if self.ratios.size else None,
            "max_shift_z": None if self.shift_z is None else float(np.abs(self.shift_z).max()),
            "replicates": self.replicates, "seed": self.seed,
        }


def lfss_moment_law(
    cfg, a: int, p: float, n_grid, replicates: int = 10_000, seed: int = 0, threads: int = 1, shift=None, method: str = "fft"
) -> MomentLawReport:
    """``E|S(m; <a^n>)|^p`` on the diagonal levels ``n`` against ``C a^(p n sum H)``.

    ``C = E|S(0; <1>)|^p`` is estimated from the same replicates.  ``shift``
    (an integer or a vector) adds the offset ``m`` for the shift-invariance check.
    """
    if not p < cfg.alpha:
        raise ValueError(f"moment law needs p < alpha, got p = {p:g}, alpha = {cfg.alpha:g}")
    heavy = check_moment_order(cfg.alpha, p)
    _heavy(heavy, "lfss_moment_law")
    d = cfg.d
    grid = sorted({int(n) for n in n_grid})
    if grid and grid[0] < 0:
        raise ValueError("levels must be >= 0")
    levels = [0] + [n for n in grid if n != 0]
    sh = None if shift is None else (tuple(int(x) for x in shift) if np.iterable(shift) else (int(shift),) * d)
    gen = FieldGenerator("lfss", d, lfss=cfg, method=method)
    top = a ** max(levels)
    ext = tuple(top + (sh[j] if sh else 0) + 1 for j in range(d))
    prepared = gen.prepare(ext)

    def job(rng, count):
        P = _prefix(gen.sample(rng, count, ext, prepared))
        base = np.stack([np.abs(_rect_sum(P, (0,) * d, (a**n,) * d)) ** p for n in levels], axis=1)
        if sh is None:
            return base, base[:, :0]
        moved = np.stack([np.abs(_rect_sum(P, sh, (a**n,) * d)) ** p for n in levels], axis=1)
        return base, moved

    base, moved = concat_blocks(run_blocks(job, replicates, seed, "moments/lfss-law", threads, _block_size(gen, ext)))
    est, se = _mean_se(base)
    C, C_se = float(est[0]), float(se[0])
    sumH = float(sum(cfg.H))
    keep = np.array([n in grid for n in levels])
    n_arr = np.array(levels, dtype=float)
    predicted = C * float(a) ** (p * sumH * n_arr)
    g_est = est[keep]
    g_n = n_arr[keep]
    # per unit step in n, so gaps in the grid do not distort the ratio
    ratios = (g_est[1:] / g_est[:-1]) ** (1.0 / np.diff(g_n)) if g_est.size > 1 else np.zeros(0)
    slope = float(np.polyfit(g_n, np.log(g_est), 1)[0]) if g_est.size > 1 else math.nan
    if sh is not None:
        m_est, m_se = _mean_se(moved)
        z = (m_est - est) / np.sqrt(m_se**2 + se**2)
    else:
        m_est = z = None
    return MomentLawReport(
        tuple(cfg.H), cfg.alpha, a, float(p), levels, est, se, C, C_se, predicted, ratios,
        float(a) ** (p * sumH), slope, p * sumH * math.log(a), sh, m_est, z, replicates, seed,
    )


# ---------------------------------------------------------------- C5 for orthogonal fields


def estimate_c5(generator: FieldGenerator, n_max: int, replicates: int = 2000, seed: int = 0, m_probes=None, threads: int = 1) -> dict:
    """``C5 = sup_(m,n) E S(m; 2^n)^2 / E S(0; 2^n)^2`` over probed offsets."""
    d = generator.d
    levels = _levels(n_max, d)
    bases = (2,) * d
    if m_probes is None:
        probes = [default_rect_probes(lv, bases, False) for lv in levels]
    else:
        probes = _probe_table(levels, bases, False, [(0,) * d] + [tuple(m) for m in m_probes])
    tab = rect_moment_table(generator, levels, bases, 2.0, probes, replicates, seed, threads, "moments/c5")
    mean, se = _mean_se(tab)
    ratio = mean / mean[:, :1]
    rse = se / mean[:, :1]
    i, k = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return {
        "C5": float(ratio[i, k]),
        "C5_se": float(rse[i, k]),
        "at_level": list(levels[i]),
        "at_offset": list(probes[i][k]),
        "table": [{"n": list(lv), "m": list(m), "ratio": float(ratio[a, b])} for a, lv in enumerate(levels) for b, m in enumerate(probes[a])],
        "replicates": replicates,
        "seed": seed,
    }
