"""End-to-end strong-law experiments and the LFSS block diagnostics.

Almost-sure convergence is tested through the tail supremum
``T(N) = max_{N <= |n| <= N_max} |S(Gamma_n)| / phi(n)`` of one realization
per replicate.  The run passes when the across-replicate median of ``T``
at the last checkpoint is at most ``1/decay_factor`` times its value at the
first checkpoint.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .fields import FieldGenerator
from .lattice import shell_sums
from .moments import _prefix, _sum_grid
from .parallel import concat_blocks, run_blocks
from .scaling import ScalingFunction, doubling_bounds, plan_base, power_log
from .stable import LfssConfig, increment_weights, sheet_values, simulate_increments


def geometric_subgrid(n_max: int, per_octave: int = 4, extra=()) -> np.ndarray:
    """Distinct integers ``round(2^(k/per_octave))`` up to ``n_max`` plus ``extra``."""
    if n_max < 1 or per_octave < 1:
        raise ValueError("need n_max >= 1 and per_octave >= 1")
    k = np.arange(int(math.floor(per_octave * math.log2(n_max))) + 1)
    pts = np.rint(2.0 ** (k / per_octave)).astype(np.int64)
    pts = np.concatenate([pts, np.asarray(list(extra), dtype=np.int64), [n_max]])
    return np.unique(pts[(pts >= 1) & (pts <= n_max)])


@dataclass(frozen=True)
class SllnExperiment:
    generator: FieldGenerator
    geometry: str  # "rect" | "sphere"
    phis: tuple  # one normalizer per axis (rect) or a single f (sphere)
    checkpoints: tuple
    replicates: int = 32
    seed: int = 0
    norm: str | None = None
    p: float = 1.0
    a: int | None = None
    theorem_mode: bool = True
    per_octave: int = 4
    decay_factor: float = 2.0
    negative_control: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.geometry not in ("rect", "sphere"):
            raise ValueError(f"geometry must be 'rect' or 'sphere', got {self.geometry!r}")
        phis = (self.phis,) if isinstance(self.phis, ScalingFunction) else tuple(self.phis)
        want = self.generator.d if self.geometry == "rect" else 1
        if len(phis) == 1 and want > 1:
            phis = phis * want
        if len(phis) != want:
            raise ValueError(f"{self.geometry} geometry needs {want} normalizer(s), got {len(phis)}")
        object.__setattr__(self, "phis", phis)
        cps = tuple(int(c) for c in self.checkpoints)
        if not cps or cps[0] < 1 or any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError(f"checkpoints must be positive and strictly increasing, got {cps}")
        object.__setattr__(self, "checkpoints", cps)
        if self.geometry == "sphere" and self.norm not in ("l2", "linf"):
            raise ValueError("sphere geometry needs norm 'l2' or 'linf'")
        if self.replicates < 1 or not self.decay_factor > 1:
            raise ValueError("need replicates >= 1 and decay_factor > 1")

    def describe(self) -> dict:
        return {
            "generator": self.generator.describe(),
            "geometry": self.geometry,
            "norm": self.norm,
            "phi": [phi.describe() for phi in self.phis],
            "checkpoints": list(self.checkpoints),
            "replicates": self.replicates,
            "seed": self.seed,
            "p": self.p,
            "a": self.a,
            "theorem_mode": self.theorem_mode,
            "per_octave": self.per_octave,
            "decay_factor": self.decay_factor,
            "negative_control": self.negative_control,
        }


@dataclass
class TailSupSeries:
    checkpoints: tuple
    values: np.ndarray  # (replicates, checkpoints)
    median: np.ndarray
    p90: np.ndarray
    decay_ratio: float
    decayed: bool
    negative_control: bool
    plan: dict
    experiment: dict = field(default_factory=dict)

    @property
    def expectation_met(self) -> bool:
        return self.decayed != self.negative_control

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        R = self.values.shape[0]
        w.writerow(["checkpoint"] + [f"rep_{i}" for i in range(R)] + ["median", "p90"])
        for j, c in enumerate(self.checkpoints):
            w.writerow([c] + [repr(float(v)) for v in self.values[:, j]] + [repr(float(self.median[j])), repr(float(self.p90[j]))])
        return out.getvalue()

    def summary(self) -> dict:
        return {
            "decayed": self.decayed,
            "negative_control": self.negative_control,
            "expectation_met": self.expectation_met,
            "decay_ratio": self.decay_ratio,
            "median_first": float(self.median[0]),
            "median_last": float(self.median[-1]),
            "plan": self.plan,
            "experiment": self.experiment,
        }

    def summary_text(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2)


def _experiment_plan(exp: SllnExperiment) -> dict:
    """Base-plan check; total refusal in theorem mode."""
    xm = max(1e6, 4.0 * exp.checkpoints[-1])
    C_lows = [doubling_bounds(phi, x_max=xm).C_low for phi in exp.phis]
    plan = plan_base(C_lows, exp.p, exp.a, strict=exp.theorem_mode)
    return plan.as_dict()


def _tail_sup(norms: np.ndarray, vals: np.ndarray, checkpoints) -> np.ndarray:
    """``T(N) = max of vals over |n| >= N`` for each checkpoint; ``vals`` is (R, points)."""
    order = np.argsort(norms, kind="stable")
    sn = norms[order]
    suffix = np.maximum.accumulate(vals[:, order][:, ::-1], axis=1)[:, ::-1]
    pos = np.searchsorted(sn, np.asarray(checkpoints), side="left")
    out = np.zeros((vals.shape[0], len(checkpoints)))
    ok = pos < sn.size
    out[:, ok] = suffix[:, pos[ok]]
    return out


def run_slln(exp: SllnExperiment) -> TailSupSeries:
    plan = _experiment_plan(exp)
    gen = exp.generator
    d = gen.d
    N = exp.checkpoints[-1]
    shape = (N + 1,) * d
    prepared = gen.prepare(shape)
    if exp.geometry == "rect":
        grid = geometric_subgrid(N, exp.per_octave, exp.checkpoints)
        mesh = np.meshgrid(*([grid] * d), indexing="ij")
        norms = np.max(np.stack(mesh), axis=0).ravel()
        logphi = sum(phi.log(m.astype(float)) for phi, m in zip(exp.phis, mesh)).ravel()
        sel = tuple(np.ix_(*([grid - 1] * d)))
    else:
        radii = np.arange(1, N + 1)
        norms = radii
        logphi = exp.phis[0].log(radii.astype(float))
    scale = np.exp(-logphi)

    def job(rng, count):
        vals = gen.sample(rng, count, shape, prepared)
        if exp.geometry == "rect":
            G = _sum_grid(_prefix(vals), (0,) * d, (N,) * d)
            S = G[(slice(None),) + sel].reshape(count, -1)
        else:
            S = np.cumsum(shell_sums(vals, N, exp.norm, batch=True), axis=1)[:, 1:]
        return _tail_sup(norms, np.abs(S) * scale, exp.checkpoints)

    T = concat_blocks(run_blocks(job, exp.replicates, exp.seed, "slln/replicate", exp.threads, block=1))
    if np.any(np.diff(T, axis=1) > 0):
        raise AssertionError("tail supremum increased along checkpoints")
    med = np.median(T, axis=0)
    p90 = np.quantile(T, 0.9, axis=0)
    ratio = float(med[-1] / med[0]) if med[0] > 0 else 0.0
    decayed = bool(med[-1] <= med[0] / exp.decay_factor)
    return TailSupSeries(exp.checkpoints, T, med, p90, ratio, decayed, exp.negative_control, plan, exp.describe())


# ---------------------------------------------------------------- LFSS block tails


def theorem_normalizers(cfg: LfssConfig, eps: float) -> tuple:
    """``phi_j(x) = (1 + x^(H_j)) log(1 + x)^(1/alpha + eps)``."""
    return tuple(power_log(h, 1.0 / cfg.alpha + eps) for h in cfg.H)


def _refined(cfg: LfssConfig, refinement: int) -> LfssConfig:
    if refinement < 1:
        raise ValueError("refinement must be >= 1")
    return dataclasses.replace(cfg, step=cfg.step / refinement)


def sample_sheet_box(cfg: LfssConfig, upper, refinement: int, replicates: int, seed: int, name: str, threads: int = 1, reduce=None):
    """Sheet on the refined lattice ``k / refinement``, ``0 <= k <= upper * refinement``.

    ``reduce(Z)`` maps each block ``(count, *grid)`` to a smaller array before
    concatenation.
    """
    rc = _refined(cfg, refinement)
    top = tuple(int(round(u * refinement)) for u in upper)
    if any(t < 1 for t in top):
        raise ValueError("upper corner must be positive")
    kernels = increment_weights(rc, top, first_site=1)
    per = 8 * 5 * int(np.prod([k.n_cells for k in kernels]))
    block = int(max(1, min(1024, (128 * 1024**2) // per)))

    def job(rng, count):
        Z = sheet_values(simulate_increments(rc, kernels, rng, count), batch=True)
        return reduce(Z) if reduce else Z

    return concat_blocks(run_blocks(job, replicates, seed, name, threads, block))


def _block_levels(blocks, d: int) -> list:
    out = []
    for b in blocks:
        lv = tuple(int(x) for x in b) if np.iterable(b) else (int(b),) * d
        if len(lv) != d or any(x < 1 for x in lv):
            raise ValueError(f"block levels need d entries >= 1, got {b}")
        out.append(lv)
    return out


@dataclass
class BlockTailReport:
    levels: list
    probabilities: np.ndarray
    std_errors: np.ndarray
    bound_shape: np.ndarray
    C: float
    dominated: np.ndarray
    dominance_fraction: float
    exact_shape: np.ndarray
    C_exact: float
    dominance_fraction_exact: float
    summability_proxy: float
    bound_sum: float
    exponent: float
    eta: float
    gamma: float
    eps: float
    refinement: int
    replicates: int
    seed: int

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        d = len(self.levels[0])
        w.writerow([f"n{i + 1}" for i in range(d)] + ["probability", "std_error", "fitted_bound", "dominated", "fitted_exact_bound"])
        for i, lv in enumerate(self.levels):
            w.writerow(
                list(lv)
                + [repr(float(self.probabilities[i])), repr(float(self.std_errors[i])), repr(float(self.C * self.bound_shape[i])), int(self.dominated[i])]
                + [repr(float(self.C_exact * self.exact_shape[i]))]
            )
        return out.getvalue()

    def summary(self) -> dict:
        return {
            "exponent": self.exponent, "eta": self.eta, "gamma": self.gamma, "eps": self.eps,
            "C": self.C, "dominance_fraction": self.dominance_fraction,
            "C_exact": self.C_exact, "dominance_fraction_exact": self.dominance_fraction_exact,
            "summability_proxy": self.summability_proxy, "bound_sum": self.bound_sum,
            "refinement": self.refinement, "replicates": self.replicates, "seed": self.seed,
        }


def block_exponent_check(alpha: float, gamma: float, eps: float) -> float:
    """``gamma (1/alpha + eps)``; raises unless ``gamma < alpha`` and it exceeds 1."""
    if not 0 < gamma < alpha:
        raise ValueError(f"need 0 < gamma < alpha, got gamma = {gamma:g}, alpha = {alpha:g}")
    if not eps > 0:
        raise ValueError(f"need eps > 0, got {eps:g}")
    e = gamma * (1.0 / alpha + eps)
    if not e > 1:
        raise ValueError(f"need gamma (1/alpha + eps) > 1, got {gamma:g} * ({1 / alpha:.6g} + {eps:g}) = {e:.6g}")
    return e


def run_lfss_block_tail(
    cfg: LfssConfig,
    eta: float,
    gamma: float,
    eps: float,
    blocks,
    replicates: int = 1000,
    seed: int = 0,
    a: int = 2,
    refinement: int = 4,
    threads: int = 1,
) -> BlockTailReport:
    """``P(sup_{t in T_n} |Z(t) - Z(a^n)| >= eta prod phi_j(a^(n_j)))`` per block
    ``T_n = [a^n, a^(n+1)]`` against ``C prod (n_j log a)^(-gamma (1/alpha + eps))``
    with ``C`` fitted on the first block; a later block is dominated when its
    probability is within two standard errors below the fitted bound.

    The same check is also made against the unsimplified shape
    ``prod (a^(n_j H_j) / phi_j(a^(n_j)))^gamma``; the logarithmic form replaces
    ``log(1 + a^n)`` by the smaller ``n log a``, which loosens small blocks most."""
    cfg.require_theorem_range()
    expo = block_exponent_check(cfg.alpha, gamma, eps)
    if not eta > 0:
        raise ValueError("eta must be positive")
    d = cfg.d
    levels = _block_levels(blocks, d)
    phis = theorem_normalizers(cfg, eps)
    upper = tuple(max(a ** (lv[j] + 1) for lv in levels) for j in range(d))

    def reduce(Z):
        out = np.empty((Z.shape[0], len(levels)))
        for i, lv in enumerate(levels):
            lo = [a ** lv[j] * refinement for j in range(d)]
            hi = [a ** (lv[j] + 1) * refinement for j in range(d)]
            box = Z[(slice(None),) + tuple(slice(l, h + 1) for l, h in zip(lo, hi))]
            corner = Z[(slice(None),) + tuple(lo)].reshape((-1,) + (1,) * d)
            out[:, i] = np.abs(box - corner).reshape(Z.shape[0], -1).max(axis=1)
        return out

    sups = sample_sheet_box(cfg, upper, refinement, replicates, seed, "lfss/block-tail", threads, reduce)
    thresh = np.array([eta * math.exp(sum(float(phi.log(float(a) ** n)) for phi, n in zip(phis, lv))) for lv in levels])
    hits = sups >= thresh[None, :]
    P = hits.mean(axis=0)
    se = np.sqrt(P * (1 - P) / replicates)
    shape = np.array([math.prod((n * math.log(a)) ** (-expo) for n in lv) for lv in levels])
    C = float(P[0] / shape[0])
    dom = P <= C * shape + 2 * se
    frac = float(dom[1:].mean()) if len(levels) > 1 else 1.0
    exact = np.array([
        math.exp(gamma * sum(h * n * math.log(a) - float(phi.log(float(a) ** n)) for h, phi, n in zip(cfg.H, phis, lv)))
        for lv in levels
    ])
    C_exact = float(P[0] / exact[0])
    dom_exact = P <= C_exact * exact + 2 * se
    frac_exact = float(dom_exact[1:].mean()) if len(levels) > 1 else 1.0
    return BlockTailReport(
        levels, P, se, shape, C, dom, frac, exact, C_exact, frac_exact, float(P.sum()), float((C * shape).sum()), expo,
        float(eta), float(gamma), float(eps), refinement, replicates, seed,
    )


# ---------------------------------------------------------------- sup-increment moments


def sup_bound_expression(A, B, H, gamma: float) -> float:
    """``prod (b_j - a_j)^(H_j g) + sum_k a_k^(H_k g) prod_{j != k} (b_j - a_j)^(H_j g)``."""
    A, B, H = (np.asarray(x, dtype=float) for x in (A, B, H))
    side = (B - A) ** (H * gamma)
    total = float(np.prod(side))
    for k in range(A.size):
        total += float(A[k] ** (H[k] * gamma) * np.prod(np.delete(side, k)))
    return total


@dataclass
class SupIncrementReport:
    intervals: list
    estimates: np.ndarray
    std_errors: np.ndarray
    bounds: np.ndarray
    C6: float
    ratios: np.ndarray
    gamma: float
    refinement: int
    replicates: int
    seed: int

    def summary(self) -> dict:
        return {
            "intervals": [[list(a), list(b)] for a, b in self.intervals],
            "estimates": self.estimates.tolist(),
            "bounds": self.bounds.tolist(),
            "C6": self.C6,
            "ratios": self.ratios.tolist(),
            "ratio_range": [float(self.ratios.min()), float(self.ratios.max())],
            "gamma": self.gamma, "refinement": self.refinement,
            "replicates": self.replicates, "seed": self.seed,
        }


def _interval(A, B, d: int, refinement: int):
    A = tuple(float(x) for x in (A if np.iterable(A) else (A,) * d))
    B = tuple(float(x) for x in (B if np.iterable(B) else (B,) * d))
    if len(A) != d or len(B) != d:
        raise ValueError("interval corners need d coordinates")
    if any(x <= 0 for x in A):
        raise ValueError(f"interval must lie in [eps, inf)^d with eps > 0, got A = {A}")
    if any(b < a for a, b in zip(A, B)):
        raise ValueError("need A <= B")
    for x in A + B:
        if abs(x * refinement - round(x * refinement)) > 1e-9:
            raise ValueError(f"corner {x} is not on the refined lattice 1/{refinement}")
    return A, B


def refined_sups(cfg: LfssConfig, A, B, refinement: int, replicates: int, seed: int, coarsen=(1,), threads: int = 1) -> np.ndarray:
    """``sup |Z(t) - Z(A)|`` over the lattice ``(1/refinement) * f`` inside ``[A, B]``
    for each coarsening factor ``f``, all from the same realizations; shape (R, len(coarsen))."""
    d = cfg.d
    A, B = _interval(A, B, d, refinement)
    lo = [int(round(x * refinement)) for x in A]
    hi = [int(round(x * refinement)) for x in B]
    for f in coarsen:
        if any((h - l) % f or l % f for l, h in zip(lo, hi)):
            raise ValueError(f"coarsening {f} does not align with the interval corners")

    def reduce(Z):
        out = np.empty((Z.shape[0], len(coarsen)))
        corner = Z[(slice(None),) + tuple(lo)].reshape((-1,) + (1,) * d)
        for i, f in enumerate(coarsen):
            box = Z[(slice(None),) + tuple(slice(l, h + 1, f) for l, h in zip(lo, hi))]
            out[:, i] = np.abs(box - corner).reshape(Z.shape[0], -1).max(axis=1)
        return out

    return sample_sheet_box(cfg, B, refinement, replicates, seed, "lfss/sup-increment", threads, reduce)


def estimate_sup_increment_moment(
    cfg: LfssConfig,
    intervals,
    gamma: float,
    refinement: int = 4,
    replicates: int = 1000,
    seed: int = 0,
    threads: int = 1,
) -> SupIncrementReport:
    """``E sup_{t in T} |Z(t) - Z(A)|^gamma`` for each interval ``T = [A, B]``.

    ``C6`` is fitted on the first (reference) interval; the report gives the
    ratio of every estimate to ``C6`` times the bound expression.
    """
    if not 0 < gamma < cfg.alpha:
        raise ValueError(f"need 0 < gamma < alpha, got gamma = {gamma:g}, alpha = {cfg.alpha:g}")
    d = cfg.d
    ivs = [_interval(A, B, d, refinement) for A, B in intervals]
    est, se, bnd = [], [], []
    for i, (A, B) in enumerate(ivs):
        if A == B:
            s = np.zeros(replicates)
        else:
            s = refined_sups(cfg, A, B, refinement, replicates, seed + i, threads=threads)[:, 0]
        x = s**gamma
        est.append(float(x.mean()))
        se.append(float(x.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else 0.0)
        bnd.append(sup_bound_expression(A, B, cfg.H, gamma))
    est, se, bnd = np.array(est), np.array(se), np.array(bnd)
    C6 = float(est[0] / bnd[0]) if bnd[0] > 0 else math.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = est / (C6 * bnd)
    return SupIncrementReport(ivs, est, se, bnd, C6, ratios, float(gamma), refinement, replicates, seed)
