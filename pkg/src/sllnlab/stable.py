"""Symmetric alpha-stable sampling and linear fractional stable sheets.

Discretization of the sheet
---------------------------
Per axis the stable measure is split into cells.  Near the lattice (from
``-L`` up to the last site) cells have constant width ``h``; further back they
grow geometrically (ratio ``far_ratio``) until the neglected kernel mass drops
below ``delta``.  Each cell carries an independent SaS variable of scale
``width**(1/alpha)`` and each site receives the exact cell average of its
increment kernel ``(x)_+^beta - (x - step)_+^beta``, ``beta = H - 1/alpha``.
Because the discrete field is a linear image of i.i.d. stable noise, its
marginals are exactly SaS and the scale at any point is known in closed form
from the coefficients (see ``sheet_scale``).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import integrate, special, stats

from .lattice import LatticeField
from .parallel import concat_blocks, run_blocks
from .rng import stream


class QuadratureError(ArithmeticError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class TruncationError(ValueError):
    pass


class MemoryBudgetError(MemoryError):
    def __init__(self, required: int, allowed: int):
        super().__init__(f"memory budget exceeded: required {required} bytes, allowed {allowed} bytes")
        self.required = required
        self.allowed = allowed


@dataclass(frozen=True)
class StableParams:
    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


def sample_sas(params: StableParams, rng: np.random.Generator, size=None):
    """Chambers-Mallows-Stuck draw with characteristic function ``exp(-|scale t|^alpha)``."""
    a = params.alpha
    V = rng.uniform(-np.pi / 2, np.pi / 2, size)
    W = rng.standard_exponential(size)
    if a == 1.0:
        X = np.tan(V)
    else:
        X = np.sin(a * V) / np.cos(V) ** (1.0 / a) * (np.cos((1.0 - a) * V) / W) ** ((1.0 - a) / a)
    return params.scale * X


def sas_abs_moment(alpha: float, p: float) -> float:
    """``E|X|^p`` for unit-scale SaS, ``p < alpha`` (closed form)."""
    if not 0 < p < alpha:
        raise ValueError("need 0 < p < alpha")
    if alpha == 2:
        return 2.0**p * special.gamma((p + 1) / 2) / math.sqrt(math.pi)
    return 2.0**p * special.gamma((1 + p) / 2) * special.gamma(1 - p / alpha) / (
        special.gamma(1 - p / 2) * math.sqrt(math.pi)
    )


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class LfssConfig:
    H: tuple
    alpha: float
    kappa: float | None = None  # None: normalized so that Z(<1>) has unit scale
    h: float = 1.0 / 16
    L: float = 16.0
    delta: float = 1e-3
    far_ratio: float = 1.05
    step: float = 1.0
    max_far_cells: int = 20000

    def __post_init__(self):
        H = tuple(float(x) for x in (self.H if np.iterable(self.H) else (self.H,)))
        object.__setattr__(self, "H", H)
        if not H or any(not 0 < x < 1 for x in H):
            raise ValueError(f"each H_j must lie in (0, 1), got {H}")
        if not 0 < self.alpha <= 2:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if self.kappa is not None and not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not (self.h > 0 and self.L > 0 and self.step > 0):
            raise ValueError("h, L and step must be positive")
        for name, val in (("step/h", self.step / self.h), ("L/h", self.L / self.h)):
            if abs(val - round(val)) > 1e-9:
                raise ValueError(f"{name} must be an integer, got {val}")
        if self.L < self.step:
            raise ValueError("the uniform zone L must cover at least one lattice step")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.far_ratio > 1:
            raise ValueError("far_ratio must exceed 1")

    @property
    def d(self) -> int:
        return len(self.H)

    @property
    def betas(self) -> tuple:
        return tuple(x - 1.0 / self.alpha for x in self.H)

    def require_theorem_range(self) -> None:
        """Enforce ``1 < alpha < 2`` and ``1/alpha < H_j < 1``."""
        if not 1 < self.alpha < 2:
            raise ValueError(f"requires 1 < alpha < 2, got alpha = {self.alpha}")
        bad = [x for x in self.H if not 1.0 / self.alpha < x < 1]
        if bad:
            raise ValueError(f"requires 1/alpha < H_j < 1 (1/alpha = {1 / self.alpha:.6g}), got H = {self.H}")

    def resolved_kappa(self) -> float:
        return self.kappa if self.kappa is not None else normalize_kappa(self.H, self.alpha)

    def describe(self) -> str:
        H = ",".join(f"{x:g}" for x in self.H)
        return f"lfss(H=({H}),alpha={self.alpha:g},h={self.h:g},L={self.L:g},delta={self.delta:g})"


# ---------------------------------------------------------------- kernel


def _pos_pow(x, beta):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, np.abs(x) ** beta, 0.0)


def kernel_g(t, s, cfg: LfssConfig, kappa: float | None = None):
    """``kappa * prod_l [((t_l - s_l)_+)^beta_l - ((-s_l)_+)^beta_l]`` (vectorized over leading axes)."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    k = cfg.resolved_kappa() if kappa is None else kappa
    out = np.full(np.broadcast_shapes(t.shape, s.shape)[:-1], k, dtype=float)
    for j, beta in enumerate(cfg.betas):
        out = out * (_pos_pow(t[..., j] - s[..., j], beta) - _pos_pow(-s[..., j], beta))
    return out


def _increment_abs_pow(u, beta, alpha):
    """``|(1+u)^beta - u^beta|^alpha`` for u > 0, cancellation-free for large u."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        big = u**beta * np.abs(np.expm1(beta * np.log1p(1.0 / u)))
        small = np.abs((1.0 + u) ** beta - u**beta)
    return np.where(u > 1, big, small) ** alpha


@functools.lru_cache(maxsize=256)
def kernel_alpha_norm(H: float, alpha: float) -> float:
    """``int |g_H(1, s)|^alpha ds`` with ``kappa = 1`` (one dimension)."""
    beta = H - 1.0 / alpha
    if beta == 0:
        return 1.0
    inner = 1.0 / (beta * alpha + 1.0)

    def f(x):
        u = math.exp(x)
        return float(_increment_abs_pow(u, beta, alpha)) * u

    # in x = log u the integrand decays like exp(H alpha x) on the left and
    # exp(-((1 - beta) alpha - 1) x) on the right
    expo = (1.0 - beta) * alpha - 1.0
    x_lo = -45.0 / (H * alpha)
    x_hi = min(700.0, 45.0 / expo)
    total, err = 0.0, 0.0
    for lo, hi in ((x_lo, 0.0), (0.0, x_hi)):
        val, e = integrate.quad(f, lo, hi, limit=1000, epsabs=0.0, epsrel=1e-12)
        total += val
        err += e
    # leading-order tail beyond the right cutoff
    total += abs(beta) ** alpha * math.exp(-expo * x_hi) / expo
    value = inner + total
    if not np.isfinite(value) or err > 1e-9 * value:
        raise QuadratureError(f"kernel norm quadrature did not converge (estimate {value}, error {err})", value)
    return value


def normalize_kappa(H, alpha: float) -> float:
    """``kappa_d(H) = prod_j kappa_1(H_j)`` making ``Z(<1>)`` unit scale."""
    H = tuple(H) if np.iterable(H) else (H,)
    out = 1.0
    for x in H:
        out *= kernel_alpha_norm(float(x), float(alpha)) ** (-1.0 / alpha)
    return out


# ---------------------------------------------------------------- per-axis discretization


def _G(y, beta, step):
    """``int_0^y (x_+^beta - (x-step)_+^beta) dx``, stable for y >> step."""
    y = np.asarray(y, dtype=float)
    b1 = beta + 1.0
    out = np.where(y > 0, np.abs(y) ** b1 / b1, 0.0)
    far = y >= step
    if np.any(far):
        yf = y[far]
        with np.errstate(divide="ignore"):
            out[far] = yf**b1 / b1 * -np.expm1(b1 * np.log1p(-step / yf))
    return out


@dataclass(frozen=True)
class AxisKernel:
    beta: float
    alpha: float
    h: float
    step: float
    first_site: int
    n_sites: int
    q: int
    q0: int
    lag_coef: np.ndarray  # raw cell averages c[l], l = 0..U
    far_edges: np.ndarray  # decreasing: -L, -L r, ...
    far_avg: np.ndarray  # raw cell averages, shape (n_sites, G)
    discarded: float  # bound on neglected alpha-mass relative to the site alpha-norm

    @property
    def n_uniform(self) -> int:
        return self.lag_coef.size - 1

    @property
    def n_far(self) -> int:
        return self.far_avg.shape[1]

    @property
    def n_cells(self) -> int:
        return self.n_uniform + self.n_far

    @property
    def far_widths(self) -> np.ndarray:
        return -np.diff(self.far_edges)

    @property
    def L_far(self) -> float:
        return float(-self.far_edges[-1])

    def scaled_lag(self) -> np.ndarray:
        return self.lag_coef * self.h ** (1.0 / self.alpha)

    def scaled_far(self) -> np.ndarray:
        return self.far_avg * self.far_widths ** (1.0 / self.alpha)

    def site_alpha_mass(self) -> np.ndarray:
        """Captured ``sum |coef|^alpha * width`` for every site."""
        near = (np.abs(_lag_matrix(self, self.lag_coef)) ** self.alpha).sum(axis=1) * self.h
        far = (np.abs(self.far_avg) ** self.alpha * self.far_widths).sum(axis=1)
        return near + far


def _far_cells_needed(beta, alpha, step, L, delta_axis, ratio, cap):
    if beta == 0:
        return 0
    expo = (1.0 - beta) * alpha - 1.0
    site_norm = step ** (beta * alpha + 1.0) * kernel_alpha_norm(beta + 1.0 / alpha, alpha)
    const = (abs(beta) * step) ** alpha / expo / site_norm
    # const * L_far^(-expo) <= delta_axis
    log_L_req = (math.log(const) - math.log(delta_axis)) / expo
    if log_L_req <= math.log(L):
        return 0
    G = math.ceil((log_L_req - math.log(L)) / math.log(ratio))
    if G > cap or log_L_req > 690:
        raise TruncationError(
            f"kernel tail too heavy: {G} far cells (L_far = e^{log_L_req:.1f}) needed for delta = {delta_axis:g}; "
            "raise L, raise delta, or lower H"
        )
    return G


def _discarded(beta, alpha, step, L_far):
    if beta == 0:
        return 0.0
    expo = (1.0 - beta) * alpha - 1.0
    site_norm = step ** (beta * alpha + 1.0) * kernel_alpha_norm(beta + 1.0 / alpha, alpha)
    return (abs(beta) * step) ** alpha * L_far ** (-expo) / expo / site_norm


@functools.lru_cache(maxsize=64)
def axis_kernel(
    H: float, alpha: float, h: float, L: float, step: float, n_sites: int, first_site: int,
    delta_axis: float, far_ratio: float, max_far_cells: int,
) -> AxisKernel:
    beta = H - 1.0 / alpha
    q = int(round(step / h))
    q0 = int(round(L / h))
    last = first_site + n_sites - 1
    U = q * last + q0
    ell = np.arange(U + 1, dtype=float)
    Gv = _G(ell * h, beta, step)
    lag = np.zeros(U + 1)
    lag[1:] = np.diff(Gv) / h
    G = _far_cells_needed(beta, alpha, step, L, delta_axis, far_ratio, max_far_cells)
    edges = -L * far_ratio ** np.arange(G + 1, dtype=float)
    sites = (np.arange(n_sites) + first_site) * step
    if G:
        Gfar = _G(sites[:, None] - edges[None, :], beta, step)
        far = (Gfar[:, 1:] - Gfar[:, :-1]) / (-np.diff(edges))[None, :]
    else:
        far = np.zeros((n_sites, 0))
    disc = _discarded(beta, alpha, step, -edges[-1]) if G else 0.0
    if beta != 0 and not G:
        disc = _discarded(beta, alpha, step, L)
    for arr in (lag, far, edges):
        arr.flags.writeable = False
    return AxisKernel(beta, alpha, h, step, first_site, n_sites, q, q0, lag, edges, far, disc)


def increment_weights(cfg: LfssConfig, n_sites, first_site: int = 1) -> tuple:
    """Per-axis discretization for sites ``first_site .. first_site + n_sites - 1``."""
    n_sites = tuple(n_sites) if np.iterable(n_sites) else (n_sites,) * cfg.d
    if len(n_sites) != cfg.d:
        raise ValueError("one site count per axis required")
    delta_axis = 1.0 - (1.0 - cfg.delta) ** (1.0 / cfg.d)
    out = []
    for Hj, n in zip(cfg.H, n_sites):
        ak = axis_kernel(Hj, cfg.alpha, cfg.h, cfg.L, cfg.step, int(n), int(first_site), delta_axis, cfg.far_ratio, cfg.max_far_cells)
        if ak.discarded > delta_axis:
            raise TruncationError(f"discarded kernel mass {ak.discarded:.3g} exceeds {delta_axis:.3g}; raise L")
        out.append(ak)
    return tuple(out)


def discarded_mass(kernels) -> float:
    keep = 1.0
    for k in kernels:
        keep *= 1.0 - k.discarded
    return 1.0 - keep


def _lag_matrix(ak: AxisKernel, coef: np.ndarray) -> np.ndarray:
    n = np.arange(ak.n_sites) + ak.first_site
    lags = ak.q * n[:, None] + ak.q0 - np.arange(ak.n_uniform)[None, :]
    return np.where(lags >= 0, coef[np.maximum(lags, 0)], 0.0)


def _direct_matrix(ak: AxisKernel) -> np.ndarray:
    return _lag_matrix(ak, ak.scaled_lag())


def apply_axis(noise: np.ndarray, ak: AxisKernel, axis: int, method: str = "fft") -> np.ndarray:
    """Map ``n_cells`` noise values along ``axis`` to ``n_sites`` increments."""
    x = np.moveaxis(noise, axis, -1)
    U = ak.n_uniform
    xu, xf = x[..., :U], x[..., U:]
    if method == "fft":
        nfft = sfft.next_fast_len(2 * U, real=True)
        spec = sfft.rfft(ak.scaled_lag(), nfft)
        conv = sfft.irfft(sfft.rfft(xu, nfft, axis=-1) * spec, nfft, axis=-1)
        pos = ak.q * (np.arange(ak.n_sites) + ak.first_site) + ak.q0
        near = conv[..., pos]
    elif method == "direct":
        near = xu @ _direct_matrix(ak).T
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    out = near + xf @ ak.scaled_far().T if ak.n_far else near
    return np.moveaxis(out, -1, axis)


def cells_per_replicate(kernels) -> int:
    return int(np.prod([k.n_cells for k in kernels]))


def simulate_increments(cfg: LfssConfig, kernels, rng: np.random.Generator, batch: int, method: str = "fft") -> np.ndarray:
    """Batch of increment fields, shape ``(batch, n_sites_1, ..., n_sites_d)``."""
    shape = (batch,) + tuple(k.n_cells for k in kernels)
    noise = sample_sas(StableParams(cfg.alpha), rng, shape)
    for j, ak in enumerate(kernels):
        noise = apply_axis(noise, ak, j + 1, method)
    return noise * cfg.resolved_kappa()


def estimate_bytes(kernels, batch: int = 1) -> int:
    """Peak working memory of one simulation call (noise plus sampler temporaries)."""
    return 8 * 5 * batch * cells_per_replicate(kernels)


DEFAULT_MEMORY_BUDGET = 2 * 1024**3


def simulate_increment_field(
    cfg: LfssConfig, shape, seed: int, method: str = "fft", memory_budget: int = DEFAULT_MEMORY_BUDGET
) -> LatticeField:
    """One stationary increment field; site ``k`` is the cell ``((k-1) step, k step]``, origin ``<1>``."""
    shape = tuple(shape) if np.iterable(shape) else (shape,) * cfg.d
    kernels = increment_weights(cfg, shape, first_site=1)
    need = estimate_bytes(kernels)
    if need > memory_budget:
        raise MemoryBudgetError(need, memory_budget)
    vals = simulate_increments(cfg, kernels, stream(seed, "lfss/increments"), 1, method)[0]
    return LatticeField(vals, origin=(1,) * cfg.d, generator=cfg.describe(), seed=seed)


def sheet_values(increments: np.ndarray, batch: bool = False) -> np.ndarray:
    """Cumulative sums with a zero row/column prepended on every lattice axis."""
    lead = 1 if batch else 0
    inc = np.asarray(increments, dtype=float)
    pad = [(0, 0)] * lead + [(1, 0)] * (inc.ndim - lead)
    out = np.pad(inc, pad)
    for ax in range(lead, out.ndim):
        np.cumsum(out, axis=ax, out=out)
    return out


def sheet_from_increments(fld: LatticeField) -> LatticeField:
    """``Z(n) = S(0; n)`` on ``[0, N]^d``; vanishes whenever some ``n_j = 0``."""
    if any(o != 1 for o in fld.origin):
        raise ValueError(f"increment field must start at site <1>, origin is {fld.origin}")
    vals = sheet_values(np.asarray(fld.values, dtype=np.longdouble)).astype(np.float64)
    return LatticeField(vals, origin=(0,) * fld.d, generator=f"sheet:{fld.generator}", seed=fld.seed)


def sheet_scale(cfg: LfssConfig, t) -> float:
    """Exact SaS scale of the discretized ``Z(t)`` at lattice point ``t``."""
    t = tuple(int(x) for x in t)
    if any(x < 1 for x in t):
        return 0.0
    kernels = increment_weights(cfg, t, first_site=1)
    mass = 1.0
    for ak in kernels:
        D = _direct_matrix(ak)
        w_near = D.sum(axis=0)
        w_far = ak.scaled_far().sum(axis=0)
        mass *= float(np.sum(np.abs(w_near) ** cfg.alpha) + np.sum(np.abs(w_far) ** cfg.alpha))
    return cfg.resolved_kappa() * mass ** (1.0 / cfg.alpha)


# ---------------------------------------------------------------- operator scaling


@dataclass
class ScalingReport:
    b: tuple
    exponent: tuple
    t_points: list
    quantiles: tuple
    replicates: int
    z: np.ndarray  # (len(t_points), len(quantiles)) standardized discrepancies
    z_crit: float
    max_abs_z: float
    max_rel_quantile_gap: float
    passed: bool
    rows: list


def sample_sheet_points(cfg: LfssConfig, points, replicates: int, seed: int, name: str, threads: int = 1, method: str = "fft"):
    """Sheet values ``Z(t)`` at lattice ``points`` for every replicate, shape (replicates, len(points))."""
    pts = np.array(points, dtype=np.int64).reshape(len(points), cfg.d)
    top = tuple(int(x) for x in pts.max(axis=0))
    kernels = increment_weights(cfg, top, first_site=1)
    idx = tuple(pts[:, j] for j in range(cfg.d))

    def job(rng, count):
        inc = simulate_increments(cfg, kernels, rng, count, method)
        return sheet_values(inc, batch=True)[(slice(None),) + idx]

    return concat_blocks(run_blocks(job, replicates, seed, name, threads, block=_block_for(kernels)))


def _block_for(kernels, target_bytes: int = 256 * 1024**2) -> int:
    per = 8 * 5 * cells_per_replicate(kernels)
    return int(max(1, min(4096, target_bytes // per)))


def check_operator_scaling(
    cfg: LfssConfig,
    b,
    t_points=((1,), (2,), (4,), (8,)),
    quantiles=(0.1, 0.25, 0.5, 0.75, 0.9),
    replicates: int = 100_000,
    seed: int = 0,
    exponent_shift: float = 0.0,
    family_level: float = 0.01,
    threads: int = 1,
) -> ScalingReport:
    """Compare the law of ``Z(E t)`` with ``prod b_j^(H_j) Z(t)`` on independent replicate sets.

    For each ``t`` and quantile level ``u`` the empirical CDF of set A at the
    scaled ``u``-quantile of set B is standardized by ``sqrt(2u(1-u)/n)``; the
    band is Bonferroni-corrected over all comparisons.  ``exponent_shift``
    perturbs the exponent (negative control).
    """
    b = tuple(float(x) for x in (b if np.iterable(b) else (b,) * cfg.d))
    if len(b) != cfg.d or any(x <= 0 for x in b):
        raise ValueError("b must have d positive entries")
    pts = [tuple(int(x) for x in t) for t in t_points]
    scaled = []
    for t in pts:
        st = tuple(bj * tj for bj, tj in zip(b, t))
        if any(abs(x - round(x)) > 1e-12 for x in st):
            raise ValueError(f"E t = {st} is not a lattice point")
        scaled.append(tuple(int(round(x)) for x in st))
    expo = tuple(h + exponent_shift for h in cfg.H)
    factor = float(np.prod([bj**e for bj, e in zip(b, expo)]))
    A = sample_sheet_points(cfg, scaled, replicates, seed, "lfss/scaling-A", threads)
    B = sample_sheet_points(cfg, pts, replicates, seed, "lfss/scaling-B", threads) * factor
    us = np.asarray(quantiles, dtype=float)
    z = np.zeros((len(pts), us.size))
    rows, gap = [], 0.0
    band = np.sqrt(2 * us * (1 - us) / replicates)
    for i in range(len(pts)):
        qB = np.quantile(B[:, i], us)
        qA = np.quantile(A[:, i], us)
        FA = np.searchsorted(np.sort(A[:, i]), qB, side="right") / replicates
        z[i] = (FA - us) / band
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.abs(qA / qB - 1.0)
        gap = max(gap, float(np.nanmax(rel[np.abs(us - 0.5) > 1e-12])) if us.size > 1 else float(rel.max()))
        for j, u in enumerate(us):
            rows.append({"t": pts[i], "Et": scaled[i], "u": float(u), "q_scaled": float(qB[j]), "q_direct": float(qA[j]), "F": float(FA[j]), "z": float(z[i, j])})
    zc = float(stats.norm.ppf(1 - family_level / (2 * z.size)))
    mz = float(np.abs(z).max())
    return ScalingReport(b, expo, pts, tuple(us), replicates, z, zc, mz, gap, mz <= zc, rows)
