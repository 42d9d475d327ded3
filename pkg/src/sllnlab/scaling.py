"""Normalizing functions, doubling bounds, base selection, recursion
constants, and Toeplitz weights.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

# strict inequalities are checked with this relative margin so that floating
# ties such as (2**1.5)**2 == 8.000000000000002 versus 8 are not accepted
STRICT_MARGIN = 1e-12


class NotDoublingAdmissible(ValueError):
    pass


class InadmissiblePlan(ValueError):
    pass


@dataclass(frozen=True)
class ScalingFunction:
    """Normalizer ``x -> phi(x)`` on the positive reals.

    kinds:
      ``power``      ``x**beta``
      ``power_log``  ``(1 + x**H) * log(1 + x)**rho``
      ``table``      log-linear interpolation through ``(xs, ys)``
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind == "power":
            (beta,) = self.params
            if beta <= 0:
                raise ValueError(f"power exponent must be positive, got {beta}")
        elif self.kind == "power_log":
            H, rho = self.params
            if H < 0 or rho < 0 or (H == 0 and rho == 0):
                raise ValueError(f"power_log needs H >= 0, rho >= 0, not both zero; got {self.params}")
        elif self.kind == "table":
            xs, ys = (np.asarray(p, dtype=float) for p in self.params)
            if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
                raise ValueError("table needs two equal-length sequences with >= 2 points")
            if np.any(xs <= 0) or np.any(np.diff(xs) <= 0):
                raise ValueError("table abscissae must be positive and strictly increasing")
            if np.any(ys <= 0) or np.any(np.diff(ys) < 0):
                raise ValueError("table values must be positive and nondecreasing")
            if ys[-1] <= ys[-2]:
                raise ValueError("table must increase on its last segment (divergent extrapolation)")
            object.__setattr__(self, "params", (tuple(xs.tolist()), tuple(ys.tolist())))
        else:
            raise ValueError(f"unknown scaling kind {self.kind!r}")

    def log(self, x) -> np.ndarray:
        """``log phi(x)``; stable for very large arguments."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            lx = np.log(x)
            if self.kind == "power":
                return self.params[0] * lx
            if self.kind == "power_log":
                H, rho = self.params
                first = np.logaddexp(0.0, H * lx)
                second = rho * np.log(np.log1p(x)) if rho else 0.0
                return first + second
            xs, ys = (np.log(np.asarray(p)) for p in self.params)
            inner = np.interp(lx, xs, ys)
            lo_slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
            hi_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
            out = np.where(lx < xs[0], ys[0] + lo_slope * (lx - xs[0]), inner)
            return np.where(lx > xs[-1], ys[-1] + hi_slope * (lx - xs[-1]), out)

    def __call__(self, x) -> np.ndarray:
        return np.exp(self.log(x))

    def describe(self) -> str:
        if self.kind == "table":
            return f"table({len(self.params[0])} points)"
        return f"{self.kind}({','.join(repr(float(p)) for p in self.params)})"

    def spec(self) -> dict:
        if self.kind == "table":
            return {"kind": "table", "xs": list(self.params[0]), "ys": list(self.params[1])}
        names = {"power": ("beta",), "power_log": ("H", "rho")}[self.kind]
        return {"kind": self.kind, **{k: float(v) for k, v in zip(names, self.params)}}


def power(beta: float) -> ScalingFunction:
    return ScalingFunction("power", (float(beta),))


def power_log(H: float, rho: float) -> ScalingFunction:
    return ScalingFunction("power_log", (float(H), float(rho)))


def table(xs, ys) -> ScalingFunction:
    return ScalingFunction("table", (tuple(xs), tuple(ys)))


_SPEC_RE = re.compile(r"^\s*([a-z_]+)\s*\(([^)]*)\)\s*$")


def parse_scaling(text: str) -> ScalingFunction:
    """Parse ``"power(1.5)"``, ``"power_log(0.8, 1.2)"``, or
    ``"table(1:1, 10:5, 100:30)"``."""
    m = _SPEC_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse scaling function {text!r}; expected kind(params)")
    kind, body = m.group(1), m.group(2)
    parts = [p.strip() for p in body.split(",") if p.strip()]
    if kind == "table":
        pairs = [p.split(":") for p in parts]
        if any(len(p) != 2 for p in pairs):
            raise ValueError(f"table entries must be x:y pairs, got {text!r}")
        return table([float(p[0]) for p in pairs], [float(p[1]) for p in pairs])
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise ValueError(f"non-numeric parameter in {text!r}") from None
    arity = {"power": 1, "power_log": 2}
    if kind not in arity:
        raise ValueError(f"unknown scaling kind {kind!r}")
    if len(vals) != arity[kind]:
        raise ValueError(f"{kind} takes {arity[kind]} parameter(s), got {len(vals)}")
    return ScalingFunction(kind, vals)


# ---------------------------------------------------------------- doubling


@dataclass(frozen=True)
class DoublingBounds:
    C_low: float
    C_high: float
    x_min: float
    x_max: float
    points: int

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("C_low", "C_high", "x_min", "x_max", "points")}


def doubling_bounds(phi: ScalingFunction, x_min: float = 1.0, x_max: float = 1e6, points: int = 2000) -> DoublingBounds:
    """inf/sup of ``phi(2x)/phi(x)`` over a geometric grid on ``[x_min, x_max/2]``."""
    if not (x_min > 0 and x_max >= 2 * x_min):
        raise ValueError(f"need 0 < x_min and x_max >= 2 x_min, got [{x_min}, {x_max}]")
    if points < 1000:
        raise ValueError("doubling bounds use at least 1000 grid points")
    x = np.geomspace(x_min, x_max / 2, points)
    ratio = np.exp(phi.log(2 * x) - phi.log(x))
    lo, hi = float(ratio.min()), float(ratio.max())
    if not np.isfinite(lo) or lo <= 1.0:
        at = float(x[int(np.argmin(ratio))])
        raise NotDoublingAdmissible(
            f"not doubling-admissible: phi(2x)/phi(x) = {lo:.6g} <= 1 at x = {at:.6g} for {phi.describe()}"
        )
    return DoublingBounds(lo, hi, float(x_min), float(x_max), int(points))


# ---------------------------------------------------------------- base plan


def floor_log2(a: int) -> int:
    return int(a).bit_length() - 1


def base_condition(C_low: float, a: int, p: float) -> tuple[bool, str]:
    """``C_low**floor(log2 a) > max(a, a 2^(p-1))`` and its printed form."""
    k = floor_log2(a)
    lhs = C_low**k
    rhs = max(a, a * 2.0 ** (p - 1))
    ok = lhs > rhs * (1 + STRICT_MARGIN)
    rel = ">" if ok else "<="
    text = f"C_low^floor(log2 a) = {C_low:.6g}^{k} = {lhs:.6g} {rel} max(a, a*2^(p-1)) = {rhs:.6g}  (a={a}, p={p:g})"
    return ok, text


def select_base(C_low: float, p: float, a_max: int = 64) -> int | None:
    """Smallest ``a`` in ``[2, a_max]`` meeting the base condition, else None."""
    if not C_low > 1 or not p > 0 or a_max < 2:
        raise ValueError("select_base needs C_low > 1, p > 0, a_max >= 2")
    for a in range(2, a_max + 1):
        if base_condition(C_low, a, p)[0]:
            assert base_condition(C_low, a, p)[0]
            return a
    return None


def d_ap(a: int, p: float) -> float:
    """``2^(p-1) [sum_{j=1}^{a-1} j^(p-1) + (a-1)]``."""
    return 2.0 ** (p - 1) * (math.fsum(j ** (p - 1) for j in range(1, a)) + (a - 1))


def c_const(a: int, p: float, C_low: float) -> float:
    return (1 + (a - 1) * 2.0 ** (p - 1)) / C_low ** (p * floor_log2(a))


def kappa_const(a: int, p: float, C_low: float) -> float:
    """Contraction constant used for ``0 < p <= 1``: ``a / C_low^(p floor(log2 a))``."""
    return a / C_low ** (p * floor_log2(a))


@dataclass(frozen=True)
class RecursionConstants:
    a: int
    p: float
    C_low: float
    c: float
    D_ap: float
    kappa: float


def recursion_constants(a: int, p: float, C_low: float) -> RecursionConstants:
    if a < 2 or p <= 0 or C_low <= 1:
        raise ValueError("recursion constants need a >= 2, p > 0, C_low > 1")
    c = c_const(a, p, C_low)
    if c >= 1:
        raise InadmissiblePlan(f"base plan inadmissible: c = {c:.6g} >= 1 for a={a}, p={p:g}, C_low={C_low:.6g}")
    return RecursionConstants(a, float(p), float(C_low), c, d_ap(a, p), kappa_const(a, p, C_low))


@dataclass(frozen=True)
class BasePlan:
    a: tuple
    p: float
    C_low: tuple
    c: tuple
    D_ap: tuple
    k: tuple
    admissible: bool
    inequalities: tuple = field(default=())

    def as_dict(self) -> dict:
        return {
            "a": list(self.a),
            "p": self.p,
            "C_low": list(self.C_low),
            "c": list(self.c),
            "D_ap": list(self.D_ap),
            "k": list(self.k),
            "admissible": self.admissible,
            "inequalities": list(self.inequalities),
        }


def plan_base(C_lows, p: float, a=None, a_max: int = 64, strict: bool = True) -> BasePlan:
    """Per-axis base plan.  ``a`` may be None (select), an int, or one per axis.

    With ``strict`` an inadmissible plan raises ``InadmissiblePlan`` carrying
    the failing inequality; otherwise the plan is returned flagged.
    """
    C_lows = tuple(float(c) for c in C_lows)
    d = len(C_lows)
    if a is None:
        chosen = []
        for C in C_lows:
            sel = select_base(C, p, a_max) if C > 1 else None
            chosen.append(sel if sel is not None else 2)
        bases = tuple(chosen)
    elif isinstance(a, (int, np.integer)):
        bases = (int(a),) * d
    else:
        bases = tuple(int(x) for x in a)
    if len(bases) != d:
        raise ValueError("one base per axis required")
    texts, ok_all = [], True
    for C, b in zip(C_lows, bases):
        ok, text = base_condition(C, b, p)
        c = c_const(b, p, C)
        ok = ok and c < 1
        ok_all &= ok
        texts.append(text + ("" if c < 1 else f"; c = {c:.6g} >= 1"))
    plan = BasePlan(
        a=bases,
        p=float(p),
        C_low=C_lows,
        c=tuple(c_const(b, p, C) for C, b in zip(C_lows, bases)),
        D_ap=tuple(d_ap(b, p) for b in bases),
        k=tuple(kappa_const(b, p, C) for C, b in zip(C_lows, bases)),
        admissible=bool(ok_all),
        inequalities=tuple(texts),
    )
    if strict and not plan.admissible:
        bad = "; ".join(t for t in texts if "<=" in t or ">= 1" in t)
        raise InadmissiblePlan(f"base plan inadmissible: {bad}")
    return plan


# ---------------------------------------------------------------- Toeplitz


@dataclass(frozen=True)
class ToeplitzWeights:
    """``w(n;k) = prod_j (phi_j(a^(k_j+1)) - phi_j(a^k_j)) / phi_j(a^(n_j+1))`` for ``k <= n``."""

    phis: tuple
    a: int

    def __post_init__(self):
        object.__setattr__(self, "phis", tuple(self.phis))
        if self.a < 2:
            raise ValueError("Toeplitz base must be >= 2")

    @property
    def d(self) -> int:
        return len(self.phis)

    def _phi_at_powers(self, j: int, n_max: int) -> np.ndarray:
        return self.phis[j](float(self.a) ** np.arange(n_max + 2))

    def axis_matrix(self, j: int, n_max: int) -> np.ndarray:
        """Lower-triangular ``W[n, k]`` for axis ``j``, ``0 <= n, k <= n_max``."""
        v = self._phi_at_powers(j, n_max)
        inc = np.diff(v)
        W = inc[None, : n_max + 1] / v[1 : n_max + 2, None]
        return np.tril(W)

    def weight(self, n, k) -> float:
        n, k = tuple(n), tuple(k)
        if len(n) != self.d or len(k) != self.d:
            raise ValueError(f"expected {self.d}-dimensional indices")
        if any(ki > ni for ki, ni in zip(k, n)) or any(ki < 0 for ki in k):
            return 0.0
        out = 1.0
        for phi, nj, kj in zip(self.phis, n, k):
            num = float(phi(float(self.a) ** (kj + 1)) - phi(float(self.a) ** kj))
            out *= num / float(phi(float(self.a) ** (nj + 1)))
        return out

    def row_sum(self, n) -> float:
        """Closed form ``prod_j (1 - phi_j(1)/phi_j(a^(n_j+1)))``."""
        out = 1.0
        for phi, nj in zip(self.phis, n):
            out *= 1.0 - float(phi(1.0)) / float(phi(float(self.a) ** (nj + 1)))
        return out

    def increments(self, k) -> float:
        """``prod_j (phi_j(a^(k_j+1)) - phi_j(a^k_j))``, the denominator of s(k)."""
        out = 1.0
        for phi, kj in zip(self.phis, k):
            out *= float(phi(float(self.a) ** (kj + 1)) - phi(float(self.a) ** kj))
        return out


@dataclass(frozen=True)
class ToeplitzResult:
    t: np.ndarray
    tail_sup: np.ndarray  # tail_sup[N] = max over |m| >= N of |t(m)|, |m| = max coordinate


def toeplitz_transform(tw: ToeplitzWeights, s: np.ndarray, n_max: int) -> ToeplitzResult:
    """``t(m) = sum_k w(m;k) s(k)`` for all ``m`` in ``[0, n_max]^d``."""
    s = np.asarray(s, dtype=float)
    if s.shape != (n_max + 1,) * tw.d:
        raise ValueError(f"s must have shape {(n_max + 1,) * tw.d}, got {s.shape}")
    t = s
    for j in range(tw.d):
        W = tw.axis_matrix(j, n_max)
        t = np.moveaxis(np.tensordot(W, t, axes=([1], [j])), 0, j)
    level = np.indices(t.shape).max(axis=0) if tw.d > 1 else np.arange(n_max + 1)
    per_level = np.zeros(n_max + 1)
    np.maximum.at(per_level, level.ravel(), np.abs(t).ravel())
    tail = np.maximum.accumulate(per_level[::-1])[::-1]
    return ToeplitzResult(t, tail)


def block_aggregate(values: np.ndarray, a: int, k) -> float:
    """``A(k) = sum over l in {0..a-1}^d of M_d(l a^k; a^k)``; ``values[0, ..., 0]`` is site ``(1, ..., 1)``."""
    from .lattice import LatticeField, maximal_sum

    values = np.asarray(values)
    fld = LatticeField(values, origin=(1,) * values.ndim)
    d = fld.d
    size = tuple(a**kj for kj in k)
    total = 0.0
    for l in np.ndindex(*(a,) * d):
        m = tuple(li * sj for li, sj in zip(l, size))
        total += float(maximal_sum(fld, m, size, d))
    return total
