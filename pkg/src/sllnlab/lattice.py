"""Multi-indices, index domains, and exact partial sums on lattice boxes.

Conventions
-----------
* A rectangular sum ``S(m; n)`` runs over the half-open box ``(m, m+n]``,
  i.e. all ``k`` with ``m_i < k_i <= m_i + n_i``.
* ``Q_r`` is the lattice ball ``{k >= 0 : ||k|| <= r}`` for ``r >= 1`` and the
  empty set for ``r = 0``.  A spherical sum ``S(m; n)`` runs over the annulus
  ``Q_{m+n} \\ Q_m``.
* The norm (``"l2"`` or ``"linf"``) is always passed explicitly.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

NORMS = ("l2", "linf")


class LatticeRangeError(IndexError):
    """A query reaches outside the stored lattice box."""


def _check_norm(norm):
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}, got {norm!r}")


@dataclass(frozen=True, order=False)
class MultiIndex:
    coords: tuple

    def __post_init__(self):
        c = tuple(int(x) for x in self.coords)
        if len(c) < 1:
            raise ValueError("a multi-index needs at least one coordinate")
        if any(x < 0 for x in c):
            raise ValueError(f"coordinates must be nonnegative, got {c}")
        object.__setattr__(self, "coords", c)

    @classmethod
    def of(cls, *coords) -> "MultiIndex":
        return cls(coords)

    @classmethod
    def ones(cls, d: int) -> "MultiIndex":
        return cls((1,) * d)

    @property
    def d(self) -> int:
        return len(self.coords)

    @property
    def linf(self) -> int:
        return max(self.coords)

    @property
    def l2(self) -> float:
        return math.sqrt(sum(x * x for x in self.coords))

    def norm(self, norm: str):
        _check_norm(norm)
        return self.l2 if norm == "l2" else self.linf

    def __le__(self, other) -> bool:
        o = as_index(other, self.d)
        return all(a <= b for a, b in zip(self.coords, o.coords))

    def __ge__(self, other) -> bool:
        return as_index(other, self.d) <= self

    def __add__(self, other) -> "MultiIndex":
        o = as_index(other, self.d)
        return MultiIndex(tuple(a + b for a, b in zip(self.coords, o.coords)))

    def __iter__(self):
        return iter(self.coords)

    def __len__(self):
        return len(self.coords)

    def __getitem__(self, i):
        return self.coords[i]

    def power(self, a: int) -> "MultiIndex":
        """Coordinatewise ``a ** n_i``."""
        return MultiIndex(tuple(a**x for x in self.coords))


def as_index(x, d: int | None = None) -> MultiIndex:
    if isinstance(x, MultiIndex):
        idx = x
    elif isinstance(x, (int, np.integer)):
        if d is None:
            raise ValueError("scalar index needs a dimension")
        idx = MultiIndex((int(x),) * d)
    else:
        idx = MultiIndex(tuple(x))
    if d is not None and idx.d != d:
        raise ValueError(f"expected a {d}-dimensional index, got {idx.coords}")
    return idx


# ---------------------------------------------------------------- domains


@dataclass(frozen=True)
class IndexDomain:
    kind: str
    d: int
    lo: tuple = ()
    hi: tuple = ()
    radius: float = 0.0
    inner: int = 0
    width: int = 0
    norm: str | None = None

    @classmethod
    def rectangle(cls, lo, hi) -> "IndexDomain":
        lo, hi = tuple(int(x) for x in lo), tuple(int(x) for x in hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("rectangle corners must have equal positive dimension")
        if any(x < 0 for x in lo + hi):
            raise ValueError("rectangle corners must be nonnegative")
        return cls("rectangle", len(lo), lo=lo, hi=hi)

    @classmethod
    def ball(cls, r, norm: str, d: int) -> "IndexDomain":
        _check_norm(norm)
        if r < 0 or d < 1:
            raise ValueError("ball needs r >= 0 and d >= 1")
        return cls("ball", d, radius=float(r), norm=norm)

    @classmethod
    def annulus(cls, m: int, n: int, norm: str, d: int) -> "IndexDomain":
        _check_norm(norm)
        if m < 0 or n < 0 or d < 1:
            raise ValueError("annulus needs m, n >= 0 and d >= 1")
        return cls("annulus", d, inner=int(m), width=int(n), norm=norm)


def _in_ball(k: tuple, r: float, norm: str) -> bool:
    if r <= 0:
        return False
    if norm == "linf":
        return max(k) <= r
    return sum(x * x for x in k) <= r * r


def enumerate_domain(dom: IndexDomain) -> list[MultiIndex]:
    """All points of ``dom`` in lexicographic order."""
    if dom.kind == "rectangle":
        if any(a > b for a, b in zip(dom.lo, dom.hi)):
            return []
        ranges = [range(a, b + 1) for a, b in zip(dom.lo, dom.hi)]
        return [MultiIndex(k) for k in itertools.product(*ranges)]
    if dom.kind == "ball":
        r = dom.radius
        top = int(math.floor(r)) if r > 0 else -1
        pts = itertools.product(range(top + 1), repeat=dom.d)
        return [MultiIndex(k) for k in pts if _in_ball(k, r, dom.norm)]
    if dom.kind == "annulus":
        outer, inner = dom.inner + dom.width, dom.inner
        pts = itertools.product(range(outer + 1), repeat=dom.d)
        return [
            MultiIndex(k)
            for k in pts
            if _in_ball(k, outer, dom.norm) and not _in_ball(k, inner, dom.norm)
        ]
    raise ValueError(f"unknown domain kind {dom.kind!r}")


# ---------------------------------------------------------------- fields


@dataclass(frozen=True, eq=False)
class LatticeField:
    """Values on the box ``[origin, origin + shape)``."""

    values: np.ndarray
    origin: tuple = None
    generator: str = "manual"
    seed: int = 0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim < 1:
            raise ValueError("field values must have at least one axis")
        if not (np.issubdtype(v.dtype, np.integer) or np.issubdtype(v.dtype, np.floating)):
            raise ValueError(f"unsupported field dtype {v.dtype}")
        if v.flags.writeable:
            v = v.view()
            v.flags.writeable = False
        origin = (0,) * v.ndim if self.origin is None else tuple(int(x) for x in self.origin)
        if len(origin) != v.ndim or any(x < 0 for x in origin):
            raise ValueError(f"origin {origin} does not match a {v.ndim}-dimensional field")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", origin)

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def value(self, k) -> float:
        k = as_index(k, self.d)
        pos = []
        for i, (x, o, s) in enumerate(zip(k, self.origin, self.shape)):
            if not o <= x < o + s:
                raise LatticeRangeError(f"coordinate {i} = {x} outside [{o}, {o + s})")
            pos.append(x - o)
        return self.values[tuple(pos)].item()

    @functools.cached_property
    def prefix(self) -> "PrefixSumTable":
        return PrefixSumTable.build(self)


def _accumulate_dtype(dtype):
    return np.int64 if np.issubdtype(dtype, np.integer) else np.longdouble


@dataclass(frozen=True, eq=False)
class PrefixSumTable:
    """Zero-padded cumulative sums: ``table[i] = sum of values[j] over j < i``.

    Integer fields accumulate in int64 (exact).  Float fields accumulate in
    extended precision, which keeps inclusion-exclusion cancellation well
    below the 1e-12 relative target for boxes of realistic size.
    """

    table: np.ndarray
    origin: tuple
    shape: tuple
    integer: bool

    @classmethod
    def build(cls, fld: LatticeField) -> "PrefixSumTable":
        v = fld.values
        dt = _accumulate_dtype(v.dtype)
        t = np.zeros(tuple(s + 1 for s in v.shape), dtype=dt)
        t[tuple(slice(1, None) for _ in v.shape)] = v
        for ax in range(v.ndim):
            np.cumsum(t, axis=ax, out=t)
        t.flags.writeable = False
        return cls(t, fld.origin, fld.shape, bool(np.issubdtype(v.dtype, np.integer)))

    def _bounds(self, m: MultiIndex, n: MultiIndex):
        lo, hi = [], []
        for i, (mi, ni, o, s) in enumerate(zip(m, n, self.origin, self.shape)):
            if mi + 1 < o or mi + ni > o + s - 1:
                raise LatticeRangeError(
                    f"coordinate {i}: range ({mi}, {mi + ni}] not inside stored [{o}, {o + s - 1}]"
                )
            lo.append(mi + 1 - o)
            hi.append(mi + ni + 1 - o)
        return lo, hi

    def box_sum(self, m, n):
        """``S(m; n)`` over ``(m, m+n]`` by inclusion-exclusion."""
        d = len(self.shape)
        m, n = as_index(m, d), as_index(n, d)
        lo, hi = self._bounds(m, n)
        total = self.table.dtype.type(0)
        for corner in itertools.product((0, 1), repeat=d):
            idx = tuple(h if c else l for c, l, h in zip(corner, lo, hi))
            sign = -1 if (d - sum(corner)) % 2 else 1
            total = total + sign * self.table[idx]
        return int(total) if self.integer else float(total)

    def sum_grid(self, m, n, s: int) -> np.ndarray:
        """``S(m; k_1..k_s, n_{s+1}..n_d)`` for all ``1 <= k_j <= n_j`` (j <= s)."""
        d = len(self.shape)
        m, n = as_index(m, d), as_index(n, d)
        lo, hi = self._bounds(m, n)
        axes_lo = [np.array([l]) for l in lo]
        axes_hi = [np.arange(l + 1, h + 1) if j < s else np.array([h]) for j, (l, h) in enumerate(zip(lo, hi))]
        out = None
        for corner in itertools.product((0, 1), repeat=d):
            ix = np.ix_(*[axes_hi[j] if c else axes_lo[j] for j, c in enumerate(corner)])
            term = self.table[ix]
            sign = -1 if (d - sum(corner)) % 2 else 1
            out = sign * term if out is None else out + sign * term
        out = out.reshape(tuple(n[j] for j in range(s)))
        return out if self.integer else out.astype(np.float64)


def rect_partial_sum(fld: LatticeField, m, n):
    """``S(m; n) = sum of xi(k) over (m, m+n]``."""
    n = as_index(n, fld.d)
    if any(x < 1 for x in n):
        raise ValueError(f"n must be >= 1 componentwise, got {n.coords}")
    return fld.prefix.box_sum(m, n)


def maximal_sum(fld: LatticeField, m, n, s: int):
    """``M_s(m; n)``: max of ``|S(m; k_1..k_s, n_{s+1}..n_d)|`` over ``1 <= k_j <= n_j``."""
    if not 0 <= s <= fld.d:
        raise ValueError(f"s must lie in [0, {fld.d}], got {s}")
    n = as_index(n, fld.d)
    if any(x < 1 for x in n):
        raise ValueError(f"n must be >= 1 componentwise, got {n.coords}")
    grid = fld.prefix.sum_grid(m, n, s)
    best = np.abs(grid).max()
    return int(best) if fld.prefix.integer else float(best)


# ---------------------------------------------------------------- spherical sums


def ceil_isqrt(x: np.ndarray) -> np.ndarray:
    """Exact ``ceil(sqrt(x))`` for nonnegative int64 arrays."""
    x = np.asarray(x, dtype=np.int64)
    r = np.floor(np.sqrt(x.astype(np.float64))).astype(np.int64)
    r -= (r * r > x).astype(np.int64)
    r += ((r + 1) * (r + 1) <= x).astype(np.int64)
    return r + (r * r < x).astype(np.int64)


@functools.lru_cache(maxsize=32)
def shell_index(d: int, r_max: int, norm: str) -> np.ndarray:
    """Smallest ``r >= 1`` with ``k`` in ``Q_r``, for every ``k`` in ``[0, r_max]^d``."""
    _check_norm(norm)
    grids = np.indices((r_max + 1,) * d, dtype=np.int64)
    if norm == "linf":
        r = grids.max(axis=0)
    else:
        r = ceil_isqrt((grids * grids).sum(axis=0))
    r = np.maximum(r, 1)
    r.flags.writeable = False
    return r


@functools.lru_cache(maxsize=32)
def _shell_plan(d: int, r_max: int, norm: str):
    idx = shell_index(d, r_max, norm).ravel()
    keep = np.flatnonzero(idx <= r_max)
    order = keep[np.argsort(idx[keep], kind="stable")]
    starts = np.searchsorted(idx[order], np.arange(1, r_max + 1))
    return order, starts


def shell_sums(values: np.ndarray, r_max: int, norm: str, batch: bool = False) -> np.ndarray:
    """Sums over the shells ``Q_r \\ Q_{r-1}``, ``r = 0..r_max`` (entry 0 is 0).

    ``values`` is indexed from the lattice origin and must cover
    ``[0, r_max]^d``.  With ``batch=True`` the leading axis indexes replicates.
    """
    _check_norm(norm)
    v = np.asarray(values)
    lead = 1 if batch else 0
    d = v.ndim - lead
    if any(s < r_max + 1 for s in v.shape[lead:]):
        raise LatticeRangeError(f"Q_{r_max} needs extent {r_max + 1} on every axis, have {v.shape[lead:]}")
    sub = v[(slice(None),) * lead + (slice(0, r_max + 1),) * d]
    out_shape = v.shape[:lead] + (r_max + 1,)
    if r_max == 0:
        return np.zeros(out_shape, dtype=np.int64 if np.issubdtype(v.dtype, np.integer) else np.float64)
    order, starts = _shell_plan(d, r_max, norm)
    flat = sub.reshape(v.shape[:lead] + (-1,))
    if np.issubdtype(v.dtype, np.integer):
        gathered = flat[..., order].astype(np.int64)
    else:
        gathered = flat[..., order].astype(np.float64 if batch else np.longdouble)
    shells = np.add.reduceat(gathered, starts, axis=-1)
    out = np.zeros(out_shape, dtype=shells.dtype)
    out[..., 1:] = shells
    return out


def _is_int(fld: LatticeField) -> bool:
    return bool(np.issubdtype(fld.values.dtype, np.integer))


def _spherical_cumulative(fld: LatticeField, r_max: int, norm: str) -> np.ndarray:
    if any(o != 0 for o in fld.origin):
        raise LatticeRangeError(f"spherical sums need the lattice origin in the box, origin is {fld.origin}")
    return np.cumsum(shell_sums(fld.values, r_max, norm))


def spherical_partial_sum(fld: LatticeField, m: int, n: int, norm: str):
    """Sum over the annulus ``Q_{m+n} \\ Q_m``."""
    _check_norm(norm)
    if m < 0 or n < 0:
        raise ValueError("m and n must be nonnegative")
    if n == 0:
        return 0 if _is_int(fld) else 0.0
    cum = _spherical_cumulative(fld, m + n, norm)
    out = cum[m + n] - cum[m]
    return int(out) if _is_int(fld) else float(out)


def spherical_running_max(fld: LatticeField, m: int, n: int, norm: str):
    """``M(m; n) = max_{1 <= k <= n} |S(m; k)|``."""
    _check_norm(norm)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if m < 0:
        raise ValueError("m must be nonnegative")
    cum = _spherical_cumulative(fld, m + n, norm)
    best = np.abs(cum[m + 1 : m + n + 1] - cum[m]).max()
    return int(best) if _is_int(fld) else float(best)
