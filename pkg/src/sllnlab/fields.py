"""Random field generators used by the Monte Carlo experiments.

A ``FieldGenerator`` draws batches of fields indexed from the lattice origin,
shape ``(batch, *shape)``.  For the LFSS generator, index ``k >= 1`` carries
the sheet increment over the cell ``((k-1), k]`` and index 0 the cell
``(-1, 0]``, so that ``S(0; n) = Z(n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import signal

from .lattice import LatticeField
from .rng import stream
from .stable import LfssConfig, StableParams, increment_weights, sample_sas, simulate_increments


class ConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class VarianceMap:
    """``sigma^2(n) = scale * prod_i n_i^power`` (``power = 0`` gives a constant)."""

    scale: float = 1.0
    power: float = 0.0

    def __call__(self, idx: np.ndarray) -> np.ndarray:
        """``idx`` has shape ``(d, ...)``."""
        idx = np.asarray(idx, dtype=float)
        if self.power == 0:
            return np.full(idx.shape[1:], self.scale)
        return self.scale * np.prod(idx**self.power, axis=0)

    def describe(self) -> str:
        return f"variance(scale={self.scale:g},power={self.power:g})"


@dataclass(frozen=True)
class FieldGenerator:
    kind: str
    d: int
    alpha: float = 2.0
    scale: float = 1.0
    lfss: LfssConfig | None = None
    variance: Callable | None = None
    ar: tuple = ()
    method: str = "fft"

    KINDS = ("zero", "iid_sas", "iid_gauss", "lfss", "orthogonal", "quasi_stationary")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; expected one of {self.KINDS}")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind == "iid_sas":
            StableParams(self.alpha, self.scale)
        if self.kind == "iid_gauss" and not self.scale > 0:
            raise ValueError("Gaussian scale must be positive")
        if self.kind == "lfss":
            if self.lfss is None or self.lfss.d != self.d:
                raise ValueError("lfss generator needs an LfssConfig of matching dimension")
        if self.kind == "orthogonal" and self.variance is None:
            raise ValueError("orthogonal generator needs a variance map")
        if self.kind == "quasi_stationary":
            ar = tuple(float(r) for r in self.ar)
            if len(ar) != self.d:
                raise ConstructionError(f"need one AR coefficient per axis, got {ar}")
            if any(abs(r) >= 1 for r in ar):
                raise ConstructionError(f"AR coefficients must satisfy |r| < 1 for a stationary unit-variance construction, got {ar}")
            object.__setattr__(self, "ar", ar)

    @property
    def stationary(self) -> bool:
        if self.kind == "orthogonal":
            return isinstance(self.variance, VarianceMap) and self.variance.power == 0
        return True

    @property
    def stable_alpha(self) -> float | None:
        """Stability index of the marginals (None for Gaussian or zero fields)."""
        if self.kind in ("iid_sas", "lfss"):
            return self.lfss.alpha if self.kind == "lfss" else self.alpha
        return None

    def describe(self) -> str:
        if self.kind == "zero":
            return f"zero(d={self.d})"
        if self.kind == "iid_sas":
            return f"iid_sas(alpha={self.alpha:g},scale={self.scale:g},d={self.d})"
        if self.kind == "iid_gauss":
            return f"iid_gauss(sigma={self.scale:g},d={self.d})"
        if self.kind == "lfss":
            return self.lfss.describe()
        if self.kind == "orthogonal":
            v = self.variance.describe() if hasattr(self.variance, "describe") else "custom"
            return f"orthogonal({v},d={self.d})"
        return f"quasi_stationary(ar=({','.join(f'{r:g}' for r in self.ar)}))"

    def correlation_bound(self, lag) -> float:
        """Achieved ``|corr(xi_m, xi_{m+n})|`` bound (quasi-stationary fields)."""
        lag = tuple(lag)
        if self.kind == "quasi_stationary":
            return float(np.prod([abs(r) ** abs(l) for r, l in zip(self.ar, lag)]))
        return 1.0 if all(l == 0 for l in lag) else 0.0

    def prepare(self, shape):
        shape = tuple(int(s) for s in shape)
        if len(shape) != self.d:
            raise ValueError(f"shape {shape} does not match dimension {self.d}")
        if self.kind == "lfss":
            return increment_weights(self.lfss, shape, first_site=0)
        return None

    def cells_per_replicate(self, shape) -> int:
        if self.kind == "lfss":
            return int(np.prod([k.n_cells for k in self.prepare(shape)]))
        return int(np.prod(shape))

    def sample(self, rng: np.random.Generator, batch: int, shape, prepared=None) -> np.ndarray:
        shape = tuple(int(s) for s in shape)
        full = (batch,) + shape
        if self.kind == "zero":
            return np.zeros(full)
        if self.kind == "iid_sas":
            return sample_sas(StableParams(self.alpha, self.scale), rng, full)
        if self.kind == "iid_gauss":
            return self.scale * rng.standard_normal(full)
        if self.kind == "lfss":
            kernels = prepared if prepared is not None else self.prepare(shape)
            return simulate_increments(self.lfss, kernels, rng, batch, self.method)
        if self.kind == "orthogonal":
            var = self.variance(np.indices(shape))
            if np.any(var < 0):
                raise ConstructionError("variance map returned negative values")
            return np.sqrt(var) * rng.standard_normal(full)
        z = rng.standard_normal(full)
        for j, r in enumerate(self.ar):
            if r != 0:
                z = _ar1_along(z, r, j + 1)
        return z


def _ar1_along(z: np.ndarray, r: float, axis: int) -> np.ndarray:
    """Stationary unit-variance AR(1) filter ``y_t = r y_{t-1} + sqrt(1-r^2) z_t``, ``y_0 = z_0``."""
    z = np.moveaxis(z, axis, -1)
    y = np.empty_like(z)
    y[..., 0] = z[..., 0]
    if z.shape[-1] > 1:
        zi = (r * z[..., :1]).astype(float)
        y[..., 1:], _ = signal.lfilter([math.sqrt(1 - r * r)], [1.0, -r], z[..., 1:], axis=-1, zi=zi)
    return np.moveaxis(y, -1, axis)


# ---------------------------------------------------------------- covariance models


@dataclass(frozen=True)
class CovarianceModel:
    """``iid`` (Gaussian ``sigma`` or SaS ``alpha``), ``orthogonal`` (variance map),
    or ``quasi_stationary`` (per-axis AR coefficients)."""

    kind: str
    d: int
    sigma: float = 1.0
    alpha: float = 2.0
    law: str = "gauss"
    variance: Callable | None = None
    ar: tuple = field(default=())

    def generator(self) -> FieldGenerator:
        if self.kind == "iid":
            if self.law == "gauss":
                return FieldGenerator("iid_gauss", self.d, scale=self.sigma)
            if self.law == "sas":
                return FieldGenerator("iid_sas", self.d, alpha=self.alpha, scale=self.sigma)
            raise ValueError(f"unknown iid law {self.law!r}")
        if self.kind == "orthogonal":
            return FieldGenerator("orthogonal", self.d, variance=self.variance)
        if self.kind == "quasi_stationary":
            return FieldGenerator("quasi_stationary", self.d, ar=tuple(self.ar))
        raise ValueError(f"unknown covariance model {self.kind!r}")

    def correlation_bound(self, lag) -> float:
        return self.generator().correlation_bound(lag)


def generate_model_field(model: CovarianceModel, shape, seed: int) -> LatticeField:
    gen = model.generator()
    vals = gen.sample(stream(seed, "model/field"), 1, shape)[0]
    return LatticeField(vals, generator=gen.describe(), seed=seed)
