"""Norm calculus for mixed-norm kernel regularizers.

Three families are supported: plain lp norms, elastic-net mixtures
``tau*l1 + (1-tau)*l2``, and grouped (p, q) block norms.  The solver
penalties and every learning-rate formula are built on the primal norm,
its dual, and the two all-ones quantities computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "Lp",
    "ElasticNet",
    "Block",
    "NormSpec",
    "NormReport",
    "conjugate_exponent",
    "psi_norm",
    "dual_norm",
    "dual_norm_batch",
    "dual_spec",
    "psi_of_ones",
    "dual_of_ones",
    "isotropy_report",
]


@dataclass(frozen=True)
class Lp:
    """lp norm of the per-kernel norm vector, 1 <= p <= inf."""

    p: float

    def __post_init__(self) -> None:
        if not self.p >= 1.0:
            raise ValueError(f"lp exponent must satisfy p >= 1, got {self.p}")


@dataclass(frozen=True)
class ElasticNet:
    """Mixture tau*||.||_1 + (1-tau)*||.||_2 with tau in [0, 1]."""

    tau: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"elastic-net mixing must lie in [0, 1], got {self.tau}")


@dataclass(frozen=True)
class Block:
    """Grouped (p, q) mixed norm: lq across groups of within-group lp norms.

    ``groups`` holds 0-based kernel indices and must partition range(M),
    where M is the length of the vectors the norm is applied to.
    """

    p: float
    q: float
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not self.p >= 1.0 or not self.q >= 1.0:
            raise ValueError("block-norm exponents must satisfy p, q >= 1")
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        if not groups or any(len(g) == 0 for g in groups):
            raise ValueError("block-norm groups must be nonempty")
        object.__setattr__(self, "groups", groups)

    def size(self) -> int:
        return sum(len(g) for g in self.groups)


NormSpec = Union[Lp, ElasticNet, Block]


@dataclass(frozen=True)
class NormReport:
    """Isotropy quantities of a norm at a given dimension M."""

    value: float  # ||ones||_psi
    dual_of_ones: float  # ||ones||_psi*
    isotropy_product: float  # value * dual_of_ones, always >= M
    isotropic: bool  # product <= M within tolerance (constant 1)


def conjugate_exponent(p: float) -> float:
    """Holder conjugate q with 1/p + 1/q = 1; exact for p in {1, 2, inf}."""
    if not p >= 1.0:
        raise ValueError(f"exponent must satisfy p >= 1, got {p}")
    if p == 1.0:
        return math.inf
    if p == 2.0:
        return 2.0
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _lp(x: np.ndarray, p: float) -> float:
    if math.isinf(p):
        return float(np.max(np.abs(x)))
    if p == 1.0:
        return float(np.sum(np.abs(x)))
    if p == 2.0:
        return float(np.linalg.norm(x))
    return float(np.linalg.norm(x, ord=p))


def _check_partition(spec: Block, m: int) -> None:
    seen = sorted(i for g in spec.groups for i in g)
    if seen != list(range(m)):
        raise ValueError(
            f"block groups must partition range({m}) exactly, got {spec.groups}"
        )


def _block_value(x: np.ndarray, p: float, q: float, groups) -> float:
    inner = np.array([_lp(x[list(g)], p) for g in groups])
    return _lp(inner, q)


def psi_norm(v, spec: NormSpec) -> float:
    """Regularizer norm of a nonnegative vector of per-kernel RKHS norms."""
    v = _as_vector(v, "v")
    if np.any(v < 0):
        raise ValueError("psi_norm expects nonnegative entries (RKHS norms)")
    if isinstance(spec, Lp):
        return _lp(v, spec.p)
    if isinstance(spec, ElasticNet):
        return spec.tau * float(np.sum(v)) + (1.0 - spec.tau) * float(np.linalg.norm(v))
    if isinstance(spec, Block):
        _check_partition(spec, v.size)
        return _block_value(v, spec.p, spec.q, spec.groups)
    raise TypeError(f"unknown norm spec {spec!r}")


def _elastic_net_dual_split(z: np.ndarray, tau: float) -> float:
    """Crossing point t of t/tau = ||(z - t)_+||_2 / (1 - tau).

    The dual norm is min over t >= 0 of max(t/tau, ||(z-t)_+||_2/(1-tau)):
    the first branch increases, the second decreases, so the minimum sits
    at the unique crossing inside [0, max z].
    """
    lo, hi = 0.0, float(np.max(z))
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        left = mid / tau
        right = float(np.linalg.norm(np.maximum(z - mid, 0.0))) / (1.0 - tau)
        if left >= right:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def dual_norm(b, spec: NormSpec) -> float:
    """Dual norm sup{b.a : psi_norm(a) <= 1} of an arbitrary vector."""
    b = _as_vector(b, "b")
    z = np.abs(b)
    if isinstance(spec, Lp):
        return _lp(z, conjugate_exponent(spec.p))
    if isinstance(spec, ElasticNet):
        tau = spec.tau
        if tau == 0.0:
            return float(np.linalg.norm(z))
        if tau == 1.0:
            return float(np.max(z))
        if float(np.max(z)) == 0.0:
            return 0.0
        if float(np.max(z)) == float(np.min(z)):
            # scaled all-ones vector: sqrt(M) / (1 - tau + tau*sqrt(M)), exactly
            root_m = math.sqrt(z.size)
            return float(z[0]) * root_m / (1.0 - tau + tau * root_m)
        return _elastic_net_dual_split(z, tau) / tau
    if isinstance(spec, Block):
        _check_partition(spec, z.size)
        return _block_value(z, conjugate_exponent(spec.p), conjugate_exponent(spec.q), spec.groups)
    raise TypeError(f"unknown norm spec {spec!r}")


def _lp_batch(x: np.ndarray, p: float) -> np.ndarray:
    if math.isinf(p):
        return np.max(np.abs(x), axis=-1)
    if p == 1.0:
        return np.sum(np.abs(x), axis=-1)
    if p == 2.0:
        return np.sqrt(np.sum(x * x, axis=-1))
    return np.sum(np.abs(x) ** p, axis=-1) ** (1.0 / p)


def dual_norm_batch(b: np.ndarray, spec: NormSpec) -> np.ndarray:
    """Rowwise dual norms of a (rows, M) matrix; used by the DE hot loop."""
    b = np.atleast_2d(np.asarray(b, dtype=float))
    z = np.abs(b)
    if isinstance(spec, Lp):
        return _lp_batch(z, conjugate_exponent(spec.p))
    if isinstance(spec, Block):
        _check_partition(spec, z.shape[1])
        pc = conjugate_exponent(spec.p)
        qc = conjugate_exponent(spec.q)
        inner = np.stack([_lp_batch(z[:, list(g)], pc) for g in spec.groups], axis=1)
        return _lp_batch(inner, qc)
    if isinstance(spec, ElasticNet):
        tau = spec.tau
        if tau == 0.0:
            return _lp_batch(z, 2.0)
        if tau == 1.0:
            return np.max(z, axis=1)
        # vectorized bisection over rows for the crossing point
        hi = np.max(z, axis=1).astype(float)
        lo = np.zeros_like(hi)
        zero = hi == 0.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            right = np.sqrt(np.sum(np.maximum(z - mid[:, None], 0.0) ** 2, axis=1))
            take_hi = mid / tau >= right / (1.0 - tau)
            hi = np.where(take_hi, mid, hi)
            lo = np.where(take_hi, lo, mid)
        out = 0.5 * (lo + hi) / tau
        return np.where(zero, 0.0, out)
    raise TypeError(f"unknown norm spec {spec!r}")


def dual_spec(spec: NormSpec) -> NormSpec:
    """Descriptor of the dual norm, for families closed under duality."""
    if isinstance(spec, Lp):
        return Lp(conjugate_exponent(spec.p))
    if isinstance(spec, Block):
        return Block(conjugate_exponent(spec.p), conjugate_exponent(spec.q), spec.groups)
    if isinstance(spec, ElasticNet):
        raise ValueError("the dual of an elastic-net norm is not an elastic-net norm")
    raise TypeError(f"unknown norm spec {spec!r}")


def psi_of_ones(spec: NormSpec, m: int) -> float:
    return psi_norm(np.ones(m), spec)


def dual_of_ones(spec: NormSpec, m: int) -> float:
    return dual_norm(np.ones(m), spec)


def isotropy_report(spec: NormSpec, m: int) -> NormReport:
    """||ones||_psi, ||ones||_psi*, their product, and the isotropy flag.

    The product is always >= M by duality; the norm counts as isotropic
    (with constant 1) when the product does not exceed M.
    """
    if m < 1:
        raise ValueError("M must be >= 1")
    value = psi_of_ones(spec, m)
    dual1 = dual_of_ones(spec, m)
    product = value * dual1
    return NormReport(
        value=value,
        dual_of_ones=dual1,
        isotropy_product=product,
        isotropic=product <= m * (1.0 + 1e-9),
    )
