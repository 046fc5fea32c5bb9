"""Learning-rate formulas for mixed-norm multiple kernel learning.

Implements the radius-dependent bound ingredients (alpha/beta quantities),
the leading-term objective and its global minimization over radii, the
homogeneous simplified rate with its closed-form balancing radius, the
per-family concrete rates, the minimax lower bound, the local Rademacher
complexity bound, and the l1-vs-linf inhomogeneous comparison.

Every returned value is "up to the analysis' absolute constants", which
are uniformly set to 1, so comparisons across norms and exponents are
meaningful while magnitudes are not calibrated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .de import DeConfig, DeResult, minimize
from .norms import NormSpec, dual_norm, dual_norm_batch, dual_of_ones, psi_norm

__all__ = [
    "BoundInputs",
    "AlphaBeta",
    "RateReport",
    "MinimaxLower",
    "InhomogeneousComparison",
    "DEFAULT_LOG_RADIUS_BOX",
    "alpha_beta",
    "leading_term_objective",
    "minimize_over_radii",
    "uniform_balancing_radius",
    "homogeneous_rate",
    "concrete_rate",
    "minimax_lower",
    "local_rademacher_bound",
    "inhomogeneous_comparison",
]

# radii are optimized in log-space on this (per-dimension) box
DEFAULT_LOG_RADIUS_BOX = (math.log(1e-6), math.log(1e6))


@dataclass(frozen=True)
class BoundInputs:
    """A theoretical scenario: sample size, spectral complexities, truth norms."""

    n: int
    complexities: np.ndarray  # s_m in [0, 1); 0 is the formal simple-kernel limit
    truth_norms: np.ndarray  # per-kernel RKHS norms of the target
    norm: NormSpec
    kappa: float = 1.0
    radii: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        s = np.asarray(self.complexities, dtype=float)
        t = np.asarray(self.truth_norms, dtype=float)
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if s.ndim != 1 or s.size < 1:
            raise ValueError("complexities must be a nonempty vector")
        if np.any(s < 0) or np.any(s >= 1):
            raise ValueError("complexities must satisfy 0 <= s_m < 1")
        if t.shape != s.shape:
            raise ValueError("truth_norms must match complexities in length")
        if np.any(t < 0):
            raise ValueError("truth_norms must be nonnegative")
        if not 0.0 < self.kappa <= 1.0:
            raise ValueError("kappa must lie in (0, 1]")
        s.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "complexities", s)
        object.__setattr__(self, "truth_norms", t)
        if self.radii is not None:
            r = np.asarray(self.radii, dtype=float)
            if r.shape != s.shape or np.any(r <= 0) or not np.all(np.isfinite(r)):
                raise ValueError("radii must be positive reals, one per kernel")
            r.setflags(write=False)
            object.__setattr__(self, "radii", r)

    @property
    def m(self) -> int:
        return int(self.complexities.size)


@dataclass(frozen=True)
class AlphaBeta:
    alpha1: float
    alpha2: float
    beta1: float
    beta2: float


@dataclass(frozen=True)
class RateReport:
    """leading term + M log M / n split of a rate evaluation."""

    leading_term: float
    second_term: float
    total: float
    minimizing_radii: Optional[np.ndarray] = None
    regime: str = "localized-dominates"  # or "global-dominates"
    used_fallback: bool = False


@dataclass(frozen=True)
class MinimaxLower:
    value: float
    in_regime: bool


@dataclass(frozen=True)
class InhomogeneousComparison:
    l1_rate: float
    linf_rate: float
    ratio: float
    in_regime: bool


def _exponents(s: np.ndarray):
    """Per-kernel radius/n exponents of the four bound ingredients."""
    e_a1 = -2.0 * s
    e_a2 = 1.0 - s
    e_b1 = -2.0 * s * (3.0 - s) / (1.0 + s)
    e_b2 = (1.0 - s) ** 2 / (1.0 + s)
    return e_a1, e_a2, e_b1, e_b2


def _alpha_beta_batch(log_radii: np.ndarray, inputs: BoundInputs) -> np.ndarray:
    """(rows, 4) alpha1, alpha2, beta1, beta2 for a (rows, M) log-radius matrix."""
    s = inputs.complexities
    n = float(inputs.n)
    e_a1, e_a2, e_b1, e_b2 = _exponents(s)
    n_b1 = n ** (2.0 / (1.0 + s))
    n_b2 = n ** (1.0 / (1.0 + s))

    log_radii = np.atleast_2d(log_radii)
    alpha1 = 3.0 * np.sqrt(np.sum(np.exp(log_radii * e_a1) / n, axis=1))
    beta1 = 3.0 * np.sqrt(np.sum(np.exp(log_radii * e_b1) / n_b1, axis=1))
    alpha2 = 3.0 * dual_norm_batch(s * np.exp(log_radii * e_a2) / math.sqrt(n), inputs.norm)
    beta2 = 3.0 * dual_norm_batch(s * np.exp(log_radii * e_b2) / n_b2, inputs.norm)
    return np.stack([alpha1, alpha2, beta1, beta2], axis=1)


def alpha_beta(inputs: BoundInputs) -> AlphaBeta:
    """Evaluate the four bound ingredients at the inputs' radii."""
    if inputs.radii is None:
        raise ValueError("alpha_beta needs radii; use minimize_over_radii to pick them")
    row = _alpha_beta_batch(np.log(inputs.radii)[None, :], inputs)[0]
    return AlphaBeta(alpha1=float(row[0]), alpha2=float(row[1]), beta1=float(row[2]), beta2=float(row[3]))


def _objective_batch(log_radii: np.ndarray, inputs: BoundInputs, truth_value: float) -> np.ndarray:
    ab = _alpha_beta_batch(log_radii, inputs)
    a1, a2, b1, b2 = ab[:, 0], ab[:, 1], ab[:, 2], ab[:, 3]
    return a1**2 + b1**2 + ((a2 / a1) ** 2 + (b2 / b1) ** 2) * truth_value**2


def leading_term_objective(inputs: BoundInputs) -> float:
    """alpha1^2 + beta1^2 + [(alpha2/alpha1)^2 + (beta2/beta1)^2] ||f*||_psi^2."""
    if inputs.radii is None:
        raise ValueError("leading_term_objective needs radii")
    truth_value = psi_norm(inputs.truth_norms, inputs.norm)
    value = _objective_batch(np.log(inputs.radii)[None, :], inputs, truth_value)[0]
    return float(value)


def uniform_balancing_radius(
    n: int, m: int, s: float, psi_norm_of_truth: float, dual_ones: float
) -> float:
    """Closed-form common radius balancing alpha1^2 against the penalty term.

    Homogeneous derivation; the inverse radius is
    (s/3)^{1/(1+s)} M^{-1/(1+s)} n^{1/(2(1+s))} (||1||_psi* ||f*||_psi)^{1/(1+s)}.
    Degenerate scales (s=0 or a zero product) fall back to radius 1.
    """
    product = dual_ones * psi_norm_of_truth
    if s <= 0.0 or product <= 0.0:
        return 1.0
    inv = (
        (s / 3.0) ** (1.0 / (1.0 + s))
        * m ** (-1.0 / (1.0 + s))
        * n ** (1.0 / (2.0 * (1.0 + s)))
        * product ** (1.0 / (1.0 + s))
    )
    return 1.0 / inv


def _second_term(n: int, m: int) -> float:
    return m * math.log(m) / n if m > 1 else 0.0


def minimize_over_radii(inputs: BoundInputs, de: DeConfig | None = None) -> RateReport:
    """Globally minimize the leading-term objective over the radii.

    Differential evolution runs in log-radius space; the result is then
    compared against the homogeneous closed-form uniform radius (computed
    with the mean complexity) and the better of the two is returned, with
    ``used_fallback`` set when DE failed to improve on the uniform point.
    """
    if inputs.radii is not None:
        raise ValueError("radii are the decision variables; pass inputs without radii")
    m = inputs.m
    if de is None:
        de = DeConfig(box=(DEFAULT_LOG_RADIUS_BOX,) * m)
    if de.dim != m:
        raise ValueError(f"DE box has dimension {de.dim}, expected {m}")
    truth_value = psi_norm(inputs.truth_norms, inputs.norm)

    def single(point: np.ndarray) -> float:
        return float(_objective_batch(point[None, :], inputs, truth_value)[0])

    def batch(points: np.ndarray) -> np.ndarray:
        return _objective_batch(points, inputs, truth_value)

    result = minimize(single, de, batch_objective=batch)

    s_bar = float(np.mean(inputs.complexities))
    dual_ones = dual_norm(np.ones(m), inputs.norm)
    uniform = uniform_balancing_radius(inputs.n, m, s_bar, truth_value, dual_ones)
    lo, hi = de.box[0]
    log_uniform = np.full(m, min(max(math.log(uniform), lo), hi))
    uniform_value = single(log_uniform)

    if uniform_value < result.best_value:
        best_value, best_log, fallback = uniform_value, log_uniform, True
    else:
        best_value, best_log, fallback = result.best_value, result.best_point, False

    second = _second_term(inputs.n, m)
    return RateReport(
        leading_term=best_value,
        second_term=second,
        total=best_value + second,
        minimizing_radii=np.exp(best_log),
        regime="localized-dominates" if best_value >= second else "global-dominates",
        used_fallback=fallback,
    )


def _homogeneous_leading(n: int, m: int, s: float, product: float) -> float:
    return m ** (1.0 - 2.0 * s / (1.0 + s)) * n ** (-1.0 / (1.0 + s)) * product ** (
        2.0 * s / (1.0 + s)
    )


def homogeneous_rate(
    n: int, m: int, s: float, psi_norm_of_truth: float, dual_ones: float
) -> RateReport:
    """Simplified homogeneous rate
    M^{1-2s/(1+s)} n^{-1/(1+s)} (||1||_psi* ||f*||_psi)^{2s/(1+s)} + M log M / n.
    """
    if not 0.0 < s < 1.0:
        raise ValueError("homogeneous complexity must satisfy 0 < s < 1")
    if n < 1 or m < 1:
        raise ValueError("n and M must be >= 1")
    product = dual_ones * psi_norm_of_truth
    leading = _homogeneous_leading(n, m, s, product)
    second = _second_term(n, m)
    if m > 1 and product > 0.0:
        threshold = m**2 * math.log(m) ** ((1.0 + s) / s) / product**2
    else:
        threshold = 0.0 if m == 1 else math.inf
    radius = uniform_balancing_radius(n, m, s, psi_norm_of_truth, dual_ones)
    return RateReport(
        leading_term=leading,
        second_term=second,
        total=leading + second,
        minimizing_radii=np.full(m, radius),
        regime="localized-dominates" if n >= threshold else "global-dominates",
    )


def concrete_rate(n: int, m: int, s: float, spec: NormSpec, truth_norms) -> float:
    """Leading rate term of a concrete regularizer family at homogeneous s.

    Specializing the homogeneous rate with the family's ||1||_psi* and
    ||f*||_psi reproduces the lp / elastic-net / grouped-norm displays,
    including their coincidences (elastic-net tau=1 vs l1, tau=0 vs l2,
    single-group mixed norm vs lp).
    """
    truth = np.asarray(truth_norms, dtype=float)
    if truth.size != m:
        raise ValueError("truth_norms must have length M")
    return _homogeneous_leading(
        n, m, s, dual_of_ones(spec, m) * psi_norm(truth, spec)
    )


def minimax_lower(
    n: int, m: int, s: float, radius: float, dual_ones: float, cbar: float = 1.0
) -> MinimaxLower:
    """Minimax lower bound over the psi-norm ball of the given radius (C := 1).

    ``in_regime`` reports whether n clears the hypothesis
    n > cbar^2 M^2 / (R^2 ||1||_psi*^2); the value is returned either way.
    """
    if not 0.0 < s < 1.0:
        raise ValueError("complexity must satisfy 0 < s < 1")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    value = _homogeneous_leading(n, m, s, dual_ones * radius)
    if radius > 0.0 and dual_ones > 0.0:
        in_regime = n > cbar**2 * m**2 / (radius**2 * dual_ones**2)
    else:
        in_regime = False
    return MinimaxLower(value=value, in_regime=in_regime)


def local_rademacher_bound(inputs: BoundInputs, r: float, big_r: float) -> float:
    """Local Rademacher complexity bound at L2-radius r and psi-radius R.

    (alpha1 + beta1 + sqrt(M log M / n)) r / sqrt(kappa) + (alpha2 + beta2) R,
    with the outer scaling constant set to 1.
    """
    if r < 0 or big_r < 0:
        raise ValueError("radii must be nonnegative")
    ab = alpha_beta(inputs)
    tail = math.sqrt(_second_term(inputs.n, inputs.m))
    root_kappa = math.sqrt(inputs.kappa)
    return (ab.alpha1 + ab.beta1 + tail) * r / root_kappa + (ab.alpha2 + ab.beta2) * big_r


def inhomogeneous_comparison(n: int, m: int, s: float) -> InhomogeneousComparison:
    """l1 vs linf rates when one kernel has complexity s and the rest are simple.

    l1 pays an extra M^{2s/(1+s)} factor; ``in_regime`` reports whether
    n >= max(M^{4s/(1-s)}, (M log M)^{(1+s)/s}) so the comparison applies.
    """
    if not 0.0 < s < 1.0:
        raise ValueError("complexity must satisfy 0 < s < 1")
    if n < 1 or m < 1:
        raise ValueError("n and M must be >= 1")
    base = n ** (-1.0 / (1.0 + s))
    ratio = m ** (2.0 * s / (1.0 + s))
    mlogm = m * math.log(m)
    threshold = max(m ** (4.0 * s / (1.0 - s)), mlogm ** ((1.0 + s) / s) if mlogm > 0 else 0.0)
    return InhomogeneousComparison(
        l1_rate=base * ratio,
        linf_rate=base,
        ratio=ratio,
        in_regime=n >= threshold,
    )
