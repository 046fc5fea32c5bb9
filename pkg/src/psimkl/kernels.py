"""Coordinate-wise Gaussian kernel banks and empirical RKHS-correlation.

Each kernel looks at a single input coordinate through a Gaussian bump,
so k(x, x) = 1 everywhere and every Gram matrix has a unit diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "KernelSpec",
    "Dataset",
    "GramBank",
    "KappaEstimate",
    "gaussian_eval",
    "gram_bank",
    "cross_grams",
    "estimate_kappa",
]

# kernel values below this clamp to exactly 0 (sigma=0.01 drives the
# exponent past the double range)
_UNDERFLOW = 1e-300


@dataclass(frozen=True)
class KernelSpec:
    """One Gaussian kernel acting on a single input coordinate."""

    coordinate: int
    width: float

    def __post_init__(self) -> None:
        if self.coordinate < 0:
            raise ValueError(f"coordinate must be nonnegative, got {self.coordinate}")
        if not self.width > 0:
            raise ValueError(f"width must be positive, got {self.width}")


@dataclass(frozen=True)
class Dataset:
    """Inputs (n, d) with responses (n,)."""

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.outputs, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"inputs must be an (n, d) matrix, got shape {x.shape}")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValueError(
                f"outputs must be a length-{x.shape[0]} vector, got shape {y.shape}"
            )
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "outputs", y)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class GramBank:
    """M positive-semidefinite n x n Gram matrices with their kernel specs."""

    grams: np.ndarray  # (M, n, n)
    specs: tuple[KernelSpec, ...]

    def __post_init__(self) -> None:
        g = np.asarray(self.grams, dtype=float)
        specs = tuple(self.specs)
        if g.ndim != 3 or g.shape[1] != g.shape[2]:
            raise ValueError(f"grams must be (M, n, n), got shape {g.shape}")
        if len(specs) != g.shape[0]:
            raise ValueError("one KernelSpec per Gram matrix is required")
        sym = np.max(np.abs(g - np.transpose(g, (0, 2, 1)))) if g.size else 0.0
        if sym > 1e-12:
            raise ValueError(f"Gram matrices must be symmetric, max asymmetry {sym:.3e}")
        diag = np.diagonal(g, axis1=1, axis2=2)
        if np.max(np.abs(diag - 1.0)) > 1e-12:
            raise ValueError("Gram diagonals must equal 1")
        n = g.shape[1]
        for m in range(g.shape[0]):
            smallest = float(np.linalg.eigvalsh(g[m])[0])
            if smallest < -1e-8 * n:
                raise ValueError(
                    f"Gram {m} is not positive semidefinite (lambda_min={smallest:.3e})"
                )
        g.setflags(write=False)
        object.__setattr__(self, "grams", g)
        object.__setattr__(self, "specs", specs)

    @property
    def m(self) -> int:
        return self.grams.shape[0]

    @property
    def n(self) -> int:
        return self.grams.shape[1]


def gaussian_eval(spec: KernelSpec, x, x_other) -> float:
    """exp(-(x_m - x'_m)^2 / (2 sigma_m^2)) for the spec's coordinate m."""
    x = np.asarray(x, dtype=float)
    x_other = np.asarray(x_other, dtype=float)
    if spec.coordinate >= x.shape[-1] or spec.coordinate >= x_other.shape[-1]:
        raise ValueError(
            f"coordinate {spec.coordinate} out of range for inputs of dimension "
            f"{min(x.shape[-1], x_other.shape[-1])}"
        )
    delta = float(x[..., spec.coordinate] - x_other[..., spec.coordinate])
    value = np.exp(-(delta * delta) / (2.0 * spec.width**2))
    return float(value) if value > _UNDERFLOW else 0.0


def _coordinate_gram(a: np.ndarray, b: np.ndarray, width: float) -> np.ndarray:
    diff = a[:, None] - b[None, :]
    g = np.exp(-(diff * diff) / (2.0 * width**2))
    g[g < _UNDERFLOW] = 0.0
    return g


def gram_bank(dataset: Dataset, specs: Sequence[KernelSpec]) -> GramBank:
    """Stack the training Gram matrix of every kernel in the bank."""
    if dataset.n == 0:
        raise ValueError("cannot build Gram matrices from an empty dataset")
    specs = tuple(specs)
    if not specs:
        raise ValueError("at least one kernel spec is required")
    d = dataset.d
    for spec in specs:
        if spec.coordinate >= d:
            raise ValueError(f"coordinate {spec.coordinate} out of range for d={d}")
    grams = np.empty((len(specs), dataset.n, dataset.n))
    for i, spec in enumerate(specs):
        col = dataset.inputs[:, spec.coordinate]
        g = _coordinate_gram(col, col, spec.width)
        grams[i] = 0.5 * (g + g.T)  # exact symmetry against rounding
    return GramBank(grams=grams, specs=specs)


def cross_grams(specs: Sequence[KernelSpec], x_train: np.ndarray, x_test: np.ndarray) -> np.ndarray:
    """(M, n_test, n_train) kernel evaluations between test and train inputs."""
    x_train = np.asarray(x_train, dtype=float)
    x_test = np.asarray(x_test, dtype=float)
    out = np.empty((len(specs), x_test.shape[0], x_train.shape[0]))
    for i, spec in enumerate(specs):
        out[i] = _coordinate_gram(x_test[:, spec.coordinate], x_train[:, spec.coordinate], spec.width)
    return out


@dataclass(frozen=True)
class KappaEstimate:
    """Empirical RKHS-correlation constant with rank diagnostics."""

    value: float
    rank_deficient: bool
    retained_ranks: tuple[int, ...]
    warnings: tuple[str, ...] = field(default=())


def _retained_basis(gram: np.ndarray, center: bool) -> np.ndarray:
    n = gram.shape[0]
    if center:
        h = np.eye(n) - np.full((n, n), 1.0 / n)
        gram = h @ gram @ h
    eigvals, eigvecs = np.linalg.eigh(gram)
    cutoff = max(1.0, 1e-10 * float(np.trace(gram)))
    keep = eigvals > cutoff
    return eigvecs[:, keep]


def estimate_kappa(bank: GramBank, center: bool = True) -> KappaEstimate:
    """Smallest generalized correlation of the kernel bank on the sample.

    Per kernel, keeps the eigendirections of the (centered) Gram that are
    resolvable at sample precision (eigenvalue >= one sample's worth); the
    estimate is the smallest eigenvalue of the concatenated-basis overlap
    system, which equals the minimized ratio
    ||sum_m f_m||^2 / sum_m ||f_m||^2 over that span.  Exactly 1 when M=1.
    """
    if bank.m == 0:
        raise ValueError("kernel bank is empty")
    n = bank.n
    if bank.m == 1:
        rank = _retained_basis(bank.grams[0], center).shape[1]
        return KappaEstimate(1.0, False, (rank,))
    bases = [_retained_basis(g, center) for g in bank.grams]
    ranks = tuple(b.shape[1] for b in bases)
    warnings: list[str] = []
    if any(r == 0 for r in ranks):
        warnings.append("a kernel block has no resolvable directions")
    total = sum(ranks)
    rank_deficient = total >= n or any(r == 0 for r in ranks)
    if rank_deficient:
        warnings.append(
            f"retained spans overlap (sum of ranks {total} vs n={n}); "
            "value is a lower bound"
        )
    stacked = np.hstack([b for b in bases if b.shape[1] > 0])
    if stacked.shape[1] == 0:
        return KappaEstimate(0.0, True, ranks, tuple(warnings))
    overlap = stacked.T @ stacked
    smallest = float(np.linalg.eigvalsh(overlap)[0])
    value = float(min(max(smallest, 0.0), 1.0))
    return KappaEstimate(value, rank_deficient, ranks, tuple(warnings))
