"""Seed-deterministic rand/1/bin differential evolution on a box.

Used to minimize the learning-rate bound over the per-kernel radii; kept
deliberately small: one strategy, reflection at the box walls, elitist
selection, and a reproducible numpy Generator stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = ["DeConfig", "DeResult", "minimize"]


@dataclass(frozen=True)
class DeConfig:
    """Hyperparameters of the rand/1/bin run."""

    box: tuple[tuple[float, float], ...]
    population: int | None = None  # default 15 * dim
    generations: int = 300
    diff_weight: float = 0.7  # F
    crossover: float = 0.9  # CR
    seed: int = 0
    strategy: str = "rand1bin"

    def __post_init__(self) -> None:
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if not box:
            raise ValueError("box must have at least one dimension")
        if any(lo >= hi for lo, hi in box):
            raise ValueError("box bounds must satisfy lo < hi per dimension")
        if self.population is not None and self.population < 4:
            raise ValueError("population must be at least 4")
        if not 0.0 < self.diff_weight <= 2.0:
            raise ValueError("differential weight must lie in (0, 2]")
        if not 0.0 <= self.crossover <= 1.0:
            raise ValueError("crossover rate must lie in [0, 1]")
        if self.strategy != "rand1bin":
            raise ValueError(f"unsupported strategy {self.strategy!r}")
        object.__setattr__(self, "box", box)

    @property
    def dim(self) -> int:
        return len(self.box)

    def population_size(self) -> int:
        return self.population if self.population is not None else max(15 * self.dim, 4)


@dataclass(frozen=True)
class DeResult:
    best_point: np.ndarray
    best_value: float
    evaluations: int
    history: np.ndarray  # per-generation best values, nonincreasing


def _reflect(points: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Fold coordinates back into the box (triangle-wave reflection)."""
    span = hi - lo
    y = np.mod(points - lo, 2.0 * span)
    return lo + np.where(y > span, 2.0 * span - y, y)


def _evaluate(objective, batch_objective, points: np.ndarray) -> np.ndarray:
    if batch_objective is not None:
        values = np.asarray(batch_objective(points), dtype=float)
    else:
        values = np.array([float(objective(p)) for p in points])
    # NaN candidates are rejected outright
    return np.where(np.isnan(values), np.inf, values)


def minimize(
    objective: Callable[[np.ndarray], float],
    config: DeConfig,
    batch_objective: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> DeResult:
    """Minimize over the box; deterministic for a fixed config.seed.

    ``batch_objective``, when given, evaluates a (pop, dim) matrix of
    candidates in one call and must agree with ``objective`` pointwise.
    """
    rng = np.random.default_rng(config.seed)
    dim = config.dim
    pop_size = config.population_size()
    lo = np.array([b[0] for b in config.box])
    hi = np.array([b[1] for b in config.box])

    population = lo + (hi - lo) * rng.random((pop_size, dim))
    values = _evaluate(objective, batch_objective, population)
    evaluations = pop_size
    if not np.any(np.isfinite(values)):
        raise ValueError("objective returned no finite value on the initial population")

    history = [float(np.min(values))]
    f = config.diff_weight
    cr = config.crossover
    for _ in range(config.generations):
        # three distinct partners per target, none equal to the target
        partners = np.empty((pop_size, 3), dtype=int)
        for i in range(pop_size):
            choice = rng.choice(pop_size - 1, size=3, replace=False)
            choice[choice >= i] += 1
            partners[i] = choice
        mutants = population[partners[:, 0]] + f * (
            population[partners[:, 1]] - population[partners[:, 2]]
        )
        mutants = _reflect(mutants, lo, hi)

        cross = rng.random((pop_size, dim)) < cr
        cross[np.arange(pop_size), rng.integers(0, dim, size=pop_size)] = True
        trials = np.where(cross, mutants, population)

        trial_values = _evaluate(objective, batch_objective, trials)
        evaluations += pop_size
        improved = trial_values <= values
        population = np.where(improved[:, None], trials, population)
        values = np.where(improved, trial_values, values)
        history.append(float(np.min(values)))

    best = int(np.argmin(values))
    return DeResult(
        best_point=population[best].copy(),
        best_value=float(values[best]),
        evaluations=evaluations,
        history=np.asarray(history),
    )
