"""Mixed-norm regularized least squares over a kernel bank.

Solves, in the span given by the representer theorem,

    min over f_m, b of  mean((y - sum_m f_m(x_i) - b)^2)
                        + lambda * psi(||f_1||_H1, ..., ||f_M||_HM)^2

with two backends:

* ``alternating_weights`` for lp penalties with p in [1, 2]: the squared
  lp norm is rewritten as a weighted sum of squared RKHS norms, which
  turns each step into one kernel ridge solve on the weighted kernel sum
  followed by a closed-form weight update (a majorize-minimize scheme,
  so the objective never increases).
* ``proximal_gradient`` for everything else: a monotone accelerated
  proximal gradient method on square-root-kernel coordinates, where each
  penalty is either differentiable (lp with finite p >= 2 after grouping)
  or has a computable prox on the vector of block norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from . import _prox
from .kernels import GramBank
from .norms import Block, ElasticNet, Lp, NormSpec, psi_norm

__all__ = [
    "MklProblem",
    "MklModel",
    "SolverOptions",
    "Diagnostics",
    "GramFactors",
    "NumericalError",
    "kernel_ridge_solve",
    "fit",
    "predict",
    "lp_weight_update",
    "stationarity_residual",
]


class NumericalError(RuntimeError):
    """A linear system could not be solved reliably."""


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 5000
    tol: float = 1e-8
    weight_floor: float = 1e-8
    backend: Optional[str] = None  # "alternating_weights" | "proximal_gradient"

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tol <= 0 or self.weight_floor <= 0:
            raise ValueError("tol and weight_floor must be positive")
        if self.backend not in (None, "alternating_weights", "proximal_gradient"):
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass(frozen=True)
class MklProblem:
    bank: GramBank
    outputs: np.ndarray
    norm: NormSpec
    lam: float
    with_bias: bool = True

    def __post_init__(self) -> None:
        y = np.asarray(self.outputs, dtype=float)
        if y.ndim != 1 or y.shape[0] != self.bank.n:
            raise ValueError("outputs must match the Gram dimension")
        if not self.lam > 1e-14:
            raise ValueError("lambda must be positive (and above 1e-14)")
        if isinstance(self.norm, Block) and self.norm.size() != self.bank.m:
            raise ValueError("block groups must partition the kernel indices")
        y.setflags(write=False)
        object.__setattr__(self, "outputs", y)


@dataclass(frozen=True)
class Diagnostics:
    iterations: int
    stationarity_residual: float
    converged: bool
    backend: str
    objective_history: tuple[float, ...] = ()
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class MklModel:
    dual_coeffs: np.ndarray  # (M, n): f_m = sum_i dual_coeffs[m, i] k_m(x_i, .)
    bias: float
    rkhs_norms: np.ndarray  # (M,)
    objective: float
    diagnostics: Diagnostics


def kernel_ridge_solve(
    gram: np.ndarray, y: np.ndarray, lam: float, with_bias: bool = True
) -> tuple[np.ndarray, float]:
    """Exactly minimize mean((y - G c - b)^2) + lam * c' G c.

    Any c with (G + n lam I) c = y - b 1 is stationary; the bias is fixed
    by the zero-mean residual condition, which reduces to a ratio of two
    solves against the same Cholesky factorization.
    """
    gram = np.asarray(gram, dtype=float)
    y = np.asarray(y, dtype=float)
    n = gram.shape[0]
    if gram.shape != (n, n) or y.shape != (n,):
        raise ValueError("gram must be (n, n) and y of length n")
    if not lam > 1e-14:
        raise ValueError("lambda must be positive (and above 1e-14)")

    base = gram + (n * lam) * np.eye(n)
    jitter = 0.0
    factor = None
    for _ in range(6):
        try:
            factor = scipy.linalg.cho_factor(
                base if jitter == 0.0 else base + jitter * np.eye(n), lower=True
            )
            break
        except np.linalg.LinAlgError:
            jitter = max(jitter * 100.0, 1e-12 * float(np.trace(base)) / n)
    if factor is None:
        cond = float(np.linalg.cond(base))
        raise NumericalError(f"ridge system is numerically singular (cond ~ {cond:.3e})")

    u = scipy.linalg.cho_solve(factor, y)
    if with_bias:
        w = scipy.linalg.cho_solve(factor, np.ones(n))
        denom = float(np.sum(w))
        if denom <= 0:
            raise NumericalError("bias normal equation degenerated")
        bias = float(np.sum(u)) / denom
        coeffs = u - bias * w
    else:
        bias = 0.0
        coeffs = u
    return coeffs, bias


def lp_weight_update(rkhs_norms, p: float, floor: float) -> np.ndarray:
    """Optimal kernel weights of the variational form of the squared lp norm.

    theta_m proportional to v_m^(2-p), normalized so sum theta^(p/(2-p)) = 1,
    which makes sum_m v_m^2 / theta_m equal ||v||_p^2.  Weights are clamped
    below at ``floor`` before renormalizing.  p = 2 returns all-ones.
    """
    if not 1.0 <= p < math.inf:
        raise ValueError("weight updates need a finite exponent p >= 1")
    if not floor > 0:
        raise ValueError("floor must be positive")
    v = np.asarray(rkhs_norms, dtype=float)
    if np.any(v < 0):
        raise ValueError("rkhs norms must be nonnegative")
    m = v.size
    if p == 2.0:
        return np.ones(m)
    r = p / (2.0 - p)
    if float(np.max(v)) == 0.0:
        return np.full(m, m ** (-1.0 / r))
    total = _lp_value(v, p)
    theta = np.maximum(v ** (2.0 - p) * total ** (p - 2.0), floor)
    return theta * float(np.sum(theta**r)) ** (-1.0 / r)


def _lp_value(x: np.ndarray, p: float) -> float:
    if math.isinf(p):
        return float(np.max(np.abs(x))) if x.size else 0.0
    if p == 1.0:
        return float(np.sum(np.abs(x)))
    if p == 2.0:
        return float(np.linalg.norm(x))
    return float(np.linalg.norm(x, ord=p))


# --- penalty plumbing -------------------------------------------------------


class _Penalty:
    """lambda * psi(block norms)^2 reduced to effective coefficient blocks.

    ``blocks`` lists kernel indices per effective block: block norms with
    inner exponent 2 collapse each group into one Euclidean super-block,
    everything else keeps one block per kernel.  On the effective blocks
    the penalty is an lp norm, an elastic-net mixture, or a sum of
    per-group lp norms (outer exponent 1).
    """

    def __init__(self, spec: NormSpec, lam: float, m: int):
        self.lam = lam
        self.groups: tuple[tuple[int, ...], ...] = ()
        if isinstance(spec, Lp):
            self.blocks = [[k] for k in range(m)]
            self.kind, self.p = "lp", spec.p
        elif isinstance(spec, ElasticNet):
            self.blocks = [[k] for k in range(m)]
            if spec.tau == 0.0:
                self.kind, self.p = "lp", 2.0
            else:
                self.kind, self.p, self.tau = "en", 1.0, spec.tau
        elif isinstance(spec, Block):
            if spec.p == 2.0:
                self.blocks = [list(g) for g in spec.groups]
                self.kind, self.p = "lp", spec.q
            elif spec.q == 1.0:
                self.blocks = [[k] for k in range(m)]
                self.kind, self.p = "group_sum", spec.p
                self.groups = spec.groups
            else:
                raise ValueError(
                    "the solver supports block norms with inner exponent 2 "
                    "(any outer exponent) or outer exponent 1 (any inner "
                    f"exponent); got (p={spec.p}, q={spec.q})"
                )
        else:
            raise TypeError(f"unknown norm spec {spec!r}")
        # the squared penalty has a Lipschitz gradient only for lp, p >= 2
        self.smooth = self.kind == "lp" and 2.0 <= self.p < math.inf
        # ... and is differentiable (with gradient vanishing into zero
        # blocks) for any lp with p > 1, which the residual check exploits
        self.differentiable = self.kind == "lp" and 1.0 < self.p < math.inf

    def norm_value(self, w: np.ndarray) -> float:
        if self.kind == "lp":
            return _lp_value(w, self.p)
        if self.kind == "en":
            return self.tau * float(np.sum(w)) + (1.0 - self.tau) * float(np.linalg.norm(w))
        return sum(_lp_value(w[list(g)], self.p) for g in self.groups)

    def value(self, w: np.ndarray) -> float:
        return self.lam * self.norm_value(w) ** 2

    def norm_prox(self, z: np.ndarray, mu: float) -> np.ndarray:
        if self.kind == "lp":
            return _prox.prox_lp(z, mu, self.p)
        if self.kind == "en":
            return _prox.prox_elastic_net(z, mu, self.tau)
        return _prox.prox_group_lp_sum(z, mu, self.p, self.groups)

    def prox_w(self, z: np.ndarray, step: float) -> np.ndarray:
        if self.kind == "lp":
            return _prox.prox_sq_lp(z, self.lam * step, self.p)
        if self.kind == "en":
            return _prox.prox_sq_elastic_net(z, self.lam * step, self.tau)
        return _prox.prox_sq(z, self.lam * step, self.norm_value, self.norm_prox)

    def grad_magnitude(self, w: np.ndarray) -> np.ndarray:
        """Per-block |d penalty / d g| for lp penalties with p > 1.

        The gradient of lambda*||w||_p^2 along block j has magnitude
        2 lambda ||w||_p^{2-p} w_j^{p-1} and direction g_j/||g_j||; the
        w^{p-1} form stays finite for vanishing blocks.
        """
        total = _lp_value(w, self.p)
        if total == 0.0:
            return np.zeros_like(w)
        if self.p == 2.0:
            return 2.0 * self.lam * w
        return 2.0 * self.lam * total ** (2.0 - self.p) * w ** (self.p - 1.0)

    def curvature_bound(self) -> float:
        if not self.smooth:
            return 0.0
        return 2.0 * self.lam * max(min(self.p, 64.0) - 1.0, 1.0)


class GramFactors:
    """Per-bank eigendecompositions shared across fits.

    Holds the symmetric square roots K_m (coordinates in which every RKHS
    norm is Euclidean), their pseudo-inverses for recovering dual
    coefficients, and the top curvature of the summed Gram.
    """

    def __init__(self, bank: GramBank):
        self.bank = bank
        n = bank.n
        self.roots = np.empty_like(bank.grams)
        self.pinv_roots = np.empty_like(bank.grams)
        for m in range(bank.m):
            vals, vecs = np.linalg.eigh(bank.grams[m])
            vals = np.maximum(vals, 0.0)
            cutoff = 1e-14 * max(float(vals[-1]), 1.0)
            root = np.sqrt(vals)
            inv_root = np.where(vals > cutoff, 1.0 / np.maximum(root, 1e-300), 0.0)
            self.roots[m] = (vecs * root) @ vecs.T
            self.pinv_roots[m] = (vecs * inv_root) @ vecs.T
        self.sum_gram_top = float(np.linalg.eigvalsh(np.sum(bank.grams, axis=0))[-1])
        self.n = n

    def loss_curvature(self, with_bias: bool) -> float:
        top = self.sum_gram_top + (self.n if with_bias else 0.0)
        return 2.0 * top / self.n


def _block_norms(g: np.ndarray, blocks) -> np.ndarray:
    if len(blocks) == g.shape[0]:  # singleton blocks, the common case
        return np.sqrt(np.sum(g * g, axis=1))
    return np.array([math.sqrt(float(np.sum(g[b] ** 2))) for b in blocks])


def _model_from_alpha(problem, alpha, bias, diagnostics) -> MklModel:
    grams = problem.bank.grams
    quad = np.einsum("mi,mij,mj->m", alpha, grams, alpha)
    rkhs_norms = np.sqrt(np.maximum(quad, 0.0))
    fitted = np.einsum("mij,mj->i", grams, alpha) + bias
    resid = problem.outputs - fitted
    objective = float(np.mean(resid**2)) + problem.lam * psi_norm(rkhs_norms, problem.norm) ** 2
    return MklModel(
        dual_coeffs=alpha,
        bias=float(bias),
        rkhs_norms=rkhs_norms,
        objective=objective,
        diagnostics=diagnostics,
    )


def _auto_backend(spec: NormSpec) -> str:
    if isinstance(spec, Lp) and 1.0 <= spec.p <= 2.0:
        return "alternating_weights"
    return "proximal_gradient"


def fit(
    problem: MklProblem,
    opts: SolverOptions | None = None,
    factors: GramFactors | None = None,
) -> MklModel:
    """Solve the regularized problem and return the fitted model.

    ``factors`` (eigendecompositions of the bank) can be shared across
    fits on the same bank and is computed on demand otherwise.
    """
    opts = opts or SolverOptions()
    backend = opts.backend or _auto_backend(problem.norm)
    if backend == "alternating_weights":
        if not (isinstance(problem.norm, Lp) and 1.0 <= problem.norm.p <= 2.0):
            raise ValueError(
                "alternating_weights handles lp penalties with p in [1, 2]; "
                "use the proximal_gradient backend for this norm"
            )
        return _fit_alternating(problem, opts, factors)
    return _fit_proximal(problem, opts, factors)


def predict(model: MklModel, cross: np.ndarray) -> np.ndarray:
    """Evaluate the model on (M, n_test, n_train) cross-kernel tensors."""
    cross = np.asarray(cross, dtype=float)
    mm, nn = model.dual_coeffs.shape
    if cross.ndim != 3 or cross.shape[0] != mm or cross.shape[2] != nn:
        raise ValueError(f"cross tensors must be (M={mm}, n_test, n={nn}), got {cross.shape}")
    return np.einsum("mti,mi->t", cross, model.dual_coeffs) + model.bias


# --- alternating weights backend --------------------------------------------


def _weighted_state(problem, theta):
    """One ridge solve on sum_m theta_m G_m, mapped back to per-kernel terms."""
    grams = problem.bank.grams
    gbar = np.einsum("m,mij->ij", theta, grams)
    c, b = kernel_ridge_solve(gbar, problem.outputs, problem.lam, problem.with_bias)
    alpha = theta[:, None] * c[None, :]
    quad = np.einsum("i,mij,j->m", c, grams, c)
    v = theta * np.sqrt(np.maximum(quad, 0.0))
    fitted = gbar @ c + b
    return alpha, b, v, fitted


def _masked_weights(v, active, p, floor):
    theta = np.zeros_like(v)
    idx = np.flatnonzero(active)
    theta[idx] = lp_weight_update(v[idx], p, floor)
    return theta


def _try_zeroing(problem, v, active, current_obj, floor) -> bool:
    """Zero blocks whose removal does not increase the objective.

    Candidates are active blocks with negligible norm; the reduced
    problem is re-solved once and the zeros accepted only on descent.
    """
    idx = np.flatnonzero(active)
    if idx.size <= 1:
        return False
    scale = float(np.max(v))
    if scale == 0.0:
        return False
    candidates = [k for k in idx if v[k] <= 1e-6 * scale]
    if not candidates:
        return False
    trial = active.copy()
    trial[candidates] = False
    p = problem.norm.p
    theta = _masked_weights(v, trial, p, floor)
    _, _, v_trial, fitted = _weighted_state(problem, theta)
    obj = float(np.mean((problem.outputs - fitted) ** 2)) + problem.lam * _lp_value(v_trial, p) ** 2
    if obj <= current_obj * (1.0 + 1e-12):
        active[candidates] = False
        return True
    return False


def _fit_alternating(problem, opts, factors):
    p = problem.norm.p
    m = problem.bank.m
    y = problem.outputs
    active = np.ones(m, dtype=bool)
    theta = lp_weight_update(np.ones(m), p, opts.weight_floor)
    history: list[float] = []
    warnings: list[str] = []
    best = None
    obj_prev = math.inf
    iterations = 0
    converged = False
    residual = math.inf
    stalled = 0
    resid_threshold = opts.tol * (1.0 + float(np.linalg.norm(y)))

    while iterations < opts.max_iters:
        iterations += 1
        alpha, b, v, fitted = _weighted_state(problem, theta * active)
        obj = float(np.mean((y - fitted) ** 2)) + problem.lam * _lp_value(v, p) ** 2
        if obj > obj_prev * (1.0 + 1e-12) + 1e-300:
            # the epsilon floor can stall the exact majorize-minimize descent
            warnings.append("weight floor stalled the descent; kept previous iterate")
            iterations -= 1
            break
        best = (alpha * active[:, None], b, v)
        history.append(obj)
        rel_drop = (obj_prev - obj) / max(abs(obj), 1.0)
        stalled = stalled + 1 if rel_drop <= 1e-15 else 0
        if rel_drop <= opts.tol:
            # small steps: certify (or keep polishing) on this active set,
            # trying exact sparsity first for p < 2
            if p < 2.0 and _try_zeroing(problem, v, active, obj, opts.weight_floor):
                theta = _masked_weights(v, active, p, opts.weight_floor)
                obj_prev = math.inf
                continue
            factors = factors or GramFactors(problem.bank)
            residual = stationarity_residual(problem, best[0], b, factors)
            if residual <= resid_threshold:
                converged = True
                break
            if stalled >= 10:
                warnings.append("objective stalled before the residual certificate")
                break
        obj_prev = obj
        theta = _masked_weights(v, active, p, opts.weight_floor)

    alpha, b, _ = best
    factors = factors or GramFactors(problem.bank)
    if not math.isfinite(residual):
        residual = stationarity_residual(problem, alpha, b, factors)
        converged = residual <= resid_threshold
    diagnostics = Diagnostics(
        iterations=iterations,
        stationarity_residual=residual,
        converged=converged,
        backend="alternating_weights",
        objective_history=tuple(history),
        warnings=tuple(warnings),
    )
    return _model_from_alpha(problem, alpha, b, diagnostics)


# --- proximal gradient backend ----------------------------------------------


def _radial_rescale(u: np.ndarray, blocks, z: np.ndarray, w: np.ndarray) -> np.ndarray:
    scale = np.where(z > 0.0, w / np.where(z > 0.0, z, 1.0), 0.0)
    if len(blocks) == u.shape[0]:  # singleton blocks
        return u * scale[:, None]
    out = u.copy()
    for j, blk in enumerate(blocks):
        out[blk] = u[blk] * scale[j]
    return out


def _fit_proximal(problem, opts, factors):
    factors = factors or GramFactors(problem.bank)
    penalty = _Penalty(problem.norm, problem.lam, problem.bank.m)
    y = problem.outputs
    n = problem.bank.n
    m = problem.bank.m
    roots = factors.roots
    with_bias = problem.with_bias
    lip = factors.loss_curvature(with_bias) + penalty.curvature_bound()

    def loss_of(g, b):
        resid = y - np.einsum("mij,mj->i", roots, g) - b
        return resid, float(np.mean(resid**2))

    def smooth_grad(g, b, resid):
        grad_g = np.einsum("mij,j->mi", roots, resid) * (-2.0 / n)
        grad_b = -2.0 * float(np.sum(resid)) / n if with_bias else 0.0
        if penalty.smooth:
            w = _block_norms(g, penalty.blocks)
            mag = penalty.grad_magnitude(w)
            for j, blk in enumerate(penalty.blocks):
                if w[j] > 0.0:
                    grad_g[blk] += (mag[j] / w[j]) * g[blk]
        return grad_g, grad_b

    def smooth_value(g, loss):
        if penalty.smooth:
            return loss + penalty.value(_block_norms(g, penalty.blocks))
        return loss

    def objective_of(g, loss):
        return loss + penalty.value(_block_norms(g, penalty.blocks))

    def candidate(gy, by, grad_g, grad_b, step):
        u = gy - step * grad_g
        b_new = by - step * grad_b if with_bias else 0.0
        if penalty.smooth:
            return u, b_new
        z = _block_norms(u, penalty.blocks)
        w = penalty.prox_w(z, step)
        return _radial_rescale(u, penalty.blocks, z, w), b_new

    g = np.zeros((m, n))
    b = 0.0
    resid, loss = loss_of(g, b)
    obj = objective_of(g, loss)
    history = [obj]
    gy, by = g, b
    g_prev, b_prev = g, b
    t_prev = 1.0
    last_z_obj = math.inf
    converged = False
    residual = math.inf
    iterations = 0
    obj_at_check = obj
    y_scale = 1.0 + float(np.linalg.norm(y))

    while iterations < opts.max_iters:
        iterations += 1
        resid_y, loss_y = loss_of(gy, by)
        grad_g, grad_b = smooth_grad(gy, by, resid_y)
        f_y = smooth_value(gy, loss_y)

        while True:
            zg, zb = candidate(gy, by, grad_g, grad_b, 1.0 / lip)
            resid_z, loss_z = loss_of(zg, zb)
            f_z = smooth_value(zg, loss_z)
            inner = float(np.sum(grad_g * (zg - gy))) + grad_b * (zb - by)
            dist2 = float(np.sum((zg - gy) ** 2)) + (zb - by) ** 2
            if f_z <= f_y + inner + 0.5 * lip * dist2 + 1e-12 * max(1.0, abs(f_y)):
                break
            lip *= 2.0

        obj_z = objective_of(zg, loss_z)
        g_prev, b_prev = g, b
        if obj_z <= obj:  # monotone acceptance
            g, b, obj = zg, zb, obj_z
        if obj_z > last_z_obj:
            t_prev = 1.0  # adaptive restart when the prox sequence backslides
        last_z_obj = obj_z
        history.append(obj)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_prev * t_prev))
        c1 = t_prev / t_next
        c2 = (t_prev - 1.0) / t_next
        gy = g + c1 * (zg - g) + c2 * (g - g_prev)
        by = b + c1 * (zb - b) + c2 * (b - b_prev)
        t_prev = t_next

        if iterations % 10 == 0 or iterations == opts.max_iters:
            rel_drop = (obj_at_check - obj) / max(abs(obj), 1.0)
            obj_at_check = obj
            residual = stationarity_residual(problem, None, b, factors, g=g)
            if residual <= opts.tol * y_scale and rel_drop <= opts.tol:
                converged = True
                break

    if not math.isfinite(residual):
        residual = stationarity_residual(problem, None, b, factors, g=g)
    alpha = np.einsum("mij,mj->mi", factors.pinv_roots, g)
    diagnostics = Diagnostics(
        iterations=iterations,
        stationarity_residual=float(residual),
        converged=converged,
        backend="proximal_gradient",
        objective_history=tuple(history),
    )
    return _model_from_alpha(problem, alpha, b, diagnostics)


def stationarity_residual(
    problem: MklProblem,
    alpha: Optional[np.ndarray],
    bias: float,
    factors: GramFactors | None = None,
    g: Optional[np.ndarray] = None,
) -> float:
    """First-order optimality residual of a candidate solution.

    Works in square-root-kernel coordinates (pass either dual
    coefficients ``alpha`` or those coordinates ``g`` directly): the
    plain gradient norm where the squared penalty is differentiable
    (lp penalties with p > 1), the prox-gradient mapping otherwise.
    """
    factors = factors or GramFactors(problem.bank)
    penalty = _Penalty(problem.norm, problem.lam, problem.bank.m)
    if g is None:
        if alpha is None:
            raise ValueError("pass alpha or g")
        g = np.einsum("mij,mj->mi", factors.roots, alpha)
    y = problem.outputs
    n = problem.bank.n
    resid = y - np.einsum("mij,mj->i", factors.roots, g) - bias
    grad_g = np.einsum("mij,j->mi", factors.roots, resid) * (-2.0 / n)
    grad_b = -2.0 * float(np.sum(resid)) / n if problem.with_bias else 0.0
    w = _block_norms(g, penalty.blocks)

    if penalty.differentiable:
        mag = penalty.grad_magnitude(w)
        for j, blk in enumerate(penalty.blocks):
            if w[j] > 0.0:
                grad_g[blk] += (mag[j] / w[j]) * g[blk]
        return math.sqrt(float(np.sum(grad_g**2)) + grad_b**2)

    step = 1.0 / factors.loss_curvature(problem.with_bias)
    u = g - step * grad_g
    z = _block_norms(u, penalty.blocks)
    wp = penalty.prox_w(z, step)
    pg = _radial_rescale(u, penalty.blocks, z, wp)
    pb = bias - step * grad_b
    return math.sqrt(float(np.sum((g - pg) ** 2)) + (bias - pb) ** 2) / step
