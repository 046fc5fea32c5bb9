"""Proximal operators on nonnegative vectors of block norms.

The solver reduces every penalty prox to an M-dimensional problem on the
vector of per-block Euclidean norms; this module solves those reduced
problems.  lp cases with p in {1, 2, inf} have exact sort-based solutions;
the rest go through the scalar reduction
``w = prox_{2*sigma*t*psi}(z)`` with ``t = psi(w)`` found by bisection.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "project_l1_ball",
    "project_lq_ball",
    "prox_lp",
    "prox_elastic_net",
    "prox_group_lp_sum",
    "prox_sq",
    "prox_sq_lp",
]


def project_l1_ball(z: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of z >= 0 onto the l1 ball (sort-based, exact)."""
    if radius <= 0.0:
        return np.zeros_like(z)
    total = float(np.sum(z))
    if total <= radius:
        return z.copy()
    u = np.sort(z)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, z.size + 1)
    valid = u - (css - radius) / k > 0
    rho = int(np.max(np.flatnonzero(valid))) + 1
    theta = (css[rho - 1] - radius) / rho
    return np.maximum(z - theta, 0.0)


def _coordinate_roots(z: np.ndarray, nu: float, q: float) -> np.ndarray:
    """Solve x + nu*q*x^(q-1) = z coordinatewise on [0, z].

    For q > 2 the left side is convex and Newton from x = z decreases
    monotonically onto the root; for 1 < q < 2 it is concave (infinite
    slope at 0), so bisection is used instead.
    """
    c = nu * q
    if q > 2.0:
        x = z.copy()
        for _ in range(40):
            f = x + c * x ** (q - 1.0) - z
            step = f / (1.0 + c * (q - 1.0) * x ** (q - 2.0))
            x = np.maximum(x - step, 0.0)
            if float(np.max(np.abs(step))) <= 1e-15 * (1.0 + float(np.max(x))):
                break
        return x
    lo = np.zeros_like(z)
    hi = z.copy()
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        high = mid + c * mid ** (q - 1.0) >= z
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
    return 0.5 * (lo + hi)


def project_lq_ball(z: np.ndarray, q: float, radius: float) -> np.ndarray:
    """Euclidean projection of z >= 0 onto the lq ball, q in (2, inf).

    Safeguarded Newton on the multiplier nu of the constraint
    sum x(nu)^q = radius^q, where x(nu) solves x + nu q x^(q-1) = z.
    """
    if radius <= 0.0:
        return np.zeros_like(z)
    scale = float(np.max(z))
    if scale <= 0.0:
        return np.zeros_like(z)
    # normalize so coordinates are O(1); the multiplier is then O(1) too
    z = z / scale
    target = (radius / scale) ** q
    if float(np.sum(z**q)) <= target:
        return z * scale
    nu_lo, nu_hi = 0.0, 1.0
    for _ in range(200):
        if float(np.sum(_coordinate_roots(z, nu_hi, q) ** q)) <= target:
            break
        nu_lo = nu_hi
        nu_hi *= 4.0
    else:
        raise RuntimeError("lq-ball projection failed to bracket the multiplier")

    nu = 0.5 * (nu_lo + nu_hi)
    x = _coordinate_roots(z, nu, q)
    for _ in range(100):
        gap = float(np.sum(x**q)) - target
        if gap > 0.0:
            nu_lo = nu
        else:
            nu_hi = nu
        if abs(gap) <= 1e-13 * target or nu_hi - nu_lo <= 1e-15 * nu_hi:
            break
        # implicit differentiation of the per-coordinate equation
        dx = -q * x ** (q - 1.0) / (1.0 + nu * q * (q - 1.0) * x ** (q - 2.0))
        slope = float(np.sum(q * x ** (q - 1.0) * dx))
        step = nu - gap / slope if slope < 0.0 else math.nan
        nu = step if nu_lo < step < nu_hi else 0.5 * (nu_lo + nu_hi)
        x = _coordinate_roots(z, nu, q)
    return x * scale


def prox_lp(z: np.ndarray, mu: float, p: float) -> np.ndarray:
    """prox of mu*||.||_p on z >= 0 (Moreau: z minus a dual-ball projection)."""
    if mu <= 0.0:
        return z.copy()
    if p == 1.0:
        return np.maximum(z - mu, 0.0)
    if p == 2.0:
        nrm = float(np.linalg.norm(z))
        if nrm == 0.0:
            return np.zeros_like(z)
        return max(1.0 - mu / nrm, 0.0) * z
    if math.isinf(p):
        return z - project_l1_ball(z, mu)
    q = p / (p - 1.0)
    return z - project_lq_ball(z, q, mu)


def prox_elastic_net(z: np.ndarray, mu: float, tau: float) -> np.ndarray:
    """prox of mu*(tau*||.||_1 + (1-tau)*||.||_2); l1 then l2 shrink is exact."""
    u = np.maximum(z - mu * tau, 0.0)
    nrm = float(np.linalg.norm(u))
    if nrm == 0.0:
        return np.zeros_like(z)
    return max(1.0 - mu * (1.0 - tau) / nrm, 0.0) * u


def prox_group_lp_sum(z: np.ndarray, mu: float, p: float, groups: Sequence[Sequence[int]]) -> np.ndarray:
    """prox of mu * sum_j ||z_{G_j}||_p (separable over the groups)."""
    out = np.empty_like(z)
    for g in groups:
        idx = list(g)
        out[idx] = prox_lp(z[idx], mu, p)
    return out


def _prox_sq_l1(z: np.ndarray, sigma: float) -> np.ndarray:
    """argmin 0.5||w - z||^2 + sigma (sum w)^2 over w (z >= 0), exactly.

    w = (z - 2 sigma T)_+ with T = sum w; scanning the sorted breakpoints
    finds the active set in closed form.
    """
    zs = np.sort(z)[::-1]
    if zs[0] <= 0.0:
        return np.zeros_like(z)
    css = np.cumsum(zs)
    k = np.arange(1, z.size + 1)
    t_candidates = css / (1.0 + 2.0 * sigma * k)
    thr = 2.0 * sigma * t_candidates
    below = np.append(zs[1:], 0.0)
    valid = (zs > thr) & (below <= thr)
    idx = int(np.flatnonzero(valid)[0])
    return np.maximum(z - thr[idx], 0.0)


def _prox_sq_linf(z: np.ndarray, sigma: float) -> np.ndarray:
    """argmin 0.5||w - z||^2 + sigma (max w)^2 over w (z >= 0), exactly.

    Water-filling: w = min(z, t) with sum (z - t)_+ = 2 sigma t.
    """
    zs = np.sort(z)[::-1]
    if zs[0] <= 0.0:
        return np.zeros_like(z)
    css = np.cumsum(zs)
    k = np.arange(1, z.size + 1)
    t_candidates = css / (k + 2.0 * sigma)
    below = np.append(zs[1:], 0.0)
    valid = (zs > t_candidates) & (below <= t_candidates)
    idx = int(np.flatnonzero(valid)[0])
    return np.minimum(z, t_candidates[idx])


def prox_sq_elastic_net(z: np.ndarray, sigma: float, tau: float) -> np.ndarray:
    """prox of sigma*(tau l1 + (1-tau) l2)^2 on z >= 0.

    Same scalar fixed point as ``prox_sq`` but with the inner norm values
    evaluated from sorted prefix sums, so each bisection step is O(log M).
    """
    if sigma <= 0.0:
        return z.copy()
    zs = np.sort(z)
    css1 = np.cumsum(zs[::-1])
    css2 = np.cumsum(zs[::-1] ** 2)
    total = float(tau * css1[-1] + (1.0 - tau) * math.sqrt(css2[-1]))
    if total == 0.0:
        return np.zeros_like(z)

    def psi_of_prox(mu: float) -> float:
        c1 = mu * tau
        k = z.size - int(np.searchsorted(zs, c1, side="right"))
        if k == 0:
            return 0.0
        s1 = float(css1[k - 1]) - k * c1
        s2 = math.sqrt(max(float(css2[k - 1]) - 2.0 * c1 * float(css1[k - 1]) + k * c1 * c1, 0.0))
        factor = max(1.0 - mu * (1.0 - tau) / s2, 0.0) if s2 > 0 else 0.0
        return factor * (tau * s1 + (1.0 - tau) * s2)

    lo, hi = 0.0, total
    for _ in range(80):
        t = 0.5 * (lo + hi)
        if psi_of_prox(2.0 * sigma * t) >= t:
            lo = t
        else:
            hi = t
    return prox_elastic_net(z, sigma * (lo + hi), tau)


def _prox_sq_lp_high(z: np.ndarray, sigma: float, p: float) -> np.ndarray:
    """prox of sigma*||.||_p^2 for finite p > 2 on z >= 0.

    Stationarity reads w + 2 sigma t^(2-p) w^(p-1) = z with t = ||w||_p;
    for fixed t the coordinate equations are convex and Newton-solvable,
    and the fixed point in t is found by bisection on [0, ||z||_p].
    """
    scale = float(np.max(z))
    if scale <= 0.0:
        return np.zeros_like(z)
    z = z / scale
    lo, hi = 0.0, float(np.linalg.norm(z, ord=p))
    for _ in range(70):
        t = 0.5 * (lo + hi)
        c = 2.0 * sigma * t ** (2.0 - p)
        w = _coordinate_roots(z, c / p, p)
        if float(np.linalg.norm(w, ord=p)) >= t:
            lo = t
        else:
            hi = t
    t = 0.5 * (lo + hi)
    return _coordinate_roots(z, 2.0 * sigma * t ** (2.0 - p) / p, p) * scale


def prox_sq_lp(z: np.ndarray, sigma: float, p: float) -> np.ndarray:
    """prox of sigma*||.||_p^2 on z >= 0; exact for p in {1, 2, inf}."""
    if sigma <= 0.0:
        return z.copy()
    if p == 1.0:
        return _prox_sq_l1(z, sigma)
    if p == 2.0:
        return z / (1.0 + 2.0 * sigma)
    if math.isinf(p):
        return _prox_sq_linf(z, sigma)
    if p > 2.0:
        return _prox_sq_lp_high(z, sigma, p)
    # 1 < p < 2 via Moreau: the conjugate of sigma*||.||_p^2 is the
    # squared dual norm (1/(4 sigma))*||.||_q^2 with q = p/(p-1) > 2
    q = p / (p - 1.0)
    return z - _prox_sq_lp_high(z, 1.0 / (4.0 * sigma), q)


def prox_sq(
    z: np.ndarray,
    sigma: float,
    norm_value: Callable[[np.ndarray], float],
    norm_prox: Callable[[np.ndarray, float], np.ndarray],
) -> np.ndarray:
    """prox of sigma * psi(.)^2 on z >= 0 via the scalar fixed point.

    The minimizer satisfies w = prox_{2*sigma*t*psi}(z) with t = psi(w);
    psi(prox_{2*sigma*t*psi}(z)) is nonincreasing in t, so the fixed point
    is bracketed by [0, psi(z)] and bisection closes in on it.
    """
    if sigma <= 0.0:
        return z.copy()
    psi_z = norm_value(z)
    if psi_z == 0.0:
        return np.zeros_like(z)
    lo, hi = 0.0, float(psi_z)
    for _ in range(80):
        t = 0.5 * (lo + hi)
        if norm_value(norm_prox(z, 2.0 * sigma * t)) >= t:
            lo = t
        else:
            hi = t
    return norm_prox(z, sigma * (lo + hi))
