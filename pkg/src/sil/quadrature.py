"""Gaussian-expectation helpers.

Two routes are provided.  Tensor Gauss-Hermite handles smooth integrands
(quadratic and smooth-truncated activations).  For the hard truncation a
Gauss-Hermite rule stalls near 1e-3 accuracy because of the indicator
discontinuities, so expectations over the 2-plane are computed by taking the
inner (conditional) integral in closed form via truncated-Gaussian moments
and integrating the outer variable adaptively with the breakpoints declared
to the integrator.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb, sqrt

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr

SQRT2 = sqrt(2.0)
INV_SQRT_2PI = 1.0 / sqrt(2.0 * np.pi)

QUAD_OPTS = {"epsabs": 1e-11, "epsrel": 1e-9, "limit": 200}


@lru_cache(maxsize=64)
def gh_rule(order: int):
    """Nodes/weights such that E[f(Z)] ~= sum w_i f(x_i) for Z ~ N(0,1).

    scipy's Golub-Welsch/asymptotic routine stays stable at high orders where
    numpy's hermgauss overflows.
    """
    from scipy.special import roots_hermite

    x, w = roots_hermite(order)
    return x * SQRT2, w / sqrt(np.pi)


def gh_expect_1d(f, order: int) -> float:
    x, w = gh_rule(order)
    return float(w @ np.asarray(f(x), dtype=float))


def gh_expect_2d(f, order: int) -> float:
    """E[f(V, W)] for independent standard Gaussians V, W."""
    x, w = gh_rule(order)
    V, W = np.meshgrid(x, x, indexing="ij")
    WT = np.outer(w, w)
    return float(np.sum(WT * f(V, W)))


def _npdf(t):
    return INV_SQRT_2PI * np.exp(-0.5 * np.asarray(t, dtype=float) ** 2)


def truncated_moments(m, s: float, a: float, kmax: int = 4) -> np.ndarray:
    """E[Z^k 1{|Z| <= a}] for Z ~ N(m, s^2), k = 0..kmax, vectorized in m.

    Uses the standard recursion for moments of the standard normal restricted
    to [alpha, beta]: J_k = (k-1) J_{k-2} + alpha^{k-1} pdf(alpha)
    - beta^{k-1} pdf(beta).
    """
    m = np.asarray(m, dtype=float)
    if s == 0.0:
        ind = (np.abs(m) <= a).astype(float)
        return np.stack([ind * m**k for k in range(kmax + 1)])
    alpha = (-a - m) / s
    beta = (a - m) / s
    pa, pb = _npdf(alpha), _npdf(beta)
    J = [ndtr(beta) - ndtr(alpha), pa - pb]
    for k in range(2, kmax + 1):
        J.append((k - 1) * J[k - 2] + alpha ** (k - 1) * pa - beta ** (k - 1) * pb)
    out = []
    for k in range(kmax + 1):
        acc = np.zeros_like(m)
        for j in range(k + 1):
            acc = acc + comb(k, j) * m ** (k - j) * s**j * J[j]
        out.append(acc)
    return np.stack(out)


def split_gaussian_quad(g, breakpoints) -> float:
    """Integrate g(v) * pdf(v) over the real line, splitting at breakpoints."""
    pts = sorted({float(b) for b in breakpoints if np.isfinite(b)})
    edges = [-np.inf] + pts + [np.inf]

    def integrand(v):
        return g(v) * INV_SQRT_2PI * np.exp(-0.5 * v * v)

    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo <= 0.0:
            continue
        val, _ = quad(integrand, lo, hi, **QUAD_OPTS)
        total += val
    return total


def plane_basis(theta: np.ndarray, theta_star: np.ndarray):
    """Orthonormal basis (e1 = theta_star, e2) of span{theta, theta_star}.

    Returns (rbar, rho, sin_phi, e1, e2) with theta = rbar (rho e1 + sin e2).
    For collinear inputs sin_phi is 0 and e2 is None.
    """
    rbar = float(np.linalg.norm(theta))
    e1 = theta_star
    rho = float(theta @ e1) / rbar
    rho = min(1.0, max(-1.0, rho))
    resid = theta / rbar - rho * e1
    rnorm = float(np.linalg.norm(resid))
    if rnorm < 1e-13:
        return rbar, rho, 0.0, e1, None
    return rbar, rho, rnorm, e1, resid / rnorm
